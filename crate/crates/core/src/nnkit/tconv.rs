use super::conv::{LayerKind, LayerParams};
use super::tensor::{gemm, Mat, Real, Tensor};
use crate::error::{Error, Result};

fn check<T: Real>(input: &Tensor<T>, params: &LayerParams<T>) -> Result<(usize, usize, usize, usize, usize)> {
    if params.kind != LayerKind::TransposedConv {
        return Err(Error::Config(format!(
            "transposed_conv2 given {:?} parameters",
            params.kind
        )));
    }
    let &[ci, co, kh, kw] = params.weights.shape() else {
        unreachable!("LayerParams guarantees rank 4")
    };
    if (kh, kw) != (2, 2) {
        return Err(Error::Config(format!(
            "transposed_conv2 requires a 2x2 kernel, got {kh}x{kw}"
        )));
    }
    let (n, c, h, w) = input.dims4()?;
    if c != ci {
        return Err(Error::dim(format!(
            "transposed_conv2: input channel axis is {c} but weights expect {ci}"
        )));
    }
    Ok((n, c, co, h, w))
}

/// Stride-2, 2×2 transposed convolution; doubles both spatial axes.
///
/// `out[o, 2i+a, 2j+b] = bias[o] + Σ_c in[c, i, j] · w[c, o, a, b]`.
pub fn transposed_conv2<T: Real>(input: &Tensor<T>, params: &LayerParams<T>) -> Result<Tensor<T>> {
    let (n, ci, co, h, w) = check(input, params)?;
    let plane = h * w;
    let (oh, ow) = (2 * h, 2 * w);
    let taps = co * 4;
    let mut z = vec![T::zero(); taps * plane];
    let mut out = vec![T::zero(); n * co * oh * ow];
    let wt = params.weights.data();
    let bias = params.bias.data();
    for i in 0..n {
        let x = &input.data()[i * ci * plane..(i + 1) * ci * plane];
        // z[(o,a,b), (y,x)] = Σ_c w[c,(o,a,b)] · x[c,(y,x)]
        gemm(Mat::t(wt, ci, taps), Mat::new(x, ci, plane), T::zero(), &mut z);
        let y = &mut out[i * co * oh * ow..(i + 1) * co * oh * ow];
        for o in 0..co {
            for a in 0..2 {
                for b in 0..2 {
                    let row = &z[((o * 2 + a) * 2 + b) * plane..][..plane];
                    for yy in 0..h {
                        for xx in 0..w {
                            y[o * oh * ow + (2 * yy + a) * ow + 2 * xx + b] = row[yy * w + xx] + bias[o];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n, co, oh, ow], out)
}

pub fn transposed_conv2_backward<T: Real>(
    input: &Tensor<T>,
    params: &mut LayerParams<T>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, ci, co, h, w) = check(input, params)?;
    let (oh, ow) = (2 * h, 2 * w);
    if grad_out.shape() != [n, co, oh, ow] {
        return Err(Error::dim(format!(
            "transposed_conv2 backward: output gradient {:?} vs expected {:?}",
            grad_out.shape(),
            [n, co, oh, ow]
        )));
    }
    let plane = h * w;
    let taps = co * 4;
    let mut dz = vec![T::zero(); taps * plane];
    let mut dx = vec![T::zero(); input.len()];
    {
        let db = params.bias.grad_mut();
        for i in 0..n {
            for (o, acc) in db.iter_mut().enumerate() {
                let s: T = grad_out.data()[(i * co + o) * oh * ow..][..oh * ow]
                    .iter()
                    .copied()
                    .sum();
                *acc = *acc + s;
            }
        }
    }
    let (wt, dw) = params.weights.value_and_grad_mut();
    for i in 0..n {
        let dy = &grad_out.data()[i * co * oh * ow..(i + 1) * co * oh * ow];
        for o in 0..co {
            for a in 0..2 {
                for b in 0..2 {
                    let row = &mut dz[((o * 2 + a) * 2 + b) * plane..][..plane];
                    for yy in 0..h {
                        for xx in 0..w {
                            row[yy * w + xx] = dy[o * oh * ow + (2 * yy + a) * ow + 2 * xx + b];
                        }
                    }
                }
            }
        }
        let x = &input.data()[i * ci * plane..(i + 1) * ci * plane];
        // dw[c, t] += Σ_p x[c, p] · dz[t, p]
        gemm(Mat::new(x, ci, plane), Mat::t(&dz, taps, plane), T::one(), dw);
        // dx[c, p] = Σ_t w[c, t] · dz[t, p]
        gemm(
            Mat::new(wt, ci, taps),
            Mat::new(&dz, taps, plane),
            T::zero(),
            &mut dx[i * ci * plane..(i + 1) * ci * plane],
        );
    }
    Tensor::from_vec(input.shape(), dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_fills_block() {
        let x = Tensor::from_vec(&[1, 1, 1, 1], vec![2.5f64]).unwrap();
        let p = LayerParams::new(
            Tensor::full(&[1, 1, 2, 2], 1.0),
            Tensor::zeros(&[1]),
            LayerKind::TransposedConv,
        )
        .unwrap();
        let y = transposed_conv2(&x, &p).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[2.5; 4]);
    }

    #[test]
    fn rejects_wrong_kernel() {
        let x = Tensor::<f64>::zeros(&[1, 1, 2, 2]);
        let p = LayerParams::new(
            Tensor::zeros(&[1, 1, 3, 3]),
            Tensor::zeros(&[1]),
            LayerKind::TransposedConv,
        )
        .unwrap();
        assert!(matches!(transposed_conv2(&x, &p), Err(Error::Config(_))));
    }
}
