use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Flat input index of each pooled maximum, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// 2×2 max pooling with stride 2.
///
/// Ties resolve to the first maximal element in row-major window order.
pub fn max_pool2<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let (n, c, h, w) = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim(format!("max_pool2 needs even spatial axes, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::from_vec(&[n, c, oh, ow], out)?,
        PoolIndices {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn max_pool2_backward<T: Real>(indices: &PoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.len() != indices.argmax.len() {
        return Err(Error::dim(format!(
            "max_pool2 backward: {} gradients for {} pooled cells",
            grad_out.len(),
            indices.argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(&indices.input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in indices.argmax.iter().zip(grad_out.data()) {
        d[idx] = d[idx] + g;
    }
    Ok(dx)
}
