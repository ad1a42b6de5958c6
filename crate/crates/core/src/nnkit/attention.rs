use super::activation::sigmoid;
use super::init::xavier_init;
use super::tensor::{gemm, Mat, Real, Tensor};
use crate::error::{Error, Result};

/// Additive attention gate on a skip connection.
///
/// `a = relu(Wx·skip + Wg·gate + b)`, `ψ = sigmoid(wψ·a + bψ)`, output is
/// `skip ⊙ ψ` with one coefficient per pixel. All products are 1×1 channel
/// mixes; `wx` is `(inter, C)`, `wg` is `(inter, Cg)`, `wpsi` is `(1, inter)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    pub wx: Tensor<T>,
    pub wg: Tensor<T>,
    pub bias: Tensor<T>,
    pub wpsi: Tensor<T>,
    pub bpsi: Tensor<T>,
}

impl<T: Real> AttentionParams<T> {
    /// Xavier-initialised gate with `ceil(C/2)` intermediate channels.
    pub fn init(skip_channels: usize, gate_channels: usize, seed: u64) -> Self {
        let inter = skip_channels.div_ceil(2);
        AttentionParams {
            wx: xavier_init(&[inter, skip_channels, 1, 1], seed),
            wg: xavier_init(&[inter, gate_channels, 1, 1], seed.wrapping_add(1)),
            bias: Tensor::zeros(&[inter]),
            wpsi: xavier_init(&[1, inter, 1, 1], seed.wrapping_add(2)),
            bpsi: Tensor::zeros(&[1]),
        }
    }

    pub fn inter_channels(&self) -> usize {
        self.wx.shape()[0]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor<T>); 5] {
        [
            ("wx", &mut self.wx),
            ("wg", &mut self.wg),
            ("bias", &mut self.bias),
            ("wpsi", &mut self.wpsi),
            ("bpsi", &mut self.bpsi),
        ]
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor<T>); 5] {
        [
            ("wx", &self.wx),
            ("wg", &self.wg),
            ("bias", &self.bias),
            ("wpsi", &self.wpsi),
            ("bpsi", &self.bpsi),
        ]
    }
}

/// Forward result; `psi` is `(N, 1, H, W)`.
#[derive(Debug, Clone)]
pub struct GateOutput<T> {
    pub output: Tensor<T>,
    pub psi: Tensor<T>,
    hidden: Vec<T>,
}

fn check<T: Real>(
    skip: &Tensor<T>,
    gate: &Tensor<T>,
    p: &AttentionParams<T>,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (n, c, h, w) = skip.dims4()?;
    let (ng, cg, hg, wg) = gate.dims4()?;
    if (n, h, w) != (ng, hg, wg) {
        return Err(Error::dim(format!(
            "attention gate: skip {:?} and gate {:?} are not spatially aligned",
            skip.shape(),
            gate.shape()
        )));
    }
    let inter = p.inter_channels();
    if p.wx.len() != inter * c || p.wg.len() != inter * cg {
        return Err(Error::dim(format!(
            "attention gate: weights {:?}/{:?} do not fit skip channels {c}, gate channels {cg}",
            p.wx.shape(),
            p.wg.shape()
        )));
    }
    Ok((n, c, cg, h * w, inter))
}

pub fn attention_gate<T: Real>(skip: &Tensor<T>, gate: &Tensor<T>, p: &AttentionParams<T>) -> Result<GateOutput<T>> {
    let (n, c, cg, hw, inter) = check(skip, gate, p)?;
    let mut hidden = vec![T::zero(); n * inter * hw];
    let mut psi = vec![T::zero(); n * hw];
    let mut out = vec![T::zero(); skip.len()];
    for i in 0..n {
        let x = &skip.data()[i * c * hw..(i + 1) * c * hw];
        let g = &gate.data()[i * cg * hw..(i + 1) * cg * hw];
        let s = &mut hidden[i * inter * hw..(i + 1) * inter * hw];
        for (ch, &b) in p.bias.data().iter().enumerate() {
            s[ch * hw..(ch + 1) * hw].iter_mut().for_each(|v| *v = b);
        }
        gemm(Mat::new(p.wx.data(), inter, c), Mat::new(x, c, hw), T::one(), s);
        gemm(Mat::new(p.wg.data(), inter, cg), Mat::new(g, cg, hw), T::one(), s);
        s.iter_mut().for_each(|v| *v = v.max(T::zero()));
        let z = &mut psi[i * hw..(i + 1) * hw];
        z.iter_mut().for_each(|v| *v = p.bpsi.data()[0]);
        gemm(Mat::new(p.wpsi.data(), 1, inter), Mat::new(s, inter, hw), T::one(), z);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));
        let o = &mut out[i * c * hw..(i + 1) * c * hw];
        for ch in 0..c {
            for px in 0..hw {
                o[ch * hw + px] = x[ch * hw + px] * z[px];
            }
        }
    }
    let (_, _, h, w) = skip.dims4()?;
    Ok(GateOutput {
        output: Tensor::from_vec(skip.shape(), out)?,
        psi: Tensor::from_vec(&[n, 1, h, w], psi)?,
        hidden,
    })
}

/// Accumulates gradients for all five parameter groups; returns
/// `(d skip, d gate)`.
pub fn attention_gate_backward<T: Real>(
    skip: &Tensor<T>,
    gate: &Tensor<T>,
    fwd: &GateOutput<T>,
    grad_out: &Tensor<T>,
    p: &mut AttentionParams<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c, cg, hw, inter) = check(skip, gate, p)?;
    if grad_out.shape() != skip.shape() {
        return Err(Error::dim(format!(
            "attention gate backward: gradient {:?} vs skip {:?}",
            grad_out.shape(),
            skip.shape()
        )));
    }
    let mut dskip = vec![T::zero(); skip.len()];
    let mut dgate = vec![T::zero(); gate.len()];
    let mut dz = vec![T::zero(); hw];
    let mut ds = vec![T::zero(); inter * hw];
    for i in 0..n {
        let x = &skip.data()[i * c * hw..(i + 1) * c * hw];
        let g = &gate.data()[i * cg * hw..(i + 1) * cg * hw];
        let a = &fwd.hidden[i * inter * hw..(i + 1) * inter * hw];
        let psi = &fwd.psi.data()[i * hw..(i + 1) * hw];
        let dy = &grad_out.data()[i * c * hw..(i + 1) * c * hw];
        let dx = &mut dskip[i * c * hw..(i + 1) * c * hw];
        dz.iter_mut().for_each(|v| *v = T::zero());
        for ch in 0..c {
            for px in 0..hw {
                let k = ch * hw + px;
                dx[k] = dy[k] * psi[px];
                dz[px] = dz[px] + dy[k] * x[k];
            }
        }
        for (d, &s) in dz.iter_mut().zip(psi) {
            *d = *d * s * (T::one() - s);
        }
        {
            let db = p.bpsi.grad_mut();
            db[0] = db[0] + dz.iter().copied().sum();
        }
        gemm(Mat::new(&dz, 1, hw), Mat::t(a, inter, hw), T::one(), p.wpsi.grad_mut());
        gemm(
            Mat::t(p.wpsi.data(), 1, inter),
            Mat::new(&dz, 1, hw),
            T::zero(),
            &mut ds,
        );
        for (d, &av) in ds.iter_mut().zip(a) {
            if av <= T::zero() {
                *d = T::zero();
            }
        }
        {
            let db = p.bias.grad_mut();
            for (ch, acc) in db.iter_mut().enumerate() {
                *acc = *acc + ds[ch * hw..(ch + 1) * hw].iter().copied().sum();
            }
        }
        gemm(Mat::new(&ds, inter, hw), Mat::t(x, c, hw), T::one(), p.wx.grad_mut());
        gemm(Mat::new(&ds, inter, hw), Mat::t(g, cg, hw), T::one(), p.wg.grad_mut());
        gemm(Mat::t(p.wx.data(), inter, c), Mat::new(&ds, inter, hw), T::one(), dx);
        gemm(
            Mat::t(p.wg.data(), inter, cg),
            Mat::new(&ds, inter, hw),
            T::zero(),
            &mut dgate[i * cg * hw..(i + 1) * cg * hw],
        );
    }
    Ok((
        Tensor::from_vec(skip.shape(), dskip)?,
        Tensor::from_vec(gate.shape(), dgate)?,
    ))
}
