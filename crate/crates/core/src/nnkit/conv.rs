use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Mat, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    Conv1x1,
    TransposedConv,
    AttentionGate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero fill so that output spatial size equals input size (odd kernels).
    Same,
    Valid,
}

/// Weights and bias of one parameterized layer.
///
/// Convolution weights are `(out, in, kh, kw)`; transposed-convolution
/// weights are `(in, out, 2, 2)`. Bias length is the output channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub kind: LayerKind,
}

impl<T: Real> LayerParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>, kind: LayerKind) -> Result<Self> {
        if weights.shape().len() != 4 {
            return Err(Error::dim(format!(
                "{kind:?} weights must be 4-D, got {:?}",
                weights.shape()
            )));
        }
        let out = match kind {
            LayerKind::TransposedConv => weights.shape()[1],
            _ => weights.shape()[0],
        };
        if bias.shape() != [out] {
            return Err(Error::dim(format!(
                "{kind:?} bias shape {:?} does not match {out} output channels",
                bias.shape()
            )));
        }
        Ok(LayerParams { weights, bias, kind })
    }

    pub fn out_channels(&self) -> usize {
        match self.kind {
            LayerKind::TransposedConv => self.weights.shape()[1],
            _ => self.weights.shape()[0],
        }
    }

    pub fn in_channels(&self) -> usize {
        match self.kind {
            LayerKind::TransposedConv => self.weights.shape()[0],
            _ => self.weights.shape()[1],
        }
    }

    pub fn zero_grad(&mut self) {
        self.weights.zero_grad();
        self.bias.zero_grad();
    }
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad_h: usize,
    pad_w: usize,
    oh: usize,
    ow: usize,
}

fn geometry<T: Real>(input: &Tensor<T>, params: &LayerParams<T>, padding: Padding) -> Result<(usize, usize, ConvGeom)> {
    let (n, c, h, w) = input.dims4()?;
    let &[k, ci, kh, kw] = params.weights.shape() else {
        unreachable!("LayerParams guarantees rank 4")
    };
    if ci != c {
        return Err(Error::dim(format!(
            "conv2d: input channel axis is {c} but weights expect {ci}"
        )));
    }
    let (pad_h, pad_w) = match padding {
        Padding::Same => {
            if kh % 2 == 0 || kw % 2 == 0 {
                return Err(Error::dim(format!(
                    "conv2d: same padding needs odd kernel, got {kh}x{kw}"
                )));
            }
            (kh / 2, kw / 2)
        }
        Padding::Valid => (0, 0),
    };
    if h + 2 * pad_h < kh || w + 2 * pad_w < kw {
        return Err(Error::dim(format!(
            "conv2d: spatial axes {h}x{w} smaller than kernel {kh}x{kw}"
        )));
    }
    let oh = h + 2 * pad_h - kh + 1;
    let ow = w + 2 * pad_w - kw + 1;
    Ok((
        n,
        k,
        ConvGeom {
            c,
            h,
            w,
            kh,
            kw,
            pad_h,
            pad_w,
            oh,
            ow,
        },
    ))
}

impl ConvGeom {
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.pad_h == 0 && self.pad_w == 0
    }

    fn im2col<T: Real>(&self, img: &[T], cols: &mut [T]) {
        let plane = self.oh * self.ow;
        for ch in 0..self.c {
            let src = &img[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ch * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[row * plane..(row + 1) * plane];
                    for oy in 0..self.oh {
                        let iy = (oy + ky) as isize - self.pad_h as isize;
                        let out_row = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        if iy < 0 || iy >= self.h as isize {
                            out_row.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let src_row = &src[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, v) in out_row.iter_mut().enumerate() {
                            let ix = (ox + kx) as isize - self.pad_w as isize;
                            *v = if ix < 0 || ix >= self.w as isize {
                                T::zero()
                            } else {
                                src_row[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Real>(&self, cols: &[T], img: &mut [T]) {
        let plane = self.oh * self.ow;
        for ch in 0..self.c {
            let dst = &mut img[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ch * self.kh + ky) * self.kw + kx;
                    let src = &cols[row * plane..(row + 1) * plane];
                    for oy in 0..self.oh {
                        let iy = (oy + ky) as isize - self.pad_h as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst_row = &mut dst[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..self.ow {
                            let ix = (ox + kx) as isize - self.pad_w as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst_row[ix as usize] = dst_row[ix as usize] + src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation plus bias over an NCHW batch.
pub fn conv2d<T: Real>(input: &Tensor<T>, params: &LayerParams<T>, padding: Padding) -> Result<Tensor<T>> {
    let (n, k, g) = geometry(input, params, padding)?;
    let in_plane = g.c * g.h * g.w;
    let out_plane = g.oh * g.ow;
    let patch = g.c * g.kh * g.kw;
    let mut out = vec![T::zero(); n * k * out_plane];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); patch * out_plane]
    };
    let w = params.weights.data();
    let bias = params.bias.data();
    for i in 0..n {
        let img = &input.data()[i * in_plane..(i + 1) * in_plane];
        let y = &mut out[i * k * out_plane..(i + 1) * k * out_plane];
        for (o, &b) in bias.iter().enumerate() {
            y[o * out_plane..(o + 1) * out_plane].iter_mut().for_each(|v| *v = b);
        }
        let x_cols = if g.is_pointwise() {
            img
        } else {
            g.im2col(img, &mut cols);
            &cols[..]
        };
        gemm(Mat::new(w, k, patch), Mat::new(x_cols, patch, out_plane), T::one(), y);
    }
    Tensor::from_vec(&[n, k, g.oh, g.ow], out)
}

/// Backward pass of [`conv2d`]: accumulates weight and bias gradients into
/// `params` and returns the gradient with respect to `input`.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    params: &mut LayerParams<T>,
    padding: Padding,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, k, g) = geometry(input, params, padding)?;
    if grad_out.shape() != [n, k, g.oh, g.ow] {
        return Err(Error::dim(format!(
            "conv2d backward: output gradient {:?} vs expected {:?}",
            grad_out.shape(),
            [n, k, g.oh, g.ow]
        )));
    }
    let in_plane = g.c * g.h * g.w;
    let out_plane = g.oh * g.ow;
    let patch = g.c * g.kh * g.kw;
    let mut dx = vec![T::zero(); input.len()];
    let mut cols = vec![T::zero(); if g.is_pointwise() { 0 } else { patch * out_plane }];
    let mut dcols = vec![T::zero(); patch * out_plane];
    {
        let db = params.bias.grad_mut();
        for i in 0..n {
            let dy = &grad_out.data()[i * k * out_plane..(i + 1) * k * out_plane];
            for (o, acc) in db.iter_mut().enumerate() {
                *acc = *acc + dy[o * out_plane..(o + 1) * out_plane].iter().copied().sum();
            }
        }
    }
    let (w, dw) = params.weights.value_and_grad_mut();
    for i in 0..n {
        let img = &input.data()[i * in_plane..(i + 1) * in_plane];
        let dy = &grad_out.data()[i * k * out_plane..(i + 1) * k * out_plane];
        let x_cols = if g.is_pointwise() {
            img
        } else {
            g.im2col(img, &mut cols);
            &cols[..]
        };
        gemm(
            Mat::new(dy, k, out_plane),
            Mat::t(x_cols, patch, out_plane),
            T::one(),
            dw,
        );
        let dxi = &mut dx[i * in_plane..(i + 1) * in_plane];
        if g.is_pointwise() {
            gemm(Mat::t(w, k, patch), Mat::new(dy, k, out_plane), T::zero(), dxi);
        } else {
            gemm(Mat::t(w, k, patch), Mat::new(dy, k, out_plane), T::zero(), &mut dcols);
            g.col2im(&dcols, dxi);
        }
    }
    Tensor::from_vec(input.shape(), dx)
}
