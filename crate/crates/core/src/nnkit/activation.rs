use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Logistic function kept strictly inside (0, 1) in the working precision.
pub fn sigmoid<T: Real>(x: T) -> T {
    let s = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    let eps = T::epsilon() / T::lit(2.0);
    s.max(eps).min(T::one() - eps)
}

pub fn activation<T: Real>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    match kind {
        Activation::Relu => input.map(|v| v.max(T::zero())),
        Activation::Sigmoid => input.map(sigmoid),
    }
}

/// Backward pass expressed through the forward *output*.
pub fn activation_backward<T: Real>(output: &Tensor<T>, grad_out: &Tensor<T>, kind: Activation) -> Result<Tensor<T>> {
    if output.shape() != grad_out.shape() {
        return Err(Error::dim(format!(
            "activation backward: {:?} vs {:?}",
            output.shape(),
            grad_out.shape()
        )));
    }
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| match kind {
            Activation::Relu => {
                if y > T::zero() {
                    g
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => g * y * (T::one() - y),
        })
        .collect();
    Tensor::from_vec(output.shape(), data)
}
