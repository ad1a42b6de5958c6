use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_SMOOTH: f64 = 1.0;

fn check<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(usize, usize)> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(format!(
            "dice loss: prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if target.data().iter().any(|&t| t != T::zero() && t != T::one()) {
        return Err(Error::input("dice loss target must be binary"));
    }
    let n = pred.shape()[0];
    Ok((n, pred.len() / n))
}

/// Soft Dice loss averaged over batch items (leading axis):
/// `1 − (2·Σ p·t + s) / (Σ p + Σ t + s)`.
pub fn dice_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, smooth: T) -> Result<T> {
    let (n, per) = check(pred, target)?;
    let mut total = T::zero();
    for i in 0..n {
        let p = &pred.data()[i * per..(i + 1) * per];
        let t = &target.data()[i * per..(i + 1) * per];
        let inter: T = p.iter().zip(t).map(|(&a, &b)| a * b).sum();
        let denom = p.iter().copied().sum::<T>() + t.iter().copied().sum::<T>() + smooth;
        total = total + T::one() - (T::lit(2.0) * inter + smooth) / denom;
    }
    Ok(total / T::lit(n as f64))
}

/// Gradient of [`dice_loss`] with respect to `pred`.
pub fn dice_loss_backward<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, smooth: T) -> Result<Tensor<T>> {
    let (n, per) = check(pred, target)?;
    let scale = T::one() / T::lit(n as f64);
    let two = T::lit(2.0);
    let mut grad = Vec::with_capacity(pred.len());
    for i in 0..n {
        let p = &pred.data()[i * per..(i + 1) * per];
        let t = &target.data()[i * per..(i + 1) * per];
        let num = two * p.iter().zip(t).map(|(&a, &b)| a * b).sum::<T>() + smooth;
        let den = p.iter().copied().sum::<T>() + t.iter().copied().sum::<T>() + smooth;
        let den2 = den * den;
        grad.extend(t.iter().map(|&tv| -scale * (two * tv * den - num) / den2));
    }
    Tensor::from_vec(pred.shape(), grad)
}
