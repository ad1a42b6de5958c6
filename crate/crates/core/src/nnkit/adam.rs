use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Bias-corrected Adam optimiser state for a fixed, ordered parameter list.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(param_lens: &[usize], lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        AdamState {
            lr,
            beta1,
            beta2,
            epsilon,
            step: 0,
            first: param_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            second: param_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, idx: usize) -> &[T] {
        &self.first[idx]
    }

    pub fn second_moment(&self, idx: usize) -> &[T] {
        &self.second[idx]
    }

    /// Applies one update to every `(name, tensor, trainable)` slot using the
    /// tensor's gradient buffer. Non-finite gradients abort before any
    /// parameter is touched. Frozen slots keep their values but still count
    /// towards the shared step.
    pub fn update(&mut self, params: &mut [(String, &mut Tensor<T>, bool)]) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::Config(format!(
                "optimizer tracks {} tensors, got {}",
                self.first.len(),
                params.len()
            )));
        }
        for (name, tensor, _) in params.iter() {
            if let Some(g) = tensor.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of {name}")));
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - self.beta1), T::lit(1.0 - self.beta2));
        let step_size = T::lit(self.lr / bc1);
        let bc2_sqrt = T::lit(bc2.sqrt());
        let eps = T::lit(self.epsilon);
        for (idx, (name, tensor, trainable)) in params.iter_mut().enumerate() {
            let m = &mut self.first[idx];
            let v = &mut self.second[idx];
            if m.len() != tensor.len() {
                return Err(Error::dim(format!(
                    "optimizer slot {name}: {} moments for {} values",
                    m.len(),
                    tensor.len()
                )));
            }
            let grad: Vec<T> = match tensor.grad() {
                Some(g) => g.to_vec(),
                None => vec![T::zero(); m.len()],
            };
            for ((mi, vi), &g) in m.iter_mut().zip(v.iter_mut()).zip(&grad) {
                *mi = b1 * *mi + one_b1 * g;
                *vi = b2 * *vi + one_b2 * g * g;
            }
            if !*trainable {
                continue;
            }
            for ((w, &mi), &vi) in tensor.data_mut().iter_mut().zip(m.iter()).zip(v.iter()) {
                *w = *w - step_size * mi / (vi.sqrt() / bc2_sqrt + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::from_vec(&[1], vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut w = scalar(1.5);
        w.grad_mut();
        let mut adam = AdamState::new(&[1], 0.01, 0.9, 0.999, 1e-8);
        adam.update(&mut [("w".into(), &mut w, true)]).unwrap();
        assert_eq!(w.data()[0], 1.5);
        assert_eq!(adam.step_count(), 1);

        w.grad_mut()[0] = 0.3;
        adam.update(&mut [("w".into(), &mut w, true)]).unwrap();
        let (m1, v1) = (adam.first_moment(0)[0], adam.second_moment(0)[0]);
        w.zero_grad();
        adam.update(&mut [("w".into(), &mut w, true)]).unwrap();
        assert!(adam.first_moment(0)[0].abs() < m1.abs());
        assert!(adam.second_moment(0)[0] < v1);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        for g in [3.0, -0.02, 1e3] {
            let mut w = scalar(0.0);
            w.grad_mut()[0] = g;
            let mut adam = AdamState::new(&[1], 0.001, 0.9, 0.999, 1e-8);
            adam.update(&mut [("w".into(), &mut w, true)]).unwrap();
            let delta = w.data()[0];
            assert!((delta.abs() - 0.001).abs() <= 0.001 * 1e-6, "{g}: {delta}");
            assert_eq!(delta.signum(), -g.signum());
        }
    }

    #[test]
    fn minimises_square() {
        let mut w = scalar(1.0);
        let mut adam = AdamState::new(&[1], 0.1, 0.9, 0.999, 1e-8);
        for _ in 0..100 {
            let x = w.data()[0];
            w.grad_mut()[0] = 2.0 * x;
            adam.update(&mut [("w".into(), &mut w, true)]).unwrap();
        }
        assert!(w.data()[0].abs() < 0.05, "{}", w.data()[0]);
        assert_eq!(adam.step_count(), 100);
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let mut w = scalar(1.0);
        w.grad_mut()[0] = f64::NAN;
        let mut adam = AdamState::new(&[1], 0.1, 0.9, 0.999, 1e-8);
        let err = adam
            .update(&mut [("enc0.conv1.weight".into(), &mut w, true)])
            .unwrap_err();
        assert!(err.to_string().contains("enc0.conv1.weight"));
        assert_eq!(w.data()[0], 1.0);
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn frozen_slot_unchanged() {
        let mut w = scalar(1.0);
        w.grad_mut()[0] = 1.0;
        let mut adam = AdamState::new(&[1], 0.1, 0.9, 0.999, 1e-8);
        adam.update(&mut [("w".into(), &mut w, false)]).unwrap();
        assert_eq!(w.data()[0], 1.0);
    }
}
