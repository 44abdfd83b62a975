use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self { step: 0, m: vec![T::zero(); len], v: vec![T::zero(); len] }
    }
}

/// One bias-corrected Adam update, in place. Parameters and state are left
/// untouched when the gradient is not finite.
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(contract("parameter, gradient and moment shapes differ"));
    }
    if lr < 0.0 {
        return Err(contract(format!("negative learning rate {lr}")));
    }
    if let Some(g) = grads.iter().find(|g| !g.is_finite()) {
        return Err(Error::Numerics(format!("non-finite gradient {g}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let correct1 = T::one() - b1.powi(t);
    let correct2 = T::one() - b2.powi(t);
    let (lr, eps) = (T::of(lr), T::of(cfg.eps));
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        let m_hat = state.m[i] / correct1;
        let v_hat = state.v[i] / correct2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = vec![1.0f64, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![0.0f64];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 0.1, &AdamConfig::default()).unwrap();
        // m̂ = 1, v̂ = 1 after bias correction
        assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn two_steps_follow_the_recurrence() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.5f64];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 0.01, &cfg).unwrap();
        adam_step(&mut p, &[-1.0], &mut s, 0.01, &cfg).unwrap();

        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.01);
        let (mut x, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for (t, g) in [(1, 1.0f64), (2, -1.0)] {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((p[0] - x).abs() < 1e-12);
        assert_eq!(s.step, 2);
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut p = vec![1.0f32];
        let mut s = AdamState::new(1);
        let err = adam_step(&mut p, &[f32::NAN], &mut s, 0.1, &AdamConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Numerics(_)));
        assert_eq!(s.step, 0);
        assert_eq!(p, vec![1.0]);
        assert!(adam_step(&mut p, &[1.0, 2.0], &mut s, 0.1, &AdamConfig::default()).is_err());
    }

    #[test]
    fn stays_finite_for_extreme_gradients() {
        let mut p = vec![0.0f64; 4];
        let mut s = AdamState::new(4);
        for g in [[1e300, -1e300, 1e-300, 0.0], [0.0, 0.0, 0.0, 0.0], [1e-30, 1e30, -1e-30, 5.0]] {
            adam_step(&mut p, &g, &mut s, 1.0, &AdamConfig::default()).unwrap();
            assert!(p.iter().all(|x| x.is_finite()), "{p:?}");
        }
    }
}
