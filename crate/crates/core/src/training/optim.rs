//! AdamW with decoupled weight decay.

use super::TrainingError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// First and second moments, flat-indexed like the parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        OptimizerState { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

/// One update in place:
///
/// ```text
/// m ← β₁m + (1−β₁)g        v ← β₂v + (1−β₂)g²
/// θ ← θ − lr·m̂/(√v̂ + ε) − lr·wd·θ     (decay only where decay[i])
/// ```
pub fn adamw_update(
    theta: &mut [f64],
    grad: &[f64],
    decay: &[bool],
    state: &mut OptimizerState,
    hp: &AdamW,
) -> Result<(), TrainingError> {
    let n = theta.len();
    if grad.len() != n || decay.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(TrainingError::InvalidConfig(format!(
            "optimizer shapes disagree: params {n}, grads {}, decay {}, moments {}",
            grad.len(),
            decay.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    let mut next = theta.to_vec();
    for i in 0..n {
        let g = grad[i];
        let m = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        let v = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let mut x = theta[i] - hp.lr * (m / c1) / ((v / c2).sqrt() + hp.epsilon);
        if decay[i] {
            x -= hp.lr * hp.weight_decay * theta[i];
        }
        if !x.is_finite() {
            return Err(TrainingError::NonFiniteUpdate { index: i });
        }
        next[i] = x;
    }
    theta.copy_from_slice(&next);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(lr: f64, wd: f64) -> AdamW {
        AdamW { lr, weight_decay: wd, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    #[test]
    fn first_step_closed_form() {
        let mut theta = [1.0];
        let mut st = OptimizerState::new(1);
        adamw_update(&mut theta, &[1.0], &[true], &mut st, &hp(0.01, 0.01)).unwrap();
        let expected = 1.0 - 0.01 / (1.0 + 1e-8) - 0.0001;
        assert!((theta[0] - expected).abs() < 1e-15);
        assert!((theta[0] - 0.98990).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_only_decays_marked_entries() {
        let mut theta = [2.0, 2.0];
        let mut st = OptimizerState::new(2);
        for _ in 0..3 {
            adamw_update(&mut theta, &[0.0, 0.0], &[true, false], &mut st, &hp(0.1, 0.5)).unwrap();
        }
        assert!((theta[0] - 2.0 * 0.95f64.powi(3)).abs() < 1e-15);
        assert_eq!(theta[1], 2.0);
    }
}
