//! Adam with bias correction. State lives outside the tape so one optimizer
//! instance survives across training steps.

use super::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let sizes: Vec<usize> = params.into_iter().map(Tensor::numel).collect();
        AdamState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One update in place. `params`, `grads`, and `state` must line up
/// elementwise; panics otherwise. Parameters are borrowed individually so
/// tensors living in different model structs can share one optimizer.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &AdamConfig,
) {
    assert_eq!(params.len(), grads.len(), "params/grads length mismatch");
    assert_eq!(params.len(), state.m.len(), "optimizer state built for a different parameter set");
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        assert_eq!(p.shape(), g.shape(), "gradient shape mismatch at parameter {i}");
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, (pj, gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *pj -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(params: &mut [Tensor]) -> Vec<&mut Tensor> {
        params.iter_mut().collect()
    }

    #[test]
    fn single_step_matches_hand_calculation() {
        // g = 1: m_hat = 1, v_hat = 1, delta = -lr / (1 + eps)
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        let mut params = vec![Tensor::scalar(2.0)];
        let grads = vec![Tensor::scalar(1.0)];
        let mut state = AdamState::new(&params);
        adam_step(&mut refs(&mut params), &grads, &mut state, &cfg);
        let expected = 2.0 - 0.1 / (1.0 + 1e-8);
        assert!((params[0].item() - expected).abs() < 1e-15);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let cfg = AdamConfig::default();
        let mut params = vec![Tensor::row(vec![1.0, -2.0, 3.0])];
        let grads = vec![Tensor::zeros(vec![1, 3])];
        let mut state = AdamState::new(&params);
        for _ in 0..5 {
            adam_step(&mut refs(&mut params), &grads, &mut state, &cfg);
        }
        assert_eq!(params[0].data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn identical_tensors_stay_identical() {
        // Same start, same grads, shared state array -> same trajectory.
        let cfg = AdamConfig::default();
        let mut params = vec![Tensor::scalar(0.5), Tensor::scalar(0.5)];
        let mut state = AdamState::new(&params);
        for k in 0..10 {
            let g = 0.3 * (k as f64 + 1.0);
            let grads = vec![Tensor::scalar(g), Tensor::scalar(g)];
            adam_step(&mut refs(&mut params), &grads, &mut state, &cfg);
        }
        assert_eq!(params[0].item(), params[1].item());
    }

    #[test]
    fn descends_a_quadratic() {
        // f(x) = (x - 3)^2 from x = 0 should approach 3.
        let cfg = AdamConfig { lr: 0.05, ..AdamConfig::default() };
        let mut params = vec![Tensor::scalar(0.0)];
        let mut state = AdamState::new(&params);
        for _ in 0..2000 {
            let x = params[0].item();
            let grads = vec![Tensor::scalar(2.0 * (x - 3.0))];
            adam_step(&mut refs(&mut params), &grads, &mut state, &cfg);
        }
        assert!((params[0].item() - 3.0).abs() < 1e-3);
    }

    #[test]
    #[should_panic(expected = "length mismatch")]
    fn mismatched_grads_panic() {
        let cfg = AdamConfig::default();
        let mut params = vec![Tensor::scalar(0.0)];
        let mut state = AdamState::new(&params);
        adam_step(&mut refs(&mut params), &[], &mut state, &cfg);
    }
}
