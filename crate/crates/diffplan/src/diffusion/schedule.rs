//! Cosine noise schedule and the affine maps of the forward and reverse
//! process that are pure functions of it.

use super::model::Trajectory;
use super::DiffusionError;

const BETA_MIN: f64 = 1e-8;
const BETA_MAX: f64 = 0.999;

/// Precomputed per-step noise tables for an N-step diffusion.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    fn from_beta_table(beta: Vec<f64>) -> Self {
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(alpha.len());
        let mut prod = 1.0;
        for a in &alpha {
            prod *= a;
            alpha_bar.push(prod);
        }
        Self { beta, alpha, alpha_bar }
    }

    /// Test-only escape hatch for hand-built tables (e.g. a step with beta 0).
    #[cfg(test)]
    pub(crate) fn raw(beta: Vec<f64>) -> Self {
        Self::from_beta_table(beta)
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// Variance of the forward-process posterior q(tau_{t-1} | tau_t, tau_0),
    /// used as the reverse-step noise scale. Zero at the final step t = 0.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            (1.0 - self.alpha_bar[t - 1]) / (1.0 - self.alpha_bar[t]) * self.beta[t]
        }
    }
}

/// Build the squared-cosine schedule: abar(t) = f(t)/f(0) with
/// f(t) = cos^2(((t/N + s)/(1 + s)) * pi/2), betas clipped to (1e-8, 0.999].
pub fn cosine_schedule(n: usize, s_offset: f64) -> Result<NoiseSchedule, DiffusionError> {
    if n < 2 {
        return Err(DiffusionError::BadStepCount(n));
    }
    if !s_offset.is_finite() || s_offset <= 0.0 {
        return Err(DiffusionError::BadOffset(s_offset));
    }
    let f = |t: f64| {
        let angle = ((t / n as f64) + s_offset) / (1.0 + s_offset) * std::f64::consts::FRAC_PI_2;
        angle.cos().powi(2)
    };
    let f0 = f(0.0);
    let mut beta = Vec::with_capacity(n);
    let mut prev = 1.0;
    for t in 1..=n {
        let cur = f(t as f64) / f0;
        beta.push((1.0 - cur / prev).clamp(BETA_MIN, BETA_MAX));
        prev = cur;
    }
    Ok(NoiseSchedule::from_beta_table(beta))
}

/// Corrupt a clean trajectory to noise level t:
/// tau_t = sqrt(abar_t) * tau_0 + sqrt(1 - abar_t) * eps.
pub fn forward_diffuse(
    tau0: &Trajectory,
    t: usize,
    eps: &Trajectory,
    schedule: &NoiseSchedule,
) -> Result<Trajectory, DiffusionError> {
    if t >= schedule.steps() {
        return Err(DiffusionError::StepOutOfRange { t, n: schedule.steps() });
    }
    if tau0.horizon() != eps.horizon() || tau0.dim() != eps.dim() {
        return Err(DiffusionError::ShapeMismatch {
            expected: format!("{}x{}", tau0.horizon(), tau0.dim()),
            got: format!("{}x{}", eps.horizon(), eps.dim()),
        });
    }
    let ab = schedule.alpha_bar(t);
    let (c_signal, c_noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(tau0.zip_with(eps, |x, e| c_signal * x + c_noise * e))
}

/// Mean of the reverse step:
/// mu = (1/sqrt(alpha_t)) * (tau_t - ((1 - alpha_t)/sqrt(1 - abar_t)) * eps).
pub fn reverse_mean(
    tau_t: &Trajectory,
    t: usize,
    eps_guided: &Trajectory,
    schedule: &NoiseSchedule,
) -> Trajectory {
    assert!(t < schedule.steps(), "step {t} outside schedule");
    let alpha = schedule.alpha(t);
    let ab = schedule.alpha_bar(t);
    let inv_sqrt_alpha = 1.0 / alpha.sqrt();
    let eps_coeff = (1.0 - alpha) / (1.0 - ab).sqrt();
    tau_t.zip_with(eps_guided, |x, e| inv_sqrt_alpha * (x - eps_coeff * e))
}
