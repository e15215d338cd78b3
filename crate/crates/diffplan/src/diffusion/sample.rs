//! Ancestral reverse-process sampling with classifier-free guidance and an
//! optional per-step correction hook. All chains advance in lockstep as one
//! batched forward pass; each chain draws noise from its own substream, so
//! results are independent of how many chains run together.

use nalgebra::Point3;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor};
use crate::encoder::{encode_scene, SceneEncoderParams};
use crate::kinematics::JointConfig;
use crate::rng::{stream, substream};
use crate::world::OccupiedVoxelSet;

use super::model::{cfg_combine, forward_batch, Condition, DenoiserModel, DenoiserVars, Trajectory};
use super::schedule::{reverse_mean, NoiseSchedule};
use super::{DiffusionError, HookError};

/// Per-step correction applied between the guided mean and the noise term.
/// `prev_iterate` is the trajectory entering the step, `candidate` the
/// reverse-process mean computed from it.
pub trait GuidanceHook {
    fn correct(
        &self,
        prev_iterate: &Trajectory,
        candidate: &Trajectory,
    ) -> Result<Trajectory, HookError>;
}

#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig {
    pub lambda_cfg: f64,
    pub chains: usize,
    pub seed: u64,
    /// Overwrite the first and last waypoint with the query endpoints after
    /// every step. Off by default; goal attainment is judged by tolerance.
    pub endpoint_clamp: bool,
    /// Drop the stochastic term entirely, following the literal
    /// mean-update form of the reverse process.
    pub deterministic_tail: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            lambda_cfg: 1.0,
            chains: 30,
            seed: 0,
            endpoint_clamp: false,
            deterministic_tail: false,
        }
    }
}

/// Mean Frobenius norm across chains, recorded before the first step and
/// after each of the N reverse steps.
#[derive(Debug, Clone)]
pub struct SampleTrace {
    pub mean_norm: Vec<f64>,
}

fn mean_norm(taus: &[Trajectory]) -> f64 {
    taus.iter().map(Trajectory::frobenius_norm).sum::<f64>() / taus.len() as f64
}

fn clamp_endpoints(tau: &mut Trajectory, q_start: &JointConfig, q_goal: &JointConfig) {
    tau.set_waypoint(0, q_start.angles());
    tau.set_waypoint(tau.horizon() - 1, q_goal.angles());
}

/// Draw `cfg.chains` trajectories for one (scene, start, goal) query.
pub fn sample(
    model: &DenoiserModel,
    encoder: &SceneEncoderParams,
    voxels: &OccupiedVoxelSet,
    bounds_min: Point3<f64>,
    bounds_max: Point3<f64>,
    q_start: &JointConfig,
    q_goal: &JointConfig,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    hook: Option<&dyn GuidanceHook>,
) -> Result<Vec<Trajectory>, DiffusionError> {
    sample_traced(model, encoder, voxels, bounds_min, bounds_max, q_start, q_goal, schedule, cfg, hook)
        .map(|(taus, _)| taus)
}

/// As `sample`, also returning the per-step norm trace.
#[allow(clippy::too_many_arguments)]
pub fn sample_traced(
    model: &DenoiserModel,
    encoder: &SceneEncoderParams,
    voxels: &OccupiedVoxelSet,
    bounds_min: Point3<f64>,
    bounds_max: Point3<f64>,
    q_start: &JointConfig,
    q_goal: &JointConfig,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    hook: Option<&dyn GuidanceHook>,
) -> Result<(Vec<Trajectory>, SampleTrace), DiffusionError> {
    let mcfg = *model.config();
    if cfg.chains == 0 {
        return Err(DiffusionError::BadHyper("sampler needs at least one chain".into()));
    }
    if !(cfg.lambda_cfg >= 0.0) {
        return Err(DiffusionError::BadHyper(format!(
            "guidance coefficient must be nonnegative, got {}",
            cfg.lambda_cfg
        )));
    }
    if q_start.len() != mcfg.dim || q_goal.len() != mcfg.dim {
        return Err(DiffusionError::ShapeMismatch {
            expected: format!("{} joints", mcfg.dim),
            got: format!("{}/{} joints", q_start.len(), q_goal.len()),
        });
    }
    if schedule.steps() != mcfg.steps {
        return Err(DiffusionError::ShapeMismatch {
            expected: format!("schedule of length {}", mcfg.steps),
            got: format!("schedule of length {}", schedule.steps()),
        });
    }
    let embedding = encode_scene(encoder, voxels, bounds_min, bounds_max);
    let cond = Condition::new(q_start.clone(), q_goal.clone(), embedding);
    cond.check_dims(&mcfg)?;

    let k = cfg.chains;
    let flat = mcfg.flat_dim();
    let mut rngs: Vec<ChaCha8Rng> =
        (0..k).map(|c| substream(cfg.seed, stream::NOISE, c as u64)).collect();
    let mut taus: Vec<Trajectory> = rngs
        .iter_mut()
        .map(|rng| Trajectory::standard_normal(mcfg.horizon, mcfg.dim, rng))
        .collect();
    if cfg.endpoint_clamp {
        for tau in &mut taus {
            clamp_endpoints(tau, q_start, q_goal);
        }
    }
    let mut trace = SampleTrace { mean_norm: Vec::with_capacity(schedule.steps() + 1) };
    trace.mean_norm.push(mean_norm(&taus));

    for t in (0..schedule.steps()).rev() {
        let mut tape = Tape::new();
        let vars = DenoiserVars::record(&mut tape, model);
        let mut rows = Vec::with_capacity(2 * k * flat);
        for tau in &taus {
            rows.extend_from_slice(tau.flat());
        }
        for tau in &taus {
            rows.extend_from_slice(tau.flat());
        }
        let tau_rows = tape.input(Tensor::matrix(2 * k, flat, rows));
        let cond_var = tape.input(Tensor::row(cond.raw_row()));
        let mut parts = vec![cond_var; k];
        parts.extend(std::iter::repeat_n(vars.null_token, k));
        let cond_rows = tape.concat_rows(&parts);
        let out = forward_batch(&mut tape, &vars, &mcfg, tau_rows, &vec![t; 2 * k], cond_rows);
        let out = tape.value(out).data();

        for c in 0..k {
            let eps = Trajectory::new(
                mcfg.horizon,
                mcfg.dim,
                cfg_combine(&out[c * flat..(c + 1) * flat], &out[(k + c) * flat..(k + c + 1) * flat], cfg.lambda_cfg),
            )?;
            let mut next = reverse_mean(&taus[c], t, &eps, schedule);
            if let Some(h) = hook {
                next = h.correct(&taus[c], &next).map_err(DiffusionError::Guidance)?;
            }
            if t > 0 && !cfg.deterministic_tail {
                let sigma = schedule.posterior_variance(t).sqrt();
                next = next.map_with_rng(&mut rngs[c], |x, z| x + sigma * z);
            }
            if cfg.endpoint_clamp {
                clamp_endpoints(&mut next, q_start, q_goal);
            }
            taus[c] = next;
        }
        trace.mean_norm.push(mean_norm(&taus));
    }
    Ok((taus, trace))
}
