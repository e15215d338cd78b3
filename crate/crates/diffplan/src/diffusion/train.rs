//! Joint training of the denoiser and the scene encoder with
//! classifier-free condition dropout.

use nalgebra::Point3;
use rand::Rng;

use crate::autodiff::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use crate::encoder::{encode_on_tape, normalize_coords, EncoderVars, SceneEncoderParams};
use crate::kinematics::JointConfig;
use crate::rng::{stream, substream};
use crate::world::OccupiedVoxelSet;

use super::model::{forward_batch, DenoiserModel, DenoiserVars, Trajectory};
use super::schedule::{forward_diffuse, NoiseSchedule};
use super::DiffusionError;

/// One expert demonstration: endpoints plus the resampled trajectory.
#[derive(Debug, Clone)]
pub struct TrainDemo {
    pub q_start: JointConfig,
    pub q_goal: JointConfig,
    pub trajectory: Trajectory,
}

/// All demonstrations that share one perceived scene.
#[derive(Debug, Clone)]
pub struct TrainScene {
    pub voxels: OccupiedVoxelSet,
    pub bounds_min: Point3<f64>,
    pub bounds_max: Point3<f64>,
    pub demos: Vec<TrainDemo>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub scenes: Vec<TrainScene>,
}

impl TrainingSet {
    pub fn demo_count(&self) -> usize {
        self.scenes.iter().map(|s| s.demos.len()).sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub steps: usize,
    pub p_drop: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-3, batch: 32, steps: 8000, p_drop: 0.1, seed: 0 }
    }
}

/// Per-step losses, in step order.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}

fn validate(
    model: &DenoiserModel,
    encoder: &SceneEncoderParams,
    data: &TrainingSet,
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<(), DiffusionError> {
    if schedule.steps() != model.config().steps {
        return Err(DiffusionError::ShapeMismatch {
            expected: format!("schedule of length {}", model.config().steps),
            got: format!("schedule of length {}", schedule.steps()),
        });
    }
    if data.demo_count() == 0 {
        return Err(DiffusionError::EmptyDataset);
    }
    if !(cfg.p_drop >= 0.0 && cfg.p_drop < 1.0) {
        return Err(DiffusionError::BadHyper(format!(
            "condition dropout must lie in [0,1), got {}",
            cfg.p_drop
        )));
    }
    if cfg.batch == 0 || cfg.steps == 0 || !(cfg.lr > 0.0) {
        return Err(DiffusionError::BadHyper(format!(
            "batch {}, steps {}, lr {} must all be positive",
            cfg.batch, cfg.steps, cfg.lr
        )));
    }
    let mcfg = model.config();
    if encoder.embed_dim() != mcfg.embed_dim {
        return Err(DiffusionError::ShapeMismatch {
            expected: format!("scene embedding dim {}", mcfg.embed_dim),
            got: format!("encoder embedding dim {}", encoder.embed_dim()),
        });
    }
    for scene in &data.scenes {
        for demo in &scene.demos {
            if demo.trajectory.horizon() != mcfg.horizon
                || demo.trajectory.dim() != mcfg.dim
                || demo.q_start.len() != mcfg.dim
                || demo.q_goal.len() != mcfg.dim
            {
                return Err(DiffusionError::ShapeMismatch {
                    expected: format!("{}x{} demos", mcfg.horizon, mcfg.dim),
                    got: format!(
                        "{}x{} trajectory with {}/{} endpoint joints",
                        demo.trajectory.horizon(),
                        demo.trajectory.dim(),
                        demo.q_start.len(),
                        demo.q_goal.len()
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Run `cfg.steps` Adam updates of the noise-prediction objective. Each step
/// draws its batch from one scene so the scene is encoded once per step;
/// gradients flow into the encoder through the kept (non-dropped) rows.
pub fn train(
    model: &mut DenoiserModel,
    encoder: &mut SceneEncoderParams,
    data: &TrainingSet,
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<TrainReport, DiffusionError> {
    validate(model, encoder, data, schedule, cfg)?;
    let mcfg = *model.config();
    let flat = mcfg.flat_dim();
    let usable: Vec<usize> = (0..data.scenes.len())
        .filter(|&i| !data.scenes[i].demos.is_empty())
        .collect();

    let mut adam = AdamState::new(
        model
            .named_tensors()
            .iter()
            .map(|(_, t)| *t)
            .chain(encoder.named_tensors().iter().map(|(_, t)| *t)),
    );

    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        // Cosine decay to zero. Adam at a fixed rate leaves the weights
        // jittering at a loss floor proportional to the rate; the late-t
        // reverse steps amplify noise-prediction error by 1/sqrt(alpha),
        // so sampling needs the final fit to be much tighter than that
        // floor allows.
        let decay = 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / cfg.steps as f64).cos());
        let adam_cfg = AdamConfig { lr: cfg.lr * decay, ..AdamConfig::default() };
        let mut pick = substream(cfg.seed, stream::TRAIN, step as u64);
        let mut noise = substream(cfg.seed, stream::NOISE, step as u64);
        let mut dropout = substream(cfg.seed, stream::DROPOUT, step as u64);

        let scene = &data.scenes[usable[pick.random_range(0..usable.len())]];
        let mut tau_rows = Vec::with_capacity(cfg.batch * flat);
        let mut eps_rows = Vec::with_capacity(cfg.batch * flat);
        let mut endpoints: Vec<Option<Vec<f64>>> = Vec::with_capacity(cfg.batch);
        let mut ts = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let demo = &scene.demos[pick.random_range(0..scene.demos.len())];
            let t = pick.random_range(0..schedule.steps());
            let eps = Trajectory::standard_normal(mcfg.horizon, mcfg.dim, &mut noise);
            let tau_t = forward_diffuse(&demo.trajectory, t, &eps, schedule)?;
            tau_rows.extend_from_slice(tau_t.flat());
            eps_rows.extend_from_slice(eps.flat());
            ts.push(t);
            let dropped = cfg.p_drop > 0.0 && dropout.random::<f64>() < cfg.p_drop;
            endpoints.push((!dropped).then(|| {
                let mut row = Vec::with_capacity(2 * mcfg.dim);
                row.extend_from_slice(demo.q_start.angles());
                row.extend_from_slice(demo.q_goal.angles());
                row
            }));
        }

        let mut tape = Tape::new();
        let dvars = DenoiserVars::record(&mut tape, model);
        let evars = EncoderVars::record(&mut tape, encoder);
        let coords =
            tape.input(normalize_coords(&scene.voxels, scene.bounds_min, scene.bounds_max));
        let z = encode_on_tape(&mut tape, &evars, coords);
        let cond_parts: Vec<_> = endpoints
            .iter()
            .map(|row| match row {
                Some(qsg) => {
                    let qsg = tape.input(Tensor::row(qsg.clone()));
                    tape.concat_cols(&[qsg, z])
                }
                None => dvars.null_token,
            })
            .collect();
        let cond_rows = tape.concat_rows(&cond_parts);
        let tau = tape.input(Tensor::matrix(cfg.batch, flat, tau_rows));
        let target = tape.input(Tensor::matrix(cfg.batch, flat, eps_rows));
        let out = forward_batch(&mut tape, &dvars, &mcfg, tau, &ts, cond_rows);
        let diff = tape.sub(out, target);
        let sq = tape.mul(diff, diff);
        let loss = tape.mean(sq);

        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(DiffusionError::Diverged(step));
        }
        losses.push(loss_value);

        let mut wrt = dvars.list();
        wrt.extend(evars.list());
        let grads = tape.grad(loss, &wrt);
        let mut params = model.tensors_mut();
        params.extend(encoder.tensors_mut());
        adam_step(&mut params, &grads, &mut adam, &adam_cfg);
    }
    Ok(TrainReport { losses })
}
