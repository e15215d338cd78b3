//! Conditional denoising-diffusion core: the cosine noise schedule, the
//! trajectory denoiser with classifier-free condition dropout, joint
//! training of denoiser and scene encoder, and reverse-process sampling.

mod model;
mod sample;
mod schedule;
mod train;

pub use model::{cfg_noise, denoise_predict, Condition, DenoiserModel, ModelConfig, Trajectory};
pub use sample::{sample, sample_traced, GuidanceHook, SampleTrace, SamplerConfig};
pub use schedule::{cosine_schedule, forward_diffuse, reverse_mean, NoiseSchedule};
pub use train::{train, TrainConfig, TrainDemo, TrainReport, TrainScene, TrainingSet};

/// Error type carried by per-step correction hooks plugged into the sampler.
pub type HookError = Box<dyn std::error::Error + Send + Sync + 'static>;

#[derive(Debug, thiserror::Error)]
pub enum DiffusionError {
    #[error("diffusion schedule needs at least 2 steps, got {0}")]
    BadStepCount(usize),
    #[error("cosine offset must be a positive finite number, got {0}")]
    BadOffset(f64),
    #[error("step index {t} is outside the {n}-step schedule")]
    StepOutOfRange { t: usize, n: usize },
    #[error("trajectory needs at least 2 waypoints, got {0}")]
    ShortHorizon(usize),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("{0}")]
    BadHyper(String),
    #[error("training set holds no demonstrations")]
    EmptyDataset,
    #[error("training loss went non-finite at step {0}")]
    Diverged(usize),
    #[error("guidance hook failed: {0}")]
    Guidance(HookError),
}
