//! Conditional denoising-diffusion trajectory planning for serial manipulators.
//!
//! The pipeline, end to end:
//!
//! 1. [`world`] generates randomized sphere scenes, renders synthetic depth
//!    views, and carves them into voxel occupancy grids.
//! 2. [`expert`] plans collision-free demonstration trajectories with a
//!    bidirectional RRT and packs them into a training dataset.
//! 3. [`encoder`] embeds occupied-voxel coordinates into a latent scene code
//!    (shared per-voxel MLP + max pooling).
//! 4. [`diffusion`] trains a noise-prediction network conditioned on start,
//!    goal, and scene code, and samples trajectories by ancestral denoising
//!    with classifier-free guidance.
//! 5. [`guidance`] shapes each denoising step with a discrete control-barrier
//!    penalty gradient pushed through the arm's forward kinematics.
//! 6. [`eval`] benchmarks the whole thing: success rate, collision intensity,
//!    path length, planning time.
//!
//! Everything is `f64`, single-threaded, and deterministic given a root seed.

pub mod autodiff;
// pub mod checkpoint;
// pub mod config;
pub mod diffusion;
pub mod encoder;
// pub mod eval;
// pub mod expert;
// pub mod guidance;
pub mod kinematics;
pub mod rng;
pub mod world;
