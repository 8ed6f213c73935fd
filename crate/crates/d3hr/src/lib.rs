//! Desk-scale dataset distillation over analytic Gaussian-mixture worlds.
//!
//! The pipeline maps class-conditional data into a near-Gaussian noise
//! domain with deterministic DDIM inversion, fits per-class mean/std there,
//! searches m random candidate subsets for the one whose moments best match
//! the fitted Gaussian, and maps the winner back to data space with DDIM
//! sampling. The crate ships the analytic noise predictor that makes every
//! step exact and testable, along with evaluation instruments (a linear
//! classifier, normality diagnostics, energy distance) and a CLI.
//!
//! See the `examples/` directory for one runnable example per capability.

pub mod cli;
pub mod ddim;
pub mod distill;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod report;
pub mod rng;

pub use ddim::{build_schedule, ddim_invert_step, ddim_sample_step, LatentBatch, NoiseSchedule};
pub use distill::{
    distill_dataset, group_sample, subset_loss, DistillConfig, DistilledSet, LossWeights, Mode,
    StatsBundle,
};
pub use error::{Error, Result};
pub use eval::{energy_distance, normality_report, train_classifier, evaluate_classifier};
pub use gmm::{analytic_epsilon, default_world, sample_dataset, Dataset, GmmSpec};
