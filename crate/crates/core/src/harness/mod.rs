//! Training, episodic evaluation, ablation sweeps, and mask export.

mod config;
mod eval;
mod masks;
mod sweep;
mod train;

pub use config::{RunConfig, DEFAULT_EVAL_TASKS};
pub use eval::{ci95_half_width, evaluate, mean, EvalReport};
pub use masks::{export_masks, selection_recall, MaskExport};
pub use sweep::{sweep_distance, sweep_m, SweepPoint, SweepReport};
pub use train::{train, EpochLog, TrainLog, TrainOutcome};
