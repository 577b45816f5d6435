//! Bi-level search optimization: dataset splitting, update rules, the two
//! step variants, the epoch loop, and exact checkpointing.

pub mod checkpoint;
pub mod run;
pub mod split;
pub mod state;
pub mod step;
pub mod updates;

pub use checkpoint::{
    fnv64_hex, load_checkpoint, parse_checkpoint, render_checkpoint, save_checkpoint, Checkpoint,
};
pub use run::{metrics_csv, score_snapshot, search_loop, write_metrics_csv, EpochMetrics};
pub use split::{split_dataset, SplitDatasets};
pub use state::{is_arch_param, OptimizerMode, SearchHyper, SearchState};
pub use step::{darts_step, milenas_step, StepStats};
pub use updates::{adam_update, cosine_lr, sgd_update, AdamHyper, SgdHyper};
