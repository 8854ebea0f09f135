//! Desk-scale pool-based active learning: datasets, small Bayesian MLPs and the acquisition loop.

pub mod al_loop;
pub mod dataset;
pub mod idx;
pub mod model;

pub use al_loop::{run_al_loop, run_al_loop_on, run_seeds, RoundEntry, RunConfig, RunRecord, StrategySpec};
pub use dataset::{make_dataset, BlobSpec, Dataset};
pub use idx::load_idx;
pub use al_loop::{duplicate_pairs, DatasetSource};
pub use model::{accuracy, posterior_predict, train_model, Model, ModelKind, ModelSpec};
