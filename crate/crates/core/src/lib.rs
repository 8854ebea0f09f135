//! Batch acquisition for Bayesian active learning.
//!
//! The posterior over model parameters is represented only through `k`
//! predictive samples per pool point (ensemble members or dropout passes),
//! stored in a [`PosteriorTensor`]. On top of it this crate provides:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`tensor`] | posterior tensor, predictive mean, binary/CSV I/O |
//! | [`scores`] | least confident, predictive entropy, BALD |
//! | [`pairwise`] | pairwise mutual information between pool outputs, pairwise total correlation |
//! | [`joint`] | joint entropies (exact and Monte Carlo), BatchBALD, exact total correlation |
//! | [`acquisition`] | random, top-k, greedy BatchBALD, greedy Large BatchBALD, power sampling |
//! | [`sim`] | datasets, small MLP ensembles, the acquire/label/retrain loop |
//! | [`bench`] | runtime benchmarks of the selection strategies |
//! | [`profile`] | Dolan-More performance profiles |
//! | [`report`] | CSV/JSON/SVG report emission |
//!
//! All information quantities are in nats. Logarithms are floored at
//! [`info::LOG_FLOOR`] and `0 · ln 0` is taken as `0`.

pub mod acquisition;
pub mod bench;
pub mod error;
pub mod info;
pub mod joint;
pub mod pairwise;
pub mod profile;
pub mod report;
pub mod scores;
pub mod sim;
pub mod tensor;

pub use acquisition::{SelectionBatch, SelectionFlag, Strategy, StrategyParams};
pub use error::{Error, Result};
pub use tensor::{MeanMatrix, PosteriorTensor, ScoreVector};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
