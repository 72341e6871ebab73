//! Incremental nearest-class-mean random forests that absorb new classes
//! without retraining every tree.

pub mod data;
pub mod error;
pub mod forest;
pub mod harness;
pub mod incremental;
pub mod tree;

pub use data::{ArrivalSchedule, Dataset, Label, LabeledSample, NormalizationStats};
pub use error::{HirfError, Result};
pub use forest::{train_offline, Forest, ForestConfig, VoteMode};
pub use incremental::{absorb_batch, run_schedule, RoundReport, TreeDecision};
pub use tree::{GainMode, NcmTree, SplitSearch, TreeConfig};
