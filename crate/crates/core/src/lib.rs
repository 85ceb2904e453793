//! Sparse logistic regression with constant-time delayed regularization.
//!
//! Training cost per example scales with the number of nonzero features,
//! not the dimensionality: coordinates absent from an example are left
//! stale and brought current in O(1) from prefix tables over the learning
//! rate schedule ([`schedule::ScheduleCache`]) when next needed.
//!
//! Supported: L1, squared L2 and elastic-net penalties under plain SGD and
//! FoBoS, with constant, `1/(1+t)` and `1/sqrt(1+t)` rate schedules.

pub mod bench;
pub mod data;
pub mod error;
pub mod lazy_reg;
pub mod numfmt;
pub mod schedule;
pub mod trainer;

pub use data::{
    generate_synthetic, parse_libsvm, write_libsvm, Dataset, IndexBase, Label, LinearModel,
    SparseExample, Synthetic,
};
pub use error::{Error, Result};
pub use lazy_reg::{Algo, Penalty, RegConfig};
pub use schedule::{Schedule, ScheduleCache, ScheduleKind, Table};
pub use trainer::{
    objective, train, train_dense, DenseTrainer, LazyTrainer, TrainOptions, TrainReport,
};
