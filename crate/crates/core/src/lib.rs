//! Learned hyperparameter lists for Adam-style optimizers.
//!
//! The pipeline: sample synthetic tasks ([`task`]), sample optimizer
//! configurations ([`optim`]), train every (task, optimizer, seed) triple into
//! a [`store::Store`], normalize curves into a [`scoring::CostMatrix`], learn an
//! ordered list greedily ([`learner`]) and compare it with random search
//! ([`harness`]).

pub mod error;
pub mod fd;
pub mod harness;
pub mod learner;
pub mod linalg;
pub mod optim;
pub mod rng;
pub mod sample;
pub mod scoring;
pub mod store;
pub mod task;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use optim::{OptimizerConfig, OptimizerFamily, OptimizerState};
pub use rng::RngKey;
pub use scoring::{Aggregator, CostMatrix, Normalizer, RunProfile, TrainingCurve};
pub use store::{CurveRecord, Store};
pub use task::{Batch, Family, Split, TaskConfig, TaskInstance};
