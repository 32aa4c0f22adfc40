//! Factorization models for implicit feedback trained with pairwise ranking
//! losses (WARP, LambdaRank) whose rank-dependent weights are computed from
//! sampled negatives, with or without correcting the sampled rank to a
//! full-catalog estimate.
//!
//! The pieces, leaf first: [`model`] holds the factor matrices and
//! interaction sets, [`rank`] the rank estimators and weights, [`loss`] the
//! pairwise losses and their gradients, [`sampling`] the negative samplers,
//! [`train`] the iterative and batched trainers, [`metrics`] the top-k
//! evaluation, and [`data`] the log parsing, filtering and splitting.
//! [`simulate`] and [`sweep`] drive the Monte-Carlo rank study and grids of
//! training runs.

pub mod codec;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod rank;
pub mod rng;
pub mod sampling;
pub mod simulate;
pub mod sweep;
pub mod train;

pub use error::{Error, Result};
pub use loss::LossKind;
pub use metrics::{evaluate, EvalReport, EvalSplit, Partition};
pub use model::{init_model, AnyModel, Dtype, FactorModel, InteractionSet, ItemCatalog, Scalar};
pub use rank::Correction;
pub use rng::Stream;
pub use sampling::ReplacementMode;
pub use train::{Algorithm, TrainConfig, TrainReport};
