//! Undirected topic models for bag-of-words documents.
//!
//! Two models share one parameter set `{W, a, b}`:
//!
//! * the Replicated Softmax RBM ([`rsm`]), one binary hidden layer over a
//!   multinomial visible unit sampled `N` times;
//! * the Over-Replicated Softmax DBM ([`orsm`]), which adds `M` hidden softmax
//!   units tied to the same weights and acting as a length-aware prior.
//!
//! Around them sit corpus ingestion ([`corpus`]), exact and annealed
//! partition-function estimation ([`partition`]), retrieval and classification
//! harnesses ([`eval`]) and the binary file formats ([`persist`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod corpus;
pub mod error;
pub mod eval;
pub mod math;
pub mod orsm;
pub mod params;
pub mod partition;
pub mod persist;
pub mod rng;
pub mod rsm;
pub mod synthetic;

pub use corpus::{Corpus, Document, Split, Vocabulary};
pub use error::{Error, Result};
pub use eval::{FeatureMatrix, InferenceMode, PrCurve};
pub use orsm::{GibbsState, MeanFieldState, OrsmModel};
pub use params::{CdSchedule, ModelParams, TrainHyper};
pub use partition::{AisCache, AisConfig, AisEstimate};
