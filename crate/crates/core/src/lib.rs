//! Multi-task representation learning over a shared internal representation.
//!
//! A hypothesis is a composite `g_i . f`: one shared trunk network `f`
//! mapping inputs into a low-dimensional representation space, plus one
//! small head network `g_i` per task. Training minimizes the average of
//! the per-task mean-squared errors by conjugate-gradient descent with
//! exact line search, so the trunk is shaped by every task at once.
//!
//! The crate provides:
//!
//! - [`nnet`]: a minimal dense feed-forward network engine (forward pass,
//!   reverse-mode gradients, seeded initialization).
//! - [`composite`]: the shared-trunk/multi-head hypothesis, its empirical
//!   loss, and the exact joint gradient.
//! - [`environment`]: a synthetic world of translationally invariant
//!   Boolean functions over a one-dimensional retina, small enough that
//!   true (generalisation) error is computable exactly.
//! - [`optimizer`]: nonlinear conjugate gradient with exact line search
//!   and multi-restart training.
//! - [`evaluate`]: exact error reports, representation-error measures,
//!   learning surfaces, transfer curves, and Monte-Carlo estimates of
//!   generalisation-gap probabilities.
//! - [`bounds`]: closed-form sample-complexity bound calculators.
//!
//! The [`guide`] module mirrors the rendered book in `book/`; its code
//! samples compile and run as doctests.

pub mod bounds;
pub mod composite;
pub mod environment;
pub mod evaluate;
pub mod guide;
pub mod nnet;
pub mod optimizer;
pub mod seed;

pub use composite::{CompositeParams, CompositeSpec, Example, SampleMatrix};
pub use environment::{BooleanTaskTable, Environment, NMSample, RetinaInput};
pub use nnet::{Activation, LayerSpec, MlpSpec, ParamVector};
pub use optimizer::{TrainConfig, TrainResult};

/// Errors shared across the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A network or composite specification is malformed.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    /// An input, parameter vector, or sample has the wrong dimensions.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// A configuration value is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A retina input violates the single-cyclic-run invariant.
    #[error("invalid retina input: {0}")]
    InvalidInput(String),
    /// A task index does not name a task.
    #[error("task index {index} out of range ({len} tasks)")]
    TaskIndex { index: usize, len: usize },
    /// Training encountered a NaN or infinite loss/gradient.
    #[error("non-finite value encountered at iteration {iteration}")]
    NonFinite { iteration: usize },
    /// A serialized sample or model could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
