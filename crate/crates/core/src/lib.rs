//! Masque: a style-conditioned reading comprehension model with passage ranking,
//! answer possibility classification and a multi-source pointer-generator
//! decoder, on a small reverse-mode autodiff core.
//!
//! Everything numeric is generic over [`Scalar`]; the aliases below fix it to
//! `f64`, which is what the command-line tool and the tests use.

pub mod config;
pub mod data;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod heads;
pub mod model;
pub mod nn;
pub mod reader;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use error::{ModelError, ModelResult};
pub use model::{Masque, RankerSource};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type Graph = tensor::Graph<f64>;
pub type ParamStore = tensor::ParamStore<f64>;
pub type GradBuffer = tensor::GradBuffer<f64>;
pub type OptimizerState = training::OptimizerState<f64>;
pub type Checkpoint = training::Checkpoint<f64>;
pub type Trainer<'a> = training::Trainer<'a, f64>;
