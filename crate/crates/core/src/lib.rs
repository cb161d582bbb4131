//! Local-global convolutional networks for classifying multivariate time
//! series rendered as images.
//!
//! This crate is `no_std` (it needs `alloc`). It holds everything that is pure
//! computation: the [`Tensor`] type, differentiable layers, the declarative
//! model description with its parameter auditor and receptive-field
//! calculator, the training loop, evaluation metrics, and the data pipeline
//! that turns fault simulations into normalized window images. File formats,
//! ingestion from disk and the command line live in the `lgcnn` crate.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod data;
mod error;
pub mod layers;
pub mod model;
mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{Shape4, Tensor};
