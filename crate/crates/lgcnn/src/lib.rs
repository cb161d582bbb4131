//! File formats, ingestion and the command line for `lgcnn-core`.

pub mod archive;
mod binary;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod ingest;
pub mod manifest;
pub mod pipeline;
pub mod report;

pub use error::{AppError, AppResult};
