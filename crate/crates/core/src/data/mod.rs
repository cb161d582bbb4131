//! From raw fault simulations to normalized window images.
//!
//! Records hold time-ordered samples (rows) of process variables (columns).
//! [`preprocess`] drops unwanted variables and the pre-fault prefix,
//! [`windowize`] cuts each record into non-overlapping `window x variables`
//! images, and [`NormStats`] standardizes them with training statistics.

mod correlation;
mod dataset;
mod normalize;
mod record;
mod synth;

pub use correlation::{correlation_matrix, Correlation};
pub use dataset::{windowize, ImageDataset, Split};
pub use normalize::{normalize, NormStats, StatsMode, STD_FLOOR};
pub use record::{
    preprocess, tep_variable_names, PreprocessConfig, RecordSet, SimulationRecord, DEFAULT_DROP,
};
pub use synth::{synth_faults, SynthConfig};
