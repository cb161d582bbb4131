//! Model descriptions, static analysis, reference presets and the executable
//! network.

mod graph;
mod network;
mod presets;
mod spec;

pub use graph::{
    audit_parameters, propagate_shapes, receptive_field, receptive_fields, AuditRow, LayerShape,
    ParamAudit, ReceptiveField,
};
pub use network::{GradTape, Network};
pub use presets::{preset, preset_with, Family, PresetOptions, PRESET_NAMES};
pub use spec::{LayerKind, LayerSpec, ModelSpec, INPUT};
