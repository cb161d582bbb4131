use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{Error, Result};

/// Compressor recycle valve and stripper steam valve in the usual
/// `xmeas_*`/`xmv_*` naming of the benchmark process.
pub const DEFAULT_DROP: [&str; 2] = ["xmv_5", "xmv_9"];

/// The 41 measured (`xmeas_*`) and 11 manipulated (`xmv_*`) variable names.
pub fn tep_variable_names() -> Vec<String> {
    (1..=41)
        .map(|i| format!("xmeas_{i}"))
        .chain((1..=11).map(|i| format!("xmv_{i}")))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRecord {
    /// 1-based fault class.
    pub fault_id: usize,
    pub run_id: String,
    /// Row-major `samples x variables`.
    pub values: Vec<f64>,
}

impl SimulationRecord {
    pub fn samples(&self, variables: usize) -> usize {
        self.values.len().checked_div(variables).unwrap_or(0)
    }
}

/// Records sharing one variable layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecordSet {
    pub variables: Vec<String>,
    pub records: Vec<SimulationRecord>,
}

impl RecordSet {
    pub fn new(variables: Vec<String>) -> Self {
        RecordSet {
            variables,
            records: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.variables.len()
    }

    pub fn push(&mut self, record: SimulationRecord) -> Result<()> {
        let w = self.width();
        if w == 0 || !record.values.len().is_multiple_of(w) {
            return Err(Error::Data(format!(
                "run {} of fault {}: {} values do not form rows of {w} variables",
                record.run_id,
                record.fault_id,
                record.values.len()
            )));
        }
        if record.fault_id == 0 {
            return Err(Error::Data(format!("run {}: fault ids start at 1", record.run_id)));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.records.iter().map(|r| r.samples(self.width())).sum()
    }

    /// All samples of one fault, concatenated in record order.
    pub fn fault_samples(&self, fault_id: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.fault_id == fault_id)
            .flat_map(|r| r.values.iter().copied())
            .collect()
    }

    pub fn fault_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.records.iter().map(|r| r.fault_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessConfig {
    /// Variable names to remove. Every name must be present.
    pub drop: Vec<String>,
    /// Number of leading samples recorded before the fault was introduced.
    pub fault_onset: usize,
}

impl PreprocessConfig {
    pub fn new(drop: &[&str], fault_onset: usize) -> Self {
        PreprocessConfig {
            drop: drop.iter().map(|s| s.to_string()).collect(),
            fault_onset,
        }
    }
}

pub fn preprocess(set: &RecordSet, cfg: &PreprocessConfig) -> Result<RecordSet> {
    let mut dropped = Vec::with_capacity(cfg.drop.len());
    for name in &cfg.drop {
        match set.variables.iter().position(|v| v == name) {
            Some(i) => dropped.push(i),
            None => {
                return Err(Error::Data(format!(
                    "variable `{name}` in the drop list is not among the {} columns",
                    set.width()
                )))
            }
        }
    }
    let keep: Vec<usize> = (0..set.width()).filter(|i| !dropped.contains(i)).collect();
    let w = set.width();
    let mut out = RecordSet::new(keep.iter().map(|&i| set.variables[i].clone()).collect());
    for r in &set.records {
        let skip = cfg.fault_onset.min(r.samples(w));
        let values = r.values[skip * w..]
            .chunks(w)
            .flat_map(|row| keep.iter().map(move |&i| row[i]))
            .collect();
        out.records.push(SimulationRecord {
            fault_id: r.fault_id,
            run_id: r.run_id.clone(),
            values,
        });
    }
    Ok(out)
}
