//! Delimited-text simulation files.
//!
//! Each `*.csv` file has a header row naming every column. Two columns are
//! metadata, `fault_id` (1-based class) and `run_id`; every other column is
//! a process variable, one row per sample in time order. A file may hold any
//! number of runs; rows of one run must be contiguous. All files in a
//! directory must list the same variables in the same order.

use std::fs;
use std::path::{Path, PathBuf};

use lgcnn_core::data::{RecordSet, SimulationRecord};

use crate::error::{AppError, AppResult};

pub const FAULT_COLUMN: &str = "fault_id";
pub const RUN_COLUMN: &str = "run_id";

fn csv_files(dir: &Path) -> AppResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| AppError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| AppError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads every `*.csv` file in `dir` (sorted by name). An empty directory
/// gives an empty set.
pub fn ingest_dir(dir: &Path) -> AppResult<RecordSet> {
    let mut set = RecordSet::default();
    for file in csv_files(dir)? {
        ingest_file(&file, &mut set)?;
    }
    Ok(set)
}

pub fn ingest_file(path: &Path, set: &mut RecordSet) -> AppResult<()> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))?;
    let ctx = |line: u64, msg: &str| AppError::input(format!("{}:{line}: {msg}", path.display()));
    let header = reader.headers().map_err(|e| ctx(1, &e.to_string()))?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ctx(1, &format!("missing `{name}` column")))
    };
    let (fault_col, run_col) = (find(FAULT_COLUMN)?, find(RUN_COLUMN)?);
    let variables: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != fault_col && i != run_col)
        .map(|(_, h)| h.to_string())
        .collect();
    if set.variables.is_empty() && set.records.is_empty() {
        set.variables = variables;
    } else if set.variables != variables {
        return Err(ctx(1, "variables differ from earlier files"));
    }

    let mut current: Option<SimulationRecord> = None;
    let mut seen: Vec<(usize, String)> = Vec::new();
    for (row, result) in reader.records().enumerate() {
        let line = row as u64 + 2;
        let record = result.map_err(|e| ctx(line, &e.to_string()))?;
        if record.len() != header.len() {
            return Err(ctx(line, &format!("{} fields, header has {}", record.len(), header.len())));
        }
        let fault_id: usize = record[fault_col]
            .parse()
            .map_err(|_| ctx(line, &format!("bad fault_id `{}`", &record[fault_col])))?;
        let run_id = record[run_col].to_string();
        let same_run = current
            .as_ref()
            .is_some_and(|r| r.fault_id == fault_id && r.run_id == run_id);
        if !same_run {
            if let Some(done) = current.take() {
                set.push(done)?;
            }
            let key = (fault_id, run_id.clone());
            if seen.contains(&key) {
                return Err(ctx(line, &format!("rows of fault {fault_id} run {run_id} are not contiguous")));
            }
            seen.push(key);
            current = Some(SimulationRecord {
                fault_id,
                run_id,
                values: Vec::new(),
            });
        }
        let values = &mut current.as_mut().expect("set above").values;
        for (i, field) in record.iter().enumerate() {
            if i == fault_col || i == run_col {
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| ctx(line, &format!("`{field}` in column `{}` is not a number", &header[i])))?;
            values.push(v);
        }
    }
    if let Some(done) = current {
        set.push(done)?;
    }
    Ok(())
}

/// Writes a record set as one CSV file per fault.
pub fn write_dir(set: &RecordSet, dir: &Path) -> AppResult<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let w = set.width();
    for fault in set.fault_ids() {
        let path = dir.join(format!("fault_{fault:02}.csv"));
        let io = |e: csv::Error| AppError::input(format!("{}: {e}", path.display()));
        let mut out = csv::Writer::from_path(&path).map_err(io)?;
        let mut header = vec![FAULT_COLUMN.to_string(), RUN_COLUMN.to_string()];
        header.extend(set.variables.iter().cloned());
        out.write_record(&header).map_err(io)?;
        for r in set.records.iter().filter(|r| r.fault_id == fault) {
            for row in r.values.chunks(w) {
                let mut fields = vec![r.fault_id.to_string(), r.run_id.clone()];
                fields.extend(row.iter().map(|v| format!("{v:e}")));
                out.write_record(&fields).map_err(io)?;
            }
        }
        out.flush().map_err(|e| AppError::io(&path, e))?;
    }
    Ok(())
}
