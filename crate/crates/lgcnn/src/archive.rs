//! Prepared dataset archive.
//!
//! Layout (little endian): the magic `LGDS`, a `u32` format version, a `u64`
//! length and that many bytes of JSON metadata, then for the train and the
//! test split in turn a `u64` image count, the `f32` pixels and one `u32`
//! label per image.

use std::fs;
use std::io::Write;
use std::path::Path;

use lgcnn_core::data::{ImageDataset, NormStats, Split, StatsMode};
use serde::{Deserialize, Serialize};

use crate::binary::Reader;
use crate::error::{AppError, AppResult};

const MAGIC: &[u8; 4] = b"LGDS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub source: String,
    pub window: usize,
    pub stride: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub variables: Vec<String>,
    pub drop: Vec<String>,
    pub train_onset: usize,
    pub test_onset: usize,
    pub stats_mode: String,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    pub train_images: usize,
    pub test_images: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub meta: DatasetMeta,
    pub train: ImageDataset,
    pub test: ImageDataset,
}

impl Archive {
    pub fn norm(&self) -> AppResult<NormStats> {
        Ok(NormStats {
            mode: StatsMode::parse(&self.meta.stats_mode)?,
            mean: self.meta.norm_mean.clone(),
            std: self.meta.norm_std.clone(),
        })
    }

    pub fn encode(&self) -> AppResult<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta).map_err(|e| AppError::input(e.to_string()))?;
        let mut out = Vec::with_capacity(
            meta.len() + 4 * (self.train.pixels.len() + self.test.pixels.len()) + 64,
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        for d in [&self.train, &self.test] {
            out.extend_from_slice(&(d.len() as u64).to_le_bytes());
            for &p in &d.pixels {
                out.extend_from_slice(&p.to_le_bytes());
            }
            for &l in &d.labels {
                out.extend_from_slice(&(l as u32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> AppResult<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4).ok_or_else(truncated)? != MAGIC {
            return Err(AppError::input("not a dataset archive (bad magic)"));
        }
        let version = r.u32().ok_or_else(truncated)?;
        if version != VERSION {
            return Err(AppError::input(format!("unsupported archive version {version}")));
        }
        let len = r.u64().ok_or_else(truncated)? as usize;
        let meta: DatasetMeta = serde_json::from_slice(r.take(len).ok_or_else(truncated)?)
            .map_err(|e| AppError::input(format!("archive metadata: {e}")))?;
        let mut splits = Vec::new();
        for split in [Split::Train, Split::Test] {
            let n = r.u64().ok_or_else(truncated)? as usize;
            let per = meta.height * meta.width;
            let px = n
                .checked_mul(per * 4)
                .and_then(|len| r.take(len))
                .ok_or_else(truncated)?;
            let pixels = px
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let labels = r
                .take(n * 4)
                .ok_or_else(truncated)?
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
                .collect();
            splits.push(ImageDataset::new(meta.height, meta.width, pixels, labels, split)?);
        }
        if !r.at_end() {
            return Err(AppError::input("trailing bytes after archive"));
        }
        let test = splits.pop().unwrap();
        let train = splits.pop().unwrap();
        let mut archive = Archive { meta, train, test };
        let norm = archive.norm()?;
        archive.train.norm = Some(norm.clone());
        archive.test.norm = Some(norm);
        Ok(archive)
    }

    pub fn read(path: &Path) -> AppResult<Self> {
        let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
        Self::decode(&bytes).map_err(|e| AppError::input(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> AppResult<()> {
        write_atomic(path, &self.encode()?)
    }
}

fn truncated() -> AppError {
    AppError::input("archive is truncated")
}

/// Writes through a sibling temporary file and renames, so a failed write
/// never leaves a partial file at `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    let result = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(AppError::io(path, e));
    }
    Ok(())
}
