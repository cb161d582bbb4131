use alloc::format;
use alloc::vec::Vec;

use super::normalize::NormStats;
use super::record::RecordSet;
use crate::{Error, Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Single-channel window images with 0-based class labels (`fault_id - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub height: usize,
    pub width: usize,
    /// Row-major `n x height x width`.
    pub pixels: Vec<f32>,
    pub labels: Vec<usize>,
    pub split: Split,
    /// Set once the images have been standardized.
    pub norm: Option<NormStats>,
}

impl ImageDataset {
    pub fn new(
        height: usize,
        width: usize,
        pixels: Vec<f32>,
        labels: Vec<usize>,
        split: Split,
    ) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != labels.len() * height * width {
            return Err(Error::Data(format!(
                "{} pixels do not make {} images of {height}x{width}",
                pixels.len(),
                labels.len()
            )));
        }
        Ok(ImageDataset {
            height,
            width,
            pixels,
            labels,
            split,
            norm: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.pixels[i * n..(i + 1) * n]
    }

    /// The images at `idx` as a `(len, 1, height, width)` tensor.
    pub fn batch<T: Scalar>(&self, idx: &[usize]) -> Result<Tensor<T>> {
        let mut data = Vec::with_capacity(idx.len() * self.height * self.width);
        for &i in idx {
            data.extend(self.image(i).iter().map(|&v| T::of(v as f64)));
        }
        Tensor::from_vec(&[idx.len(), 1, self.height, self.width], data)
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = alloc::vec![0; classes];
        for &l in &self.labels {
            if l < classes {
                counts[l] += 1;
            }
        }
        counts
    }
}

/// Cuts every record into non-overlapping `window`-row images. Remainders
/// shorter than a window are dropped; records shorter than a window are
/// skipped with a warning.
pub fn windowize(set: &RecordSet, window: usize, split: Split) -> Result<ImageDataset> {
    let w = set.width();
    if window == 0 || w == 0 {
        return Err(Error::Data("window and variable count must be >= 1".into()));
    }
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for r in &set.records {
        let n = r.samples(w);
        if n < window {
            log::warn!(
                "fault {} run {}: {n} samples is shorter than one window, skipped",
                r.fault_id,
                r.run_id
            );
            continue;
        }
        for chunk in r.values.chunks_exact(window * w) {
            pixels.extend(chunk.iter().map(|&v| v as f32));
            labels.push(r.fault_id - 1);
        }
    }
    ImageDataset::new(window, w, pixels, labels, split)
}
