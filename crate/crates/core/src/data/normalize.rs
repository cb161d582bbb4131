use alloc::vec;
use alloc::vec::Vec;

use super::dataset::ImageDataset;
use crate::{Error, Result};

/// Standard deviations below this are treated as constant.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StatsMode {
    /// One mean/std pair per image column (process variable).
    #[default]
    PerVariable,
    /// A single pair over every pixel.
    Global,
}

impl StatsMode {
    pub fn name(self) -> &'static str {
        match self {
            StatsMode::PerVariable => "per-variable",
            StatsMode::Global => "global",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "per-variable" | "per_variable" => Ok(StatsMode::PerVariable),
            "global" => Ok(StatsMode::Global),
            other => Err(Error::Config(alloc::format!("unknown stats mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mode: StatsMode,
    /// One entry per column, or a single entry in global mode.
    pub mean: Vec<f64>,
    /// Population standard deviation before flooring.
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit(data: &ImageDataset, mode: StatsMode) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Data("normalization needs a nonempty training set".into()));
        }
        if data.norm.is_some() {
            return Err(Error::Data("statistics must come from raw images".into()));
        }
        let groups = match mode {
            StatsMode::PerVariable => data.width,
            StatsMode::Global => 1,
        };
        let col = |i: usize| if groups == 1 { 0 } else { i % data.width };
        let mut sum = vec![0.0f64; groups];
        let mut count = vec![0usize; groups];
        for (i, &v) in data.pixels.iter().enumerate() {
            sum[col(i)] += v as f64;
            count[col(i)] += 1;
        }
        let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect();
        let mut sq = vec![0.0f64; groups];
        for (i, &v) in data.pixels.iter().enumerate() {
            let d = v as f64 - mean[col(i)];
            sq[col(i)] += d * d;
        }
        let std: Vec<f64> = sq
            .iter()
            .zip(&count)
            .map(|(s, &n)| libm::sqrt(s / n as f64))
            .collect();
        for (j, &s) in std.iter().enumerate() {
            if s < STD_FLOOR {
                log::warn!("column {j} is constant in the training images; it normalizes to 0");
            }
        }
        Ok(NormStats { mode, mean, std })
    }

    fn index(&self, i: usize, width: usize) -> usize {
        if self.mean.len() == 1 {
            0
        } else {
            i % width
        }
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if self.mean.len() != 1 && self.mean.len() != width {
            return Err(Error::Data(alloc::format!(
                "statistics cover {} columns, images have {width}",
                self.mean.len()
            )));
        }
        Ok(())
    }

    /// Standardizes raw pixel rows in place. No guard against double use;
    /// see [`NormStats::apply`].
    pub fn apply_values(&self, pixels: &mut [f32], width: usize) -> Result<()> {
        self.check_width(width)?;
        for (i, v) in pixels.iter_mut().enumerate() {
            let k = self.index(i, width);
            let s = self.std[k];
            *v = if s < STD_FLOOR {
                0.0
            } else {
                ((*v as f64 - self.mean[k]) / s) as f32
            };
        }
        Ok(())
    }

    pub fn invert_values(&self, pixels: &mut [f32], width: usize) -> Result<()> {
        self.check_width(width)?;
        for (i, v) in pixels.iter_mut().enumerate() {
            let k = self.index(i, width);
            let s = self.std[k].max(STD_FLOOR);
            *v = (*v as f64 * s + self.mean[k]) as f32;
        }
        Ok(())
    }

    /// Standardizes a dataset and records the statistics on it. Refuses a
    /// dataset that is already normalized.
    pub fn apply(&self, data: &mut ImageDataset) -> Result<()> {
        if data.norm.is_some() {
            return Err(Error::Data(alloc::format!(
                "{} split is already normalized",
                data.split.name()
            )));
        }
        self.apply_values(&mut data.pixels, data.width)?;
        data.norm = Some(self.clone());
        Ok(())
    }

    pub fn denormalize(&self, data: &mut ImageDataset) -> Result<()> {
        if data.norm.as_ref() != Some(self) {
            return Err(Error::Data("dataset was not normalized with these statistics".into()));
        }
        self.invert_values(&mut data.pixels, data.width)?;
        data.norm = None;
        Ok(())
    }
}

/// Fits statistics on `train` and applies them to both splits.
pub fn normalize(
    train: &mut ImageDataset,
    test: &mut ImageDataset,
    mode: StatsMode,
) -> Result<NormStats> {
    let stats = NormStats::fit(train, mode)?;
    stats.apply(train)?;
    stats.apply(test)?;
    Ok(stats)
}
