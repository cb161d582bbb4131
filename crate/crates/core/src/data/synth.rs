//! Desk-scale stand-in for real fault simulations.
//!
//! Every class shares a latent AR(1) factor `f_t` loaded onto two column
//! blocks, `S1 = [0, V/4)` with sign `+1` and `S2 = [V/2, 3V/4)` with a
//! class-dependent sign, plus unit white noise on every column. The last two
//! classes differ only in that sign: their column means and per-column
//! statistics are identical, and only the product of distant columns tells
//! them apart. The other classes add a mean shift on their own block of the
//! remaining columns.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::record::{tep_variable_names, RecordSet, SimulationRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub runs_per_class: usize,
    pub samples_per_run: usize,
    pub variables: usize,
    pub seed: u64,
    /// AR(1) coefficient of the latent factor.
    pub phi: f64,
    /// Factor loading on the S1/S2 blocks.
    pub loading: f64,
    /// Mean shift of the mean-shift classes, in noise standard deviations.
    pub shift: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 4,
            runs_per_class: 10,
            samples_per_run: 200,
            variables: 50,
            seed: 0,
            phi: 0.5,
            loading: 0.8,
            shift: 1.0,
        }
    }
}

impl SynthConfig {
    /// 1-based fault ids of the pair separable only through cross-column
    /// correlation.
    pub fn correlation_pair(&self) -> Option<(usize, usize)> {
        (self.classes >= 2).then(|| (self.classes - 1, self.classes))
    }

    fn s2_sign(&self, class: usize) -> f64 {
        let pair_start = self.classes.saturating_sub(2);
        let k = if class >= pair_start { class - pair_start } else { class };
        if k % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Per-column mean offsets for a 0-based class.
    fn offsets(&self, class: usize) -> Vec<f64> {
        let v = self.variables;
        let mut out = alloc::vec![0.0; v];
        let shifted = self.classes.saturating_sub(2);
        if class >= shifted {
            return out;
        }
        let rest: Vec<usize> = (0..v)
            .filter(|&j| !(j < v / 4 || (v / 2..3 * v / 4).contains(&j)))
            .collect();
        if rest.is_empty() {
            return out;
        }
        let size = (rest.len() / shifted).max(1);
        let start = class * size;
        // blocks wrap when there are more classes than columns; a larger
        // shift keeps wrapped classes distinct
        let magnitude = self.shift * (1 + start / rest.len()) as f64;
        for k in 0..size {
            out[rest[(start + k) % rest.len()]] = magnitude;
        }
        out
    }
}

pub fn synth_faults(cfg: &SynthConfig) -> Result<RecordSet> {
    if cfg.classes == 0 || cfg.runs_per_class == 0 || cfg.samples_per_run == 0 || cfg.variables == 0
    {
        return Err(Error::Config("synthetic counts must all be >= 1".into()));
    }
    if cfg.phi.is_nan() || cfg.phi.abs() >= 1.0 {
        return Err(Error::Config("phi must lie in (-1, 1)".into()));
    }
    let v = cfg.variables;
    let names: Vec<String> = if v == 52 {
        tep_variable_names()
    } else {
        (1..=v).map(|j| format!("v{j}")).collect()
    };
    let mut set = RecordSet::new(names);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let innovation = libm::sqrt(1.0 - cfg.phi * cfg.phi);
    let s1 = 0..v / 4;
    let s2 = v / 2..3 * v / 4;
    for class in 0..cfg.classes {
        let offsets = cfg.offsets(class);
        let sign = cfg.s2_sign(class);
        for run in 0..cfg.runs_per_class {
            let mut values = Vec::with_capacity(cfg.samples_per_run * v);
            let mut f: f64 = StandardNormal.sample(&mut rng);
            for _ in 0..cfg.samples_per_run {
                let e: f64 = StandardNormal.sample(&mut rng);
                f = cfg.phi * f + innovation * e;
                for (j, &mu) in offsets.iter().enumerate() {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let load = if s1.contains(&j) {
                        cfg.loading
                    } else if s2.contains(&j) {
                        sign * cfg.loading
                    } else {
                        0.0
                    };
                    values.push(mu + load * f + noise);
                }
            }
            set.push(SimulationRecord {
                fault_id: class + 1,
                run_id: format!("{}-{run}", class + 1),
                values,
            })?;
        }
    }
    Ok(set)
}
