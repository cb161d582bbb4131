use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Symmetric Pearson correlation matrix of `variables` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub variables: usize,
    /// Row-major `variables x variables`.
    pub values: Vec<f64>,
    /// Columns with zero variance; their rows and columns are 0.
    pub constant: Vec<usize>,
}

impl Correlation {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.variables + j]
    }
}

/// Single-pass (Welford) Pearson correlation over row-major samples.
pub fn correlation_matrix(samples: &[f64], variables: usize) -> Result<Correlation> {
    if variables == 0 || !samples.len().is_multiple_of(variables) {
        return Err(Error::Data("samples do not form whole rows".into()));
    }
    let n = samples.len() / variables;
    if n < 2 {
        return Err(Error::Data("correlation needs at least 2 samples".into()));
    }
    let v = variables;
    let mut mean = vec![0.0f64; v];
    let mut delta = vec![0.0f64; v];
    // upper triangle of the co-moment matrix
    let mut co = vec![0.0f64; v * v];
    for (k, row) in samples.chunks_exact(v).enumerate() {
        let inv = 1.0 / (k + 1) as f64;
        for j in 0..v {
            delta[j] = row[j] - mean[j];
            mean[j] += delta[j] * inv;
        }
        for (i, &di) in delta.iter().enumerate() {
            let base = i * v;
            for j in i..v {
                co[base + j] += di * (row[j] - mean[j]);
            }
        }
    }
    let scale: Vec<f64> = (0..v).map(|i| libm::sqrt(co[i * v + i])).collect();
    let constant: Vec<usize> = (0..v)
        .filter(|&i| scale[i] <= 1e-12 * libm::fabs(mean[i]).max(1.0))
        .collect();
    for &i in &constant {
        log::warn!("variable {i} is constant; its correlations are reported as 0");
    }
    let mut values = vec![0.0f64; v * v];
    for i in 0..v {
        if constant.contains(&i) {
            continue;
        }
        values[i * v + i] = 1.0;
        for j in i + 1..v {
            if constant.contains(&j) {
                continue;
            }
            let r = (co[i * v + j] / (scale[i] * scale[j])).clamp(-1.0, 1.0);
            values[i * v + j] = r;
            values[j * v + i] = r;
        }
    }
    Ok(Correlation {
        variables: v,
        values,
        constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_pass(samples: &[f64], v: usize) -> Vec<f64> {
        let n = (samples.len() / v) as f64;
        let col = |j: usize| samples.iter().skip(j).step_by(v).copied();
        let mean: Vec<f64> = (0..v).map(|j| col(j).sum::<f64>() / n).collect();
        let mut out = vec![0.0; v * v];
        for i in 0..v {
            for j in 0..v {
                let cov: f64 = col(i).zip(col(j)).map(|(a, b)| (a - mean[i]) * (b - mean[j])).sum();
                let si: f64 = col(i).map(|a| (a - mean[i]) * (a - mean[i])).sum();
                let sj: f64 = col(j).map(|b| (b - mean[j]) * (b - mean[j])).sum();
                out[i * v + j] = cov / libm::sqrt(si * sj);
            }
        }
        out
    }

    #[test]
    fn matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, v) = (200, 50);
        let mut x: Vec<f64> = (0..n * v).map(|_| rng.random_range(-1.0..1.0)).collect();
        // give some columns real correlation and an offset
        for r in 0..n {
            x[r * v + 7] = 3.0 * x[r * v + 3] + 0.1 * x[r * v + 7] + 100.0;
        }
        let c = correlation_matrix(&x, v).unwrap();
        let oracle = two_pass(&x, v);
        for (a, b) in c.values.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10);
        }
        for i in 0..v {
            assert_eq!(c.get(i, i), 1.0);
            for j in 0..v {
                assert!((c.get(i, j) - c.get(j, i)).abs() < 1e-12);
                assert!(c.get(i, j).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn negation_is_minus_one() {
        let x: Vec<f64> = (0..10).flat_map(|i| [i as f64, -(i as f64)]).collect();
        let c = correlation_matrix(&x, 2).unwrap();
        assert!((c.get(0, 1) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_reports_zero() {
        let x: Vec<f64> = (0..10).flat_map(|i| [i as f64, 4.0]).collect();
        let c = correlation_matrix(&x, 2).unwrap();
        assert_eq!(c.constant, [1]);
        assert_eq!(c.get(0, 1), 0.0);
        assert_eq!(c.get(0, 0), 1.0);
    }

    #[test]
    fn needs_two_rows() {
        assert!(correlation_matrix(&[1.0, 2.0], 2).is_err());
    }
}
