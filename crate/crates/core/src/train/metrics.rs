//! Fault detection ratios, confusion matrices and report comparison.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, Scalar};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Per-class recall, keyed by class index. Classes without samples are
    /// absent.
    pub per_class_fdr: BTreeMap<usize, f64>,
    /// Unweighted mean over the classes present.
    pub mean_fdr: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub sample_count: usize,
}

impl EvalReport {
    pub fn from_predictions(classes: usize, labels: &[usize], predictions: &[usize]) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::ShapeMismatch {
                left: vec![labels.len()],
                right: vec![predictions.len()],
            });
        }
        let mut confusion = vec![vec![0u64; classes]; classes];
        for (&t, &p) in labels.iter().zip(predictions) {
            for label in [t, p] {
                if label >= classes {
                    return Err(Error::LabelOutOfRange { label, classes });
                }
            }
            confusion[t][p] += 1;
        }
        Ok(Self::from_confusion(confusion))
    }

    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Self {
        let mut per_class_fdr = BTreeMap::new();
        let mut sample_count = 0;
        for (c, row) in confusion.iter().enumerate() {
            let n: u64 = row.iter().sum();
            sample_count += n as usize;
            if n > 0 {
                per_class_fdr.insert(c, row[c] as f64 / n as f64);
            }
        }
        let mean_fdr = mean(per_class_fdr.values().copied());
        EvalReport {
            per_class_fdr,
            mean_fdr,
            confusion,
            sample_count,
        }
    }

    pub fn classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn accuracy(&self) -> f64 {
        let hits: u64 = (0..self.classes()).map(|c| self.confusion[c][c]).sum();
        if self.sample_count == 0 {
            0.0
        } else {
            hits as f64 / self.sample_count as f64
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winner {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub class: usize,
    pub a: f64,
    pub b: f64,
    /// `b - a`.
    pub delta: f64,
    pub winner: Winner,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_delta: f64,
}

impl Comparison {
    pub fn wins(&self, who: Winner) -> usize {
        self.rows.iter().filter(|r| r.winner == who).count()
    }
}

/// Per-class comparison of two FDR tables. Values equal at three decimals
/// (the reporting precision) count as a tie.
pub fn compare_fdrs(a: &BTreeMap<usize, f64>, b: &BTreeMap<usize, f64>) -> Result<Comparison> {
    if a.is_empty() || a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        let missing: Vec<usize> = a
            .keys()
            .filter(|k| !b.contains_key(k))
            .chain(b.keys().filter(|k| !a.contains_key(k)))
            .copied()
            .collect();
        return Err(Error::Data(format!(
            "reports cover different classes (unmatched: {missing:?})"
        )));
    }
    let rows: Vec<CompareRow> = a
        .iter()
        .zip(b.values())
        .map(|((&class, &a), &b)| {
            let (ra, rb) = (libm::round(a * 1000.0), libm::round(b * 1000.0));
            let winner = if ra == rb {
                Winner::Tie
            } else if ra > rb {
                Winner::A
            } else {
                Winner::B
            };
            CompareRow {
                class,
                a,
                b,
                delta: b - a,
                winner,
            }
        })
        .collect();
    let mean_a = mean(rows.iter().map(|r| r.a));
    let mean_b = mean(rows.iter().map(|r| r.b));
    Ok(Comparison {
        rows,
        mean_a,
        mean_b,
        mean_delta: mean_b - mean_a,
    })
}

pub fn compare(a: &EvalReport, b: &EvalReport) -> Result<Comparison> {
    compare_fdrs(&a.per_class_fdr, &b.per_class_fdr)
}
