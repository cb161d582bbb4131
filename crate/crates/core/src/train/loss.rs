//! Cross-entropy objective.

use alloc::vec::Vec;

use crate::layers::softmax;
use crate::{Error, Result, Scalar, Tensor};

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::ShapeMismatch {
            left: alloc::vec![labels.len()],
            right: alloc::vec![rows],
        });
    }
    match labels.iter().find(|&&l| l >= classes) {
        Some(&label) => Err(Error::LabelOutOfRange { label, classes }),
        None => Ok(()),
    }
}

fn rows_of<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize)> {
    match *x.shape() {
        [b, c] if b > 0 => Ok((b, c)),
        _ => Err(Error::InvalidShape {
            shape: x.shape().into(),
            reason: "expected (batch, classes)".into(),
        }),
    }
}

/// Mean negative log-likelihood of the true labels under `probs`.
pub fn cross_entropy_loss<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<T> {
    let (b, c) = rows_of(probs)?;
    check_labels(labels, b, c)?;
    let tol = T::of(1e-5);
    let mut total = T::zero();
    for (row, &label) in probs.data().chunks(c).zip(labels) {
        let s: T = row.iter().copied().sum();
        if (s - T::one()).abs() > tol {
            return Err(Error::Data(alloc::format!(
                "probability row sums to {s}, expected 1"
            )));
        }
        total -= row[label].max(T::min_positive_value()).ln();
    }
    Ok(total / T::of(b as f64))
}

/// Softmax followed by the mean NLL, computed from logits. Returns the loss,
/// the gradient with respect to the logits, `(probs - onehot) / batch`, and
/// the probabilities.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>, Tensor<T>)> {
    let (b, c) = rows_of(logits)?;
    check_labels(labels, b, c)?;
    let probs = softmax(logits)?;
    let m = T::of(b as f64);
    let mut loss = T::zero();
    let mut grad: Vec<T> = probs.data().iter().map(|&p| p / m).collect();
    for (r, &label) in labels.iter().enumerate() {
        let row = &logits.data()[r * c..(r + 1) * c];
        // log-sum-exp keeps the loss finite for confident wrong predictions
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
        loss += lse - row[label];
        grad[r * c + label] -= T::one() / m;
    }
    Ok((loss / m, Tensor::from_vec(&[b, c], grad)?, probs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let p = Tensor::from_vec(&[2, 3], alloc::vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(cross_entropy_loss(&p, &[0, 2]).unwrap(), 0.0f32);
    }

    #[test]
    fn uniform_over_twenty() {
        let p = Tensor::<f64>::full(&[4, 20], 0.05).unwrap();
        let l = cross_entropy_loss(&p, &[0, 5, 10, 19]).unwrap();
        assert!((l - libm::log(20.0)).abs() < 1e-12);
        assert!((l - 2.9957).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_input() {
        let p = Tensor::<f64>::full(&[1, 2], 0.5).unwrap();
        assert_eq!(
            cross_entropy_loss(&p, &[2]),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        );
        let q = Tensor::<f64>::full(&[1, 2], 0.4).unwrap();
        assert!(cross_entropy_loss(&q, &[0]).is_err());
    }

    #[test]
    fn fused_matches_composed() {
        let z = Tensor::from_vec(&[2, 3], alloc::vec![0.5f64, -1.0, 2.0, 0.0, 0.3, -0.2]).unwrap();
        let (l, _, probs) = softmax_cross_entropy(&z, &[2, 0]).unwrap();
        let composed = cross_entropy_loss(&probs, &[2, 0]).unwrap();
        assert!((l - composed).abs() < 1e-12);
    }

    #[test]
    fn large_logits_stay_finite() {
        let z = Tensor::from_vec(&[1, 2], alloc::vec![1000.0f32, -1000.0]).unwrap();
        let (l, g, _) = softmax_cross_entropy(&z, &[1]).unwrap();
        assert!(l.is_finite() && (l - 2000.0).abs() < 1e-2);
        assert!(g.data().iter().all(|v| v.is_finite()));
    }
}
