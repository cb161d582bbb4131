use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result, Scalar, Tensor};

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Gradient through a ReLU given its forward output.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if output.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch {
            left: output.shape().into(),
            right: grad_out.shape().into(),
        });
    }
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(output.shape(), data)
}

/// Row-wise softmax of a `(B, C)` tensor, with max subtraction.
pub fn softmax<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let c = match *input.shape() {
        [_, c] => c,
        _ => {
            return Err(Error::layer(
                "softmax",
                format!("expected a (batch, classes) tensor, got {:?}", input.shape()),
            ))
        }
    };
    let mut out = Vec::with_capacity(input.len());
    for row in input.data().chunks(c) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        out.extend(row.iter().map(|&x| (x - m).exp()));
        let z: T = out[start..].iter().copied().sum();
        out[start..].iter_mut().for_each(|v| *v /= z);
    }
    Tensor::from_vec(input.shape(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_examples() {
        let x = Tensor::from_vec(&[3], alloc::vec![-1.0f32, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let pos = Tensor::from_vec(&[3], alloc::vec![0.0f32, 1.0, 2.5]).unwrap();
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn relu_pair_is_abs() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let x = Tensor::from_vec(&[64], (0..64).map(|_| rng.random_range(-3.0f32..3.0)).collect()).unwrap();
        let sum = relu(&x).add(&relu(&x.scale(-1.0))).unwrap();
        assert_eq!(sum, x.map(f32::abs));
    }

    #[test]
    fn softmax_examples() {
        let x = Tensor::from_vec(&[1, 2], alloc::vec![0.0f32, 0.0]).unwrap();
        assert_eq!(softmax(&x).unwrap().data(), &[0.5, 0.5]);

        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let x = Tensor::from_vec(&[8, 20], (0..160).map(|_| rng.random_range(-10.0f64..10.0)).collect()).unwrap();
        let p = softmax(&x).unwrap();
        let shifted = softmax(&x.add_scalar(123.0)).unwrap();
        for (a, b) in p.data().iter().zip(shifted.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        for row in p.data().chunks(20) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn softmax_handles_large_logits() {
        let x = Tensor::from_vec(&[1, 3], alloc::vec![1000.0f32, 1000.0, -1000.0]).unwrap();
        let p = softmax(&x).unwrap();
        assert!(p.data().iter().all(|v| v.is_finite()));
        assert!((p[0] - 0.5).abs() < 1e-6);
    }
}
