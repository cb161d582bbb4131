use alloc::format;
use alloc::vec;
use rand::Rng;

use super::uniform_init;
use crate::{Error, Result, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct FcParams<T: Scalar = f32> {
    pub in_features: usize,
    pub out_features: usize,
    /// `(out_features, in_features)`; row `z` is the weight vector of neuron `z`.
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> FcParams<T> {
    pub fn zeros(in_features: usize, out_features: usize) -> Result<Self> {
        Ok(FcParams {
            in_features,
            out_features,
            weights: Tensor::zeros(&[out_features, in_features])?,
            bias: Tensor::zeros(&[out_features])?,
        })
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, in_features: usize, out_features: usize) -> Result<Self> {
        Ok(FcParams {
            in_features,
            out_features,
            weights: uniform_init(rng, &[out_features, in_features], in_features)?,
            bias: uniform_init(rng, &[out_features], in_features)?,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

fn batch_of<T: Scalar>(input: &Tensor<T>, p: &FcParams<T>) -> Result<usize> {
    match *input.shape() {
        [b, f] if f == p.in_features => Ok(b),
        _ => Err(Error::layer(
            "fully_connected",
            format!(
                "input {:?} does not have {} features per row",
                input.shape(),
                p.in_features
            ),
        )),
    }
}

/// `out[b][z] = bias[z] + input[b] . weights[z]`
pub fn fully_connected<T: Scalar>(input: &Tensor<T>, p: &FcParams<T>) -> Result<Tensor<T>> {
    let batch = batch_of(input, p)?;
    let (zeta, zn) = (p.in_features, p.out_features);
    let (x, w) = (input.data(), p.weights.data());
    let mut out = vec![T::zero(); batch * zn];
    for b in 0..batch {
        let row = &x[b * zeta..(b + 1) * zeta];
        for z in 0..zn {
            let wz = &w[z * zeta..(z + 1) * zeta];
            let mut acc = T::zero();
            for (&a, &c) in row.iter().zip(wz) {
                acc += a * c;
            }
            out[b * zn + z] = p.bias[z] + acc;
        }
    }
    Tensor::from_vec(&[batch, zn], out)
}

#[derive(Debug, Clone)]
pub struct FcGrads<T: Scalar = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn fully_connected_backward<T: Scalar>(
    input: &Tensor<T>,
    p: &FcParams<T>,
    grad_out: &Tensor<T>,
) -> Result<FcGrads<T>> {
    let batch = batch_of(input, p)?;
    let (zeta, zn) = (p.in_features, p.out_features);
    if grad_out.shape() != [batch, zn] {
        return Err(Error::ShapeMismatch {
            left: grad_out.shape().into(),
            right: vec![batch, zn],
        });
    }
    let (x, w, g) = (input.data(), p.weights.data(), grad_out.data());
    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); w.len()];
    let mut gb = vec![T::zero(); zn];
    for b in 0..batch {
        let row = &x[b * zeta..(b + 1) * zeta];
        let grow = &mut gx[b * zeta..(b + 1) * zeta];
        for z in 0..zn {
            let gv = g[b * zn + z];
            if gv == T::zero() {
                continue;
            }
            gb[z] += gv;
            let wz = &w[z * zeta..(z + 1) * zeta];
            let gwz = &mut gw[z * zeta..(z + 1) * zeta];
            for k in 0..zeta {
                gwz[k] += gv * row[k];
                grow[k] += gv * wz[k];
            }
        }
    }
    Ok(FcGrads {
        input: Tensor::from_vec(input.shape(), gx)?,
        weights: Tensor::from_vec(p.weights.shape(), gw)?,
        bias: Tensor::from_vec(&[zn], gb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weights() {
        let mut p = FcParams::<f32>::zeros(3, 3).unwrap();
        for i in 0..3 {
            p.weights[i * 4] = 1.0;
        }
        let x = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap();
        assert_eq!(fully_connected(&x, &p).unwrap(), x);
    }

    #[test]
    fn single_neuron() {
        let p = FcParams {
            in_features: 2,
            out_features: 1,
            weights: Tensor::from_vec(&[1, 2], vec![2.0f32, 3.0]).unwrap(),
            bias: Tensor::from_vec(&[1], vec![1.0]).unwrap(),
        };
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        assert_eq!(fully_connected(&x, &p).unwrap().data(), &[6.0]);
    }

    #[test]
    fn matches_matmul_plus_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut ints = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.random_range(-6i32..=6) as f32).collect() };
        let x = Tensor::from_vec(&[4, 10], ints(40)).unwrap();
        let p = FcParams {
            in_features: 10,
            out_features: 3,
            weights: Tensor::from_vec(&[3, 10], ints(30)).unwrap(),
            bias: Tensor::from_vec(&[3], ints(3)).unwrap(),
        };
        let mm = x.matmul(&p.weights.transpose2().unwrap()).unwrap();
        let mut expected = mm.clone();
        for b in 0..4 {
            for z in 0..3 {
                expected[b * 3 + z] += p.bias[z];
            }
        }
        assert_eq!(fully_connected(&x, &p).unwrap(), expected);
    }

    #[test]
    fn feature_mismatch() {
        let p = FcParams::<f32>::zeros(3, 2).unwrap();
        let x = Tensor::<f32>::zeros(&[2, 4]).unwrap();
        assert!(fully_connected(&x, &p).is_err());
    }

    #[test]
    fn squared_loss_gradient_by_hand() {
        // L = 0.5 * (w.x + b - t)^2  =>  dL/dw = (y - t) x,  dL/db = y - t
        let p = FcParams {
            in_features: 2,
            out_features: 1,
            weights: Tensor::from_vec(&[1, 2], vec![0.5f64, -1.5]).unwrap(),
            bias: Tensor::from_vec(&[1], vec![0.25]).unwrap(),
        };
        let x = Tensor::from_vec(&[1, 2], vec![2.0, 3.0]).unwrap();
        let y = fully_connected(&x, &p).unwrap()[0];
        let target = 1.0;
        let g = Tensor::from_vec(&[1, 1], vec![y - target]).unwrap();
        let grads = fully_connected_backward(&x, &p, &g).unwrap();
        let r = y - target;
        assert!((grads.weights[0] - r * 2.0).abs() < 1e-6);
        assert!((grads.weights[1] - r * 3.0).abs() < 1e-6);
        assert!((grads.bias[0] - r).abs() < 1e-6);
        assert!((grads.input[0] - r * 0.5).abs() < 1e-6);
    }
}
