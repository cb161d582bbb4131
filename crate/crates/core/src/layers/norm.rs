use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with batch statistics and update the running averages.
    Train,
    /// Normalize with the running averages.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T: Scalar = f32> {
    pub channels: usize,
    /// Learnable per-channel scale.
    pub alpha: Tensor<T>,
    /// Learnable per-channel shift.
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: T,
    pub epsilon: T,
}

impl<T: Scalar> BatchNormParams<T> {
    pub const DEFAULT_EPSILON: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.1;

    pub fn new(channels: usize) -> Result<Self> {
        Ok(BatchNormParams {
            channels,
            alpha: Tensor::ones(&[channels])?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::ones(&[channels])?,
            momentum: T::of(Self::DEFAULT_MOMENTUM),
            epsilon: T::of(Self::DEFAULT_EPSILON),
        })
    }

    pub fn param_count(&self) -> usize {
        self.alpha.len() + self.beta.len()
    }
}

/// What the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T: Scalar = f32> {
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mode: Mode,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T: Scalar = f32> {
    pub input: Tensor<T>,
    pub alpha: Tensor<T>,
    pub beta: Tensor<T>,
}

pub fn batch_norm2d<T: Scalar>(
    input: &Tensor<T>,
    params: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let s = input.shape4()?;
    if s.channels != params.channels {
        return Err(Error::layer(
            "batch_norm2d",
            format!("input has {} channels, layer expects {}", s.channels, params.channels),
        ));
    }
    if params.epsilon.is_nan() || params.epsilon <= T::zero() {
        return Err(Error::layer("batch_norm2d", "epsilon must be positive"));
    }
    let plane = s.height * s.width;
    let count = T::of((s.batch * plane) as f64);
    let x = input.data();
    let mut mean = vec![T::zero(); s.channels];
    let mut var = vec![T::zero(); s.channels];
    match mode {
        Mode::Train => {
            for c in 0..s.channels {
                let lanes = (0..s.batch).flat_map(|b| {
                    let base = (b * s.channels + c) * plane;
                    x[base..base + plane].iter().copied()
                });
                let m = lanes.clone().sum::<T>() / count;
                let v = lanes.map(|v| (v - m) * (v - m)).sum::<T>() / count;
                mean[c] = m;
                var[c] = v;
            }
            let mom = params.momentum;
            for c in 0..s.channels {
                let rm = &mut params.running_mean[c];
                *rm = (T::one() - mom) * *rm + mom * mean[c];
                let rv = &mut params.running_var[c];
                *rv = (T::one() - mom) * *rv + mom * var[c];
            }
        }
        Mode::Eval => {
            mean.copy_from_slice(params.running_mean.data());
            var.copy_from_slice(params.running_var.data());
        }
    }
    let inv_std: Vec<T> = var
        .iter()
        .map(|&v| T::one() / (v + params.epsilon).sqrt())
        .collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for b in 0..s.batch {
        for c in 0..s.channels {
            let base = (b * s.channels + c) * plane;
            let (a, be) = (params.alpha[c], params.beta[c]);
            for k in base..base + plane {
                let n = (x[k] - mean[c]) * inv_std[c];
                xhat[k] = n;
                out[k] = n * a + be;
            }
        }
    }
    Ok((
        Tensor::from_vec(input.shape(), out)?,
        BatchNormCache {
            normalized: Tensor::from_vec(input.shape(), xhat)?,
            inv_std,
            mode,
        },
    ))
}

pub fn batch_norm2d_backward<T: Scalar>(
    params: &BatchNormParams<T>,
    cache: &BatchNormCache<T>,
    grad_out: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    if grad_out.shape() != cache.normalized.shape() {
        return Err(Error::ShapeMismatch {
            left: grad_out.shape().into(),
            right: cache.normalized.shape().into(),
        });
    }
    let s = grad_out.shape4()?;
    let plane = s.height * s.width;
    let n = T::of((s.batch * plane) as f64);
    let (g, xh) = (grad_out.data(), cache.normalized.data());
    let mut dalpha = vec![T::zero(); s.channels];
    let mut dbeta = vec![T::zero(); s.channels];
    for b in 0..s.batch {
        for c in 0..s.channels {
            let base = (b * s.channels + c) * plane;
            for k in base..base + plane {
                dbeta[c] += g[k];
                dalpha[c] += g[k] * xh[k];
            }
        }
    }
    let mut dx = vec![T::zero(); g.len()];
    for b in 0..s.batch {
        for c in 0..s.channels {
            let base = (b * s.channels + c) * plane;
            let scale = params.alpha[c] * cache.inv_std[c];
            match cache.mode {
                // dx = alpha * inv_std / N * (N*dy - sum(dy) - xhat * sum(dy * xhat))
                Mode::Train => {
                    for k in base..base + plane {
                        dx[k] = scale / n * (n * g[k] - dbeta[c] - xh[k] * dalpha[c]);
                    }
                }
                Mode::Eval => {
                    for k in base..base + plane {
                        dx[k] = scale * g[k];
                    }
                }
            }
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::from_vec(grad_out.shape(), dx)?,
        alpha: Tensor::from_vec(&[s.channels], dalpha)?,
        beta: Tensor::from_vec(&[s.channels], dbeta)?,
    })
}
