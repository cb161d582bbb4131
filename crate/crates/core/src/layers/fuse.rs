use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, Scalar, Tensor};

/// Per-channel outer product of a column map `(B, C, H, 1)` and a row map
/// `(B, C, 1, W)`: `out[b][c][i][j] = phi[b][c][i] * omega[b][c][j]`.
pub fn outer_product_fuse<T: Scalar>(phi: &Tensor<T>, omega: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = fuse_dims(phi, omega)?;
    let (p, o) = (phi.data(), omega.data());
    let mut out = Vec::with_capacity(b * c * h * w);
    for bc in 0..b * c {
        let col = &p[bc * h..(bc + 1) * h];
        let row = &o[bc * w..(bc + 1) * w];
        for &pi in col {
            out.extend(row.iter().map(|&oj| pi * oj));
        }
    }
    Tensor::from_vec(&[b, c, h, w], out)
}

/// Returns `(d_phi, d_omega)` by the bilinear product rule.
pub fn outer_product_fuse_backward<T: Scalar>(
    phi: &Tensor<T>,
    omega: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (b, c, h, w) = fuse_dims(phi, omega)?;
    if grad_out.shape() != [b, c, h, w] {
        return Err(Error::ShapeMismatch {
            left: grad_out.shape().into(),
            right: vec![b, c, h, w],
        });
    }
    let (p, o, g) = (phi.data(), omega.data(), grad_out.data());
    let mut dp = vec![T::zero(); p.len()];
    let mut dom = vec![T::zero(); o.len()];
    for bc in 0..b * c {
        let plane = &g[bc * h * w..(bc + 1) * h * w];
        for i in 0..h {
            let grow = &plane[i * w..(i + 1) * w];
            let mut acc = T::zero();
            for j in 0..w {
                acc += grow[j] * o[bc * w + j];
                dom[bc * w + j] += grow[j] * p[bc * h + i];
            }
            dp[bc * h + i] = acc;
        }
    }
    Ok((
        Tensor::from_vec(phi.shape(), dp)?,
        Tensor::from_vec(omega.shape(), dom)?,
    ))
}

fn fuse_dims<T: Scalar>(phi: &Tensor<T>, omega: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    let ps = phi.shape4()?;
    let os = omega.shape4()?;
    if ps.batch != os.batch || ps.channels != os.channels {
        return Err(Error::layer(
            "outer_product_fuse",
            format!(
                "operands disagree on batch/channels: {:?} vs {:?}",
                phi.shape(),
                omega.shape()
            ),
        ));
    }
    if ps.width != 1 || os.height != 1 {
        return Err(Error::layer(
            "outer_product_fuse",
            format!(
                "expected a (B,C,H,1) column map and a (B,C,1,W) row map, got {:?} and {:?}",
                phi.shape(),
                omega.shape()
            ),
        ));
    }
    Ok((ps.batch, ps.channels, ps.height, os.width))
}

/// Channel-wise concatenation of rank-4 maps with identical batch and
/// spatial dims.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::layer("concat", "nothing to concatenate"))?
        .shape4()?;
    let mut channels = 0;
    for p in parts {
        let s = p.shape4()?;
        if s.batch != first.batch || s.height != first.height || s.width != first.width {
            return Err(Error::layer(
                "concat",
                format!("spatial/batch dims differ: {:?} vs {:?}", first.dims(), s.dims()),
            ));
        }
        channels += s.channels;
    }
    let plane = first.height * first.width;
    let mut out = Vec::with_capacity(first.batch * channels * plane);
    for b in 0..first.batch {
        for p in parts {
            let per = p.shape()[1] * plane;
            out.extend_from_slice(&p.data()[b * per..(b + 1) * per]);
        }
    }
    Tensor::from_vec(&[first.batch, channels, first.height, first.width], out)
}

/// Inverse of [`concat_channels`]: splits a gradient by channel counts.
pub fn split_channels<T: Scalar>(x: &Tensor<T>, channels: &[usize]) -> Result<Vec<Tensor<T>>> {
    let s = x.shape4()?;
    if channels.iter().sum::<usize>() != s.channels {
        return Err(Error::layer("concat", "channel split does not cover the tensor"));
    }
    let plane = s.height * s.width;
    let mut parts: Vec<Vec<T>> = channels
        .iter()
        .map(|&c| Vec::with_capacity(s.batch * c * plane))
        .collect();
    for b in 0..s.batch {
        let mut start = b * s.channels * plane;
        for (part, &c) in parts.iter_mut().zip(channels) {
            part.extend_from_slice(&x.data()[start..start + c * plane]);
            start += c * plane;
        }
    }
    parts
        .into_iter()
        .zip(channels)
        .map(|(d, &c)| Tensor::from_vec(&[s.batch, c, s.height, s.width], d))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn column_times_row() {
        let phi = Tensor::from_vec(&[1, 1, 3, 1], vec![1.0f32, 2.0, 3.0]).unwrap();
        let omega = Tensor::from_vec(&[1, 1, 1, 2], vec![4.0f32, 5.0]).unwrap();
        let y = outer_product_fuse(&phi, &omega).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 2]);
        assert_eq!(y.data(), &[4.0, 5.0, 8.0, 10.0, 12.0, 15.0]);
    }

    #[test]
    fn unit_row_repeats_column() {
        let phi = Tensor::from_vec(&[1, 2, 2, 1], vec![1.5f32, -2.0, 0.25, 7.0]).unwrap();
        let omega = Tensor::ones(&[1, 2, 1, 4]).unwrap();
        let y = outer_product_fuse(&phi, &omega).unwrap();
        for (row, &p) in y.data().chunks(4).zip(phi.data()) {
            assert!(row.iter().all(|&v| v == p));
        }
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (c, h, w) = (4, 5, 7);
        let phi: Vec<f32> = (0..c * h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let omega: Vec<f32> = (0..c * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = outer_product_fuse(
            &Tensor::from_vec(&[1, c, h, 1], phi.clone()).unwrap(),
            &Tensor::from_vec(&[1, c, 1, w], omega.clone()).unwrap(),
        )
        .unwrap();
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    assert_eq!(y.get(&[0, ch, i, j]).unwrap(), phi[ch * h + i] * omega[ch * w + j]);
                }
            }
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let phi = Tensor::<f32>::zeros(&[1, 2, 3, 1]).unwrap();
        let omega = Tensor::<f32>::zeros(&[1, 3, 1, 4]).unwrap();
        assert!(outer_product_fuse(&phi, &omega).is_err());
        let not_col = Tensor::<f32>::zeros(&[1, 2, 3, 2]).unwrap();
        let omega = Tensor::<f32>::zeros(&[1, 2, 1, 4]).unwrap();
        assert!(outer_product_fuse(&not_col, &omega).is_err());
    }

    #[test]
    fn row_sums_are_phi_times_omega_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let phi: Vec<f64> = (0..2 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let omega: Vec<f64> = (0..2 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = outer_product_fuse(
            &Tensor::from_vec(&[1, 2, 3, 1], phi.clone()).unwrap(),
            &Tensor::from_vec(&[1, 2, 1, 5], omega.clone()).unwrap(),
        )
        .unwrap();
        let summed = y.reduce(3, crate::tensor::ReduceOp::Sum).unwrap();
        for c in 0..2 {
            let total: f64 = omega[c * 5..(c + 1) * 5].iter().sum();
            for i in 0..3 {
                let got = summed.get(&[0, c, i]).unwrap();
                assert!((got - phi[c * 3 + i] * total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concat_then_split_restores_parts() {
        let a = Tensor::from_vec(&[2, 1, 1, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 2, 1, 2], (10..18).map(|v| v as f32).collect()).unwrap();
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[2, 3, 1, 2]);
        assert_eq!(&cat.data()[..6], &[1.0, 2.0, 10.0, 11.0, 12.0, 13.0]);
        let parts = split_channels(&cat, &[1, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
        let c = Tensor::<f32>::zeros(&[2, 1, 2, 2]).unwrap();
        assert!(concat_channels(&[&a, &c]).is_err());
    }
}
