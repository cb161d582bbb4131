use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, Scalar, Tensor};

/// Output size of valid pooling; trailing partial windows are dropped.
pub fn pool_output_dim(input: usize, window: usize, stride: usize) -> Option<usize> {
    if window == 0 || stride == 0 || window > input {
        return None;
    }
    Some((input - window) / stride + 1)
}

pub fn max_pool2d<T: Scalar>(input: &Tensor<T>, window: usize, stride: usize) -> Result<Tensor<T>> {
    max_pool2d_with_indices(input, window, stride).map(|(y, _)| y)
}

/// Max pooling that also returns, per output element, the flat input offset
/// of the winning element. Ties go to the first maximum in row-major order.
pub fn max_pool2d_with_indices<T: Scalar>(
    input: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let s = input.shape4()?;
    let bad = || {
        Error::layer(
            "max_pool2d",
            format!(
                "window {window} / stride {stride} invalid for {}x{} input",
                s.height, s.width
            ),
        )
    };
    let oh = pool_output_dim(s.height, window, stride).ok_or_else(bad)?;
    let ow = pool_output_dim(s.width, window, stride).ok_or_else(bad)?;
    let x = input.data();
    let plane = s.height * s.width;
    let n_out = s.batch * s.channels * oh * ow;
    let mut out = Vec::with_capacity(n_out);
    let mut idx = Vec::with_capacity(n_out);
    for bc in 0..s.batch * s.channels {
        let base = bc * plane;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * s.width + ox * stride;
                for ky in 0..window {
                    for kx in 0..window {
                        let k = base + (oy * stride + ky) * s.width + ox * stride + kx;
                        if x[k] > x[best] {
                            best = k;
                        }
                    }
                }
                out.push(x[best]);
                idx.push(best);
            }
        }
    }
    Ok((Tensor::from_vec(&[s.batch, s.channels, oh, ow], out)?, idx))
}

pub fn max_pool2d_backward<T: Scalar>(
    input_shape: &[usize],
    indices: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if indices.len() != grad_out.len() {
        return Err(Error::layer("max_pool2d", "gradient does not match the recorded pooling"));
    }
    let n: usize = input_shape.iter().product();
    let mut gx = vec![T::zero(); n];
    for (&k, &g) in indices.iter().zip(grad_out.data()) {
        gx[k] += g;
    }
    Tensor::from_vec(input_shape, gx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_by_two() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(max_pool2d(&x, 2, 2).unwrap().data(), &[4.0]);
    }

    #[test]
    fn halves_window_images() {
        let x = Tensor::<f32>::zeros(&[1, 3, 20, 50]).unwrap();
        assert_eq!(max_pool2d(&x, 2, 2).unwrap().shape(), &[1, 3, 10, 25]);
        // odd sizes drop the trailing partial window
        let x = Tensor::<f32>::zeros(&[1, 1, 5, 7]).unwrap();
        assert_eq!(max_pool2d(&x, 2, 2).unwrap().shape(), &[1, 1, 2, 3]);
    }

    #[test]
    fn matches_region_max_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let data: Vec<f32> = (0..2 * 6 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Tensor::from_vec(&[1, 2, 6, 6], data).unwrap();
        let y = max_pool2d(&x, 2, 2).unwrap();
        for c in 0..2 {
            for oy in 0..3 {
                for ox in 0..3 {
                    let mut m = f32::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            m = m.max(x.get(&[0, c, 2 * oy + dy, 2 * ox + dx]).unwrap());
                        }
                    }
                    assert_eq!(y.get(&[0, c, oy, ox]).unwrap(), m);
                }
            }
        }
    }

    #[test]
    fn ties_route_gradient_to_first_maximum() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![5.0f32, 5.0, 5.0, 1.0]).unwrap();
        let (_, idx) = max_pool2d_with_indices(&x, 2, 2).unwrap();
        assert_eq!(idx, vec![0]);
        let g = Tensor::from_vec(&[1, 1, 1, 1], vec![2.0f32]).unwrap();
        let gx = max_pool2d_backward(x.shape(), &idx, &g).unwrap();
        assert_eq!(gx.data(), &[2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn invalid_geometry() {
        let x = Tensor::<f32>::zeros(&[1, 1, 2, 2]).unwrap();
        assert!(max_pool2d(&x, 0, 2).is_err());
        assert!(max_pool2d(&x, 2, 0).is_err());
        assert!(max_pool2d(&x, 3, 1).is_err());
    }
}
