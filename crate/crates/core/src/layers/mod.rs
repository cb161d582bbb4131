//! Forward and backward passes for every layer primitive.
//!
//! Each primitive is a pair of free functions over [`Tensor`](crate::Tensor)s:
//! a forward pass, and a backward pass that takes whatever the forward pass
//! cached plus the upstream gradient. [`Network`](crate::model::Network)
//! strings them together.

mod activation;
mod conv;
mod fuse;
mod linear;
mod norm;
mod pool;

pub use activation::{relu, relu_backward, softmax};
pub use conv::{
    conv2d, conv2d_backward, conv_fat_1d, conv_output_dim, conv_tall_1d, ConvGrads, ConvParams,
    Padding,
};
pub use fuse::{concat_channels, outer_product_fuse, outer_product_fuse_backward, split_channels};
pub use linear::{fully_connected, fully_connected_backward, FcGrads, FcParams};
pub use norm::{
    batch_norm2d, batch_norm2d_backward, BatchNormCache, BatchNormGrads, BatchNormParams, Mode,
};
pub use pool::{max_pool2d, max_pool2d_backward, max_pool2d_with_indices, pool_output_dim};

use rand::Rng;

use crate::{Result, Scalar, Tensor};

/// Uniform initialization in `±sqrt(1 / fan_in)`.
pub(crate) fn uniform_init<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    shape: &[usize],
    fan_in: usize,
) -> Result<Tensor<T>> {
    let bound = libm::sqrt(1.0 / fan_in as f64);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::of(rng.random_range(-bound..bound)))
        .collect();
    Tensor::from_vec(shape, data)
}
