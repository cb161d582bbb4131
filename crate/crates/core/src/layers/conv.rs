use alloc::format;
use alloc::vec;
use rand::Rng;

use super::uniform_init;
use crate::{Error, Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// No padding; output is `floor((input - kernel) / stride) + 1`.
    Valid,
    /// Zero padding so the output is `ceil(input / stride)`. When the total
    /// padding is odd the extra row/column goes on the bottom/right.
    Same,
}

/// Output size and leading padding along one spatial axis, or `None` if the
/// kernel does not fit.
pub fn conv_output_dim(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Option<(usize, usize)> {
    if input == 0 || kernel == 0 || stride == 0 {
        return None;
    }
    match padding {
        Padding::Valid => (kernel <= input).then(|| ((input - kernel) / stride + 1, 0)),
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Some((out, total / 2))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T: Scalar = f32> {
    pub kernel_height: usize,
    pub kernel_width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub padding: Padding,
    /// `(out_channels, in_channels, kernel_height, kernel_width)`
    pub weights: Tensor<T>,
    /// `(out_channels)`
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn zeros(
        kernel: (usize, usize),
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::layer("conv2d", "stride must be >= 1"));
        }
        Ok(ConvParams {
            kernel_height: kernel.0,
            kernel_width: kernel.1,
            in_channels,
            out_channels,
            stride,
            padding,
            weights: Tensor::zeros(&[out_channels, in_channels, kernel.0, kernel.1])?,
            bias: Tensor::zeros(&[out_channels])?,
        })
    }

    pub fn init<R: Rng + ?Sized>(
        rng: &mut R,
        kernel: (usize, usize),
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        let mut p = Self::zeros(kernel, in_channels, out_channels, stride, padding)?;
        let fan_in = in_channels * kernel.0 * kernel.1;
        p.weights = uniform_init(rng, p.weights.shape(), fan_in)?;
        p.bias = uniform_init(rng, p.bias.shape(), fan_in)?;
        Ok(p)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn check(&self) -> Result<()> {
        let expect = [
            self.out_channels,
            self.in_channels,
            self.kernel_height,
            self.kernel_width,
        ];
        if self.weights.shape() != expect || self.bias.shape() != [self.out_channels] {
            return Err(Error::layer(
                "conv2d",
                format!(
                    "parameter shapes {:?}/{:?} disagree with geometry {:?}",
                    self.weights.shape(),
                    self.bias.shape(),
                    expect
                ),
            ));
        }
        Ok(())
    }
}

struct Geometry {
    batch: usize,
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    pad_top: usize,
    pad_left: usize,
}

fn geometry<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Geometry> {
    p.check()?;
    let s = input.shape4()?;
    if s.channels != p.in_channels {
        return Err(Error::layer(
            "conv2d",
            format!(
                "input has {} channels, kernel expects {}",
                s.channels, p.in_channels
            ),
        ));
    }
    let too_big = || {
        Error::layer(
            "conv2d",
            format!(
                "kernel {}x{} larger than input {}x{}",
                p.kernel_height, p.kernel_width, s.height, s.width
            ),
        )
    };
    let (out_h, pad_top) =
        conv_output_dim(s.height, p.kernel_height, p.stride, p.padding).ok_or_else(too_big)?;
    let (out_w, pad_left) =
        conv_output_dim(s.width, p.kernel_width, p.stride, p.padding).ok_or_else(too_big)?;
    Ok(Geometry {
        batch: s.batch,
        in_c: s.channels,
        in_h: s.height,
        in_w: s.width,
        out_h,
        out_w,
        pad_top,
        pad_left,
    })
}

/// Range of output indices whose tap `k` lands inside `[0, len)`.
fn valid_range(out: usize, len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    // input index = o * stride + k - pad
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let hi = if len + pad > k {
        ((len - 1 + pad - k) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

pub fn conv2d<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    let g = geometry(input, p)?;
    let (kh, kw, s) = (p.kernel_height, p.kernel_width, p.stride);
    let co = p.out_channels;
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let x = input.data();
    let w = p.weights.data();
    let mut out = vec![T::zero(); g.batch * co * out_plane];
    for b in 0..g.batch {
        for o in 0..co {
            let dst = &mut out[(b * co + o) * out_plane..(b * co + o + 1) * out_plane];
            dst.iter_mut().for_each(|v| *v = p.bias[o]);
            for i in 0..g.in_c {
                let src = &x[(b * g.in_c + i) * in_plane..(b * g.in_c + i + 1) * in_plane];
                for ky in 0..kh {
                    let (y0, y1) = valid_range(g.out_h, g.in_h, ky, s, g.pad_top);
                    for kx in 0..kw {
                        let wv = w[((o * g.in_c + i) * kh + ky) * kw + kx];
                        let (x0, x1) = valid_range(g.out_w, g.in_w, kx, s, g.pad_left);
                        for oy in y0..y1 {
                            let iy = oy * s + ky - g.pad_top;
                            let row = &src[iy * g.in_w..(iy + 1) * g.in_w];
                            let orow = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                            for ox in x0..x1 {
                                orow[ox] += wv * row[ox * s + kx - g.pad_left];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[g.batch, co, g.out_h, g.out_w], out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T: Scalar = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let g = geometry(input, p)?;
    let (kh, kw, s) = (p.kernel_height, p.kernel_width, p.stride);
    let co = p.out_channels;
    if grad_out.shape() != [g.batch, co, g.out_h, g.out_w] {
        return Err(Error::ShapeMismatch {
            left: grad_out.shape().into(),
            right: vec![g.batch, co, g.out_h, g.out_w],
        });
    }
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let x = input.data();
    let w = p.weights.data();
    let gy = grad_out.data();
    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); w.len()];
    let mut gb = vec![T::zero(); co];
    for b in 0..g.batch {
        for o in 0..co {
            let go = &gy[(b * co + o) * out_plane..(b * co + o + 1) * out_plane];
            gb[o] += go.iter().copied().sum();
            for i in 0..g.in_c {
                let base = (b * g.in_c + i) * in_plane;
                for ky in 0..kh {
                    let (y0, y1) = valid_range(g.out_h, g.in_h, ky, s, g.pad_top);
                    for kx in 0..kw {
                        let widx = ((o * g.in_c + i) * kh + ky) * kw + kx;
                        let wv = w[widx];
                        let (x0, x1) = valid_range(g.out_w, g.in_w, kx, s, g.pad_left);
                        let mut acc = T::zero();
                        for oy in y0..y1 {
                            let iy = oy * s + ky - g.pad_top;
                            for ox in x0..x1 {
                                let ix = ox * s + kx - g.pad_left;
                                let gv = go[oy * g.out_w + ox];
                                let xi = base + iy * g.in_w + ix;
                                acc += gv * x[xi];
                                gx[xi] += gv * wv;
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::from_vec(input.shape(), gx)?,
        weights: Tensor::from_vec(p.weights.shape(), gw)?,
        bias: Tensor::from_vec(&[co], gb)?,
    })
}

/// Width-spanning ("fat") convolution: a `1 x W` kernel over a `H x W` input,
/// giving one response per row.
pub fn conv_fat_1d<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    let s = input.shape4()?;
    if p.kernel_height != 1 || p.kernel_width != s.width {
        return Err(Error::layer(
            "conv_fat_1d",
            format!(
                "kernel {}x{} must be 1x{} to span the input width",
                p.kernel_height, p.kernel_width, s.width
            ),
        ));
    }
    if p.padding != Padding::Valid || p.stride != 1 {
        return Err(Error::layer("conv_fat_1d", "full-span kernels take no padding or stride"));
    }
    conv2d(input, p)
}

/// Height-spanning ("tall") convolution: an `H x 1` kernel over a `H x W`
/// input, giving one response per column.
pub fn conv_tall_1d<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    let s = input.shape4()?;
    if p.kernel_width != 1 || p.kernel_height != s.height {
        return Err(Error::layer(
            "conv_tall_1d",
            format!(
                "kernel {}x{} must be {}x1 to span the input height",
                p.kernel_height, p.kernel_width, s.height
            ),
        ));
    }
    if p.padding != Padding::Valid || p.stride != 1 {
        return Err(Error::layer("conv_tall_1d", "full-span kernels take no padding or stride"));
    }
    conv2d(input, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn int_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f32> {
        let n = shape.iter().product();
        let d = (0..n).map(|_| rng.random_range(-5i32..=5) as f32).collect();
        Tensor::from_vec(shape, d).unwrap()
    }

    fn int_params(
        rng: &mut ChaCha8Rng,
        k: (usize, usize),
        ci: usize,
        co: usize,
        stride: usize,
        pad: Padding,
    ) -> ConvParams<f32> {
        let mut p = ConvParams::zeros(k, ci, co, stride, pad).unwrap();
        p.weights = int_tensor(rng, p.weights.shape());
        p.bias = int_tensor(rng, &[co]);
        p
    }

    /// Direct convolution with explicit zero padding.
    fn naive(x: &Tensor<f32>, p: &ConvParams<f32>) -> Tensor<f32> {
        let s = x.shape4().unwrap();
        let (oh, pt) = conv_output_dim(s.height, p.kernel_height, p.stride, p.padding).unwrap();
        let (ow, pl) = conv_output_dim(s.width, p.kernel_width, p.stride, p.padding).unwrap();
        let mut out = Vec::new();
        for b in 0..s.batch {
            for o in 0..p.out_channels {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = p.bias[o];
                        for i in 0..s.channels {
                            for ky in 0..p.kernel_height {
                                for kx in 0..p.kernel_width {
                                    let iy = (y * p.stride + ky) as isize - pt as isize;
                                    let ix = (xx * p.stride + kx) as isize - pl as isize;
                                    if iy < 0 || ix < 0 || iy >= s.height as isize || ix >= s.width as isize {
                                        continue;
                                    }
                                    acc += x.get(&[b, i, iy as usize, ix as usize]).unwrap()
                                        * p.weights.get(&[o, i, ky, kx]).unwrap();
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        Tensor::from_vec(&[s.batch, p.out_channels, oh, ow], out).unwrap()
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let mut p = ConvParams::<f32>::zeros((3, 3), 1, 1, 1, Padding::Same).unwrap();
        p.bias[0] = 5.0;
        let x = Tensor::full(&[1, 1, 4, 4], 3.0).unwrap();
        let y = conv2d(&x, &p).unwrap();
        assert!(y.data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn identity_kernel_same_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ConvParams::<f32>::zeros((3, 3), 1, 1, 1, Padding::Same).unwrap();
        p.weights[4] = 1.0;
        let x = int_tensor(&mut rng, &[2, 1, 5, 6]);
        assert_eq!(conv2d(&x, &p).unwrap(), x);
    }

    #[test]
    fn valid_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = int_tensor(&mut rng, &[1, 4, 6, 6]);
        let p = int_params(&mut rng, (3, 3), 4, 2, 1, Padding::Valid);
        let y = conv2d(&x, &p).unwrap();
        assert_eq!(y.shape(), &[1, 2, 4, 4]);
        assert_eq!(y, naive(&x, &p));
    }

    #[test]
    fn strided_same_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = int_tensor(&mut rng, &[2, 3, 10, 25]);
        let p = int_params(&mut rng, (3, 3), 3, 4, 3, Padding::Same);
        let y = conv2d(&x, &p).unwrap();
        assert_eq!(y.shape(), &[2, 4, 4, 9]);
        assert_eq!(y, naive(&x, &p));
    }

    #[test]
    fn same_padding_keeps_image_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = int_tensor(&mut rng, &[1, 1, 20, 50]);
        let p = int_params(&mut rng, (3, 3), 1, 2, 1, Padding::Same);
        assert_eq!(conv2d(&x, &p).unwrap().shape(), &[1, 2, 20, 50]);
    }

    #[test]
    fn output_dim_rules() {
        assert_eq!(conv_output_dim(10, 3, 3, Padding::Same), Some((4, 1)));
        assert_eq!(conv_output_dim(25, 3, 3, Padding::Same), Some((9, 1)));
        assert_eq!(conv_output_dim(20, 3, 1, Padding::Same), Some((20, 1)));
        assert_eq!(conv_output_dim(4, 2, 1, Padding::Same), Some((4, 0)));
        assert_eq!(conv_output_dim(7, 3, 2, Padding::Valid), Some((3, 0)));
        assert_eq!(conv_output_dim(2, 3, 1, Padding::Valid), None);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]).unwrap();
        let p = ConvParams::<f32>::zeros((3, 3), 1, 1, 1, Padding::Same).unwrap();
        assert!(matches!(conv2d(&x, &p), Err(Error::Layer { .. })));
        let p = ConvParams::<f32>::zeros((5, 5), 2, 1, 1, Padding::Valid).unwrap();
        assert!(conv2d(&x, &p).is_err());
    }

    #[test]
    fn fat_kernel_sums_rows() {
        let x = Tensor::from_vec(&[1, 1, 3, 3], (1..=9).map(|v| v as f32).collect()).unwrap();
        let mut p = ConvParams::<f32>::zeros((1, 3), 1, 1, 1, Padding::Valid).unwrap();
        p.weights.fill(1.0);
        let y = conv_fat_1d(&x, &p).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 1]);
        assert_eq!(y.data(), &[6.0, 15.0, 24.0]);
    }

    #[test]
    fn tall_kernel_sums_columns() {
        let x = Tensor::from_vec(&[1, 1, 3, 3], (1..=9).map(|v| v as f32).collect()).unwrap();
        let mut p = ConvParams::<f32>::zeros((3, 1), 1, 1, 1, Padding::Valid).unwrap();
        p.weights.fill(1.0);
        let y = conv_tall_1d(&x, &p).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 3]);
        assert_eq!(y.data(), &[12.0, 15.0, 18.0]);
    }

    #[test]
    fn full_span_shapes_on_window_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = int_tensor(&mut rng, &[2, 1, 20, 50]);
        let fat = int_params(&mut rng, (1, 50), 1, 16, 1, Padding::Valid);
        let tall = int_params(&mut rng, (20, 1), 1, 16, 1, Padding::Valid);
        assert_eq!(conv_fat_1d(&x, &fat).unwrap().shape(), &[2, 16, 20, 1]);
        assert_eq!(conv_tall_1d(&x, &tall).unwrap().shape(), &[2, 16, 1, 50]);
        assert_eq!(conv_fat_1d(&x, &fat).unwrap(), conv2d(&x, &fat).unwrap());
        assert_eq!(conv_tall_1d(&x, &tall).unwrap(), conv2d(&x, &tall).unwrap());
    }

    #[test]
    fn full_span_contract_enforced() {
        let x = Tensor::<f32>::zeros(&[1, 1, 20, 50]).unwrap();
        let short = ConvParams::<f32>::zeros((1, 49), 1, 4, 1, Padding::Valid).unwrap();
        assert!(conv_fat_1d(&x, &short).is_err());
        let short = ConvParams::<f32>::zeros((19, 1), 1, 4, 1, Padding::Valid).unwrap();
        assert!(conv_tall_1d(&x, &short).is_err());
    }
}
