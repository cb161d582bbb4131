//! Dense row-major tensors.
//!
//! Activations use the `(batch, channel, height, width)` layout. Apart from
//! scalar-with-tensor operations there is no broadcasting: mixing shapes is an
//! error.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::{Error, Result, Scalar};

/// Canonical activation geometry. `batch` may be 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape4 {
    pub fn new(batch: usize, channels: usize, height: usize, width: usize) -> Result<Self> {
        let shape = Shape4 {
            batch,
            channels,
            height,
            width,
        };
        if batch == 0 || channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidShape {
                shape: shape.dims().to_vec(),
                reason: "all dimensions must be at least 1".into(),
            });
        }
        Ok(shape)
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.batch, self.channels, self.height, self.width]
    }

    /// Elements per sample (`channels * height * width`).
    pub fn features(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn with_batch(self, batch: usize) -> Self {
        Shape4 { batch, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Max,
    Mean,
    /// Population variance (divides by the element count).
    Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "rank must be >= 1 and every dimension >= 1".into(),
        });
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("expected {n} elements, got {}", data.len()),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::one())
    }

    pub fn zeros_like(other: &Self) -> Self {
        Tensor {
            shape: other.shape.clone(),
            data: vec![T::zero(); other.data.len()],
        }
    }

    pub fn ones_like(other: &Self) -> Self {
        Tensor {
            shape: other.shape.clone(),
            data: vec![T::one(); other.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Interprets a rank-4 tensor as `(batch, channel, height, width)`.
    pub fn shape4(&self) -> Result<Shape4> {
        match *self.shape.as_slice() {
            [b, c, h, w] => Ok(Shape4 {
                batch: b,
                channels: c,
                height: h,
                width: w,
            }),
            _ => Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: "expected a rank-4 (batch, channel, height, width) tensor".into(),
            }),
        }
    }

    /// Row-major offset of a full coordinate.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: format!("index {index:?} has the wrong rank"),
            });
        }
        let mut off = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            if i >= d {
                return Err(Error::InvalidShape {
                    shape: self.shape.clone(),
                    reason: format!("index {index:?} out of bounds"),
                });
            }
            off = off * d + i;
        }
        Ok(off)
    }

    /// Inverse of [`Tensor::offset`].
    pub fn coords(&self, mut offset: usize) -> Vec<usize> {
        let mut out = vec![0; self.shape.len()];
        for (slot, &d) in out.iter_mut().zip(&self.shape).rev() {
            *slot = offset % d;
            offset /= d;
        }
        out
    }

    pub fn get(&self, index: &[usize]) -> Result<T> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return Err(Error::ShapeMismatch {
                left: self.shape,
                right: shape.to_vec(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::of(x.as_f64())).collect(),
        }
    }

    pub fn elementwise(&self, other: &Self, op: BinaryOp) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut data = Vec::with_capacity(self.data.len());
        for (i, (&a, &b)) in self.data.iter().zip(&other.data).enumerate() {
            data.push(match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => {
                    if b == T::zero() {
                        return Err(Error::DivisionByZero { index: i });
                    }
                    a / b
                }
            });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.elementwise(other, BinaryOp::Add)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.elementwise(other, BinaryOp::Sub)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.elementwise(other, BinaryOp::Mul)
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        self.elementwise(other, BinaryOp::Div)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn add_scalar(&self, s: T) -> Self {
        self.map(|x| x + s)
    }

    /// `self += other`, shapes must agree.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (p, q) = match *self.shape.as_slice() {
            [p, q] => (p, q),
            _ => {
                return Err(Error::InvalidShape {
                    shape: self.shape.clone(),
                    reason: "matmul needs rank-2 operands".into(),
                })
            }
        };
        let (q2, r) = match *other.shape.as_slice() {
            [q2, r] => (q2, r),
            _ => {
                return Err(Error::InvalidShape {
                    shape: other.shape.clone(),
                    reason: "matmul needs rank-2 operands".into(),
                })
            }
        };
        if q != q2 {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut out = vec![T::zero(); p * r];
        for i in 0..p {
            let row = &mut out[i * r..(i + 1) * r];
            for k in 0..q {
                let a = self.data[i * q + k];
                if a == T::zero() {
                    continue;
                }
                let b = &other.data[k * r..(k + 1) * r];
                for (o, &bv) in row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        Tensor::from_vec(&[p, r], out)
    }

    pub fn transpose2(&self) -> Result<Self> {
        let (p, q) = match *self.shape.as_slice() {
            [p, q] => (p, q),
            _ => {
                return Err(Error::InvalidShape {
                    shape: self.shape.clone(),
                    reason: "transpose needs a rank-2 tensor".into(),
                })
            }
        };
        let mut out = vec![T::zero(); p * q];
        for i in 0..p {
            for j in 0..q {
                out[j * p + i] = self.data[i * q + j];
            }
        }
        Tensor::from_vec(&[q, p], out)
    }

    /// Reduces one axis away. A rank-1 input reduces to a one-element tensor.
    pub fn reduce(&self, axis: usize, op: ReduceOp) -> Result<Self> {
        let rank = self.shape.len();
        if axis >= rank {
            return Err(Error::AxisOutOfRange { axis, rank });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let n = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * inner);
        let count = T::of(n as f64);
        for o in 0..outer {
            for i in 0..inner {
                let lane = (0..n).map(|k| self.data[(o * n + k) * inner + i]);
                let v = match op {
                    ReduceOp::Sum => lane.sum(),
                    ReduceOp::Max => lane.fold(T::neg_infinity(), T::max),
                    ReduceOp::Mean => lane.sum::<T>() / count,
                    ReduceOp::Var => {
                        let mean = lane.clone().sum::<T>() / count;
                        lane.map(|x| (x - mean) * (x - mean)).sum::<T>() / count
                    }
                };
                out.push(v);
            }
        }
        let mut shape: Vec<usize> = self.shape.clone();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        Tensor::from_vec(&shape, out)
    }
}

impl<T: Scalar> Index<usize> for Tensor<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.data[i]
    }
}

impl<T: Scalar> IndexMut<usize> for Tensor<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.data[i]
    }
}

// Binary layout: u64 rank, u64 dims, then f32 payload, all little-endian.
impl Tensor<f32> {
    pub fn encoded_len(&self) -> usize {
        8 * (1 + self.shape.len()) + 4 * self.data.len()
    }

    pub fn write_le(&self, out: &mut Vec<u8>) {
        out.reserve(self.encoded_len());
        out.extend_from_slice(&(self.shape.len() as u64).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }

    /// Decodes one tensor from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn read_le(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut pos = 0;
        let take_u64 = |pos: &mut usize| -> Result<u64> {
            let chunk = bytes
                .get(*pos..*pos + 8)
                .ok_or_else(|| Error::Corrupt("truncated tensor header".into()))?;
            *pos += 8;
            Ok(u64::from_le_bytes(chunk.try_into().expect("8-byte slice")))
        };
        let rank = take_u64(&mut pos)?;
        if rank == 0 || rank > 8 {
            return Err(Error::Corrupt(format!("implausible tensor rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            let d = take_u64(&mut pos)?;
            shape.push(usize::try_from(d).map_err(|_| Error::Corrupt("dimension overflow".into()))?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Corrupt("element count overflow".into()))?;
        let payload = n
            .checked_mul(4)
            .and_then(|len| bytes.get(pos..pos + len))
            .ok_or_else(|| Error::Corrupt("truncated tensor payload".into()))?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        pos += 4 * n;
        let t = Tensor::from_vec(&shape, data).map_err(|e| Error::Corrupt(format!("{e}")))?;
        Ok((t, pos))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], v: &[f32]) -> Tensor {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    fn random_int(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-9i32..=9) as f32).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::<f32>::zeros(&[]).is_err());
        assert!(Tensor::<f32>::zeros(&[2, 0]).is_err());
        assert!(Tensor::from_vec(&[2, 2], vec![1.0f32; 3]).is_err());
    }

    #[test]
    fn elementwise_basics() {
        let a = t(&[2], &[1.0, 2.0]);
        let b = t(&[2], &[3.0, 4.0]);
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);

        let x = t(&[2, 3], &[1.5, -2.0, 0.0, 7.0, 3.25, -1.0]);
        assert_eq!(x.mul(&Tensor::ones_like(&x)).unwrap(), x);
        assert_eq!(x.sub(&x).unwrap(), Tensor::zeros_like(&x));
    }

    #[test]
    fn elementwise_errors() {
        let a = t(&[2], &[1.0, 2.0]);
        let b = t(&[1, 2], &[1.0, 2.0]);
        match a.add(&b) {
            Err(Error::ShapeMismatch { left, right }) => {
                assert_eq!(left, vec![2]);
                assert_eq!(right, vec![1, 2]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let z = t(&[2], &[1.0, 0.0]);
        assert_eq!(a.div(&z), Err(Error::DivisionByZero { index: 1 }));
    }

    #[test]
    fn matmul_examples() {
        let m = t(&[3, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let mut eye = Tensor::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            eye[i * 4] = 1.0;
        }
        assert_eq!(eye.matmul(&m).unwrap(), m);

        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 1], &[0.0, 1.0]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[2.0, 4.0]);

        assert!(a.matmul(&t(&[3, 1], &[1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_int(&mut rng, &[5, 7]);
        let b = random_int(&mut rng, &[7, 3]);
        let mut expected = vec![0.0f32; 15];
        for i in 0..5 {
            for j in 0..3 {
                for k in 0..7 {
                    expected[i * 3 + j] += a.data()[i * 7 + k] * b.data()[k * 3 + j];
                }
            }
        }
        assert_eq!(a.matmul(&b).unwrap().data(), expected.as_slice());
    }

    #[test]
    fn reduce_examples() {
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.reduce(0, ReduceOp::Sum).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(a.reduce(1, ReduceOp::Max).unwrap().data(), &[2.0, 4.0]);

        let c = Tensor::full(&[3, 4], 2.5f32).unwrap();
        assert!(c.reduce(1, ReduceOp::Mean).unwrap().data().iter().all(|&x| x == 2.5));

        let v = Tensor::from_vec(&[4], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(v.reduce(0, ReduceOp::Var).unwrap().data(), &[1.25]);

        assert_eq!(
            a.reduce(2, ReduceOp::Sum),
            Err(Error::AxisOutOfRange { axis: 2, rank: 2 })
        );
    }

    #[test]
    fn serialization_round_trip_and_truncation() {
        let x = t(&[2, 1, 3], &[1.0, -2.0, 3.5, f32::MIN_POSITIVE, 0.0, 1e30]);
        let mut buf = Vec::new();
        x.write_le(&mut buf);
        assert_eq!(buf.len(), x.encoded_len());
        assert_eq!(&buf[..8], &3u64.to_le_bytes());
        let (y, used) = Tensor::read_le(&buf).unwrap();
        assert_eq!(used, buf.len());
        assert_eq!(x, y);
        assert!(Tensor::read_le(&buf[..buf.len() - 1]).is_err());
        assert!(Tensor::read_le(&buf[..10]).is_err());
    }

    fn shape_strategy() -> impl Strategy<Value = Vec<usize>> {
        proptest::collection::vec(1usize..5, 1..4)
    }

    proptest! {
        #[test]
        fn reshape_round_trip(shape in shape_strategy(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_int(&mut rng, &shape);
            let n = x.len();
            let y = x.clone().reshape(&[n]).unwrap().reshape(&shape).unwrap();
            prop_assert_eq!(x, y);
        }

        #[test]
        fn full_reduction_matches_scalar_sum(shape in shape_strategy(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_int(&mut rng, &shape);
            let mut r = x.clone();
            while r.rank() > 1 {
                r = r.reduce(0, ReduceOp::Sum).unwrap();
            }
            let r = r.reduce(0, ReduceOp::Sum).unwrap();
            prop_assert_eq!(r.data()[0], x.sum());
        }

        #[test]
        fn matmul_is_associative(p in 1usize..5, q in 1usize..5, r in 1usize..5, s in 1usize..5, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mk = |rng: &mut ChaCha8Rng, a: usize, b: usize| {
                let d = (0..a * b).map(|_| rng.random_range(-1.0..1.0)).collect();
                Tensor::<f32>::from_vec(&[a, b], d).unwrap()
            };
            let a = mk(&mut rng, p, q);
            let b = mk(&mut rng, q, r);
            let c = mk(&mut rng, r, s);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = 1.0f32.max(left.max_abs());
            for (x, y) in left.data().iter().zip(right.data()) {
                prop_assert!((x - y).abs() <= 1e-5 * scale);
            }
        }
    }
}
