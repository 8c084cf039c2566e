//! Dense NCHW tensors, filter banks, and the convolution and rotation
//! primitives every layer is built from.

mod conv;
mod rotate;

pub use conv::{
    conv2d_backward, conv2d_forward, depthwise_conv2d_backward, depthwise_conv2d_forward,
    output_dim,
};
pub(crate) use conv::{plane_correlate_acc, plane_filter_grad_acc, plane_input_grad_acc};
pub use rotate::{global_avg_pool, global_avg_pool_backward, rot90, rot90_filters};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Rank-4 array in `n × c × h × w` layout, row-major within each plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self::filled([n, c, h, w], T::zero())
    }

    pub fn filled(dims: [usize; 4], value: T) -> Self {
        assert!(dims.iter().all(|&d| d >= 1), "tensor dims must be >= 1: {dims:?}");
        Self {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid(format!("tensor dims must be >= 1, got {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::Shape {
                op: "Tensor4::from_vec",
                axis: "data length",
                expected: len,
                actual: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    /// Uniform samples in `[-scale, scale)`.
    pub fn random<R: Rng + ?Sized>(dims: [usize; 4], scale: f64, rng: &mut R) -> Self {
        let len = dims.iter().product();
        let data = (0..len)
            .map(|_| T::lit(rng.random_range(-scale..scale)))
            .collect();
        Self::from_vec(dims, data).expect("random tensor dims")
    }

    pub fn zeros_like(&self) -> Self {
        Self::filled(self.dims, T::zero())
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.dims[0]
    }

    #[inline]
    pub fn c(&self) -> usize {
        self.dims[1]
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.dims[2]
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.dims[3]
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.dims[2] * self.dims[3]
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let len = self.plane_len();
        let start = (n * self.dims[1] + c) * len;
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let len = self.plane_len();
        let start = (n * self.dims[1] + c) * len;
        &mut self.data[start..start + len]
    }

    /// Items `start..start + len` of the batch as a new tensor.
    pub fn batch_slice(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.n() {
            return Err(Error::invalid(format!(
                "batch slice {start}..{} out of range for batch of {}",
                start + len,
                self.n()
            )));
        }
        let item = self.dims[1] * self.plane_len();
        let data = self.data[start * item..(start + len) * item].to_vec();
        Self::from_vec([len, self.dims[1], self.dims[2], self.dims[3]], data)
    }

    /// Gathers batch items by index.
    pub fn gather(&self, indices: &[usize]) -> Result<Self> {
        let item = self.dims[1] * self.plane_len();
        let mut data = Vec::with_capacity(indices.len() * item);
        for &i in indices {
            if i >= self.n() {
                return Err(Error::invalid(format!("batch index {i} out of range")));
            }
            data.extend_from_slice(&self.data[i * item..(i + 1) * item]);
        }
        Self::from_vec([indices.len(), self.dims[1], self.dims[2], self.dims[3]], data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Largest absolute elementwise difference; infinite if the shapes differ.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.dims != other.dims {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }
}

/// Filter bank of `out × in` square `k × k` kernels, stored `[o][c][i][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank<T> {
    out_channels: usize,
    in_channels: usize,
    k: usize,
    data: Vec<T>,
}

impl<T: Real> FilterBank<T> {
    pub fn zeros(out_channels: usize, in_channels: usize, k: usize) -> Self {
        assert!(k % 2 == 1, "filter size must be odd, got {k}");
        assert!(out_channels >= 1 && in_channels >= 1, "channel counts must be >= 1");
        Self {
            out_channels,
            in_channels,
            k,
            data: vec![T::zero(); out_channels * in_channels * k * k],
        }
    }

    pub fn from_vec(out_channels: usize, in_channels: usize, k: usize, data: Vec<T>) -> Result<Self> {
        if k.is_multiple_of(2) {
            return Err(Error::invalid(format!("filter size must be odd, got {k}")));
        }
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::invalid("filter channel counts must be >= 1"));
        }
        let len = out_channels * in_channels * k * k;
        if data.len() != len {
            return Err(Error::Shape {
                op: "FilterBank::from_vec",
                axis: "data length",
                expected: len,
                actual: data.len(),
            });
        }
        Ok(Self {
            out_channels,
            in_channels,
            k,
            data,
        })
    }

    pub fn random<R: Rng + ?Sized>(
        out_channels: usize,
        in_channels: usize,
        k: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let data = (0..out_channels * in_channels * k * k)
            .map(|_| T::lit(rng.random_range(-scale..scale)))
            .collect();
        Self::from_vec(out_channels, in_channels, k, data).expect("random filter dims")
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.out_channels, self.in_channels, self.k)
    }

    #[inline]
    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    #[inline]
    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    /// Max ring radius `(k - 1) / 2`.
    #[inline]
    pub fn radius(&self) -> usize {
        (self.k - 1) / 2
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, o: usize, c: usize, i: usize, j: usize) -> usize {
        ((o * self.in_channels + c) * self.k + i) * self.k + j
    }

    #[inline]
    pub fn get(&self, o: usize, c: usize, i: usize, j: usize) -> T {
        self.data[self.index(o, c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, o: usize, c: usize, i: usize, j: usize, v: T) {
        let idx = self.index(o, c, i, j);
        self.data[idx] = v;
    }

    /// The `k × k` kernel connecting input channel `c` to output channel `o`.
    pub fn kernel(&self, o: usize, c: usize) -> &[T] {
        let kk = self.k * self.k;
        let start = (o * self.in_channels + c) * kk;
        &self.data[start..start + kk]
    }

    pub fn kernel_mut(&mut self, o: usize, c: usize) -> &mut [T] {
        let kk = self.k * self.k;
        let start = (o * self.in_channels + c) * kk;
        &mut self.data[start..start + kk]
    }

    pub fn dot(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn cast<U: Real>(&self) -> FilterBank<U> {
        FilterBank {
            out_channels: self.out_channels,
            in_channels: self.in_channels,
            k: self.k,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        let err = Tensor4::<f64>::from_vec([1, 2, 2, 2], vec![0.0; 7]).unwrap_err();
        assert!(matches!(err, Error::Shape { expected: 8, actual: 7, .. }));
        assert!(Tensor4::<f64>::from_vec([1, 0, 2, 2], vec![]).is_err());
    }

    #[test]
    fn filter_bank_rejects_even_k() {
        assert!(FilterBank::<f64>::from_vec(1, 1, 2, vec![0.0; 4]).is_err());
    }

    #[test]
    fn index_is_row_major_nchw() {
        let t = Tensor4::<f64>::from_vec([2, 3, 4, 5], (0..120).map(|v| v as f64).collect()).unwrap();
        assert_eq!(t.get(1, 2, 3, 4), 119.0);
        assert_eq!(t.get(0, 1, 0, 0), 20.0);
        assert_eq!(t.plane(1, 0)[0], 60.0);
    }

    #[test]
    fn gather_and_slice_agree() {
        let t = Tensor4::<f64>::from_vec([3, 1, 1, 2], vec![0., 1., 2., 3., 4., 5.]).unwrap();
        assert_eq!(t.batch_slice(1, 2).unwrap(), t.gather(&[1, 2]).unwrap());
        assert_eq!(t.gather(&[2, 0]).unwrap().data(), &[4., 5., 0., 1.]);
        assert!(t.batch_slice(2, 2).is_err());
    }
}
