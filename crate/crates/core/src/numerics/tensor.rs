use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Dense, row-major, double precision tensor.
///
/// Every operation in this crate works on rank-0, rank-1 or rank-2 tensors.
/// A rank-1 tensor of length `n` behaves as a `1 x n` row when a matrix view
/// is needed, so a single sample and a batch of one share the same layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Checked constructor: length must match the shape and every entry must be finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let t = Self::from_raw(shape, data)?;
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor construction"));
        }
        Ok(t)
    }

    /// Length-checked constructor that accepts non-finite entries.
    pub fn from_raw(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.len() > 2 {
            return shape_err(format!("rank {} tensors are not supported", shape.len()));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return shape_err(format!(
                "shape {:?} needs {} entries, got {}",
                shape,
                expected,
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub(crate) fn matrix_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return shape_err("ragged rows");
        }
        Self::matrix(r, c, rows.concat())
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::matrix_unchecked(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::matrix_unchecked(rows, cols, vec![value; rows * cols])
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut t = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            t.data[i * n + i] = *v;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Matrix view of the shape: scalars are `1 x 1`, vectors are `1 x n`.
    pub fn dims(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => unreachable!("rank checked at construction"),
        }
    }

    pub fn rows(&self) -> usize {
        self.dims().0
    }

    pub fn cols(&self) -> usize {
        self.dims().1
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return shape_err(format!("item() on shape {:?}", self.shape));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same data viewed as a `rows x cols` matrix.
    pub fn reshape(self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.data.len() {
            return shape_err(format!("cannot reshape {:?} to {rows}x{cols}", self.shape));
        }
        Ok(Self::matrix_unchecked(rows, cols, self.data))
    }

    pub fn as_matrix(&self) -> Self {
        let (r, c) = self.dims();
        Self::matrix_unchecked(r, c, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let (r, c) = self.dims();
        Self::matrix_unchecked(r, c, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dims() != other.dims() {
            return shape_err(format!(
                "elementwise op on {:?} and {:?}",
                self.shape, other.shape
            ));
        }
        let (r, c) = self.dims();
        Ok(Self::matrix_unchecked(
            r,
            c,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = self.dims();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::matrix_unchecked(c, r, out)
    }

    /// Standard matrix product.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.dims();
        let (k2, n) = other.dims();
        if k != k2 {
            return shape_err(format!(
                "matmul inner dimensions differ: {m}x{k} * {k2}x{n}"
            ));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(&self.data, &other.data, &mut out, m, k, n);
        Ok(Self::matrix_unchecked(m, n, out))
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.dims();
        let (n, k2) = other.dims();
        if k != k2 {
            return shape_err(format!(
                "matmul_nt inner dimensions differ: {m}x{k} * ({n}x{k2})^T"
            ));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                out[i * n + j] = dot(a, &other.data[j * k..(j + 1) * k]);
            }
        }
        Ok(Self::matrix_unchecked(m, n, out))
    }

    /// `self^T * other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        let (k, m) = self.dims();
        let (k2, n) = other.dims();
        if k != k2 {
            return shape_err(format!(
                "matmul_tn inner dimensions differ: ({k}x{m})^T * {k2}x{n}"
            ));
        }
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let a = &self.data[p * m..(p + 1) * m];
            let b = &other.data[p * n..(p + 1) * n];
            for (i, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                axpy(av, b, &mut out[i * n..(i + 1) * n]);
            }
        }
        Ok(Self::matrix_unchecked(m, n, out))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn l1_norm(&self) -> f64 {
        l1(&self.data)
    }

    pub fn l2_norm(&self) -> f64 {
        l2(&self.data)
    }

    pub fn squared_norm(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    /// `sign(x) * max(0, |x| - theta)` elementwise.
    pub fn soft_threshold(&self, theta: f64) -> Result<Self> {
        if theta < 0.0 || theta.is_nan() {
            return Err(Error::Config(format!(
                "soft threshold must be non-negative, got {theta}"
            )));
        }
        Ok(self.map(|v| shrink(v, theta)))
    }

    pub fn softsign(&self) -> Self {
        self.map(softsign)
    }

    /// L2 norm of every column.
    pub fn column_norms(&self) -> Vec<f64> {
        let (r, c) = self.dims();
        let mut acc = vec![0.0; c];
        for i in 0..r {
            for (a, v) in acc.iter_mut().zip(self.row(i)) {
                *a += v * v;
            }
        }
        acc.into_iter().map(f64::sqrt).collect()
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        let c = self.cols();
        Self::matrix_unchecked(end - start, c, self.data[start * c..end * c].to_vec())
    }

    /// Rows picked by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::matrix_unchecked(idx.len(), c, data)
    }

    pub fn vstack(parts: &[Self]) -> Result<Self> {
        let c = parts.first().map_or(0, Self::cols);
        if parts.iter().any(|p| p.cols() != c) {
            return shape_err("vstack with differing column counts");
        }
        let rows = parts.iter().map(Self::rows).sum();
        let mut data = Vec::with_capacity(rows * c);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Self::matrix_unchecked(rows, c, data))
    }

    /// Little-endian byte image of the data, used for checksums and persistence.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

#[inline]
pub fn shrink(v: f64, theta: f64) -> f64 {
    let m = (v.abs() - theta).max(0.0);
    if v > 0.0 {
        m
    } else if v < 0.0 {
        -m
    } else {
        0.0
    }
}

#[inline]
pub fn softsign(v: f64) -> f64 {
    v / (1.0 + v.abs())
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `out += a (m x k) * b (k x n)`, all row-major.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            axpy(av, &b[p * n..(p + 1) * n], orow);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_rejects_bad_length_and_nan() {
        assert!(Tensor::matrix(2, 2, vec![1.0; 3]).is_err());
        assert!(matches!(
            Tensor::vector(vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(Tensor::from_raw(vec![1], vec![f64::INFINITY]).is_ok());
    }

    #[test]
    fn matmul_examples() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(Tensor::eye(2).matmul(&a).unwrap(), a);
        assert_eq!(a.matmul(&Tensor::zeros(2, 2)).unwrap(), Tensor::zeros(2, 2));
        let ones = Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(a.matmul(&ones).unwrap().data(), &[3.0, 7.0]);
        assert!(matches!(ones.matmul(&ones), Err(Error::Shape(_))));
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Tensor::from_rows(&[vec![1.0, -2.0, 0.5], vec![3.0, 4.0, -1.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![0.0, 1.0, 2.0], vec![-1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(a.matmul_nt(&b).unwrap(), a.matmul(&b.transpose()).unwrap());
        assert_eq!(a.matmul_tn(&b).unwrap(), a.transpose().matmul(&b).unwrap());
    }

    #[test]
    fn soft_threshold_examples() {
        let t = Tensor::vector(vec![1.2, 0.0, -3.0]).unwrap();
        let out = t.soft_threshold(0.5).unwrap();
        assert!((out.data()[0] - 0.7).abs() < 1e-15);
        assert_eq!(out.data()[1], 0.0);
        assert_eq!(Tensor::scalar(-3.0).soft_threshold(1.0).unwrap().data(), &[-2.0]);
        assert!(t.soft_threshold(-0.1).is_err());
    }

    #[test]
    fn softsign_and_norms() {
        let s = Tensor::vector(vec![0.0, 1.0, -3.0]).unwrap().softsign();
        assert_eq!(s.data(), &[0.0, 0.5, -0.75]);
        assert_eq!(Tensor::vector(vec![1.0, -2.0, 3.0]).unwrap().l1_norm(), 6.0);
        assert_eq!(Tensor::vector(vec![3.0, 4.0]).unwrap().l2_norm(), 5.0);
        assert_eq!(Tensor::zeros(3, 1).l1_norm(), 0.0);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
