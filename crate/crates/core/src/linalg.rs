//! Small dense linear algebra: row-major matrices, products, Householder QR.

use crate::error::{Error, Result};
use crate::rng::RngKey;
use crate::sample;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite matrix entry at {i}")));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Matrix with entries produced by `f(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    /// Empty 0x0 matrix, used by data-free batches.
    pub fn empty() -> Self {
        Self::zeros(0, 0)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// `out = self · x`.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), x);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out = selfᵀ · y`.
    pub fn matvec_t_into(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * yr;
            }
        }
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// Householder QR of a square matrix. Returns `(Q, R)` with `Q` orthogonal.
    pub fn qr(&self) -> Result<(DenseMatrix, DenseMatrix)> {
        let n = self.rows;
        if n == 0 || self.cols != n {
            return Err(Error::InvalidDimension(format!(
                "qr needs a non-empty square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        let mut r = self.clone();
        let mut q = Self::identity(n);
        let mut v = vec![0.0; n];
        for k in 0..n.saturating_sub(1) {
            let norm: f64 = (k..n).map(|i| r.get(i, k).powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let alpha = if r.get(k, k) > 0.0 { -norm } else { norm };
            for i in 0..n {
                v[i] = if i < k { 0.0 } else { r.get(i, k) };
            }
            v[k] -= alpha;
            let vnorm2: f64 = v[k..].iter().map(|x| x * x).sum();
            if vnorm2 == 0.0 {
                continue;
            }
            // R <- (I - 2vvᵀ/vᵀv) R
            for j in 0..n {
                let s: f64 = (k..n).map(|i| v[i] * r.get(i, j)).sum::<f64>() * 2.0 / vnorm2;
                for i in k..n {
                    let x = r.get(i, j) - s * v[i];
                    r.set(i, j, x);
                }
            }
            // Q <- Q (I - 2vvᵀ/vᵀv)
            for i in 0..n {
                let s: f64 = (k..n).map(|j| q.get(i, j) * v[j]).sum::<f64>() * 2.0 / vnorm2;
                for j in k..n {
                    let x = q.get(i, j) - s * v[j];
                    q.set(i, j, x);
                }
            }
        }
        for i in 1..n {
            for j in 0..i {
                r.set(i, j, 0.0);
            }
        }
        Ok((q, r))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize without fast-math
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Random orthogonal matrix: QR of a standard-normal matrix with the sign of
/// each column fixed so that `R` has a positive diagonal.
pub fn random_orthogonal(key: &RngKey, n: usize) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("random_orthogonal needs n >= 1".into()));
    }
    let mut rng = key.stream();
    let g = DenseMatrix::from_fn(n, n, |_, _| sample::normal(&mut rng));
    let (mut q, r) = g.qr()?;
    for c in 0..n {
        if r.get(c, c) < 0.0 {
            for row in 0..n {
                let x = -q.get(row, c);
                q.set(row, c, x);
            }
        }
    }
    Ok(q)
}
