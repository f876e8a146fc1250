//! Dense row-major matrices and validated attention inputs.
//!
//! `DenseMatrix` is the carrier for every matrix in the crate: queries, keys,
//! values, score matrices, sketches, and outputs. Row-major layout keeps row
//! slices (the hot path for sampling-based attention) contiguous.

use crate::error::{Error, Result};
use crate::rng::RngSeed;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Wraps row-major data. Fails if the length does not match the shape.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let expected = rows.checked_mul(cols).ok_or_else(|| {
            Error::invalid(format!("matrix shape {rows}x{cols} overflows"))
        })?;
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "matrix data length {} does not match shape {rows}x{cols}",
                data.len()
            )));
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

    /// Convenience constructor for tests and examples.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::invalid("ragged rows"));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        DenseMatrix::new(r, c, data)
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert!(i < self.rows);
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        debug_assert!(i < self.rows);
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self * rhs` with a fixed inner summation order.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::invalid(format!(
                "matmul shapes {}x{} and {}x{} do not agree",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let lhs_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a) in lhs_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let rhs_row = rhs.row(k);
                for (j, &b) in rhs_row.iter().enumerate() {
                    out_row[j] += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self - rhs`.
    pub fn sub(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::invalid("sub: shape mismatch"));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a - b)
            .collect();
        DenseMatrix::new(self.rows, self.cols, data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, rhs: &DenseMatrix) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Copy of the first `m` rows.
    pub fn top_rows(&self, m: usize) -> DenseMatrix {
        debug_assert!(m <= self.rows);
        DenseMatrix {
            rows: m,
            cols: self.cols,
            data: self.data[..m * self.cols].to_vec(),
        }
    }
}

/// Deterministic i.i.d. Gaussian matrix with mean 0 and the given standard
/// deviation, filled in row-major order.
pub fn generate_gaussian_matrix(
    rows: usize,
    cols: usize,
    stdev: f64,
    seed: &RngSeed,
) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("gaussian matrix dimensions must be >= 1"));
    }
    if !(stdev > 0.0) || !stdev.is_finite() {
        return Err(Error::invalid(format!(
            "gaussian stdev must be finite and > 0, got {stdev}"
        )));
    }
    let normal = Normal::new(0.0, stdev).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = seed.rng();
    let data: Vec<f64> = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
    DenseMatrix::new(rows, cols, data)
}

/// Validated `(Q, K, V)` triple with an optional padded tail.
///
/// Rows with index `>= unpadded_len` are padding. Construction zeroes the
/// padding rows of `K` and `V` (the mask application), so padded positions
/// carry no attention mass downstream.
#[derive(Debug, Clone)]
pub struct AttentionInput {
    q: DenseMatrix,
    k: DenseMatrix,
    v: DenseMatrix,
    unpadded_len: usize,
}

impl AttentionInput {
    pub fn new(q: DenseMatrix, k: DenseMatrix, v: DenseMatrix) -> Result<Self> {
        let n = q.rows();
        AttentionInput::with_padding(q, k, v, n)
    }

    pub fn with_padding(
        q: DenseMatrix,
        mut k: DenseMatrix,
        mut v: DenseMatrix,
        unpadded_len: usize,
    ) -> Result<Self> {
        let (n, p) = (q.rows(), q.cols());
        if n == 0 || p == 0 {
            return Err(Error::invalid("attention input must be non-empty"));
        }
        for (name, m) in [("K", &k), ("V", &v)] {
            if m.rows() != n || m.cols() != p {
                return Err(Error::invalid(format!(
                    "{name} is {}x{}, expected {n}x{p}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        if unpadded_len == 0 || unpadded_len > n {
            return Err(Error::invalid(format!(
                "unpadded length {unpadded_len} must be in 1..={n}"
            )));
        }
        for i in unpadded_len..n {
            k.row_mut(i).fill(0.0);
            v.row_mut(i).fill(0.0);
        }
        Ok(AttentionInput {
            q,
            k,
            v,
            unpadded_len,
        })
    }

    pub fn q(&self) -> &DenseMatrix {
        &self.q
    }

    pub fn k(&self) -> &DenseMatrix {
        &self.k
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    /// Sequence length including padding.
    pub fn n(&self) -> usize {
        self.q.rows()
    }

    /// Head dimension.
    pub fn p(&self) -> usize {
        self.q.cols()
    }

    pub fn unpadded_len(&self) -> usize {
        self.unpadded_len
    }
}
