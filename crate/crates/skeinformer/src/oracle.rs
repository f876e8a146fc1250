//! Exact O(n^2) softmax self-attention and explicit score matrices.
//!
//! This is the ground truth every approximation in the crate is measured
//! against: `softmax(Q K^T / sqrt(p)) V`, computed row by row with
//! log-sum-exp stabilization. Padded key positions are excluded from the
//! softmax entirely (probability exactly zero), and padded output rows are
//! zero.

use crate::error::{Error, Result};
use crate::matrix::{AttentionInput, DenseMatrix};

/// Largest sequence length for which the n-by-n score matrices may be
/// materialized.
pub const DEFAULT_ORACLE_CAP: usize = 8192;

/// The explicit score matrices of one attention instance.
///
/// `a` holds the un-normalized scores `exp(Q K^T / sqrt(p))`, `row_sums` its
/// per-row sums (the diagonal of the normalizer), and `b` the row-stochastic
/// normalized scores. Padded rows and columns are zero in both matrices.
#[derive(Debug, Clone)]
pub struct ScoreMatrices {
    pub a: DenseMatrix,
    pub row_sums: Vec<f64>,
    pub b: DenseMatrix,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut sum = 0.0;
    for i in 0..a.len() {
        sum += a[i] * b[i];
    }
    sum
}

/// Writes the scaled logits of one query row against keys `0..m` into
/// `out[0..m]`.
pub(crate) fn row_logits_into(
    q_row: &[f64],
    k: &DenseMatrix,
    m: usize,
    inv_sqrt_p: f64,
    out: &mut [f64],
) {
    for j in 0..m {
        out[j] = dot(q_row, k.row(j)) * inv_sqrt_p;
    }
}

/// Turns logits into softmax weights in place, subtracting the maximum
/// before exponentiating so logits of any magnitude stay finite.
pub(crate) fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for value in logits.iter_mut() {
        *value = (*value - max).exp();
        sum += *value;
    }
    for value in logits.iter_mut() {
        *value /= sum;
    }
}

/// Softmax weights of one query row over the unpadded keys, into `out[0..m]`.
pub(crate) fn row_weights_into(
    q_row: &[f64],
    k: &DenseMatrix,
    m: usize,
    inv_sqrt_p: f64,
    out: &mut [f64],
) {
    row_logits_into(q_row, k, m, inv_sqrt_p, out);
    softmax_in_place(&mut out[..m]);
}

/// Exact attention output `softmax(Q K^T / sqrt(p)) V`. Rows with index
/// `>= unpadded_len` are zero.
pub fn exact_attention(input: &AttentionInput) -> DenseMatrix {
    let (n, m, p) = (input.n(), input.unpadded_len(), input.p());
    let inv_sqrt_p = 1.0 / (p as f64).sqrt();
    let mut out = DenseMatrix::zeros(n, p);
    let mut weights = vec![0.0; m];
    for i in 0..m {
        row_weights_into(input.q().row(i), input.k(), m, inv_sqrt_p, &mut weights);
        let out_row = out.row_mut(i);
        for (j, &w) in weights.iter().enumerate() {
            let v_row = input.v().row(j);
            for c in 0..p {
                out_row[c] += w * v_row[c];
            }
        }
    }
    out
}

/// Materializes the n-by-n score matrices under the default cap.
pub fn score_matrices(input: &AttentionInput) -> Result<ScoreMatrices> {
    score_matrices_with_cap(input, DEFAULT_ORACLE_CAP)
}

/// Materializes the n-by-n score matrices, refusing when `n` exceeds `cap`.
pub fn score_matrices_with_cap(input: &AttentionInput, cap: usize) -> Result<ScoreMatrices> {
    let (n, m) = (input.n(), input.unpadded_len());
    if n > cap {
        return Err(Error::ResourceLimit(format!(
            "sequence length {n} exceeds the score-matrix cap {cap}; \
             use a sampling approximation instead"
        )));
    }
    let inv_sqrt_p = 1.0 / (input.p() as f64).sqrt();
    let mut a = DenseMatrix::zeros(n, n);
    let mut b = DenseMatrix::zeros(n, n);
    let mut row_sums = vec![0.0; n];
    let mut logits = vec![0.0; m];
    for i in 0..m {
        row_logits_into(input.q().row(i), input.k(), m, inv_sqrt_p, &mut logits);
        let a_row = a.row_mut(i);
        let mut sum = 0.0;
        for j in 0..m {
            a_row[j] = logits[j].exp();
            sum += a_row[j];
        }
        row_sums[i] = sum;
        softmax_in_place(&mut logits);
        b.row_mut(i)[..m].copy_from_slice(&logits);
    }
    Ok(ScoreMatrices { a, row_sums, b })
}
