//! Shared helpers for the integration suites: independent reference
//! implementations and input builders. Everything here is deliberately
//! written along a different code path from the library.

#![allow(dead_code)]

use skeinformer::matrix::generate_gaussian_matrix;
use skeinformer::{AttentionInput, DenseMatrix, RngSeed};
use std::sync::{Mutex, MutexGuard, OnceLock};

/// Serializes tests that are heavy or timing-sensitive.
pub fn serial_guard() -> MutexGuard<'static, ()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
}

pub fn random_input(n: usize, p: usize, stdev: f64, master: u64) -> AttentionInput {
    let seed = RngSeed::new(master);
    let q = generate_gaussian_matrix(n, p, stdev, &seed.stream(1)).unwrap();
    let k = generate_gaussian_matrix(n, p, stdev, &seed.stream(2)).unwrap();
    let v = generate_gaussian_matrix(n, p, stdev, &seed.stream(3)).unwrap();
    AttentionInput::new(q, k, v).unwrap()
}

pub fn random_padded_input(n: usize, p: usize, m: usize, master: u64) -> AttentionInput {
    let seed = RngSeed::new(master);
    let q = generate_gaussian_matrix(n, p, 1.0, &seed.stream(1)).unwrap();
    let k = generate_gaussian_matrix(n, p, 1.0, &seed.stream(2)).unwrap();
    let v = generate_gaussian_matrix(n, p, 1.0, &seed.stream(3)).unwrap();
    AttentionInput::with_padding(q, k, v, m).unwrap()
}

/// Naive unstabilized attention: double loop, direct exponentials.
pub fn naive_attention(input: &AttentionInput) -> DenseMatrix {
    let (n, m, p) = (input.n(), input.unpadded_len(), input.p());
    let scale = 1.0 / (p as f64).sqrt();
    let mut out = DenseMatrix::zeros(n, p);
    for i in 0..m {
        let mut weights = vec![0.0; m];
        let mut denom = 0.0;
        for j in 0..m {
            let mut logit = 0.0;
            for c in 0..p {
                logit += input.q().get(i, c) * input.k().get(j, c);
            }
            weights[j] = (logit * scale).exp();
            denom += weights[j];
        }
        for j in 0..m {
            let w = weights[j] / denom;
            for c in 0..p {
                let cur = out.get(i, c);
                out.set(i, c, cur + w * input.v().get(j, c));
            }
        }
    }
    out
}

/// Largest singular value by one-sided Jacobi orthogonalization: rotate
/// column pairs until every pair is orthogonal, then take the largest column
/// norm. Brute force, independent of the power-iteration path.
pub fn jacobi_spectral_norm(m: &DenseMatrix) -> f64 {
    let (rows, cols) = if m.rows() >= m.cols() {
        (m.rows(), m.cols())
    } else {
        (m.cols(), m.rows())
    };
    // Columns of the (possibly transposed) matrix.
    let mut columns = vec![vec![0.0f64; rows]; cols];
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if m.rows() >= m.cols() {
                columns[j][i] = m.get(i, j);
            } else {
                columns[i][j] = m.get(i, j);
            }
        }
    }
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    for _sweep in 0..100 {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let alpha = dot(&columns[i], &columns[i]);
                let beta = dot(&columns[j], &columns[j]);
                let gamma = dot(&columns[i], &columns[j]);
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let x = columns[i][r];
                    let y = columns[j][r];
                    columns[i][r] = c * x - s * y;
                    columns[j][r] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    columns
        .iter()
        .map(|col| dot(col, col).sqrt())
        .fold(0.0, f64::max)
}
