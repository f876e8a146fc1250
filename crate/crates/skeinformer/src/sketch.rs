//! Sketching-matrix constructors and sampling-probability formulas.
//!
//! Two families are supported, both normalized so that `E[S S^T] = I`:
//! sub-sampling matrices whose columns are scaled standard basis vectors
//! (with or without replacement), and Gaussian matrices with i.i.d. entries
//! of variance `1/d`.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::RngSeed;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchKind {
    SubsampleWithReplacement,
    SubsampleWithoutReplacement,
    Gaussian,
}

/// Description of one random n-by-d sketching matrix.
#[derive(Debug, Clone)]
pub struct SketchSpec {
    pub kind: SketchKind,
    /// Ambient dimension n (the sketch is n-by-width).
    pub rows: usize,
    /// Sketch width d.
    pub width: usize,
    /// Sampling probabilities, required for the subsample kinds.
    pub probs: Option<Vec<f64>>,
    pub seed: RngSeed,
}

impl SketchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.width == 0 {
            return Err(Error::invalid("sketch dimensions must be >= 1"));
        }
        match self.kind {
            SketchKind::Gaussian => Ok(()),
            SketchKind::SubsampleWithReplacement | SketchKind::SubsampleWithoutReplacement => {
                let probs = self
                    .probs
                    .as_ref()
                    .ok_or_else(|| Error::invalid("subsample sketch requires probabilities"))?;
                if probs.len() != self.rows {
                    return Err(Error::invalid(format!(
                        "probability vector length {} does not match n = {}",
                        probs.len(),
                        self.rows
                    )));
                }
                if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(Error::invalid("probabilities must be finite and >= 0"));
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "probabilities must sum to 1 (got {sum})"
                    )));
                }
                if self.kind == SketchKind::SubsampleWithoutReplacement {
                    let positive = probs.iter().filter(|&&p| p > 0.0).count();
                    if positive < self.width {
                        return Err(Error::invalid(format!(
                            "without-replacement draw of {} needs at least that many \
                             positive probabilities, found {positive}",
                            self.width
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Result of a sub-sampling draw: the chosen indices and the per-column
/// scaling factors. With replacement the scale is `1 / sqrt(d * p_i)`;
/// without replacement no scaling is applied (scale 1), since the adaptive
/// row normalization downstream is invariant to per-column scaling.
#[derive(Debug, Clone)]
pub struct SubsampleDraw {
    pub indices: Vec<usize>,
    pub scale: Vec<f64>,
}

/// A probability vector plus a flag marking the all-zero-weights fallback.
#[derive(Debug, Clone)]
pub struct SampleProbs {
    pub probs: Vec<f64>,
    pub degenerate: bool,
}

/// Draws the column indices of a sub-sampling sketch.
///
/// With replacement the indices are i.i.d. from `probs`. Without replacement
/// they follow successive draws proportional to the remaining weights,
/// realized as an exponential race: index `i` gets key `-ln(1-U_i)/p_i` and
/// the `d` smallest keys win, in key order.
pub fn draw_subsample(spec: &SketchSpec) -> Result<SubsampleDraw> {
    spec.validate()?;
    let probs = spec
        .probs
        .as_ref()
        .ok_or_else(|| Error::invalid("subsample draw requires probabilities"))?;
    let d = spec.width;
    let mut rng = spec.seed.rng();
    match spec.kind {
        SketchKind::Gaussian => Err(Error::invalid("gaussian sketches have no index draw")),
        SketchKind::SubsampleWithReplacement => {
            let dist =
                WeightedIndex::new(probs).map_err(|e| Error::invalid(e.to_string()))?;
            let indices: Vec<usize> = (0..d).map(|_| dist.sample(&mut rng)).collect();
            let scale = indices
                .iter()
                .map(|&i| 1.0 / (d as f64 * probs[i]).sqrt())
                .collect();
            Ok(SubsampleDraw { indices, scale })
        }
        SketchKind::SubsampleWithoutReplacement => {
            // One exponential key per positive-probability candidate, in
            // ascending index order so the stream does not depend on how many
            // zero-probability (padded) positions follow.
            let mut keyed: Vec<(f64, usize)> = Vec::new();
            for (i, &p) in probs.iter().enumerate() {
                if p > 0.0 {
                    let u: f64 = rng.gen();
                    keyed.push((-(1.0 - u).ln() / p, i));
                }
            }
            keyed.sort_by(|a, b| a.partial_cmp(b).expect("keys are finite"));
            keyed.truncate(d);
            let indices: Vec<usize> = keyed.iter().map(|&(_, i)| i).collect();
            Ok(SubsampleDraw {
                scale: vec![1.0; indices.len()],
                indices,
            })
        }
    }
}

/// Materializes the sketch as a dense n-by-d matrix.
pub fn materialize_sketch(spec: &SketchSpec) -> Result<DenseMatrix> {
    spec.validate()?;
    match spec.kind {
        SketchKind::Gaussian => {
            let sigma = (1.0 / spec.width as f64).sqrt();
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
            let mut rng = spec.seed.rng();
            let data = (0..spec.rows * spec.width)
                .map(|_| normal.sample(&mut rng))
                .collect();
            DenseMatrix::new(spec.rows, spec.width, data)
        }
        _ => {
            let draw = draw_subsample(spec)?;
            let mut s = DenseMatrix::zeros(spec.rows, spec.width);
            for (col, (&i, &scale)) in draw.indices.iter().zip(&draw.scale).enumerate() {
                s.set(i, col, scale);
            }
            Ok(s)
        }
    }
}

/// The norm-product sampling probabilities
/// `p_i = ||B^(i)|| ||V_(i)|| / sum_i' ||B^(i')|| ||V_(i')||`
/// over the unpadded indices (the beta = 1 optimum). Requires the full
/// n-by-n score matrix, so it is O(n^2) and meant for verifiers and
/// small-instance oracles.
pub fn optimal_subsample_probs(
    b: &DenseMatrix,
    v: &DenseMatrix,
    unpadded_len: usize,
) -> Result<SampleProbs> {
    let n = b.rows();
    if b.cols() != n || v.rows() != n {
        return Err(Error::invalid(format!(
            "score matrix {}x{} and values {}x{} do not agree",
            b.rows(),
            b.cols(),
            v.rows(),
            v.cols()
        )));
    }
    if unpadded_len == 0 || unpadded_len > n {
        return Err(Error::invalid("unpadded length out of range"));
    }
    let m = unpadded_len;
    let mut col_sq = vec![0.0; m];
    for i in 0..n {
        let row = b.row(i);
        for j in 0..m {
            col_sq[j] += row[j] * row[j];
        }
    }
    let mut weights = vec![0.0; n];
    let mut total = 0.0;
    for i in 0..m {
        let v_norm = v.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        weights[i] = col_sq[i].sqrt() * v_norm;
        total += weights[i];
    }
    if total > 0.0 {
        for w in weights.iter_mut() {
            *w /= total;
        }
        Ok(SampleProbs {
            probs: weights,
            degenerate: false,
        })
    } else {
        for w in weights.iter_mut().take(m) {
            *w = 1.0 / m as f64;
        }
        Ok(SampleProbs {
            probs: weights,
            degenerate: true,
        })
    }
}

/// Empirical failure rate of the distortion bound
/// `| ||S^T b||^2 - ||b||^2 | > epsilon ||b||^2` for Gaussian sketches and
/// random unit vectors.
pub fn jl_distortion_check(
    n: usize,
    d: usize,
    epsilon: f64,
    trials: usize,
    seed: &RngSeed,
) -> Result<f64> {
    jl_distortion_check_with(n, d, epsilon, trials, seed, |trial_seed| {
        materialize_sketch(&SketchSpec {
            kind: SketchKind::Gaussian,
            rows: n,
            width: d,
            probs: None,
            seed: trial_seed,
        })
    })
}

/// Same check with the sketch supplied per trial (test hook; lets a caller
/// force, say, orthonormal columns).
pub fn jl_distortion_check_with<F>(
    n: usize,
    d: usize,
    epsilon: f64,
    trials: usize,
    seed: &RngSeed,
    mut sketch: F,
) -> Result<f64>
where
    F: FnMut(RngSeed) -> Result<DenseMatrix>,
{
    if n == 0 || d == 0 {
        return Err(Error::invalid("dimensions must be >= 1"));
    }
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::invalid(format!(
            "epsilon must lie in (0, 1/2], got {epsilon}"
        )));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut failures = 0usize;
    for trial in 0..trials {
        let trial_seed = seed.for_trial(trial as u64);
        let s = sketch(trial_seed.stream(0))?;
        if s.rows() != n || s.cols() != d {
            return Err(Error::invalid("sketch hook returned a wrong shape"));
        }
        let mut rng = trial_seed.stream(1).rng();
        let mut b: Vec<f64>;
        loop {
            b = (0..n).map(|_| normal.sample(&mut rng)).collect();
            let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in b.iter_mut() {
                    *x /= norm;
                }
                break;
            }
        }
        // ||S^T b||^2, accumulated column by column.
        let mut projected = vec![0.0; d];
        for (i, &bi) in b.iter().enumerate() {
            let s_row = s.row(i);
            for k in 0..d {
                projected[k] += bi * s_row[k];
            }
        }
        let len_sq: f64 = projected.iter().map(|x| x * x).sum();
        if (len_sq - 1.0).abs() > epsilon {
            failures += 1;
        }
    }
    Ok(failures as f64 / trials as f64)
}

/// Monte Carlo summary of how far the empirical mean of `S S^T` sits from
/// the identity, in units of the per-entry standard error.
#[derive(Debug, Clone)]
pub struct UnbiasednessReport {
    pub trials: usize,
    pub max_abs_deviation: f64,
    /// Largest deviation in standard-error units over entries with nonzero
    /// sample variance.
    pub max_se_units: f64,
    pub tolerance_se_units: f64,
    pub pass: bool,
}

/// Estimates `E[S S^T]` over `trials` independent draws and checks every
/// entry against the identity within `tolerance_se_units` standard errors.
pub fn check_sketch_unbiasedness(
    kind: SketchKind,
    n: usize,
    d: usize,
    probs: Option<Vec<f64>>,
    trials: usize,
    seed: &RngSeed,
    tolerance_se_units: f64,
) -> Result<UnbiasednessReport> {
    if trials < 2 {
        return Err(Error::invalid("unbiasedness check needs at least 2 trials"));
    }
    let entries = n * n;
    let mut mean = vec![0.0; entries];
    let mut m2 = vec![0.0; entries];
    let mut outer = vec![0.0; entries];
    for trial in 0..trials {
        let spec = SketchSpec {
            kind,
            rows: n,
            width: d,
            probs: probs.clone(),
            seed: seed.for_trial(trial as u64),
        };
        let s = materialize_sketch(&spec)?;
        outer.fill(0.0);
        for i in 0..n {
            let row_i = s.row(i);
            for j in 0..n {
                let row_j = s.row(j);
                let mut acc = 0.0;
                for k in 0..d {
                    acc += row_i[k] * row_j[k];
                }
                outer[i * n + j] = acc;
            }
        }
        // Welford update per entry.
        let count = (trial + 1) as f64;
        for e in 0..entries {
            let delta = outer[e] - mean[e];
            mean[e] += delta / count;
            m2[e] += delta * (outer[e] - mean[e]);
        }
    }
    let t = trials as f64;
    let mut max_abs_deviation = 0.0f64;
    let mut max_se_units = 0.0f64;
    let mut pass = true;
    for i in 0..n {
        for j in 0..n {
            let e = i * n + j;
            let target = if i == j { 1.0 } else { 0.0 };
            let dev = (mean[e] - target).abs();
            let se = (m2[e] / (t * (t - 1.0))).sqrt();
            max_abs_deviation = max_abs_deviation.max(dev);
            if se > 0.0 {
                max_se_units = max_se_units.max(dev / se);
            }
            if dev > tolerance_se_units * se + 1e-12 {
                pass = false;
            }
        }
    }
    Ok(UnbiasednessReport {
        trials,
        max_abs_deviation,
        max_se_units,
        tolerance_se_units,
        pass,
    })
}
