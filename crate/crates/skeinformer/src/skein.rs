//! Sampling-based attention in O(n d) time and memory.
//!
//! The pipeline: uniformly pilot-sample `d` query rows and compute their
//! exact score rows; estimate column-importance probabilities from the pilot;
//! draw `d` key/value columns without replacement; reconstruct each output
//! row from the sampled columns, filling the un-sampled scores with their
//! per-row geometric mean (adaptive row normalization); finally overwrite the
//! pilot rows with their exactly computed outputs.
//!
//! Every product involving the exponentiated scores is evaluated from logits
//! with the per-row maximum subtracted. The output is invariant to that
//! shift, so no intermediate can overflow regardless of logit magnitude.

use crate::error::{Error, Result};
use crate::matrix::{AttentionInput, DenseMatrix};
use crate::oracle::{exact_attention, row_logits_into, row_weights_into};
use crate::rng::RngSeed;
use crate::sketch::{draw_subsample, SampleProbs, SketchKind, SketchSpec};
use rand::Rng;

/// Stream labels so pilot and column sampling consume independent randomness.
const STREAM_PILOT: u64 = 0x70;
const STREAM_COLUMNS: u64 = 0x71;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Columns drawn from the pilot-estimated norm-product probabilities.
    Importance,
    /// Ablation: uniform column probabilities over the unpadded range.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowNorm {
    /// Row sum estimated as selected sum plus (m-d) copies of the geometric
    /// mean of the selected entries; un-selected values filled accordingly.
    Adaptive,
    /// Ablation: selected sum rescaled by m/d (arithmetic-mean fill).
    Simple,
    /// Ablation: normalize by the selected sum only, no fill term.
    Off,
}

#[derive(Debug, Clone)]
pub struct SkeinConfig {
    /// Sub-sample size (pilot rows and sampled columns).
    pub d: usize,
    pub sampling: Sampling,
    pub row_norm: RowNorm,
    pub reuse_pilot: bool,
    pub seed: RngSeed,
}

impl SkeinConfig {
    pub fn new(d: usize, seed: RngSeed) -> Self {
        SkeinConfig {
            d,
            sampling: Sampling::Importance,
            row_norm: RowNorm::Adaptive,
            reuse_pilot: true,
            seed,
        }
    }
}

/// Every intermediate of one run, exposed for tests and verbose inspection.
///
/// The score matrices (`pilot_scores`, `column_scores`) and the derived
/// vectors are reported on the raw exponential scale; rows at or beyond the
/// unpadded length are zero.
#[derive(Debug, Clone)]
pub struct SkeinTrace {
    /// Pilot row indices J (may contain duplicates).
    pub pilot_indices: Vec<usize>,
    /// Exact normalized score rows of the pilot, d-by-n. Empty (0-by-n) when
    /// uniform sampling runs with pilot reuse off.
    pub pilot_scores: DenseMatrix,
    /// Estimated column probabilities, length n, zero on the padded tail.
    pub estimated_probs: Vec<f64>,
    /// Set when the probability estimate degenerated to uniform.
    pub probs_degenerate: bool,
    /// Sampled column indices J'.
    pub column_indices: Vec<usize>,
    /// Un-normalized scores against the sampled keys, n-by-|J'|.
    pub column_scores: DenseMatrix,
    /// Per-row geometric mean of the selected scores, length n.
    pub geometric_means: Vec<f64>,
    /// Estimated softmax row sums, length n.
    pub row_sum_estimates: Vec<f64>,
    /// Column sums of the un-selected unpadded value rows, length p.
    pub unselected_value_sum: Vec<f64>,
    /// The output matrix (same as the returned one).
    pub output: DenseMatrix,
    pub requested_d: usize,
    /// Columns actually drawn; smaller than `requested_d` only when fewer
    /// positive-probability columns existed.
    pub effective_d: usize,
    /// Set when d >= unpadded length forced the exact-attention fallback.
    pub exact_fallback: bool,
    /// Score-matrix entries computed during the call (2*d*m on the sampling
    /// path with pilot scoring, m*m on the fallback path).
    pub score_entries_computed: u64,
}

/// Uniform pilot draw of `d` indices over the unpadded range, with
/// replacement.
pub fn pilot_sample(m: usize, d: usize, seed: &RngSeed) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::invalid("cannot pilot-sample an empty range"));
    }
    if d == 0 {
        return Err(Error::invalid("pilot sample size must be >= 1"));
    }
    let mut rng = seed.rng();
    Ok((0..d).map(|_| rng.gen_range(0..m)).collect())
}

/// Exact normalized score rows for the pilot indices: row k of the result is
/// row `j[k]` of the full score matrix, with padded columns exactly zero.
pub fn pilot_scores(input: &AttentionInput, pilot: &[usize]) -> DenseMatrix {
    let (n, m, p) = (input.n(), input.unpadded_len(), input.p());
    let inv_sqrt_p = 1.0 / (p as f64).sqrt();
    let mut out = DenseMatrix::zeros(pilot.len(), n);
    for (k, &j) in pilot.iter().enumerate() {
        debug_assert!(j < m, "pilot index within the unpadded range");
        let row = out.row_mut(k);
        row_weights_into(input.q().row(j), input.k(), m, inv_sqrt_p, row);
    }
    out
}

/// Column-importance probabilities estimated from the pilot score rows:
/// `p_i` proportional to `sqrt(sum_k b_{j_k i}^2) * ||V_(i)||` over the
/// unpadded indices, uniform fallback when every weight is zero.
pub fn estimate_probs(pilot_scores: &DenseMatrix, v: &DenseMatrix, m: usize) -> SampleProbs {
    let n = pilot_scores.cols();
    debug_assert!(m <= n && v.rows() == n);
    let mut col_sq = vec![0.0; m];
    for k in 0..pilot_scores.rows() {
        let row = pilot_scores.row(k);
        for i in 0..m {
            col_sq[i] += row[i] * row[i];
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
        SampleProbs {
            probs: weights,
            degenerate: false,
        }
    } else {
        for w in weights.iter_mut().take(m) {
            *w = 1.0 / m as f64;
        }
        SampleProbs {
            probs: weights,
            degenerate: true,
        }
    }
}

/// Estimated softmax row sums from the selected column scores.
///
/// `column_scores` is n-by-d (one column per selected index) and `geo_means`
/// holds the per-row geometric means on the same scale. With `n_effective`
/// unpadded positions:
/// adaptive gives `sum + (m - d) * geo_mean`, simple gives `(m / d) * sum`,
/// off gives the bare selected sum.
pub fn row_norm_estimate(
    column_scores: &DenseMatrix,
    geo_means: &[f64],
    n_effective: usize,
    mode: RowNorm,
) -> Vec<f64> {
    let d = column_scores.cols();
    let m = n_effective;
    debug_assert!(d <= m);
    debug_assert_eq!(geo_means.len(), column_scores.rows());
    let mut estimates = vec![0.0; column_scores.rows()];
    for i in 0..column_scores.rows() {
        let sum: f64 = column_scores.row(i).iter().sum();
        estimates[i] = match mode {
            RowNorm::Adaptive => sum + (m - d) as f64 * geo_means[i],
            RowNorm::Simple => sum * m as f64 / d as f64,
            RowNorm::Off => sum,
        };
    }
    estimates
}

fn uniform_probs(n: usize, m: usize) -> SampleProbs {
    let mut probs = vec![0.0; n];
    for p in probs.iter_mut().take(m) {
        *p = 1.0 / m as f64;
    }
    SampleProbs {
        probs,
        degenerate: false,
    }
}

fn exact_fallback(input: &AttentionInput, cfg: &SkeinConfig) -> (DenseMatrix, SkeinTrace) {
    let (n, m) = (input.n(), input.unpadded_len());
    let output = exact_attention(input);
    let trace = SkeinTrace {
        pilot_indices: Vec::new(),
        pilot_scores: DenseMatrix::zeros(0, n),
        estimated_probs: vec![0.0; n],
        probs_degenerate: false,
        column_indices: Vec::new(),
        column_scores: DenseMatrix::zeros(n, 0),
        geometric_means: vec![0.0; n],
        row_sum_estimates: vec![0.0; n],
        unselected_value_sum: vec![0.0; input.p()],
        output: output.clone(),
        requested_d: cfg.d,
        effective_d: m,
        exact_fallback: true,
        score_entries_computed: (m * m) as u64,
    };
    (output, trace)
}

/// Runs the full sampling pipeline and returns the approximate attention
/// output together with the trace of all intermediates.
///
/// When `cfg.d >= unpadded_len` the call falls back to exact attention
/// (recorded in the trace, not an error). Padded output rows are zero.
pub fn skein_attention(
    input: &AttentionInput,
    cfg: &SkeinConfig,
) -> Result<(DenseMatrix, SkeinTrace)> {
    if cfg.d == 0 {
        return Err(Error::invalid("sub-sample size d must be >= 1"));
    }
    let (n, m, p) = (input.n(), input.unpadded_len(), input.p());
    if cfg.d >= m {
        return Ok(exact_fallback(input, cfg));
    }
    let d = cfg.d;
    let inv_sqrt_p = 1.0 / (p as f64).sqrt();
    let mut entries: u64 = 0;

    // Lines 1-3: uniform pilot over the unpadded range, exact score rows.
    // The uniform-sampling ablation skips the scoring when the rows are not
    // needed for reuse either.
    let pilot = pilot_sample(m, d, &cfg.seed.stream(STREAM_PILOT))?;
    let need_pilot_scores = cfg.sampling == Sampling::Importance || cfg.reuse_pilot;
    let pilot_rows = if need_pilot_scores {
        entries += (d * m) as u64;
        pilot_scores(input, &pilot)
    } else {
        DenseMatrix::zeros(0, n)
    };

    // Line 4: estimated column probabilities.
    let probs = match cfg.sampling {
        Sampling::Importance => estimate_probs(&pilot_rows, input.v(), m),
        Sampling::Uniform => uniform_probs(n, m),
    };

    // Line 5: without-replacement column draw. If fewer than d columns carry
    // positive probability, take all of them and shrink d for this call.
    let positive = probs.probs.iter().filter(|&&x| x > 0.0).count();
    let d_eff = d.min(positive);
    let draw = draw_subsample(&SketchSpec {
        kind: SketchKind::SubsampleWithoutReplacement,
        rows: n,
        width: d_eff,
        probs: Some(probs.probs.clone()),
        seed: cfg.seed.stream(STREAM_COLUMNS),
    })?;
    let selected = draw.indices;

    // Line 7: logits of every unpadded query against the selected keys.
    let selected_keys = gather_rows(input.k(), &selected);
    let mut logits = DenseMatrix::zeros(m, d_eff);
    for i in 0..m {
        row_logits_into(
            input.q().row(i),
            &selected_keys,
            d_eff,
            inv_sqrt_p,
            logits.row_mut(i),
        );
    }
    entries += (m * d_eff) as u64;

    // Shifted exponentials: per row subtract the max logit; the final
    // normalization cancels the shift exactly.
    let mut shifted = DenseMatrix::zeros(m, d_eff);
    let mut geo_shifted = vec![0.0; m];
    for i in 0..m {
        let row = logits.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mean = row.iter().sum::<f64>() / d_eff as f64;
        let out = shifted.row_mut(i);
        for k in 0..d_eff {
            out[k] = (row[k] - max).exp();
        }
        geo_shifted[i] = (mean - max).exp();
    }

    // Line 9 (and the ablation variants): estimated row sums.
    let row_sums_shifted = row_norm_estimate(&shifted, &geo_shifted, m, cfg.row_norm);

    // Line 10: column sums of the un-selected unpadded value rows.
    let mut is_selected = vec![false; n];
    for &j in &selected {
        is_selected[j] = true;
    }
    let mut value_fill = vec![0.0; p];
    for i in 0..m {
        if !is_selected[i] {
            let row = input.v().row(i);
            for c in 0..p {
                value_fill[c] += row[c];
            }
        }
    }

    // Line 11: row-normalized combination of the sampled part and the fill.
    let mut output = DenseMatrix::zeros(n, p);
    for i in 0..m {
        let weights = shifted.row(i);
        let out_row = output.row_mut(i);
        for (k, &j) in selected.iter().enumerate() {
            let w = weights[k];
            let v_row = input.v().row(j);
            for c in 0..p {
                out_row[c] += w * v_row[c];
            }
        }
        let fill = match cfg.row_norm {
            RowNorm::Adaptive => geo_shifted[i],
            RowNorm::Simple => weights.iter().sum::<f64>() / d_eff as f64,
            RowNorm::Off => 0.0,
        };
        if fill != 0.0 {
            for c in 0..p {
                out_row[c] += fill * value_fill[c];
            }
        }
        let denom = row_sums_shifted[i];
        if !(denom > 0.0) {
            return Err(Error::Internal(format!(
                "row-sum estimate underflowed to {denom} at row {i}"
            )));
        }
        for c in 0..p {
            out_row[c] /= denom;
        }
    }

    // Line 12: pilot sampling reutilization; duplicates overwrite the same
    // exact value.
    if cfg.reuse_pilot {
        for (k, &j) in pilot.iter().enumerate() {
            let weights = pilot_rows.row(k);
            let out_row = output.row_mut(j);
            out_row.fill(0.0);
            for (col, &w) in weights.iter().enumerate().take(m) {
                if w == 0.0 {
                    continue;
                }
                let v_row = input.v().row(col);
                for c in 0..p {
                    out_row[c] += w * v_row[c];
                }
            }
        }
    }

    if !output.is_finite() {
        return Err(Error::Internal(
            "non-finite entry in sampled attention output".into(),
        ));
    }

    // Trace values on the raw exponential scale (finite for the logit
    // magnitudes the stability contract covers).
    let mut raw_scores = DenseMatrix::zeros(n, d_eff);
    let mut geo_raw = vec![0.0; n];
    for i in 0..m {
        let row = logits.row(i);
        let out = raw_scores.row_mut(i);
        for k in 0..d_eff {
            out[k] = row[k].exp();
        }
        geo_raw[i] = (row.iter().sum::<f64>() / d_eff as f64).exp();
    }
    let mut row_sums_raw = row_norm_estimate(&raw_scores.top_rows(m), &geo_raw[..m], m, cfg.row_norm);
    row_sums_raw.resize(n, 0.0);

    let trace = SkeinTrace {
        pilot_indices: pilot,
        pilot_scores: pilot_rows,
        estimated_probs: probs.probs,
        probs_degenerate: probs.degenerate,
        column_indices: selected,
        column_scores: raw_scores,
        geometric_means: geo_raw,
        row_sum_estimates: row_sums_raw,
        unselected_value_sum: value_fill,
        output: output.clone(),
        requested_d: d,
        effective_d: d_eff,
        exact_fallback: false,
        score_entries_computed: entries,
    };
    Ok((output, trace))
}

/// Copy of the given rows, in order.
fn gather_rows(m: &DenseMatrix, indices: &[usize]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(indices.len(), m.cols());
    for (k, &i) in indices.iter().enumerate() {
        out.row_mut(k).copy_from_slice(m.row(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::generate_gaussian_matrix;
    use crate::oracle::score_matrices;

    fn random_input(n: usize, p: usize, master: u64) -> AttentionInput {
        let seed = RngSeed::new(master);
        let q = generate_gaussian_matrix(n, p, 1.0, &seed.stream(1)).unwrap();
        let k = generate_gaussian_matrix(n, p, 1.0, &seed.stream(2)).unwrap();
        let v = generate_gaussian_matrix(n, p, 1.0, &seed.stream(3)).unwrap();
        AttentionInput::new(q, k, v).unwrap()
    }

    #[test]
    fn pilot_single_choice_is_all_zero() {
        let j = pilot_sample(1, 4, &RngSeed::new(0)).unwrap();
        assert_eq!(j, vec![0, 0, 0, 0]);
    }

    #[test]
    fn pilot_is_deterministic_in_seed() {
        let seed = RngSeed::new(17);
        assert_eq!(
            pilot_sample(100, 20, &seed).unwrap(),
            pilot_sample(100, 20, &seed).unwrap()
        );
    }

    #[test]
    fn pilot_frequencies_are_uniform() {
        let m = 100;
        let draws = 100_000;
        let mut counts = vec![0usize; m];
        let j = pilot_sample(m, draws, &RngSeed::new(5)).unwrap();
        for idx in j {
            counts[idx] += 1;
        }
        let p = 1.0 / m as f64;
        let tol = 5.0 * (p * (1.0 - p) / draws as f64).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / draws as f64;
            assert!((freq - p).abs() <= tol, "index {i}: {freq}");
        }
    }

    #[test]
    fn pilot_rejects_empty_range() {
        assert!(matches!(
            pilot_sample(0, 3, &RngSeed::new(0)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn pilot_scores_match_the_oracle_rows() {
        let input = random_input(12, 3, 2);
        let sm = score_matrices(&input).unwrap();
        let pilot = vec![3, 7, 3, 0];
        let rows = pilot_scores(&input, &pilot);
        for (k, &j) in pilot.iter().enumerate() {
            let sum: f64 = rows.row(k).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for c in 0..12 {
                assert!((rows.get(k, c) - sm.b.get(j, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pilot_scores_zero_the_padded_columns() {
        let seed = RngSeed::new(8);
        let q = generate_gaussian_matrix(6, 2, 1.0, &seed.stream(1)).unwrap();
        let k = generate_gaussian_matrix(6, 2, 1.0, &seed.stream(2)).unwrap();
        let v = generate_gaussian_matrix(6, 2, 1.0, &seed.stream(3)).unwrap();
        let input = AttentionInput::with_padding(q, k, v, 4).unwrap();
        let rows = pilot_scores(&input, &[1, 2]);
        for k in 0..2 {
            assert_eq!(rows.get(k, 4), 0.0);
            assert_eq!(rows.get(k, 5), 0.0);
            let sum: f64 = rows.row(k).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn estimate_probs_symmetric_case_is_uniform() {
        let pilot_rows = DenseMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let v = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let probs = estimate_probs(&pilot_rows, &v, 2);
        assert!(!probs.degenerate);
        assert!((probs.probs[0] - 0.5).abs() < 1e-15);
        assert!((probs.probs[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn estimate_probs_single_pilot_hand_case() {
        // d = 1, pilot row (0.2, 0.8), unit value norms: probabilities are
        // the row itself.
        let pilot_rows = DenseMatrix::from_rows(&[vec![0.2, 0.8]]).unwrap();
        let v = DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let probs = estimate_probs(&pilot_rows, &v, 2);
        assert!((probs.probs[0] - 0.2).abs() < 1e-15);
        assert!((probs.probs[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn estimate_probs_scale_with_value_row_norms() {
        // Scaling one value row by c multiplies its un-normalized weight by c.
        let pilot_rows = DenseMatrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        let v = DenseMatrix::from_rows(&[vec![3.0], vec![1.0]]).unwrap();
        let probs = estimate_probs(&pilot_rows, &v, 2);
        // Hand evaluation: weights 0.5*3 and 0.5*1, normalized.
        assert!((probs.probs[0] - 0.75).abs() < 1e-15);
        assert!((probs.probs[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn estimate_probs_degenerate_falls_back_to_uniform() {
        let pilot_rows = DenseMatrix::from_rows(&[vec![0.5, 0.5, 0.0]]).unwrap();
        let v = DenseMatrix::zeros(3, 2);
        let probs = estimate_probs(&pilot_rows, &v, 3);
        assert!(probs.degenerate);
        for i in 0..3 {
            assert!((probs.probs[i] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn row_norm_constant_row_recovers_m_times_c() {
        let scores = DenseMatrix::from_rows(&[vec![2.5, 2.5, 2.5]]).unwrap();
        let est = row_norm_estimate(&scores, &[2.5], 10, RowNorm::Adaptive);
        assert!((est[0] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn row_norm_full_selection_is_the_exact_sum() {
        let scores = DenseMatrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let est = row_norm_estimate(&scores, &[2.2133638394006434], 4, RowNorm::Adaptive);
        assert!((est[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn row_norm_hand_case() {
        // Entries (e^1, e^3) with d = 2, m = 4: the geometric mean is e^2 and
        // the adaptive estimate is e + e^3 + 2 e^2.
        let e1 = 1.0_f64.exp();
        let e2 = 2.0_f64.exp();
        let e3 = 3.0_f64.exp();
        let scores = DenseMatrix::from_rows(&[vec![e1, e3]]).unwrap();
        let est = row_norm_estimate(&scores, &[e2], 4, RowNorm::Adaptive);
        let expected = e1 + e3 + 2.0 * e2;
        assert!((expected - 37.581930949508013).abs() < 1e-11);
        assert!((est[0] - expected).abs() < 1e-12);
        let simple = row_norm_estimate(&scores, &[e2], 4, RowNorm::Simple);
        assert!((simple[0] - (e1 + e3) * 2.0).abs() < 1e-12);
        let off = row_norm_estimate(&scores, &[e2], 4, RowNorm::Off);
        assert!((off[0] - (e1 + e3)).abs() < 1e-12);
    }

    #[test]
    fn fallback_when_d_reaches_the_unpadded_length() {
        let input = random_input(10, 3, 4);
        let exact = exact_attention(&input);
        for d in [10, 16] {
            let cfg = SkeinConfig::new(d, RngSeed::new(1));
            let (out, trace) = skein_attention(&input, &cfg).unwrap();
            assert!(trace.exact_fallback);
            assert!(out.max_abs_diff(&exact) < 1e-10);
        }
    }

    #[test]
    fn identical_keys_make_every_mode_exact() {
        // All rows of K equal: the score matrix has identical columns and
        // the sampled reconstruction is exact for any d and seed.
        let seed = RngSeed::new(33);
        let q = generate_gaussian_matrix(16, 4, 1.0, &seed.stream(1)).unwrap();
        let k_row = generate_gaussian_matrix(1, 4, 1.0, &seed.stream(2)).unwrap();
        let k = DenseMatrix::from_rows(&vec![k_row.row(0).to_vec(); 16]).unwrap();
        let v = generate_gaussian_matrix(16, 4, 1.0, &seed.stream(3)).unwrap();
        let input = AttentionInput::new(q, k, v).unwrap();
        let exact = exact_attention(&input);
        for master in 0..4 {
            for d in [2, 5, 11] {
                for sampling in [Sampling::Importance, Sampling::Uniform] {
                    let cfg = SkeinConfig {
                        d,
                        sampling,
                        row_norm: RowNorm::Adaptive,
                        reuse_pilot: true,
                        seed: RngSeed::new(master),
                    };
                    let (out, _) = skein_attention(&input, &cfg).unwrap();
                    assert!(
                        out.max_abs_diff(&exact) < 1e-10,
                        "d={d} master={master} sampling={sampling:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn pilot_rows_are_exact_when_reused() {
        let input = random_input(20, 4, 6);
        let exact = exact_attention(&input);
        let cfg = SkeinConfig::new(5, RngSeed::new(2));
        let (out, trace) = skein_attention(&input, &cfg).unwrap();
        for &j in &trace.pilot_indices {
            for c in 0..4 {
                assert!((out.get(j, c) - exact.get(j, c)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn logit_shift_invariance_via_key_translation() {
        // Shifting every key by a common vector adds a row-dependent constant
        // to the logits; the adaptive output must not move.
        let input = random_input(14, 3, 9);
        let shift = [0.8, -0.5, 0.3];
        let mut k2_rows = Vec::new();
        for i in 0..14 {
            let row: Vec<f64> = input
                .k()
                .row(i)
                .iter()
                .zip(&shift)
                .map(|(a, b)| a + b)
                .collect();
            k2_rows.push(row);
        }
        let shifted = AttentionInput::new(
            input.q().clone(),
            DenseMatrix::from_rows(&k2_rows).unwrap(),
            input.v().clone(),
        )
        .unwrap();
        let cfg = SkeinConfig::new(4, RngSeed::new(3));
        let (a, _) = skein_attention(&input, &cfg).unwrap();
        let (b, _) = skein_attention(&shifted, &cfg).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn score_entry_count_is_two_d_m() {
        let input = random_input(32, 4, 12);
        let cfg = SkeinConfig::new(6, RngSeed::new(4));
        let (_, trace) = skein_attention(&input, &cfg).unwrap();
        assert_eq!(trace.score_entries_computed, 2 * 6 * 32);
        // Uniform sampling with reuse off skips the pilot scoring.
        let cfg = SkeinConfig {
            d: 6,
            sampling: Sampling::Uniform,
            row_norm: RowNorm::Adaptive,
            reuse_pilot: false,
            seed: RngSeed::new(4),
        };
        let (_, trace) = skein_attention(&input, &cfg).unwrap();
        assert_eq!(trace.score_entries_computed, 6 * 32);
        assert_eq!(trace.pilot_scores.rows(), 0);
    }

    #[test]
    fn padding_rows_stay_zero_and_probabilities_exclude_them() {
        let seed = RngSeed::new(15);
        let q = generate_gaussian_matrix(12, 3, 1.0, &seed.stream(1)).unwrap();
        let k = generate_gaussian_matrix(12, 3, 1.0, &seed.stream(2)).unwrap();
        let v = generate_gaussian_matrix(12, 3, 1.0, &seed.stream(3)).unwrap();
        let input = AttentionInput::with_padding(q, k, v, 8).unwrap();
        let cfg = SkeinConfig::new(3, RngSeed::new(6));
        let (out, trace) = skein_attention(&input, &cfg).unwrap();
        for i in 8..12 {
            assert_eq!(out.row(i), &[0.0, 0.0, 0.0]);
            assert_eq!(trace.estimated_probs[i], 0.0);
        }
        assert!(trace.column_indices.iter().all(|&j| j < 8));
        assert!(trace.pilot_indices.iter().all(|&j| j < 8));
    }

    #[test]
    fn appending_padding_does_not_move_unpadded_output() {
        let seed = RngSeed::new(40);
        let q = generate_gaussian_matrix(10, 3, 1.0, &seed.stream(1)).unwrap();
        let k = generate_gaussian_matrix(10, 3, 1.0, &seed.stream(2)).unwrap();
        let v = generate_gaussian_matrix(10, 3, 1.0, &seed.stream(3)).unwrap();
        let base = AttentionInput::new(q.clone(), k.clone(), v.clone()).unwrap();
        let cfg = SkeinConfig::new(4, RngSeed::new(7));
        let (out_base, _) = skein_attention(&base, &cfg).unwrap();

        let pad = 5;
        let extend = |m: &DenseMatrix| {
            let mut rows: Vec<Vec<f64>> = (0..10).map(|i| m.row(i).to_vec()).collect();
            rows.extend(std::iter::repeat(vec![9.0, 9.0, 9.0]).take(pad));
            DenseMatrix::from_rows(&rows).unwrap()
        };
        let padded =
            AttentionInput::with_padding(extend(&q), extend(&k), extend(&v), 10).unwrap();
        let (out_padded, _) = skein_attention(&padded, &cfg).unwrap();
        for i in 0..10 {
            for c in 0..3 {
                assert!((out_base.get(i, c) - out_padded.get(i, c)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn effective_d_shrinks_with_few_positive_columns() {
        // Zero value rows leave only two columns with positive weight.
        let q = generate_gaussian_matrix(6, 2, 1.0, &RngSeed::new(1)).unwrap();
        let k = generate_gaussian_matrix(6, 2, 1.0, &RngSeed::new(2)).unwrap();
        let mut v = DenseMatrix::zeros(6, 2);
        v.set(0, 0, 1.0);
        v.set(3, 1, 2.0);
        let input = AttentionInput::new(q, k, v).unwrap();
        let cfg = SkeinConfig::new(4, RngSeed::new(3));
        let (_, trace) = skein_attention(&input, &cfg).unwrap();
        assert_eq!(trace.requested_d, 4);
        assert_eq!(trace.effective_d, 2);
        let mut cols = trace.column_indices.clone();
        cols.sort_unstable();
        assert_eq!(cols, vec![0, 3]);
    }

    #[test]
    fn mean_spectral_loss_is_non_increasing_in_d() {
        // Monte Carlo sweep against the oracle at n = 64.
        use crate::metrics::error_report;
        let n = 64;
        let trials = 64;
        let d_values = [4usize, 8, 16, 32, 64];
        let mut means = Vec::new();
        let mut ses = Vec::new();
        for &d in &d_values {
            let mut losses = Vec::new();
            for t in 0..trials {
                let input = random_input(n, 8, 1000 + t);
                let exact = exact_attention(&input);
                let cfg = SkeinConfig::new(d, RngSeed::new(t).stream(d as u64));
                let (out, _) = skein_attention(&input, &cfg).unwrap();
                let report = error_report(&exact, &out, n).unwrap();
                losses.push(report.spectral_loss);
            }
            let mean = losses.iter().sum::<f64>() / trials as f64;
            let var = losses.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
                / (trials - 1) as f64;
            means.push(mean);
            ses.push((var / trials as f64).sqrt());
        }
        for i in 0..d_values.len() - 1 {
            let pooled = (ses[i].powi(2) + ses[i + 1].powi(2)).sqrt();
            assert!(
                means[i + 1] <= means[i] + pooled,
                "d {} -> {}: {} vs {}",
                d_values[i],
                d_values[i + 1],
                means[i],
                means[i + 1]
            );
        }
    }
}
