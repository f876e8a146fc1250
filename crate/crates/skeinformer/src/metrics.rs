//! Error norms, FLOPs accounting, and the statistical verifiers for the
//! sampling guarantees.

use crate::error::{Error, Result};
use crate::matrix::{generate_gaussian_matrix, AttentionInput, DenseMatrix};
use crate::oracle::{score_matrices_with_cap, DEFAULT_ORACLE_CAP};
use crate::rng::RngSeed;
use crate::skein::{estimate_probs, pilot_sample};
use crate::sketch::{draw_subsample, optimal_subsample_probs, SketchKind, SketchSpec};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

/// Spectral/Frobenius losses of an approximation against the exact output,
/// restricted to the unpadded rows.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub spectral_loss: f64,
    pub frobenius_loss: f64,
    pub relative_spectral: f64,
    pub relative_frobenius: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SpectralEstimate {
    pub value: f64,
    /// False when the iteration budget ran out before the tolerance held.
    pub converged: bool,
    pub iterations: usize,
}

/// Largest singular value by power iteration on `M^T M` (or `M M^T`,
/// whichever is smaller), with a seeded random start. Stops once the
/// relative change stays below `tol` for two consecutive iterations.
pub fn spectral_norm(
    m: &DenseMatrix,
    tol: f64,
    max_iter: usize,
    seed: &RngSeed,
) -> Result<SpectralEstimate> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::invalid("spectral-norm tolerance must be > 0"));
    }
    if m.frobenius_norm() == 0.0 {
        return Ok(SpectralEstimate {
            value: 0.0,
            converged: true,
            iterations: 0,
        });
    }
    let tall = m.rows() >= m.cols();
    let dim = if tall { m.cols() } else { m.rows() };
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = seed.rng();
    let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
    normalize(&mut v);

    // One multiplication by the Gram operator: returns sigma estimate for the
    // current unit vector and overwrites it with the next iterate.
    let mut apply = |v: &mut Vec<f64>| -> f64 {
        let (projected, back) = if tall {
            let u = mat_vec(m, v);
            let w = mat_t_vec(m, &u);
            (u, w)
        } else {
            let u = mat_t_vec(m, v);
            let w = mat_vec(m, &u);
            (u, w)
        };
        let sigma = projected.iter().map(|x| x * x).sum::<f64>().sqrt();
        *v = back;
        let norm = normalize(v);
        if norm == 0.0 {
            // Start vector fell in the null space; re-randomize.
            *v = (0..dim).map(|_| normal.sample(&mut rng)).collect();
            normalize(v);
        }
        sigma
    };

    let mut previous = 0.0f64;
    let mut hits = 0;
    for iteration in 1..=max_iter {
        let sigma = apply(&mut v);
        let scale = sigma.abs().max(f64::MIN_POSITIVE);
        if (sigma - previous).abs() <= tol * scale {
            hits += 1;
            if hits >= 2 {
                return Ok(SpectralEstimate {
                    value: sigma,
                    converged: true,
                    iterations: iteration,
                });
            }
        } else {
            hits = 0;
        }
        previous = sigma;
    }
    Ok(SpectralEstimate {
        value: previous,
        converged: false,
        iterations: max_iter,
    })
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

fn mat_vec(m: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.rows()];
    for i in 0..m.rows() {
        let row = m.row(i);
        let mut acc = 0.0;
        for j in 0..row.len() {
            acc += row[j] * v[j];
        }
        out[i] = acc;
    }
    out
}

fn mat_t_vec(m: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        let row = m.row(i);
        let vi = v[i];
        if vi == 0.0 {
            continue;
        }
        for j in 0..row.len() {
            out[j] += row[j] * vi;
        }
    }
    out
}

const REPORT_TOL: f64 = 1e-8;
const REPORT_MAX_ITER: usize = 10_000;
const REPORT_SEED: RngSeed = RngSeed {
    master_seed: 0x5bec7 + 0,
    stream_id: 0,
};

/// Loss report of `approx` against `exact` over the first `unpadded_len`
/// rows. Spectral norms use power iteration at tolerance 1e-8.
pub fn error_report(
    exact: &DenseMatrix,
    approx: &DenseMatrix,
    unpadded_len: usize,
) -> Result<ErrorReport> {
    if exact.rows() != approx.rows() || exact.cols() != approx.cols() {
        return Err(Error::invalid(format!(
            "error report shapes {}x{} vs {}x{} differ",
            exact.rows(),
            exact.cols(),
            approx.rows(),
            approx.cols()
        )));
    }
    if unpadded_len == 0 || unpadded_len > exact.rows() {
        return Err(Error::invalid("unpadded length out of range"));
    }
    let exact_top = exact.top_rows(unpadded_len);
    let diff = exact_top.sub(&approx.top_rows(unpadded_len))?;
    let spectral_loss = spectral_norm(&diff, REPORT_TOL, REPORT_MAX_ITER, &REPORT_SEED)?.value;
    let frobenius_loss = diff.frobenius_norm();
    let exact_spectral =
        spectral_norm(&exact_top, REPORT_TOL, REPORT_MAX_ITER, &REPORT_SEED)?.value;
    let exact_frobenius = exact_top.frobenius_norm();
    let ratio = |num: f64, den: f64| {
        if den > 0.0 {
            num / den
        } else if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    Ok(ErrorReport {
        spectral_loss,
        frobenius_loss,
        relative_spectral: ratio(spectral_loss, exact_spectral),
        relative_frobenius: ratio(frobenius_loss, exact_frobenius),
    })
}

/// Parameters of the Frobenius-error tail bound.
#[derive(Debug, Clone, Copy)]
pub struct BoundParams {
    /// Quality coefficient in (0, 1].
    pub beta: f64,
    pub delta: f64,
    /// `1 + sqrt((8 / beta) ln(1 / delta))`.
    pub eta: f64,
    /// Column-norm floor `min_i ||B^(i)||^2 / n`.
    pub column_norm_floor: f64,
}

impl BoundParams {
    pub fn eta_for(beta: f64, delta: f64) -> f64 {
        1.0 + (8.0 / beta * (1.0 / delta).ln()).sqrt()
    }

    pub fn new(beta: f64, delta: f64, column_norm_floor: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::invalid(format!("beta must be in (0, 1], got {beta}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must be in (0, 1), got {delta}"
            )));
        }
        Ok(BoundParams {
            beta,
            delta,
            eta: Self::eta_for(beta, delta),
            column_norm_floor,
        })
    }

    /// Reads the realized column-norm floor off an explicit score matrix.
    pub fn from_scores(b: &DenseMatrix, beta: f64, delta: f64) -> Result<Self> {
        let floor = column_norm_floor(b);
        BoundParams::new(beta, delta, floor)
    }
}

fn column_sq_norms(b: &DenseMatrix) -> Vec<f64> {
    let n = b.cols();
    let mut col_sq = vec![0.0; n];
    for i in 0..b.rows() {
        let row = b.row(i);
        for j in 0..n {
            col_sq[j] += row[j] * row[j];
        }
    }
    col_sq
}

fn column_norm_floor(b: &DenseMatrix) -> f64 {
    let n = b.rows() as f64;
    column_sq_norms(b)
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
        / n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlopsMethod {
    Standard,
    Linformer,
    Informer,
    Skeinformer,
    VMean,
}

impl FlopsMethod {
    pub const ALL: [FlopsMethod; 5] = [
        FlopsMethod::Standard,
        FlopsMethod::Linformer,
        FlopsMethod::Informer,
        FlopsMethod::Skeinformer,
        FlopsMethod::VMean,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FlopsMethod::Standard => "standard",
            FlopsMethod::Linformer => "linformer",
            FlopsMethod::Informer => "informer",
            FlopsMethod::Skeinformer => "skeinformer",
            FlopsMethod::VMean => "vmean",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "standard" | "exact" => Ok(FlopsMethod::Standard),
            "linformer" => Ok(FlopsMethod::Linformer),
            "informer" => Ok(FlopsMethod::Informer),
            "skeinformer" => Ok(FlopsMethod::Skeinformer),
            "vmean" => Ok(FlopsMethod::VMean),
            other => Err(Error::invalid(format!("unknown flops method '{other}'"))),
        }
    }
}

/// Leading-term FLOPs formula as text.
pub fn flops_formula(method: FlopsMethod) -> &'static str {
    match method {
        FlopsMethod::Standard => "2*n^2*p",
        FlopsMethod::Linformer => "4*n*d*p",
        FlopsMethod::Informer => "3*n*d*p",
        FlopsMethod::Skeinformer => "4*n*d*p",
        FlopsMethod::VMean => "n*p",
    }
}

/// Whether the formula is a convention of this tool rather than part of the
/// complexity table the others come from.
pub fn flops_is_tool_defined(method: FlopsMethod) -> bool {
    method == FlopsMethod::VMean
}

/// Leading-term FLOPs count for one attention call.
pub fn flops_estimate(method: FlopsMethod, n: usize, p: usize, d: usize) -> Result<u64> {
    let n = n as u128;
    let p = p as u128;
    let d = d as u128;
    let count = match method {
        FlopsMethod::Standard => 2 * n * n * p,
        FlopsMethod::Linformer => 4 * n * d * p,
        FlopsMethod::Informer => 3 * n * d * p,
        FlopsMethod::Skeinformer => 4 * n * d * p,
        FlopsMethod::VMean => n * p,
    };
    u64::try_from(count).map_err(|_| Error::invalid("flops count overflows u64"))
}

/// Outcome of a single tail-bound trial.
#[derive(Debug, Clone, Copy)]
pub struct Prop1Trial {
    pub sq_error: f64,
    pub bound: f64,
    pub violation: bool,
    pub beta: f64,
}

/// One trial of the Frobenius tail bound on a given instance: approximate
/// `B V` by `B S S^T V` with a with-replacement sub-sampling sketch whose
/// probabilities are the norm-product optimum mixed toward uniform by
/// `flatten`, and compare the squared error against
/// `eta^2 / (beta d) * ||B||_F^2 ||V||_F^2`.
pub fn prop1_trial(
    input: &AttentionInput,
    d: usize,
    delta: f64,
    flatten: f64,
    seed: &RngSeed,
    cap: usize,
) -> Result<Prop1Trial> {
    let n = input.n();
    let sm = score_matrices_with_cap(input, cap)?;
    let v = input.v();
    let bv = sm.b.matmul(v)?;
    let opt = optimal_subsample_probs(&sm.b, v, input.unpadded_len())?;
    let uniform = 1.0 / n as f64;
    let probs: Vec<f64> = opt
        .probs
        .iter()
        .map(|&q| (1.0 - flatten) * q + flatten * uniform)
        .collect();
    let beta = opt
        .probs
        .iter()
        .zip(&probs)
        .filter(|(&q, _)| q > 0.0)
        .map(|(&q, &pu)| pu / q)
        .fold(f64::INFINITY, f64::min)
        .min(1.0);
    let draw = draw_subsample(&SketchSpec {
        kind: SketchKind::SubsampleWithReplacement,
        rows: n,
        width: d,
        probs: Some(probs.clone()),
        seed: *seed,
    })?;
    let p = input.p();
    let mut approx = DenseMatrix::zeros(n, p);
    for (&i, &scale) in draw.indices.iter().zip(&draw.scale) {
        let coeff = scale * scale; // 1 / (d p_i)
        let v_row = v.row(i);
        for r in 0..n {
            let w = coeff * sm.b.get(r, i);
            if w == 0.0 {
                continue;
            }
            let out = approx.row_mut(r);
            for c in 0..p {
                out[c] += w * v_row[c];
            }
        }
    }
    let sq_error = bv.sub(&approx)?.frobenius_norm().powi(2);
    let eta = BoundParams::eta_for(beta, delta);
    let b_frob = sm.b.frobenius_norm();
    let v_frob = v.frobenius_norm();
    let bound = eta * eta / (beta * d as f64) * b_frob * b_frob * v_frob * v_frob;
    Ok(Prop1Trial {
        sq_error,
        bound,
        violation: sq_error > bound,
        beta,
    })
}

#[derive(Debug, Clone)]
pub struct Prop1Report {
    pub trials: usize,
    pub violations: usize,
    pub violation_rate: f64,
    /// `delta` plus three binomial standard errors.
    pub threshold: f64,
    pub mean_sq_error: f64,
    pub se_sq_error: f64,
    pub mean_beta: f64,
    pub pass: bool,
}

/// Monte Carlo check of the Frobenius tail bound with the optimal
/// probabilities (beta = 1) on fresh Gaussian instances.
pub fn verify_prop1(
    n: usize,
    p: usize,
    d: usize,
    delta: f64,
    trials: usize,
    seed: &RngSeed,
) -> Result<Prop1Report> {
    verify_prop1_flattened(n, p, d, delta, trials, seed, 0.0)
}

/// Same check with the probabilities deliberately flattened toward uniform;
/// the realized quality coefficient is computed exactly per trial.
pub fn verify_prop1_flattened(
    n: usize,
    p: usize,
    d: usize,
    delta: f64,
    trials: usize,
    seed: &RngSeed,
    flatten: f64,
) -> Result<Prop1Report> {
    if n == 0 || p == 0 || d == 0 {
        return Err(Error::invalid("dimensions must be >= 1"));
    }
    if n > DEFAULT_ORACLE_CAP {
        return Err(Error::ResourceLimit(format!(
            "n = {n} exceeds the score-matrix cap"
        )));
    }
    if d > n {
        return Err(Error::invalid("d must not exceed n"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")));
    }
    if !(0.0..1.0).contains(&flatten) {
        return Err(Error::invalid("flatten must be in [0, 1)"));
    }
    if trials < 100 {
        return Err(Error::invalid("prop1 verification needs at least 100 trials"));
    }
    let outcomes: Vec<Prop1Trial> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = seed.for_trial(t as u64);
            let input = gaussian_input(n, p, &trial_seed)?;
            prop1_trial(
                &input,
                d,
                delta,
                flatten,
                &trial_seed.stream(4),
                DEFAULT_ORACLE_CAP,
            )
        })
        .collect::<Result<_>>()?;
    let violations = outcomes.iter().filter(|o| o.violation).count();
    let mean_sq_error = outcomes.iter().map(|o| o.sq_error).sum::<f64>() / trials as f64;
    let var = outcomes
        .iter()
        .map(|o| (o.sq_error - mean_sq_error).powi(2))
        .sum::<f64>()
        / (trials - 1) as f64;
    let mean_beta = outcomes.iter().map(|o| o.beta).sum::<f64>() / trials as f64;
    let rate = violations as f64 / trials as f64;
    let threshold = delta + 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt();
    Ok(Prop1Report {
        trials,
        violations,
        violation_rate: rate,
        threshold,
        mean_sq_error,
        se_sq_error: (var / trials as f64).sqrt(),
        mean_beta,
        pass: rate <= threshold,
    })
}

#[derive(Debug, Clone)]
pub struct Lemma1Report {
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Pilot sizes actually used (after capping at n).
    pub pilot_size_min: usize,
    pub pilot_size_max: usize,
    pub mean_pilot_size: f64,
    /// Trials whose required pilot size exceeded n and was capped.
    pub capped_trials: usize,
}

/// Monte Carlo check that pilot-estimated probabilities undershoot the
/// optimal ones by at most the factor sqrt(1/3), with the pilot size
/// `ceil((2 / C^2) ln(2 n / delta))` taken from the realized column-norm
/// floor C of each instance (capped at n; capped trials are counted).
pub fn verify_lemma1(
    n: usize,
    p: usize,
    delta: f64,
    trials: usize,
    seed: &RngSeed,
) -> Result<Lemma1Report> {
    if n == 0 || p == 0 {
        return Err(Error::invalid("dimensions must be >= 1"));
    }
    if n > DEFAULT_ORACLE_CAP {
        return Err(Error::ResourceLimit(format!(
            "n = {n} exceeds the score-matrix cap"
        )));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::invalid(format!(
            "delta must be in (0, 1/2), got {delta}"
        )));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    struct TrialOutcome {
        failed: bool,
        pilot_size: usize,
        capped: bool,
    }
    let beta = (1.0f64 / 3.0).sqrt();
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = seed.for_trial(t as u64);
            let input = gaussian_input(n, p, &trial_seed)?;
            let sm = score_matrices_with_cap(&input, DEFAULT_ORACLE_CAP)?;
            let floor = column_norm_floor(&sm.b);
            let required = (2.0 / (floor * floor) * (2.0 * n as f64 / delta).ln()).ceil();
            let capped = !(required <= n as f64);
            let pilot_size = if capped { n } else { required as usize };
            let pilot = pilot_sample(n, pilot_size, &trial_seed.stream(4))?;
            let mut pilot_rows = DenseMatrix::zeros(pilot.len(), n);
            for (k, &j) in pilot.iter().enumerate() {
                pilot_rows.row_mut(k).copy_from_slice(sm.b.row(j));
            }
            let estimated = estimate_probs(&pilot_rows, input.v(), n);
            let optimal = optimal_subsample_probs(&sm.b, input.v(), n)?;
            let failed = estimated
                .probs
                .iter()
                .zip(&optimal.probs)
                .any(|(&est, &opt)| est < beta * opt);
            Ok(TrialOutcome {
                failed,
                pilot_size,
                capped,
            })
        })
        .collect::<Result<_>>()?;
    let failures = outcomes.iter().filter(|o| o.failed).count();
    let rate = failures as f64 / trials as f64;
    let threshold = delta + 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt();
    Ok(Lemma1Report {
        trials,
        failures,
        failure_rate: rate,
        threshold,
        pass: rate <= threshold,
        pilot_size_min: outcomes.iter().map(|o| o.pilot_size).min().unwrap_or(0),
        pilot_size_max: outcomes.iter().map(|o| o.pilot_size).max().unwrap_or(0),
        mean_pilot_size: outcomes.iter().map(|o| o.pilot_size as f64).sum::<f64>()
            / trials as f64,
        capped_trials: outcomes.iter().filter(|o| o.capped).count(),
    })
}

fn gaussian_input(n: usize, p: usize, seed: &RngSeed) -> Result<AttentionInput> {
    let q = generate_gaussian_matrix(n, p, 1.0, &seed.stream(1))?;
    let k = generate_gaussian_matrix(n, p, 1.0, &seed.stream(2))?;
    let v = generate_gaussian_matrix(n, p, 1.0, &seed.stream(3))?;
    AttentionInput::new(q, k, v)
}
