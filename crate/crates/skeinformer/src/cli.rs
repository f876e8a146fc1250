//! Command implementations behind the binary: synthetic data generation,
//! error sweeps over the approximation methods, bound verification, FLOPs
//! tables, and single-shot attention on matrix files.

use crate::baselines::{
    informer_attention, linformer_attention, linformer_unreduced_with_cap, vmean_attention,
};
use crate::error::{Error, Result};
use crate::matf::{read_matrix, write_matrix};
use crate::matrix::{generate_gaussian_matrix, AttentionInput, DenseMatrix};
use crate::metrics::{
    error_report, flops_estimate, flops_formula, flops_is_tool_defined, verify_lemma1,
    verify_prop1, ErrorReport, FlopsMethod,
};
use crate::oracle::{exact_attention, DEFAULT_ORACLE_CAP};
use crate::rng::{mix, RngSeed};
use crate::skein::{skein_attention, SkeinConfig};
use crate::sketch::{check_sketch_unbiasedness, jl_distortion_check, SketchKind};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Methods addressable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    VMean,
    Linformer,
    LinformerUnreduced,
    Informer,
    Skeinformer,
}

impl Method {
    /// The set accepted by the bench sweep.
    pub const BENCH: [Method; 5] = [
        Method::Skeinformer,
        Method::Informer,
        Method::Linformer,
        Method::LinformerUnreduced,
        Method::VMean,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::VMean => "vmean",
            Method::Linformer => "linformer",
            Method::LinformerUnreduced => "linformer_unreduced",
            Method::Informer => "informer",
            Method::Skeinformer => "skeinformer",
        }
    }

    pub fn parse(name: &str) -> Result<Method> {
        match name.trim() {
            "exact" => Ok(Method::Exact),
            "vmean" => Ok(Method::VMean),
            "linformer" => Ok(Method::Linformer),
            "linformer_unreduced" => Ok(Method::LinformerUnreduced),
            "informer" => Ok(Method::Informer),
            "skeinformer" => Ok(Method::Skeinformer),
            other => Err(Error::invalid(format!(
                "unknown method '{other}' (expected one of exact, vmean, linformer, \
                 linformer_unreduced, informer, skeinformer)"
            ))),
        }
    }
}

/// Configuration of one bench sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub n: usize,
    pub p: usize,
    pub d_values: Vec<usize>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub stdev: f64,
    pub seed: RngSeed,
    /// None writes to standard output.
    pub output_path: Option<PathBuf>,
    /// Suppress the timestamp header and zero the elapsed-time column so two
    /// runs with the same configuration are byte-identical.
    pub deterministic: bool,
    pub oracle_cap: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::invalid("n and p must be >= 1"));
        }
        if self.d_values.is_empty() {
            return Err(Error::invalid("at least one d value is required"));
        }
        if let Some(&bad) = self.d_values.iter().find(|&&d| d == 0 || d > self.n) {
            return Err(Error::invalid(format!(
                "d value {bad} must be in 1..={}",
                self.n
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if let Some(m) = self.methods.iter().find(|m| !Method::BENCH.contains(m)) {
            return Err(Error::invalid(format!(
                "method '{}' is not benchable",
                m.name()
            )));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if !(self.stdev > 0.0) {
            return Err(Error::invalid("stdev must be > 0"));
        }
        Ok(())
    }
}

pub const CSV_HEADER: &str = "method,n,p,d,trial,seed,spectral_loss,frobenius_loss,\
relative_spectral,relative_frobenius,elapsed_ns,score_entries_computed,\
mean_spectral_loss,se_spectral_loss";

/// Per-(method, d) aggregate produced alongside the CSV.
#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub method: Method,
    pub d: usize,
    pub mean_spectral: f64,
    pub se_spectral: f64,
}

#[derive(Debug, Clone)]
pub struct BenchSummary {
    pub data_rows: usize,
    pub aggregates: Vec<AggregateRow>,
}

struct Cell {
    report: ErrorReport,
    elapsed_ns: u128,
    entries: u64,
}

fn run_bench_method(
    method: Method,
    input: &AttentionInput,
    d: usize,
    seed: &RngSeed,
    oracle_cap: usize,
) -> Result<(DenseMatrix, u64)> {
    let (n, m) = (input.n(), input.unpadded_len());
    match method {
        Method::Skeinformer => {
            let cfg = SkeinConfig::new(d, *seed);
            let (out, trace) = skein_attention(input, &cfg)?;
            Ok((out, trace.score_entries_computed))
        }
        Method::Informer => {
            let out = informer_attention(input, d, seed);
            let entries = if d >= m { m * m } else { 2 * d * m };
            Ok((out, entries as u64))
        }
        Method::Linformer => {
            let out = linformer_attention(input, d, seed)?;
            Ok((out, (m * d) as u64))
        }
        Method::LinformerUnreduced => {
            let out = linformer_unreduced_with_cap(input, d, seed, oracle_cap)?;
            Ok((out, (m * m) as u64))
        }
        Method::VMean => Ok((vmean_attention(input), 0)),
        Method::Exact => {
            if n > oracle_cap {
                return Err(Error::ResourceLimit(format!(
                    "exact attention refused above the cap ({n} > {oracle_cap})"
                )));
            }
            Ok((exact_attention(input), (m * m) as u64))
        }
    }
}

/// Runs the sweep and writes the CSV. For every (method, d, trial) one data
/// row is emitted in that order, followed per (method, d) by an aggregate row
/// with `trial = -1` carrying the mean spectral loss and its standard error.
/// Inputs are generated per trial and the exact output is shared by all
/// methods within the trial.
pub fn cmd_bench(cfg: &SweepConfig) -> Result<BenchSummary> {
    cfg.validate()?;
    let cells_per_trial = cfg.methods.len() * cfg.d_values.len();
    let trial_cells: Vec<Vec<Cell>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<Cell>> {
            let trial_seed = cfg.seed.for_trial(trial as u64);
            let q = generate_gaussian_matrix(cfg.n, cfg.p, cfg.stdev, &trial_seed.stream(1))?;
            let k = generate_gaussian_matrix(cfg.n, cfg.p, cfg.stdev, &trial_seed.stream(2))?;
            let v = generate_gaussian_matrix(cfg.n, cfg.p, cfg.stdev, &trial_seed.stream(3))?;
            let input = AttentionInput::new(q, k, v)?;
            let exact = exact_attention(&input);
            let mut cells = Vec::with_capacity(cells_per_trial);
            for (mi, &method) in cfg.methods.iter().enumerate() {
                for &d in &cfg.d_values {
                    let method_seed =
                        trial_seed.stream(mix(0x4d00 + mi as u64, d as u64));
                    let start = Instant::now();
                    let (out, entries) =
                        run_bench_method(method, &input, d, &method_seed, cfg.oracle_cap)?;
                    let elapsed_ns = start.elapsed().as_nanos();
                    let report = error_report(&exact, &out, input.unpadded_len())?;
                    cells.push(Cell {
                        report,
                        elapsed_ns,
                        entries,
                    });
                }
            }
            Ok(cells)
        })
        .collect::<Result<_>>()?;

    let mut out: Box<dyn std::io::Write> = match &cfg.output_path {
        Some(path) => Box::new(std::io::BufWriter::new(std::fs::File::create(path)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    if !cfg.deterministic {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0);
        writeln!(out, "# generated_unix_ns={now}")?;
    }
    writeln!(out, "{CSV_HEADER}")?;

    let mut aggregates = Vec::new();
    let mut data_rows = 0usize;
    for (mi, &method) in cfg.methods.iter().enumerate() {
        for (di, &d) in cfg.d_values.iter().enumerate() {
            let cell_index = mi * cfg.d_values.len() + di;
            let mut losses = Vec::with_capacity(cfg.trials);
            for (trial, cells) in trial_cells.iter().enumerate() {
                let cell = &cells[cell_index];
                let r = &cell.report;
                if !(r.spectral_loss >= 0.0) || !(r.relative_spectral <= 10.0) {
                    return Err(Error::Verification(format!(
                        "sanity ceiling: method {} d {d} trial {trial} has \
                         spectral_loss {} relative_spectral {}",
                        method.name(),
                        r.spectral_loss,
                        r.relative_spectral
                    )));
                }
                let elapsed = if cfg.deterministic { 0 } else { cell.elapsed_ns };
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},,",
                    method.name(),
                    cfg.n,
                    cfg.p,
                    d,
                    trial,
                    cfg.seed.for_trial(trial as u64).master_seed,
                    r.spectral_loss,
                    r.frobenius_loss,
                    r.relative_spectral,
                    r.relative_frobenius,
                    elapsed,
                    cell.entries,
                )?;
                losses.push(r.spectral_loss);
                data_rows += 1;
            }
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            let se = if losses.len() > 1 {
                let var = losses.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
                    / (losses.len() - 1) as f64;
                (var / losses.len() as f64).sqrt()
            } else {
                0.0
            };
            writeln!(
                out,
                "{},{},{},{},-1,{},,,,,,,{},{}",
                method.name(),
                cfg.n,
                cfg.p,
                d,
                cfg.seed.master_seed,
                mean,
                se,
            )?;
            aggregates.push(AggregateRow {
                method,
                d,
                mean_spectral: mean,
                se_spectral: se,
            });
        }
    }
    out.flush()?;
    Ok(BenchSummary {
        data_rows,
        aggregates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyKind {
    Prop1,
    Lemma1,
    SketchUnbiased,
    Jl,
}

impl VerifyKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "prop1" => Ok(VerifyKind::Prop1),
            "lemma1" => Ok(VerifyKind::Lemma1),
            "sketch_unbiased" => Ok(VerifyKind::SketchUnbiased),
            "jl" => Ok(VerifyKind::Jl),
            other => Err(Error::invalid(format!(
                "unknown verification '{other}' (expected prop1, lemma1, sketch_unbiased, jl)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyArgs {
    pub kind: VerifyKind,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub trials: usize,
    pub seed: RngSeed,
    /// For `sketch_unbiased`: "gaussian" or "subsample".
    pub sketch_kind: String,
}

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub pass: bool,
    pub report: String,
}

/// Runs one statistical verifier and renders a plain-text report.
pub fn cmd_verify(args: &VerifyArgs) -> Result<VerifyOutcome> {
    let mut text = String::new();
    let pass = match args.kind {
        VerifyKind::Prop1 => {
            let r = verify_prop1(args.n, args.p, args.d, args.delta, args.trials, &args.seed)?;
            writeln!(
                text,
                "frobenius tail bound: n={} p={} d={} delta={} trials={} seed={}",
                args.n, args.p, args.d, args.delta, r.trials, args.seed.master_seed
            )
            .unwrap();
            writeln!(
                text,
                "violation rate {:.6} (threshold {:.6}), mean squared error {:.6e} (se {:.2e}), beta {:.3}",
                r.violation_rate, r.threshold, r.mean_sq_error, r.se_sq_error, r.mean_beta
            )
            .unwrap();
            r.pass
        }
        VerifyKind::Lemma1 => {
            let r = verify_lemma1(args.n, args.p, args.delta, args.trials, &args.seed)?;
            writeln!(
                text,
                "pilot probability floor: n={} p={} delta={} trials={} seed={}",
                args.n, args.p, args.delta, r.trials, args.seed.master_seed
            )
            .unwrap();
            writeln!(
                text,
                "failure rate {:.6} (threshold {:.6}), pilot size min/mean/max {}/{:.1}/{}, capped {}",
                r.failure_rate,
                r.threshold,
                r.pilot_size_min,
                r.mean_pilot_size,
                r.pilot_size_max,
                r.capped_trials
            )
            .unwrap();
            r.pass
        }
        VerifyKind::SketchUnbiased => {
            let kind = match args.sketch_kind.as_str() {
                "gaussian" => SketchKind::Gaussian,
                "subsample" => SketchKind::SubsampleWithReplacement,
                other => {
                    return Err(Error::invalid(format!(
                        "unknown sketch kind '{other}' (expected gaussian or subsample)"
                    )))
                }
            };
            let probs = match kind {
                SketchKind::Gaussian => None,
                _ => Some(vec![1.0 / args.n as f64; args.n]),
            };
            let r = check_sketch_unbiasedness(
                kind,
                args.n,
                args.d,
                probs,
                args.trials,
                &args.seed,
                5.0,
            )?;
            writeln!(
                text,
                "sketch unbiasedness ({}): n={} d={} trials={} seed={}",
                args.sketch_kind, args.n, args.d, r.trials, args.seed.master_seed
            )
            .unwrap();
            writeln!(
                text,
                "max |mean(SS^T) - I| = {:.3e} ({:.2} standard errors, tolerance {:.1})",
                r.max_abs_deviation, r.max_se_units, r.tolerance_se_units
            )
            .unwrap();
            r.pass
        }
        VerifyKind::Jl => {
            let rate =
                jl_distortion_check(args.n, args.d, args.epsilon, args.trials, &args.seed)?;
            let threshold = args.delta
                + 3.0 * (args.delta * (1.0 - args.delta) / args.trials as f64).sqrt();
            writeln!(
                text,
                "distortion guarantee: n={} d={} epsilon={} delta={} trials={} seed={}",
                args.n, args.d, args.epsilon, args.delta, args.trials, args.seed.master_seed
            )
            .unwrap();
            writeln!(
                text,
                "failure rate {rate:.6} (threshold {threshold:.6})"
            )
            .unwrap();
            rate <= threshold
        }
    };
    writeln!(text, "{}", if pass { "PASS" } else { "FAIL" }).unwrap();
    Ok(VerifyOutcome { pass, report: text })
}

/// Renders the leading-term FLOPs table for one (n, p, d).
pub fn cmd_flops(n: usize, p: usize, d: usize) -> Result<String> {
    if n == 0 || p == 0 || d == 0 {
        return Err(Error::invalid("n, p and d must be >= 1"));
    }
    let mut text = String::new();
    writeln!(text, "{:<14} {:>16}  formula", "method", "flops").unwrap();
    for method in FlopsMethod::ALL {
        let count = flops_estimate(method, n, p, d)?;
        let note = if flops_is_tool_defined(method) {
            " (tool-defined)"
        } else {
            ""
        };
        writeln!(
            text,
            "{:<14} {:>16}  {}{}",
            method.name(),
            count,
            flops_formula(method),
            note
        )
        .unwrap();
    }
    Ok(text)
}

#[derive(Debug, Clone)]
pub struct AttnArgs {
    pub method: Method,
    pub q_path: PathBuf,
    pub k_path: PathBuf,
    pub v_path: PathBuf,
    pub d: usize,
    pub seed: RngSeed,
    pub unpadded_len: Option<usize>,
    pub out_path: PathBuf,
    pub oracle_cap: usize,
}

/// Applies one method to MATF inputs and writes the MATF output.
pub fn cmd_attn(args: &AttnArgs) -> Result<()> {
    let q = read_matrix(&args.q_path)?;
    let k = read_matrix(&args.k_path)?;
    let v = read_matrix(&args.v_path)?;
    let n = q.rows();
    let input =
        AttentionInput::with_padding(q, k, v, args.unpadded_len.unwrap_or(n))?;
    let (out, _) = run_bench_method(
        args.method,
        &input,
        args.d,
        &args.seed,
        args.oracle_cap,
    )?;
    write_matrix(&args.out_path, &out)
}

/// Generates a Gaussian matrix and writes it as MATF.
pub fn cmd_gen(
    rows: usize,
    cols: usize,
    stdev: f64,
    seed: &RngSeed,
    out_path: &Path,
) -> Result<()> {
    let m = generate_gaussian_matrix(rows, cols, stdev, seed)?;
    write_matrix(out_path, &m)
}

/// Default sweep of sub-sample sizes, 2^3 through 2^8.
pub fn default_d_values() -> Vec<usize> {
    vec![8, 16, 32, 64, 128, 256]
}

pub fn default_oracle_cap() -> usize {
    DEFAULT_ORACLE_CAP
}
