//! Thin command-line front end over the library.
//!
//! Exit codes: 0 success / verification PASS, 1 usage error, 2 i/o or format
//! error, 3 verification FAIL.

use clap::{Args, Parser, Subcommand};
use skeinformer::cli::{
    self, AttnArgs, Method, SweepConfig, VerifyArgs, VerifyKind,
};
use skeinformer::rng::RngSeed;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "skeinformer",
    about = "Exact and sketched softmax attention: generation, benchmarking, verification",
    disable_help_subcommand = true
)]
struct Top {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Gaussian matrix and write it in MATF format.
    Gen(GenArgs),
    /// Apply one attention method to MATF inputs and write the MATF output.
    Attn(AttnCli),
    /// Sweep approximation error over methods and sub-sample sizes, as CSV.
    Bench(BenchArgs),
    /// Run a statistical verifier and report PASS or FAIL.
    Verify(VerifyCli),
    /// Print the leading-term FLOPs table for one problem size.
    Flops(FlopsArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Rows of the generated matrix.
    #[arg(long)]
    n: usize,
    /// Columns of the generated matrix.
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 1.0)]
    stdev: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output MATF path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttnCli {
    /// exact | vmean | linformer | linformer_unreduced | informer | skeinformer
    #[arg(long)]
    method: String,
    #[arg(long)]
    q: PathBuf,
    #[arg(long)]
    k: PathBuf,
    #[arg(long)]
    v: PathBuf,
    /// Sub-sample size or sketch width (ignored by exact and vmean).
    #[arg(long, default_value_t = 64)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of unpadded rows; defaults to the full sequence length.
    #[arg(long)]
    unpadded_len: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = cli::default_oracle_cap())]
    oracle_cap: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 512)]
    n: usize,
    #[arg(long, default_value_t = 32)]
    p: usize,
    /// Comma-separated sub-sample sizes.
    #[arg(long, value_delimiter = ',', default_values_t = cli::default_d_values())]
    d: Vec<usize>,
    /// Comma-separated method names.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "skeinformer,informer,linformer,vmean"
    )]
    methods: Vec<String>,
    #[arg(long, default_value_t = 64)]
    trials: usize,
    #[arg(long, default_value_t = 1.0)]
    stdev: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output path; omitted writes to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress the timestamp header and zero the elapsed-time column so
    /// reruns are byte-identical.
    #[arg(long)]
    deterministic: bool,
    #[arg(long, default_value_t = cli::default_oracle_cap())]
    oracle_cap: usize,
}

#[derive(Args)]
struct VerifyCli {
    /// prop1 | lemma1 | sketch_unbiased | jl
    kind: String,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    p: usize,
    #[arg(long, default_value_t = 16)]
    d: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Distortion bound for the jl verifier.
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// gaussian | subsample (sketch_unbiased only).
    #[arg(long, default_value = "gaussian")]
    sketch_kind: String,
}

#[derive(Args)]
struct FlopsArgs {
    #[arg(long, default_value_t = 1024)]
    n: usize,
    #[arg(long, default_value_t = 32)]
    p: usize,
    #[arg(long, default_value_t = 256)]
    d: usize,
}

fn run(top: Top) -> skeinformer::Result<bool> {
    match top.command {
        Command::Gen(args) => {
            cli::cmd_gen(args.n, args.p, args.stdev, &RngSeed::new(args.seed), &args.out)?;
            Ok(true)
        }
        Command::Attn(args) => {
            cli::cmd_attn(&AttnArgs {
                method: Method::parse(&args.method)?,
                q_path: args.q,
                k_path: args.k,
                v_path: args.v,
                d: args.d,
                seed: RngSeed::new(args.seed),
                unpadded_len: args.unpadded_len,
                out_path: args.out,
                oracle_cap: args.oracle_cap,
            })?;
            Ok(true)
        }
        Command::Bench(args) => {
            let methods = args
                .methods
                .iter()
                .map(|m| Method::parse(m))
                .collect::<skeinformer::Result<Vec<_>>>()?;
            cli::cmd_bench(&SweepConfig {
                n: args.n,
                p: args.p,
                d_values: args.d,
                methods,
                trials: args.trials,
                stdev: args.stdev,
                seed: RngSeed::new(args.seed),
                output_path: args.out,
                deterministic: args.deterministic,
                oracle_cap: args.oracle_cap,
            })?;
            Ok(true)
        }
        Command::Verify(args) => {
            let outcome = cli::cmd_verify(&VerifyArgs {
                kind: VerifyKind::parse(&args.kind)?,
                n: args.n,
                p: args.p,
                d: args.d,
                delta: args.delta,
                epsilon: args.epsilon,
                trials: args.trials,
                seed: RngSeed::new(args.seed),
                sketch_kind: args.sketch_kind,
            })?;
            print!("{}", outcome.report);
            Ok(outcome.pass)
        }
        Command::Flops(args) => {
            print!("{}", cli::cmd_flops(args.n, args.p, args.d)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let top = match Top::try_parse() {
        Ok(top) => top,
        Err(err) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(top) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
