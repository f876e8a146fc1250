//! Exact softmax self-attention and its sketching-based approximations.
//!
//! The crate computes `softmax(Q K^T / sqrt(p)) V` exactly as a ground truth,
//! approximates it with sampling and projection methods (column-importance
//! sampling with adaptive row normalization and pilot reuse, row selection by
//! sparsity ranking, Gaussian-sketched forms, and the value-mean rank-one
//! baseline), measures the error in spectral and Frobenius norm, and
//! statistically verifies the sampling guarantees behind the probabilities.
//!
//! Everything randomized is deterministic in an explicit [`RngSeed`].
//!
//! See the `examples/` directory for one runnable program per capability, and
//! the `skeinformer` binary for the `gen`, `attn`, `bench`, `verify`, and
//! `flops` subcommands.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod matf;
pub mod matrix;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod skein;
pub mod sketch;

pub use error::{Error, Result};
pub use matf::{read_matrix, write_matrix};
pub use matrix::{generate_gaussian_matrix, AttentionInput, DenseMatrix};
pub use metrics::{error_report, spectral_norm, ErrorReport};
pub use oracle::{exact_attention, score_matrices, ScoreMatrices, DEFAULT_ORACLE_CAP};
pub use rng::RngSeed;
pub use skein::{skein_attention, RowNorm, Sampling, SkeinConfig, SkeinTrace};
pub use sketch::{SketchKind, SketchSpec};
