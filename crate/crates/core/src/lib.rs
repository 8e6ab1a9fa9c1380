//! Novel-class detection (NCD) inference with controllable forgetting for
//! one-shot class-incremental learning, on precomputed embeddings.
//!
//! * [`embedding`]: labeled embedding sets, the EMB1 binary format and CSV input.
//! * [`prototype`]: class prototypes, distances, vanilla and NCD inference.
//! * [`calibrate`]: base-only forgetting curves and threshold calibration.
//! * [`harness`]: seeded episodic evaluation and sweeps.
//! * [`synth`]: Gaussian-cluster sets for desk-scale experiments.
//! * [`report`]: report tables, files and schema checks.
//! * [`cli`]: the `ncd` command-line front end.

pub mod calibrate;
pub mod cli;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod prototype;
pub mod report;
pub mod rng;
pub mod synth;

pub use calibrate::{
    base_accuracy_under_ncd, build_for_curve, calibrate_alpha, ood_rates, CalibrationResult, ForCurve,
};
pub use embedding::{load_csv, load_emb1, save_emb1, EmbeddingSet, EmbeddingSetBuilder, Split, SplitSummary};
pub use error::{Error, Result};
pub use harness::{run_episode, run_evaluation, run_sweep, EpisodeSpec, EvalConfig, EvalReport, SweepAxis};
pub use prototype::{
    classify_ncd, classify_vanilla, compute_prototypes, distance, ncd_rule, BankKind, Banks, Classification,
    DecisionConfig, Metric, PrototypeBank,
};
pub use synth::{generate, tune_sigma, SynthConfig};
