//! The `ncd` command line.
//!
//! Every subcommand reads an optional TOML run config (`--config`) and then
//! applies command-line flags on top; flags win. The merged config is echoed
//! to `<output_dir>/run_config.toml`. The output directory defaults to
//! `$NCD_OUTPUT_DIR`, then `ncd-out`.
//!
//! Exit codes: 0 ok, 2 usage, 3 data error, 4 infeasible spec.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::calibrate::{calibrate_alpha, CalibrationResult};
use crate::embedding::{load_emb1, parse_csv, save_emb1, EmbeddingSet};
use crate::error::{Error, Result};
use crate::harness::{run_evaluation, run_sweep, write_sweep_csv, BaseContext, EvalConfig, QueryDemand, SweepAxis};
use crate::prototype::Metric;
use crate::report::{read_report, render_calibration, render_table, write_report_files};
use crate::synth::{generate, tune_sigma, SynthConfig};

pub const OUTPUT_DIR_ENV: &str = "NCD_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "ncd-out";

/// Synthetic data section of a run config. `target_bcr`, when set, replaces
/// `sigma` with the result of a bisection search.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub dim: Option<usize>,
    pub n_base: Option<usize>,
    pub n_novel: Option<usize>,
    pub train_per_class: Option<usize>,
    pub test_per_class: Option<usize>,
    pub pool_per_class: Option<usize>,
    pub sigma: Option<f64>,
    pub novel_offset: Option<f64>,
    pub seed: Option<u64>,
    pub target_bcr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Option<String>,
    pub values: Option<Vec<f64>>,
}

/// On-disk run configuration. Every field is optional so that files and flags
/// can be layered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    /// Feature count for CSV input; inferred from the first data row if absent.
    pub csv_dim: Option<usize>,
    pub metric: Option<Metric>,
    pub budgets: Option<Vec<f64>>,
    pub alphas: Option<Vec<f64>>,
    pub episodes: Option<usize>,
    pub n_novel: Option<usize>,
    pub shots: Option<usize>,
    pub query_per_class: Option<String>,
    pub master_seed: Option<u64>,
    pub calibration_holdout: Option<f64>,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub synth: Option<SynthSection>,
    pub sweep: Option<SweepSection>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn eval_config(&self) -> Result<EvalConfig> {
        let d = EvalConfig::default();
        let cfg = EvalConfig {
            episodes: self.episodes.unwrap_or(d.episodes),
            n_novel: self.n_novel.unwrap_or(d.n_novel),
            shots: self.shots.unwrap_or(d.shots),
            query_per_class: match &self.query_per_class {
                Some(q) => q.parse()?,
                None => QueryDemand::AllRemaining,
            },
            budgets: self.budgets.clone().unwrap_or(d.budgets),
            alphas: self.alphas.clone().unwrap_or_default(),
            metric: self.metric.unwrap_or_default(),
            master_seed: self.master_seed.unwrap_or(d.master_seed),
            calibration_holdout: self.calibration_holdout,
            threads: self.threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn synth_config(&self) -> Result<(SynthConfig, Option<f64>)> {
        let s = self.synth.clone().unwrap_or_default();
        let missing: Vec<&str> = [
            ("--dim", s.dim.is_none()),
            ("--n-base", s.n_base.is_none()),
            ("--n-novel", s.n_novel.is_none()),
            ("--seed", s.seed.is_none()),
        ]
        .iter()
        .filter(|(_, m)| *m)
        .map(|(n, _)| *n)
        .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!("missing required setting(s): {}", missing.join(", "))));
        }
        let d = SynthConfig::default();
        let cfg = SynthConfig {
            dim: s.dim.unwrap(),
            n_base: s.n_base.unwrap(),
            n_novel_pool: s.n_novel.unwrap(),
            train_per_class: s.train_per_class.unwrap_or(d.train_per_class),
            test_per_class: s.test_per_class.unwrap_or(d.test_per_class),
            pool_per_class: s.pool_per_class.unwrap_or(d.pool_per_class),
            sigma: s.sigma.unwrap_or(d.sigma),
            novel_offset: s.novel_offset.unwrap_or(d.novel_offset),
            seed: s.seed.unwrap(),
        };
        cfg.validate()?;
        Ok((cfg, s.target_bcr))
    }

    /// Loads `input`, or generates the `[synth]` section when there is no input.
    pub fn dataset(&self) -> Result<EmbeddingSet> {
        match &self.input {
            Some(path) => load_input(path, self.csv_dim),
            None if self.synth.is_some() => {
                let (cfg, target) = self.synth_config()?;
                synthesize(cfg, target, self.metric.unwrap_or_default())
            }
            None => Err(Error::Config("no --input given and no [synth] section in the config".into())),
        }
    }
}

fn synthesize(mut cfg: SynthConfig, target_bcr: Option<f64>, metric: Metric) -> Result<EmbeddingSet> {
    if let Some(target) = target_bcr {
        cfg.sigma = tune_sigma(target, &cfg, metric)?.sigma;
    }
    generate(&cfg)
}

/// EMB1 by default; `.csv` files go through the CSV reader.
pub fn load_input(path: &Path, csv_dim: Option<usize>) -> Result<EmbeddingSet> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if !is_csv {
        return load_emb1(path);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dim = match csv_dim {
        Some(d) => d,
        None => infer_csv_dim(&text)?,
    };
    parse_csv(&text, dim)
}

fn infer_csv_dim(text: &str) -> Result<usize> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .find(|l| l.split(',').next().is_some_and(|t| t.trim().parse::<u64>().is_ok()))
        .map(|l| l.split(',').count().saturating_sub(2))
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::Parse {
            row: 1,
            message: "cannot infer feature dimension from CSV".into(),
        })
}

#[derive(Debug, Parser)]
#[command(name = "ncd", version, about = "Novel-class detection with controllable forgetting on embedding sets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic Gaussian-cluster embedding set (EMB1).
    Gen(GenArgs),
    /// Build the base forgetting curve and calibrate a threshold per budget.
    Calibrate(EvalArgs),
    /// Run the episodic evaluation.
    Eval(EvalArgs),
    /// Run one evaluation per value of N1, K or alpha.
    Sweep(SweepArgs),
    /// Validate and print a saved report.json.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n_base: Option<usize>,
    #[arg(long)]
    pub n_novel: Option<usize>,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    #[arg(long)]
    pub pool_per_class: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub novel_offset: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tune sigma so nearest-prototype base accuracy lands near this value.
    #[arg(long)]
    pub target_bcr: Option<f64>,
    /// Output file; defaults to <output-dir>/synthetic.emb1.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// EMB1 file, or CSV when the extension is .csv.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub csv_dim: Option<usize>,
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<Metric>,
    /// Forgetting budgets as fractions, e.g. 0.02,0.05.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<f64>>,
    /// Extra fixed thresholds.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub n_novel: Option<usize>,
    #[arg(long)]
    pub shots: Option<usize>,
    /// Queries per sampled class, or "all".
    #[arg(long)]
    pub queries: Option<String>,
    #[arg(long)]
    pub master_seed: Option<u64>,
    /// Hold out this fraction of base-test samples for calibration.
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Worker cap; does not change results.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// n1, k or alpha.
    #[arg(long)]
    pub axis: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json, or a directory containing one.
    pub path: PathBuf,
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn base_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if common.output_dir.is_some() {
        cfg.output_dir = common.output_dir.clone();
    }
    Ok(cfg)
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),+) => {
        $( if let Some(v) = $src.$field.clone() { $dst.$field = Some(v); } )+
    };
}

impl GenArgs {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = base_config(&self.common)?;
        let mut s = cfg.synth.take().unwrap_or_default();
        overlay!(s, self, dim, n_base, n_novel, train_per_class, test_per_class, pool_per_class, sigma, novel_offset, seed, target_bcr);
        cfg.synth = Some(s);
        Ok(cfg)
    }
}

impl EvalArgs {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = base_config(&self.common)?;
        overlay!(cfg, self, input, csv_dim, metric, budgets, alphas, episodes, n_novel, shots, master_seed, threads);
        if let Some(q) = &self.queries {
            cfg.query_per_class = Some(q.clone());
        }
        if let Some(h) = self.holdout {
            cfg.calibration_holdout = Some(h);
        }
        Ok(cfg)
    }
}

impl SweepArgs {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = self.eval.run_config()?;
        let mut s = cfg.sweep.take().unwrap_or_default();
        overlay!(s, self, axis, values);
        cfg.sweep = Some(s);
        Ok(cfg)
    }
}

fn prepare_output(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let echo = toml::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join("run_config.toml");
    fs::write(&path, echo).map_err(|e| Error::io(&path, e))?;
    Ok(dir)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn cmd_gen(args: &GenArgs) -> Result<PathBuf> {
    let cfg = args.run_config()?;
    let (synth, target) = cfg.synth_config()?;
    let dir = prepare_output(&cfg)?;
    let set = synthesize(synth, target, cfg.metric.unwrap_or_default())?;
    let out = args.out.clone().unwrap_or_else(|| dir.join("synthetic.emb1"));
    save_emb1(&set, &out)?;
    let summary = set.summarize();
    let text = format!("{summary}\nfingerprint: {}\n", set.fingerprint());
    write(&dir.join("summary.txt"), text.as_bytes())?;
    println!("wrote {}\n{text}", out.display());
    Ok(out)
}

/// Writes `for_curve.csv` and `calibration.json`; returns the calibration per budget.
pub fn cmd_calibrate(args: &EvalArgs) -> Result<Vec<CalibrationResult>> {
    let cfg = args.run_config()?;
    let eval = cfg.eval_config()?;
    let set = cfg.dataset()?;
    let dir = prepare_output(&cfg)?;
    let holdout = eval
        .calibration_holdout
        .map(|f| (f, crate::rng::derive_seed(eval.master_seed, u64::MAX)));
    let ctx = BaseContext::new(&set, eval.metric, holdout)?;
    let results = eval
        .budgets
        .iter()
        .map(|&b| calibrate_alpha(&ctx.curve, b))
        .collect::<Result<Vec<_>>>()?;

    let mut csv = Vec::new();
    ctx.curve
        .write_csv(&mut csv)
        .map_err(|e| Error::io(dir.join("for_curve.csv"), e))?;
    write(&dir.join("for_curve.csv"), &csv)?;
    let json = serde_json::json!({
        "bcr": ctx.curve.bcr,
        "metric": eval.metric,
        "n_calibration_samples": ctx.curve.n_samples,
        "calibrations": results,
    });
    write(&dir.join("calibration.json"), &serde_json::to_vec_pretty(&json)?)?;
    print!("{}", render_calibration(ctx.curve.bcr, &results));
    Ok(results)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<crate::harness::EvalReport> {
    let cfg = args.run_config()?;
    let eval = cfg.eval_config()?;
    let set = cfg.dataset()?;
    let dir = prepare_output(&cfg)?;
    let report = run_evaluation(&set, &eval)?;
    write_report_files(&report, &dir)?;
    print!("{}", render_table(&report));
    Ok(report)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<crate::harness::EvalReport>> {
    let cfg = args.run_config()?;
    let eval = cfg.eval_config()?;
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let axis: SweepAxis = sweep
        .axis
        .as_deref()
        .ok_or_else(|| Error::Config("sweep needs --axis".into()))?
        .parse()?;
    let values = sweep
        .values
        .filter(|v| !v.is_empty())
        .ok_or_else(|| Error::Config("sweep needs --values".into()))?;
    let set = cfg.dataset()?;
    let dir = prepare_output(&cfg)?;
    let reports = run_sweep(&set, axis, &values, &eval)?;
    let mut csv = Vec::new();
    write_sweep_csv(&mut csv, axis, &values, &reports).map_err(|e| Error::io(dir.join("sweep.csv"), e))?;
    write(&dir.join("sweep.csv"), &csv)?;
    write(&dir.join("sweep.json"), &serde_json::to_vec_pretty(&reports)?)?;
    for (v, r) in values.iter().zip(&reports) {
        println!("{} = {v}", axis.name());
        print!("{}", render_table(r));
        println!();
    }
    Ok(reports)
}

pub fn cmd_report(args: &ReportArgs) -> Result<crate::harness::EvalReport> {
    let path = if args.path.is_dir() {
        args.path.join("report.json")
    } else {
        args.path.clone()
    };
    let report = read_report(&path)?;
    print!("{}", render_table(&report));
    Ok(report)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a).map(drop),
        Command::Calibrate(a) => cmd_calibrate(&a).map(drop),
        Command::Eval(a) => cmd_eval(&a).map(drop),
        Command::Sweep(a) => cmd_sweep(&a).map(drop),
        Command::Report(a) => cmd_report(&a).map(drop),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
