//! Episodic evaluation.
//!
//! An episode draws `n_novel` classes from the novel pool and `shots` support
//! samples from each, builds the novel prototype bank from the support set,
//! and scores the remaining pool samples of those classes as queries under
//! vanilla inference and under NCD inference at each operating point.
//!
//! Sampling is bit-reproducible. With `rng = SplitMix64::new(episode_seed)`:
//!
//! 1. the novel pool classes, ascending by id, are partially Fisher–Yates
//!    shuffled to pick `n_novel` classes (draw order is kept);
//! 2. for each picked class in draw order, its pool records (file order) are
//!    partially shuffled to pick `shots` support records; the rest, in file
//!    order, are the queries, optionally subsampled the same way to
//!    `query_per_class` and re-sorted into file order.
//!
//! Episode `i` uses `derive_seed(master_seed, i)`. Thresholds for budgets are
//! calibrated once on base data before any episode runs.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{
    calibrate_alpha, for_curve_from_scores, forgetting_at, nearest_base_accuracy, novel_route_rate,
    score_base_samples, BaseScore, CalibrationResult, ForCurve, LabeledFeature,
};
use crate::embedding::{EmbeddingSet, Split};
use crate::error::{Error, Result};
use crate::prototype::{
    compute_prototypes, mean_of, BankKind, Banks, Metric, NearestPair, PrototypeBank,
};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryDemand {
    #[default]
    AllRemaining,
    PerClass(usize),
}

impl QueryDemand {
    fn minimum(self) -> usize {
        match self {
            QueryDemand::AllRemaining => 1,
            QueryDemand::PerClass(n) => n,
        }
    }
}

impl std::str::FromStr for QueryDemand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") || s.eq_ignore_ascii_case("all-remaining") {
            return Ok(QueryDemand::AllRemaining);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(QueryDemand::PerClass(n)),
            _ => Err(Error::Config(format!("query count must be a positive integer or \"all\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub n_novel: usize,
    pub shots: usize,
    pub seed: u64,
    pub query_per_class: QueryDemand,
}

/// Record indices chosen for one episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSample {
    /// Sampled novel classes in draw order.
    pub classes: Vec<u32>,
    /// Support record indices, one inner list per class in `classes`.
    pub support: Vec<Vec<usize>>,
    /// Query record indices, grouped by class in `classes` order.
    pub queries: Vec<usize>,
}

/// Checks `spec` against every class of the novel pool, so feasibility does
/// not depend on the seed.
pub fn check_feasible(set: &EmbeddingSet, spec: &EpisodeSpec) -> Result<()> {
    if spec.n_novel == 0 || spec.shots == 0 {
        return Err(Error::InfeasibleSpec("n_novel and shots must be at least 1".into()));
    }
    if let QueryDemand::PerClass(0) = spec.query_per_class {
        return Err(Error::InfeasibleSpec("query_per_class must be at least 1".into()));
    }
    let pool = set.indices_by_class(Split::NovelPool);
    if spec.n_novel > pool.len() {
        return Err(Error::InfeasibleSpec(format!(
            "n_novel = {} exceeds the {} novel pool classes",
            spec.n_novel,
            pool.len()
        )));
    }
    let need = spec.shots + spec.query_per_class.minimum();
    if let Some((class, idx)) = pool.iter().find(|(_, idx)| idx.len() < need) {
        return Err(Error::InfeasibleSpec(format!(
            "novel class {class} has {} pool samples, {need} needed for shots = {} plus queries",
            idx.len(),
            spec.shots
        )));
    }
    Ok(())
}

pub fn sample_episode(set: &EmbeddingSet, spec: &EpisodeSpec) -> Result<EpisodeSample> {
    check_feasible(set, spec)?;
    let pool = set.indices_by_class(Split::NovelPool);
    let mut rng = SplitMix64::new(spec.seed);
    let mut classes: Vec<u32> = pool.keys().copied().collect();
    let classes = rng.choose_prefix(&mut classes, spec.n_novel).to_vec();
    let mut support = Vec::with_capacity(classes.len());
    let mut queries = Vec::new();
    for class in &classes {
        let mut idx = pool[class].clone();
        rng.choose_prefix(&mut idx, spec.shots);
        support.push(idx[..spec.shots].to_vec());
        let mut rest = idx[spec.shots..].to_vec();
        rest.sort_unstable();
        if let QueryDemand::PerClass(q) = spec.query_per_class {
            rng.choose_prefix(&mut rest, q);
            rest.truncate(q);
            rest.sort_unstable();
        }
        queries.extend(rest);
    }
    Ok(EpisodeSample {
        classes,
        support,
        queries,
    })
}

/// Novel prototype bank from the sampled support sets.
pub fn novel_bank(set: &EmbeddingSet, sample: &EpisodeSample) -> Result<PrototypeBank> {
    let protos = sample
        .classes
        .iter()
        .zip(&sample.support)
        .map(|(&c, idx)| mean_of(set, c, idx))
        .collect::<Result<Vec<_>>>()?;
    PrototypeBank::new(BankKind::Novel, set.dim(), protos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: usize,
    pub seed: u64,
    pub classes: Vec<u32>,
    pub support: Vec<Vec<usize>>,
    pub n_queries: usize,
    pub v_ncr: f64,
    /// NCR at each threshold passed to [`run_episode`], same order.
    pub ncr: Vec<f64>,
    /// Fraction of queries routed to the novel branch at each threshold.
    pub tpr: Vec<f64>,
}

/// Runs one episode. `alphas` are NCD thresholds; the row carries one NCR and
/// one detection rate per threshold, in order.
pub fn run_episode(
    set: &EmbeddingSet,
    base_bank: &PrototypeBank,
    spec: &EpisodeSpec,
    alphas: &[f64],
    metric: Metric,
) -> Result<EpisodeRow> {
    if let Some(&a) = alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::InvalidAlpha(a));
    }
    let sample = sample_episode(set, spec)?;
    if sample.queries.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    let novel = novel_bank(set, &sample)?;
    let banks = Banks::new(base_bank, &novel)?;

    let pairs = sample
        .queries
        .iter()
        .map(|&i| NearestPair::new(set.feature(i), banks, metric).map(|p| (set.class_id(i), p)))
        .collect::<Result<Vec<_>>>()?;
    let n = pairs.len() as f64;

    let mut vanilla_hits = 0usize;
    for (label, p) in &pairs {
        vanilla_hits += (p.vanilla()?.predicted_class == *label) as usize;
    }
    let mut ncr = Vec::with_capacity(alphas.len());
    let mut tpr = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let (mut hits, mut routed) = (0usize, 0usize);
        for (label, p) in &pairs {
            let c = p.ncd(alpha)?;
            hits += (c.predicted_class == *label) as usize;
            routed += c.routed_novel as usize;
        }
        ncr.push(hits as f64 / n);
        tpr.push(routed as f64 / n);
    }
    Ok(EpisodeRow {
        episode: 0,
        seed: spec.seed,
        classes: sample.classes,
        support: sample.support,
        n_queries: pairs.len(),
        v_ncr: vanilla_hits as f64 / n,
        ncr,
        tpr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub n_novel: usize,
    pub shots: usize,
    pub query_per_class: QueryDemand,
    /// Forgetting budgets as absolute accuracy fractions.
    pub budgets: Vec<f64>,
    /// Extra fixed thresholds evaluated alongside the calibrated ones.
    pub alphas: Vec<f64>,
    pub metric: Metric,
    pub master_seed: u64,
    /// When set, this fraction of each base class's test samples is held out
    /// for calibration and the rest is used for BCR and measured FOR.
    /// Otherwise both use the full base-test split.
    pub calibration_holdout: Option<f64>,
    /// Worker cap; results do not depend on it.
    pub threads: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 25,
            n_novel: 1,
            shots: 1,
            query_per_class: QueryDemand::AllRemaining,
            budgets: vec![0.02, 0.05],
            alphas: Vec::new(),
            metric: Metric::Cosine,
            master_seed: 0,
            calibration_holdout: None,
            threads: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if let Some(&b) = self.budgets.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(Error::InvalidBudget(b));
        }
        if let Some(&a) = self.alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::InvalidAlpha(a));
        }
        if let Some(f) = self.calibration_holdout {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("calibration_holdout must be in (0, 1), got {f}")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn episode_spec(&self, episode: usize) -> EpisodeSpec {
        EpisodeSpec {
            n_novel: self.n_novel,
            shots: self.shots,
            seed: derive_seed(self.master_seed, episode as u64),
            query_per_class: self.query_per_class,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Stat { mean: f64::NAN, std: f64::NAN, min: f64::NAN, max: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Summation rounding can nudge a constant column's mean off its value.
        Stat { mean: mean.clamp(min, max), std: var.sqrt(), min, max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetPoint {
    pub budget: f64,
    pub alpha_star: f64,
    /// FOR at `alpha_star` on the calibration samples.
    pub achieved_for: f64,
    /// FOR at `alpha_star` on the reporting samples.
    pub measured_for: f64,
    pub ncr: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaPoint {
    pub alpha: f64,
    pub measured_for: f64,
    pub ncr: Stat,
    pub fpr: f64,
    pub tpr: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodPoint {
    pub budget: f64,
    pub alpha: f64,
    pub fpr: f64,
    /// Mean over episodes of the per-episode detection rate.
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub n_novel: usize,
    pub shots: usize,
    pub query_per_class: QueryDemand,
    pub episodes: usize,
    pub metric: Metric,
    pub master_seed: u64,
    pub budgets: Vec<f64>,
    pub alphas: Vec<f64>,
    pub calibration_holdout: Option<f64>,
    pub dataset_fingerprint: String,
    pub n_base_classes: usize,
    pub n_novel_pool_classes: usize,
    pub n_calibration_samples: usize,
    pub n_report_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bcr: f64,
    pub v_ncr: Stat,
    pub ncr_at_budget: Vec<BudgetPoint>,
    pub ood: Vec<OodPoint>,
    pub ncr_at_alpha: Vec<AlphaPoint>,
    pub per_episode: Vec<EpisodeRow>,
    pub protocol: Protocol,
}

/// Base-side state shared by every episode: the base bank and the
/// calibration/reporting scores.
#[derive(Debug, Clone)]
pub struct BaseContext {
    pub bank: PrototypeBank,
    pub calibration_scores: Vec<BaseScore>,
    pub report_scores: Vec<BaseScore>,
    pub curve: ForCurve,
}

impl BaseContext {
    pub fn new(set: &EmbeddingSet, metric: Metric, holdout: Option<(f64, u64)>) -> Result<Self> {
        let bank = compute_prototypes(set, Split::BaseTrain, BankKind::Base)?;
        if bank.is_empty() {
            return Err(Error::EmptySplit("base train"));
        }
        let (calib_idx, report_idx) = split_base_test(set, holdout);
        let score = |idx: &[usize]| -> Result<Vec<BaseScore>> {
            if idx.is_empty() {
                return Err(Error::EmptySplit("base test"));
            }
            let samples: Vec<LabeledFeature<'_>> = idx
                .iter()
                .map(|&i| LabeledFeature { class_id: set.class_id(i), feature: set.feature(i) })
                .collect();
            score_base_samples(&samples, &bank, metric)
        };
        let calibration_scores = score(&calib_idx)?;
        let report_scores = if holdout.is_some() { score(&report_idx)? } else { calibration_scores.clone() };
        let curve = for_curve_from_scores(&calibration_scores, metric)?;
        Ok(Self { bank, calibration_scores, report_scores, curve })
    }
}

/// `(calibration, reporting)` record indices of the base-test split.
fn split_base_test(set: &EmbeddingSet, holdout: Option<(f64, u64)>) -> (Vec<usize>, Vec<usize>) {
    let Some((fraction, seed)) = holdout else {
        let all = set.indices_in(Split::BaseTest);
        return (all.clone(), all);
    };
    let mut rng = SplitMix64::new(seed);
    let (mut calib, mut report) = (Vec::new(), Vec::new());
    for (_, mut idx) in set.indices_by_class(Split::BaseTest) {
        let k = ((idx.len() as f64 * fraction).round() as usize).clamp(0, idx.len());
        rng.choose_prefix(&mut idx, k);
        calib.extend_from_slice(&idx[..k]);
        report.extend_from_slice(&idx[k..]);
    }
    calib.sort_unstable();
    report.sort_unstable();
    (calib, report)
}

/// Sub-stream index reserved for the calibration holdout draw.
const HOLDOUT_STREAM: u64 = u64::MAX;

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn run_evaluation(set: &EmbeddingSet, config: &EvalConfig) -> Result<EvalReport> {
    config.validate()?;
    check_feasible(set, &config.episode_spec(0))?;
    with_pool(config.threads, || evaluate(set, config))?
}

fn evaluate(set: &EmbeddingSet, config: &EvalConfig) -> Result<EvalReport> {
    let holdout = config
        .calibration_holdout
        .map(|f| (f, derive_seed(config.master_seed, HOLDOUT_STREAM)));
    let ctx = BaseContext::new(set, config.metric, holdout)?;
    let calibrations: Vec<CalibrationResult> = config
        .budgets
        .iter()
        .map(|&b| calibrate_alpha(&ctx.curve, b))
        .collect::<Result<_>>()?;
    let bcr = nearest_base_accuracy(&ctx.report_scores)?;

    let mut alphas: Vec<f64> = calibrations.iter().map(|c| c.alpha_star).collect();
    alphas.extend_from_slice(&config.alphas);
    let n_budget = calibrations.len();

    let per_episode: Vec<EpisodeRow> = (0..config.episodes)
        .into_par_iter()
        .map(|i| {
            run_episode(set, &ctx.bank, &config.episode_spec(i), &alphas, config.metric).map(|mut row| {
                row.episode = i;
                row
            })
        })
        .collect::<Result<_>>()?;

    for row in &per_episode {
        for (a, b) in (0..alphas.len()).flat_map(|a| (0..alphas.len()).map(move |b| (a, b))) {
            if alphas[a] <= alphas[b] {
                debug_assert!(row.ncr[a] >= row.ncr[b], "NCR not antitone in alpha");
            }
        }
    }

    let column = |k: usize, f: fn(&EpisodeRow, usize) -> f64| -> Vec<f64> {
        per_episode.iter().map(|r| f(r, k)).collect()
    };
    let measured_for = |alpha: f64| forgetting_at(&ctx.report_scores, alpha);

    let mut ncr_at_budget = Vec::with_capacity(n_budget);
    let mut ood = Vec::with_capacity(n_budget);
    for (k, cal) in calibrations.iter().enumerate() {
        ncr_at_budget.push(BudgetPoint {
            budget: cal.budget,
            alpha_star: cal.alpha_star,
            achieved_for: cal.achieved_for,
            measured_for: measured_for(cal.alpha_star)?,
            ncr: Stat::of(&column(k, |r, k| r.ncr[k])),
        });
        ood.push(OodPoint {
            budget: cal.budget,
            alpha: cal.alpha_star,
            fpr: novel_route_rate(&ctx.report_scores, cal.alpha_star)?,
            tpr: Stat::of(&column(k, |r, k| r.tpr[k])).mean,
        });
    }
    let mut ncr_at_alpha = Vec::with_capacity(config.alphas.len());
    for (j, &alpha) in config.alphas.iter().enumerate() {
        let k = n_budget + j;
        ncr_at_alpha.push(AlphaPoint {
            alpha,
            measured_for: measured_for(alpha)?,
            ncr: Stat::of(&column(k, |r, k| r.ncr[k])),
            fpr: novel_route_rate(&ctx.report_scores, alpha)?,
            tpr: Stat::of(&column(k, |r, k| r.tpr[k])),
        });
    }

    let summary = set.summarize();
    Ok(EvalReport {
        bcr,
        v_ncr: Stat::of(&per_episode.iter().map(|r| r.v_ncr).collect::<Vec<_>>()),
        ncr_at_budget,
        ood,
        ncr_at_alpha,
        per_episode,
        protocol: Protocol {
            n_novel: config.n_novel,
            shots: config.shots,
            query_per_class: config.query_per_class,
            episodes: config.episodes,
            metric: config.metric,
            master_seed: config.master_seed,
            budgets: config.budgets.clone(),
            alphas: config.alphas.clone(),
            calibration_holdout: config.calibration_holdout,
            dataset_fingerprint: set.fingerprint(),
            n_base_classes: summary.n_base_classes,
            n_novel_pool_classes: summary.n_novel_classes,
            n_calibration_samples: ctx.calibration_scores.len(),
            n_report_samples: ctx.report_scores.len(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[serde(rename = "n1")]
    NNovel,
    #[serde(rename = "k")]
    Shots,
    Alpha,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NNovel => "n1",
            SweepAxis::Shots => "k",
            SweepAxis::Alpha => "alpha",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n1" | "n_novel" | "novel" => Ok(SweepAxis::NNovel),
            "k" | "shots" => Ok(SweepAxis::Shots),
            "alpha" => Ok(SweepAxis::Alpha),
            other => Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        }
    }
}

/// Config for one sweep point. Integer axes reject non-integral values.
pub fn sweep_point(base: &EvalConfig, axis: SweepAxis, value: f64) -> Result<EvalConfig> {
    let as_count = || -> Result<usize> {
        if value >= 1.0 && value.fract() == 0.0 && value <= usize::MAX as f64 {
            Ok(value as usize)
        } else {
            Err(Error::InfeasibleSpec(format!("{} = {value} is not a positive integer", axis.name())))
        }
    };
    let mut cfg = base.clone();
    match axis {
        SweepAxis::NNovel => cfg.n_novel = as_count()?,
        SweepAxis::Shots => cfg.shots = as_count()?,
        SweepAxis::Alpha => {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidAlpha(value));
            }
            cfg.alphas = vec![value];
        }
    }
    Ok(cfg)
}

/// One report per value, all sharing `base.master_seed` so episodes are paired
/// across values. Every value is checked before any episode runs.
pub fn run_sweep(set: &EmbeddingSet, axis: SweepAxis, values: &[f64], base: &EvalConfig) -> Result<Vec<EvalReport>> {
    let configs = values
        .iter()
        .map(|&v| {
            let cfg = sweep_point(base, axis, v)?;
            cfg.validate()?;
            check_feasible(set, &cfg.episode_spec(0)).map_err(|e| match e {
                Error::InfeasibleSpec(msg) => Error::InfeasibleSpec(format!("{} = {v}: {msg}", axis.name())),
                other => other,
            })?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    configs.iter().map(|cfg| run_evaluation(set, cfg)).collect()
}

/// Plot-ready sweep table: one row per (value, operating point).
pub fn write_sweep_csv(mut out: impl Write, axis: SweepAxis, values: &[f64], reports: &[EvalReport]) -> std::io::Result<()> {
    writeln!(
        out,
        "axis,value,bcr,v_ncr_mean,v_ncr_std,point,alpha,for,ncr_mean,ncr_std,fpr,tpr"
    )?;
    for (v, r) in values.iter().zip(reports) {
        let prefix = format!("{},{},{},{},{}", axis.name(), v, r.bcr, r.v_ncr.mean, r.v_ncr.std);
        for (b, o) in r.ncr_at_budget.iter().zip(&r.ood) {
            writeln!(
                out,
                "{prefix},budget={},{},{},{},{},{},{}",
                b.budget, b.alpha_star, b.measured_for, b.ncr.mean, b.ncr.std, o.fpr, o.tpr
            )?;
        }
        for a in &r.ncr_at_alpha {
            writeln!(
                out,
                "{prefix},alpha={},{},{},{},{},{},{}",
                a.alpha, a.alpha, a.measured_for, a.ncr.mean, a.ncr.std, a.fpr, a.tpr.mean
            )?;
        }
        if r.ncr_at_budget.is_empty() && r.ncr_at_alpha.is_empty() {
            writeln!(out, "{prefix},vanilla,,,,,,")?;
        }
    }
    Ok(())
}
