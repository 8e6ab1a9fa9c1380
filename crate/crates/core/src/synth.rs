//! Gaussian-cluster embedding sets with tunable geometry.
//!
//! Draw order from a single [`SplitMix64`] stream seeded with `seed`:
//!
//! 1. base class means: `dim` Gaussians each, normalized to the unit sphere;
//! 2. novel class means: a Gaussian direction per candidate, rejected while
//!    its angle to any base mean is below [`novel_margin`]`(novel_offset)`,
//!    then scaled to radius `1 + novel_offset`;
//! 3. base samples class by class (train then test), then novel pool samples,
//!    each `mean + sigma * N(0, I)`.
//!
//! Base classes get ids `0..n_base`, novel classes `n_base..n_base + n_novel_pool`.

use serde::{Deserialize, Serialize};

use crate::calibrate::{nearest_base_accuracy, score_base_samples, LabeledFeature};
use crate::embedding::{EmbeddingSet, EmbeddingSetBuilder, Split};
use crate::error::{Error, Result};
use crate::prototype::{compute_prototypes, BankKind, Metric};
use crate::rng::SplitMix64;

/// Rejection attempts per novel mean.
pub const MAX_REJECTION_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub dim: usize,
    pub n_base: usize,
    pub n_novel_pool: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub pool_per_class: usize,
    pub sigma: f64,
    pub novel_offset: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            n_base: 50,
            n_novel_pool: 50,
            train_per_class: 50,
            test_per_class: 20,
            pool_per_class: 20,
            sigma: 0.1,
            novel_offset: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("dim", self.dim),
            ("n_base", self.n_base),
            ("n_novel_pool", self.n_novel_pool),
            ("train_per_class", self.train_per_class),
            ("test_per_class", self.test_per_class),
            ("pool_per_class", self.pool_per_class),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.novel_offset >= 0.0 && self.novel_offset.is_finite()) {
            return Err(Error::Config(format!(
                "novel_offset must be non-negative, got {}",
                self.novel_offset
            )));
        }
        if self.n_base + self.n_novel_pool > u32::MAX as usize {
            return Err(Error::Config("too many classes".into()));
        }
        Ok(())
    }
}

/// Minimum angle (radians) kept between every novel mean and every base mean.
/// Zero for `offset = 0`, strictly increasing, and below pi/2.
pub fn novel_margin(offset: f64) -> f64 {
    std::f64::consts::FRAC_PI_2 * offset / (1.0 + offset)
}

fn unit_gaussian(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gaussian()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Base and novel class means, in id order.
pub type ClassMeans = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Class means as `(base, novel)`.
pub fn class_means(config: &SynthConfig, rng: &mut SplitMix64) -> Result<ClassMeans> {
    let base: Vec<Vec<f64>> = (0..config.n_base).map(|_| unit_gaussian(rng, config.dim)).collect();
    let max_cos = novel_margin(config.novel_offset).cos();
    let radius = 1.0 + config.novel_offset;
    let mut novel = Vec::with_capacity(config.n_novel_pool);
    for _ in 0..config.n_novel_pool {
        let mut placed = None;
        for _ in 0..MAX_REJECTION_ATTEMPTS {
            let dir = unit_gaussian(rng, config.dim);
            let clear = config.novel_offset == 0.0
                || base.iter().all(|b| dot(b, &dir) < max_cos);
            if clear {
                placed = Some(dir);
                break;
            }
        }
        let dir = placed.ok_or(Error::RejectionFailure {
            attempts: MAX_REJECTION_ATTEMPTS,
        })?;
        novel.push(dir.into_iter().map(|x| x * radius).collect());
    }
    Ok((base, novel))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn generate(config: &SynthConfig) -> Result<EmbeddingSet> {
    config.validate()?;
    let mut rng = SplitMix64::new(config.seed);
    let (base, novel) = class_means(config, &mut rng)?;
    let records = config.n_base * (config.train_per_class + config.test_per_class)
        + config.n_novel_pool * config.pool_per_class;
    let mut builder = EmbeddingSetBuilder::with_capacity(config.dim, records);
    let mut buf = vec![0f32; config.dim];
    let mut emit = |builder: &mut EmbeddingSetBuilder, rng: &mut SplitMix64, id: usize, split, mean: &[f64]| {
        for (b, m) in buf.iter_mut().zip(mean) {
            *b = (m + config.sigma * rng.gaussian()) as f32;
        }
        builder.push(id as u32, split, &buf).map(|_| ())
    };
    for (c, mean) in base.iter().enumerate() {
        for _ in 0..config.train_per_class {
            emit(&mut builder, &mut rng, c, Split::BaseTrain, mean)?;
        }
        for _ in 0..config.test_per_class {
            emit(&mut builder, &mut rng, c, Split::BaseTest, mean)?;
        }
    }
    for (k, mean) in novel.iter().enumerate() {
        for _ in 0..config.pool_per_class {
            emit(&mut builder, &mut rng, config.n_base + k, Split::NovelPool, mean)?;
        }
    }
    builder.build()
}

/// Nearest-base-prototype accuracy on the base-test split.
pub fn measure_bcr(set: &EmbeddingSet, metric: Metric) -> Result<f64> {
    let bank = compute_prototypes(set, Split::BaseTrain, BankKind::Base)?;
    let samples: Vec<LabeledFeature<'_>> = set
        .records_in(Split::BaseTest)
        .map(|r| LabeledFeature {
            class_id: r.class_id,
            feature: r.feature,
        })
        .collect();
    nearest_base_accuracy(&score_base_samples(&samples, &bank, metric)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSearch {
    pub sigma: f64,
    pub bcr: f64,
    pub iterations: usize,
}

pub const TUNE_TOLERANCE: f64 = 0.02;
pub const TUNE_MAX_ITERATIONS: usize = 60;

/// Bisection on `log(sigma)` over `[1e-6, 10]` until the measured BCR is
/// within [`TUNE_TOLERANCE`] of `target_bcr`. The `sigma` field of `config`
/// is ignored; all other fields, including the seed, are held fixed.
pub fn tune_sigma(target_bcr: f64, config: &SynthConfig, metric: Metric) -> Result<SigmaSearch> {
    if !(target_bcr > 0.0 && target_bcr < 1.0) {
        return Err(Error::Config(format!("target BCR must be in (0, 1), got {target_bcr}")));
    }
    let measure = |sigma: f64| -> Result<f64> {
        let cfg = SynthConfig { sigma, ..*config };
        measure_bcr(&generate(&cfg)?, metric)
    };
    let (mut lo, mut hi) = (1e-6f64.ln(), 10f64.ln());
    let mut last = f64::NAN;
    for iteration in 1..=TUNE_MAX_ITERATIONS {
        let sigma = ((lo + hi) / 2.0).exp();
        let bcr = measure(sigma)?;
        last = bcr;
        if (bcr - target_bcr).abs() <= TUNE_TOLERANCE {
            return Ok(SigmaSearch {
                sigma,
                bcr,
                iterations: iteration,
            });
        }
        // BCR falls as clusters widen.
        if bcr > target_bcr {
            lo = sigma.ln();
        } else {
            hi = sigma.ln();
        }
    }
    Err(Error::NoConvergence {
        target: target_bcr,
        iterations: TUNE_MAX_ITERATIONS,
        last,
    })
}
