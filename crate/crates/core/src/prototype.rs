//! Class prototypes and nearest-prototype inference.
//!
//! Two inference modes share one distance primitive:
//!
//! * vanilla: argmin over the union of base and novel prototypes;
//! * novel-class detection (NCD): a query whose distance to every base
//!   prototype strictly exceeds `alpha` is answered from the novel bank only,
//!   otherwise from the base bank only.
//!
//! Ties between equidistant prototypes go to the lowest class id.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingSet, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl Metric {
    /// Upper bound on distances, when one exists.
    pub fn max_distance(self) -> Option<f64> {
        match self {
            Metric::Cosine => Some(2.0),
            Metric::Euclidean => None,
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

/// Distance between two vectors, accumulated in f64.
///
/// Cosine distance is `1 - a.b / (|a| |b|)` clamped to `[0, 2]`; a zero vector
/// is an error. Euclidean distance uses the raw, unnormalized vectors.
pub fn distance<A, B>(a: &[A], b: &[B], metric: Metric) -> Result<f64>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    match metric {
        Metric::Cosine => {
            let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
            for (&x, &y) in a.iter().zip(b) {
                let (x, y): (f64, f64) = (x.into(), y.into());
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroVector);
            }
            Ok((1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 2.0))
        }
        Metric::Euclidean => {
            let sq: f64 = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let d = x.into() - y.into();
                    d * d
                })
                .sum();
            Ok(sq.sqrt())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankKind {
    Base,
    Novel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub class_id: u32,
    pub vector: Vec<f64>,
    pub support_count: usize,
}

/// Prototypes of one kind, sorted by class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    kind: BankKind,
    dim: usize,
    prototypes: Vec<Prototype>,
}

impl PrototypeBank {
    pub fn new(kind: BankKind, dim: usize, mut prototypes: Vec<Prototype>) -> Result<Self> {
        prototypes.sort_by_key(|p| p.class_id);
        for w in prototypes.windows(2) {
            if w[0].class_id == w[1].class_id {
                return Err(Error::DuplicateClass(w[0].class_id));
            }
        }
        for p in &prototypes {
            if p.vector.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: p.vector.len(),
                });
            }
            if p.support_count == 0 {
                return Err(Error::EmptyClass(p.class_id));
            }
        }
        Ok(Self {
            kind,
            dim,
            prototypes,
        })
    }

    pub fn empty(kind: BankKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            prototypes: Vec::new(),
        }
    }

    pub fn kind(&self) -> BankKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn prototypes(&self) -> &[Prototype] {
        &self.prototypes
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn get(&self, class_id: u32) -> Option<&Prototype> {
        self.prototypes
            .binary_search_by_key(&class_id, |p| p.class_id)
            .ok()
            .map(|i| &self.prototypes[i])
    }

    pub fn contains(&self, class_id: u32) -> bool {
        self.get(class_id).is_some()
    }

    /// Nearest prototype as `(class_id, distance)`; lowest class id on ties.
    pub fn nearest(&self, f: &[f32], metric: Metric) -> Result<Option<(u32, f64)>> {
        if f.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: f.len(),
            });
        }
        let mut best: Option<(u32, f64)> = None;
        // Prototypes are sorted by class id, so strict '<' keeps the lowest id.
        for p in &self.prototypes {
            let d = distance(f, &p.vector, metric)?;
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((p.class_id, d));
            }
        }
        Ok(best)
    }
}

/// Mean feature vector of every class present in `split`.
///
/// Sums run over records in file order in f64, so the result does not depend
/// on how callers enumerate the set.
pub fn compute_prototypes(set: &EmbeddingSet, split: Split, kind: BankKind) -> Result<PrototypeBank> {
    let groups = set.indices_by_class(split);
    let prototypes = groups
        .iter()
        .map(|(&class_id, idx)| mean_of(set, class_id, idx))
        .collect::<Result<Vec<_>>>()?;
    PrototypeBank::new(kind, set.dim(), prototypes)
}

/// Prototype of `class_id` from the given record indices. Indices are summed
/// in ascending order.
pub fn mean_of(set: &EmbeddingSet, class_id: u32, indices: &[usize]) -> Result<Prototype> {
    if indices.is_empty() {
        return Err(Error::EmptyClass(class_id));
    }
    let mut order = indices.to_vec();
    order.sort_unstable();
    let mut sum = vec![0.0f64; set.dim()];
    for &i in &order {
        for (s, &x) in sum.iter_mut().zip(set.feature(i)) {
            *s += x as f64;
        }
    }
    let n = order.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(Prototype {
        class_id,
        vector: sum,
        support_count: order.len(),
    })
}

/// Inference parameters. Ties always resolve to the lowest class id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionConfig {
    pub metric: Metric,
    pub alpha: f64,
}

impl DecisionConfig {
    pub fn new(metric: Metric, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidAlpha(alpha));
        }
        Ok(Self { metric, alpha })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub predicted_class: u32,
    pub routed_novel: bool,
    pub min_base_dist: f64,
    pub min_novel_dist: Option<f64>,
}

/// A base bank and a novel bank validated to be used together.
#[derive(Debug, Clone, Copy)]
pub struct Banks<'a> {
    base: &'a PrototypeBank,
    novel: &'a PrototypeBank,
}

impl<'a> Banks<'a> {
    pub fn new(base: &'a PrototypeBank, novel: &'a PrototypeBank) -> Result<Self> {
        if base.kind != BankKind::Base {
            return Err(Error::BankKind { expected: "base" });
        }
        if novel.kind != BankKind::Novel {
            return Err(Error::BankKind { expected: "novel" });
        }
        if base.dim != novel.dim {
            return Err(Error::DimMismatch {
                expected: base.dim,
                found: novel.dim,
            });
        }
        let ids: BTreeSet<u32> = base.prototypes.iter().map(|p| p.class_id).collect();
        if let Some(p) = novel.prototypes.iter().find(|p| ids.contains(&p.class_id)) {
            return Err(Error::SplitOverlap {
                class_id: p.class_id,
            });
        }
        Ok(Self { base, novel })
    }

    pub fn base(&self) -> &'a PrototypeBank {
        self.base
    }

    pub fn novel(&self) -> &'a PrototypeBank {
        self.novel
    }
}

/// Nearest base and nearest novel prototype of one query. Both inference
/// modes are pure functions of this pair, so a query scored once can be
/// decided at any number of thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestPair {
    pub base: Option<(u32, f64)>,
    pub novel: Option<(u32, f64)>,
}

impl NearestPair {
    pub fn new(f: &[f32], banks: Banks<'_>, metric: Metric) -> Result<Self> {
        Ok(Self {
            base: banks.base.nearest(f, metric)?,
            novel: banks.novel.nearest(f, metric)?,
        })
    }

    /// Argmin over the union; lowest class id on ties.
    pub fn vanilla(&self) -> Result<Classification> {
        let (predicted_class, routed_novel) = match (self.base, self.novel) {
            (None, None) => return Err(Error::EmptyBanks),
            (Some((b, _)), None) => (b, false),
            (None, Some((n, _))) => (n, true),
            (Some((b, bd)), Some((n, nd))) => {
                if nd < bd || (nd == bd && n < b) {
                    (n, true)
                } else {
                    (b, false)
                }
            }
        };
        Ok(Classification {
            predicted_class,
            routed_novel,
            min_base_dist: self.base.map_or(f64::INFINITY, |(_, d)| d),
            min_novel_dist: self.novel.map(|(_, d)| d),
        })
    }

    pub fn ncd(&self, alpha: f64) -> Result<Classification> {
        let (bc, min_base_dist) = self.base.ok_or(Error::EmptyBanks)?;
        let routed_novel = min_base_dist > alpha;
        let predicted_class = if routed_novel {
            self.novel.ok_or(Error::NovelBankEmpty)?.0
        } else {
            bc
        };
        Ok(Classification {
            predicted_class,
            routed_novel,
            min_base_dist,
            min_novel_dist: self.novel.map(|(_, d)| d),
        })
    }
}

/// Nearest prototype over the union of both banks.
pub fn classify_vanilla(f: &[f32], banks: Banks<'_>, metric: Metric) -> Result<Classification> {
    NearestPair::new(f, banks, metric)?.vanilla()
}

/// The detection rule: `true` iff the nearest base prototype is strictly
/// farther than `alpha`. Returns the rule value and that minimum distance.
pub fn ncd_rule(f: &[f32], base: &PrototypeBank, cfg: DecisionConfig) -> Result<(bool, f64)> {
    let (_, d) = base.nearest(f, cfg.metric)?.ok_or(Error::EmptyBanks)?;
    Ok((d > cfg.alpha, d))
}

/// Branching prediction: novel bank only when the rule fires, base bank only
/// otherwise.
pub fn classify_ncd(f: &[f32], banks: Banks<'_>, cfg: DecisionConfig) -> Result<Classification> {
    NearestPair::new(f, banks, cfg.metric)?.ncd(cfg.alpha)
}
