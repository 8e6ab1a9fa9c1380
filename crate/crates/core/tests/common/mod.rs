//! Naive reference implementations used as oracles by the integration and
//! acceptance tests. Only the `distance` primitive, the RNG and the data model
//! come from the library; every loop, argmin, threshold and sampling step is
//! re-derived here the slow way.

#![allow(dead_code)]

use std::collections::HashMap;

use ncd::embedding::{EmbeddingSet, Split};
use ncd::prototype::{distance, Metric};
use ncd::rng::SplitMix64;
use ncd::synth::SynthConfig;

pub type Protos = Vec<(u32, Vec<f64>)>;

pub fn naive_prototypes(set: &EmbeddingSet, split: Split) -> Protos {
    let mut sums: HashMap<u32, (Vec<f64>, usize)> = HashMap::new();
    for i in 0..set.len() {
        if set.split(i) != split {
            continue;
        }
        let e = sums.entry(set.class_id(i)).or_insert((vec![0.0; set.dim()], 0));
        for k in 0..set.dim() {
            e.0[k] += set.feature(i)[k] as f64;
        }
        e.1 += 1;
    }
    let mut out: Protos = sums
        .into_iter()
        .map(|(c, (s, n))| (c, s.into_iter().map(|x| x / n as f64).collect()))
        .collect();
    out.sort_by_key(|p| p.0);
    out
}

/// Nearest `(class, distance)` by full scan; equal distances go to the lower id.
pub fn naive_nearest(f: &[f32], protos: &[(u32, Vec<f64>)], metric: Metric) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for (c, p) in protos.iter().rev() {
        let d = distance(f, p, metric).unwrap();
        best = match best {
            None => Some((*c, d)),
            Some((bc, bd)) if d < bd || (d == bd && *c < bc) => Some((*c, d)),
            keep => keep,
        };
    }
    best
}

pub fn naive_vanilla(f: &[f32], base: &Protos, novel: &Protos, metric: Metric) -> u32 {
    let mut all: Protos = base.clone();
    all.extend(novel.iter().cloned());
    naive_nearest(f, &all, metric).unwrap().0
}

pub fn naive_ncd(f: &[f32], base: &Protos, novel: &Protos, alpha: f64, metric: Metric) -> (u32, bool) {
    let (bc, bd) = naive_nearest(f, base, metric).unwrap();
    if bd > alpha {
        (naive_nearest(f, novel, metric).unwrap().0, true)
    } else {
        (bc, false)
    }
}

/// `(min_base_dist, nearest-base correct?)` for every base-test record.
pub fn naive_scores(set: &EmbeddingSet, base: &Protos, metric: Metric) -> Vec<(f64, bool)> {
    (0..set.len())
        .filter(|&i| set.split(i) == Split::BaseTest)
        .map(|i| {
            let (c, d) = naive_nearest(set.feature(i), base, metric).unwrap();
            (d, c == set.class_id(i))
        })
        .collect()
}

pub fn naive_accuracy(scores: &[(f64, bool)], alpha: f64) -> f64 {
    let mut hits = 0;
    for &(d, ok) in scores {
        if ok && d <= alpha {
            hits += 1;
        }
    }
    hits as f64 / scores.len() as f64
}

pub fn naive_for(scores: &[(f64, bool)], alpha: f64) -> f64 {
    let mut lost = 0;
    for &(d, ok) in scores {
        if ok && d > alpha {
            lost += 1;
        }
    }
    lost as f64 / scores.len() as f64
}

/// Candidate thresholds: 0, every observed distance, the metric bound.
pub fn naive_candidates(scores: &[(f64, bool)], metric: Metric) -> Vec<f64> {
    let mut c = vec![0.0];
    for &(d, _) in scores {
        if !c.contains(&d) {
            c.push(d);
        }
    }
    if metric == Metric::Cosine && !c.contains(&2.0) {
        c.push(2.0);
    }
    c.sort_by(|a, b| a.partial_cmp(b).unwrap());
    c
}

/// Smallest candidate whose brute-force FOR fits the budget.
pub fn naive_calibrate(scores: &[(f64, bool)], metric: Metric, budget: f64) -> (f64, f64) {
    let mut best: Option<(f64, f64)> = None;
    for t in naive_candidates(scores, metric) {
        let f = naive_for(scores, t);
        if f <= budget && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, f));
        }
    }
    best.unwrap()
}

#[derive(Debug, PartialEq)]
pub struct NaiveEpisode {
    pub classes: Vec<u32>,
    pub support: Vec<Vec<usize>>,
    pub v_ncr: f64,
    pub ncr: Vec<f64>,
    pub tpr: Vec<f64>,
}

fn naive_partial_shuffle<T>(rng: &mut SplitMix64, v: &mut [T], k: usize) {
    for i in 0..k {
        let j = i + rng.below((v.len() - i) as u64) as usize;
        v.swap(i, j);
    }
}

/// Episode with all remaining pool samples as queries.
pub fn naive_episode(
    set: &EmbeddingSet,
    base: &Protos,
    n_novel: usize,
    shots: usize,
    seed: u64,
    alphas: &[f64],
    metric: Metric,
) -> NaiveEpisode {
    let mut pool_classes: Vec<u32> = Vec::new();
    for i in 0..set.len() {
        if set.split(i) == Split::NovelPool && !pool_classes.contains(&set.class_id(i)) {
            pool_classes.push(set.class_id(i));
        }
    }
    pool_classes.sort();
    let mut rng = SplitMix64::new(seed);
    naive_partial_shuffle(&mut rng, &mut pool_classes, n_novel);
    let classes = pool_classes[..n_novel].to_vec();

    let mut support = Vec::new();
    let mut novel: Protos = Vec::new();
    let mut queries = Vec::new();
    for &c in &classes {
        let mut idx: Vec<usize> = (0..set.len())
            .filter(|&i| set.split(i) == Split::NovelPool && set.class_id(i) == c)
            .collect();
        naive_partial_shuffle(&mut rng, &mut idx, shots);
        let sup = idx[..shots].to_vec();
        let mut mean = vec![0.0; set.dim()];
        let mut sorted = sup.clone();
        sorted.sort();
        for &i in &sorted {
            for (m, x) in mean.iter_mut().zip(set.feature(i)) {
                *m += *x as f64;
            }
        }
        for m in &mut mean {
            *m /= shots as f64;
        }
        novel.push((c, mean));
        support.push(sup);
        let mut rest = idx[shots..].to_vec();
        rest.sort();
        queries.extend(rest);
    }

    let n = queries.len() as f64;
    let v_hits = queries
        .iter()
        .filter(|&&q| naive_vanilla(set.feature(q), base, &novel, metric) == set.class_id(q))
        .count();
    let mut ncr = Vec::new();
    let mut tpr = Vec::new();
    for &a in alphas {
        let mut hits = 0;
        let mut routed = 0;
        for &q in &queries {
            let (c, r) = naive_ncd(set.feature(q), base, &novel, a, metric);
            hits += (c == set.class_id(q)) as usize;
            routed += r as usize;
        }
        ncr.push(hits as f64 / n);
        tpr.push(routed as f64 / n);
    }
    NaiveEpisode {
        classes,
        support,
        v_ncr: v_hits as f64 / n,
        ncr,
        tpr,
    }
}

/// Small random synthetic config for property sweeps.
pub fn random_config(rng: &mut SplitMix64, dims: &[usize], n_bases: &[usize]) -> SynthConfig {
    let pick = |rng: &mut SplitMix64, xs: &[usize]| xs[rng.below(xs.len() as u64) as usize];
    SynthConfig {
        dim: pick(rng, dims),
        n_base: pick(rng, n_bases),
        n_novel_pool: 3 + rng.below(6) as usize,
        train_per_class: 3 + rng.below(8) as usize,
        test_per_class: 2 + rng.below(8) as usize,
        pool_per_class: 3 + rng.below(6) as usize,
        sigma: 0.05 + 0.5 * rng.uniform(),
        novel_offset: rng.uniform(),
        seed: rng.next_u64(),
    }
}
