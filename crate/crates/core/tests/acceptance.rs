//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use ncd::calibrate::{base_test_samples, build_for_curve, calibrate_alpha, score_base_samples};
use ncd::embedding::{EmbeddingSet, Split};
use ncd::harness::{run_episode, run_evaluation, run_sweep, EpisodeSpec, EvalConfig, EvalReport, QueryDemand, SweepAxis};
use ncd::prototype::{
    classify_ncd, classify_vanilla, compute_prototypes, BankKind, Banks, DecisionConfig, Metric,
};
use ncd::rng::{derive_seed, SplitMix64};
use ncd::synth::{generate, measure_bcr, tune_sigma, SynthConfig};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn base_protos(set: &EmbeddingSet) -> Protos {
    naive_prototypes(set, Split::BaseTrain)
}

fn calibration_guarantee() -> Result<String, String> {
    let budgets = [0.0, 0.02, 0.05, 0.10, 1.0];
    let mut rng = SplitMix64::new(0xCA11);
    let mut checked = 0;
    for cfg_i in 0..200 {
        let cfg = random_config(&mut rng, &[8, 32, 64], &[5, 20, 50]);
        let set = generate(&cfg).map_err(|e| e.to_string())?;
        let base = compute_prototypes(&set, Split::BaseTrain, BankKind::Base).map_err(|e| e.to_string())?;
        let curve = build_for_curve(&base_test_samples(&set), &base, Metric::Cosine).map_err(|e| e.to_string())?;
        let scores = naive_scores(&set, &base_protos(&set), Metric::Cosine);
        let candidates = naive_candidates(&scores, Metric::Cosine);
        for &b in &budgets {
            let r = calibrate_alpha(&curve, b).map_err(|e| format!("config {cfg_i}, budget {b}: {e}"))?;
            ensure(r.achieved_for <= b, || format!("config {cfg_i}: achieved {} > budget {b}", r.achieved_for))?;
            ensure(naive_for(&scores, r.alpha_star) == r.achieved_for, || {
                format!("config {cfg_i}: reported FOR disagrees with scan at alpha {}", r.alpha_star)
            })?;
            let pos = candidates
                .iter()
                .position(|&c| c == r.alpha_star)
                .ok_or_else(|| format!("config {cfg_i}: alpha {} is not a candidate", r.alpha_star))?;
            if pos > 0 {
                let prev = candidates[pos - 1];
                ensure(naive_for(&scores, prev) > b, || {
                    format!("config {cfg_i}: smaller candidate {prev} also fits budget {b}")
                })?;
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} (config, budget) pairs"))
}

fn monotonicity() -> Result<String, String> {
    let grid: Vec<f64> = (0..100).map(|i| 2.0 * i as f64 / 99.0).collect();
    let mut rng = SplitMix64::new(0x307);
    for cfg_i in 0..20 {
        let cfg = random_config(&mut rng, &[8, 32, 64], &[5, 20, 50]);
        let set = generate(&cfg).map_err(|e| e.to_string())?;
        let eval = EvalConfig {
            episodes: 5,
            n_novel: 2,
            shots: 1,
            alphas: grid.clone(),
            master_seed: cfg_i,
            ..EvalConfig::default()
        };
        let report = run_evaluation(&set, &eval).map_err(|e| e.to_string())?;
        for w in report.ncr_at_alpha.windows(2) {
            ensure(w[1].measured_for <= w[0].measured_for, || format!("config {cfg_i}: FOR rises at alpha {}", w[1].alpha))?;
            ensure(w[1].fpr <= w[0].fpr, || format!("config {cfg_i}: fpr rises at alpha {}", w[1].alpha))?;
        }
        for row in &report.per_episode {
            let n = row.ncr.len() - grid.len();
            for w in row.ncr[n..].windows(2) {
                ensure(w[1] <= w[0], || format!("config {cfg_i}: episode {} NCR rises", row.episode))?;
            }
            for w in row.tpr[n..].windows(2) {
                ensure(w[1] <= w[0], || format!("config {cfg_i}: episode {} tpr rises", row.episode))?;
            }
        }
    }
    Ok("20 configs x 100 thresholds".into())
}

fn boundary_identities() -> Result<String, String> {
    let mut rng = SplitMix64::new(0xB0);
    for cfg_i in 0..20 {
        let cfg = random_config(&mut rng, &[8, 32, 64], &[5, 20, 50]);
        let set = generate(&cfg).map_err(|e| e.to_string())?;
        let eval = EvalConfig {
            episodes: 4,
            n_novel: 2,
            shots: 1,
            alphas: vec![0.0, 2.0],
            master_seed: cfg_i,
            ..EvalConfig::default()
        };
        let report = run_evaluation(&set, &eval).map_err(|e| e.to_string())?;
        let scores = naive_scores(&set, &base_protos(&set), Metric::Cosine);
        ensure(scores.iter().all(|s| s.0 > 0.0), || format!("config {cfg_i}: base sample at distance 0"))?;
        let (zero, top) = (&report.ncr_at_alpha[0], &report.ncr_at_alpha[1]);
        ensure(zero.measured_for == report.bcr, || format!("config {cfg_i}: FOR(0) = {} != BCR {}", zero.measured_for, report.bcr))?;
        ensure(zero.tpr.min == 1.0, || format!("config {cfg_i}: tpr(0) = {}", zero.tpr.min))?;
        ensure(top.measured_for == 0.0, || format!("config {cfg_i}: FOR(2) = {}", top.measured_for))?;
        ensure(top.ncr.max == 0.0 && top.tpr.max == 0.0, || format!("config {cfg_i}: NCR(2) = {}", top.ncr.max))?;
    }
    Ok("20 configs".into())
}

fn oracle_equivalence() -> Result<String, String> {
    let cfg = SynthConfig {
        dim: 32,
        n_base: 50,
        n_novel_pool: 20,
        train_per_class: 10,
        test_per_class: 20,
        pool_per_class: 8,
        sigma: 0.2,
        novel_offset: 0.4,
        seed: 17,
    };
    let set = generate(&cfg).map_err(|e| e.to_string())?;
    let mut checks = 0usize;
    for metric in [Metric::Cosine, Metric::Euclidean] {
        let base = compute_prototypes(&set, Split::BaseTrain, BankKind::Base).map_err(|e| e.to_string())?;
        let protos = base_protos(&set);
        let samples = base_test_samples(&set);
        ensure(samples.len() == 1000, || format!("{} base-test samples", samples.len()))?;

        let scores = naive_scores(&set, &protos, metric);
        let lib_scores = score_base_samples(&samples, &base, metric).map_err(|e| e.to_string())?;
        for (a, b) in lib_scores.iter().zip(&scores) {
            ensure((a.min_base_dist, a.correct) == *b, || format!("{metric}: score mismatch"))?;
        }
        let curve = build_for_curve(&samples, &base, metric).map_err(|e| e.to_string())?;
        let mut candidates = naive_candidates(&scores, metric);
        if metric == Metric::Euclidean {
            // No fixed bound: the curve ends at the largest observed distance.
            candidates.retain(|&c| c <= scores.iter().map(|s| s.0).fold(0.0, f64::max));
        }
        ensure(curve.thresholds == candidates, || format!("{metric}: thresholds differ"))?;
        for (i, &t) in curve.thresholds.iter().enumerate() {
            ensure(curve.for_at[i] == naive_for(&scores, t), || format!("{metric}: FOR at {t}"))?;
            ensure(curve.base_acc_at[i] == naive_accuracy(&scores, t), || format!("{metric}: acc at {t}"))?;
        }
        for b in [0.0, 0.01, 0.02, 0.05, 0.1, 0.3, 1.0] {
            let r = calibrate_alpha(&curve, b).map_err(|e| e.to_string())?;
            ensure((r.alpha_star, r.achieved_for) == naive_calibrate(&scores, metric, b), || {
                format!("{metric}: calibration at budget {b}")
            })?;
        }

        let alphas: Vec<f64> = curve.thresholds.iter().step_by(50).copied().chain([0.3, 1.0]).collect();
        for ep in 0..10u64 {
            let seed = derive_seed(99, ep);
            let spec = EpisodeSpec { n_novel: 5, shots: 1 + (ep as usize % 3), seed, query_per_class: QueryDemand::AllRemaining };
            let row = run_episode(&set, &base, &spec, &alphas, metric).map_err(|e| e.to_string())?;
            let naive = naive_episode(&set, &protos, spec.n_novel, spec.shots, seed, &alphas, metric);
            ensure(
                row.classes == naive.classes && row.support == naive.support && row.v_ncr == naive.v_ncr
                    && row.ncr == naive.ncr && row.tpr == naive.tpr,
                || format!("{metric}: episode {ep} differs from naive loop"),
            )?;

            let novel: Protos = naive
                .classes
                .iter()
                .zip(&naive.support)
                .map(|(&c, sup)| {
                    let mut sorted = sup.clone();
                    sorted.sort();
                    let mut m = vec![0.0; set.dim()];
                    for &i in &sorted {
                        for (k, x) in set.feature(i).iter().enumerate() {
                            m[k] += *x as f64;
                        }
                    }
                    (c, m.into_iter().map(|x| x / sorted.len() as f64).collect())
                })
                .collect();
            let novel_bank = ncd::harness::novel_bank(&set, &ncd::harness::sample_episode(&set, &spec).unwrap()).unwrap();
            let banks = Banks::new(&base, &novel_bank).map_err(|e| e.to_string())?;
            for i in (0..set.len()).step_by(7) {
                let f = set.feature(i);
                let v = classify_vanilla(f, banks, metric).map_err(|e| e.to_string())?;
                ensure(v.predicted_class == naive_vanilla(f, &protos, &novel, metric), || format!("{metric}: vanilla at record {i}"))?;
                for &a in &alphas {
                    let c = classify_ncd(f, banks, DecisionConfig::new(metric, a).unwrap()).map_err(|e| e.to_string())?;
                    ensure((c.predicted_class, c.routed_novel) == naive_ncd(f, &protos, &novel, a, metric), || {
                        format!("{metric}: ncd at record {i}, alpha {a}")
                    })?;
                    checks += 1;
                }
            }
        }
    }
    Ok(format!("{checks} classifications, 1000 samples x 50 classes, both metrics"))
}

fn tuned_set(seed: u64) -> Result<(EmbeddingSet, f64, f64), String> {
    let cfg = SynthConfig { seed, ..SynthConfig::default() };
    let found = tune_sigma(0.80, &cfg, Metric::Cosine).map_err(|e| e.to_string())?;
    let set = generate(&SynthConfig { sigma: found.sigma, ..cfg }).map_err(|e| e.to_string())?;
    let bcr = measure_bcr(&set, Metric::Cosine).map_err(|e| e.to_string())?;
    ensure((0.75..=0.85).contains(&bcr), || format!("tuned BCR {bcr} outside [0.75, 0.85]"))?;
    Ok((set, found.sigma, bcr))
}

fn tradeoff_trend() -> Result<String, String> {
    let (set, sigma, bcr) = tuned_set(0)?;
    let (mut v, mut n5) = (0.0, 0.0);
    for master in 0..5 {
        let eval = EvalConfig { episodes: 25, n_novel: 1, shots: 1, master_seed: master, ..EvalConfig::default() };
        let r = run_evaluation(&set, &eval).map_err(|e| e.to_string())?;
        let (at2, at5) = (r.ncr_at_budget[0].ncr.mean, r.ncr_at_budget[1].ncr.mean);
        ensure(at5 >= at2 && at2 >= 0.0, || format!("seed {master}: NCR@5FOR {at5} < NCR@2FOR {at2}"))?;
        v += r.v_ncr.mean / 5.0;
        n5 += at5 / 5.0;
    }
    ensure(n5 > v, || format!("mean NCR@5FOR {n5:.4} <= mean V-NCR {v:.4}"))?;
    Ok(format!("sigma {sigma:.4}, BCR {bcr:.3}, V-NCR {v:.4}, NCR@5FOR {n5:.4}"))
}

fn shots_ablation() -> Result<String, String> {
    let (set, _, _) = tuned_set(0)?;
    let shots = [1.0, 2.0, 3.0, 5.0];
    let mut v = [0.0; 4];
    let mut gap = [0.0; 4];
    for master in 0..20 {
        let eval = EvalConfig { episodes: 25, n_novel: 5, master_seed: master, ..EvalConfig::default() };
        let reports = run_sweep(&set, SweepAxis::Shots, &shots, &eval).map_err(|e| e.to_string())?;
        for (i, r) in reports.iter().enumerate() {
            v[i] += r.v_ncr.mean / 20.0;
            gap[i] += (r.ncr_at_budget[1].ncr.mean - r.v_ncr.mean) / 20.0;
        }
    }
    let summary = format!("V-NCR {v:.4?}, gap {gap:.4?}");
    for i in 1..4 {
        ensure(v[i] >= v[i - 1], || format!("V-NCR drops at K={}: {summary}", shots[i]))?;
        ensure(gap[i] <= gap[i - 1], || format!("gap grows at K={}: {summary}", shots[i]))?;
    }
    Ok(summary)
}

fn format_and_determinism() -> Result<String, String> {
    let mut rng = SplitMix64::new(0xF0);
    for _ in 0..20 {
        let set = generate(&random_config(&mut rng, &[8, 32], &[5, 20])).map_err(|e| e.to_string())?;
        let bytes = set.to_emb1_bytes();
        let back = EmbeddingSet::from_emb1_bytes(&bytes).map_err(|e| e.to_string())?;
        ensure(back == set && back.to_emb1_bytes() == bytes, || "EMB1 round-trip not bit-exact".into())?;
    }
    let set = generate(&SynthConfig { n_base: 20, n_novel_pool: 10, ..SynthConfig::default() }).map_err(|e| e.to_string())?;
    let run = |threads| -> Result<EvalReport, String> {
        let cfg = EvalConfig { episodes: 12, n_novel: 3, shots: 2, alphas: vec![0.3, 0.6], threads: Some(threads), ..EvalConfig::default() };
        run_evaluation(&set, &cfg).map_err(|e| e.to_string())
    };
    let reference = run(1)?;
    for threads in [1, 2, 4, 8] {
        ensure(run(threads)? == reference, || format!("report differs with {threads} threads"))?;
    }
    Ok("20 round-trips, threads {1,2,4,8} identical".into())
}

fn main() {
    let criteria: [(&str, Check, Duration); 7] = [
        ("calibration guarantee", calibration_guarantee, Duration::from_secs(60)),
        ("monotonicity in alpha", monotonicity, Duration::from_secs(60)),
        ("boundary identities", boundary_identities, Duration::from_secs(60)),
        ("oracle equivalence", oracle_equivalence, Duration::from_secs(120)),
        ("trade-off trend (N1=1, K=1)", tradeoff_trend, Duration::from_secs(300)),
        ("shots ablation (N1=5)", shots_ablation, Duration::from_secs(600)),
        ("format and determinism", format_and_determinism, Duration::from_secs(120)),
    ];
    // `cargo test` passes harness flags; a bare word filters criteria by name.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check, limit) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            if elapsed > limit {
                Err(format!("took {elapsed:.1?}, limit {limit:?}; {detail}"))
            } else {
                Ok(detail)
            }
        });
        match outcome {
            Ok(detail) => println!("PASS  {name:<30} {elapsed:>8.2?}  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<30} {elapsed:>8.2?}  {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
