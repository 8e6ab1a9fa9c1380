//! The base-distance threshold as an out-of-distribution detector.

use ncd::calibrate::{base_test_samples, ood_rates};
use ncd::{build_for_curve, calibrate_alpha, compute_prototypes, generate, BankKind, Metric, Split, SynthConfig};

fn main() -> ncd::Result<()> {
    let set = generate(&SynthConfig { sigma: 0.29, novel_offset: 1.0, ..SynthConfig::default() })?;
    let base = compute_prototypes(&set, Split::BaseTrain, BankKind::Base)?;
    let samples = base_test_samples(&set);
    let curve = build_for_curve(&samples, &base, Metric::Cosine)?;

    let base_test: Vec<&[f32]> = samples.iter().map(|s| s.feature).collect();
    let novel: Vec<&[f32]> = set.records_in(Split::NovelPool).map(|r| r.feature).collect();
    for budget in [0.0, 0.02, 0.05, 0.10] {
        let alpha = calibrate_alpha(&curve, budget)?.alpha_star;
        let r = ood_rates(&base_test, &novel, &base, alpha, Metric::Cosine)?;
        println!("budget {budget:.2}  alpha {alpha:.4}  fpr {:.4}  tpr {:.4}", r.fpr, r.tpr);
    }
    Ok(())
}
