//! Forgetting curve on base data only, and the threshold each budget allows.

use ncd::calibrate::base_test_samples;
use ncd::{build_for_curve, calibrate_alpha, compute_prototypes, generate, BankKind, Metric, Split, SynthConfig};

fn main() -> ncd::Result<()> {
    let set = generate(&SynthConfig { sigma: 0.3, seed: 4, ..SynthConfig::default() })?;
    let base = compute_prototypes(&set, Split::BaseTrain, BankKind::Base)?;
    let curve = build_for_curve(&base_test_samples(&set), &base, Metric::Cosine)?;

    println!("BCR {:.3} over {} samples, {} candidate thresholds", curve.bcr, curve.n_samples, curve.len());
    for budget in [0.0, 0.01, 0.02, 0.05, 0.10, 1.0] {
        let r = calibrate_alpha(&curve, budget)?;
        println!("budget {budget:>5.2}: alpha* {:.4}  FOR {:.4}", r.alpha_star, r.achieved_for);
    }
    let mut csv = Vec::new();
    curve.write_csv(&mut csv).expect("in-memory write");
    for line in String::from_utf8_lossy(&csv).lines().take(6) {
        println!("{line}");
    }
    Ok(())
}
