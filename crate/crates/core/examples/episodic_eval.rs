//! Full episodic evaluation on a synthetic set tuned to a target base accuracy.

use ncd::report::render_table;
use ncd::{generate, run_evaluation, tune_sigma, EvalConfig, Metric, SynthConfig};

fn main() -> ncd::Result<()> {
    let cfg = SynthConfig::default();
    let tuned = tune_sigma(0.80, &cfg, Metric::Cosine)?;
    println!("sigma {:.4} gives BCR {:.3} after {} steps", tuned.sigma, tuned.bcr, tuned.iterations);
    let set = generate(&SynthConfig { sigma: tuned.sigma, ..cfg })?;

    let report = run_evaluation(&set, &EvalConfig { episodes: 25, n_novel: 1, shots: 1, ..EvalConfig::default() })?;
    println!("{}", render_table(&report));
    Ok(())
}
