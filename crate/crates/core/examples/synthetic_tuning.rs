//! Generate synthetic sets and tune the noise level to hit a base accuracy.

use ncd::synth::measure_bcr;
use ncd::{generate, tune_sigma, Metric, SynthConfig};

fn main() -> ncd::Result<()> {
    let cfg = SynthConfig { dim: 32, n_base: 20, seed: 11, ..SynthConfig::default() };
    for sigma in [0.05, 0.2, 0.4, 0.8] {
        let set = generate(&SynthConfig { sigma, ..cfg })?;
        println!("sigma {sigma:<4}  BCR {:.3}", measure_bcr(&set, Metric::Cosine)?);
    }
    for target in [0.6, 0.8, 0.95] {
        let s = tune_sigma(target, &cfg, Metric::Cosine)?;
        println!("target {target}: sigma {:.4} -> BCR {:.3} ({} steps)", s.sigma, s.bcr, s.iterations);
    }
    Ok(())
}
