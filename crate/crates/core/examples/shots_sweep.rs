//! How more support shots change vanilla and NCD novel accuracy.

use ncd::harness::write_sweep_csv;
use ncd::{generate, run_sweep, EvalConfig, SweepAxis, SynthConfig};

fn main() -> ncd::Result<()> {
    let set = generate(&SynthConfig { sigma: 0.29, ..SynthConfig::default() })?;
    let shots = [1.0, 2.0, 3.0, 5.0];
    let base = EvalConfig { episodes: 25, n_novel: 5, ..EvalConfig::default() };
    let reports = run_sweep(&set, SweepAxis::Shots, &shots, &base)?;

    println!("{:>2}  {:>7}  {:>9}  {:>7}", "K", "V-NCR", "NCR@5FOR", "gap");
    for (k, r) in shots.iter().zip(&reports) {
        let ncd = r.ncr_at_budget[1].ncr.mean;
        println!("{k:>2}  {:>7.4}  {:>9.4}  {:>+7.4}", r.v_ncr.mean, ncd, ncd - r.v_ncr.mean);
    }
    let mut csv = Vec::new();
    write_sweep_csv(&mut csv, SweepAxis::Shots, &shots, &reports).expect("in-memory write");
    println!("\nsweep.csv: {} rows", String::from_utf8_lossy(&csv).lines().count() - 1);
    Ok(())
}
