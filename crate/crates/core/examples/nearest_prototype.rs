//! Vanilla nearest-prototype inference versus the NCD branch.

use ncd::{classify_ncd, classify_vanilla, compute_prototypes, BankKind, Banks, DecisionConfig, EmbeddingSetBuilder, Metric, Split};

fn main() -> ncd::Result<()> {
    let mut b = EmbeddingSetBuilder::new(2);
    b.push(0, Split::BaseTrain, &[1.0, 0.0])?;
    b.push(1, Split::BaseTrain, &[0.0, 1.0])?;
    b.push(2, Split::NovelPool, &[-1.0, 0.2])?;
    let set = b.build()?;

    let base = compute_prototypes(&set, Split::BaseTrain, BankKind::Base)?;
    let novel = compute_prototypes(&set, Split::NovelPool, BankKind::Novel)?;
    let banks = Banks::new(&base, &novel)?;

    for q in [[0.9f32, 0.1], [0.5, 0.5], [-0.6, 0.5]] {
        let v = classify_vanilla(&q, banks, Metric::Cosine)?;
        print!("{q:?}: vanilla -> {}", v.predicted_class);
        for alpha in [0.1, 0.5, 1.0] {
            let c = classify_ncd(&q, banks, DecisionConfig::new(Metric::Cosine, alpha)?)?;
            let branch = if c.routed_novel { "novel" } else { "base" };
            print!(" | a={alpha}: {} via {branch} (d_base {:.3})", c.predicted_class, c.min_base_dist);
        }
        println!();
    }
    Ok(())
}
