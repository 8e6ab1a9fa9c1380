//! Build a tiny embedding set by hand, write it as EMB1, read it back.

use ncd::{load_emb1, save_emb1, EmbeddingSetBuilder, Split};

fn main() -> ncd::Result<()> {
    let mut b = EmbeddingSetBuilder::new(3);
    b.push(0, Split::BaseTrain, &[1.0, 0.0, 0.0])?;
    b.push(0, Split::BaseTest, &[0.9, 0.1, 0.0])?;
    b.push(1, Split::BaseTrain, &[0.0, 1.0, 0.0])?;
    b.push(1, Split::BaseTest, &[0.1, 0.9, 0.0])?;
    b.push(7, Split::NovelPool, &[0.0, 0.0, 1.0])?;
    b.push(7, Split::NovelPool, &[0.0, 0.1, 0.9])?;
    b.class_name(0, "cat").class_name(1, "dog").class_name(7, "okapi");
    let set = b.build()?;

    let dir = std::env::temp_dir().join("ncd-example-emb1");
    std::fs::create_dir_all(&dir).map_err(|e| ncd::Error::Io { path: dir.clone(), source: e })?;
    let path = dir.join("tiny.emb1");
    save_emb1(&set, &path)?;
    let back = load_emb1(&path)?;

    assert_eq!(back, set);
    println!("{} records, {} bytes, sha256 {}", back.len(), set.to_emb1_bytes().len(), back.fingerprint());
    println!("{}", back.summarize());
    Ok(())
}
