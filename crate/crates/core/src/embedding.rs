//! Labeled embedding sets and their on-disk formats.
//!
//! EMB1 layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EMB1"
//! 4       4     u32 version = 1
//! 8       4     u32 dim
//! 12      8     u64 record_count
//! 20      4     u32 name_table_len
//! 24      n     UTF-8 JSON {"class_names": {"<id>": "<name>"}} (absent when n = 0)
//! ...           record_count records:
//!                 u32 class_id, u8 split (0 BaseTrain, 1 BaseTest, 2 NovelPool),
//!                 3 zero bytes, dim x f32
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMB1_MAGIC: [u8; 4] = *b"EMB1";
pub const EMB1_VERSION: u32 = 1;
pub const EMB1_HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    BaseTrain,
    BaseTest,
    NovelPool,
}

impl Split {
    pub fn code(self) -> u8 {
        match self {
            Split::BaseTrain => 0,
            Split::BaseTest => 1,
            Split::NovelPool => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Split::BaseTrain),
            1 => Ok(Split::BaseTest),
            2 => Ok(Split::NovelPool),
            other => Err(Error::InvalidSplit(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::BaseTrain => "base_train",
            Split::BaseTest => "base_test",
            Split::NovelPool => "novel_pool",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "base_train" => Some(Split::BaseTrain),
            "base_test" => Some(Split::BaseTest),
            "novel_pool" => Some(Split::NovelPool),
            _ => None,
        }
    }

    pub fn is_base(self) -> bool {
        !matches!(self, Split::NovelPool)
    }
}

/// Borrowed view of one record.
#[derive(Debug, Clone, Copy)]
pub struct Record<'a> {
    pub index: usize,
    pub class_id: u32,
    pub split: Split,
    pub feature: &'a [f32],
}

/// Feature matrix with per-row class labels and split tags. Immutable once
/// built; construction validates every invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    class_ids: Vec<u32>,
    splits: Vec<Split>,
    features: Vec<f32>,
    class_names: BTreeMap<u32, String>,
}

/// Accumulates records before validation.
#[derive(Debug, Clone)]
pub struct EmbeddingSetBuilder {
    dim: usize,
    class_ids: Vec<u32>,
    splits: Vec<Split>,
    features: Vec<f32>,
    class_names: BTreeMap<u32, String>,
}

impl EmbeddingSetBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            class_ids: Vec::new(),
            splits: Vec::new(),
            features: Vec::new(),
            class_names: BTreeMap::new(),
        }
    }

    pub fn with_capacity(dim: usize, records: usize) -> Self {
        let mut b = Self::new(dim);
        b.class_ids.reserve(records);
        b.splits.reserve(records);
        b.features.reserve(records * dim);
        b
    }

    pub fn push(&mut self, class_id: u32, split: Split, feature: &[f32]) -> Result<&mut Self> {
        if feature.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: feature.len(),
            });
        }
        self.class_ids.push(class_id);
        self.splits.push(split);
        self.features.extend_from_slice(feature);
        Ok(self)
    }

    pub fn class_name(&mut self, class_id: u32, name: impl Into<String>) -> &mut Self {
        self.class_names.insert(class_id, name.into());
        self
    }

    pub fn build(self) -> Result<EmbeddingSet> {
        EmbeddingSet::from_parts(
            self.dim,
            self.class_ids,
            self.splits,
            self.features,
            self.class_names,
        )
    }
}

impl EmbeddingSet {
    pub fn from_parts(
        dim: usize,
        class_ids: Vec<u32>,
        splits: Vec<Split>,
        features: Vec<f32>,
        class_names: BTreeMap<u32, String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDim);
        }
        if splits.len() != class_ids.len() || features.len() != class_ids.len() * dim {
            return Err(Error::DimMismatch {
                expected: class_ids.len() * dim,
                found: features.len(),
            });
        }
        if let Some(pos) = features.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteFeature {
                record: pos / dim,
                component: pos % dim,
            });
        }
        let mut base = BTreeSet::new();
        let mut novel = BTreeSet::new();
        for (&c, &s) in class_ids.iter().zip(&splits) {
            if s.is_base() {
                base.insert(c);
            } else {
                novel.insert(c);
            }
        }
        if let Some(&class_id) = base.intersection(&novel).next() {
            return Err(Error::SplitOverlap { class_id });
        }
        Ok(Self {
            dim,
            class_ids,
            splits,
            features,
            class_names,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn class_names(&self) -> &BTreeMap<u32, String> {
        &self.class_names
    }

    pub fn feature(&self, index: usize) -> &[f32] {
        &self.features[index * self.dim..(index + 1) * self.dim]
    }

    pub fn class_id(&self, index: usize) -> u32 {
        self.class_ids[index]
    }

    pub fn split(&self, index: usize) -> Split {
        self.splits[index]
    }

    pub fn record(&self, index: usize) -> Record<'_> {
        Record {
            index,
            class_id: self.class_ids[index],
            split: self.splits[index],
            feature: self.feature(index),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = Record<'_>> + '_ {
        (0..self.len()).map(move |i| self.record(i))
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = Record<'_>> + '_ {
        self.records().filter(move |r| r.split == split)
    }

    /// Record indices of `split`, in file order.
    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Distinct class ids appearing in `split`, ascending.
    pub fn classes_in(&self, split: Split) -> Vec<u32> {
        let set: BTreeSet<u32> = self.records_in(split).map(|r| r.class_id).collect();
        set.into_iter().collect()
    }

    /// Record indices grouped by class for `split`, classes ascending and
    /// indices in file order.
    pub fn indices_by_class(&self, split: Split) -> BTreeMap<u32, Vec<usize>> {
        let mut map: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for r in self.records_in(split) {
            map.entry(r.class_id).or_default().push(r.index);
        }
        map
    }

    pub fn summarize(&self) -> SplitSummary {
        let mut per_class: BTreeMap<u32, ClassCounts> = BTreeMap::new();
        for r in self.records() {
            let c = per_class.entry(r.class_id).or_default();
            match r.split {
                Split::BaseTrain => c.train += 1,
                Split::BaseTest => c.test += 1,
                Split::NovelPool => c.pool += 1,
            }
        }
        let n_base_classes = per_class.values().filter(|c| c.train > 0).count();
        let n_novel_classes = per_class.values().filter(|c| c.pool > 0).count();
        SplitSummary {
            n_base_classes,
            n_novel_classes,
            per_class_counts: per_class,
        }
    }

    pub fn to_emb1_bytes(&self) -> Vec<u8> {
        let names = if self.class_names.is_empty() {
            Vec::new()
        } else {
            let table: BTreeMap<String, &String> = self
                .class_names
                .iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
            serde_json::to_vec(&serde_json::json!({ "class_names": table }))
                .expect("string map serializes")
        };
        let record_len = 8 + 4 * self.dim;
        let mut out = Vec::with_capacity(EMB1_HEADER_LEN + names.len() + self.len() * record_len);
        out.extend_from_slice(&EMB1_MAGIC);
        out.extend_from_slice(&EMB1_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(names.len() as u32).to_le_bytes());
        out.extend_from_slice(&names);
        for r in self.records() {
            out.extend_from_slice(&r.class_id.to_le_bytes());
            out.push(r.split.code());
            out.extend_from_slice(&[0, 0, 0]);
            for x in r.feature {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_emb1_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
        if magic != EMB1_MAGIC {
            return Err(Error::BadMagic { found: magic });
        }
        let version = cur.u32()?;
        if version != EMB1_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let dim = cur.u32()? as usize;
        if dim == 0 {
            return Err(Error::ZeroDim);
        }
        let count = cur.u64()?;
        let names_len = cur.u32()? as usize;
        let class_names = parse_name_table(cur.take(names_len)?)?;

        let record_len = 8 + 4 * dim;
        let remaining = bytes.len() - cur.pos;
        let needed = (count as u128) * (record_len as u128);
        if needed > remaining as u128 {
            // Point at the first record that does not fit.
            let whole = remaining / record_len;
            return Err(Error::TruncatedFile {
                offset: cur.pos + whole * record_len,
                needed: record_len,
                available: remaining - whole * record_len,
            });
        }
        let count = count as usize;
        let mut class_ids = Vec::with_capacity(count);
        let mut splits = Vec::with_capacity(count);
        let mut features = Vec::with_capacity(count * dim);
        for _ in 0..count {
            class_ids.push(cur.u32()?);
            splits.push(Split::from_code(cur.take(1)?[0])?);
            cur.take(3)?;
            for chunk in cur.take(4 * dim)?.chunks_exact(4) {
                features.push(f32::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
        if cur.pos != bytes.len() {
            return Err(Error::TrailingBytes(bytes.len() - cur.pos));
        }
        Self::from_parts(dim, class_ids, splits, features, class_names)
    }

    /// SHA-256 of the EMB1 encoding, hex encoded.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_emb1_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_name_table(raw: &[u8]) -> Result<BTreeMap<u32, String>> {
    if raw.is_empty() {
        return Ok(BTreeMap::new());
    }
    #[derive(Deserialize)]
    struct Table {
        class_names: BTreeMap<String, String>,
    }
    let table: Table =
        serde_json::from_slice(raw).map_err(|e| Error::NameTable(e.to_string()))?;
    table
        .class_names
        .into_iter()
        .map(|(k, v)| {
            k.parse::<u32>()
                .map(|id| (id, v))
                .map_err(|_| Error::NameTable(format!("class id {k:?} is not a u32")))
        })
        .collect()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(Error::TruncatedFile {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_emb1(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingSet::from_emb1_bytes(&bytes)
}

pub fn save_emb1(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, set.to_emb1_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads `class_id,split,f_1,...,f_dim` rows. A first row whose first token
/// is not an integer is treated as a header. Row numbers in errors are 1-based.
pub fn load_csv(path: impl AsRef<Path>, dim: usize) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, dim)
}

pub fn parse_csv(text: &str, dim: usize) -> Result<EmbeddingSet> {
    if dim == 0 {
        return Err(Error::ZeroDim);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut builder = EmbeddingSetBuilder::new(dim);
    let mut feature = vec![0f32; dim];
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let first = row.get(0).unwrap_or("");
        if i == 0 && first.parse::<u64>().is_err() && !first.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            row: row_no,
            message,
        };
        let class_id: u32 = first
            .parse()
            .map_err(|_| parse_err(format!("bad class id {first:?}")))?;
        let split_tok = row.get(1).unwrap_or("");
        let split =
            Split::parse(split_tok).ok_or_else(|| parse_err(format!("bad split {split_tok:?}")))?;
        let found = row.len().saturating_sub(2);
        if found != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found,
            });
        }
        for (k, tok) in row.iter().skip(2).enumerate() {
            feature[k] = tok
                .parse()
                .map_err(|_| parse_err(format!("bad feature value {tok:?}")))?;
        }
        builder.push(class_id, split, &feature)?;
    }
    builder.build()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub train: usize,
    pub test: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub n_base_classes: usize,
    pub n_novel_classes: usize,
    pub per_class_counts: BTreeMap<u32, ClassCounts>,
}

impl std::fmt::Display for SplitSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let total = |g: fn(&ClassCounts) -> usize| self.per_class_counts.values().map(g).sum::<usize>();
        writeln!(f, "base classes (N0): {}", self.n_base_classes)?;
        writeln!(f, "novel pool classes: {}", self.n_novel_classes)?;
        writeln!(f, "base_train records: {}", total(|c| c.train))?;
        writeln!(f, "base_test records: {}", total(|c| c.test))?;
        write!(f, "novel_pool records: {}", total(|c| c.pool))
    }
}
