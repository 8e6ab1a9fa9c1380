//! Report rendering, files and schema checks.
//!
//! `report.json` is the serde encoding of [`EvalReport`]:
//!
//! ```text
//! {
//!   "bcr": f64,
//!   "v_ncr": Stat,
//!   "ncr_at_budget": [{"budget", "alpha_star", "achieved_for", "measured_for", "ncr": Stat}],
//!   "ood": [{"budget", "alpha", "fpr", "tpr"}],
//!   "ncr_at_alpha": [{"alpha", "measured_for", "ncr": Stat, "fpr", "tpr": Stat}],
//!   "per_episode": [{"episode", "seed", "classes", "support", "n_queries", "v_ncr", "ncr", "tpr"}],
//!   "protocol": {"n_novel", "shots", "query_per_class", "episodes", "metric", "master_seed",
//!                "budgets", "alphas", "calibration_holdout", "dataset_fingerprint",
//!                "n_base_classes", "n_novel_pool_classes", "n_calibration_samples",
//!                "n_report_samples"}
//! }
//! Stat = {"mean", "std", "min", "max"}
//! ```
//!
//! Rates lie in `[0, 1]`, every stat has `min <= mean <= max`, and the
//! per-episode `ncr`/`tpr` arrays have one entry per budget followed by one per
//! fixed alpha. [`validate_report_json`] checks all of this.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::calibrate::CalibrationResult;
use crate::error::{Error, Result};
use crate::harness::{EvalReport, Stat};

/// `NCR@2FOR`-style column label for a budget fraction.
pub fn budget_label(budget: f64) -> String {
    format!("NCR@{}FOR", pct(budget))
}

fn pct(x: f64) -> String {
    let p = (x * 100.0 * 1e6).round() / 1e6;
    format!("{p}")
}

fn pct1(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

fn pm(s: &Stat) -> String {
    format!("{:.1} ± {:.1}", s.mean * 100.0, s.std * 100.0)
}

fn render_rows(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}", w = *w))
            .collect();
        format!("| {} |", parts.join(" | "))
    };
    let sep: String = format!(
        "|{}|",
        widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|")
    );
    let mut out = String::new();
    writeln!(out, "{}", line(header)).unwrap();
    writeln!(out, "{sep}").unwrap();
    for row in rows {
        writeln!(out, "{}", line(row)).unwrap();
    }
    out
}

/// Headline table (percentages, mean ± std over episodes) followed by the
/// operating-point details.
pub fn render_table(report: &EvalReport) -> String {
    let mut header = vec!["N1".to_string(), "K".to_string(), "BCR".to_string(), "V-NCR".to_string()];
    let mut row = vec![
        report.protocol.n_novel.to_string(),
        report.protocol.shots.to_string(),
        pct1(report.bcr),
        pm(&report.v_ncr),
    ];
    for b in &report.ncr_at_budget {
        header.push(budget_label(b.budget));
        row.push(pm(&b.ncr));
    }
    for a in &report.ncr_at_alpha {
        header.push(format!("NCR@α={}", a.alpha));
        row.push(pm(&a.ncr));
    }
    let mut out = render_rows(&header, &[row]);

    let detail_header: Vec<String> = ["point", "alpha", "FOR budget", "FOR calib", "FOR report", "OOD fpr", "OOD tpr"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for (b, o) in report.ncr_at_budget.iter().zip(&report.ood) {
        rows.push(vec![
            budget_label(b.budget),
            format!("{:.6}", b.alpha_star),
            pct1(b.budget),
            pct1(b.achieved_for),
            pct1(b.measured_for),
            pct1(o.fpr),
            pct1(o.tpr),
        ]);
    }
    for a in &report.ncr_at_alpha {
        rows.push(vec![
            format!("α={}", a.alpha),
            format!("{:.6}", a.alpha),
            "-".into(),
            "-".into(),
            pct1(a.measured_for),
            pct1(a.fpr),
            pct1(a.tpr.mean),
        ]);
    }
    if !rows.is_empty() {
        out.push('\n');
        out.push_str(&render_rows(&detail_header, &rows));
    }
    writeln!(
        out,
        "\n{} episodes, metric {}, master seed {}, dataset {}",
        report.protocol.episodes,
        report.protocol.metric,
        report.protocol.master_seed,
        &report.protocol.dataset_fingerprint[..16.min(report.protocol.dataset_fingerprint.len())]
    )
    .unwrap();
    out
}

pub fn render_calibration(bcr: f64, results: &[CalibrationResult]) -> String {
    let header: Vec<String> = ["budget", "alpha_star", "achieved_for", "BCR"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                format!("{}%", pct(r.budget)),
                format!("{:.6}", r.alpha_star),
                format!("{}%", pct1(r.achieved_for)),
                format!("{}%", pct1(bcr)),
            ]
        })
        .collect();
    render_rows(&header, &rows)
}

pub fn write_per_episode_csv(report: &EvalReport, mut out: impl Write) -> std::io::Result<()> {
    let mut header = String::from("episode,seed,classes,n_queries,v_ncr");
    for b in &report.ncr_at_budget {
        write!(header, ",ncr@budget={0},tpr@budget={0}", b.budget).unwrap();
    }
    for a in &report.ncr_at_alpha {
        write!(header, ",ncr@alpha={0},tpr@alpha={0}", a.alpha).unwrap();
    }
    writeln!(out, "{header}")?;
    for row in &report.per_episode {
        let classes: Vec<String> = row.classes.iter().map(u32::to_string).collect();
        write!(out, "{},{},{},{},{}", row.episode, row.seed, classes.join(" "), row.n_queries, row.v_ncr)?;
        for (n, t) in row.ncr.iter().zip(&row.tpr) {
            write!(out, ",{n},{t}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `report.json` and `per_episode.csv` into `dir`.
pub fn write_report_files(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("report.json"), &serde_json::to_vec_pretty(report)?)?;
    let mut csv = Vec::new();
    write_per_episode_csv(report, &mut csv).map_err(|e| Error::io(dir.join("per_episode.csv"), e))?;
    write_file(&dir.join("per_episode.csv"), &csv)
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text)?;
    validate_report_json(&value)?;
    Ok(serde_json::from_value(value)?)
}

struct Checker;

impl Checker {
    fn err(path: &str, message: impl Into<String>) -> Error {
        Error::Schema {
            path: path.to_string(),
            message: message.into(),
        }
    }

    fn field<'v>(v: &'v Value, path: &str, key: &str) -> Result<&'v Value> {
        v.as_object()
            .ok_or_else(|| Self::err(path, "expected an object"))?
            .get(key)
            .ok_or_else(|| Self::err(path, format!("missing key {key:?}")))
    }

    fn num(v: &Value, path: &str, key: &str) -> Result<f64> {
        Self::field(v, path, key)?
            .as_f64()
            .ok_or_else(|| Self::err(&format!("{path}.{key}"), "expected a number"))
    }

    fn uint(v: &Value, path: &str, key: &str) -> Result<u64> {
        Self::field(v, path, key)?
            .as_u64()
            .ok_or_else(|| Self::err(&format!("{path}.{key}"), "expected a non-negative integer"))
    }

    fn rate(v: &Value, path: &str, key: &str) -> Result<f64> {
        let x = Self::num(v, path, key)?;
        if !(0.0..=1.0).contains(&x) {
            return Err(Self::err(&format!("{path}.{key}"), format!("rate {x} outside [0, 1]")));
        }
        Ok(x)
    }

    fn array<'v>(v: &'v Value, path: &str, key: &str) -> Result<&'v Vec<Value>> {
        Self::field(v, path, key)?
            .as_array()
            .ok_or_else(|| Self::err(&format!("{path}.{key}"), "expected an array"))
    }

    fn stat(v: &Value, path: &str, key: &str) -> Result<()> {
        let s = Self::field(v, path, key)?;
        let p = format!("{path}.{key}");
        let (mean, min, max) = (Self::rate(s, &p, "mean")?, Self::rate(s, &p, "min")?, Self::rate(s, &p, "max")?);
        let std = Self::num(s, &p, "std")?;
        if !(min <= mean && mean <= max) {
            return Err(Self::err(&p, format!("mean {mean} outside [{min}, {max}]")));
        }
        if std < 0.0 {
            return Err(Self::err(&p, "negative std"));
        }
        Ok(())
    }
}

/// Structural and range checks for a parsed `report.json`.
pub fn validate_report_json(v: &Value) -> Result<()> {
    type C = Checker;
    let root = "$";
    C::rate(v, root, "bcr")?;
    C::stat(v, root, "v_ncr")?;

    let protocol = C::field(v, root, "protocol")?;
    let pp = "$.protocol";
    for key in ["n_novel", "shots", "episodes", "master_seed", "n_base_classes", "n_novel_pool_classes", "n_calibration_samples", "n_report_samples"] {
        C::uint(protocol, pp, key)?;
    }
    let metric = C::field(protocol, pp, "metric")?;
    if !matches!(metric.as_str(), Some("cosine" | "euclidean")) {
        return Err(C::err(&format!("{pp}.metric"), "expected \"cosine\" or \"euclidean\""));
    }
    if !C::field(protocol, pp, "dataset_fingerprint")?.is_string() {
        return Err(C::err(&format!("{pp}.dataset_fingerprint"), "expected a string"));
    }
    C::field(protocol, pp, "query_per_class")?;
    C::field(protocol, pp, "calibration_holdout")?;
    let budgets = C::array(protocol, pp, "budgets")?;
    let alphas = C::array(protocol, pp, "alphas")?;
    let episodes = C::uint(protocol, pp, "episodes")? as usize;

    let nb = C::array(v, root, "ncr_at_budget")?;
    if nb.len() != budgets.len() {
        return Err(C::err("$.ncr_at_budget", "length differs from protocol.budgets"));
    }
    for (i, b) in nb.iter().enumerate() {
        let p = format!("$.ncr_at_budget[{i}]");
        let budget = C::rate(b, &p, "budget")?;
        let achieved = C::rate(b, &p, "achieved_for")?;
        C::rate(b, &p, "measured_for")?;
        C::num(b, &p, "alpha_star")?;
        C::stat(b, &p, "ncr")?;
        if achieved > budget {
            return Err(C::err(&p, format!("achieved_for {achieved} exceeds budget {budget}")));
        }
    }
    let ood = C::array(v, root, "ood")?;
    if ood.len() != budgets.len() {
        return Err(C::err("$.ood", "length differs from protocol.budgets"));
    }
    for (i, o) in ood.iter().enumerate() {
        let p = format!("$.ood[{i}]");
        C::rate(o, &p, "budget")?;
        C::num(o, &p, "alpha")?;
        C::rate(o, &p, "fpr")?;
        C::rate(o, &p, "tpr")?;
    }
    let na = C::array(v, root, "ncr_at_alpha")?;
    if na.len() != alphas.len() {
        return Err(C::err("$.ncr_at_alpha", "length differs from protocol.alphas"));
    }
    for (i, a) in na.iter().enumerate() {
        let p = format!("$.ncr_at_alpha[{i}]");
        C::num(a, &p, "alpha")?;
        C::rate(a, &p, "measured_for")?;
        C::rate(a, &p, "fpr")?;
        C::stat(a, &p, "ncr")?;
        C::stat(a, &p, "tpr")?;
    }

    let rows = C::array(v, root, "per_episode")?;
    if rows.len() != episodes {
        return Err(C::err("$.per_episode", format!("{} rows for {episodes} episodes", rows.len())));
    }
    let points = budgets.len() + alphas.len();
    for (i, r) in rows.iter().enumerate() {
        let p = format!("$.per_episode[{i}]");
        if C::uint(r, &p, "episode")? as usize != i {
            return Err(C::err(&p, "episodes out of order"));
        }
        C::uint(r, &p, "seed")?;
        C::uint(r, &p, "n_queries")?;
        C::rate(r, &p, "v_ncr")?;
        C::array(r, &p, "classes")?;
        C::array(r, &p, "support")?;
        for key in ["ncr", "tpr"] {
            let xs = C::array(r, &p, key)?;
            if xs.len() != points {
                return Err(C::err(&format!("{p}.{key}"), format!("expected {points} entries")));
            }
            if xs.iter().any(|x| !x.as_f64().is_some_and(|x| (0.0..=1.0).contains(&x))) {
                return Err(C::err(&format!("{p}.{key}"), "entries must be rates in [0, 1]"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(budget_label(0.02), "NCR@2FOR");
        assert_eq!(budget_label(0.05), "NCR@5FOR");
        assert_eq!(budget_label(0.005), "NCR@0.5FOR");
    }

    #[test]
    fn table_alignment() {
        let t = render_rows(&["a".into(), "bbb".into()], &[vec!["10".into(), "2".into()]]);
        assert_eq!(t, "|  a | bbb |\n|----|-----|\n| 10 |   2 |\n");
    }
}
