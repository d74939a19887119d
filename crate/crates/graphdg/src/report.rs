//! Evaluation outputs: per-comparison TSV, summary JSON and text, and
//! histogram data for the marginals.
//!
//! File layout under the output directory:
//!
//! * `rows.tsv`: one line per (graph, comparison, method); `mmd2` is empty
//!   when the method has no samples for the graph.
//! * `summary.json`: aggregated statistics per comparison kind and method.
//! * `summary.txt`: the same numbers as a table.
//! * `histograms.tsv`: binned marginal distances of truth and each method.

use std::fmt::Write as _;
use std::path::Path;

use graphdg_core::evalmmd::{ComparisonKind, GraphEval, MmdReport};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub comparison: String,
    pub method: String,
    pub median: f64,
    pub mean: f64,
    pub std_over_items: f64,
    pub std_over_graphs: f64,
    pub std_over_splits: f64,
    pub mean_ranking: f64,
    pub median_ranking: f64,
    pub n_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub methods: Vec<String>,
    pub absent: usize,
    pub entries: Vec<SummaryEntry>,
}

pub fn summary_doc(report: &MmdReport) -> SummaryDoc {
    let mut entries = Vec::new();
    for kind in ComparisonKind::ALL {
        for (m, name) in report.methods.iter().enumerate() {
            if let Some(s) = report.summary(kind, m) {
                entries.push(SummaryEntry {
                    comparison: kind.name().into(),
                    method: name.clone(),
                    median: s.median,
                    mean: s.mean,
                    std_over_items: s.std_over_items,
                    std_over_graphs: s.std_over_graphs,
                    std_over_splits: s.std_over_splits,
                    mean_ranking: s.mean_ranking,
                    median_ranking: s.median_ranking,
                    n_items: s.n_items,
                });
            }
        }
    }
    SummaryDoc { methods: report.methods.clone(), absent: report.absent, entries }
}

pub fn rows_tsv(report: &MmdReport) -> String {
    let mut out = String::from("graph\tsplit\tcomparison\tedges\tmethod\tmmd2\tbandwidth\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &report.rows {
        let edges: Vec<String> = r.comparison.edges.iter().map(ToString::to_string).collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.graph,
            r.split,
            r.comparison.kind.name(),
            edges.join("+"),
            report.methods[r.method],
            opt(r.mmd2),
            opt(r.bandwidth)
        );
    }
    out
}

/// Formats a statistic the way `summary.txt` prints it.
pub fn fmt_stat(v: f64) -> String {
    format!("{v:.4e}")
}

pub fn summary_text(doc: &SummaryDoc) -> String {
    let mut out = String::new();
    let width = doc.methods.iter().map(String::len).max().unwrap_or(6).max(6);
    for kind in ComparisonKind::ALL {
        let entries: Vec<&SummaryEntry> = doc.entries.iter().filter(|e| e.comparison == kind.name()).collect();
        if entries.is_empty() {
            continue;
        }
        let _ = writeln!(out, "{} MMD^2", kind.name());
        let _ = writeln!(
            out,
            "  {:<width$}  {:>11}  {:>11}  {:>11}  {:>11}  {:>11}  {:>8}  {:>8}  {:>6}",
            "method", "median", "mean", "sd(items)", "sd(graphs)", "sd(splits)", "rank", "med.rank", "n"
        );
        for e in entries {
            let _ = writeln!(
                out,
                "  {:<width$}  {:>11}  {:>11}  {:>11}  {:>11}  {:>11}  {:>8.3}  {:>8.3}  {:>6}",
                e.method,
                fmt_stat(e.median),
                fmt_stat(e.mean),
                fmt_stat(e.std_over_items),
                fmt_stat(e.std_over_graphs),
                fmt_stat(e.std_over_splits),
                e.mean_ranking,
                e.median_ranking,
                e.n_items
            );
        }
        out.push('\n');
    }
    let _ = writeln!(out, "comparisons without samples: {}", doc.absent);
    out
}

/// Histogram of every compared marginal over a shared range per edge.
pub fn histograms_tsv(evals: &[GraphEval], methods: &[String], bins: usize) -> String {
    let mut out = String::from("graph\tedge\tsource\tbin_low\tbin_high\tcount\n");
    for g in evals {
        for &k in &g.edges {
            let mut sources: Vec<(&str, Vec<f64>)> = vec![("truth", g.truth.iter().map(|r| r[k]).collect())];
            for (m, rows) in g.methods.iter().enumerate() {
                if let Some(rows) = rows {
                    sources.push((&methods[m], rows.iter().map(|r| r[k]).collect()));
                }
            }
            let lo = sources.iter().flat_map(|(_, v)| v.iter().copied()).fold(f64::INFINITY, f64::min);
            let hi = sources.iter().flat_map(|(_, v)| v.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
            let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
            for (name, values) in &sources {
                let mut counts = vec![0usize; bins];
                for v in values {
                    let b = (((v - lo) / width) as usize).min(bins - 1);
                    counts[b] += 1;
                }
                for (b, c) in counts.iter().enumerate() {
                    let a = lo + b as f64 * width;
                    let _ = writeln!(out, "{}\t{k}\t{name}\t{a}\t{}\t{c}", g.graph, a + width);
                }
            }
        }
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes all evaluation outputs into `dir`, creating it if needed.
pub fn write_evaluation(dir: &Path, report: &MmdReport, evals: &[GraphEval]) -> Result<SummaryDoc> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let doc = summary_doc(report);
    write(&dir.join("rows.tsv"), &rows_tsv(report))?;
    write(&dir.join("summary.json"), &serde_json::to_string_pretty(&doc).expect("summary serializes"))?;
    write(&dir.join("summary.txt"), &summary_text(&doc))?;
    write(&dir.join("histograms.tsv"), &histograms_tsv(evals, &report.methods, 30))?;
    Ok(doc)
}
