//! Report writers. JSON output is canonical: sorted keys, two-space indent,
//! floats with six decimals. CSV layouts per report kind:
//!
//! - eval: `query_id,ndcg10,gen_len,n_samples`
//! - redundancy: `model_tag,avg_trr,avg_mor`
//! - filter: `query_id,n_sampled,n_valid,mean_score,mean_len,efficient_indices,target_index,retained`
//! - comparison: `model_tag,n_queries,ndcg10,len,len_reduction`
//! - curve: `model_tag,len_lo,len_hi,mean_ndcg10,count`

use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

use super::{label, read_file, write_file, PersistError};
use crate::analysis::{ComparisonTable, FilterReport, RedundancyReport};
use crate::model::EvalReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = PersistError;
    fn from_str(s: &str) -> Result<Self, PersistError> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(PersistError::Invalid(format!(
                "unknown report format `{other}` (expected json or csv)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    Eval(&'a EvalReport),
    Redundancy(&'a RedundancyReport),
    Filter(&'a FilterReport),
    /// One summary row per model.
    Comparison(&'a ComparisonTable),
    /// Length-bucket curve points of a comparison.
    Curve(&'a ComparisonTable),
}

fn write_canonical(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let f = n.as_f64().expect("f64 number");
                let s = format!("{f:.6}");
                // avoid "-0.000000"
                out.push_str(if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
                    "0.000000"
                } else {
                    &s
                });
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_canonical(item, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_canonical(&map[*k], indent + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

pub fn canonical_json<T: Serialize>(value: &T) -> Result<String, PersistError> {
    let v = serde_json::to_value(value).map_err(|e| PersistError::Invalid(e.to_string()))?;
    let mut out = String::new();
    write_canonical(&v, 0, &mut out);
    out.push('\n');
    Ok(out)
}

fn csv_text(rows: Vec<Vec<String>>) -> Result<String, PersistError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).map_err(|e| PersistError::Invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| PersistError::Invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn opt6(x: Option<f64>) -> String {
    x.map(f6).unwrap_or_default()
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

pub fn render_report(report: Report<'_>, format: ReportFormat) -> Result<String, PersistError> {
    if let Report::Eval(r) = report {
        r.validate().map_err(|e| PersistError::Invalid(e.to_string()))?;
    }
    if format == ReportFormat::Json {
        return match report {
            Report::Eval(r) => canonical_json(r),
            Report::Redundancy(r) => canonical_json(r),
            Report::Filter(r) => canonical_json(r),
            Report::Comparison(t) | Report::Curve(t) => canonical_json(t),
        };
    }
    let rows = match report {
        Report::Eval(r) => {
            let mut rows = vec![header(&["query_id", "ndcg10", "gen_len", "n_samples"])];
            for (q, e) in &r.per_query {
                rows.push(vec![q.clone(), f6(e.ndcg10), f6(e.gen_len), e.n_samples.to_string()]);
            }
            rows
        }
        Report::Redundancy(r) => vec![
            header(&["model_tag", "avg_trr", "avg_mor"]),
            vec![r.model_tag.clone(), f6(r.avg_trr), f6(r.avg_mor)],
        ],
        Report::Filter(r) => {
            let mut rows = vec![header(&[
                "query_id",
                "n_sampled",
                "n_valid",
                "mean_score",
                "mean_len",
                "efficient_indices",
                "target_index",
                "retained",
            ])];
            for s in &r.stats {
                rows.push(vec![
                    s.query_id.clone(),
                    s.n_sampled.to_string(),
                    s.n_valid.to_string(),
                    opt6(s.mean_score),
                    opt6(s.mean_len),
                    s.efficient_indices
                        .iter()
                        .map(u32::to_string)
                        .collect::<Vec<_>>()
                        .join(";"),
                    s.target_index.map(|i| i.to_string()).unwrap_or_default(),
                    s.retained.to_string(),
                ]);
            }
            rows
        }
        Report::Comparison(t) => {
            let mut rows = vec![header(&["model_tag", "n_queries", "ndcg10", "len", "len_reduction"])];
            for r in &t.rows {
                rows.push(vec![
                    r.model_tag.clone(),
                    r.n_queries.to_string(),
                    f6(r.mean_ndcg10),
                    f6(r.mean_len),
                    opt6(r.len_reduction),
                ]);
            }
            rows
        }
        Report::Curve(t) => {
            let mut rows = vec![header(&["model_tag", "len_lo", "len_hi", "mean_ndcg10", "count"])];
            for p in &t.curve {
                rows.push(vec![
                    p.model_tag.clone(),
                    f6(p.len_lo),
                    f6(p.len_hi),
                    opt6(p.mean_ndcg10),
                    p.count.to_string(),
                ]);
            }
            rows
        }
    };
    csv_text(rows)
}

pub fn write_report(report: Report<'_>, path: &Path, format: ReportFormat) -> Result<(), PersistError> {
    write_file(path, &render_report(report, format)?)
}

pub fn read_eval_report(path: &Path) -> Result<EvalReport, PersistError> {
    let text = read_file(path)?;
    let report: EvalReport = serde_json::from_str(&text).map_err(|e| PersistError::Line {
        path: label(path),
        line: e.line(),
        message: e.to_string(),
    })?;
    report.validate().map_err(|e| PersistError::Invalid(format!("{}: {e}", label(path))))?;
    Ok(report)
}
