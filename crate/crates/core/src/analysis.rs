//! Report shapes built on top of the metrics: per-trace redundancy with
//! corpus averages, filter summaries, and multi-model comparisons with
//! length-bucketed quality curves.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{length_buckets, redundancy, MetricsError};
use crate::model::{EvalReport, QueryFilterStats, TrajectorySample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("no reports to compare")]
    NoReports,
    #[error("model tag `{0}` appears in more than one report")]
    DuplicateTag(String),
    #[error("reports cover different queries: {0}")]
    QueryMismatch(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRedundancy {
    pub query_id: String,
    pub sample_index: u32,
    pub seq_len: usize,
    pub t_star: usize,
    pub trr: f64,
    pub mor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub model_tag: String,
    /// How two stated rankings are compared.
    pub ranking_equality: String,
    /// What happens to traces that state no ranking at all.
    pub empty_sequences: String,
    pub n_samples: usize,
    pub n_measured: usize,
    pub avg_trr: f64,
    pub avg_mor: f64,
    pub per_sample: Vec<SampleRedundancy>,
}

/// TRR and MOR for every sample, averaged over samples that state at least
/// one ranking.
pub fn analyze_redundancy(model_tag: &str, samples: &[TrajectorySample]) -> RedundancyReport {
    let mut per_sample: Vec<SampleRedundancy> = samples
        .iter()
        .map(|s| {
            let m = redundancy(&s.ranking_sequence);
            SampleRedundancy {
                query_id: s.query_id.clone(),
                sample_index: s.sample_index,
                seq_len: m.seq_len,
                t_star: m.t_star,
                trr: m.trr,
                mor: m.mor,
            }
        })
        .collect();
    per_sample.sort_by(|a, b| {
        a.query_id
            .cmp(&b.query_id)
            .then(a.sample_index.cmp(&b.sample_index))
    });
    let measured: Vec<&SampleRedundancy> = per_sample.iter().filter(|s| s.seq_len > 0).collect();
    let n = measured.len();
    let avg = |f: fn(&SampleRedundancy) -> f64| {
        if n == 0 {
            0.0
        } else {
            measured.iter().map(|s| f(s)).sum::<f64>() / n as f64
        }
    };
    RedundancyReport {
        model_tag: model_tag.to_string(),
        ranking_equality: "tie_aware".into(),
        empty_sequences: "excluded_from_averages".into(),
        n_samples: samples.len(),
        n_measured: n,
        avg_trr: avg(|s| s.trr),
        avg_mor: avg(|s| s.mor),
        per_sample,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub n_queries: usize,
    pub n_retained: usize,
    pub retention_rate: f64,
    pub stats: Vec<QueryFilterStats>,
}

impl FilterReport {
    pub fn new(stats: Vec<QueryFilterStats>) -> Self {
        let n_retained = stats.iter().filter(|s| s.retained).count();
        let retention_rate = if stats.is_empty() {
            0.0
        } else {
            n_retained as f64 / stats.len() as f64
        };
        Self {
            n_queries: stats.len(),
            n_retained,
            retention_rate,
            stats,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model_tag: String,
    pub n_queries: usize,
    pub mean_ndcg10: f64,
    pub mean_len: f64,
    /// `1 - len / len_of_first_row`; absent for the first row.
    pub len_reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub model_tag: String,
    pub len_lo: f64,
    pub len_hi: f64,
    pub mean_ndcg10: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub curve: Vec<CurvePoint>,
}

/// Side-by-side summary of evaluation reports over the same query set. The
/// first report is the baseline for length reduction.
pub fn compare_reports(
    reports: &[EvalReport],
    bucket_count: usize,
) -> Result<ComparisonTable, AnalysisError> {
    let first = reports.first().ok_or(AnalysisError::NoReports)?;
    let mut tags = BTreeSet::new();
    for r in reports {
        if !tags.insert(r.model_tag.as_str()) {
            return Err(AnalysisError::DuplicateTag(r.model_tag.clone()));
        }
    }
    let base: BTreeSet<&str> = first.per_query.keys().map(String::as_str).collect();
    let mut problems = Vec::new();
    for r in &reports[1..] {
        let other: BTreeSet<&str> = r.per_query.keys().map(String::as_str).collect();
        let missing: Vec<&str> = base.difference(&other).copied().collect();
        let extra: Vec<&str> = other.difference(&base).copied().collect();
        if !missing.is_empty() {
            problems.push(format!(
                "`{}` lacks [{}] present in `{}`",
                r.model_tag,
                missing.join(", "),
                first.model_tag
            ));
        }
        if !extra.is_empty() {
            problems.push(format!(
                "`{}` has [{}] absent from `{}`",
                r.model_tag,
                extra.join(", "),
                first.model_tag
            ));
        }
    }
    if !problems.is_empty() {
        return Err(AnalysisError::QueryMismatch(problems.join("; ")));
    }

    let mut rows = Vec::new();
    let mut curve = Vec::new();
    for r in reports {
        rows.push(ComparisonRow {
            model_tag: r.model_tag.clone(),
            n_queries: r.per_query.len(),
            mean_ndcg10: r.mean_ndcg10,
            mean_len: r.mean_len,
            len_reduction: (r.model_tag != first.model_tag && first.mean_len > 0.0)
                .then(|| 1.0 - r.mean_len / first.mean_len),
        });
        let points: Vec<(f64, f64)> = r.per_query.values().map(|q| (q.gen_len, q.ndcg10)).collect();
        for b in length_buckets(&points, bucket_count)? {
            curve.push(CurvePoint {
                model_tag: r.model_tag.clone(),
                len_lo: b.lo,
                len_hi: b.hi,
                mean_ndcg10: b.mean_ndcg10,
                count: b.count,
            });
        }
    }
    Ok(ComparisonTable { rows, curve })
}
