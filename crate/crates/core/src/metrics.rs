//! Ranking quality, redundancy diagnostics, and the length-normalized
//! sequence loss.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use thiserror::Error;

use crate::model::{EvalReport, LengthBucket, QueryEval, Qrels, Ranking, RedundancyMetrics};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("log-probability {value} at sequence {seq}, token {token} is positive")]
    PositiveLogprob {
        seq: usize,
        token: usize,
        value: f64,
    },
    #[error("sequence {0} is empty")]
    EmptySequence(usize),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("run is empty")]
    EmptyRun,
    #[error("bucket count must be at least 1")]
    ZeroBuckets,
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

fn discount(rank: usize) -> f64 {
    (rank as f64 + 1.0).log2()
}

/// nDCG@k with exponential gain `2^grade - 1` and `log2(rank + 1)` discount.
///
/// Tie groups are flattened in order. The ideal DCG is taken over every
/// judgment the query has in `qrels` (unjudged docs are grade 0), and the
/// score is 0 when that ideal is 0.
pub fn ndcg_at_k(ranking: &Ranking, qrels: &Qrels, query_id: &str, k: usize) -> f64 {
    let dcg: f64 = ranking
        .flatten()
        .take(k)
        .enumerate()
        .map(|(i, doc)| gain(qrels.grade(query_id, doc)) / discount(i + 1))
        .sum();
    let mut ideal: Vec<u32> = qrels.query_judgments(query_id).map(|(_, g)| g).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) / discount(i + 1))
        .sum();
    if idcg > 0.0 {
        dcg / idcg
    } else {
        0.0
    }
}

pub fn ndcg10(ranking: &Ranking, qrels: &Qrels, query_id: &str) -> f64 {
    ndcg_at_k(ranking, qrels, query_id, 10)
}

/// 1-based index of the last ranking in `seq` that has no equal predecessor,
/// or 0 for an empty sequence.
pub fn last_novel_index(seq: &[Ranking]) -> usize {
    let mut seen = std::collections::HashSet::new();
    let mut t_star = 0;
    for (i, r) in seq.iter().enumerate() {
        if seen.insert(r) {
            t_star = i + 1;
        }
    }
    t_star
}

/// Share of the sequence stated after the last novel ranking.
pub fn tail_repeat_ratio(seq: &[Ranking]) -> f64 {
    let t = seq.len();
    if t <= 1 {
        return 0.0;
    }
    (t - last_novel_index(seq)) as f64 / t as f64
}

/// Share of distinct rankings that are stated more than once.
pub fn multi_occurrence_ratio(seq: &[Ranking]) -> f64 {
    let mut counts: HashMap<&Ranking, usize> = HashMap::new();
    for r in seq {
        *counts.entry(r).or_default() += 1;
    }
    if counts.is_empty() {
        return 0.0;
    }
    let repeated = counts.values().filter(|&&c| c >= 2).count();
    repeated as f64 / counts.len() as f64
}

pub fn redundancy(seq: &[Ranking]) -> RedundancyMetrics {
    RedundancyMetrics {
        seq_len: seq.len(),
        t_star: last_novel_index(seq),
        trr: tail_repeat_ratio(seq),
        mor: multi_occurrence_ratio(seq),
    }
}

/// Mean over sequences of the per-token mean negative log-likelihood.
pub fn length_normalized_nll(batch: &[Vec<f64>]) -> Result<f64, MetricsError> {
    if batch.is_empty() {
        return Err(MetricsError::EmptyBatch);
    }
    let mut total = 0.0;
    for (s, seq) in batch.iter().enumerate() {
        if seq.is_empty() {
            return Err(MetricsError::EmptySequence(s));
        }
        if let Some((t, &value)) = seq.iter().enumerate().find(|(_, &lp)| lp > 0.0) {
            return Err(MetricsError::PositiveLogprob {
                seq: s,
                token: t,
                value,
            });
        }
        total += seq.iter().sum::<f64>() / seq.len() as f64;
    }
    Ok(-total / batch.len() as f64)
}

/// One scored generation for the report.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub query_id: String,
    /// `None` when the generation had no parseable ranking; scores 0.
    pub ranking: Option<Ranking>,
    pub gen_len: u64,
}

/// Equal-width buckets over `[min, max]` of the observed lengths.
pub fn length_buckets(
    points: &[(f64, f64)],
    bucket_count: usize,
) -> Result<Vec<LengthBucket>, MetricsError> {
    if bucket_count == 0 {
        return Err(MetricsError::ZeroBuckets);
    }
    if points.is_empty() {
        return Err(MetricsError::EmptyRun);
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        let mean = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
        return Ok(vec![LengthBucket {
            lo,
            hi,
            mean_ndcg10: Some(mean),
            count: points.len(),
        }]);
    }
    let width = (hi - lo) / bucket_count as f64;
    let mut sums = vec![(0.0, 0usize); bucket_count];
    for &(len, score) in points {
        let idx = (((len - lo) / width) as usize).min(bucket_count - 1);
        sums[idx].0 += score;
        sums[idx].1 += 1;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, (sum, count))| LengthBucket {
            lo: lo + width * i as f64,
            hi: if i + 1 == bucket_count {
                hi
            } else {
                lo + width * (i + 1) as f64
            },
            mean_ndcg10: (count > 0).then(|| sum / count as f64),
            count,
        })
        .collect())
}

/// Per-query nDCG@10 and generation length, their means, and the
/// length-bucketed quality curve. Queries with several records are averaged.
pub fn aggregate_report(
    model_tag: &str,
    run: &[RunRecord],
    qrels: &Qrels,
    bucket_count: usize,
) -> Result<EvalReport, MetricsError> {
    if run.is_empty() {
        return Err(MetricsError::EmptyRun);
    }
    let mut acc: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for rec in run {
        let score = rec
            .ranking
            .as_ref()
            .map_or(0.0, |r| ndcg10(r, qrels, &rec.query_id));
        let e = acc.entry(rec.query_id.as_str()).or_default();
        e.0 += score;
        e.1 += rec.gen_len as f64;
        e.2 += 1;
    }
    for qid in acc.keys() {
        if !qrels.has_query(qid) {
            warn!("query `{qid}` has no relevance judgments; it scores 0");
        }
    }
    let per_query: BTreeMap<String, QueryEval> = acc
        .into_iter()
        .map(|(qid, (s, l, n))| {
            (
                qid.to_string(),
                QueryEval {
                    ndcg10: s / n as f64,
                    gen_len: l / n as f64,
                    n_samples: n,
                },
            )
        })
        .collect();
    let n = per_query.len() as f64;
    let points: Vec<(f64, f64)> = per_query.values().map(|q| (q.gen_len, q.ndcg10)).collect();
    Ok(EvalReport {
        model_tag: model_tag.to_string(),
        mean_ndcg10: points.iter().map(|p| p.1).sum::<f64>() / n,
        mean_len: points.iter().map(|p| p.0).sum::<f64>() / n,
        length_buckets: length_buckets(&points, bucket_count)?,
        per_query,
    })
}
