//! Bicriteria filtering of sampled trajectories and corpus assembly.
//!
//! Per query: keep valid samples with a positive score, compute the mean
//! score and mean length over them, keep the samples scoring at least the
//! mean while being strictly shorter than the mean, and take the shortest of
//! those as the distillation target. Queries with no such sample are dropped.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{
    CandidateSet, DistillationRecord, Qrels, Query, QueryFilterStats, Ranking, TrajectorySample,
};
use crate::parser::{parse_trace, ParserConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DistillError {
    #[error("sample {query_id}#{sample_index} is valid but has not been scored")]
    Unscored { query_id: String, sample_index: u32 },
    #[error("cannot compute statistics over an empty sample set")]
    EmptyValidSet,
    #[error("sample {query_id}#{sample_index} is filed under query `{expected}`")]
    WrongQuery {
        query_id: String,
        sample_index: u32,
        expected: String,
    },
}

/// Scores each valid sample's final ranking with `metric`. Invalid samples
/// keep `score = None`.
pub fn score_samples<M>(samples: &mut [TrajectorySample], qrels: &Qrels, metric: M)
where
    M: Fn(&Ranking, &Qrels, &str) -> f64,
{
    for s in samples.iter_mut() {
        s.score = match (&s.final_ranking, s.valid) {
            (Some(r), true) => Some(metric(r, qrels, &s.query_id).clamp(0.0, 1.0)),
            _ => None,
        };
    }
}

/// Re-derives the parse of a stored sample from its raw text, keeping its
/// token length and any transport error.
pub fn reparse_sample(sample: &mut TrajectorySample, parser: &ParserConfig) {
    let Ok(universe) = CandidateSet::from_ids(sample.query_id.clone(), sample.candidate_ids.iter().cloned()) else {
        sample.valid = false;
        sample.error.get_or_insert_with(|| "sample has no usable candidate list".into());
        return;
    };
    let trace = parse_trace(&sample.raw_text, &universe, parser);
    sample.reasoning_text = trace.reasoning;
    sample.split_mode = trace.split_mode;
    sample.coverage = trace.final_ranking.as_ref().map(|f| f.coverage);
    sample.final_ranking = trace.final_ranking.map(|f| f.ranking);
    sample.ranking_sequence = trace.ranking_sequence;
    if sample.error.as_deref() == Some("no parseable ranking") && sample.final_ranking.is_some() {
        sample.error = None;
    }
    if sample.final_ranking.is_none() && sample.error.is_none() {
        sample.error = Some("no parseable ranking".into());
    }
    sample.valid = sample.error.is_none() && sample.final_ranking.is_some();
}

/// Samples that parsed and scored above zero, in input order.
pub fn valid_subset(samples: &[TrajectorySample]) -> Result<Vec<&TrajectorySample>, DistillError> {
    let mut out = Vec::new();
    for s in samples {
        if !s.valid {
            continue;
        }
        let score = s.score.ok_or_else(|| DistillError::Unscored {
            query_id: s.query_id.clone(),
            sample_index: s.sample_index,
        })?;
        if score > 0.0 {
            out.push(s);
        }
    }
    Ok(out)
}

/// Mean score and mean token length. Callers must have checked that every
/// sample is scored (as [`valid_subset`] does).
pub fn query_stats(valid: &[&TrajectorySample]) -> Result<(f64, f64), DistillError> {
    if valid.is_empty() {
        return Err(DistillError::EmptyValidSet);
    }
    let n = valid.len() as f64;
    let mean_score = valid.iter().map(|s| s.score.unwrap_or(0.0)).sum::<f64>() / n;
    let mean_len = valid.iter().map(|s| s.token_len.count as f64).sum::<f64>() / n;
    Ok((mean_score, mean_len))
}

/// Samples with `score >= mean_score` and `token_len < mean_len`.
pub fn efficient_set<'a>(
    valid: &[&'a TrajectorySample],
    mean_score: f64,
    mean_len: f64,
) -> Vec<&'a TrajectorySample> {
    valid
        .iter()
        .copied()
        .filter(|s| s.score.unwrap_or(0.0) >= mean_score && (s.token_len.count as f64) < mean_len)
        .collect()
}

/// Shortest member; ties go to the higher score, then the lower index.
pub fn select_target<'a>(efficient: &[&'a TrajectorySample]) -> Option<&'a TrajectorySample> {
    efficient.iter().copied().min_by(|a, b| {
        a.token_len
            .count
            .cmp(&b.token_len.count)
            .then_with(|| b.score.unwrap_or(0.0).total_cmp(&a.score.unwrap_or(0.0)))
            .then_with(|| a.sample_index.cmp(&b.sample_index))
    })
}

/// Filter outcome for one query's samples.
pub fn filter_query(
    query_id: &str,
    samples: &[TrajectorySample],
) -> Result<(QueryFilterStats, Option<TrajectorySample>), DistillError> {
    if let Some(s) = samples.iter().find(|s| s.query_id != query_id) {
        return Err(DistillError::WrongQuery {
            query_id: s.query_id.clone(),
            sample_index: s.sample_index,
            expected: query_id.to_string(),
        });
    }
    let valid = valid_subset(samples)?;
    let (means, efficient) = if valid.is_empty() {
        (None, Vec::new())
    } else {
        let (ms, ml) = query_stats(&valid)?;
        (Some((ms, ml)), efficient_set(&valid, ms, ml))
    };
    let target = select_target(&efficient).cloned();
    let stats = QueryFilterStats {
        query_id: query_id.to_string(),
        n_sampled: samples.len(),
        n_valid: valid.len(),
        mean_score: means.map(|m| m.0),
        mean_len: means.map(|m| m.1),
        efficient_indices: efficient.iter().map(|s| s.sample_index).collect(),
        target_index: target.as_ref().map(|t| t.sample_index),
        retained: target.is_some(),
    };
    Ok((stats, target))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusBuild {
    pub corpus: Vec<DistillationRecord>,
    pub stats: Vec<QueryFilterStats>,
    pub retention_rate: f64,
}

/// Runs the filter for every query. Output is ordered by query id.
pub fn build_corpus(
    per_query: &BTreeMap<String, (Query, CandidateSet, Vec<TrajectorySample>)>,
) -> Result<CorpusBuild, DistillError> {
    let mut corpus = Vec::new();
    let mut stats = Vec::with_capacity(per_query.len());
    for (query_id, (query, candidates, samples)) in per_query {
        let (row, target) = filter_query(query_id, samples)?;
        if let Some(t) = target {
            corpus.push(DistillationRecord {
                query: query.clone(),
                candidates: candidates.clone(),
                target_score: t.score.unwrap_or(0.0),
                target_len: t.token_len.count,
                sample_index: t.sample_index,
                prompt_hash: t.prompt_hash,
                target_text: t.raw_text,
            });
        }
        stats.push(row);
    }
    let retention_rate = if stats.is_empty() {
        0.0
    } else {
        corpus.len() as f64 / stats.len() as f64
    };
    Ok(CorpusBuild {
        corpus,
        stats,
        retention_rate,
    })
}
