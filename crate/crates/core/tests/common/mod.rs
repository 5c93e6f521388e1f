//! Independent reference implementations used as test oracles. They work on
//! plain data and share no code with the library.

#![allow(dead_code)]

use std::collections::HashMap;

/// DCG@k straight from the definition.
pub fn dcg(grades_in_rank_order: &[u32], k: usize) -> f64 {
    let mut total = 0.0;
    for (i, &g) in grades_in_rank_order.iter().enumerate() {
        if i >= k {
            break;
        }
        let rank = (i + 1) as f64;
        total += (2f64.powf(g as f64) - 1.0) / ((rank + 1.0).ln() / 2f64.ln());
    }
    total
}

fn permutations(items: &[u32]) -> Vec<Vec<u32>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Ideal DCG@k over all judged grades. Exhaustive over orderings for small
/// judgment sets, sorted otherwise (the two agree by the rearrangement
/// inequality, which the small case checks).
pub fn idcg(judged: &[u32], k: usize) -> f64 {
    if judged.len() <= 6 {
        permutations(judged)
            .iter()
            .map(|p| dcg(p, k))
            .fold(0.0, f64::max)
    } else {
        let mut sorted = judged.to_vec();
        sorted.sort_by(|a, b| b.cmp(a));
        dcg(&sorted, k)
    }
}

/// nDCG@k for a ranked list of doc ids against a grade map (unjudged = 0).
pub fn ndcg(ranked: &[String], grades: &HashMap<String, u32>, k: usize) -> f64 {
    let gains: Vec<u32> = ranked
        .iter()
        .map(|d| grades.get(d).copied().unwrap_or(0))
        .collect();
    let judged: Vec<u32> = grades.values().copied().collect();
    let ideal = idcg(&judged, k);
    if ideal == 0.0 {
        0.0
    } else {
        dcg(&gains, k) / ideal
    }
}

/// Tail repeat ratio by enumeration: a position is novel if no earlier
/// position holds an equal element.
pub fn trr<T: PartialEq>(seq: &[T]) -> f64 {
    let t = seq.len();
    if t <= 1 {
        return 0.0;
    }
    let mut last_novel = 0;
    for i in 0..t {
        if !(0..i).any(|j| seq[j] == seq[i]) {
            last_novel = i + 1;
        }
    }
    (t - last_novel) as f64 / t as f64
}

/// Multi-occurrence ratio by enumeration.
pub fn mor<T: PartialEq>(seq: &[T]) -> f64 {
    let mut distinct: Vec<&T> = Vec::new();
    for x in seq {
        if !distinct.contains(&x) {
            distinct.push(x);
        }
    }
    if distinct.is_empty() {
        return 0.0;
    }
    let repeated = distinct
        .iter()
        .filter(|d| seq.iter().filter(|x| x == *d).count() > 1)
        .count();
    repeated as f64 / distinct.len() as f64
}

/// A sample as the filter sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterPoint {
    pub index: u32,
    pub valid: bool,
    pub score: f64,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub means: Option<(f64, f64)>,
    pub efficient: Vec<u32>,
    pub target: Option<u32>,
}

/// Filter semantics checked exhaustively: means over valid samples with a
/// positive score, membership by both predicates, and the target as the
/// member no other member beats under (shorter, higher score, lower index).
pub fn filter(points: &[FilterPoint]) -> FilterOutcome {
    let kept: Vec<&FilterPoint> = points.iter().filter(|p| p.valid && p.score > 0.0).collect();
    if kept.is_empty() {
        return FilterOutcome {
            means: None,
            efficient: vec![],
            target: None,
        };
    }
    let n = kept.len() as f64;
    let ms = kept.iter().map(|p| p.score).sum::<f64>() / n;
    let ml = kept.iter().map(|p| p.len as f64).sum::<f64>() / n;
    let efficient: Vec<&FilterPoint> = kept
        .iter()
        .copied()
        .filter(|p| p.score >= ms && (p.len as f64) < ml)
        .collect();
    let beats = |a: &FilterPoint, b: &FilterPoint| {
        a.len < b.len
            || (a.len == b.len && a.score > b.score)
            || (a.len == b.len && a.score == b.score && a.index < b.index)
    };
    let target = efficient
        .iter()
        .find(|c| !efficient.iter().any(|o| beats(o, c)))
        .map(|c| c.index);
    FilterOutcome {
        means: Some((ms, ml)),
        efficient: efficient.iter().map(|p| p.index).collect(),
        target,
    }
}

/// Per-sequence mean negative log-likelihood, averaged over the batch.
pub fn nll(batch: &[Vec<f64>]) -> f64 {
    let per: Vec<f64> = batch
        .iter()
        .map(|s| -s.iter().sum::<f64>() / s.len() as f64)
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}
