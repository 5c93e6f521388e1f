//! Synthetic fixtures shared by the benchmarks in `benches/`.

use std::collections::BTreeMap;

use trimrank_core::{
    CandidateSet, FinishReason, Qrels, Query, Ranking, SplitMode, TokenLen, TokenProvenance, TrajectorySample,
};

pub fn doc_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("d{i}")).collect()
}

pub fn universe(n: usize) -> CandidateSet {
    CandidateSet::from_ids("q", doc_ids(n)).unwrap()
}

/// Judgments with grades cycling through 0..=3.
pub fn qrels(n: usize) -> Qrels {
    let mut q = Qrels::new();
    for (i, d) in doc_ids(n).into_iter().enumerate() {
        q.insert("q", d, (i % 4) as u32);
    }
    q
}

/// A reasoning trace that restates `restatements` rankings over `n` passages.
pub fn trace(n: usize, restatements: usize) -> String {
    let mut out = String::new();
    for r in 0..restatements {
        out.push_str("Passage relevance is reconsidered here. ");
        let order: Vec<String> = (0..n).map(|i| format!("[{}]", (i + r) % n + 1)).collect();
        out.push_str(&order.join(" > "));
        out.push_str(". ");
    }
    out
}

/// `queries` queries with `k` scored samples each over 20 candidates.
pub fn corpus_input(queries: usize, k: u32) -> BTreeMap<String, (Query, CandidateSet, Vec<TrajectorySample>)> {
    let ids = doc_ids(20);
    (0..queries)
        .map(|q| {
            let qid = format!("q{q:04}");
            let cands = CandidateSet::from_ids(&qid, ids.clone()).unwrap();
            let samples = (1..=k)
                .map(|i| TrajectorySample {
                    query_id: qid.clone(),
                    sample_index: i,
                    candidate_ids: ids.clone(),
                    prompt_hash: "bench".into(),
                    raw_text: String::new(),
                    reasoning_text: "short reasoning".into(),
                    split_mode: SplitMode::LastRanking,
                    final_ranking: Some(Ranking::strict(ids.clone()).unwrap()),
                    coverage: Some(1.0),
                    ranking_sequence: vec![],
                    token_len: TokenLen {
                        count: 100 + u64::from((i * 37) % 500),
                        provenance: TokenProvenance::Approximated,
                    },
                    score: Some(f64::from((i * 13) % 10) / 10.0),
                    valid: true,
                    finish_reason: FinishReason::Stop,
                    error: None,
                })
                .collect();
            (qid.clone(), (Query::new(qid.as_str(), "bench query").unwrap(), cands, samples))
        })
        .collect()
}
