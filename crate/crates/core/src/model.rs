//! Domain types shared across the pipeline.
//!
//! Identity-bearing types (`Query`, `CandidateSet`, `Ranking`, `Qrels`) keep
//! their fields private and can only be built through validating
//! constructors. Record types produced by pipeline stages expose their fields
//! and carry a `validate` method that the readers and stage boundaries call.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type DocId = String;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("query id must be non-empty")]
    EmptyQueryId,
    #[error("doc id must be non-empty")]
    EmptyDocId,
    #[error("candidate set for query `{0}` is empty")]
    EmptyCandidateSet(String),
    #[error("duplicate doc id `{doc_id}` in candidate set for query `{query_id}`")]
    DuplicateCandidate { query_id: String, doc_id: String },
    #[error("ranking contains an empty tie group at position {0}")]
    EmptyGroup(usize),
    #[error("doc id `{0}` appears more than once in ranking")]
    DuplicateInRanking(String),
    #[error("invalid sampling config: {0}")]
    SamplingConfig(String),
    #[error("invalid sample {query_id}#{sample_index}: {reason}")]
    Sample {
        query_id: String,
        sample_index: u32,
        reason: String,
    },
    #[error("invalid filter stats for query `{query_id}`: {reason}")]
    FilterStats { query_id: String, reason: String },
    #[error("invalid distillation record for query `{query_id}`: {reason}")]
    Record { query_id: String, reason: String },
    #[error("invalid report: {0}")]
    Report(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawQuery")]
pub struct Query {
    id: String,
    text: String,
}

#[derive(Deserialize)]
struct RawQuery {
    id: String,
    text: String,
}

impl TryFrom<RawQuery> for Query {
    type Error = ModelError;
    fn try_from(raw: RawQuery) -> Result<Self, ModelError> {
        Query::new(raw.id, raw.text)
    }
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, ModelError> {
        let id = id.into();
        if id.is_empty() {
            return Err(ModelError::EmptyQueryId);
        }
        Ok(Self {
            id,
            text: text.into(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDoc")]
pub struct CandidateDoc {
    doc_id: DocId,
    text: String,
}

#[derive(Deserialize)]
struct RawDoc {
    doc_id: String,
    text: String,
}

impl TryFrom<RawDoc> for CandidateDoc {
    type Error = ModelError;
    fn try_from(raw: RawDoc) -> Result<Self, ModelError> {
        CandidateDoc::new(raw.doc_id, raw.text)
    }
}

impl CandidateDoc {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Result<Self, ModelError> {
        let doc_id = doc_id.into();
        if doc_id.is_empty() {
            return Err(ModelError::EmptyDocId);
        }
        Ok(Self {
            doc_id,
            text: text.into(),
        })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// The first-stage candidate list for one query.
///
/// Prompts refer to documents by 1-based position in this list; the position
/// is the only mapping between a prompt alias and a doc id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCandidateSet")]
pub struct CandidateSet {
    query_id: String,
    docs: Vec<CandidateDoc>,
    retriever_tag: String,
}

#[derive(Deserialize)]
struct RawCandidateSet {
    query_id: String,
    docs: Vec<CandidateDoc>,
    retriever_tag: String,
}

impl TryFrom<RawCandidateSet> for CandidateSet {
    type Error = ModelError;
    fn try_from(raw: RawCandidateSet) -> Result<Self, ModelError> {
        CandidateSet::new(raw.query_id, raw.docs, raw.retriever_tag)
    }
}

impl CandidateSet {
    pub fn new(
        query_id: impl Into<String>,
        docs: Vec<CandidateDoc>,
        retriever_tag: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let query_id = query_id.into();
        if query_id.is_empty() {
            return Err(ModelError::EmptyQueryId);
        }
        if docs.is_empty() {
            return Err(ModelError::EmptyCandidateSet(query_id));
        }
        let mut seen = HashSet::with_capacity(docs.len());
        for doc in &docs {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(ModelError::DuplicateCandidate {
                    query_id,
                    doc_id: doc.doc_id.clone(),
                });
            }
        }
        Ok(Self {
            query_id,
            docs,
            retriever_tag: retriever_tag.into(),
        })
    }

    /// Candidate set whose passages are just their ids. Handy when only the
    /// alias mapping matters (parsing stored samples, tests).
    pub fn from_ids<I, S>(query_id: impl Into<String>, ids: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let docs = ids
            .into_iter()
            .map(|id| CandidateDoc::new(id, String::new()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(query_id, docs, "")
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn docs(&self) -> &[CandidateDoc] {
        &self.docs
    }

    pub fn retriever_tag(&self) -> &str {
        &self.retriever_tag
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Document for a 1-based prompt alias.
    pub fn by_alias(&self, alias: usize) -> Option<&CandidateDoc> {
        alias.checked_sub(1).and_then(|i| self.docs.get(i))
    }

    /// 1-based prompt alias of a doc id.
    pub fn alias_of(&self, doc_id: &str) -> Option<usize> {
        self.docs.iter().position(|d| d.doc_id == doc_id).map(|i| i + 1)
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.doc_id.as_str())
    }
}

/// Graded relevance judgments. Unjudged pairs score as grade 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<DocId, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a judgment, returning the grade it replaced if any.
    pub fn insert(
        &mut self,
        query_id: impl Into<String>,
        doc_id: impl Into<String>,
        grade: u32,
    ) -> Option<u32> {
        self.judgments
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into(), grade)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.judgments
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn has_query(&self, query_id: &str) -> bool {
        self.judgments.contains_key(query_id)
    }

    /// All judged grades for one query, in doc-id order.
    pub fn query_judgments(&self, query_id: &str) -> impl Iterator<Item = (&str, u32)> {
        self.judgments
            .get(query_id)
            .into_iter()
            .flat_map(|m| m.iter().map(|(d, g)| (d.as_str(), *g)))
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    /// Every judgment as `(query_id, doc_id, grade)`, sorted by query then doc.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.judgments.iter().flat_map(|(q, m)| {
            m.iter()
                .map(move |(d, g)| (q.as_str(), d.as_str(), *g))
        })
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// An ordered list of tie groups over doc ids.
///
/// Equality is structural: `[a] > [b]` and `[a] = [b]` are different
/// rankings even though they flatten to the same sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<String>>", into = "Vec<Vec<String>>")]
pub struct Ranking {
    groups: Vec<Vec<DocId>>,
}

impl TryFrom<Vec<Vec<String>>> for Ranking {
    type Error = ModelError;
    fn try_from(groups: Vec<Vec<String>>) -> Result<Self, ModelError> {
        Ranking::new(groups)
    }
}

impl From<Ranking> for Vec<Vec<String>> {
    fn from(r: Ranking) -> Self {
        r.groups
    }
}

impl Ranking {
    pub fn new(groups: Vec<Vec<DocId>>) -> Result<Self, ModelError> {
        let mut seen = HashSet::new();
        for (i, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(ModelError::EmptyGroup(i));
            }
            for doc in group {
                if doc.is_empty() {
                    return Err(ModelError::EmptyDocId);
                }
                if !seen.insert(doc.as_str()) {
                    return Err(ModelError::DuplicateInRanking(doc.clone()));
                }
            }
        }
        Ok(Self { groups })
    }

    /// Strict ranking with one singleton group per doc.
    pub fn strict<I, S>(order: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(order.into_iter().map(|d| vec![d.into()]).collect())
    }

    pub fn groups(&self) -> &[Vec<DocId>] {
        &self.groups
    }

    /// Docs in group order, then within-group order.
    pub fn flatten(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().flatten().map(String::as_str)
    }

    /// Number of ranked docs (not groups).
    pub fn len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.flatten().any(|d| d == doc_id)
    }
}

impl fmt::Display for Ranking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, group) in self.groups.iter().enumerate() {
            if i > 0 {
                f.write_str(" > ")?;
            }
            for (j, doc) in group.iter().enumerate() {
                if j > 0 {
                    f.write_str(" = ")?;
                }
                write!(f, "{doc}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenProvenance {
    EndpointReported,
    Approximated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLen {
    pub count: u64,
    pub provenance: TokenProvenance,
}

/// How the reasoning prefix was separated from the answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Explicit think markers were found.
    Delimited,
    /// No markers; split at the start of the last ranking pattern.
    LastRanking,
    /// No markers and no ranking; whole text is reasoning.
    NoRanking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

/// One sampled generation for a query, together with everything derived
/// from it by the parser and (later) the scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub query_id: String,
    /// 1-based index in `1..=K`.
    pub sample_index: u32,
    /// Candidate doc ids in prompt order; defines the alias mapping.
    pub candidate_ids: Vec<DocId>,
    pub prompt_hash: String,
    pub raw_text: String,
    pub reasoning_text: String,
    pub split_mode: SplitMode,
    pub final_ranking: Option<Ranking>,
    /// Fraction of candidates mentioned before repair.
    pub coverage: Option<f64>,
    pub ranking_sequence: Vec<Ranking>,
    pub token_len: TokenLen,
    pub score: Option<f64>,
    pub valid: bool,
    pub finish_reason: FinishReason,
    pub error: Option<String>,
}

impl TrajectorySample {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: &str| ModelError::Sample {
            query_id: self.query_id.clone(),
            sample_index: self.sample_index,
            reason: reason.to_string(),
        };
        if self.query_id.is_empty() {
            return Err(ModelError::EmptyQueryId);
        }
        if self.sample_index == 0 {
            return Err(fail("sample_index is 1-based"));
        }
        if self.valid && self.final_ranking.is_none() {
            return Err(fail("valid sample without a final ranking"));
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(fail("score outside [0, 1]"));
            }
        }
        if let Some(c) = self.coverage {
            if !(0.0..=1.0).contains(&c) {
                return Err(fail("coverage outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestMode {
    /// One request per sample.
    #[default]
    Independent,
    /// One request asking for `n = K` choices.
    Batched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub k_samples: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    pub max_in_flight: usize,
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default)]
    pub request_mode: RequestMode,
}

impl SamplingConfig {
    /// Trajectory-sampling profile for corpus construction:
    /// K = 16, τ = 0.7, p = 0.95, L_max = 8192.
    pub fn distill() -> Self {
        Self {
            k_samples: 16,
            temperature: 0.7,
            top_p: 0.95,
            max_tokens: 8192,
            seed: None,
            max_in_flight: 8,
            endpoint_url: String::new(),
            model_name: String::new(),
            request_mode: RequestMode::Independent,
        }
    }

    /// Test-time profile: one sample per query at τ = 0.5, p = 0.95.
    pub fn eval() -> Self {
        Self {
            k_samples: 1,
            temperature: 0.5,
            ..Self::distill()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::SamplingConfig(m.to_string()));
        if self.k_samples < 1 {
            return bad("k_samples must be at least 1");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must lie in (0, 1]");
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return bad("temperature must be a finite value >= 0");
        }
        if self.max_tokens < 1 {
            return bad("max_tokens must be at least 1");
        }
        if self.max_in_flight < 1 {
            return bad("max_in_flight must be at least 1");
        }
        Ok(())
    }
}

/// Per-query outcome of the bicriteria filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFilterStats {
    pub query_id: String,
    pub n_sampled: usize,
    pub n_valid: usize,
    /// Mean score over the valid subset; absent when it is empty.
    pub mean_score: Option<f64>,
    pub mean_len: Option<f64>,
    pub efficient_indices: Vec<u32>,
    pub target_index: Option<u32>,
    pub retained: bool,
}

impl QueryFilterStats {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: &str| {
            Err(ModelError::FilterStats {
                query_id: self.query_id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.n_valid > self.n_sampled {
            return fail("n_valid exceeds n_sampled");
        }
        if self.retained == self.efficient_indices.is_empty() {
            return fail("retained must hold exactly when the efficient set is non-empty");
        }
        if self.retained != self.target_index.is_some() {
            return fail("retained query must name its target");
        }
        Ok(())
    }
}

/// One retained `(query, candidates, target)` triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillationRecord {
    pub query: Query,
    pub candidates: CandidateSet,
    pub target_text: String,
    pub target_score: f64,
    pub target_len: u64,
    pub sample_index: u32,
    pub prompt_hash: String,
}

impl DistillationRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.target_score > 0.0 && self.target_score <= 1.0) {
            return Err(ModelError::Record {
                query_id: self.query.id().to_string(),
                reason: format!("target score {} outside (0, 1]", self.target_score),
            });
        }
        if self.query.id() != self.candidates.query_id() {
            return Err(ModelError::Record {
                query_id: self.query.id().to_string(),
                reason: format!(
                    "candidate set belongs to query `{}`",
                    self.candidates.query_id()
                ),
            });
        }
        Ok(())
    }
}

/// Redundancy diagnostics for one stated-ranking sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedundancyMetrics {
    pub seq_len: usize,
    pub t_star: usize,
    pub trr: f64,
    pub mor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryEval {
    pub ndcg10: f64,
    /// Mean generated tokens over the query's samples.
    pub gen_len: f64,
    pub n_samples: usize,
}

/// Equal-width length bucket. `hi` is exclusive except for the last bucket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthBucket {
    pub lo: f64,
    pub hi: f64,
    pub mean_ndcg10: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_tag: String,
    pub per_query: BTreeMap<String, QueryEval>,
    pub mean_ndcg10: f64,
    pub mean_len: f64,
    pub length_buckets: Vec<LengthBucket>,
}

impl EvalReport {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.per_query.is_empty() {
            return Err(ModelError::Report("per_query map is empty".into()));
        }
        let n = self.per_query.len() as f64;
        let mean_ndcg = self.per_query.values().map(|q| q.ndcg10).sum::<f64>() / n;
        let mean_len = self.per_query.values().map(|q| q.gen_len).sum::<f64>() / n;
        if (mean_ndcg - self.mean_ndcg10).abs() > 1e-6 || (mean_len - self.mean_len).abs() > 1e-6 {
            return Err(ModelError::Report(
                "means disagree with per-query entries".into(),
            ));
        }
        let bucketed: usize = self.length_buckets.iter().map(|b| b.count).sum();
        if bucketed != self.per_query.len() {
            return Err(ModelError::Report(format!(
                "buckets cover {bucketed} of {} queries",
                self.per_query.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_set_rejects_duplicates_and_empty() {
        assert!(matches!(
            CandidateSet::from_ids("q", Vec::<String>::new()),
            Err(ModelError::EmptyCandidateSet(_))
        ));
        assert!(matches!(
            CandidateSet::from_ids("q", ["a", "b", "a"]),
            Err(ModelError::DuplicateCandidate { .. })
        ));
        assert!(matches!(
            CandidateSet::from_ids("q", ["a", ""]),
            Err(ModelError::EmptyDocId)
        ));
        let set = CandidateSet::from_ids("q", ["a", "b"]).unwrap();
        assert_eq!(set.by_alias(2).unwrap().doc_id(), "b");
        assert!(set.by_alias(0).is_none());
        assert_eq!(set.alias_of("a"), Some(1));
    }

    #[test]
    fn ranking_rejects_duplicates_and_empty_groups() {
        let dup = Ranking::new(vec![vec!["a".into()], vec!["b".into(), "a".into()]]);
        assert_eq!(dup, Err(ModelError::DuplicateInRanking("a".into())));
        let empty = Ranking::new(vec![vec!["a".into()], vec![]]);
        assert_eq!(empty, Err(ModelError::EmptyGroup(1)));
    }

    #[test]
    fn tie_structure_matters_for_equality() {
        let strict = Ranking::strict(["a", "b"]).unwrap();
        let tied = Ranking::new(vec![vec!["a".into(), "b".into()]]).unwrap();
        assert_ne!(strict, tied);
        assert_eq!(strict.flatten().collect::<Vec<_>>(), tied.flatten().collect::<Vec<_>>());
        assert_eq!(tied.to_string(), "a = b");
    }

    #[test]
    fn ranking_deserialization_validates() {
        let bad: Result<Ranking, _> = serde_json::from_str(r#"[["a"],["a"]]"#);
        assert!(bad.is_err());
        let good: Ranking = serde_json::from_str(r#"[["a","b"],["c"]]"#).unwrap();
        assert_eq!(good.len(), 3);
    }

    #[test]
    fn qrels_default_grade_is_zero() {
        let mut q = Qrels::new();
        assert_eq!(q.insert("q1", "d1", 2), None);
        assert_eq!(q.insert("q1", "d1", 3), Some(2));
        assert_eq!(q.grade("q1", "d1"), 3);
        assert_eq!(q.grade("q1", "zz"), 0);
        assert_eq!(q.grade("nope", "d1"), 0);
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn sampling_profiles_validate() {
        let d = SamplingConfig::distill();
        assert_eq!((d.k_samples, d.temperature, d.top_p, d.max_tokens), (16, 0.7, 0.95, 8192));
        d.validate().unwrap();
        let e = SamplingConfig::eval();
        assert_eq!((e.temperature, e.top_p), (0.5, 0.95));
        e.validate().unwrap();

        for broken in [
            SamplingConfig { k_samples: 0, ..d.clone() },
            SamplingConfig { top_p: 0.0, ..d.clone() },
            SamplingConfig { top_p: 1.5, ..d.clone() },
            SamplingConfig { temperature: -0.1, ..d.clone() },
            SamplingConfig { max_tokens: 0, ..d.clone() },
            SamplingConfig { max_in_flight: 0, ..d.clone() },
        ] {
            assert!(broken.validate().is_err(), "{broken:?}");
        }
    }

    #[test]
    fn sample_validation() {
        let mut s = TrajectorySample {
            query_id: "q".into(),
            sample_index: 1,
            candidate_ids: vec!["a".into()],
            prompt_hash: String::new(),
            raw_text: String::new(),
            reasoning_text: String::new(),
            split_mode: SplitMode::NoRanking,
            final_ranking: None,
            coverage: None,
            ranking_sequence: vec![],
            token_len: TokenLen {
                count: 0,
                provenance: TokenProvenance::Approximated,
            },
            score: None,
            valid: false,
            finish_reason: FinishReason::Stop,
            error: None,
        };
        s.validate().unwrap();
        s.valid = true;
        assert!(s.validate().is_err());
        s.valid = false;
        s.score = Some(1.2);
        assert!(s.validate().is_err());
        s.score = Some(0.3);
        s.sample_index = 0;
        assert!(s.validate().is_err());
    }
}
