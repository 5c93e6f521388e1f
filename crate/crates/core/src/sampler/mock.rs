//! Deterministic stand-in for a reasoning reranker.
//!
//! Each generation is a pure function of `(seed, query_id, sample_index)`.
//! The text imitates the shape of real traces: filler deliberation that cites
//! single passages, optional restatements of the current ranking, optional
//! revert loops (state a perturbed ranking, then return to the original), and
//! a final ranking after the closing think marker.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{CandidateSet, DocId, FinishReason, Qrels, Ranking};
use crate::parser::{render_ranking, DEFAULT_THINK_CLOSE, DEFAULT_THINK_OPEN};
use crate::sampler::backend::{BackendError, GenerationBackend, GenerationRequest, GenerationResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockOrder {
    /// Grade-descending order (needs qrels; otherwise candidate order).
    Ideal,
    /// Grade-ascending order.
    Reversed,
    /// Uniform random permutation.
    Shuffled,
    /// Candidate (first-stage) order.
    Retrieval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockArchetype {
    pub name: String,
    pub order: MockOrder,
    #[serde(default)]
    pub filler_sentences: u32,
    #[serde(default)]
    pub restatements: u32,
    #[serde(default)]
    pub revert_loops: u32,
    /// Join equal-grade neighbours with `=` in ideal/reversed orders.
    #[serde(default)]
    pub tie_equal_grades: bool,
    /// Relative weight under weighted assignment.
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// Sample `k` uses archetype `(k - 1) mod len`.
    #[default]
    Cycle,
    /// Archetype drawn by weight from the per-sample generator.
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockProfile {
    pub archetypes: Vec<MockArchetype>,
    #[serde(default)]
    pub assignment: Assignment,
    #[serde(default = "yes")]
    pub think_markers: bool,
}

fn yes() -> bool {
    true
}

impl MockArchetype {
    pub fn new(name: &str, order: MockOrder) -> Self {
        Self {
            name: name.to_string(),
            order,
            filler_sentences: 0,
            restatements: 0,
            revert_loops: 0,
            tie_equal_grades: false,
            weight: 1.0,
        }
    }

    pub fn verbosity(mut self, filler: u32, restatements: u32, revert_loops: u32) -> Self {
        self.filler_sentences = filler;
        self.restatements = restatements;
        self.revert_loops = revert_loops;
        self
    }
}

impl MockProfile {
    pub fn single(archetype: MockArchetype) -> Self {
        Self {
            archetypes: vec![archetype],
            assignment: Assignment::Cycle,
            think_markers: true,
        }
    }

    /// Ideal-short, ideal-long and poor-short samples in rotation.
    pub fn mixed() -> Self {
        Self {
            archetypes: vec![
                MockArchetype::new("ideal-short", MockOrder::Ideal).verbosity(2, 0, 0),
                MockArchetype::new("ideal-long", MockOrder::Ideal).verbosity(40, 3, 2),
                MockArchetype::new("poor-short", MockOrder::Reversed).verbosity(2, 0, 0),
            ],
            assignment: Assignment::Cycle,
            think_markers: true,
        }
    }

    /// The archetype sample `sample_index` draws under cycle assignment.
    pub fn cycle_archetype(&self, sample_index: u32) -> &MockArchetype {
        let i = (sample_index.saturating_sub(1) as usize) % self.archetypes.len();
        &self.archetypes[i]
    }
}

/// Stable 64-bit seed derived from the run seed and the sample identity.
pub fn derive_seed(seed: u64, query_id: &str, sample_index: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(query_id.as_bytes());
    h.update([0u8]);
    h.update(sample_index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

const FILLER: &[&str] = &[
    "Passage {a} mentions the topic only in passing.",
    "Let me look at passage {a} again; it restates the question without answering it.",
    "Passage {a} gives a direct answer, which is what the user wants.",
    "The detail in passage {a} about dates seems secondary.",
    "Passage {b} overlaps heavily with passage {a}, so they carry similar evidence.",
    "I should double-check whether passage {a} is more specific than passage {b}.",
    "Hmm, passage {a} is about a related but different entity.",
    "Passage {b} cites a source, which makes it somewhat more trustworthy.",
    "Re-reading passage {a}, nothing new stands out.",
    "The query asks for a specific fact, so general background like passage {b} ranks lower.",
    "Passage {a} is short but on point.",
    "Considering passage {a} and passage {b} together, the first is more complete.",
];

fn grade_order(
    candidates: &CandidateSet,
    qrels: Option<&Qrels>,
    query_id: &str,
    descending: bool,
    tie: bool,
) -> Ranking {
    let grade = |d: &str| qrels.map_or(0, |q| q.grade(query_id, d));
    let mut docs: Vec<(&str, u32)> = candidates.doc_ids().map(|d| (d, grade(d))).collect();
    if descending {
        docs.sort_by_key(|d| std::cmp::Reverse(d.1));
    } else {
        docs.sort_by_key(|d| d.1);
    }
    let mut groups: Vec<Vec<DocId>> = Vec::new();
    let mut last_grade = None;
    for (doc, g) in docs {
        match groups.last_mut() {
            Some(group) if tie && last_grade == Some(g) => group.push(doc.to_string()),
            _ => groups.push(vec![doc.to_string()]),
        }
        last_grade = Some(g);
    }
    Ranking::new(groups).expect("candidate ids are distinct")
}

/// A different ranking close to `r`: two adjacent groups swapped, or the
/// single group split into a strict order.
fn perturb(r: &Ranking, rng: &mut ChaCha8Rng) -> Ranking {
    let mut groups = r.groups().to_vec();
    if groups.len() >= 2 {
        let i = rng.random_range(0..groups.len() - 1);
        groups.swap(i, i + 1);
    } else {
        groups = groups[0].iter().map(|d| vec![d.clone()]).collect();
    }
    Ranking::new(groups).expect("permutation of a valid ranking")
}

fn filler(candidates: &CandidateSet, rng: &mut ChaCha8Rng) -> String {
    let n = candidates.len();
    let a = rng.random_range(1..=n);
    let b = if n > 1 {
        (a % n) + 1
    } else {
        a
    };
    FILLER
        .choose(rng)
        .expect("non-empty bank")
        .replace("{a}", &format!("[{a}]"))
        .replace("{b}", &format!("[{b}]"))
}

fn pick<'p>(profile: &'p MockProfile, sample_index: u32, rng: &mut ChaCha8Rng) -> &'p MockArchetype {
    match profile.assignment {
        Assignment::Cycle => profile.cycle_archetype(sample_index),
        Assignment::Weighted => {
            let total: f64 = profile.archetypes.iter().map(|a| a.weight.max(0.0)).sum();
            let mut x = rng.random::<f64>() * total;
            for a in &profile.archetypes {
                x -= a.weight.max(0.0);
                if x < 0.0 {
                    return a;
                }
            }
            profile.archetypes.last().expect("non-empty profile")
        }
    }
}

/// Final ranking the mock commits to for a given archetype.
pub fn mock_final_ranking(
    archetype: &MockArchetype,
    query_id: &str,
    candidates: &CandidateSet,
    qrels: Option<&Qrels>,
    rng: &mut ChaCha8Rng,
) -> Ranking {
    let tie = archetype.tie_equal_grades;
    match archetype.order {
        MockOrder::Ideal => grade_order(candidates, qrels, query_id, true, tie),
        MockOrder::Reversed => grade_order(candidates, qrels, query_id, false, tie),
        MockOrder::Retrieval => Ranking::strict(candidates.doc_ids()).expect("distinct ids"),
        MockOrder::Shuffled => {
            let mut ids: Vec<&str> = candidates.doc_ids().collect();
            ids.shuffle(rng);
            Ranking::strict(ids).expect("distinct ids")
        }
    }
}

pub fn mock_generate(
    query_id: &str,
    candidates: &CandidateSet,
    sample_index: u32,
    seed: u64,
    profile: &MockProfile,
    qrels: Option<&Qrels>,
) -> GenerationResult {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, query_id, sample_index));
    let archetype = pick(profile, sample_index, &mut rng);
    let ranking = mock_final_ranking(archetype, query_id, candidates, qrels, &mut rng);
    let render = |r: &Ranking| render_ranking(r, candidates).expect("ranking over candidates");
    let stated = render(&ranking);

    let mut text = String::new();
    if profile.think_markers {
        text.push_str(DEFAULT_THINK_OPEN);
        text.push('\n');
    }
    for _ in 0..archetype.filler_sentences {
        text.push_str(&filler(candidates, &mut rng));
        text.push('\n');
    }
    for _ in 0..archetype.restatements {
        text.push_str(&format!("So the order would be: {stated}.\n"));
        text.push_str(&filler(candidates, &mut rng));
        text.push('\n');
    }
    for _ in 0..archetype.revert_loops {
        let alt = perturb(&ranking, &mut rng);
        text.push_str(&format!(
            "But I should double-check. Maybe: {}.\n",
            render(&alt)
        ));
        text.push_str(&filler(candidates, &mut rng));
        text.push('\n');
        text.push_str(&format!("Wait, let me reconsider. So: {stated}.\n"));
    }
    if profile.think_markers {
        text.push_str(DEFAULT_THINK_CLOSE);
        text.push('\n');
    }
    text.push_str(&stated);

    GenerationResult {
        raw_text: text,
        endpoint_token_count: None,
        finish_reason: FinishReason::Stop,
        latency_ms: 0,
    }
}

/// Backend wrapper around [`mock_generate`].
#[derive(Debug, Clone)]
pub struct MockBackend {
    pub profile: MockProfile,
    pub seed: u64,
    pub qrels: Option<Qrels>,
}

impl GenerationBackend for MockBackend {
    fn describe(&self) -> String {
        format!("mock(seed={})", self.seed)
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<GenerationResult, BackendError> {
        if self.profile.archetypes.is_empty() {
            return Err(BackendError::Rejected("mock profile has no archetypes".into()));
        }
        Ok(mock_generate(
            request.query_id,
            request.candidates,
            request.sample_index,
            self.seed,
            &self.profile,
            self.qrels.as_ref(),
        ))
    }
}
