//! Parsing of generated reranker output.
//!
//! A ranking pattern is a run of bracketed integers joined by `>` (strictly
//! better) or `=` (tied), e.g. `[13] > [14] > [19] > [3] = [6]`. Integers are
//! 1-based aliases into the candidate list shown in the prompt.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CandidateSet, DocId, Ranking, SplitMode};

pub const DEFAULT_THINK_OPEN: &str = "<think>";
pub const DEFAULT_THINK_CLOSE: &str = "</think>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParserConfig {
    pub think_open: String,
    pub think_close: String,
}

impl Default for ParserConfig {
    fn default() -> Self {
        Self {
            think_open: DEFAULT_THINK_OPEN.to_string(),
            think_close: DEFAULT_THINK_CLOSE.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingPatternMatch {
    /// Character offsets `(start, end)` of the pattern in the source text.
    pub span: (usize, usize),
    /// Same span in bytes, for slicing.
    pub byte_span: Range<usize>,
    pub ranking: Ranking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sep {
    Better,
    Tied,
}

/// A syntactic pattern before alias resolution.
#[derive(Debug)]
struct RawPattern {
    bytes: Range<usize>,
    /// Each item with the separator that precedes it (`None` for the first).
    /// Aliases that overflow `usize` are kept as `None`.
    items: Vec<(Option<Sep>, Option<usize>)>,
}

fn skip_ws(text: &str, mut pos: usize) -> usize {
    for c in text[pos..].chars() {
        if !c.is_whitespace() {
            break;
        }
        pos += c.len_utf8();
    }
    pos
}

/// Reads `[digits]` at `pos`, returning the alias and the position after `]`.
fn read_item(text: &str, pos: usize) -> Option<(Option<usize>, usize)> {
    let bytes = text.as_bytes();
    if bytes.get(pos) != Some(&b'[') {
        return None;
    }
    let start = pos + 1;
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start || bytes.get(end) != Some(&b']') {
        return None;
    }
    Some((text[start..end].parse::<usize>().ok(), end + 1))
}

fn scan_patterns(text: &str) -> Vec<RawPattern> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let Some((first, mut end)) = read_item(text, pos) else {
            pos += 1;
            continue;
        };
        let start = pos;
        let mut items = vec![(None, first)];
        loop {
            let p = skip_ws(text, end);
            let sep = match bytes.get(p) {
                Some(b'>') => Sep::Better,
                Some(b'=') => Sep::Tied,
                _ => break,
            };
            let p = skip_ws(text, p + 1);
            match read_item(text, p) {
                Some((alias, next)) => {
                    items.push((Some(sep), alias));
                    end = next;
                }
                None => break,
            }
        }
        out.push(RawPattern {
            bytes: start..end,
            items,
        });
        pos = end;
    }
    out
}

/// Resolves aliases against the universe, dropping out-of-range and repeated
/// aliases. A dropped item's separator folds into the next kept item's, with
/// `>` taking precedence over `=`.
fn resolve(pattern: &RawPattern, universe: &CandidateSet) -> Option<Ranking> {
    let mut groups: Vec<Vec<DocId>> = Vec::new();
    let mut seen = vec![false; universe.len() + 1];
    let mut pending: Option<Sep> = None;
    let mut kept = 0;
    for &(sep, alias) in &pattern.items {
        pending = match (pending, sep) {
            (Some(Sep::Better), _) | (_, Some(Sep::Better)) => Some(Sep::Better),
            (Some(Sep::Tied), _) | (_, Some(Sep::Tied)) => Some(Sep::Tied),
            _ => None,
        };
        let Some(alias) = alias.filter(|a| (1..=universe.len()).contains(a)) else {
            continue;
        };
        if seen[alias] {
            continue;
        }
        seen[alias] = true;
        let doc = universe.docs()[alias - 1].doc_id().to_string();
        match (groups.last_mut(), pending) {
            (Some(group), Some(Sep::Tied)) => group.push(doc),
            _ => groups.push(vec![doc]),
        }
        pending = None;
        kept += 1;
    }
    if kept < 2 {
        return None;
    }
    Some(Ranking::new(groups).expect("resolved aliases are distinct"))
}

fn char_offset(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

/// Every ranking pattern in `text` with at least two in-universe items, in
/// text order.
pub fn extract_rankings(text: &str, universe: &CandidateSet) -> Vec<RankingPatternMatch> {
    scan_patterns(text)
        .into_iter()
        .filter_map(|p| {
            let ranking = resolve(&p, universe)?;
            Some(RankingPatternMatch {
                span: (char_offset(text, p.bytes.start), char_offset(text, p.bytes.end)),
                byte_span: p.bytes,
                ranking,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalRanking {
    /// Total over the universe after repair.
    pub ranking: Ranking,
    /// Fraction of the universe mentioned before repair.
    pub coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no parseable ranking over the candidate set")]
pub struct InvalidRanking;

/// Appends every doc the ranking does not mention as trailing singleton
/// groups, in candidate order.
pub fn repair(ranking: &Ranking, universe: &CandidateSet) -> FinalRanking {
    let mut groups = ranking.groups().to_vec();
    let mentioned = ranking
        .flatten()
        .filter(|d| universe.alias_of(d).is_some())
        .count();
    for doc in universe.doc_ids() {
        if !ranking.contains(doc) {
            groups.push(vec![doc.to_string()]);
        }
    }
    FinalRanking {
        ranking: Ranking::new(groups).expect("repair only adds unmentioned docs"),
        coverage: mentioned as f64 / universe.len() as f64,
    }
}

/// Takes the last ranking pattern as the decision and repairs it into a total
/// ranking.
pub fn parse_final_ranking(
    text: &str,
    universe: &CandidateSet,
) -> Result<FinalRanking, InvalidRanking> {
    let last = extract_rankings(text, universe)
        .pop()
        .ok_or(InvalidRanking)?;
    Ok(repair(&last.ranking, universe))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasoningSplit {
    pub reasoning: String,
    pub answer: String,
    pub mode: SplitMode,
}

/// Separates the reasoning prefix from the answer.
///
/// With a close marker present the reasoning is the text before it (after the
/// open marker when there is one) and the answer is what follows. Without
/// markers the split falls at the start of the last ranking pattern.
pub fn split_reasoning(raw_text: &str, config: &ParserConfig) -> ReasoningSplit {
    if !config.think_close.is_empty() {
        if let Some(close) = raw_text.rfind(&config.think_close) {
            let head = &raw_text[..close];
            let reasoning = match (!config.think_open.is_empty())
                .then(|| head.find(&config.think_open))
                .flatten()
            {
                Some(open) => &head[open + config.think_open.len()..],
                None => head,
            };
            return ReasoningSplit {
                reasoning: reasoning.to_string(),
                answer: raw_text[close + config.think_close.len()..].to_string(),
                mode: SplitMode::Delimited,
            };
        }
    }
    let last = scan_patterns(raw_text)
        .into_iter()
        .rev()
        .find(|p| p.items.len() >= 2);
    match last {
        Some(p) => ReasoningSplit {
            reasoning: raw_text[..p.bytes.start].to_string(),
            answer: raw_text[p.bytes.start..].to_string(),
            mode: SplitMode::LastRanking,
        },
        None => ReasoningSplit {
            reasoning: raw_text.to_string(),
            answer: String::new(),
            mode: SplitMode::NoRanking,
        },
    }
}

/// Renders a ranking in prompt-alias syntax, e.g. `[2] > [1] = [3]`.
/// Returns `None` if it mentions a doc outside the universe.
pub fn render_ranking(ranking: &Ranking, universe: &CandidateSet) -> Option<String> {
    let mut out = String::new();
    for (i, group) in ranking.groups().iter().enumerate() {
        for (j, doc) in group.iter().enumerate() {
            if i > 0 || j > 0 {
                out.push_str(if j == 0 { " > " } else { " = " });
            }
            out.push('[');
            out.push_str(&universe.alias_of(doc)?.to_string());
            out.push(']');
        }
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    /// Use the server's usage count when available, else approximate.
    Endpoint,
    /// Always approximate.
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenCount {
    EndpointReported(i64),
    Approximate,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("endpoint reported a negative token count ({0})")]
pub struct NegativeTokenCount(pub i64);

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Space,
    Letter,
    Digit,
    Other,
}

fn class_of(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if c.is_alphabetic() {
        CharClass::Letter
    } else if c.is_numeric() {
        CharClass::Digit
    } else {
        CharClass::Other
    }
}

/// Counts maximal runs of same-class non-whitespace characters, where the
/// classes are letters, digits, and everything else. `"[13] > [14]"` is
/// `[`, `13`, `]`, `>`, `[`, `14`, `]`.
pub fn approximate_tokens(text: &str) -> u64 {
    let mut count = 0;
    let mut prev = CharClass::Space;
    for c in text.chars() {
        let class = class_of(c);
        if class != CharClass::Space && class != prev {
            count += 1;
        }
        prev = class;
    }
    count
}

pub fn count_tokens(text: &str, mode: TokenCount) -> Result<u64, NegativeTokenCount> {
    match mode {
        TokenCount::EndpointReported(n) if n < 0 => Err(NegativeTokenCount(n)),
        TokenCount::EndpointReported(n) => Ok(n as u64),
        TokenCount::Approximate => Ok(approximate_tokens(text)),
    }
}

/// Everything the parser derives from one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub reasoning: String,
    pub split_mode: SplitMode,
    pub final_ranking: Option<FinalRanking>,
    /// The stated-ranking sequence, final ranking last (unrepaired).
    pub ranking_sequence: Vec<Ranking>,
}

pub fn parse_trace(raw_text: &str, universe: &CandidateSet, config: &ParserConfig) -> ParsedTrace {
    let split = split_reasoning(raw_text, config);
    let ranking_sequence: Vec<Ranking> = extract_rankings(raw_text, universe)
        .into_iter()
        .map(|m| m.ranking)
        .collect();
    let final_ranking = ranking_sequence.last().map(|r| repair(r, universe));
    ParsedTrace {
        reasoning: split.reasoning,
        split_mode: split.mode,
        final_ranking,
        ranking_sequence,
    }
}
