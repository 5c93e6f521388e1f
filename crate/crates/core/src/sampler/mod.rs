//! Trajectory sampling against a generation backend.
//!
//! All `(query, sample)` requests of a batch go through one work queue served
//! by at most `max_in_flight` worker threads. Results are reassembled in
//! `(query, sample_index)` order, so the output never depends on completion
//! order.

pub mod backend;
pub mod http;
pub mod mock;
pub mod prompt;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::model::{
    CandidateSet, FinishReason, ModelError, Query, RequestMode, SamplingConfig, TokenLen,
    TokenProvenance, TrajectorySample,
};
use crate::parser::{count_tokens, parse_trace, ParserConfig, TokenCount, TokenizerMode};

pub use backend::{BackendError, GenerationBackend, GenerationRequest, GenerationResult, RetryPolicy};
pub use mock::{mock_generate, MockArchetype, MockBackend, MockOrder, MockProfile};
pub use prompt::{build_prompt, ChatMessage, PromptTemplate, Role, TemplateError};

#[derive(Debug, Error)]
pub enum SampleError {
    #[error(transparent)]
    Config(#[from] ModelError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("query `{query_id}`: candidate set belongs to query `{candidates_for}`")]
    QueryMismatch {
        query_id: String,
        candidates_for: String,
    },
    #[error("query `{query_id}`: all {k} requests to {endpoint} failed; last error: {last_error}")]
    EndpointUnreachable {
        query_id: String,
        endpoint: String,
        k: u32,
        last_error: String,
    },
}

/// Parsing and accounting options that sit next to the sampling config.
#[derive(Debug, Clone)]
pub struct SampleOptions {
    pub template: PromptTemplate,
    pub parser: ParserConfig,
    pub tokenizer: TokenizerMode,
    pub retry: RetryPolicy,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            template: PromptTemplate::default(),
            parser: ParserConfig::default(),
            tokenizer: TokenizerMode::Endpoint,
            retry: RetryPolicy::default(),
        }
    }
}

/// Request accounting shared by the workers of one batch.
#[derive(Debug, Default)]
pub struct RequestLedger {
    state: Mutex<LedgerState>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct RequestStats {
    pub requests: usize,
    pub retries: usize,
    pub failures: usize,
    pub peak_in_flight: usize,
}

#[derive(Debug, Default)]
struct LedgerState {
    in_flight: usize,
    stats: RequestStats,
}

impl RequestLedger {
    fn begin(&self) {
        let mut s = self.state.lock().expect("ledger poisoned");
        s.in_flight += 1;
        s.stats.requests += 1;
        s.stats.peak_in_flight = s.stats.peak_in_flight.max(s.in_flight);
    }

    fn end(&self, retries: u32, failed: bool) {
        let mut s = self.state.lock().expect("ledger poisoned");
        s.in_flight -= 1;
        s.stats.retries += retries as usize;
        s.stats.failures += failed as usize;
    }

    pub fn stats(&self) -> RequestStats {
        self.state.lock().expect("ledger poisoned").stats
    }
}

struct Job<'a> {
    query: &'a Query,
    candidates: &'a CandidateSet,
    messages: Vec<ChatMessage>,
}

/// One unit of work: a single sample, or all K samples in batched mode.
#[derive(Clone, Copy)]
struct Task {
    job: usize,
    first_index: u32,
    count: u32,
}

type TaskOutput = Vec<Result<GenerationResult, BackendError>>;

fn run_task(
    task: Task,
    job: &Job<'_>,
    config: &SamplingConfig,
    backend: &dyn GenerationBackend,
    retry: &RetryPolicy,
    ledger: &RequestLedger,
) -> TaskOutput {
    let request = GenerationRequest {
        query_id: job.query.id(),
        sample_index: task.first_index,
        candidates: job.candidates,
        messages: &job.messages,
        model: &config.model_name,
        temperature: config.temperature,
        top_p: config.top_p,
        max_tokens: config.max_tokens,
        seed: config
            .seed
            .map(|s| mock::derive_seed(s, job.query.id(), task.first_index)),
    };
    ledger.begin();
    let (result, retries) = if task.count == 1 && config.request_mode == RequestMode::Independent {
        let (r, n) = retry.run(|| backend.generate(&request));
        (r.map(|g| vec![g]), n)
    } else {
        retry.run(|| backend.generate_n(&request, task.count))
    };
    ledger.end(retries, result.is_err());
    match result {
        Ok(gens) => gens.into_iter().map(Ok).collect(),
        Err(e) => vec![Err(e); task.count as usize],
    }
}

fn to_sample(
    job: &Job<'_>,
    sample_index: u32,
    prompt_hash: &str,
    outcome: Result<GenerationResult, BackendError>,
    options: &SampleOptions,
) -> TrajectorySample {
    let candidate_ids = job.candidates.doc_ids().map(str::to_string).collect();
    let gen = match outcome {
        Ok(g) => g,
        Err(e) => {
            return TrajectorySample {
                query_id: job.query.id().to_string(),
                sample_index,
                candidate_ids,
                prompt_hash: prompt_hash.to_string(),
                raw_text: String::new(),
                reasoning_text: String::new(),
                split_mode: crate::model::SplitMode::NoRanking,
                final_ranking: None,
                coverage: None,
                ranking_sequence: Vec::new(),
                token_len: TokenLen {
                    count: 0,
                    provenance: TokenProvenance::Approximated,
                },
                score: None,
                valid: false,
                finish_reason: FinishReason::Error,
                error: Some(e.to_string()),
            }
        }
    };
    let trace = parse_trace(&gen.raw_text, job.candidates, &options.parser);
    let mut error = None;
    let reported = match (options.tokenizer, gen.endpoint_token_count) {
        (TokenizerMode::Endpoint, Some(n)) => match count_tokens(&gen.raw_text, TokenCount::EndpointReported(n)) {
            Ok(c) => Some(c),
            Err(e) => {
                error = Some(format!("corrupt usage metadata: {e}"));
                None
            }
        },
        _ => None,
    };
    let token_len = match reported {
        Some(count) => TokenLen {
            count,
            provenance: TokenProvenance::EndpointReported,
        },
        None => TokenLen {
            count: count_tokens(&gen.raw_text, TokenCount::Approximate).expect("approximate never fails"),
            provenance: TokenProvenance::Approximated,
        },
    };
    if gen.finish_reason == FinishReason::Length && error.is_none() {
        error = Some("generation truncated at max_tokens".to_string());
    }
    if trace.final_ranking.is_none() && error.is_none() {
        error = Some("no parseable ranking".to_string());
    }
    let valid = error.is_none() && trace.final_ranking.is_some();
    TrajectorySample {
        query_id: job.query.id().to_string(),
        sample_index,
        candidate_ids,
        prompt_hash: prompt_hash.to_string(),
        reasoning_text: trace.reasoning,
        split_mode: trace.split_mode,
        coverage: trace.final_ranking.as_ref().map(|f| f.coverage),
        final_ranking: trace.final_ranking.map(|f| f.ranking),
        ranking_sequence: trace.ranking_sequence,
        token_len,
        score: None,
        valid,
        finish_reason: gen.finish_reason,
        error,
        raw_text: gen.raw_text,
    }
}

/// Samples K trajectories for every `(query, candidates)` pair.
///
/// Returns one entry per input pair, in input order, plus request statistics.
/// Per-sample failures become invalid samples; a query fails as a whole only
/// when none of its K requests got a response.
pub fn sample_queries(
    inputs: &[(Query, CandidateSet)],
    config: &SamplingConfig,
    backend: &dyn GenerationBackend,
    options: &SampleOptions,
) -> Result<(Vec<Result<Vec<TrajectorySample>, SampleError>>, RequestStats), SampleError> {
    config.validate()?;
    let prompt_hash = options.template.hash();
    let mut jobs = Vec::with_capacity(inputs.len());
    for (query, candidates) in inputs {
        if query.id() != candidates.query_id() {
            return Err(SampleError::QueryMismatch {
                query_id: query.id().to_string(),
                candidates_for: candidates.query_id().to_string(),
            });
        }
        jobs.push(Job {
            query,
            candidates,
            messages: build_prompt(query, candidates, &options.template)?,
        });
    }

    let k = config.k_samples;
    let tasks: Vec<Task> = (0..jobs.len())
        .flat_map(|job| match config.request_mode {
            RequestMode::Independent => (1..=k)
                .map(|i| Task {
                    job,
                    first_index: i,
                    count: 1,
                })
                .collect::<Vec<_>>(),
            RequestMode::Batched => vec![Task {
                job,
                first_index: 1,
                count: k,
            }],
        })
        .collect();

    let ledger = RequestLedger::default();
    let next = AtomicUsize::new(0);
    let workers = config.max_in_flight.min(tasks.len()).max(1);
    let mut outputs: Vec<(usize, TaskOutput)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(&task) = tasks.get(i) else { break };
                        let out = run_task(task, &jobs[task.job], config, backend, &options.retry, &ledger);
                        done.push((i, out));
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sampling worker panicked"))
            .collect()
    });
    outputs.sort_by_key(|(i, _)| *i);

    let mut per_job: Vec<Vec<Result<GenerationResult, BackendError>>> =
        (0..jobs.len()).map(|_| Vec::with_capacity(k as usize)).collect();
    for (i, out) in outputs {
        per_job[tasks[i].job].extend(out);
    }

    let endpoint = backend.describe();
    let results = jobs
        .iter()
        .zip(per_job)
        .map(|(job, outcomes)| {
            let unreachable = outcomes
                .iter()
                .all(|o| matches!(o, Err(e) if !matches!(e, BackendError::Malformed(_))));
            if unreachable {
                let last_error = outcomes
                    .last()
                    .and_then(|o| o.as_ref().err())
                    .map(ToString::to_string)
                    .unwrap_or_default();
                return Err(SampleError::EndpointUnreachable {
                    query_id: job.query.id().to_string(),
                    endpoint: endpoint.clone(),
                    k,
                    last_error,
                });
            }
            Ok(outcomes
                .into_iter()
                .zip(1..)
                .map(|(o, idx)| to_sample(job, idx, &prompt_hash, o, options))
                .collect())
        })
        .collect();
    Ok((results, ledger.stats()))
}

/// K samples for a single query.
pub fn sample_trajectories(
    query: &Query,
    candidates: &CandidateSet,
    config: &SamplingConfig,
    backend: &dyn GenerationBackend,
    options: &SampleOptions,
) -> Result<Vec<TrajectorySample>, SampleError> {
    let inputs = [(query.clone(), candidates.clone())];
    let (mut results, _) = sample_queries(&inputs, config, backend, options)?;
    results.pop().expect("one input, one result")
}
