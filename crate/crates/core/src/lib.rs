//! Building blocks for length-regularized self-distillation of reasoning
//! listwise rerankers: sample trajectories, parse and score them, keep the
//! concise accurate ones, and measure how much of a trace is redundant.

pub mod analysis;
pub mod distiller;
pub mod metrics;
pub mod model;
pub mod parser;
pub mod persistence;
pub mod sampler;

pub use model::{
    CandidateDoc, CandidateSet, DistillationRecord, DocId, EvalReport, FinishReason, LengthBucket,
    ModelError, QueryEval, Qrels, Query, QueryFilterStats, Ranking, RedundancyMetrics, RequestMode,
    SamplingConfig, SplitMode, TokenLen, TokenProvenance, TrajectorySample,
};
