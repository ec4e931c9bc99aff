//! Decoding-time steering for n-gram language models.
//!
//! A base language model's next-token logits are combined with expert and
//! anti-expert language models in a product of experts: tokens the experts
//! like and the anti-experts dislike gain probability, within a candidate set
//! fixed by the base model's own top-p/top-k truncation. The crate bundles
//! the full desk-scale workflow: word-level vocabularies, interpolated n-gram
//! training, the steered sampling loop, attribute/fluency/diversity metrics,
//! and a CLI pipeline with sweep drivers.
//!
//! Prompt-level work is data-parallel via rayon (the default `parallel`
//! feature); disabling it falls back to sequential execution with identical
//! output bytes.

pub mod decoding;
pub mod ensemble;
mod error;
mod fsutil;
pub mod metrics;
pub mod ngram;
pub mod pipeline;
pub mod vocab;

pub use decoding::{
    derive_seed, generate, generate_audited, next_distribution, nucleus_set, partial_logits_view,
    sample, truncate, GenerationConfig, RandomSource, StepAudit, TruncationConfig,
};
pub use ensemble::{
    combine, combine_anti_only, ratio_form, softmax, EnsembleMode, EnsembleSpec, ProbabilityVector,
};
pub use error::{Error, Result};
pub use metrics::{AttributeScorer, GenerationRecord, MetricsReport, PromptBuckets};
pub use ngram::{default_lambdas, LogitVector, NGramModel, MASKED};
pub use vocab::{tokenize, TokenId, Vocabulary};
