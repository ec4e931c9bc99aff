//! End-to-end plumbing: corpus/model/prompt/generation file formats, the
//! generation and evaluation runners, and the two sweep drivers.
//!
//! Everything here is deterministic given its inputs. Each (prompt, sample)
//! pair gets its own random source derived from the master seed, so outputs
//! are byte-identical whether prompts run in parallel or sequentially, and
//! records are always written in prompt order. Output files are written
//! temp-then-rename.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decoding::{derive_seed, generate_audited, GenerationConfig, RandomSource, StepAudit};
use crate::ensemble::{EnsembleMode, EnsembleSpec};
use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, read_lines, read_to_string};
use crate::metrics::{
    bucket_prompts, compute_report, score_records, AttributeScorer, GenerationRecord,
    MetricsReport, PromptBuckets,
};
use crate::ngram::{default_lambdas, NGramModel};
use crate::vocab::{tokenize, Vocabulary};

/// One prompt-file entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket: Option<String>,
}

// ---------------------------------------------------------------------------
// JSONL readers/writers
// ---------------------------------------------------------------------------

fn parse_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: T = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = String::new();
    for item in items {
        buf.push_str(&serde_json::to_string(item).expect("jsonl serialization cannot fail"));
        buf.push('\n');
    }
    atomic_write(path, buf.as_bytes())
}

pub fn read_prompts(path: &Path) -> Result<Vec<PromptRecord>> {
    let prompts: Vec<PromptRecord> = parse_jsonl(path)?;
    for (i, record) in prompts.iter().enumerate() {
        if tokenize(&record.prompt).is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "prompt is empty after tokenization".into(),
            });
        }
    }
    Ok(prompts)
}

pub fn write_prompts(path: &Path, prompts: &[PromptRecord]) -> Result<()> {
    write_jsonl(path, prompts)
}

pub fn read_generations(path: &Path) -> Result<Vec<GenerationRecord>> {
    let records: Vec<GenerationRecord> = parse_jsonl(path)?;
    for (i, record) in records.iter().enumerate() {
        if let Some(scores) = &record.scores {
            if scores.len() != record.continuations.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!(
                        "{} scores for {} continuations",
                        scores.len(),
                        record.continuations.len()
                    ),
                });
            }
        }
    }
    Ok(records)
}

pub fn write_generations(path: &Path, records: &[GenerationRecord]) -> Result<()> {
    write_jsonl(path, records)
}

/// One token per line, lowercased; blank lines ignored.
pub fn read_lexicon(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (i, line) in read_to_string(path)?.lines().enumerate() {
        let tok = line.trim().to_lowercase();
        if tok.is_empty() {
            continue;
        }
        if tok.chars().any(char::is_whitespace) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("lexicon entry {tok:?} contains whitespace"),
            });
        }
        out.push(tok);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Indexed map with a rayon fast path
// ---------------------------------------------------------------------------

/// Apply `f` to every item, in parallel when the `parallel` feature is
/// enabled. Output order always matches input order.
pub fn map_indexed<T, R, F>(items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items
            .par_iter()
            .enumerate()
            .map(|(i, item)| f(i, item))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(items, f)
    }
}

/// Sequential twin of [`map_indexed`], always available; the benchmark suite
/// compares the two.
pub fn map_indexed_seq<T, R, F>(items: &[T], f: F) -> Result<Vec<R>>
where
    F: Fn(usize, &T) -> Result<R>,
{
    items
        .iter()
        .enumerate()
        .map(|(i, item)| f(i, item))
        .collect()
}

// ---------------------------------------------------------------------------
// train-lm
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrainLmArgs {
    pub corpus: PathBuf,
    /// Corpus to build the vocabulary from; defaults to the training corpus.
    /// Models that will be ensembled together must be trained with the same
    /// vocabulary corpus.
    pub vocab_corpus: Option<PathBuf>,
    pub order: usize,
    pub lambdas: Option<Vec<f64>>,
    pub min_count: u64,
    pub max_tokens: Option<u64>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainSummary {
    pub trained_token_count: u64,
    pub vocab_size: usize,
}

pub fn run_train_lm(args: &TrainLmArgs) -> Result<TrainSummary> {
    let corpus = read_lines(&args.corpus)?;
    let vocab_corpus = match &args.vocab_corpus {
        Some(path) => read_lines(path)?,
        None => corpus.clone(),
    };
    let vocab = Vocabulary::build(&vocab_corpus, args.min_count)?.into_shared();
    let lambdas = args
        .lambdas
        .clone()
        .unwrap_or_else(|| default_lambdas(args.order));
    let model = NGramModel::train(&corpus, vocab, args.order, &lambdas, args.max_tokens)?;
    model.save(&args.out)?;
    Ok(TrainSummary {
        trained_token_count: model.trained_token_count(),
        vocab_size: model.vocab().len(),
    })
}

// ---------------------------------------------------------------------------
// make-prompts
// ---------------------------------------------------------------------------

// Split on runs of sentence terminators ([.?!]+) followed by whitespace; the
// terminators stay with their sentence.
fn split_sentences(doc: &str) -> Vec<String> {
    let chars: Vec<char> = doc.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if matches!(chars[i], '.' | '?' | '!') {
            let mut j = i;
            while j < chars.len() && matches!(chars[j], '.' | '?' | '!') {
                j += 1;
            }
            if j >= chars.len() || chars[j].is_whitespace() {
                let sentence: String = chars[start..j].iter().collect();
                if !sentence.trim().is_empty() {
                    sentences.push(sentence);
                }
                start = j;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    let tail: String = chars[start..].iter().collect();
    if !tail.trim().is_empty() {
        sentences.push(tail);
    }
    sentences
}

/// Harvest prompts: each sentence contributes its first half (floor) of
/// tokens, kept when that prompt length falls in `[min_len, max_len]`
/// inclusive. Input order is preserved.
pub fn run_make_prompts(
    corpus_path: &Path,
    min_len: usize,
    max_len: usize,
    out: &Path,
) -> Result<usize> {
    if min_len < 1 || max_len < min_len {
        return Err(Error::InvalidConfig(format!(
            "invalid prompt length bounds [{min_len}, {max_len}]"
        )));
    }
    let corpus = read_lines(corpus_path)?;
    let mut prompts = Vec::new();
    for doc in &corpus {
        for sentence in split_sentences(doc) {
            let tokens = tokenize(&sentence);
            let half = tokens.len() / 2;
            if half >= min_len && half <= max_len {
                prompts.push(PromptRecord {
                    prompt: tokens[..half].join(" "),
                    bucket: None,
                });
            }
        }
    }
    write_prompts(out, &prompts)?;
    Ok(prompts.len())
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// How the ensemble is assembled from the configured models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteeringMode {
    /// Experts and anti-experts steer the base model.
    Full,
    /// Only anti-experts; the base doubles as its own expert.
    AntiOnly,
    /// Decode directly from the first expert, no steering.
    ExpertOnly,
    /// Decode directly from the base model, no steering.
    BaseOnly,
    /// Full steering, but only the top-k base logits are observable.
    Partial { k: usize },
}

/// A fully resolved generation run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub base_model: PathBuf,
    pub expert_models: Vec<PathBuf>,
    pub anti_expert_models: Vec<PathBuf>,
    pub prompts: PathBuf,
    pub out: PathBuf,
    pub audit: Option<PathBuf>,
    pub mode: SteeringMode,
    pub alpha: f64,
    pub generation: GenerationConfig,
}

/// Per-sample audit trail: the supports seen at every generation step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRecord {
    pub prompt_index: usize,
    pub sample_index: usize,
    pub steps: Vec<StepAudit>,
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<Arc<NGramModel>>> {
    paths
        .iter()
        .map(|p| NGramModel::load(p).map(Arc::new))
        .collect()
}

/// Build the ensemble and effective generation config for a mode. Checks
/// that every participating model shares the base model's vocabulary.
pub fn build_ensemble(
    base: Arc<NGramModel>,
    experts: Vec<Arc<NGramModel>>,
    anti_experts: Vec<Arc<NGramModel>>,
    mode: SteeringMode,
    alpha: f64,
    generation: &GenerationConfig,
) -> Result<(EnsembleSpec, GenerationConfig)> {
    let mut config = generation.clone();
    config.partial_k = None;
    let spec = match mode {
        SteeringMode::Full => {
            EnsembleSpec::new(base, experts, anti_experts, alpha, EnsembleMode::Full)?
        }
        SteeringMode::AntiOnly => EnsembleSpec::new(
            base,
            Vec::new(),
            anti_experts,
            alpha,
            EnsembleMode::AntiOnly,
        )?,
        SteeringMode::ExpertOnly => {
            let expert = experts
                .first()
                .cloned()
                .ok_or_else(|| Error::InvalidConfig("expert-only mode requires --expert".into()))?;
            if expert.vocab().tokens() != base.vocab().tokens() {
                return Err(Error::VocabularyMismatch);
            }
            EnsembleSpec::unsteered(expert)
        }
        SteeringMode::BaseOnly => EnsembleSpec::unsteered(base),
        SteeringMode::Partial { k } => {
            config.partial_k = Some(k);
            EnsembleSpec::new(base, experts, anti_experts, alpha, EnsembleMode::Full)?
        }
    };
    config.validate()?;
    Ok((spec, config))
}

fn sample_one(
    spec: &EnsembleSpec,
    config: &GenerationConfig,
    prompt_ids: &[crate::vocab::TokenId],
    prompt_index: usize,
    sample_index: usize,
) -> Result<(String, Vec<StepAudit>)> {
    let seed = derive_seed(config.seed, prompt_index as u64, sample_index as u64);
    let mut rng = RandomSource::new(seed);
    let (ids, steps) = generate_audited(spec, prompt_ids, config, &mut rng)?;
    Ok((spec.base().vocab().decode(&ids)?, steps))
}

fn generate_records_inner<M>(
    spec: &EnsembleSpec,
    prompts: &[String],
    config: &GenerationConfig,
    mapper: M,
    with_audit: bool,
) -> Result<(Vec<GenerationRecord>, Vec<AuditRecord>)>
where
    M: Fn(
        &[String],
        &(dyn Fn(usize, &String) -> Result<(GenerationRecord, Vec<AuditRecord>)> + Sync),
    ) -> Result<Vec<(GenerationRecord, Vec<AuditRecord>)>>,
{
    config.validate()?;
    let per_prompt = mapper(prompts, &|prompt_index, prompt| {
        let prompt_ids = spec.base().vocab().encode(prompt);
        let mut continuations = Vec::with_capacity(config.num_samples);
        let mut audits = Vec::new();
        for sample_index in 0..config.num_samples {
            let (text, steps) = sample_one(spec, config, &prompt_ids, prompt_index, sample_index)?;
            continuations.push(text);
            if with_audit {
                audits.push(AuditRecord {
                    prompt_index,
                    sample_index,
                    steps,
                });
            }
        }
        Ok((
            GenerationRecord {
                prompt: prompt.clone(),
                continuations,
                scores: None,
            },
            audits,
        ))
    })?;

    let mut records = Vec::with_capacity(per_prompt.len());
    let mut audits = Vec::new();
    for (record, audit) in per_prompt {
        records.push(record);
        audits.extend(audit);
    }
    Ok((records, audits))
}

/// Sample `config.num_samples` continuations for every prompt. Prompt-level
/// work runs in parallel when the `parallel` feature is on; outputs are
/// identical either way.
pub fn generate_records(
    spec: &EnsembleSpec,
    prompts: &[String],
    config: &GenerationConfig,
) -> Result<Vec<GenerationRecord>> {
    generate_records_inner(
        spec,
        prompts,
        config,
        |items, f| map_indexed(items, f),
        false,
    )
    .map(|(records, _)| records)
}

/// Sequential twin of [`generate_records`].
pub fn generate_records_seq(
    spec: &EnsembleSpec,
    prompts: &[String],
    config: &GenerationConfig,
) -> Result<Vec<GenerationRecord>> {
    generate_records_inner(
        spec,
        prompts,
        config,
        |items, f| map_indexed_seq(items, f),
        false,
    )
    .map(|(records, _)| records)
}

/// [`generate_records`] plus per-step support audits.
pub fn generate_records_audited(
    spec: &EnsembleSpec,
    prompts: &[String],
    config: &GenerationConfig,
) -> Result<(Vec<GenerationRecord>, Vec<AuditRecord>)> {
    generate_records_inner(
        spec,
        prompts,
        config,
        |items, f| map_indexed(items, f),
        true,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerateSummary {
    pub num_prompts: usize,
    pub num_samples: usize,
}

pub fn run_generate(config: &ExperimentConfig) -> Result<GenerateSummary> {
    let base = Arc::new(NGramModel::load(&config.base_model)?);
    let experts = load_models(&config.expert_models)?;
    let anti_experts = load_models(&config.anti_expert_models)?;
    let (spec, gen_config) = build_ensemble(
        base,
        experts,
        anti_experts,
        config.mode,
        config.alpha,
        &config.generation,
    )?;
    let prompts: Vec<String> = read_prompts(&config.prompts)?
        .into_iter()
        .map(|p| p.prompt)
        .collect();

    if let Some(audit_path) = &config.audit {
        let (records, audits) = generate_records_audited(&spec, &prompts, &gen_config)?;
        write_generations(&config.out, &records)?;
        write_jsonl(audit_path, &audits)?;
    } else {
        let records = generate_records(&spec, &prompts, &gen_config)?;
        write_generations(&config.out, &records)?;
    }
    Ok(GenerateSummary {
        num_prompts: prompts.len(),
        num_samples: gen_config.num_samples,
    })
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub generations: PathBuf,
    pub pos_lexicon: PathBuf,
    pub neg_lexicon: PathBuf,
    pub eval_model: PathBuf,
    /// Stamped into the report so sweep rows are self-describing.
    pub alpha: f64,
    pub out: PathBuf,
    pub scored_out: Option<PathBuf>,
}

fn check_consistent_samples(records: &[GenerationRecord]) -> Result<usize> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let k = records[0].continuations.len();
    for (i, record) in records.iter().enumerate() {
        if record.continuations.len() != k {
            return Err(Error::InconsistentSampleCount {
                index: i,
                expected: k,
                found: record.continuations.len(),
            });
        }
    }
    Ok(k)
}

fn load_scorer(pos_lexicon: &Path, neg_lexicon: &Path) -> Result<AttributeScorer> {
    AttributeScorer::new(read_lexicon(pos_lexicon)?, read_lexicon(neg_lexicon)?)
}

fn write_report(report: &MetricsReport, out: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("report serialization cannot fail");
    atomic_write(out, json.as_bytes())?;
    let csv = format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row());
    atomic_write(&out.with_extension("csv"), csv.as_bytes())
}

pub fn run_evaluate(args: &EvaluateArgs) -> Result<MetricsReport> {
    let mut records = read_generations(&args.generations)?;
    check_consistent_samples(&records)?;
    let scorer = load_scorer(&args.pos_lexicon, &args.neg_lexicon)?;
    score_records(&scorer, &mut records);
    let eval_model = NGramModel::load(&args.eval_model)?;
    let report = compute_report(&records, &eval_model, args.alpha)?;
    write_report(&report, &args.out)?;
    if let Some(scored_out) = &args.scored_out {
        write_generations(scored_out, &records)?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SweepAlphaArgs {
    pub experiment: ExperimentConfig,
    pub alphas: Vec<f64>,
    pub pos_lexicon: PathBuf,
    pub neg_lexicon: PathBuf,
    pub eval_model: PathBuf,
    pub out_csv: PathBuf,
    /// When set, the scored generations for each grid point are kept here.
    pub keep_dir: Option<PathBuf>,
}

/// Run generate+evaluate at each alpha in grid order and emit one CSV row
/// per point.
pub fn run_sweep_alpha(args: &SweepAlphaArgs) -> Result<Vec<MetricsReport>> {
    if args.alphas.is_empty() {
        return Err(Error::InvalidConfig("alpha grid is empty".into()));
    }
    let base = Arc::new(NGramModel::load(&args.experiment.base_model)?);
    let experts = load_models(&args.experiment.expert_models)?;
    let anti_experts = load_models(&args.experiment.anti_expert_models)?;
    let prompts: Vec<String> = read_prompts(&args.experiment.prompts)?
        .into_iter()
        .map(|p| p.prompt)
        .collect();
    let scorer = load_scorer(&args.pos_lexicon, &args.neg_lexicon)?;
    let eval_model = NGramModel::load(&args.eval_model)?;
    if let Some(dir) = &args.keep_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::io(format!("mkdir {}", dir.display()), e))?;
    }

    let mut reports = Vec::with_capacity(args.alphas.len());
    for &alpha in &args.alphas {
        let run = || -> Result<MetricsReport> {
            let (spec, gen_config) = build_ensemble(
                base.clone(),
                experts.clone(),
                anti_experts.clone(),
                args.experiment.mode,
                alpha,
                &args.experiment.generation,
            )?;
            let mut records = generate_records(&spec, &prompts, &gen_config)?;
            score_records(&scorer, &mut records);
            if let Some(dir) = &args.keep_dir {
                write_generations(
                    &dir.join(format!("generations_alpha_{alpha}.jsonl")),
                    &records,
                )?;
            }
            compute_report(&records, &eval_model, alpha)
        };
        reports.push(run().map_err(|e| Error::SweepAlpha {
            alpha,
            source: Box::new(e),
        })?);
    }

    let mut csv = String::from(MetricsReport::CSV_HEADER);
    csv.push('\n');
    for report in &reports {
        csv.push_str(&report.csv_row());
        csv.push('\n');
    }
    atomic_write(&args.out_csv, csv.as_bytes())?;
    Ok(reports)
}

/// The reference token budgets, scaled for desk runs.
pub fn default_budgets(scale: f64) -> Vec<u64> {
    [40_960u64, 204_800, 1_024_000, 5_120_000, 10_240_000]
        .iter()
        .map(|&b| ((b as f64 * scale) as u64).max(1))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepDatasetArgs {
    pub base_model: PathBuf,
    /// Expert training corpus; when absent only the anti-expert is retrained.
    pub expert_corpus: Option<PathBuf>,
    pub anti_expert_corpus: PathBuf,
    pub order: usize,
    pub lambdas: Option<Vec<f64>>,
    pub budgets: Vec<u64>,
    pub prompts: PathBuf,
    pub mode: SteeringMode,
    pub alpha: f64,
    pub generation: GenerationConfig,
    pub pos_lexicon: PathBuf,
    pub neg_lexicon: PathBuf,
    pub eval_model: PathBuf,
    pub out_csv: PathBuf,
}

/// Retrain the (anti-)experts at each token budget, then generate and
/// evaluate; one CSV row per budget, budget column first.
pub fn run_sweep_dataset_size(args: &SweepDatasetArgs) -> Result<Vec<(u64, MetricsReport)>> {
    if args.budgets.is_empty() {
        return Err(Error::InvalidConfig("budget list is empty".into()));
    }
    let base = Arc::new(NGramModel::load(&args.base_model)?);
    let vocab = base.vocab().clone();
    let lambdas = args
        .lambdas
        .clone()
        .unwrap_or_else(|| default_lambdas(args.order));
    let anti_corpus = read_lines(&args.anti_expert_corpus)?;
    let expert_corpus = args.expert_corpus.as_deref().map(read_lines).transpose()?;
    let prompts: Vec<String> = read_prompts(&args.prompts)?
        .into_iter()
        .map(|p| p.prompt)
        .collect();
    let scorer = load_scorer(&args.pos_lexicon, &args.neg_lexicon)?;
    let eval_model = NGramModel::load(&args.eval_model)?;

    let corpus_tokens = |corpus: &[String]| -> u64 {
        corpus
            .iter()
            .map(|doc| vocab.encode(doc).len() as u64)
            .sum()
    };
    let available = corpus_tokens(&anti_corpus);

    let mut rows = Vec::with_capacity(args.budgets.len());
    for &budget in &args.budgets {
        let run = || -> Result<MetricsReport> {
            if budget > available {
                log::warn!(
                    "budget {budget} exceeds the anti-expert corpus ({available} tokens); clamping"
                );
            }
            let anti = Arc::new(NGramModel::train(
                &anti_corpus,
                vocab.clone(),
                args.order,
                &lambdas,
                Some(budget),
            )?);
            let experts = match &expert_corpus {
                Some(corpus) => vec![Arc::new(NGramModel::train(
                    corpus,
                    vocab.clone(),
                    args.order,
                    &lambdas,
                    Some(budget),
                )?)],
                None => Vec::new(),
            };
            let (spec, gen_config) = build_ensemble(
                base.clone(),
                experts,
                vec![anti],
                args.mode,
                args.alpha,
                &args.generation,
            )?;
            let mut records = generate_records(&spec, &prompts, &gen_config)?;
            score_records(&scorer, &mut records);
            compute_report(&records, &eval_model, args.alpha)
        };
        rows.push((
            budget,
            run().map_err(|e| Error::SweepBudget {
                budget,
                source: Box::new(e),
            })?,
        ));
    }

    let mut csv = format!("budget,{}\n", MetricsReport::CSV_HEADER);
    for (budget, report) in &rows {
        csv.push_str(&format!("{budget},{}\n", report.csv_row()));
    }
    atomic_write(&args.out_csv, csv.as_bytes())?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// bucket-prompts
// ---------------------------------------------------------------------------

/// Split prompts into neutral/positive/negative buckets from scored base
/// model generations; writes one prompt file per bucket.
pub fn run_bucket_prompts(
    generations: &Path,
    k: Option<usize>,
    out_dir: &Path,
) -> Result<PromptBuckets> {
    let records = read_generations(generations)?;
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let k = k.unwrap_or_else(|| records[0].continuations.len());
    let buckets = bucket_prompts(&records, k)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(format!("mkdir {}", out_dir.display()), e))?;
    for (name, prompts) in [
        ("neutral", &buckets.neutral),
        ("positive", &buckets.positive),
        ("negative", &buckets.negative),
    ] {
        let records: Vec<PromptRecord> = prompts
            .iter()
            .map(|p| PromptRecord {
                prompt: p.clone(),
                bucket: Some(name.to_string()),
            })
            .collect();
        write_prompts(&out_dir.join(format!("{name}.jsonl")), &records)?;
    }
    Ok(buckets)
}
