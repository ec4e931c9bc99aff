use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use steergen::pipeline::{
    self, EvaluateArgs, ExperimentConfig, SteeringMode, SweepAlphaArgs, SweepDatasetArgs,
    TrainLmArgs,
};
use steergen::{GenerationConfig, TruncationConfig};

#[derive(Parser)]
#[command(
    name = "steergen",
    about = "Steer n-gram language model generation with expert/anti-expert ensembles",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    AntiOnly,
    ExpertOnly,
    BaseOnly,
    Partial,
}

#[derive(Args, Clone)]
struct GenerationFlags {
    /// Base model file
    #[arg(long)]
    base: PathBuf,

    /// Expert model file (repeatable)
    #[arg(long = "expert")]
    experts: Vec<PathBuf>,

    /// Anti-expert model file (repeatable)
    #[arg(long = "anti-expert")]
    anti_experts: Vec<PathBuf>,

    /// Prompts file (JSONL, one {"prompt": ...} per line)
    #[arg(long)]
    prompts: PathBuf,

    /// Steering strength; 0 recovers the base model, negative reverses
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha: f64,

    #[arg(long, value_enum, default_value = "full")]
    mode: ModeArg,

    /// Observable top-k logits in partial mode
    #[arg(long, default_value_t = 100)]
    partial_k: usize,

    /// Nucleus truncation threshold
    #[arg(long, default_value_t = 0.9, conflicts_with = "top_k")]
    top_p: f64,

    /// Top-k truncation instead of top-p
    #[arg(long)]
    top_k: Option<usize>,

    /// Continuations sampled per prompt
    #[arg(long, default_value_t = 25)]
    num_samples: usize,

    /// Maximum continuation length in tokens
    #[arg(long, default_value_t = 20)]
    max_len: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl GenerationFlags {
    fn experiment(&self, out: PathBuf, audit: Option<PathBuf>) -> ExperimentConfig {
        let truncation = match self.top_k {
            Some(k) => TruncationConfig::TopK(k),
            None => TruncationConfig::TopP(self.top_p),
        };
        ExperimentConfig {
            base_model: self.base.clone(),
            expert_models: self.experts.clone(),
            anti_expert_models: self.anti_experts.clone(),
            prompts: self.prompts.clone(),
            out,
            audit,
            mode: match self.mode {
                ModeArg::Full => SteeringMode::Full,
                ModeArg::AntiOnly => SteeringMode::AntiOnly,
                ModeArg::ExpertOnly => SteeringMode::ExpertOnly,
                ModeArg::BaseOnly => SteeringMode::BaseOnly,
                ModeArg::Partial => SteeringMode::Partial { k: self.partial_k },
            },
            alpha: self.alpha,
            generation: GenerationConfig {
                num_samples: self.num_samples,
                max_len: self.max_len,
                truncation,
                partial_k: None,
                seed: self.seed,
            },
        }
    }
}

#[derive(Args, Clone)]
struct EvalFlags {
    /// Positive-attribute lexicon (one token per line)
    #[arg(long)]
    pos_lexicon: PathBuf,

    /// Negative-attribute lexicon (one token per line)
    #[arg(long)]
    neg_lexicon: PathBuf,

    /// Held-out fluency evaluation model
    #[arg(long)]
    eval_model: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train an interpolated n-gram language model on a corpus
    TrainLm {
        /// Training corpus (one document per line)
        #[arg(long)]
        corpus: PathBuf,

        /// Corpus to build the vocabulary from (defaults to --corpus); use
        /// one shared vocabulary corpus for models that will be ensembled
        #[arg(long)]
        vocab_corpus: Option<PathBuf>,

        #[arg(long, default_value_t = 3)]
        order: usize,

        /// Comma-separated interpolation weights, highest order first,
        /// uniform floor last (order+1 values)
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,

        /// Minimum corpus frequency for vocabulary membership
        #[arg(long, default_value_t = 1)]
        min_count: u64,

        /// Stop training after exactly this many corpus tokens
        #[arg(long)]
        max_tokens: Option<u64>,

        #[arg(long)]
        out: PathBuf,
    },

    /// Harvest generation prompts from a corpus (first half of each sentence)
    MakePrompts {
        #[arg(long)]
        corpus: PathBuf,

        #[arg(long, default_value_t = 4)]
        min_len: usize,

        #[arg(long, default_value_t = 10)]
        max_len: usize,

        #[arg(long)]
        out: PathBuf,
    },

    /// Sample steered continuations for every prompt
    Generate {
        #[command(flatten)]
        generation: GenerationFlags,

        #[arg(long)]
        out: PathBuf,

        /// Also record per-step candidate supports to this JSONL file
        #[arg(long)]
        audit: Option<PathBuf>,
    },

    /// Score generations and write the metrics report (JSON + CSV)
    Evaluate {
        /// Generations file produced by `generate`
        #[arg(long)]
        generations: PathBuf,

        #[command(flatten)]
        eval: EvalFlags,

        /// Alpha value stamped into the report
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        alpha: f64,

        #[arg(long)]
        out: PathBuf,

        /// Also write the generations with scores attached
        #[arg(long)]
        scored_out: Option<PathBuf>,
    },

    /// Generate and evaluate across an alpha grid; one CSV row per alpha
    SweepAlpha {
        #[command(flatten)]
        generation: GenerationFlags,

        #[command(flatten)]
        eval: EvalFlags,

        /// Comma-separated alpha grid
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        alphas: Vec<f64>,

        #[arg(long)]
        out: PathBuf,

        /// Keep per-alpha scored generations in this directory
        #[arg(long)]
        keep_dir: Option<PathBuf>,
    },

    /// Retrain (anti-)experts at several token budgets and evaluate each
    SweepDatasetSize {
        #[command(flatten)]
        generation: GenerationFlags,

        #[command(flatten)]
        eval: EvalFlags,

        /// Expert training corpus (optional; anti-expert only without it)
        #[arg(long)]
        expert_corpus: Option<PathBuf>,

        /// Anti-expert training corpus
        #[arg(long)]
        anti_expert_corpus: PathBuf,

        #[arg(long, default_value_t = 3)]
        order: usize,

        /// Interpolation weights for the retrained models
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,

        /// Comma-separated token budgets (default: reference budgets x scale)
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<u64>>,

        /// Scale applied to the default budget list
        #[arg(long, default_value_t = 0.01)]
        scale: f64,

        #[arg(long)]
        out: PathBuf,
    },

    /// Bucket prompts by how the base model continues them
    BucketPrompts {
        /// Scored generations from the base model
        #[arg(long)]
        generations: PathBuf,

        /// Continuations per prompt (default: inferred from the first record)
        #[arg(long)]
        k: Option<usize>,

        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> steergen::Result<()> {
    match cli.command {
        Command::TrainLm {
            corpus,
            vocab_corpus,
            order,
            lambdas,
            min_count,
            max_tokens,
            out,
        } => {
            let summary = pipeline::run_train_lm(&TrainLmArgs {
                corpus,
                vocab_corpus,
                order,
                lambdas,
                min_count,
                max_tokens,
                out,
            })?;
            println!(
                "trained_token_count={} vocab_size={}",
                summary.trained_token_count, summary.vocab_size
            );
        }
        Command::MakePrompts {
            corpus,
            min_len,
            max_len,
            out,
        } => {
            let count = pipeline::run_make_prompts(&corpus, min_len, max_len, &out)?;
            println!("prompts={count}");
        }
        Command::Generate {
            generation,
            out,
            audit,
        } => {
            let summary = pipeline::run_generate(&generation.experiment(out, audit))?;
            println!(
                "prompts={} samples_per_prompt={}",
                summary.num_prompts, summary.num_samples
            );
        }
        Command::Evaluate {
            generations,
            eval,
            alpha,
            out,
            scored_out,
        } => {
            let report = pipeline::run_evaluate(&EvaluateArgs {
                generations,
                pos_lexicon: eval.pos_lexicon,
                neg_lexicon: eval.neg_lexicon,
                eval_model: eval.eval_model,
                alpha,
                out,
                scored_out,
            })?;
            println!("{}", report.csv_row());
        }
        Command::SweepAlpha {
            generation,
            eval,
            alphas,
            out,
            keep_dir,
        } => {
            let experiment = generation.experiment(PathBuf::new(), None);
            let reports = pipeline::run_sweep_alpha(&SweepAlphaArgs {
                experiment,
                alphas,
                pos_lexicon: eval.pos_lexicon,
                neg_lexicon: eval.neg_lexicon,
                eval_model: eval.eval_model,
                out_csv: out,
                keep_dir,
            })?;
            println!("rows={}", reports.len());
        }
        Command::SweepDatasetSize {
            generation,
            eval,
            expert_corpus,
            anti_expert_corpus,
            order,
            lambdas,
            budgets,
            scale,
            out,
        } => {
            let experiment = generation.experiment(PathBuf::new(), None);
            let budgets = budgets.unwrap_or_else(|| pipeline::default_budgets(scale));
            let rows = pipeline::run_sweep_dataset_size(&SweepDatasetArgs {
                base_model: experiment.base_model,
                expert_corpus,
                anti_expert_corpus,
                order,
                lambdas,
                budgets,
                prompts: experiment.prompts,
                mode: experiment.mode,
                alpha: experiment.alpha,
                generation: experiment.generation,
                pos_lexicon: eval.pos_lexicon,
                neg_lexicon: eval.neg_lexicon,
                eval_model: eval.eval_model,
                out_csv: out,
            })?;
            println!("rows={}", rows.len());
        }
        Command::BucketPrompts {
            generations,
            k,
            out_dir,
        } => {
            let buckets = pipeline::run_bucket_prompts(&generations, k, &out_dir)?;
            println!(
                "neutral={} positive={} negative={}",
                buckets.neutral.len(),
                buckets.positive.len(),
                buckets.negative.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(2)
        }
    }
}
