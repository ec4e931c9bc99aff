//! Interpolated n-gram language models: the trainable source of every logit
//! vector consumed by the ensemble, and the fluency evaluator.
//!
//! Smoothing is linear interpolation across orders with a uniform floor:
//! `P(v | ctx) = (sum_i lambda_i * MLE_i(v | ctx) + lambda_u / |V|) / D`,
//! where orders whose context was never observed drop out of the mixture and
//! `D` renormalizes over the remaining weights. With a positive floor weight
//! every probability is strictly positive, which the logit-ratio steering
//! math depends on.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::vocab::{TokenId, Vocabulary};

/// Sentinel for an excluded vocabulary entry (conceptually negative infinity).
/// Models never emit it; only truncation introduces it.
pub const MASKED: f64 = f64::NEG_INFINITY;

/// Dense per-token log scores over the full vocabulary. Entries are either
/// finite or [`MASKED`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    values: Vec<f64>,
}

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !values.iter().any(|v| v.is_finite()) {
            return Err(Error::EmptySupport);
        }
        if let Some(i) = values
            .iter()
            .position(|v| v.is_nan() || *v == f64::INFINITY)
        {
            return Err(Error::NonFiniteLogit { index: i });
        }
        Ok(LogitVector { values })
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        LogitVector { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_masked(&self, index: usize) -> bool {
        self.values[index] == MASKED
    }

    pub fn get(&self, id: TokenId) -> Option<f64> {
        self.values.get(id.idx()).copied()
    }
}

#[derive(Debug, Clone, Default)]
struct CountTable {
    next: HashMap<TokenId, u64>,
    total: u64,
}

/// Order-n interpolated language model over a shared [`Vocabulary`].
///
/// Immutable after construction; concurrent queries are safe.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    // Highest order first, uniform floor last: lambdas[0] weights order n,
    // lambdas[order-1] weights the unigram, lambdas[order] the uniform floor.
    lambdas: Vec<f64>,
    vocab: Arc<Vocabulary>,
    counts: HashMap<Vec<TokenId>, CountTable>,
    trained_token_count: u64,
}

/// Interpolation weights used when none are given: uniform floor 0.1, the
/// rest split across orders n..1 proportional to (order + 1). For order 3
/// this is (0.4, 0.3, 0.2, 0.1).
pub fn default_lambdas(order: usize) -> Vec<f64> {
    assert!(order >= 1);
    let total: f64 = (1..=order).map(|i| (i + 1) as f64).sum();
    let mut out: Vec<f64> = (1..=order)
        .rev()
        .map(|i| 0.9 * (i + 1) as f64 / total)
        .collect();
    out.push(0.1);
    out
}

fn validate_lambdas(order: usize, lambdas: &[f64]) -> Result<()> {
    if order < 1 {
        return Err(Error::InvalidConfig("order must be >= 1".into()));
    }
    if lambdas.len() != order + 1 {
        return Err(Error::InvalidConfig(format!(
            "expected {} interpolation weights for order {order} (orders n..1 plus uniform), got {}",
            order + 1,
            lambdas.len()
        )));
    }
    if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::InvalidConfig(
            "interpolation weights must be finite and non-negative".into(),
        ));
    }
    let sum: f64 = lambdas.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "interpolation weights must sum to 1 (got {sum})"
        )));
    }
    Ok(())
}

impl NGramModel {
    /// Train on a corpus of documents, each wrapped as `BOS^(n-1) ... EOS`.
    ///
    /// With `max_tokens` set, training consumes exactly that many corpus
    /// tokens, truncating the final document mid-way; BOS/EOS wrapping never
    /// counts against the budget.
    pub fn train(
        corpus: &[String],
        vocab: Arc<Vocabulary>,
        order: usize,
        lambdas: &[f64],
        max_tokens: Option<u64>,
    ) -> Result<Self> {
        validate_lambdas(order, lambdas)?;
        if corpus.is_empty() || max_tokens == Some(0) {
            return Err(Error::NoTrainingData);
        }

        let mut counts: HashMap<Vec<TokenId>, CountTable> = HashMap::new();
        let mut consumed: u64 = 0;
        for doc in corpus {
            let remaining = max_tokens.map(|m| m - consumed);
            if remaining == Some(0) {
                break;
            }
            let mut tokens = vocab.encode(doc);
            if let Some(rem) = remaining {
                if (tokens.len() as u64) > rem {
                    tokens.truncate(rem as usize);
                }
            }
            consumed += tokens.len() as u64;

            let mut seq = vec![TokenId::BOS; order - 1];
            seq.extend_from_slice(&tokens);
            seq.push(TokenId::EOS);
            for t in (order - 1)..seq.len() {
                let target = seq[t];
                for ctx_len in 0..order {
                    let ctx = seq[t - ctx_len..t].to_vec();
                    let table = counts.entry(ctx).or_default();
                    *table.next.entry(target).or_insert(0) += 1;
                    table.total += 1;
                }
            }
        }

        Ok(NGramModel {
            order,
            lambdas: lambdas.to_vec(),
            vocab,
            counts,
            trained_token_count: consumed,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn trained_token_count(&self) -> u64 {
        self.trained_token_count
    }

    fn uniform_weight(&self) -> f64 {
        self.lambdas[self.order]
    }

    fn lambda_for_order(&self, i: usize) -> f64 {
        self.lambdas[self.order - i]
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        let size = self.vocab.len();
        for &id in ids {
            if id.idx() >= size {
                return Err(Error::InvalidTokenId {
                    id: id.get(),
                    vocab_size: size,
                });
            }
        }
        Ok(())
    }

    // Last (order-1) tokens, left-padded with BOS to match the training wrap.
    fn effective_context(&self, context: &[TokenId]) -> Vec<TokenId> {
        let need = self.order - 1;
        let take = context.len().min(need);
        let mut eff = vec![TokenId::BOS; need - take];
        eff.extend_from_slice(&context[context.len() - take..]);
        eff
    }

    /// Log-probabilities of every vocabulary entry after the given context.
    /// With a positive uniform-floor weight all entries are finite.
    pub fn logits(&self, context: &[TokenId]) -> Result<LogitVector> {
        self.check_ids(context)?;
        let size = self.vocab.len();
        let eff = self.effective_context(context);

        let mut acc = vec![0.0f64; size];
        let mut denom = self.uniform_weight();
        for i in 1..=self.order {
            let ctx = &eff[eff.len() - (i - 1)..];
            if let Some(table) = self.counts.get(ctx) {
                let w = self.lambda_for_order(i);
                denom += w;
                let total = table.total as f64;
                for (&tok, &c) in &table.next {
                    acc[tok.idx()] += w * (c as f64 / total);
                }
            }
        }

        let uniform_term = self.uniform_weight() / size as f64;
        let values = acc
            .into_iter()
            .map(|a| ((a + uniform_term) / denom).ln())
            .collect();
        Ok(LogitVector::from_raw(values))
    }

    /// Interpolated probability of a single next token; the direct-lookup
    /// twin of [`NGramModel::logits`].
    pub fn token_prob(&self, context: &[TokenId], token: TokenId) -> Result<f64> {
        self.check_ids(context)?;
        self.check_ids(&[token])?;
        let eff = self.effective_context(context);

        let mut acc = 0.0f64;
        let mut denom = self.uniform_weight();
        for i in 1..=self.order {
            let ctx = &eff[eff.len() - (i - 1)..];
            if let Some(table) = self.counts.get(ctx) {
                let w = self.lambda_for_order(i);
                denom += w;
                if let Some(&c) = table.next.get(&token) {
                    acc += w * (c as f64 / table.total as f64);
                }
            }
        }
        let uniform_term = self.uniform_weight() / self.vocab.len() as f64;
        Ok((acc + uniform_term) / denom)
    }

    /// `exp(-(1/T) * sum_t ln P(x_t | x_<t))` over the given ids, with BOS
    /// padding for the opening context.
    pub fn perplexity(&self, ids: &[TokenId]) -> Result<f64> {
        if ids.is_empty() {
            return Err(Error::EmptySequence);
        }
        let mut log_sum = 0.0f64;
        for t in 0..ids.len() {
            log_sum += self.token_prob(&ids[..t], ids[t])?.ln();
        }
        Ok((-(log_sum / ids.len() as f64)).exp())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut counts: BTreeMap<String, BTreeMap<u32, u64>> = BTreeMap::new();
        for (ctx, table) in &self.counts {
            let key = ctx
                .iter()
                .map(|id| id.get().to_string())
                .collect::<Vec<_>>()
                .join(" ");
            let entry = counts.entry(key).or_default();
            for (&tok, &c) in &table.next {
                entry.insert(tok.get(), c);
            }
        }
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION,
            order: self.order,
            lambda: self.lambdas.clone(),
            vocab: VocabSection {
                tokens: self.vocab.tokens().to_vec(),
            },
            counts,
            trained_token_count: self.trained_token_count,
        };
        let json = serde_json::to_string(&file).expect("model serialization cannot fail");
        fsutil::atomic_write(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fsutil::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: file.version,
            });
        }
        let vocab = Vocabulary::from_tokens(file.vocab.tokens)?.into_shared();
        validate_lambdas(file.order, &file.lambda)?;

        let mut counts: HashMap<Vec<TokenId>, CountTable> = HashMap::new();
        for (key, next) in file.counts {
            let ctx = parse_context_key(path, &key)?;
            if ctx.len() > file.order - 1 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 0,
                    message: format!("context key {key:?} longer than order allows"),
                });
            }
            let mut table = CountTable::default();
            for (tok, c) in next {
                if tok as usize >= vocab.len() {
                    return Err(Error::InvalidTokenId {
                        id: tok,
                        vocab_size: vocab.len(),
                    });
                }
                table.next.insert(TokenId::new(tok), c);
                table.total += c;
            }
            counts.insert(ctx, table);
        }

        let model = NGramModel {
            order: file.order,
            lambdas: file.lambda,
            vocab,
            counts,
            trained_token_count: file.trained_token_count,
        };
        model.check_ids(&counts_ids(&model.counts))?;
        Ok(model)
    }
}

fn counts_ids(counts: &HashMap<Vec<TokenId>, CountTable>) -> Vec<TokenId> {
    counts.keys().flatten().copied().collect()
}

fn parse_context_key(path: &Path, key: &str) -> Result<Vec<TokenId>> {
    if key.is_empty() {
        return Ok(Vec::new());
    }
    key.split(' ')
        .map(|part| {
            part.parse::<u32>()
                .map(TokenId::new)
                .map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: 0,
                    message: format!("malformed context key {key:?}"),
                })
        })
        .collect()
}

const MODEL_FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u64,
    order: usize,
    lambda: Vec<f64>,
    vocab: VocabSection,
    counts: BTreeMap<String, BTreeMap<u32, u64>>,
    trained_token_count: u64,
}

#[derive(Serialize, Deserialize)]
struct VocabSection {
    tokens: Vec<String>,
}
