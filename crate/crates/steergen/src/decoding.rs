//! Base-distribution truncation, sampling, and the autoregressive loop.
//!
//! The candidate set is always computed from the base model's distribution
//! alone; experts reweight candidates but can never reintroduce a token the
//! truncation removed.

use serde::{Deserialize, Serialize};

use crate::ensemble::{softmax, EnsembleSpec, ProbabilityVector};
use crate::error::{Error, Result};
use crate::ngram::{LogitVector, MASKED};
use crate::vocab::TokenId;

/// How the base distribution is truncated before steering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TruncationConfig {
    /// Smallest prefix of tokens (by descending probability, ties toward the
    /// lower id) whose cumulative probability reaches `p`.
    TopP(f64),
    /// First `k` tokens in that same order.
    TopK(usize),
    /// Keep every token with nonzero probability.
    None,
}

impl TruncationConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TruncationConfig::TopP(p) => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "top-p must be in (0, 1], got {p}"
                    )));
                }
            }
            TruncationConfig::TopK(k) => {
                if k < 1 {
                    return Err(Error::InvalidConfig("top-k must be >= 1".into()));
                }
            }
            TruncationConfig::None => {}
        }
        Ok(())
    }
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig::TopP(0.9)
    }
}

/// Sampling-run parameters. The defaults are the canonical operating point:
/// 25 samples per prompt, top-p 0.9, up to 20 tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub num_samples: usize,
    pub max_len: usize,
    pub truncation: TruncationConfig,
    /// When set, only the `k` highest base logits are observable at each
    /// step (API-restricted decoding); applied before the top-p/top-k step.
    pub partial_k: Option<usize>,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            num_samples: 25,
            max_len: 20,
            truncation: TruncationConfig::TopP(0.9),
            partial_k: None,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples < 1 {
            return Err(Error::InvalidConfig("num_samples must be >= 1".into()));
        }
        if self.max_len < 1 {
            return Err(Error::InvalidConfig("max_len must be >= 1".into()));
        }
        if self.partial_k == Some(0) {
            return Err(Error::InvalidConfig("partial-k must be >= 1".into()));
        }
        self.truncation.validate()
    }
}

/// Deterministic, platform-independent random source: xoshiro256** state
/// seeded through splitmix64. Identical seeds produce identical draw
/// sequences everywhere; the generator is part of the output contract, so
/// golden generation files stay portable.
#[derive(Debug, Clone)]
pub struct RandomSource {
    state: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        let mut s = seed;
        let state = [
            splitmix64(&mut s),
            splitmix64(&mut s),
            splitmix64(&mut s),
            splitmix64(&mut s),
        ];
        RandomSource { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Seed for one (prompt, sample) pair: the master seed xored with a
/// splitmix64 hash of the packed pair. Pairs map to distinct seeds for any
/// prompt/sample indices below 2^32, so results are independent of the order
/// in which prompts are processed.
pub fn derive_seed(master: u64, prompt_index: u64, sample_index: u64) -> u64 {
    let mut packed = (prompt_index << 32) ^ sample_index;
    master ^ splitmix64(&mut packed)
}

// Token ids ordered by descending probability, ties toward the lower id.
fn by_descending_probability(p: &ProbabilityVector) -> Vec<usize> {
    let values = p.values();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap()
            .then_with(|| a.cmp(&b))
    });
    order
}

/// The candidate token set for a normalized base distribution, returned in
/// ascending id order.
pub fn nucleus_set(p_base: &ProbabilityVector, config: &TruncationConfig) -> Vec<TokenId> {
    let order = by_descending_probability(p_base);
    let values = p_base.values();
    let mut kept: Vec<usize> = Vec::new();
    match *config {
        TruncationConfig::TopP(p) => {
            let mut cumulative = 0.0f64;
            for &i in &order {
                if values[i] == 0.0 {
                    break;
                }
                kept.push(i);
                cumulative += values[i];
                if cumulative >= p {
                    break;
                }
            }
        }
        TruncationConfig::TopK(k) => {
            kept.extend(order.iter().take(k));
        }
        TruncationConfig::None => {
            kept.extend(order.iter().filter(|&&i| values[i] > 0.0));
        }
    }
    kept.sort_unstable();
    kept.into_iter().map(|i| TokenId::new(i as u32)).collect()
}

/// Mask every logit outside `kept`.
pub fn truncate(z: &LogitVector, kept: &[TokenId]) -> Result<LogitVector> {
    if kept.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut keep_mask = vec![false; z.len()];
    for &id in kept {
        if id.idx() >= z.len() {
            return Err(Error::InvalidTokenId {
                id: id.get(),
                vocab_size: z.len(),
            });
        }
        keep_mask[id.idx()] = true;
    }
    let values = z
        .values()
        .iter()
        .zip(&keep_mask)
        .map(|(&v, &keep)| if keep { v } else { MASKED })
        .collect();
    Ok(LogitVector::from_raw(values))
}

/// Keep only the `k` highest entries (ties toward the lower id), masking the
/// rest. Models the API setting where only the top-k log-probabilities are
/// observable. `k >= 1`; `k >= len` is the identity.
pub fn partial_logits_view(z: &LogitVector, k: usize) -> LogitVector {
    assert!(k >= 1, "partial view requires k >= 1");
    if k >= z.len() {
        return z.clone();
    }
    let values = z.values();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap()
            .then_with(|| a.cmp(&b))
    });
    let mut out = vec![MASKED; values.len()];
    for &i in order.iter().take(k) {
        out[i] = values[i];
    }
    LogitVector::from_raw(out)
}

/// Inverse-CDF sampling in token-id order over the nonzero entries: returns
/// the first token whose cumulative probability exceeds `u`.
pub fn sample_at(p: &ProbabilityVector, u: f64) -> TokenId {
    let mut cumulative = 0.0f64;
    let mut last_nonzero = 0usize;
    for (i, &prob) in p.values().iter().enumerate() {
        if prob == 0.0 {
            continue;
        }
        last_nonzero = i;
        cumulative += prob;
        if cumulative > u {
            return TokenId::new(i as u32);
        }
    }
    // Rounding left cumulative just below 1; fall back to the last candidate.
    TokenId::new(last_nonzero as u32)
}

pub fn sample(p: &ProbabilityVector, rng: &mut RandomSource) -> TokenId {
    sample_at(p, rng.next_f64())
}

/// Supports recorded for one generation step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepAudit {
    pub step: usize,
    /// Top-k observability set, when a partial view was applied.
    pub partial_support: Option<Vec<TokenId>>,
    /// Final candidate set the token was sampled from.
    pub support: Vec<TokenId>,
    pub token: TokenId,
}

// One decoding step: truncate the base distribution, steer, and return the
// distribution plus the supports that produced it.
fn step_distribution(
    spec: &EnsembleSpec,
    context: &[TokenId],
    config: &GenerationConfig,
) -> Result<(ProbabilityVector, Option<Vec<TokenId>>, Vec<TokenId>)> {
    let mut z_base = spec.base().logits(context)?;
    let mut partial_support = None;
    if let Some(k) = config.partial_k {
        z_base = partial_logits_view(&z_base, k);
        partial_support = Some(
            z_base
                .values()
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != MASKED)
                .map(|(i, _)| TokenId::new(i as u32))
                .collect(),
        );
    }
    let p_base = softmax(&z_base)?;
    let kept = nucleus_set(&p_base, &config.truncation);
    let z_truncated = truncate(&z_base, &kept)?;
    let p = spec.steer(&z_truncated, context)?;
    Ok((p, partial_support, kept))
}

/// Steered next-token distribution at a context, without sampling.
pub fn next_distribution(
    spec: &EnsembleSpec,
    context: &[TokenId],
    config: &GenerationConfig,
) -> Result<ProbabilityVector> {
    config.validate()?;
    Ok(step_distribution(spec, context, config)?.0)
}

/// Autoregressive sampling loop: up to `max_len` tokens, stopping early when
/// the end-of-sequence token is drawn (it is not part of the continuation).
pub fn generate(
    spec: &EnsembleSpec,
    prompt: &[TokenId],
    config: &GenerationConfig,
    rng: &mut RandomSource,
) -> Result<Vec<TokenId>> {
    generate_audited(spec, prompt, config, rng).map(|(continuation, _)| continuation)
}

/// [`generate`] plus a per-step record of candidate supports.
pub fn generate_audited(
    spec: &EnsembleSpec,
    prompt: &[TokenId],
    config: &GenerationConfig,
    rng: &mut RandomSource,
) -> Result<(Vec<TokenId>, Vec<StepAudit>)> {
    config.validate()?;
    let eos = spec.base().vocab().eos_id();
    let mut context = prompt.to_vec();
    let mut continuation = Vec::new();
    let mut audits = Vec::new();
    for step in 0..config.max_len {
        let (p, partial_support, support) = step_distribution(spec, &context, config)?;
        let token = sample(&p, rng);
        audits.push(StepAudit {
            step,
            partial_support,
            support,
            token,
        });
        if token == eos {
            break;
        }
        continuation.push(token);
        context.push(token);
    }
    Ok((continuation, audits))
}
