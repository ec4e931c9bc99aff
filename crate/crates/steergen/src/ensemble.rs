//! Steered next-token distributions: the base model's logits shifted by
//! `alpha * (sum of expert logits - sum of anti-expert logits)`, softmaxed in
//! the log domain with max-subtraction.
//!
//! Logits here are log-probabilities. Softmax is invariant under per-model
//! constant shifts, so log-probabilities are a valid representative of any
//! pre-softmax activations; the shift-invariance property is tested.
//!
//! Masked base entries stay masked through the arithmetic and come out with
//! probability exactly zero: steering can reweight the candidate set but
//! never reintroduce a token the truncation removed.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ngram::{LogitVector, NGramModel, MASKED};
use crate::vocab::TokenId;

/// Normalized distribution over the vocabulary. Entries at masked positions
/// of the originating logits are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    values: Vec<f64>,
}

impl ProbabilityVector {
    /// Validates non-negativity and normalization to 1 within 1e-9.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySupport);
        }
        if values.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidConfig(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "probabilities must sum to 1 (got {sum})"
            )));
        }
        Ok(ProbabilityVector { values })
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        ProbabilityVector { values }
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

    pub fn get(&self, id: TokenId) -> Option<f64> {
        self.values.get(id.idx()).copied()
    }
}

fn check_same_len(base: &LogitVector, others: &[&LogitVector]) -> Result<()> {
    for other in others {
        if other.len() != base.len() {
            return Err(Error::LengthMismatch {
                expected: base.len(),
                found: other.len(),
            });
        }
    }
    Ok(())
}

// Sum a group of logit vectors; empty groups sum to the zero vector. The
// result must be finite wherever the base is unmasked.
fn group_sum(base: &LogitVector, group: &[LogitVector], len: usize) -> Result<Vec<f64>> {
    let mut sum = vec![0.0f64; len];
    for z in group {
        for (i, &v) in z.values().iter().enumerate() {
            sum[i] += v;
        }
    }
    for (i, v) in sum.iter().enumerate() {
        if !base.is_masked(i) && !v.is_finite() {
            return Err(Error::NonFiniteLogit { index: i });
        }
    }
    Ok(sum)
}

// Softmax over the unmasked entries, computed with max-subtraction; masked
// entries come out exactly zero.
fn masked_softmax(steered: &[f64]) -> Result<ProbabilityVector> {
    let max = steered
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptySupport);
    }
    let weights: Vec<f64> = steered
        .iter()
        .map(|&v| if v == MASKED { 0.0 } else { (v - max).exp() })
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(ProbabilityVector::from_raw(
        weights.into_iter().map(|w| w / total).collect(),
    ))
}

/// `softmax((z_base + alpha * (sum z_plus - sum z_minus)) / temperature)`.
///
/// Masked base entries propagate: their output probability is exactly zero
/// regardless of the expert logits at that position.
pub fn combine(
    z_base: &LogitVector,
    z_plus: &[LogitVector],
    z_minus: &[LogitVector],
    alpha: f64,
    temperature: f64,
) -> Result<ProbabilityVector> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidConfig("temperature must be positive".into()));
    }
    let refs: Vec<&LogitVector> = z_plus.iter().chain(z_minus.iter()).collect();
    check_same_len(z_base, &refs)?;
    let len = z_base.len();
    let plus = group_sum(z_base, z_plus, len)?;
    let minus = group_sum(z_base, z_minus, len)?;

    let steered: Vec<f64> = (0..len)
        .map(|i| {
            let b = z_base.values()[i];
            if b == MASKED {
                MASKED
            } else {
                (b + alpha * (plus[i] - minus[i])) / temperature
            }
        })
        .collect();
    masked_softmax(&steered)
}

/// Anti-expert-only steering: the base model doubles as its own expert, so
/// `softmax(((1 + alpha) * z - alpha * sum z_minus) / temperature)`. Computed
/// by delegating to [`combine`] with the base in the expert slot, which makes
/// the algebraic identity `(1 + a) z - a z' = z + a (z - z')` hold exactly.
pub fn combine_anti_only(
    z_base: &LogitVector,
    z_minus: &[LogitVector],
    alpha: f64,
    temperature: f64,
) -> Result<ProbabilityVector> {
    combine(
        z_base,
        std::slice::from_ref(z_base),
        z_minus,
        alpha,
        temperature,
    )
}

/// Probability-domain route to the same ensemble:
/// `normalize(p_base * (p_plus / p_minus)^alpha)` for a single expert and
/// anti-expert. Serves as an independent oracle for [`combine`]; requires
/// strictly positive inputs and no truncation.
pub fn ratio_form(
    p_base: &ProbabilityVector,
    p_plus: &ProbabilityVector,
    p_minus: &ProbabilityVector,
    alpha: f64,
) -> Result<ProbabilityVector> {
    if p_plus.len() != p_base.len() || p_minus.len() != p_base.len() {
        return Err(Error::LengthMismatch {
            expected: p_base.len(),
            found: p_plus.len().max(p_minus.len()),
        });
    }
    let any_zero = p_base
        .values()
        .iter()
        .chain(p_plus.values())
        .chain(p_minus.values())
        .any(|&p| p <= 0.0);
    if any_zero {
        return Err(Error::RatioFormZeroEntry);
    }
    let weights: Vec<f64> = (0..p_base.len())
        .map(|i| p_base.values()[i] * (p_plus.values()[i] / p_minus.values()[i]).powf(alpha))
        .collect();
    let total: f64 = weights.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::RatioFormZeroEntry);
    }
    Ok(ProbabilityVector::from_raw(
        weights.into_iter().map(|w| w / total).collect(),
    ))
}

/// Plain softmax of a (possibly truncated) logit vector: [`combine`] with no
/// experts and no steering.
pub fn softmax(z: &LogitVector) -> Result<ProbabilityVector> {
    combine(z, &[], &[], 0.0, 1.0)
}

/// How the steering term is assembled at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleMode {
    /// `z + alpha (sum z_plus - sum z_minus)`.
    Full,
    /// The base stands in for the expert; only anti-experts are queried.
    AntiOnly,
}

/// A base model plus expert/anti-expert groups with a steering strength:
/// everything the decoding loop needs to produce one next-token distribution.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    base: Arc<NGramModel>,
    experts: Vec<Arc<NGramModel>>,
    anti_experts: Vec<Arc<NGramModel>>,
    alpha: f64,
    mode: EnsembleMode,
    temperature: f64,
}

impl EnsembleSpec {
    pub fn new(
        base: Arc<NGramModel>,
        experts: Vec<Arc<NGramModel>>,
        anti_experts: Vec<Arc<NGramModel>>,
        alpha: f64,
        mode: EnsembleMode,
    ) -> Result<Self> {
        match mode {
            EnsembleMode::AntiOnly => {
                if !experts.is_empty() {
                    return Err(Error::InvalidConfig(
                        "anti-only mode takes no expert models".into(),
                    ));
                }
                if anti_experts.is_empty() {
                    return Err(Error::InvalidConfig(
                        "anti-only mode requires at least one anti-expert".into(),
                    ));
                }
            }
            EnsembleMode::Full => {
                if experts.is_empty() && anti_experts.is_empty() {
                    return Err(Error::InvalidConfig(
                        "full mode requires at least one expert or anti-expert".into(),
                    ));
                }
            }
        }
        for m in experts.iter().chain(anti_experts.iter()) {
            if m.vocab().tokens() != base.vocab().tokens() {
                return Err(Error::VocabularyMismatch);
            }
        }
        Ok(EnsembleSpec {
            base,
            experts,
            anti_experts,
            alpha,
            mode,
            temperature: 1.0,
        })
    }

    /// The base model alone, no steering term. Used for base-only decoding
    /// and for decoding directly from a single expert.
    pub fn unsteered(base: Arc<NGramModel>) -> Self {
        EnsembleSpec {
            base,
            experts: Vec::new(),
            anti_experts: Vec::new(),
            alpha: 0.0,
            mode: EnsembleMode::Full,
            temperature: 1.0,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidConfig("temperature must be positive".into()));
        }
        self.temperature = temperature;
        Ok(self)
    }

    pub fn base(&self) -> &Arc<NGramModel> {
        &self.base
    }

    pub fn experts(&self) -> &[Arc<NGramModel>] {
        &self.experts
    }

    pub fn anti_experts(&self) -> &[Arc<NGramModel>] {
        &self.anti_experts
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mode(&self) -> EnsembleMode {
        self.mode
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Steered distribution for a (possibly truncated) base logit vector and
    /// a context, querying each member model on the same context.
    pub fn steer(&self, z_base: &LogitVector, context: &[TokenId]) -> Result<ProbabilityVector> {
        let minus: Vec<LogitVector> = self
            .anti_experts
            .iter()
            .map(|m| m.logits(context))
            .collect::<Result<_>>()?;
        match self.mode {
            EnsembleMode::AntiOnly => {
                combine_anti_only(z_base, &minus, self.alpha, self.temperature)
            }
            EnsembleMode::Full => {
                let plus: Vec<LogitVector> = self
                    .experts
                    .iter()
                    .map(|m| m.logits(context))
                    .collect::<Result<_>>()?;
                combine(z_base, &plus, &minus, self.alpha, self.temperature)
            }
        }
    }
}
