//! Automatic evaluation: attribute statistics over sampled continuations,
//! fluency perplexity under a held-out evaluation model, and distinct-n-gram
//! diversity.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ngram::NGramModel;
use crate::vocab::tokenize;

/// Lexicon-based attribute scorer with add-one smoothing:
/// `score = (n_pos + 1) / (n_pos + n_neg + 2)` over token hits, so text with
/// no evidence scores exactly 0.5. A text is labeled positive iff its score
/// is strictly above 0.5.
#[derive(Debug, Clone)]
pub struct AttributeScorer {
    positive: HashSet<String>,
    negative: HashSet<String>,
}

impl AttributeScorer {
    pub fn new(
        positive: impl IntoIterator<Item = String>,
        negative: impl IntoIterator<Item = String>,
    ) -> Result<Self> {
        let positive: HashSet<String> = positive.into_iter().collect();
        let negative: HashSet<String> = negative.into_iter().collect();
        if positive.is_empty() || negative.is_empty() {
            return Err(Error::InvalidLexicon("lexicons must be non-empty".into()));
        }
        if let Some(shared) = positive.intersection(&negative).next() {
            return Err(Error::InvalidLexicon(format!(
                "lexicons must be disjoint ({shared:?} appears in both)"
            )));
        }
        Ok(AttributeScorer { positive, negative })
    }

    /// Bag-of-words attribute score in [0, 1].
    pub fn score(&self, text: &str) -> f64 {
        let mut pos = 0u64;
        let mut neg = 0u64;
        for tok in tokenize(text) {
            if self.positive.contains(&tok) {
                pos += 1;
            } else if self.negative.contains(&tok) {
                neg += 1;
            }
        }
        (pos + 1) as f64 / (pos + neg + 2) as f64
    }

    pub fn is_positive(score: f64) -> bool {
        score > 0.5
    }
}

/// One prompt with its sampled continuations; scores are attached by the
/// evaluation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub prompt: String,
    pub continuations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

impl GenerationRecord {
    fn scores_checked(&self, index: usize) -> Result<&[f64]> {
        match &self.scores {
            Some(scores) if scores.len() == self.continuations.len() => Ok(scores),
            Some(scores) => Err(Error::InconsistentSampleCount {
                index,
                expected: self.continuations.len(),
                found: scores.len(),
            }),
            None => Err(Error::MissingScores { index }),
        }
    }
}

/// Attach attribute scores to every record.
pub fn score_records(scorer: &AttributeScorer, records: &mut [GenerationRecord]) {
    for record in records.iter_mut() {
        record.scores = Some(
            record
                .continuations
                .iter()
                .map(|c| scorer.score(c))
                .collect(),
        );
    }
}

fn non_empty(records: &[GenerationRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    Ok(())
}

/// Mean over prompts of (distinct token n-grams across the prompt's pooled
/// continuations) / (total tokens in the pool). Prompts whose pool has no
/// tokens contribute zero.
pub fn dist_n(records: &[GenerationRecord], n: usize) -> Result<f64> {
    non_empty(records)?;
    if n < 1 {
        return Err(Error::InvalidConfig("n-gram size must be >= 1".into()));
    }
    let mut per_prompt = Vec::with_capacity(records.len());
    for record in records {
        let mut distinct: HashSet<Vec<String>> = HashSet::new();
        let mut total_tokens = 0usize;
        for continuation in &record.continuations {
            let tokens = tokenize(continuation);
            total_tokens += tokens.len();
            if tokens.len() >= n {
                for gram in tokens.windows(n) {
                    distinct.insert(gram.to_vec());
                }
            }
        }
        if total_tokens == 0 {
            log::warn!(
                "dist-{n}: prompt {:?} has no continuation tokens; contributing 0",
                record.prompt
            );
            per_prompt.push(0.0);
        } else {
            per_prompt.push(distinct.len() as f64 / total_tokens as f64);
        }
    }
    Ok(per_prompt.iter().sum::<f64>() / per_prompt.len() as f64)
}

/// Mean over prompts of the worst (maximum) attribute score among the
/// prompt's continuations.
pub fn avg_max_attribute(records: &[GenerationRecord]) -> Result<f64> {
    non_empty(records)?;
    let mut sum = 0.0f64;
    for (i, record) in records.iter().enumerate() {
        let scores = record.scores_checked(i)?;
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        sum += max;
    }
    Ok(sum / records.len() as f64)
}

/// Fraction of prompts with at least one continuation scoring >= threshold.
pub fn attribute_prob(records: &[GenerationRecord], threshold: f64) -> Result<f64> {
    non_empty(records)?;
    let mut hits = 0usize;
    for (i, record) in records.iter().enumerate() {
        if record.scores_checked(i)?.iter().any(|&s| s >= threshold) {
            hits += 1;
        }
    }
    Ok(hits as f64 / records.len() as f64)
}

/// Mean over prompts of the fraction of continuations labeled positive
/// (score strictly above 0.5).
pub fn percent_positive(records: &[GenerationRecord]) -> Result<f64> {
    non_empty(records)?;
    let mut sum = 0.0f64;
    for (i, record) in records.iter().enumerate() {
        let scores = record.scores_checked(i)?;
        let positive = scores
            .iter()
            .filter(|&&s| AttributeScorer::is_positive(s))
            .count();
        sum += positive as f64 / scores.len() as f64;
    }
    Ok(sum / records.len() as f64)
}

/// Mean perplexity of every continuation under the evaluation model, which
/// should be held-out-trained with a strictly higher order than any
/// generator. Continuations that tokenize to nothing are skipped.
pub fn fluency_ppl(eval_model: &NGramModel, records: &[GenerationRecord]) -> Result<f64> {
    non_empty(records)?;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for record in records {
        for continuation in &record.continuations {
            let ids = eval_model.vocab().encode(continuation);
            if ids.is_empty() {
                log::warn!(
                    "fluency: skipping empty continuation under prompt {:?}",
                    record.prompt
                );
                continue;
            }
            sum += eval_model.perplexity(&ids)?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyRecords);
    }
    Ok(sum / count as f64)
}

/// Prompt lists produced by [`bucket_prompts`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptBuckets {
    pub neutral: Vec<String>,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

/// Bucket prompts by how the base model continues them, using the positive
/// label count c out of k samples: negative iff c = 0, positive iff
/// c >= k - 1, neutral iff c is one of the two middle counts
/// (floor(k/2) or ceil(k/2)); everything else is left unassigned. Buckets are
/// assigned in that precedence order, so they are always disjoint. For k = 25
/// this selects c in {0} / {24, 25} / {12, 13}.
pub fn bucket_prompts(records: &[GenerationRecord], k: usize) -> Result<PromptBuckets> {
    non_empty(records)?;
    if k < 1 {
        return Err(Error::InvalidConfig("bucket size k must be >= 1".into()));
    }
    let mut buckets = PromptBuckets::default();
    for (i, record) in records.iter().enumerate() {
        if record.continuations.len() != k {
            return Err(Error::InconsistentSampleCount {
                index: i,
                expected: k,
                found: record.continuations.len(),
            });
        }
        let scores = record.scores_checked(i)?;
        let c = scores
            .iter()
            .filter(|&&s| AttributeScorer::is_positive(s))
            .count();
        if c == 0 {
            buckets.negative.push(record.prompt.clone());
        } else if c >= k - 1 {
            buckets.positive.push(record.prompt.clone());
        } else if c == k / 2 || c == k.div_ceil(2) {
            buckets.neutral.push(record.prompt.clone());
        }
    }
    Ok(buckets)
}

/// One configuration's evaluation summary, serialized as a flat JSON object
/// and as a CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub alpha: f64,
    pub avg_max_attribute: f64,
    pub attribute_prob: f64,
    pub percent_positive: f64,
    pub fluency_ppl: f64,
    pub dist1: f64,
    pub dist2: f64,
    pub dist3: f64,
    pub num_prompts: usize,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str =
        "alpha,avg_max_attribute,attribute_prob,percent_positive,fluency_ppl,dist1,dist2,dist3,num_prompts";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.alpha,
            self.avg_max_attribute,
            self.attribute_prob,
            self.percent_positive,
            self.fluency_ppl,
            self.dist1,
            self.dist2,
            self.dist3,
            self.num_prompts
        )
    }
}

/// Assemble the full report for a set of scored records.
pub fn compute_report(
    records: &[GenerationRecord],
    eval_model: &NGramModel,
    alpha: f64,
) -> Result<MetricsReport> {
    Ok(MetricsReport {
        alpha,
        avg_max_attribute: avg_max_attribute(records)?,
        attribute_prob: attribute_prob(records, 0.5)?,
        percent_positive: percent_positive(records)?,
        fluency_ppl: fluency_ppl(eval_model, records)?,
        dist1: dist_n(records, 1)?,
        dist2: dist_n(records, 2)?,
        dist3: dist_n(records, 3)?,
        num_prompts: records.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram::NGramModel;
    use crate::vocab::Vocabulary;
    use proptest::prelude::*;

    fn scorer() -> AttributeScorer {
        AttributeScorer::new(
            ["good".to_string(), "great".to_string()],
            ["bad".to_string(), "awful".to_string()],
        )
        .unwrap()
    }

    fn record(prompt: &str, continuations: &[&str], scores: Option<&[f64]>) -> GenerationRecord {
        GenerationRecord {
            prompt: prompt.into(),
            continuations: continuations.iter().map(|s| s.to_string()).collect(),
            scores: scores.map(|s| s.to_vec()),
        }
    }

    #[test]
    fn score_hand_cases() {
        let s = scorer();
        assert_eq!(s.score("nothing to see"), 0.5);
        assert_eq!(s.score("good good"), 0.75);
        assert_eq!(s.score("good bad"), 0.5);
        assert_eq!(s.score("Good, GREAT!"), 0.75);
    }

    #[test]
    fn score_is_bag_of_words() {
        let s = scorer();
        assert_eq!(s.score("good bad filler"), s.score("filler bad good"));
    }

    #[test]
    fn lexicon_validation() {
        assert!(AttributeScorer::new(vec![], vec!["bad".to_string()]).is_err());
        assert!(AttributeScorer::new(
            vec!["same".to_string()],
            vec!["same".to_string(), "bad".to_string()]
        )
        .is_err());
    }

    #[test]
    fn dist_n_hand_cases() {
        let records = [record("p", &["a b", "a b"], None)];
        assert_eq!(dist_n(&records, 1).unwrap(), 0.5);

        let records = [record("p", &["a b c d"], None)];
        assert_eq!(dist_n(&records, 1).unwrap(), 1.0);

        let records = [record("p", &["a a a a"], None)];
        assert_eq!(dist_n(&records, 1).unwrap(), 0.25);

        // Bigrams never cross continuation boundaries.
        let records = [record("p", &["a b", "a b"], None)];
        assert_eq!(dist_n(&records, 2).unwrap(), 0.25);
    }

    #[test]
    fn dist_n_empty_pool_contributes_zero() {
        let records = [record("p", &["", ""], None), record("q", &["a b"], None)];
        assert_eq!(dist_n(&records, 1).unwrap(), 0.5);
    }

    #[test]
    fn avg_max_hand_cases() {
        let records = [record("p", &["x", "y", "z"], Some(&[0.1, 0.9, 0.3]))];
        assert_eq!(avg_max_attribute(&records).unwrap(), 0.9);

        let records = [
            record("p", &["x"], Some(&[0.2])),
            record("q", &["y"], Some(&[0.6])),
        ];
        assert!((avg_max_attribute(&records).unwrap() - 0.4).abs() < 1e-12);

        let records = [record("p", &["x", "y"], Some(&[0.7, 0.7]))];
        assert_eq!(avg_max_attribute(&records).unwrap(), 0.7);

        assert!(matches!(avg_max_attribute(&[]), Err(Error::EmptyRecords)));
    }

    #[test]
    fn attribute_prob_hand_cases() {
        let records = [
            record("p", &["x", "y"], Some(&[0.1, 0.2])),
            record("q", &["x", "y"], Some(&[0.6, 0.1])),
        ];
        assert_eq!(attribute_prob(&records, 0.5).unwrap(), 0.5);

        let records = [record("p", &["x"], Some(&[0.4]))];
        assert_eq!(attribute_prob(&records, 0.5).unwrap(), 0.0);
        let records = [record("p", &["x"], Some(&[0.5]))];
        assert_eq!(attribute_prob(&records, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn percent_positive_hand_cases() {
        let records = [record("p", &["x", "y"], Some(&[0.6, 0.4]))];
        assert_eq!(percent_positive(&records).unwrap(), 0.5);

        let records = [record("p", &["x", "y"], Some(&[0.9, 0.9]))];
        assert_eq!(percent_positive(&records).unwrap(), 1.0);

        // Exactly 0.5 is not positive.
        let records = [record("p", &["x", "y"], Some(&[0.5, 0.5]))];
        assert_eq!(percent_positive(&records).unwrap(), 0.0);
    }

    #[test]
    fn fluency_uniform_model_gives_vocab_size() {
        let corpus = vec!["a b c d e".to_string()];
        let vocab = Vocabulary::build(&corpus, 1).unwrap().into_shared();
        let size = vocab.len() as f64;
        let uniform = NGramModel::train(&corpus, vocab, 2, &[0.0, 0.0, 1.0], None).unwrap();
        let records = [record("p", &["a c", "e b d"], None)];
        let ppl = fluency_ppl(&uniform, &records).unwrap();
        assert!((ppl - size).abs() < 1e-9);
    }

    #[test]
    fn fluency_single_continuation_equals_perplexity() {
        let corpus = vec!["a b a c".to_string(), "c b a".to_string()];
        let vocab = Vocabulary::build(&corpus, 1).unwrap().into_shared();
        let model = NGramModel::train(
            &corpus,
            vocab.clone(),
            3,
            &crate::ngram::default_lambdas(3),
            None,
        )
        .unwrap();
        let records = [record("p", &["a b c"], None)];
        let direct = model.perplexity(&vocab.encode("a b c")).unwrap();
        assert_eq!(fluency_ppl(&model, &records).unwrap(), direct);
    }

    #[test]
    fn fluency_all_empty_errors() {
        let corpus = vec!["a".to_string()];
        let vocab = Vocabulary::build(&corpus, 1).unwrap().into_shared();
        let model = NGramModel::train(&corpus, vocab, 1, &[0.9, 0.1], None).unwrap();
        let records = [record("p", &["", "  "], None)];
        assert!(fluency_ppl(&model, &records).is_err());
    }

    #[test]
    fn bucket_hand_cases() {
        let mk = |c: usize| {
            let scores: Vec<f64> = (0..25).map(|i| if i < c { 0.9 } else { 0.1 }).collect();
            let continuations: Vec<&str> = vec!["x"; 25];
            record(&format!("c{c}"), &continuations, Some(&scores))
        };
        let records = [mk(12), mk(13), mk(24), mk(25), mk(0), mk(20)];
        let buckets = bucket_prompts(&records, 25).unwrap();
        assert_eq!(buckets.neutral, vec!["c12", "c13"]);
        assert_eq!(buckets.positive, vec!["c24", "c25"]);
        assert_eq!(buckets.negative, vec!["c0"]);

        let total = buckets.neutral.len() + buckets.positive.len() + buckets.negative.len();
        assert_eq!(total, 5); // c20 is unassigned

        let bad = [mk(12), record("short", &["x"; 3], Some(&[0.1, 0.1, 0.1]))];
        let err = bucket_prompts(&bad, 25).unwrap_err();
        assert!(matches!(
            err,
            Error::InconsistentSampleCount { index: 1, .. }
        ));
    }

    #[test]
    fn buckets_are_disjoint_even_for_tiny_k() {
        let mk = |c: usize, k: usize| {
            let scores: Vec<f64> = (0..k).map(|i| if i < c { 0.9 } else { 0.1 }).collect();
            let continuations: Vec<&str> = vec!["x"; k];
            record(&format!("c{c}"), &continuations, Some(&scores))
        };
        for k in 1..=6 {
            let records: Vec<GenerationRecord> = (0..=k).map(|c| mk(c, k)).collect();
            let buckets = bucket_prompts(&records, k).unwrap();
            let mut seen = HashSet::new();
            for p in buckets
                .neutral
                .iter()
                .chain(&buckets.positive)
                .chain(&buckets.negative)
            {
                assert!(seen.insert(p.clone()), "prompt {p} assigned twice (k={k})");
            }
        }
    }

    #[test]
    fn csv_row_matches_header_arity() {
        let report = MetricsReport {
            alpha: 1.0,
            avg_max_attribute: 0.5,
            attribute_prob: 0.25,
            percent_positive: 0.75,
            fluency_ppl: 12.5,
            dist1: 0.9,
            dist2: 0.8,
            dist3: 0.7,
            num_prompts: 4,
        };
        let fields = report.csv_row().split(',').count();
        assert_eq!(fields, MetricsReport::CSV_HEADER.split(',').count());
    }

    #[test]
    fn missing_scores_is_reported_with_index() {
        let records = [record("p", &["x"], Some(&[0.3])), record("q", &["x"], None)];
        let err = percent_positive(&records).unwrap_err();
        assert!(matches!(err, Error::MissingScores { index: 1 }));
    }

    proptest! {
        #[test]
        fn prop_metrics_stay_in_range(
            raw in proptest::collection::vec(
                proptest::collection::vec(0.0f64..=1.0, 1..8),
                1..6,
            )
        ) {
            let records: Vec<GenerationRecord> = raw
                .iter()
                .enumerate()
                .map(|(i, scores)| {
                    let continuations: Vec<&str> = vec!["tok tok"; scores.len()];
                    record(&format!("p{i}"), &continuations, Some(scores))
                })
                .collect();
            let a = avg_max_attribute(&records).unwrap();
            let b = attribute_prob(&records, 0.5).unwrap();
            let c = percent_positive(&records).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!((0.0..=1.0).contains(&b));
            prop_assert!((0.0..=1.0).contains(&c));
            let d = dist_n(&records, 1).unwrap();
            prop_assert!(d > 0.0 && d <= 1.0);
        }

        #[test]
        fn prop_dist_n_is_permutation_invariant(
            seed in 0u64..500,
            n in 1usize..4,
        ) {
            let mut rng = crate::decoding::RandomSource::new(seed);
            let words = ["a", "b", "c"];
            let mut records: Vec<GenerationRecord> = (0..3)
                .map(|i| {
                    let conts: Vec<String> = (0..3)
                        .map(|_| {
                            let len = 1 + (rng.next_u64() % 5) as usize;
                            (0..len)
                                .map(|_| words[(rng.next_u64() % 3) as usize])
                                .collect::<Vec<_>>()
                                .join(" ")
                        })
                        .collect();
                    GenerationRecord {
                        prompt: format!("p{i}"),
                        continuations: conts,
                        scores: None,
                    }
                })
                .collect();
            let before = dist_n(&records, n).unwrap();
            records.reverse();
            records[0].continuations.reverse();
            let after = dist_n(&records, n).unwrap();
            prop_assert!((before - after).abs() < 1e-12);
        }

        #[test]
        fn prop_avg_max_dominates_mean_score(
            raw in proptest::collection::vec(
                proptest::collection::vec(0.0f64..=1.0, 1..8),
                1..6,
            )
        ) {
            let records: Vec<GenerationRecord> = raw
                .iter()
                .enumerate()
                .map(|(i, scores)| {
                    let continuations: Vec<&str> = vec!["x"; scores.len()];
                    record(&format!("p{i}"), &continuations, Some(scores))
                })
                .collect();
            let avg_max = avg_max_attribute(&records).unwrap();
            let mean_of_means: f64 = records
                .iter()
                .map(|r| {
                    let s = r.scores.as_ref().unwrap();
                    s.iter().sum::<f64>() / s.len() as f64
                })
                .sum::<f64>() / records.len() as f64;
            prop_assert!(avg_max >= mean_of_means - 1e-12);
        }

        #[test]
        fn prop_attribute_prob_monotone_in_threshold(
            scores in proptest::collection::vec(0.0f64..=1.0, 1..10),
        ) {
            let continuations: Vec<&str> = vec!["x"; scores.len()];
            let records = [record("p", &continuations, Some(&scores))];
            let mut last = 1.0f64;
            for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let v = attribute_prob(&records, t).unwrap();
                prop_assert!(v <= last + 1e-12);
                last = v;
            }
        }
    }
}
