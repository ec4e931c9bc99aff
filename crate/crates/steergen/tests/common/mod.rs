//! Shared synthetic-attribute fixture: disjoint positive/negative word lists
//! over a large shared filler vocabulary, with corpora sized so that token
//! budgets up to 32768 stay inside the attribute corpora.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use steergen::ngram::default_lambdas;
use steergen::pipeline::{read_prompts, run_make_prompts};
use steergen::{NGramModel, RandomSource, Vocabulary};

pub const NUM_ATTR_WORDS: usize = 50;
pub const NUM_FILLER_WORDS: usize = 400;
pub const NUM_PROMPTS: usize = 50;

pub struct Fixture {
    // Owns the on-disk corpora for the lifetime of the test binary.
    pub dir: tempfile::TempDir,
    pub vocab: Arc<Vocabulary>,
    pub base: Arc<NGramModel>,
    pub expert: Arc<NGramModel>,
    pub anti: Arc<NGramModel>,
    pub eval_model: Arc<NGramModel>,
    pub prompts: Vec<String>,
    pub pos_words: Vec<String>,
    pub neg_words: Vec<String>,
    pub union_corpus: PathBuf,
    pub pos_corpus: PathBuf,
    pub neg_corpus: PathBuf,
    pub prompts_file: PathBuf,
    pub pos_lexicon: PathBuf,
    pub neg_lexicon: PathBuf,
    pub base_model_file: PathBuf,
    pub expert_model_file: PathBuf,
    pub anti_model_file: PathBuf,
    pub eval_model_file: PathBuf,
}

pub fn pos_word(i: usize) -> String {
    format!("pos{i:02}")
}

pub fn neg_word(i: usize) -> String {
    format!("neg{i:02}")
}

pub fn filler_word(i: usize) -> String {
    format!("w{i:03}")
}

fn synth_line(
    rng: &mut RandomSource,
    attr: Option<&str>,
    min_len: usize,
    max_len: usize,
) -> String {
    let len = min_len + (rng.next_u64() as usize) % (max_len - min_len + 1);
    (0..len)
        .map(|_| {
            let attr_draw = rng.next_f64();
            let word_draw = rng.next_u64() as usize;
            match attr {
                Some(kind) if attr_draw < 0.4 => format!("{kind}{:02}", word_draw % NUM_ATTR_WORDS),
                _ => filler_word(word_draw % NUM_FILLER_WORDS),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn write_lines(path: &Path, lines: &[String]) {
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

pub fn build_fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RandomSource::new(0xF1D0);

    let pos_lines: Vec<String> = (0..3200)
        .map(|_| synth_line(&mut rng, Some("pos"), 8, 14))
        .collect();
    let neg_lines: Vec<String> = (0..3200)
        .map(|_| synth_line(&mut rng, Some("neg"), 8, 14))
        .collect();
    let union_lines: Vec<String> = pos_lines
        .iter()
        .zip(&neg_lines)
        .flat_map(|(p, n)| [p.clone(), n.clone()])
        .collect();
    let prompt_lines: Vec<String> = (0..NUM_PROMPTS)
        .map(|_| synth_line(&mut rng, None, 8, 20))
        .collect();
    let eval_lines: Vec<String> = (0..1200)
        .map(|i| {
            synth_line(
                &mut rng,
                Some(if i % 2 == 0 { "pos" } else { "neg" }),
                8,
                14,
            )
        })
        .collect();

    let union_corpus = dir.path().join("union.txt");
    let pos_corpus = dir.path().join("positive.txt");
    let neg_corpus = dir.path().join("negative.txt");
    let prompt_corpus = dir.path().join("prompt_source.txt");
    let eval_corpus = dir.path().join("heldout.txt");
    write_lines(&union_corpus, &union_lines);
    write_lines(&pos_corpus, &pos_lines);
    write_lines(&neg_corpus, &neg_lines);
    write_lines(&prompt_corpus, &prompt_lines);
    write_lines(&eval_corpus, &eval_lines);

    let pos_words: Vec<String> = (0..NUM_ATTR_WORDS).map(pos_word).collect();
    let neg_words: Vec<String> = (0..NUM_ATTR_WORDS).map(neg_word).collect();
    let pos_lexicon = dir.path().join("positive_lexicon.txt");
    let neg_lexicon = dir.path().join("negative_lexicon.txt");
    write_lines(&pos_lexicon, &pos_words);
    write_lines(&neg_lexicon, &neg_words);

    let prompts_file = dir.path().join("prompts.jsonl");
    let kept = run_make_prompts(&prompt_corpus, 4, 10, &prompts_file).unwrap();
    assert_eq!(kept, NUM_PROMPTS);
    let prompts: Vec<String> = read_prompts(&prompts_file)
        .unwrap()
        .into_iter()
        .map(|p| p.prompt)
        .collect();

    let vocab = Vocabulary::build(&union_lines, 1).unwrap().into_shared();
    assert!(
        vocab.len() >= 500,
        "fixture vocabulary too small: {}",
        vocab.len()
    );
    let lambdas = default_lambdas(3);
    let base = Arc::new(NGramModel::train(&union_lines, vocab.clone(), 3, &lambdas, None).unwrap());
    let expert = Arc::new(NGramModel::train(&pos_lines, vocab.clone(), 3, &lambdas, None).unwrap());
    let anti = Arc::new(NGramModel::train(&neg_lines, vocab.clone(), 3, &lambdas, None).unwrap());
    let eval_model = Arc::new(
        NGramModel::train(&eval_lines, vocab.clone(), 4, &default_lambdas(4), None).unwrap(),
    );

    let base_model_file = dir.path().join("base.model.json");
    let expert_model_file = dir.path().join("expert.model.json");
    let anti_model_file = dir.path().join("anti.model.json");
    let eval_model_file = dir.path().join("eval.model.json");
    base.save(&base_model_file).unwrap();
    expert.save(&expert_model_file).unwrap();
    anti.save(&anti_model_file).unwrap();
    eval_model.save(&eval_model_file).unwrap();

    Fixture {
        dir,
        vocab,
        base,
        expert,
        anti,
        eval_model,
        prompts,
        pos_words,
        neg_words,
        union_corpus,
        pos_corpus,
        neg_corpus,
        prompts_file,
        pos_lexicon,
        neg_lexicon,
        base_model_file,
        expert_model_file,
        anti_model_file,
        eval_model_file,
    }
}
