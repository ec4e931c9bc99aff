//! Word-level tokenization and the shared token-id space that every logit
//! vector in the crate is indexed by.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";

/// Index into a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(u32);

impl TokenId {
    pub const UNK: TokenId = TokenId(0);
    pub const BOS: TokenId = TokenId(1);
    pub const EOS: TokenId = TokenId(2);

    pub fn new(id: u32) -> Self {
        TokenId(id)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn idx(self) -> usize {
        self.0 as usize
    }

    pub fn is_special(self) -> bool {
        self.0 < 3
    }
}

/// Bijective token-string <-> token-id map with three reserved specials at
/// fixed ids: `<unk>`=0, `<bos>`=1, `<eos>`=2.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

/// Lowercase, split on Unicode whitespace, and detach leading/trailing ASCII
/// punctuation from each field as separate single-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut out = Vec::new();
    for field in lowered.split_whitespace() {
        let chars: Vec<char> = field.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && chars[start].is_ascii_punctuation() {
            start += 1;
        }
        while end > start && chars[end - 1].is_ascii_punctuation() {
            end -= 1;
        }
        for &c in &chars[..start] {
            out.push(c.to_string());
        }
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        for &c in &chars[end..] {
            out.push(c.to_string());
        }
    }
    out
}

impl Vocabulary {
    /// Build a vocabulary from a corpus: the three specials, then every token
    /// with frequency >= `min_count` ordered by descending frequency, ties by
    /// lexicographic order.
    pub fn build(corpus: &[String], min_count: u64) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut freq: HashMap<String, u64> = HashMap::new();
        for doc in corpus {
            for tok in tokenize(doc) {
                *freq.entry(tok).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(String, u64)> = freq
            .into_iter()
            .filter(|(_, count)| *count >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut tokens = vec![
            UNK_TOKEN.to_string(),
            BOS_TOKEN.to_string(),
            EOS_TOKEN.to_string(),
        ];
        tokens.extend(kept.into_iter().map(|(tok, _)| tok));
        Self::from_tokens(tokens)
    }

    /// Reconstruct a vocabulary from an ordered token list (e.g. a model
    /// file). Validates the specials, uniqueness, and the no-whitespace rule.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 3
            || tokens[0] != UNK_TOKEN
            || tokens[1] != BOS_TOKEN
            || tokens[2] != EOS_TOKEN
        {
            return Err(Error::InvalidConfig(format!(
                "vocabulary must start with {UNK_TOKEN}, {BOS_TOKEN}, {EOS_TOKEN}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.chars().any(char::is_whitespace) {
                return Err(Error::InvalidConfig(format!(
                    "token {tok:?} contains whitespace"
                )));
            }
            if index.insert(tok.clone(), TokenId(i as u32)).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk_id(&self) -> TokenId {
        TokenId::UNK
    }

    pub fn bos_id(&self) -> TokenId {
        TokenId::BOS
    }

    pub fn eos_id(&self) -> TokenId {
        TokenId::EOS
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Result<&str> {
        self.tokens
            .get(id.idx())
            .map(String::as_str)
            .ok_or(Error::InvalidTokenId {
                id: id.get(),
                vocab_size: self.len(),
            })
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Tokenize and map to ids; unknown tokens map to `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        tokenize(text)
            .into_iter()
            .map(|tok| self.id_of(&tok).unwrap_or(TokenId::UNK))
            .collect()
    }

    /// Join tokens with single spaces, omitting the reserved specials.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let mut parts = Vec::with_capacity(ids.len());
        for &id in ids {
            let tok = self.token(id)?;
            if !id.is_special() {
                parts.push(tok);
            }
        }
        Ok(parts.join(" "))
    }

    pub fn into_shared(self) -> Arc<Vocabulary> {
        Arc::new(self)
    }
}
