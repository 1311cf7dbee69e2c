//! Lowercase WordPiece tokenizer (BERT uncased conventions).

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const UNK: &str = "[UNK]";
pub const PAD: &str = "[PAD]";

const CONTINUATION_PREFIX: &str = "##";

/// Sequence length limit of the encoder, including [CLS] and [SEP].
pub const MAX_SEQ_LEN: usize = 512;
pub const MAX_CONTENT_TOKENS: usize = MAX_SEQ_LEN - 2;

/// Words longer than this (in chars) map straight to [UNK].
const MAX_CHARS_PER_WORD: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    /// Token ids including the [CLS] prefix and [SEP] suffix.
    pub tokens: Vec<u32>,
    pub attention_length: usize,
    pub original_text: String,
    /// Content tokens were dropped to fit [`MAX_SEQ_LEN`].
    pub truncated: bool,
}

impl TokenSequence {
    pub fn content_len(&self) -> usize {
        self.attention_length.saturating_sub(2)
    }
}

/// WordPiece vocabulary; line number (0-based) is the token id.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    cls: u32,
    sep: u32,
    unk: u32,
    pad: u32,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            // First occurrence wins, as in the reference loaders.
            index.entry(t.clone()).or_insert(i as u32);
        }
        let lookup = |name: &'static str| {
            index
                .get(name)
                .copied()
                .ok_or(Error::MissingSpecialToken(name))
        };
        let (cls, sep, unk, pad) = (lookup(CLS)?, lookup(SEP)?, lookup(UNK)?, lookup(PAD)?);
        Ok(Vocab {
            tokens,
            index,
            cls,
            sep,
            unk,
            pad,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
    }

    /// Whole-word vocabulary covering every pre-token of `texts`, used by the
    /// stub backend when no vocabulary file is configured.
    pub fn from_corpus<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<String> = texts
            .into_iter()
            .flat_map(|t| pre_tokenize(&t.to_lowercase()))
            .collect();
        let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP].iter().map(|s| s.to_string()).collect();
        let specials = tokens.clone();
        tokens.extend(words.into_iter().filter(|w| !specials.contains(w)));
        Self::from_tokens(tokens).expect("special tokens present")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn cls_id(&self) -> u32 {
        self.cls
    }
    pub fn sep_id(&self) -> u32 {
        self.sep
    }
    pub fn unk_id(&self) -> u32 {
        self.unk
    }
    pub fn pad_id(&self) -> u32 {
        self.pad
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{00A1}' | '\u{00A7}' | '\u{00AB}'
                | '\u{00B6}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}'
        )
}

/// Splits on whitespace and isolates punctuation characters.
pub fn pre_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for c in word.chars() {
            if c.is_control() {
                continue;
            }
            if is_punctuation(c) {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

/// Greedy longest-match-first segmentation of one word. A word with any
/// unmatched remainder becomes a single [UNK].
fn wordpiece_word(word: &str, vocab: &Vocab, out: &mut Vec<u32>) {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() > MAX_CHARS_PER_WORD {
        out.push(vocab.unk);
        return;
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::with_capacity(word.len() + 2);
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while start < end {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.extend(&chars[start..end]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some(id);
                break;
            }
            end -= 1;
        }
        match found {
            Some(id) => {
                pieces.push(id);
                start = end;
            }
            None => {
                out.push(vocab.unk);
                return;
            }
        }
    }
    out.extend(pieces);
}

/// Tokenizes `text` into `[CLS] pieces... [SEP]`, truncating content to
/// [`MAX_CONTENT_TOKENS`].
pub fn tokenize(text: &str, vocab: &Vocab) -> Result<TokenSequence> {
    let lower = text.to_lowercase();
    let words = pre_tokenize(&lower);
    if words.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut content = Vec::new();
    for w in &words {
        wordpiece_word(w, vocab, &mut content);
    }
    let truncated = content.len() > MAX_CONTENT_TOKENS;
    content.truncate(MAX_CONTENT_TOKENS);

    let mut tokens = Vec::with_capacity(content.len() + 2);
    tokens.push(vocab.cls);
    tokens.extend(content);
    tokens.push(vocab.sep);
    Ok(TokenSequence {
        attention_length: tokens.len(),
        tokens,
        original_text: text.to_string(),
        truncated,
    })
}

/// Concatenates content pieces, stripping the continuation prefix.
pub fn detokenize_word(seq: &TokenSequence, vocab: &Vocab) -> String {
    seq.tokens[1..seq.attention_length - 1]
        .iter()
        .filter_map(|&id| vocab.token(id))
        .map(|t| t.strip_prefix(CONTINUATION_PREFIX).unwrap_or(t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(words: &[&str]) -> Vocab {
        let mut v: Vec<String> = [PAD, UNK, CLS, SEP].iter().map(|s| s.to_string()).collect();
        v.extend(words.iter().map(|s| s.to_string()));
        Vocab::from_tokens(v).unwrap()
    }

    #[test]
    fn single_word() {
        let v = vocab(&["inflation"]);
        let s = tokenize("inflation", &v).unwrap();
        assert_eq!(s.tokens, vec![2, 4, 3]);
        assert_eq!(s.attention_length, 3);
    }

    #[test]
    fn unknown_word() {
        let v = vocab(&["inflation"]);
        let s = tokenize("qzxv", &v).unwrap();
        assert_eq!(s.tokens, vec![v.cls_id(), v.unk_id(), v.sep_id()]);
    }

    #[test]
    fn continuation_pieces() {
        let v = vocab(&["un", "##employ", "##ment"]);
        let s = tokenize("unemployment", &v).unwrap();
        let ids: Vec<u32> = ["[CLS]", "un", "##employ", "##ment", "[SEP]"]
            .iter()
            .map(|t| v.id(t).unwrap())
            .collect();
        assert_eq!(s.tokens, ids);
        assert_eq!(detokenize_word(&s, &v), "unemployment");
    }

    #[test]
    fn partial_match_is_unknown() {
        let v = vocab(&["un", "##employ"]);
        let s = tokenize("unemployment", &v).unwrap();
        assert_eq!(s.tokens, vec![v.cls_id(), v.unk_id(), v.sep_id()]);
    }

    #[test]
    fn punctuation_split_and_lowercase() {
        let v = vocab(&["rates", "rose", "."]);
        let s = tokenize("Rates ROSE.", &v).unwrap();
        assert_eq!(s.tokens, vec![2, 4, 5, 6, 3]);
    }

    #[test]
    fn empty_input_rejected() {
        let v = vocab(&[]);
        assert!(matches!(tokenize("   ", &v), Err(Error::EmptyInput)));
    }

    #[test]
    fn long_input_truncated() {
        let v = vocab(&["a"]);
        let s = tokenize(&"a ".repeat(600), &v).unwrap();
        assert_eq!(s.attention_length, MAX_SEQ_LEN);
        assert!(s.truncated);
        assert_eq!(*s.tokens.last().unwrap(), v.sep_id());
    }

    #[test]
    fn missing_special_token() {
        let r = Vocab::from_tokens(vec!["[CLS]".into(), "[SEP]".into(), "[PAD]".into()]);
        assert!(matches!(r, Err(Error::MissingSpecialToken("[UNK]"))));
    }

    #[test]
    fn corpus_vocab_is_sorted_and_complete() {
        let v = Vocab::from_corpus(["Prices rose.", "growth slowed"]);
        assert_eq!(v.tokens()[..4], ["[PAD]", "[UNK]", "[CLS]", "[SEP]"]);
        assert_eq!(v.tokens()[4..], [".", "growth", "prices", "rose", "slowed"]);
        let s = tokenize("Prices rose.", &v).unwrap();
        assert!(!s.tokens.contains(&v.unk_id()));
    }
}
