//! Corpus ingestion: loading minutes files, sentence segmentation and the
//! sentence cleaning rules (lowercase, 7..=80 words, alphabetic content,
//! boilerplate blacklist).

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_WORDS: usize = 7;
pub const MAX_WORDS: usize = 80;

/// Phrases dropped when no blacklist file is supplied.
pub const DEFAULT_BLACKLIST: &[&str] = &["return to the previous page"];

/// Tokens ending in a period that never terminate a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "u.s.", "gov.", "jan.", "feb.", "mar.", "apr.", "jun.", "jul.",
    "aug.", "sep.", "sept.", "oct.", "nov.", "dec.", "vol.", "no.", "pp.", "fig.", "e.g.", "i.e.",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub doc_id: String,
    pub meeting_date: NaiveDate,
    pub text: String,
}

/// A cleaned sentence, serialized as one JSON Lines record of the ingest output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    #[serde(rename = "date")]
    pub meeting_date: NaiveDate,
    pub sent_index: usize,
    pub text: String,
    pub word_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_documents: usize,
    pub n_words: usize,
    pub doc_len_max: usize,
    pub doc_len_median: f64,
    pub doc_len_min: usize,
    pub n_sentences: usize,
    pub sent_len_max: usize,
    pub sent_len_median: f64,
    pub sent_len_min: usize,
}

/// Lowercase phrases; a sentence containing any of them is dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blacklist {
    phrases: Vec<String>,
}

impl Default for Blacklist {
    fn default() -> Self {
        Self::new(DEFAULT_BLACKLIST.iter().copied())
    }
}

impl Blacklist {
    pub fn new<S: AsRef<str>>(phrases: impl IntoIterator<Item = S>) -> Self {
        let phrases = phrases
            .into_iter()
            .map(|p| p.as_ref().trim().to_lowercase())
            .filter(|p| !p.is_empty())
            .collect();
        Blacklist { phrases }
    }

    /// Reads one phrase per line; blank lines are ignored.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(text.lines()))
    }

    pub fn matches(&self, lowercase_text: &str) -> bool {
        self.phrases.iter().any(|p| lowercase_text.contains(p.as_str()))
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }
}

/// Splits `<doc_id>__<YYYY-MM-DD>.txt` into its parts.
fn parse_filename(name: &str) -> Result<(String, NaiveDate)> {
    let malformed = || Error::MalformedFilename(name.to_string());
    let stem = name.strip_suffix(".txt").ok_or_else(malformed)?;
    let (doc_id, date) = stem.rsplit_once("__").ok_or_else(malformed)?;
    if doc_id.is_empty() || date.len() != 10 {
        return Err(malformed());
    }
    let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|_| malformed())?;
    Ok((doc_id.to_string(), date))
}

/// Loads every `.txt` file of `corpus_dir`, ordered by (meeting_date, doc_id).
///
/// Files without the `.txt` extension are ignored; a `.txt` file whose name
/// does not follow the `<doc_id>__<YYYY-MM-DD>.txt` grammar is an error.
pub fn load_corpus(corpus_dir: &Path) -> Result<Vec<RawDocument>> {
    if !corpus_dir.is_dir() {
        return Err(Error::MissingCorpusDir(corpus_dir.to_path_buf()));
    }
    let entries = fs::read_dir(corpus_dir).map_err(|e| Error::io(corpus_dir, e))?;
    let mut docs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(corpus_dir, e))?;
        let path = entry.path();
        if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let name = entry.file_name();
        let name = name
            .to_str()
            .ok_or_else(|| Error::MalformedFilename(name.to_string_lossy().into_owned()))?;
        let (doc_id, meeting_date) = parse_filename(name)?;
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Undecodable(path.clone()))?;
        docs.push(RawDocument {
            doc_id,
            meeting_date,
            text,
        });
    }
    docs.sort_by(|a, b| (a.meeting_date, &a.doc_id).cmp(&(b.meeting_date, &b.doc_id)));

    let mut seen = HashSet::new();
    for d in &docs {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(Error::DuplicateDocId(d.doc_id.clone()));
        }
    }
    Ok(docs)
}

fn is_abbreviation(word: &str) -> bool {
    let lower = word.to_lowercase();
    // Leading punctuation such as "(" does not change the abbreviation.
    let lower = lower.trim_start_matches(|c: char| !c.is_alphanumeric());
    ABBREVIATIONS.contains(&lower)
}

/// Rule-based sentence segmentation.
///
/// A boundary sits after `.`, `!` or `?` when the terminator is followed by
/// whitespace and then an uppercase letter or a digit, unless the word
/// ending at a period is a known abbreviation.
pub fn segment_text(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut segments = Vec::new();
    let mut start = 0usize;
    let mut word_start = 0usize;

    for (k, &(pos, c)) in chars.iter().enumerate() {
        if c.is_whitespace() {
            word_start = pos + c.len_utf8();
            continue;
        }
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let end = pos + c.len_utf8();
        let mut j = k + 1;
        if j >= chars.len() || !chars[j].1.is_whitespace() {
            continue;
        }
        while j < chars.len() && chars[j].1.is_whitespace() {
            j += 1;
        }
        let Some(&(_, next)) = chars.get(j) else {
            continue;
        };
        if !(next.is_uppercase() || next.is_ascii_digit()) {
            continue;
        }
        if c == '.' && is_abbreviation(&text[word_start..end]) {
            continue;
        }
        let seg = text[start..end].trim();
        if !seg.is_empty() {
            segments.push(seg);
        }
        start = end;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        segments.push(tail);
    }
    segments
}

pub fn segment_document(doc: &RawDocument) -> Vec<&str> {
    segment_text(&doc.text)
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Text and word count of an accepted sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanSentence {
    pub text: String,
    pub word_count: usize,
}

/// Applies the cleaning rules to one raw sentence.
///
/// Lowercases and truncates to the first [`MAX_WORDS`] words (joined by single
/// spaces) before filtering, so every accepted sentence has
/// `MIN_WORDS <= word_count <= MAX_WORDS`.
pub fn preprocess_sentence(raw: &str, blacklist: &Blacklist) -> Option<CleanSentence> {
    let lower = raw.to_lowercase();
    let words: Vec<&str> = lower.split_whitespace().take(MAX_WORDS).collect();
    if words.len() < MIN_WORDS {
        return None;
    }
    let text = words.join(" ");
    if !text.chars().any(char::is_alphabetic) {
        return None;
    }
    if blacklist.matches(&text) {
        return None;
    }
    Some(CleanSentence {
        word_count: words.len(),
        text,
    })
}

/// Segments and cleans one document. `sent_index` counts retained sentences.
pub fn ingest_document(doc: &RawDocument, blacklist: &Blacklist) -> Vec<Sentence> {
    segment_document(doc)
        .into_iter()
        .filter_map(|raw| preprocess_sentence(raw, blacklist))
        .enumerate()
        .map(|(i, s)| Sentence {
            doc_id: doc.doc_id.clone(),
            meeting_date: doc.meeting_date,
            sent_index: i,
            text: s.text,
            word_count: s.word_count,
        })
        .collect()
}

fn median(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

/// Max / median / min of a non-empty list.
fn summarize(mut values: Vec<usize>) -> (usize, f64, usize) {
    values.sort_unstable();
    (values[values.len() - 1], median(&values), values[0])
}

/// Document lengths are raw whitespace word counts; sentence lengths are the
/// cleaned word counts.
pub fn corpus_stats(docs: &[RawDocument], sentences: &[Sentence]) -> Result<CorpusStats> {
    if docs.is_empty() || sentences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let doc_lens: Vec<usize> = docs.iter().map(|d| word_count(&d.text)).collect();
    let n_words = doc_lens.iter().sum();
    let (doc_len_max, doc_len_median, doc_len_min) = summarize(doc_lens);
    let (sent_len_max, sent_len_median, sent_len_min) =
        summarize(sentences.iter().map(|s| s.word_count).collect());
    Ok(CorpusStats {
        n_documents: docs.len(),
        n_words,
        doc_len_max,
        doc_len_median,
        doc_len_min,
        n_sentences: sentences.len(),
        sent_len_max,
        sent_len_median,
        sent_len_min,
    })
}
