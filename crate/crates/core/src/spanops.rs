//! Span algebra, post-processing and majority-vote ensembling.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{project_spans, sentence_slices, tokenize, Article, Label, Span, Token};
use crate::error::{Error, Result};

/// Per-character coverage of one article.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharMask {
    pub article_id: String,
    bits: Vec<bool>,
}

impl CharMask {
    pub fn empty(article_id: impl Into<String>, len: usize) -> Self {
        CharMask {
            article_id: article_id.into(),
            bits: vec![false; len],
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Marks every character covered by a span of this article.
pub fn to_mask(spans: &[Span], article: &Article) -> Result<CharMask> {
    let mut mask = CharMask::empty(&article.id, article.char_len());
    for span in spans.iter().filter(|s| s.article_id == article.id) {
        article.validate_span(span)?;
        mask.bits[span.start..span.end].fill(true);
    }
    Ok(mask)
}

/// Maximal runs of marked characters, in order.
pub fn from_mask(mask: &CharMask) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, &b) in mask.bits.iter().enumerate() {
        match (b, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push(Span::new(&mask.article_id, s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(Span::new(&mask.article_id, s, mask.bits.len()));
    }
    spans
}

/// Sorts spans and unions overlapping or touching ones, per article.
pub fn merge_spans(spans: &[Span]) -> Vec<Span> {
    let mut sorted = spans.to_vec();
    sorted.sort();
    let mut out: Vec<Span> = Vec::with_capacity(sorted.len());
    for s in sorted {
        if s.is_empty() {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.article_id == s.article_id && s.start <= last.end => {
                last.end = last.end.max(s.end);
            }
            _ => out.push(s),
        }
    }
    out
}

fn sorted_for(article_id: &str, spans: &[Span]) -> Vec<Span> {
    let mine: Vec<Span> = spans.iter().filter(|s| s.article_id == article_id).cloned().collect();
    merge_spans(&mine)
}

/// Merges consecutive spans separated by at most `max_gap_words` tokens.
///
/// Overlapping or touching spans always merge. When `within_sentence` is
/// set, spans whose facing tokens lie in different sentences are kept apart.
pub fn merge_gaps(spans: &[Span], tokens: &[Token], max_gap_words: usize, within_sentence: bool) -> Vec<Span> {
    let Some(article_id) = spans.first().map(|s| s.article_id.clone()) else {
        return Vec::new();
    };
    let spans = sorted_for(&article_id, spans);
    let sentence_at = |pos: usize| {
        tokens
            .iter()
            .find(|t| t.start <= pos && pos < t.end)
            .map(|t| t.sentence_idx)
    };
    let mut out: Vec<Span> = Vec::with_capacity(spans.len());
    for s in spans {
        if let Some(last) = out.last_mut() {
            let between = tokens
                .iter()
                .filter(|t| t.start >= last.end && t.end <= s.start)
                .count();
            let same_sentence = !within_sentence
                || match (sentence_at(last.end - 1), sentence_at(s.start)) {
                    (Some(a), Some(b)) => a == b,
                    _ => true,
                };
            if between <= max_gap_words && same_sentence {
                last.end = last.end.max(s.end);
                continue;
            }
        }
        out.push(s);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostProcessConfig {
    pub max_gap_words: usize,
    /// Keep gap merging inside a sentence.
    pub merge_within_sentence: bool,
    pub trim_stopwords: bool,
    pub trim_chars: BTreeSet<char>,
    pub stopwords: BTreeSet<String>,
    pub loaded_language_lexicon: Option<BTreeSet<String>>,
    pub order: Vec<PostStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostStep {
    MergeGaps,
    Trim,
    LoadedLanguage,
}

pub const DEFAULT_TRIM_CHARS: &[char] = &['"', '\'', '`', '“', '”', '‘', '’', '«', '»'];

pub const DEFAULT_ORDER: &[PostStep] = &[
    PostStep::MergeGaps,
    PostStep::Trim,
    PostStep::LoadedLanguage,
    PostStep::MergeGaps,
    PostStep::Trim,
];

/// The 50-word English function-word list used when no stopword file is
/// given.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "if", "of", "at", "by", "for", "with", "about", "to",
    "from", "in", "on", "into", "over", "under", "as", "is", "are", "was", "were", "be", "been",
    "being", "it", "its", "this", "that", "these", "those", "he", "she", "they", "we", "you", "i",
    "his", "her", "their", "our", "your", "my", "so", "than", "too", "very",
];

impl Default for PostProcessConfig {
    fn default() -> Self {
        PostProcessConfig {
            max_gap_words: 2,
            merge_within_sentence: true,
            trim_stopwords: true,
            trim_chars: DEFAULT_TRIM_CHARS.iter().copied().collect(),
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            loaded_language_lexicon: None,
            order: DEFAULT_ORDER.to_vec(),
        }
    }
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric()
}

fn trim_one(span: &Span, chars: &[char], config: &PostProcessConfig) -> Option<Span> {
    let (mut s, mut e) = (span.start, span.end);
    let strippable = |c: char| c.is_whitespace() || config.trim_chars.contains(&c);
    let is_stop = |a: usize, b: usize| {
        let w: String = chars[a..b].iter().collect();
        config.stopwords.contains(&w.to_lowercase())
    };
    loop {
        let before = (s, e);
        while s < e && strippable(chars[s]) {
            s += 1;
        }
        while e > s && strippable(chars[e - 1]) {
            e -= 1;
        }
        if config.trim_stopwords && s < e {
            // leading word must start at a word boundary and end inside the span
            if is_word(chars[s]) && (s == 0 || !is_word(chars[s - 1])) {
                let mut we = s;
                while we < chars.len() && is_word(chars[we]) {
                    we += 1;
                }
                if we <= e && is_stop(s, we) {
                    s = we;
                }
            }
        }
        if config.trim_stopwords && s < e && is_word(chars[e - 1]) && (e == chars.len() || !is_word(chars[e])) {
            let mut ws = e;
            while ws > 0 && is_word(chars[ws - 1]) {
                ws -= 1;
            }
            if ws >= s && is_stop(ws, e) {
                e = ws;
            }
        }
        if (s, e) == before {
            break;
        }
    }
    (s < e).then(|| Span::new(&span.article_id, s, e))
}

/// Strips whitespace, configured stray characters and (optionally) whole
/// stopwords from both ends of every span; spans that become empty are
/// dropped.
pub fn trim_boundaries(spans: &[Span], article: &Article, config: &PostProcessConfig) -> Vec<Span> {
    spans
        .iter()
        .filter(|s| s.article_id == article.id)
        .filter_map(|s| trim_one(s, article.chars(), config))
        .collect()
}

/// Adds a single-token span for every uncovered token whose lowercased
/// surface is in the lexicon, then re-merges.
pub fn add_loaded_language(spans: &[Span], tokens: &[Token], article_id: &str, lexicon: &BTreeSet<String>) -> Vec<Span> {
    let mut out: Vec<Span> = spans.iter().filter(|s| s.article_id == article_id).cloned().collect();
    if lexicon.is_empty() {
        return merge_spans(&out);
    }
    for tok in tokens {
        if !lexicon.contains(&tok.surface.to_lowercase()) {
            continue;
        }
        let covered = out
            .iter()
            .any(|s| s.start < tok.end && tok.start < s.end);
        if !covered {
            out.push(Span::new(article_id, tok.start, tok.end));
        }
    }
    merge_spans(&out)
}

/// Words whose in-span share over the training data reaches `min_ratio`,
/// with at least `min_count` in-span occurrences.
pub fn derive_loaded_lexicon(
    articles: &[Article],
    spans: &[Span],
    min_count: u64,
    min_ratio: f64,
) -> BTreeSet<String> {
    let mut counts: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for article in articles {
        let tokens = tokenize(article);
        let labels = project_spans(article, &tokens, spans);
        for (sentence, seq) in sentence_slices(&tokens, article.num_sentences()).into_iter().zip(&labels) {
            for (tok, label) in sentence.iter().zip(&seq.labels) {
                if !tok.surface.chars().any(char::is_alphanumeric) {
                    continue;
                }
                let e = counts.entry(tok.surface.to_lowercase()).or_default();
                if *label == Label::Prop {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
    }
    counts
        .into_iter()
        .filter(|(_, (inside, outside))| {
            *inside >= min_count.max(1) && *inside as f64 / (*inside + *outside) as f64 >= min_ratio
        })
        .map(|(w, _)| w)
        .collect()
}

/// Character-level vote: a character is kept if more than half of the masks
/// mark it, or at least `quorum` of them when given.
pub fn majority_vote(masks: &[CharMask], quorum: Option<usize>) -> Result<CharMask> {
    let first = masks
        .first()
        .ok_or_else(|| Error::Invalid("majority vote needs at least one prediction".into()))?;
    for m in masks {
        if m.len() != first.len() || m.article_id != first.article_id {
            return Err(Error::Invalid(format!(
                "vote masks disagree: {} ({} chars) vs {} ({} chars)",
                first.article_id,
                first.len(),
                m.article_id,
                m.len()
            )));
        }
    }
    let k = masks.len();
    let keep = |votes: usize| match quorum {
        Some(q) => votes >= q,
        None => 2 * votes > k,
    };
    let bits = (0..first.len())
        .map(|i| keep(masks.iter().filter(|m| m.bits[i]).count()))
        .collect();
    Ok(CharMask {
        article_id: first.article_id.clone(),
        bits,
    })
}

/// Votes over several models' span predictions for a set of articles.
pub fn ensemble(articles: &[Article], member_predictions: &[Vec<Span>], quorum: Option<usize>) -> Result<Vec<Span>> {
    let mut out = Vec::new();
    for article in articles {
        let masks = member_predictions
            .iter()
            .map(|p| to_mask(p, article))
            .collect::<Result<Vec<_>>>()?;
        out.extend(from_mask(&majority_vote(&masks, quorum)?));
    }
    Ok(out)
}

/// Applies the configured post-processing steps to one article's spans.
pub fn postprocess_article(article: &Article, tokens: &[Token], spans: &[Span], config: &PostProcessConfig) -> Vec<Span> {
    let mut cur = sorted_for(&article.id, spans);
    for step in &config.order {
        cur = match step {
            PostStep::MergeGaps => merge_gaps(&cur, tokens, config.max_gap_words, config.merge_within_sentence),
            PostStep::Trim => trim_boundaries(&cur, article, config),
            PostStep::LoadedLanguage => match &config.loaded_language_lexicon {
                Some(lex) => add_loaded_language(&cur, tokens, &article.id, lex),
                None => cur,
            },
        };
    }
    merge_spans(&cur)
}

/// Post-processes predictions for every article; output is sorted by
/// article order, then offset.
pub fn postprocess(articles: &[Article], spans: &[Span], config: &PostProcessConfig) -> Vec<Span> {
    articles
        .iter()
        .flat_map(|a| {
            let tokens = tokenize(a);
            postprocess_article(a, &tokens, spans, config)
        })
        .collect()
}
