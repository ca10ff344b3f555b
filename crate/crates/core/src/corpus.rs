//! Articles, character-offset spans, tokenization and label projection.
//!
//! All offsets are Unicode scalar-value indices into the article text,
//! half-open `[start, end)`. Byte offsets never leave this module.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary token/sentence label. Index 0 is `NonProp` so argmax ties land on
/// the majority class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    NonProp = 0,
    Prop = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Label {
        if i == 1 {
            Label::Prop
        } else {
            Label::NonProp
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub article_id: String,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(article_id: impl Into<String>, start: usize, end: usize) -> Self {
        Span {
            article_id: article_id.into(),
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlap(&self, other: &Span) -> usize {
        if self.article_id != other.article_id {
            return 0;
        }
        self.end
            .min(other.end)
            .saturating_sub(self.start.max(other.start))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    pub sentence_idx: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLabelSeq {
    pub labels: Vec<Label>,
    pub sentence_label: Label,
}

impl TokenLabelSeq {
    /// Builds a sequence whose sentence label is derived from the token labels.
    pub fn from_labels(labels: Vec<Label>) -> Self {
        let sentence_label = if labels.contains(&Label::Prop) {
            Label::Prop
        } else {
            Label::NonProp
        };
        TokenLabelSeq {
            labels,
            sentence_label,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Article {
    pub id: String,
    pub text: String,
    chars: Vec<char>,
    sentence_bounds: Vec<(usize, usize)>,
}

impl Article {
    /// Creates an article segmented with the built-in sentence splitter.
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let chars: Vec<char> = text.chars().collect();
        let sentence_bounds = split_sentences(&chars);
        Article {
            id: id.into(),
            text,
            chars,
            sentence_bounds,
        }
    }

    /// Creates an article with externally supplied sentence bounds.
    pub fn with_sentence_bounds(
        id: impl Into<String>,
        text: impl Into<String>,
        bounds: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let mut article = Article::new(id, text);
        article.set_sentence_bounds(bounds)?;
        Ok(article)
    }

    pub fn set_sentence_bounds(&mut self, bounds: Vec<(usize, usize)>) -> Result<()> {
        let len = self.chars.len();
        let mut prev_end = 0;
        for (i, &(s, e)) in bounds.iter().enumerate() {
            if s >= e || e > len {
                return Err(Error::Invalid(format!(
                    "sentence {i} of {} has bounds {s}-{e} outside text of length {len}",
                    self.id
                )));
            }
            if i > 0 && s < prev_end {
                return Err(Error::Invalid(format!(
                    "sentence bounds of {} are unsorted or overlapping at sentence {i}",
                    self.id
                )));
            }
            prev_end = e;
        }
        self.sentence_bounds = bounds;
        Ok(())
    }

    pub fn char_len(&self) -> usize {
        self.chars.len()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn sentence_bounds(&self) -> &[(usize, usize)] {
        &self.sentence_bounds
    }

    pub fn num_sentences(&self) -> usize {
        self.sentence_bounds.len()
    }

    /// Text between two character offsets.
    pub fn slice(&self, start: usize, end: usize) -> String {
        self.chars[start.min(self.chars.len())..end.min(self.chars.len())]
            .iter()
            .collect()
    }

    pub fn validate_span(&self, span: &Span) -> Result<()> {
        if span.start >= span.end {
            return Err(Error::EmptySpan {
                article_id: span.article_id.clone(),
                start: span.start,
                end: span.end,
            });
        }
        if span.end > self.chars.len() {
            return Err(Error::SpanOutOfBounds {
                article_id: span.article_id.clone(),
                start: span.start,
                end: span.end,
                len: self.chars.len(),
            });
        }
        Ok(())
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | '”' | '’' | ')' | ']' | '»')
}

/// Rule-based sentence splitter.
///
/// A sentence ends after a run of `.!?` (optionally followed by closing
/// quotes or brackets) that is followed by whitespace or end of text. A
/// newline also ends a sentence. Surrounding whitespace is excluded.
pub fn split_sentences(chars: &[char]) -> Vec<(usize, usize)> {
    let n = chars.len();
    let mut bounds = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_content = 0;
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if c == '\n' {
            if let Some(s) = start.take() {
                bounds.push((s, last_content + 1));
            }
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if start.is_none() {
            start = Some(i);
        }
        last_content = i;
        if is_terminator(c) {
            let mut j = i + 1;
            while j < n && (is_terminator(chars[j]) || is_closer(chars[j])) {
                j += 1;
            }
            if j == n || chars[j].is_whitespace() {
                bounds.push((start.take().unwrap_or(i), j));
                i = j;
                continue;
            }
            last_content = j - 1;
            i = j;
            continue;
        }
        i += 1;
    }
    if let Some(s) = start {
        bounds.push((s, last_content + 1));
    }
    bounds
}

/// Splits an article into tokens, sentence by sentence.
///
/// Whitespace separates tokens and is never part of one; each character that
/// is neither alphanumeric nor whitespace becomes its own token.
pub fn tokenize(article: &Article) -> Vec<Token> {
    let chars = article.chars();
    let mut tokens = Vec::new();
    for (sentence_idx, &(s, e)) in article.sentence_bounds().iter().enumerate() {
        let mut i = s;
        while i < e {
            let c = chars[i];
            if c.is_whitespace() {
                i += 1;
            } else if c.is_alphanumeric() {
                let start = i;
                while i < e && chars[i].is_alphanumeric() {
                    i += 1;
                }
                tokens.push(Token {
                    surface: chars[start..i].iter().collect(),
                    start,
                    end: i,
                    sentence_idx,
                });
            } else {
                tokens.push(Token {
                    surface: c.to_string(),
                    start: i,
                    end: i + 1,
                    sentence_idx,
                });
                i += 1;
            }
        }
    }
    tokens
}

/// Groups an article's tokens by sentence. Sentences without tokens yield
/// empty slices so that indices line up with `article.sentence_bounds()`.
pub fn sentence_slices(tokens: &[Token], num_sentences: usize) -> Vec<&[Token]> {
    let mut out = Vec::with_capacity(num_sentences);
    let mut pos = 0;
    for idx in 0..num_sentences {
        let begin = pos;
        while pos < tokens.len() && tokens[pos].sentence_idx == idx {
            pos += 1;
        }
        out.push(&tokens[begin..pos]);
    }
    out
}

fn coverage_mask(len: usize, article_id: &str, spans: &[Span]) -> Vec<bool> {
    let mut mask = vec![false; len];
    for span in spans.iter().filter(|s| s.article_id == article_id) {
        for m in &mut mask[span.start.min(len)..span.end.min(len)] {
            *m = true;
        }
    }
    mask
}

/// Labels every token that overlaps a span by at least one character.
///
/// Returns one sequence per sentence of the article. Spans that cross a
/// sentence boundary are split there implicitly.
pub fn project_spans(article: &Article, tokens: &[Token], spans: &[Span]) -> Vec<TokenLabelSeq> {
    let mask = coverage_mask(article.char_len(), &article.id, spans);
    sentence_slices(tokens, article.num_sentences())
        .into_iter()
        .map(|sentence| {
            let labels = sentence
                .iter()
                .map(|t| {
                    if mask[t.start..t.end].iter().any(|&m| m) {
                        Label::Prop
                    } else {
                        Label::NonProp
                    }
                })
                .collect();
            TokenLabelSeq::from_labels(labels)
        })
        .collect()
}

/// Turns maximal runs of `Prop` tokens into spans running from the first
/// token's start to the last token's end.
pub fn decode_spans(article_id: &str, tokens: &[Token], labels: &[Label]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut run: Option<(usize, usize)> = None;
    for (token, &label) in tokens.iter().zip(labels) {
        match (label, run.as_mut()) {
            (Label::Prop, Some(r)) => r.1 = token.end,
            (Label::Prop, None) => run = Some((token.start, token.end)),
            (Label::NonProp, _) => {
                if let Some((s, e)) = run.take() {
                    spans.push(Span::new(article_id, s, e));
                }
            }
        }
    }
    if let Some((s, e)) = run {
        spans.push(Span::new(article_id, s, e));
    }
    spans
}

/// Decodes every sentence of an article. Runs never cross sentences.
pub fn decode_article(article: &Article, tokens: &[Token], labels: &[TokenLabelSeq]) -> Vec<Span> {
    sentence_slices(tokens, article.num_sentences())
        .into_iter()
        .zip(labels)
        .flat_map(|(sentence, seq)| decode_spans(&article.id, sentence, &seq.labels))
        .collect()
}

/// Cuts spans at sentence bounds, dropping pieces that fall between
/// sentences.
pub fn split_at_sentences(article: &Article, spans: &[Span]) -> Vec<Span> {
    let mut out = Vec::new();
    for span in spans.iter().filter(|s| s.article_id == article.id) {
        for &(s, e) in article.sentence_bounds() {
            let start = span.start.max(s);
            let end = span.end.min(e);
            if start < end {
                out.push(Span::new(&article.id, start, end));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub articles: Vec<Article>,
    pub spans: Vec<Span>,
}

impl Corpus {
    pub fn article(&self, id: &str) -> Option<&Article> {
        self.articles.iter().find(|a| a.id == id)
    }

    pub fn spans_for<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Span> + 'a {
        self.spans.iter().filter(move |s| s.article_id == id)
    }
}

/// Reads every `article<ID>.txt` file in a directory, sorted by id.
pub fn load_articles(dir: &Path) -> Result<Vec<Article>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut articles = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(id) = name
            .strip_prefix("article")
            .and_then(|rest| rest.strip_suffix(".txt"))
        else {
            continue;
        };
        if id.is_empty() {
            continue;
        }
        let path = entry.path();
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        articles.push(Article::new(id, text));
    }
    articles.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(articles)
}

fn parse_offset(path: &Path, line: usize, field: &str, what: &str) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::parse(path, line, format!("bad {what} offset '{field}'")))
}

/// Parses a span TSV (`<article_id>\t<start>\t<end>`). Empty spans are
/// rejected here; bounds are checked against articles by [`validate_spans`].
pub fn read_spans(path: &Path) -> Result<Vec<Span>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spans(path, &text)
}

pub fn parse_spans(path: &Path, text: &str) -> Result<Vec<Span>> {
    let mut spans = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let start = parse_offset(path, line_no, fields[1], "start")?;
        let end = parse_offset(path, line_no, fields[2], "end")?;
        if start >= end {
            return Err(Error::EmptySpan {
                article_id: fields[0].to_string(),
                start,
                end,
            });
        }
        spans.push(Span::new(fields[0], start, end));
    }
    Ok(spans)
}

pub fn validate_spans(articles: &[Article], spans: &[Span]) -> Result<()> {
    let by_id: HashMap<&str, &Article> = articles.iter().map(|a| (a.id.as_str(), a)).collect();
    for span in spans {
        let article = by_id
            .get(span.article_id.as_str())
            .ok_or_else(|| Error::MissingArticle(span.article_id.clone()))?;
        article.validate_span(span)?;
    }
    Ok(())
}

/// Loads articles and a span file, validating every span.
pub fn load_corpus(articles_dir: &Path, labels_file: &Path) -> Result<Corpus> {
    let articles = load_articles(articles_dir)?;
    let spans = read_spans(labels_file)?;
    validate_spans(&articles, &spans)?;
    Ok(Corpus { articles, spans })
}

/// Formats spans as TSV in the given order.
pub fn format_spans(spans: &[Span]) -> String {
    let mut out = String::new();
    for s in spans {
        out.push_str(&format!("{}\t{}\t{}\n", s.article_id, s.start, s.end));
    }
    out
}

pub fn write_spans(path: &Path, spans: &[Span]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(format_spans(spans).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Reads a sentence-bounds sidecar: `<article_id>\t<start>\t<end>` per
/// sentence.
pub fn read_sentence_bounds(path: &Path) -> Result<BTreeMap<String, Vec<(usize, usize)>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, i + 1, "expected <article_id>\\t<start>\\t<end>"));
        }
        let start = parse_offset(path, i + 1, fields[1], "start")?;
        let end = parse_offset(path, i + 1, fields[2], "end")?;
        out.entry(fields[0].to_string()).or_default().push((start, end));
    }
    Ok(out)
}

/// Overrides sentence bounds for every article listed in the sidecar.
pub fn apply_sentence_bounds(
    articles: &mut [Article],
    bounds: &BTreeMap<String, Vec<(usize, usize)>>,
) -> Result<()> {
    for article in articles.iter_mut() {
        if let Some(b) = bounds.get(&article.id) {
            let mut b = b.clone();
            b.sort_unstable();
            article.set_sentence_bounds(b)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(surface: &str, start: usize, end: usize) -> Token {
        Token {
            surface: surface.into(),
            start,
            end,
            sentence_idx: 0,
        }
    }

    fn triples(tokens: &[Token]) -> Vec<(&str, usize, usize)> {
        tokens
            .iter()
            .map(|t| (t.surface.as_str(), t.start, t.end))
            .collect()
    }

    #[test]
    fn tokenizes_simple_sentence() {
        let a = Article::new("1", "He won.");
        assert_eq!(
            triples(&tokenize(&a)),
            vec![("He", 0, 2), ("won", 3, 6), (".", 6, 7)]
        );
    }

    #[test]
    fn tokenizer_skips_double_space() {
        let a = Article::new("1", "a  b");
        assert_eq!(triples(&tokenize(&a)), vec![("a", 0, 1), ("b", 3, 4)]);
    }

    #[test]
    fn apostrophe_is_its_own_token() {
        let a = Article::new("1", "don't");
        assert_eq!(
            triples(&tokenize(&a)),
            vec![("don", 0, 3), ("'", 3, 4), ("t", 4, 5)]
        );
    }

    #[test]
    fn offsets_are_char_indices() {
        let a = Article::new("1", "café €50 ok");
        let toks = tokenize(&a);
        assert_eq!(
            triples(&toks),
            vec![("café", 0, 4), ("€", 5, 6), ("50", 6, 8), ("ok", 9, 11)]
        );
        for t in &toks {
            assert_eq!(a.slice(t.start, t.end), t.surface);
        }
    }

    #[test]
    fn splits_sentences_on_terminators_and_newlines() {
        let a = Article::new("1", "One two. Three!  Four?\nTitle line\n\nLast \"quote.\" End");
        let pieces: Vec<String> = a
            .sentence_bounds()
            .iter()
            .map(|&(s, e)| a.slice(s, e))
            .collect();
        assert_eq!(
            pieces,
            vec!["One two.", "Three!", "Four?", "Title line", "Last \"quote.\"", "End"]
        );
    }

    #[test]
    fn decimal_point_does_not_split() {
        let a = Article::new("1", "It cost 2.5 dollars. Fine.");
        assert_eq!(a.num_sentences(), 2);
    }

    #[test]
    fn full_containment_labels_all_tokens() {
        let a = Article::new("a1", "He won.");
        let toks = tokenize(&a);
        let seqs = project_spans(&a, &toks, &[Span::new("a1", 0, 6)]);
        assert_eq!(seqs[0].labels, vec![Label::Prop, Label::Prop, Label::NonProp]);
        assert_eq!(seqs[0].sentence_label, Label::Prop);
    }

    #[test]
    fn partial_overlap_labels_token() {
        let a = Article::new("a1", "He won.");
        let toks = tokenize(&a);
        let seqs = project_spans(&a, &toks, &[Span::new("a1", 1, 2)]);
        assert_eq!(seqs[0].labels[0], Label::Prop);
        assert_eq!(seqs[0].labels[1], Label::NonProp);
    }

    #[test]
    fn no_spans_means_all_nonprop() {
        let a = Article::new("a1", "He won. Yes.");
        let toks = tokenize(&a);
        let seqs = project_spans(&a, &toks, &[]);
        assert_eq!(seqs.len(), 2);
        for s in seqs {
            assert!(s.labels.iter().all(|&l| l == Label::NonProp));
            assert_eq!(s.sentence_label, Label::NonProp);
        }
    }

    #[test]
    fn decode_includes_gap_characters() {
        let toks = vec![tok("He", 0, 2), tok("won", 3, 6), tok(".", 6, 7)];
        let spans = decode_spans("a", &toks, &[Label::Prop, Label::Prop, Label::NonProp]);
        assert_eq!(spans, vec![Span::new("a", 0, 6)]);
        assert!(decode_spans("a", &toks, &[Label::NonProp; 3]).is_empty());
    }

    #[test]
    fn split_at_sentences_cuts_crossing_span() {
        let a = Article::new("a", "One two. Three four.");
        let cut = split_at_sentences(&a, &[Span::new("a", 4, 14)]);
        assert_eq!(cut, vec![Span::new("a", 4, 8), Span::new("a", 9, 14)]);
    }

    #[test]
    fn rejects_bad_sentence_bounds() {
        assert!(Article::with_sentence_bounds("a", "abc def", vec![(0, 4), (3, 7)]).is_err());
        assert!(Article::with_sentence_bounds("a", "abc def", vec![(0, 8)]).is_err());
        let a = Article::with_sentence_bounds("a", "abc def", vec![(0, 3), (4, 7)]).unwrap();
        assert_eq!(tokenize(&a)[1].sentence_idx, 1);
    }

    #[test]
    fn parse_spans_rejects_empty_and_ragged() {
        let p = Path::new("x.tsv");
        assert_eq!(
            parse_spans(p, "a1\t0\t3\n").unwrap(),
            vec![Span::new("a1", 0, 3)]
        );
        assert!(matches!(
            parse_spans(p, "a1\t3\t3\n"),
            Err(Error::EmptySpan { .. })
        ));
        assert!(matches!(
            parse_spans(p, "a1\t3\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_spans(p, "a1\tx\t3\n").is_err());
    }
}
