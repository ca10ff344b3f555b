//! Word-, sentence- and document-level feature vectors.
//!
//! Word features are built per token from, in this order: every lexicon's
//! vector (zeros when the word is absent), the salience score, and a POS
//! one-hot. The parse path is not a column; it is hashed to an index that
//! the model embeds.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{project_spans, sentence_slices, tokenize, Article, Label, Span, Token};
use crate::error::{Error, Result};
use crate::neuralcore::Tensor;

pub const DEFAULT_PARSE_VOCAB: usize = 4096;

/// Number of surface statistics appended to the pooled word features.
pub const SURFACE_STATS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub name: String,
    pub dimension: usize,
    pub entries: BTreeMap<String, Vec<f64>>,
}

impl Lexicon {
    pub fn lookup(&self, word: &str) -> Option<&[f64]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    /// Fraction of tokens with no entry.
    pub fn miss_rate<'a>(&self, words: impl IntoIterator<Item = &'a str>) -> f64 {
        let (mut total, mut misses) = (0usize, 0usize);
        for w in words {
            total += 1;
            if self.lookup(w).is_none() {
                misses += 1;
            }
        }
        if total == 0 {
            0.0
        } else {
            misses as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconLoad {
    pub lexicon: Lexicon,
    /// Rows whose word had already been seen; the last row wins.
    pub duplicates: usize,
}

fn parse_dimension_header(line: &str) -> Option<usize> {
    let body = line.trim_start_matches('#').trim();
    let (key, value) = body.split_once('=')?;
    if key.trim() == "dimension" {
        value.trim().parse().ok()
    } else {
        None
    }
}

/// One entry per non-empty line, trimmed, `#` comments skipped.
pub fn load_word_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_word_list(&text))
}

pub fn parse_word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Reads a lexicon TSV: `word\tv1\t...\tvk` with constant `k`.
///
/// Lines starting with `#` are comments; a `#dimension=<k>` comment fixes
/// the dimension, which is how an empty lexicon declares its width.
pub fn load_lexicon(path: &Path, name: &str) -> Result<LexiconLoad> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(path, name, &text)
}

pub fn parse_lexicon(path: &Path, name: &str, text: &str) -> Result<LexiconLoad> {
    let mut dimension: Option<usize> = None;
    let mut entries = BTreeMap::new();
    let mut duplicates = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(d) = parse_dimension_header(line) {
                dimension = Some(d);
            }
            continue;
        }
        let mut fields = line.split('\t');
        let word = fields.next().unwrap_or_default().trim().to_lowercase();
        let values = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(path, line_no, format!("bad score '{f}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if word.is_empty() || values.is_empty() {
            return Err(Error::parse(path, line_no, "expected word followed by scores"));
        }
        match dimension {
            Some(d) if d != values.len() => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("ragged row: {} scores, expected {d}", values.len()),
                ))
            }
            None => dimension = Some(values.len()),
            _ => {}
        }
        if entries.insert(word, values).is_some() {
            duplicates += 1;
        }
    }
    let dimension = dimension.ok_or_else(|| {
        Error::parse(path, 0, "empty lexicon needs a '#dimension=<k>' header")
    })?;
    if dimension == 0 {
        return Err(Error::parse(path, 0, "lexicon dimension must be at least 1"));
    }
    if duplicates > 0 {
        log::warn!("lexicon {name}: {duplicates} duplicate words, last entry kept");
    }
    Ok(LexiconLoad {
        lexicon: Lexicon {
            name: name.to_string(),
            dimension,
            entries,
        },
        duplicates,
    })
}

/// Per-word in-span vs out-of-span counts over the training split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SalienceTable {
    counts: BTreeMap<String, (u64, u64)>,
    /// Article ids the counts were taken from.
    pub source_articles: Vec<String>,
}

impl SalienceTable {
    /// Add-one smoothed share of in-span occurrences; 0.5 for unseen words.
    pub fn score(&self, word: &str) -> f64 {
        let (inside, outside) = self
            .counts
            .get(&word.to_lowercase())
            .copied()
            .unwrap_or((0, 0));
        (inside as f64 + 1.0) / ((inside + outside) as f64 + 2.0)
    }

    pub fn counts(&self, word: &str) -> (u64, u64) {
        self.counts.get(&word.to_lowercase()).copied().unwrap_or((0, 0))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Counts every token occurrence as inside (token overlaps a gold span) or
/// outside. Must only be fed training articles.
pub fn build_salience(train_articles: &[Article], train_spans: &[Span]) -> SalienceTable {
    let mut counts: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for article in train_articles {
        let tokens = tokenize(article);
        let labels = project_spans(article, &tokens, train_spans);
        let sentences = sentence_slices(&tokens, article.num_sentences());
        for (sentence, seq) in sentences.into_iter().zip(&labels) {
            for (tok, label) in sentence.iter().zip(&seq.labels) {
                let entry = counts.entry(tok.surface.to_lowercase()).or_default();
                match label {
                    Label::Prop => entry.0 += 1,
                    Label::NonProp => entry.1 += 1,
                }
            }
        }
    }
    SalienceTable {
        counts,
        source_articles: train_articles.iter().map(|a| a.id.clone()).collect(),
    }
}

/// Token-aligned string annotations from a sidecar file:
/// `<article_id>\t<sent_idx>\t<tok_idx>\t<value>`.
#[derive(Debug, Clone, Default)]
pub struct TokenAnnotations {
    map: HashMap<(String, usize, usize), String>,
}

impl TokenAnnotations {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.splitn(4, '\t').collect();
            if fields.len() != 4 {
                return Err(Error::parse(
                    path,
                    i + 1,
                    "expected <article_id>\\t<sent_idx>\\t<tok_idx>\\t<value>",
                ));
            }
            let sent = fields[1]
                .parse()
                .map_err(|_| Error::parse(path, i + 1, "bad sentence index"))?;
            let tok = fields[2]
                .parse()
                .map_err(|_| Error::parse(path, i + 1, "bad token index"))?;
            map.insert((fields[0].to_string(), sent, tok), fields[3].to_string());
        }
        Ok(TokenAnnotations { map })
    }

    pub fn insert(&mut self, article_id: &str, sent: usize, tok: usize, value: impl Into<String>) {
        self.map.insert((article_id.to_string(), sent, tok), value.into());
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Values for one sentence, aligned to its tokens. Annotations pointing
    /// past the last token are a length mismatch.
    pub fn for_sentence(&self, article_id: &str, sent: usize, n_tokens: usize) -> Result<Vec<Option<String>>> {
        let mut out = vec![None; n_tokens];
        for ((a, s, t), v) in &self.map {
            if a == article_id && *s == sent {
                if *t >= n_tokens {
                    return Err(Error::Invalid(format!(
                        "annotation for {article_id} sentence {sent} token {t}, but the sentence has {n_tokens} tokens"
                    )));
                }
                out[*t] = Some(v.clone());
            }
        }
        Ok(out)
    }
}

/// Splits a `NP/VP/S` style annotation value into labels.
pub fn parse_path_labels(value: &str) -> Vec<String> {
    value
        .split('/')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Embedding index of a word-to-root path. Index 0 is reserved for tokens
/// without a path.
pub fn parse_path_id(labels: &[String], vocab: usize) -> usize {
    if labels.is_empty() || vocab < 2 {
        return 0;
    }
    1 + (fnv1a(labels.join("/").as_bytes()) % (vocab as u64 - 1)) as usize
}

/// Everything needed to turn tokens into word features. Stored with a
/// trained model so prediction featurizes identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub lexicons: Vec<Lexicon>,
    pub salience: Option<SalienceTable>,
    /// POS tagset; empty disables the one-hot block.
    pub pos_tags: Vec<String>,
    pub use_parse: bool,
    pub parse_vocab: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            lexicons: Vec::new(),
            salience: Some(SalienceTable::default()),
            pos_tags: Vec::new(),
            use_parse: false,
            parse_vocab: DEFAULT_PARSE_VOCAB,
        }
    }
}

impl FeatureSpec {
    pub fn word_dim(&self) -> usize {
        self.lexicons.iter().map(|l| l.dimension).sum::<usize>()
            + usize::from(self.salience.is_some())
            + self.pos_tags.len()
    }

    pub fn sentence_dim(&self) -> usize {
        self.word_dim() + SURFACE_STATS
    }

    pub fn document_dim(&self) -> usize {
        self.sentence_dim()
    }
}

/// Optional per-token annotations for one sentence.
#[derive(Debug, Clone, Copy, Default)]
pub struct SentenceAnnotations<'a> {
    pub parse: Option<&'a [Option<String>]>,
    pub pos: Option<&'a [Option<String>]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordFeatures {
    /// `[n_tokens x d_w]`
    pub matrix: Tensor,
    pub parse_ids: Vec<usize>,
}

pub fn word_features(
    tokens: &[Token],
    spec: &FeatureSpec,
    annotations: SentenceAnnotations<'_>,
) -> Result<WordFeatures> {
    let n = tokens.len();
    for (what, ann) in [("parse", annotations.parse), ("POS", annotations.pos)] {
        if let Some(a) = ann {
            if a.len() != n {
                return Err(Error::Invalid(format!(
                    "{what} annotation has {} entries for {n} tokens",
                    a.len()
                )));
            }
        }
    }
    let d = spec.word_dim();
    let mut data = Vec::with_capacity(n * d);
    let mut parse_ids = Vec::with_capacity(n);
    for (i, tok) in tokens.iter().enumerate() {
        for lex in &spec.lexicons {
            match lex.lookup(&tok.surface) {
                Some(v) => data.extend_from_slice(v),
                None => data.extend(std::iter::repeat_n(0.0, lex.dimension)),
            }
        }
        if let Some(sal) = &spec.salience {
            data.push(sal.score(&tok.surface));
        }
        if !spec.pos_tags.is_empty() {
            let tag = annotations.pos.and_then(|p| p[i].as_deref());
            for t in &spec.pos_tags {
                data.push(if Some(t.as_str()) == tag { 1.0 } else { 0.0 });
            }
        }
        let pid = if spec.use_parse {
            annotations
                .parse
                .and_then(|p| p[i].as_deref())
                .map_or(0, |v| parse_path_id(&parse_path_labels(v), spec.parse_vocab))
        } else {
            0
        };
        parse_ids.push(pid);
    }
    let matrix = Tensor::matrix(n, d, data)?;
    matrix.ensure_finite("word features")?;
    Ok(WordFeatures { matrix, parse_ids })
}

fn is_capitalized(surface: &str) -> bool {
    surface.chars().next().is_some_and(char::is_uppercase)
}

fn is_punctuation(surface: &str) -> bool {
    let mut chars = surface.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if !c.is_alphanumeric())
}

/// Mean word-feature row followed by token count, capitalized fraction and
/// punctuation fraction. An empty sentence yields zeros.
pub fn sentence_features(tokens: &[Token], f_word: &Tensor) -> Vec<f64> {
    let d = f_word.cols();
    let n = tokens.len();
    let mut out = vec![0.0; d + SURFACE_STATS];
    if n == 0 {
        return out;
    }
    for r in 0..f_word.rows() {
        for (o, v) in out.iter_mut().zip(f_word.row(r)) {
            *o += v;
        }
    }
    let inv = 1.0 / n as f64;
    for o in &mut out[..d] {
        *o *= inv;
    }
    out[d] = n as f64;
    out[d + 1] = tokens.iter().filter(|t| is_capitalized(&t.surface)).count() as f64 * inv;
    out[d + 2] = tokens.iter().filter(|t| is_punctuation(&t.surface)).count() as f64 * inv;
    out
}

/// Arithmetic mean of an article's sentence vectors (zeros of `dim` when
/// there are none).
pub fn document_features(sentence_vectors: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    if sentence_vectors.is_empty() {
        return out;
    }
    for v in sentence_vectors {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let inv = 1.0 / sentence_vectors.len() as f64;
    for o in &mut out {
        *o *= inv;
    }
    out
}

/// Word, sentence and document features for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub f_word: Tensor,
    pub parse_ids: Vec<usize>,
    pub f_sent: Vec<f64>,
    pub f_doc: Vec<f64>,
}

/// Sidecar annotations for a whole corpus.
#[derive(Debug, Clone, Copy, Default)]
pub struct CorpusAnnotations<'a> {
    pub parse: Option<&'a TokenAnnotations>,
    pub pos: Option<&'a TokenAnnotations>,
}

/// Featurizes every sentence of an article, including empty ones.
pub fn featurize_article(
    article: &Article,
    tokens: &[Token],
    spec: &FeatureSpec,
    annotations: CorpusAnnotations<'_>,
) -> Result<Vec<FeatureBundle>> {
    let sentences = sentence_slices(tokens, article.num_sentences());
    let mut partial = Vec::with_capacity(sentences.len());
    for (idx, sentence) in sentences.iter().enumerate() {
        let parse = annotations
            .parse
            .map(|a| a.for_sentence(&article.id, idx, sentence.len()))
            .transpose()?;
        let pos = annotations
            .pos
            .map(|a| a.for_sentence(&article.id, idx, sentence.len()))
            .transpose()?;
        let wf = word_features(
            sentence,
            spec,
            SentenceAnnotations {
                parse: parse.as_deref(),
                pos: pos.as_deref(),
            },
        )?;
        let f_sent = sentence_features(sentence, &wf.matrix);
        partial.push((wf, f_sent));
    }
    let sent_vecs: Vec<Vec<f64>> = partial.iter().map(|(_, s)| s.clone()).collect();
    let f_doc = document_features(&sent_vecs, spec.document_dim());
    Ok(partial
        .into_iter()
        .map(|(wf, f_sent)| FeatureBundle {
            f_word: wf.matrix,
            parse_ids: wf.parse_ids,
            f_sent,
            f_doc: f_doc.clone(),
        })
        .collect())
}

/// Fails if any article used for salience counts is also in `dev_ids`.
pub fn check_no_leakage(salience: &SalienceTable, dev_ids: &[String]) -> Result<()> {
    let dev: HashSet<&str> = dev_ids.iter().map(String::as_str).collect();
    if let Some(id) = salience.source_articles.iter().find(|id| dev.contains(id.as_str())) {
        return Err(Error::Invalid(format!(
            "salience table was built from dev article '{id}'"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("lex.tsv")
    }

    fn toks(words: &[&str]) -> Vec<Token> {
        let mut pos = 0;
        words
            .iter()
            .map(|w| {
                let len = w.chars().count();
                let t = Token {
                    surface: w.to_string(),
                    start: pos,
                    end: pos + len,
                    sentence_idx: 0,
                };
                pos += len + 1;
                t
            })
            .collect()
    }

    #[test]
    fn loads_simple_lexicon() {
        let l = parse_lexicon(p(), "aff", "Kill\t0.9\t0.1\n").unwrap();
        assert_eq!(l.lexicon.dimension, 2);
        assert_eq!(l.lexicon.lookup("kill"), Some(&[0.9, 0.1][..]));
        assert_eq!(l.lexicon.lookup("KILL"), Some(&[0.9, 0.1][..]));
    }

    #[test]
    fn ragged_rows_error_with_line() {
        let err = parse_lexicon(p(), "x", "a\t1\t2\nb\t1\t2\t3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn empty_lexicon_takes_dimension_from_header() {
        let l = parse_lexicon(p(), "x", "#dimension=3\n").unwrap();
        assert_eq!(l.lexicon.dimension, 3);
        assert!(l.lexicon.entries.is_empty());
        assert!(parse_lexicon(p(), "x", "").is_err());
    }

    #[test]
    fn duplicates_last_wins() {
        let l = parse_lexicon(p(), "x", "a\t1\nA\t2\n").unwrap();
        assert_eq!(l.duplicates, 1);
        assert_eq!(l.lexicon.lookup("a"), Some(&[2.0][..]));
    }

    #[test]
    fn salience_smoothing() {
        // "evil" 3x inside, 1x outside; "brutal" only inside (5x).
        let a = Article::new(
            "1",
            "evil evil evil x. evil y. brutal brutal brutal brutal brutal z.",
        );
        let spans = vec![Span::new("1", 0, 14), Span::new("1", 26, 60)];
        let s = build_salience(&[a], &spans);
        assert_eq!(s.counts("evil"), (3, 1));
        assert!((s.score("evil") - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(s.counts("brutal"), (5, 0));
        assert!((s.score("brutal") - 6.0 / 7.0).abs() < 1e-15);
        assert_eq!(s.score("unseen"), 0.5);
        assert_eq!(s.source_articles, vec!["1".to_string()]);
    }

    #[test]
    fn salience_only_features() {
        let t = toks(&["a", "b"]);
        let wf = word_features(&t, &FeatureSpec::default(), SentenceAnnotations::default()).unwrap();
        assert_eq!(wf.matrix.shape(), &[2, 1]);
        assert_eq!(wf.matrix.data(), &[0.5, 0.5]);
    }

    #[test]
    fn absent_word_gets_zero_vector() {
        let lex = parse_lexicon(p(), "x", "known\t1\t2\n").unwrap().lexicon;
        let spec = FeatureSpec {
            lexicons: vec![lex],
            salience: None,
            ..FeatureSpec::default()
        };
        let wf = word_features(&toks(&["known", "other"]), &spec, SentenceAnnotations::default()).unwrap();
        assert_eq!(wf.matrix.data(), &[1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn pos_one_hot_and_parse_ids() {
        let spec = FeatureSpec {
            salience: None,
            pos_tags: vec!["NN".into(), "JJ".into()],
            use_parse: true,
            ..FeatureSpec::default()
        };
        let pos = vec![Some("JJ".to_string()), Some("VB".to_string())];
        let parse = vec![Some("ADJP/NP/S".to_string()), None];
        let t = toks(&["big", "run"]);
        let wf = word_features(
            &t,
            &spec,
            SentenceAnnotations {
                parse: Some(&parse),
                pos: Some(&pos),
            },
        )
        .unwrap();
        assert_eq!(wf.matrix.data(), &[0.0, 1.0, 0.0, 0.0]);
        assert_ne!(wf.parse_ids[0], 0);
        assert!(wf.parse_ids[0] < DEFAULT_PARSE_VOCAB);
        assert_eq!(wf.parse_ids[1], 0);

        let short = vec![None];
        let err = word_features(
            &t,
            &spec,
            SentenceAnnotations {
                parse: Some(&short),
                pos: None,
            },
        );
        assert!(err.is_err());
    }

    #[test]
    fn annotation_past_sentence_end_is_mismatch() {
        let ann = TokenAnnotations::parse(p(), "a\t0\t5\tNN\n").unwrap();
        assert!(ann.for_sentence("a", 0, 3).is_err());
        assert_eq!(ann.for_sentence("a", 1, 3).unwrap(), vec![None, None, None]);
    }

    #[test]
    fn sentence_features_single_token() {
        let t = toks(&["Big"]);
        let f = Tensor::matrix(1, 2, vec![0.25, 0.75]).unwrap();
        assert_eq!(sentence_features(&t, &f), vec![0.25, 0.75, 1.0, 1.0, 0.0]);
        let t = toks(&["a", "b", "!", "C"]);
        let f = Tensor::zeros(&[4, 2]);
        assert_eq!(sentence_features(&t, &f), vec![0.0, 0.0, 4.0, 0.25, 0.25]);
        assert_eq!(sentence_features(&[], &Tensor::zeros(&[0, 2])), vec![0.0; 5]);
    }

    #[test]
    fn document_features_of_one_sentence() {
        let v = vec![1.0, -2.0, 3.5];
        assert_eq!(document_features(std::slice::from_ref(&v), 3), v);
        assert_eq!(document_features(&[v.clone(), v.clone()], 3), v);
    }

    #[test]
    fn leakage_is_detected() {
        let a = Article::new("train1", "x.");
        let s = build_salience(&[a], &[]);
        assert!(check_no_leakage(&s, &["dev1".into()]).is_ok());
        assert!(check_no_leakage(&s, &["train1".into()]).is_err());
    }
}
