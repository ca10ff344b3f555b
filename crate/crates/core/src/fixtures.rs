//! Synthetic, separable span corpus.
//!
//! Sentences are drawn from a neutral vocabulary; a configurable share of
//! them contain one run of "loaded" marker words, and the gold span wraps
//! exactly that run. Marker runs are sometimes quoted, with the quotes left
//! outside the gold span. Alongside the text the generator emits POS and
//! parse-path sidecars, an affect-like and a semantic-class-like lexicon,
//! and the loaded-word list.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{decode_article, project_spans, tokenize, Article, Corpus, Span};
use crate::error::{Error, Result};
use crate::lexfeatures::{Lexicon, TokenAnnotations};
use crate::neuralcore::seeded_rng;
use crate::spanops::{merge_spans, DEFAULT_STOPWORDS};

pub const NEUTRAL_WORDS: &[&str] = &[
    "report", "city", "council", "meeting", "weather", "market", "school", "river", "road",
    "people", "family", "morning", "evening", "week", "year", "plan", "budget", "office",
    "street", "garden", "train", "station", "bridge", "house", "village", "farmer", "teacher",
    "doctor", "nurse", "driver", "letter", "paper", "book", "story", "record", "number",
    "water", "bread", "coffee", "table", "window", "door", "light", "music", "picture",
    "result", "system", "project", "program", "service", "policy", "office", "company",
    "worker", "visitor", "student", "player", "team", "game", "season", "summer", "winter",
    "spring", "autumn", "north", "south", "east", "west", "local", "regional", "annual",
    "new", "old", "small", "large", "early", "late", "quiet", "busy", "public", "private",
    "said", "made", "went", "came", "took", "gave", "found", "kept", "held", "met",
    "opened", "closed", "visited", "reported", "announced", "discussed", "planned", "moved",
    "built", "painted", "counted", "listed", "shared", "noted", "today", "yesterday", "again",
    "soon", "later", "there", "here", "also", "still", "mostly", "often",
];

pub const FUNCTION_WORDS: &[&str] = &["the", "a", "of", "to", "in", "on", "and", "with", "for", "at"];

pub const LOADED_WORDS: &[&str] = &[
    "evil", "corrupt", "invader", "invaders", "thugs", "disgraceful", "treacherous", "vile",
    "brutal", "sinister", "traitor", "traitors", "tyranny", "shameful", "monstrous",
    "despicable", "barbaric", "catastrophic", "outrageous", "fanatics", "savage", "pathetic",
    "criminals", "betrayal", "destroy", "hateful", "lunatic", "wicked", "disaster", "cowardly",
];

pub const POS_TAGS: &[&str] = &["NN", "VB", "JJ", "DT", "IN", "RB", "PUNCT"];

const SEMANTIC_CLASSES: usize = 6;
const AFFECT_DIM: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub articles: usize,
    pub sentences_per_article: usize,
    /// Share of sentences that contain a marker run.
    pub prop_rate: f64,
    /// Share of marker runs wrapped in double quotes.
    pub quote_rate: f64,
    pub dev_fraction: f64,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            articles: 100,
            sentences_per_article: 20,
            prop_rate: 0.3,
            quote_rate: 0.15,
            dev_fraction: 0.2,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub train: Corpus,
    pub dev: Corpus,
    pub parse: TokenAnnotations,
    pub pos: TokenAnnotations,
    pub affect: Lexicon,
    pub semantic: Lexicon,
    pub loaded_words: BTreeSet<String>,
}

fn word_tag(word: &str) -> &'static str {
    if LOADED_WORDS.contains(&word) {
        return if word.ends_with('s') || matches!(word, "invader" | "traitor" | "tyranny" | "betrayal" | "disaster") {
            "NN"
        } else {
            "JJ"
        };
    }
    if FUNCTION_WORDS.contains(&word) {
        return if matches!(word, "the" | "a") { "DT" } else { "IN" };
    }
    match word.len() % 4 {
        0 => "NN",
        1 => "VB",
        2 => "JJ",
        _ => "RB",
    }
}

fn parse_path(word: &str, tag: &str, in_marker: bool) -> String {
    if tag == "PUNCT" {
        return "S".into();
    }
    if in_marker {
        return format!("{tag}/ADJP/NP/VP/S");
    }
    match word.len() % 3 {
        0 => format!("{tag}/NP/S"),
        1 => format!("{tag}/VP/S"),
        _ => format!("{tag}/PP/VP/S"),
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// One generated sentence: text, gold span (sentence-relative char
/// offsets), and which words belong to the marker run.
struct SentenceDraft {
    text: String,
    span: Option<(usize, usize)>,
    marker_words: BTreeSet<usize>,
}

fn draft_sentence<R: Rng>(rng: &mut R, config: &FixtureConfig) -> SentenceDraft {
    let len = rng.random_range(5..=12);
    let mut words: Vec<String> = (0..len)
        .map(|_| {
            if rng.random_bool(0.25) {
                FUNCTION_WORDS.choose(rng).unwrap().to_string()
            } else {
                NEUTRAL_WORDS.choose(rng).unwrap().to_string()
            }
        })
        .collect();
    let mut marker = None;
    if rng.random_bool(config.prop_rate) {
        let run = rng.random_range(1..=3);
        let at = rng.random_range(1..=words.len());
        let run_words: Vec<String> = (0..run).map(|_| LOADED_WORDS.choose(rng).unwrap().to_string()).collect();
        words.splice(at..at, run_words);
        marker = Some((at, at + run));
    }
    let quoted = marker.is_some() && rng.random_bool(config.quote_rate);
    let mut text = String::new();
    let mut span = None;
    let mut marker_words = BTreeSet::new();
    let mut pos = 0usize;
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            text.push(' ');
            pos += 1;
        }
        if quoted && marker.is_some_and(|(a, _)| a == i) {
            text.push('"');
            pos += 1;
        }
        let word = if i == 0 { capitalize(w) } else { w.clone() };
        let start = pos;
        text.push_str(&word);
        pos += word.chars().count();
        if let Some((a, b)) = marker {
            if i >= a && i < b {
                marker_words.insert(i);
                span = Some(match span {
                    None => (start, pos),
                    Some((s, _)) => (s, pos),
                });
            }
            if quoted && i + 1 == b {
                text.push('"');
                pos += 1;
            }
        }
    }
    text.push(if rng.random_bool(0.1) { '!' } else { '.' });
    SentenceDraft {
        text,
        span,
        marker_words,
    }
}

fn build_lexicons<R: Rng>(rng: &mut R) -> (Lexicon, Lexicon) {
    let mut affect = BTreeMap::new();
    for w in LOADED_WORDS {
        let v: Vec<f64> = (0..AFFECT_DIM)
            .map(|d| if d < 5 { rng.random_range(0.5..1.0) } else { rng.random_range(0.0..0.3) })
            .collect();
        affect.insert(w.to_string(), v);
    }
    for w in NEUTRAL_WORDS.iter().step_by(4) {
        let v: Vec<f64> = (0..AFFECT_DIM)
            .map(|d| if d < 5 { rng.random_range(0.0..0.3) } else { rng.random_range(0.2..0.6) })
            .collect();
        affect.insert(w.to_string(), v);
    }
    let mut semantic = BTreeMap::new();
    let one_hot = |k: usize| -> Vec<f64> { (0..SEMANTIC_CLASSES).map(|i| f64::from(u8::from(i == k))).collect() };
    for (i, w) in LOADED_WORDS.iter().enumerate() {
        semantic.insert(w.to_string(), one_hot(i % 2));
    }
    for (i, w) in NEUTRAL_WORDS.iter().enumerate().step_by(3) {
        semantic.insert(w.to_string(), one_hot(2 + i % 4));
    }
    (
        Lexicon {
            name: "affect".into(),
            dimension: AFFECT_DIM,
            entries: affect,
        },
        Lexicon {
            name: "semantic".into(),
            dimension: SEMANTIC_CLASSES,
            entries: semantic,
        },
    )
}

pub fn generate(config: &FixtureConfig) -> Result<SyntheticCorpus> {
    if config.articles < 2 || config.sentences_per_article == 0 {
        return Err(Error::Config("need at least 2 articles and 1 sentence per article".into()));
    }
    if !(0.0..=1.0).contains(&config.prop_rate) || !(0.0..=1.0).contains(&config.quote_rate) {
        return Err(Error::Config("prop_rate and quote_rate must lie in [0, 1]".into()));
    }
    let mut rng = seeded_rng(config.seed, 0xF1);
    let n_dev = ((config.articles as f64 * config.dev_fraction).round() as usize).clamp(1, config.articles - 1);
    let mut train = Corpus::default();
    let mut dev = Corpus::default();
    let mut parse = TokenAnnotations::default();
    let mut pos = TokenAnnotations::default();

    for a in 0..config.articles {
        let id = format!("{}", 700_000 + a);
        let mut text = String::new();
        let mut spans = Vec::new();
        let mut markers: Vec<BTreeSet<usize>> = Vec::new();
        for s in 0..config.sentences_per_article {
            if s > 0 {
                text.push(if s % 5 == 0 { '\n' } else { ' ' });
            }
            let offset = text.chars().count();
            let d = draft_sentence(&mut rng, config);
            text.push_str(&d.text);
            if let Some((b, e)) = d.span {
                spans.push(Span::new(&id, offset + b, offset + e));
            }
            markers.push(d.marker_words);
        }
        let article = Article::new(&id, text);
        if article.num_sentences() != config.sentences_per_article {
            return Err(Error::Invalid(format!(
                "generated article {id} split into {} sentences, expected {}",
                article.num_sentences(),
                config.sentences_per_article
            )));
        }
        let tokens = tokenize(&article);
        // word index within the sentence, skipping quote and final punctuation tokens
        let mut word_idx = vec![0usize; article.num_sentences()];
        let mut tok_idx = vec![0usize; article.num_sentences()];
        for t in &tokens {
            let si = t.sentence_idx;
            let is_word = t.surface.chars().all(char::is_alphanumeric);
            let lower = t.surface.to_lowercase();
            let (tag, in_marker) = if is_word {
                let in_marker = markers[si].contains(&word_idx[si]);
                word_idx[si] += 1;
                (word_tag(&lower), in_marker)
            } else {
                ("PUNCT", false)
            };
            pos.insert(&id, si, tok_idx[si], tag);
            parse.insert(&id, si, tok_idx[si], parse_path(&lower, tag, in_marker));
            tok_idx[si] += 1;
        }
        // gold spans must survive a project/decode round trip exactly
        let labels = project_spans(&article, &tokens, &spans);
        if decode_article(&article, &tokens, &labels) != merge_spans(&spans) {
            return Err(Error::Invalid(format!("fixture article {id} failed the span round trip")));
        }
        let target = if a >= config.articles - n_dev { &mut dev } else { &mut train };
        target.articles.push(article);
        target.spans.extend(spans);
    }
    let (affect, semantic) = build_lexicons(&mut rng);
    Ok(SyntheticCorpus {
        train,
        dev,
        parse,
        pos,
        affect,
        semantic,
        loaded_words: LOADED_WORDS.iter().map(|s| s.to_string()).collect(),
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn lexicon_tsv(lex: &Lexicon) -> String {
    let mut out = format!("#dimension={}\n", lex.dimension);
    for (w, v) in &lex.entries {
        out.push_str(w);
        for x in v {
            out.push_str(&format!("\t{x}"));
        }
        out.push('\n');
    }
    out
}

fn annotations_tsv(corpus: &[&Corpus], ann: &TokenAnnotations) -> Result<String> {
    let mut out = String::new();
    for c in corpus {
        for a in &c.articles {
            let tokens = tokenize(a);
            let sentences = crate::corpus::sentence_slices(&tokens, a.num_sentences());
            for (si, s) in sentences.iter().enumerate() {
                for (ti, value) in ann.for_sentence(&a.id, si, s.len())?.into_iter().enumerate() {
                    if let Some(v) = value {
                        out.push_str(&format!("{}\t{si}\t{ti}\t{v}\n", a.id));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Relative paths of everything [`SyntheticCorpus::write_to`] produces.
pub mod layout {
    pub const TRAIN_ARTICLES: &str = "train/articles";
    pub const TRAIN_LABELS: &str = "train/labels.tsv";
    pub const DEV_ARTICLES: &str = "dev/articles";
    pub const DEV_LABELS: &str = "dev/labels.tsv";
    pub const PARSE: &str = "annotations/parse.tsv";
    pub const POS: &str = "annotations/pos.tsv";
    pub const AFFECT_LEXICON: &str = "lexicons/affect.tsv";
    pub const SEMANTIC_LEXICON: &str = "lexicons/semantic.tsv";
    pub const LOADED_LANGUAGE: &str = "lexicons/loaded_language.txt";
    pub const STOPWORDS: &str = "lexicons/stopwords.txt";
    pub const POS_TAGSET: &str = "lexicons/pos_tags.txt";
}

impl SyntheticCorpus {
    /// Writes articles, labels, sidecars and lexicons under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for (corpus, articles, labels) in [
            (&self.train, layout::TRAIN_ARTICLES, layout::TRAIN_LABELS),
            (&self.dev, layout::DEV_ARTICLES, layout::DEV_LABELS),
        ] {
            for a in &corpus.articles {
                write(&dir.join(articles).join(format!("article{}.txt", a.id)), &a.text)?;
            }
            write(&dir.join(labels), &crate::corpus::format_spans(&corpus.spans))?;
        }
        write(&dir.join(layout::PARSE), &annotations_tsv(&[&self.train, &self.dev], &self.parse)?)?;
        write(&dir.join(layout::POS), &annotations_tsv(&[&self.train, &self.dev], &self.pos)?)?;
        write(&dir.join(layout::AFFECT_LEXICON), &lexicon_tsv(&self.affect))?;
        write(&dir.join(layout::SEMANTIC_LEXICON), &lexicon_tsv(&self.semantic))?;
        let words: Vec<&str> = self.loaded_words.iter().map(String::as_str).collect();
        write(&dir.join(layout::LOADED_LANGUAGE), &(words.join("\n") + "\n"))?;
        write(&dir.join(layout::STOPWORDS), &(DEFAULT_STOPWORDS.join("\n") + "\n"))?;
        write(&dir.join(layout::POS_TAGSET), &(POS_TAGS.join("\n") + "\n"))?;
        Ok(())
    }

    pub fn num_sentences(&self) -> usize {
        self.train
            .articles
            .iter()
            .chain(&self.dev.articles)
            .map(Article::num_sentences)
            .sum()
    }
}
