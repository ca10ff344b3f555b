//! Run configuration file. Relative paths resolve against the file's directory.

use std::path::{Path, PathBuf};

use mgspan::corpus::{apply_sentence_bounds, load_corpus, read_sentence_bounds, Corpus};
use mgspan::lexfeatures::{load_lexicon, load_word_list, Lexicon, TokenAnnotations};
use mgspan::trainer::{EncoderConfig, FeatureFlags, TrainConfig};
use mgspan::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train_articles: PathBuf,
    pub train_labels: PathBuf,
    pub dev_articles: PathBuf,
    pub dev_labels: PathBuf,
    #[serde(default)]
    pub parse: Option<PathBuf>,
    #[serde(default)]
    pub pos: Option<PathBuf>,
    /// POS tagset, one tag per line.
    #[serde(default)]
    pub pos_tags: Option<PathBuf>,
    /// Sentence boundaries to use instead of the built-in splitter.
    #[serde(default)]
    pub sentences: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconPaths {
    pub affect: Vec<PathBuf>,
    pub semantic: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataPaths,
    #[serde(default)]
    pub lexicons: LexiconPaths,
    #[serde(default)]
    pub features: FeatureFlags,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Json {
            context: format!("config {}", path.display()),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let d = &mut cfg.data;
        for p in [&mut d.train_articles, &mut d.train_labels, &mut d.dev_articles, &mut d.dev_labels] {
            resolve(base, p);
        }
        for p in [&mut d.parse, &mut d.pos, &mut d.pos_tags, &mut d.sentences].into_iter().flatten() {
            resolve(base, p);
        }
        for p in cfg.lexicons.affect.iter_mut().chain(cfg.lexicons.semantic.iter_mut()) {
            resolve(base, p);
        }
        Ok(cfg)
    }

    /// Every file or directory the run reads.
    pub fn inputs(&self) -> Vec<PathBuf> {
        let d = &self.data;
        let mut v = vec![
            d.train_articles.clone(),
            d.train_labels.clone(),
            d.dev_articles.clone(),
            d.dev_labels.clone(),
        ];
        v.extend([&d.parse, &d.pos, &d.pos_tags, &d.sentences].into_iter().flatten().cloned());
        v.extend(self.lexicons.affect.iter().chain(&self.lexicons.semantic).cloned());
        v
    }
}

/// Everything loaded from disk for one run.
pub struct LoadedData {
    pub train: Corpus,
    pub dev: Corpus,
    pub parse: Option<TokenAnnotations>,
    pub pos: Option<TokenAnnotations>,
    pub pos_tags: Vec<String>,
    pub affect: Vec<Lexicon>,
    pub semantic: Vec<Lexicon>,
}

fn lexicons(paths: &[PathBuf], kind: &str) -> Result<Vec<Lexicon>> {
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("{kind}{i}"));
            let load = load_lexicon(p, &name)?;
            if load.duplicates > 0 {
                log::warn!("lexicon {}: {} duplicate entries, last one kept", p.display(), load.duplicates);
            }
            Ok(load.lexicon)
        })
        .collect()
}

pub fn load_data(cfg: &RunConfig) -> Result<LoadedData> {
    let d = &cfg.data;
    let mut train = load_corpus(&d.train_articles, &d.train_labels)?;
    let mut dev = load_corpus(&d.dev_articles, &d.dev_labels)?;
    if let Some(path) = &d.sentences {
        let bounds = read_sentence_bounds(path)?;
        apply_sentence_bounds(&mut train.articles, &bounds)?;
        apply_sentence_bounds(&mut dev.articles, &bounds)?;
    }
    let pos_tags = match &d.pos_tags {
        Some(p) => load_word_list(p)?,
        None if d.pos.is_some() => mgspan::fixtures::POS_TAGS.iter().map(|s| s.to_string()).collect(),
        None => Vec::new(),
    };
    Ok(LoadedData {
        train,
        dev,
        parse: d.parse.as_deref().map(TokenAnnotations::load).transpose()?,
        pos: d.pos.as_deref().map(TokenAnnotations::load).transpose()?,
        pos_tags,
        affect: lexicons(&cfg.lexicons.affect, "affect")?,
        semantic: lexicons(&cfg.lexicons.semantic, "semantic")?,
    })
}
