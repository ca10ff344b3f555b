//! Class weights, the epoch loop with span-F1 early stopping, trained-model
//! artifacts and run records.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{decode_article, project_spans, tokenize, Article, Corpus, Label, Span, Token, TokenLabelSeq};
use crate::error::{Error, Result};
use crate::lexfeatures::{
    build_salience, check_no_leakage, featurize_article, CorpusAnnotations, FeatureSpec, Lexicon,
    DEFAULT_PARSE_VOCAB,
};
use crate::mgmodel::{
    JointLossConfig, MgModel, ModelConfig, SentenceBatch, SentenceLossKind, ThresholdPolicy, Vocab,
    DEFAULT_PARSE_DIM,
};
use crate::neuralcore::{seeded_rng, Adam, AdamConfig, Checkpoint, DEFAULT_LOGIT_CLAMP};
use crate::scorer::span_f1;

/// Learning rate listed for BERT fine-tuning; kept for the record only.
pub const PAPER_LEARNING_RATE: f64 = 3e-5;

pub const ARTIFACT_FORMAT: &str = "mgspan-model";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub alpha: f64,
    /// Decoupled weight decay coefficient.
    pub l2_beta: f64,
    /// Epochs without strict dev F1 improvement tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Inverse-frequency class weights on both losses.
    pub weighted: bool,
    /// Add one to every class count before computing weights.
    pub smoothing: bool,
    /// Stop as soon as dev span F1 reaches this value.
    pub target_f1: Option<f64>,
    pub sentence_loss: SentenceLossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            epochs: 20,
            lr: 1e-3,
            alpha: 0.9,
            l2_beta: 1e-4,
            patience: 9,
            seed: 1,
            weighted: true,
            smoothing: false,
            target_f1: None,
            sentence_loss: SentenceLossKind::Softmax,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.l2_beta >= 0.0 && self.l2_beta.is_finite()) {
            return Err(Error::Config("lr must be positive and l2_beta non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.patience >= self.epochs {
            log::warn!("patience {} >= epochs {}; early stopping can never trigger", self.patience, self.epochs);
        }
        Ok(())
    }
}

/// Encoder sizes and vocabulary handling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub parse_dim: usize,
    pub parse_vocab: usize,
    pub lowercase: bool,
    pub logit_clamp: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            embed_dim: 32,
            hidden: 32,
            parse_dim: DEFAULT_PARSE_DIM,
            parse_vocab: DEFAULT_PARSE_VOCAB,
            lowercase: true,
            logit_clamp: DEFAULT_LOGIT_CLAMP,
        }
    }
}

/// Feature groups, named after the ablation letters: A affect lexicons,
/// X syntax (parse path + POS), N semantic-class lexicons, S sentence
/// features, D document features; plus word salience.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureFlags {
    pub affect: bool,
    pub syntax: bool,
    pub semantic: bool,
    pub salience: bool,
    pub sentence: bool,
    pub document: bool,
}

impl Default for FeatureFlags {
    fn default() -> Self {
        FeatureFlags {
            affect: true,
            syntax: true,
            semantic: true,
            salience: true,
            sentence: true,
            document: true,
        }
    }
}

impl FeatureFlags {
    pub fn none() -> Self {
        FeatureFlags {
            affect: false,
            syntax: false,
            semantic: false,
            salience: false,
            sentence: false,
            document: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub sentence: [f64; 2],
    pub token: [f64; 2],
}

impl ClassWeights {
    pub fn unit() -> Self {
        ClassWeights {
            sentence: [1.0, 1.0],
            token: [1.0, 1.0],
        }
    }
}

/// Inverse normalized frequencies, rescaled to sum to the number of classes.
pub fn compute_class_weights(counts: &[u64], smoothing: bool) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(Error::Invalid("no classes to weight".into()));
    }
    let counts: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 + if smoothing { 1.0 } else { 0.0 })
        .collect();
    if let Some(i) = counts.iter().position(|&c| c == 0.0) {
        return Err(Error::Invalid(format!(
            "class {i} has no examples; enable smoothing to add one to every class count"
        )));
    }
    let total: f64 = counts.iter().sum();
    let raw: Vec<f64> = counts.iter().map(|c| total / c).collect();
    let scale = counts.len() as f64 / raw.iter().sum::<f64>();
    Ok(raw.into_iter().map(|w| w * scale).collect())
}

fn weights2(counts: [u64; 2], smoothing: bool) -> Result<[f64; 2]> {
    let w = compute_class_weights(&counts, smoothing)?;
    Ok([w[0], w[1]])
}

/// Inputs to one training run.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub train: &'a Corpus,
    pub dev: &'a Corpus,
    pub annotations: CorpusAnnotations<'a>,
    pub affect_lexicons: &'a [Lexicon],
    pub semantic_lexicons: &'a [Lexicon],
    pub pos_tags: &'a [String],
}

/// Everything that maps raw text to model inputs; saved with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub spec: FeatureSpec,
    pub vocab: Vocab,
    pub flags: FeatureFlags,
}

impl Featurizer {
    /// Builds vocab and salience from the training split only.
    pub fn build(data: &TrainingData<'_>, flags: FeatureFlags, encoder: &EncoderConfig) -> Featurizer {
        let train_tokens: Vec<Vec<Token>> = data.train.articles.iter().map(tokenize).collect();
        let vocab = Vocab::build(
            train_tokens.iter().flatten().map(|t| t.surface.as_str()),
            encoder.lowercase,
        );
        let mut lexicons = Vec::new();
        if flags.affect {
            lexicons.extend(data.affect_lexicons.iter().cloned());
        }
        if flags.semantic {
            lexicons.extend(data.semantic_lexicons.iter().cloned());
        }
        for lex in &lexicons {
            let miss = lex.miss_rate(train_tokens.iter().flatten().map(|t| t.surface.as_str()));
            log::info!("lexicon '{}': {:.1}% of training tokens not found", lex.name, 100.0 * miss);
        }
        let syntax = flags.syntax && encoder.parse_dim > 0;
        let spec = FeatureSpec {
            lexicons,
            salience: flags
                .salience
                .then(|| build_salience(&data.train.articles, &data.train.spans)),
            pos_tags: if flags.syntax && data.annotations.pos.is_some() {
                data.pos_tags.to_vec()
            } else {
                Vec::new()
            },
            use_parse: syntax && data.annotations.parse.is_some(),
            parse_vocab: encoder.parse_vocab,
        };
        Featurizer { spec, vocab, flags }
    }

    pub fn model_config(&self, encoder: &EncoderConfig) -> ModelConfig {
        ModelConfig {
            vocab_size: self.vocab.len(),
            embed_dim: encoder.embed_dim,
            hidden: encoder.hidden,
            parse_dim: if self.spec.use_parse { encoder.parse_dim } else { 0 },
            parse_vocab: encoder.parse_vocab,
            word_feature_dim: self.spec.word_dim(),
            sentence_feature_dim: if self.flags.sentence { self.spec.sentence_dim() } else { 0 },
            document_feature_dim: if self.flags.document { self.spec.document_dim() } else { 0 },
            logit_clamp: encoder.logit_clamp,
        }
    }

    /// One batch per sentence, empty sentences included.
    pub fn batches(
        &self,
        article: &Article,
        tokens: &[Token],
        gold: Option<&[TokenLabelSeq]>,
        annotations: CorpusAnnotations<'_>,
    ) -> Result<Vec<SentenceBatch>> {
        let annotations = CorpusAnnotations {
            parse: annotations.parse.filter(|_| self.spec.use_parse),
            pos: annotations.pos.filter(|_| !self.spec.pos_tags.is_empty()),
        };
        let bundles = featurize_article(article, tokens, &self.spec, annotations)?;
        let sentences = crate::corpus::sentence_slices(tokens, article.num_sentences());
        bundles
            .into_iter()
            .zip(sentences)
            .enumerate()
            .map(|(i, (b, toks))| {
                Ok(SentenceBatch {
                    token_ids: self.vocab.ids(toks),
                    parse_ids: if self.spec.use_parse { b.parse_ids } else { Vec::new() },
                    f_word: b.f_word,
                    f_sent: if self.flags.sentence { b.f_sent } else { Vec::new() },
                    f_doc: if self.flags.document { b.f_doc } else { Vec::new() },
                    gold: gold.map(|g| g[i].clone()),
                })
            })
            .collect()
    }
}

/// A model plus the featurizer it was trained with.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub featurizer: Featurizer,
    pub model: MgModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub version: u32,
    pub model_config: ModelConfig,
    pub featurizer: Featurizer,
    pub params: Checkpoint,
}

impl TrainedModel {
    pub fn predict_article(
        &self,
        article: &Article,
        annotations: CorpusAnnotations<'_>,
        policy: ThresholdPolicy,
    ) -> Result<Vec<Span>> {
        let tokens = tokenize(article);
        let batches = self.featurizer.batches(article, &tokens, None, annotations)?;
        predict_batches(&self.model, article, &tokens, &batches, policy)
    }

    pub fn predict_corpus(
        &self,
        articles: &[Article],
        annotations: CorpusAnnotations<'_>,
        policy: ThresholdPolicy,
    ) -> Result<Vec<Span>> {
        let mut spans = Vec::new();
        for a in articles {
            spans.extend(self.predict_article(a, annotations, policy)?);
        }
        Ok(spans)
    }

    pub fn to_artifact(&self) -> ModelArtifact {
        ModelArtifact {
            format: ARTIFACT_FORMAT.into(),
            version: ARTIFACT_VERSION,
            model_config: self.model.config.clone(),
            featurizer: self.featurizer.clone(),
            params: self.model.store.to_checkpoint(),
        }
    }

    pub fn from_artifact(artifact: &ModelArtifact) -> Result<Self> {
        if artifact.format != ARTIFACT_FORMAT || artifact.version != ARTIFACT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model artifact {} v{}",
                artifact.format, artifact.version
            )));
        }
        Ok(TrainedModel {
            featurizer: artifact.featurizer.clone(),
            model: MgModel::from_checkpoint(artifact.model_config.clone(), &artifact.params)?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&self.to_artifact()).map_err(|e| Error::Json {
            context: "model artifact".into(),
            source: e,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let artifact: ModelArtifact = serde_json::from_str(&text).map_err(|e| Error::Json {
            context: format!("model artifact {}", path.display()),
            source: e,
        })?;
        Self::from_artifact(&artifact)
    }
}

fn predict_batches(
    model: &MgModel,
    article: &Article,
    tokens: &[Token],
    batches: &[SentenceBatch],
    policy: ThresholdPolicy,
) -> Result<Vec<Span>> {
    let labels = batches
        .iter()
        .map(|b| {
            if b.is_empty() {
                Ok(TokenLabelSeq::from_labels(Vec::new()))
            } else {
                model.predict_tokens(b, policy).map(|p| p.labels)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(decode_article(article, tokens, &labels))
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss_sent: f64,
    pub loss_tok: f64,
    pub loss_total: f64,
    pub dev_precision: f64,
    pub dev_recall: f64,
    pub dev_span_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EpochsExhausted,
    Patience,
    TargetReached,
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,loss_sent,loss_tok,dev_span_f1\n");
    for m in metrics {
        out.push_str(&format!("{},{},{},{}\n", m.epoch, m.loss_sent, m.loss_tok, m.dev_span_f1));
    }
    out
}

/// Deterministic record of a training run. No timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub train_config: TrainConfig,
    pub encoder: EncoderConfig,
    pub flags: FeatureFlags,
    pub model_config: ModelConfig,
    pub optimizer: AdamConfig,
    pub paper_learning_rate: f64,
    pub class_weights: ClassWeights,
    pub train_articles: Vec<String>,
    pub dev_articles: Vec<String>,
    pub salience_source_articles: Vec<String>,
    /// Gold spans crossing a sentence boundary are split at it.
    pub cross_sentence_spans: String,
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub epochs_to_target: Option<usize>,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best dev epoch.
    pub model: TrainedModel,
    pub manifest: TrainManifest,
}

struct Prepared {
    tokens: Vec<Token>,
    batches: Vec<SentenceBatch>,
}

fn prepare(corpus: &Corpus, featurizer: &Featurizer, data: &TrainingData<'_>) -> Result<Vec<Prepared>> {
    corpus
        .articles
        .iter()
        .map(|a| {
            let tokens = tokenize(a);
            let spans: Vec<Span> = corpus.spans_for(&a.id).cloned().collect();
            let gold = project_spans(a, &tokens, &spans);
            let batches = featurizer.batches(a, &tokens, Some(&gold), data.annotations)?;
            Ok(Prepared { tokens, batches })
        })
        .collect()
}

pub fn check_split(train: &Corpus, dev: &Corpus) -> Result<()> {
    let train_ids: BTreeSet<&str> = train.articles.iter().map(|a| a.id.as_str()).collect();
    if let Some(a) = dev.articles.iter().find(|a| train_ids.contains(a.id.as_str())) {
        return Err(Error::Invalid(format!("article '{}' is in both train and dev", a.id)));
    }
    Ok(())
}

fn count_labels(prepared: &[Prepared]) -> ([u64; 2], [u64; 2]) {
    let (mut sent, mut tok) = ([0u64; 2], [0u64; 2]);
    for b in prepared.iter().flat_map(|p| &p.batches).filter(|b| !b.is_empty()) {
        let gold = b.gold.as_ref().expect("training batches carry gold");
        sent[gold.sentence_label.index()] += 1;
        for l in &gold.labels {
            tok[l.index()] += 1;
        }
    }
    (sent, tok)
}

fn dev_score(model: &MgModel, dev: &Corpus, prepared: &[Prepared]) -> Result<crate::scorer::ScoreReport> {
    let mut predicted = Vec::new();
    for (a, p) in dev.articles.iter().zip(prepared) {
        predicted.extend(predict_batches(model, a, &p.tokens, &p.batches, ThresholdPolicy::Argmax)?);
    }
    span_f1(&predicted, &dev.spans)
}

fn with_context(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::NonFinite(msg) => Error::NonFinite(format!("{msg} at epoch {epoch}, step {step}")),
        other => other,
    }
}

pub fn train(
    data: &TrainingData<'_>,
    config: &TrainConfig,
    encoder: &EncoderConfig,
    flags: FeatureFlags,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_split(data.train, data.dev)?;
    let featurizer = Featurizer::build(data, flags, encoder);
    let dev_ids: Vec<String> = data.dev.articles.iter().map(|a| a.id.clone()).collect();
    if let Some(sal) = &featurizer.spec.salience {
        check_no_leakage(sal, &dev_ids)?;
    }
    let train_prep = prepare(data.train, &featurizer, data)?;
    let dev_prep = prepare(data.dev, &featurizer, data)?;

    let (sent_counts, tok_counts) = count_labels(&train_prep);
    let class_weights = if config.weighted {
        ClassWeights {
            sentence: weights2(sent_counts, config.smoothing)?,
            token: weights2(tok_counts, config.smoothing)?,
        }
    } else {
        ClassWeights::unit()
    };
    log::info!(
        "sentences {:?}, tokens {:?}, weights {:?}",
        sent_counts,
        tok_counts,
        class_weights
    );
    let loss_cfg = JointLossConfig {
        alpha: config.alpha,
        sent_class_weights: class_weights.sentence,
        tok_class_weights: class_weights.token,
        sentence_loss: config.sentence_loss,
    };
    loss_cfg.validate()?;

    let model_config = featurizer.model_config(encoder);
    let mut model = MgModel::new(model_config.clone(), config.seed)?;
    let adam_cfg = AdamConfig {
        lr: config.lr,
        weight_decay: config.l2_beta,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_cfg);
    let mut rng = seeded_rng(config.seed, 1);

    let mut examples: Vec<(usize, usize)> = train_prep
        .iter()
        .enumerate()
        .flat_map(|(a, p)| {
            p.batches
                .iter()
                .enumerate()
                .filter(|(_, b)| !b.is_empty())
                .map(move |(s, _)| (a, s))
        })
        .collect();
    if examples.is_empty() {
        return Err(Error::Invalid("training split has no non-empty sentences".into()));
    }

    let mut metrics = Vec::new();
    let mut best: Option<(usize, f64, Checkpoint)> = None;
    let mut since_best = 0usize;
    let mut epochs_to_target = None;
    let mut stop_reason = StopReason::EpochsExhausted;
    let mut step = 0usize;
    for epoch in 1..=config.epochs {
        examples.shuffle(&mut rng);
        let (mut sum_sent, mut sum_tok, mut sum_total) = (0.0, 0.0, 0.0);
        for chunk in examples.chunks(config.batch_size) {
            step += 1;
            for &(a, s) in chunk {
                let l = model
                    .accumulate_example(&train_prep[a].batches[s], &loss_cfg)
                    .map_err(|e| with_context(e, epoch, step))?;
                if !l.total.is_finite() {
                    return Err(Error::NonFinite(format!("loss at epoch {epoch}, step {step}")));
                }
                sum_sent += l.sent;
                sum_tok += l.tok;
                sum_total += l.total;
            }
            model.store.scale_grads(1.0 / chunk.len() as f64);
            adam.step(&mut model.store).map_err(|e| with_context(e, epoch, step))?;
        }
        let n = examples.len() as f64;
        let report = dev_score(&model, data.dev, &dev_prep)?;
        let m = EpochMetrics {
            epoch,
            loss_sent: sum_sent / n,
            loss_tok: sum_tok / n,
            loss_total: sum_total / n,
            dev_precision: report.precision,
            dev_recall: report.recall,
            dev_span_f1: report.f1,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} (sent {:.5}, tok {:.5}), dev span F1 {:.4}",
            m.loss_total,
            m.loss_sent,
            m.loss_tok,
            m.dev_span_f1
        );
        metrics.push(m);
        if best.as_ref().is_none_or(|(_, f, _)| report.f1 > *f) {
            best = Some((epoch, report.f1, model.store.to_checkpoint()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if let Some(target) = config.target_f1 {
            if report.f1 >= target {
                epochs_to_target = Some(epoch);
                stop_reason = StopReason::TargetReached;
                break;
            }
        }
        if since_best > config.patience {
            stop_reason = StopReason::Patience;
            break;
        }
    }

    let (best_epoch, best_dev_f1, ckpt) = best.expect("at least one epoch ran");
    model.store.load_checkpoint(&ckpt)?;
    let manifest = TrainManifest {
        train_config: *config,
        encoder: *encoder,
        flags,
        model_config,
        optimizer: adam_cfg,
        paper_learning_rate: PAPER_LEARNING_RATE,
        class_weights,
        train_articles: data.train.articles.iter().map(|a| a.id.clone()).collect(),
        dev_articles: dev_ids,
        salience_source_articles: featurizer
            .spec
            .salience
            .as_ref()
            .map(|s| s.source_articles.clone())
            .unwrap_or_default(),
        cross_sentence_spans: "split at sentence boundaries".into(),
        epochs: metrics,
        best_epoch,
        best_dev_f1,
        epochs_to_target,
        stop_reason,
    };
    Ok(TrainOutcome {
        model: TrainedModel { featurizer, model },
        manifest,
    })
}

/// Fraction of non-empty training sentences that contain a Prop token.
pub fn prop_sentence_rate(corpus: &Corpus) -> f64 {
    let (mut prop, mut total) = (0usize, 0usize);
    for a in &corpus.articles {
        let tokens = tokenize(a);
        let spans: Vec<Span> = corpus.spans_for(&a.id).cloned().collect();
        for seq in project_spans(a, &tokens, &spans).iter().filter(|s| !s.is_empty()) {
            total += 1;
            prop += usize::from(seq.sentence_label == Label::Prop);
        }
    }
    if total == 0 {
        0.0
    } else {
        prop as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{generate, FixtureConfig};

    #[test]
    fn class_weights_examples() {
        let w = compute_class_weights(&[90, 10], false).unwrap();
        assert!((w[0] - 0.2).abs() < 1e-12 && (w[1] - 1.8).abs() < 1e-12, "{w:?}");
        assert_eq!(compute_class_weights(&[50, 50], false).unwrap(), vec![1.0, 1.0]);
        let s = compute_class_weights(&[1, 0], true).unwrap();
        assert_eq!(s, compute_class_weights(&[2, 1], false).unwrap());
        let err = compute_class_weights(&[5, 0], false).unwrap_err();
        assert!(err.to_string().contains("smoothing"));
    }

    #[test]
    fn leak_check_rejects_shared_article() {
        let c = generate(&FixtureConfig {
            articles: 3,
            sentences_per_article: 3,
            ..FixtureConfig::default()
        })
        .unwrap();
        let mut dev = c.dev.clone();
        dev.articles.push(c.train.articles[0].clone());
        assert!(check_split(&c.train, &dev).is_err());
        assert!(check_split(&c.train, &c.dev).is_ok());
    }

    #[test]
    fn metrics_csv_header() {
        let csv = metrics_csv(&[EpochMetrics {
            epoch: 1,
            loss_sent: 0.5,
            loss_tok: 0.25,
            loss_total: 0.475,
            dev_precision: 1.0,
            dev_recall: 1.0,
            dev_span_f1: 1.0,
        }]);
        assert_eq!(csv, "epoch,loss_sent,loss_tok,dev_span_f1\n1,0.5,0.25,1\n");
    }

    fn tiny_run(patience: usize, epochs: usize) -> TrainOutcome {
        let c = generate(&FixtureConfig {
            articles: 6,
            sentences_per_article: 6,
            prop_rate: 0.5,
            ..FixtureConfig::default()
        })
        .unwrap();
        let data = TrainingData {
            train: &c.train,
            dev: &c.dev,
            annotations: CorpusAnnotations {
                parse: Some(&c.parse),
                pos: Some(&c.pos),
            },
            affect_lexicons: std::slice::from_ref(&c.affect),
            semantic_lexicons: std::slice::from_ref(&c.semantic),
            pos_tags: &crate::fixtures::POS_TAGS.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        };
        let cfg = TrainConfig {
            epochs,
            patience,
            lr: 1e-2,
            ..TrainConfig::default()
        };
        let enc = EncoderConfig {
            embed_dim: 8,
            hidden: 8,
            parse_dim: 4,
            parse_vocab: 64,
            ..EncoderConfig::default()
        };
        train(&data, &cfg, &enc, FeatureFlags::default()).unwrap()
    }

    #[test]
    fn best_checkpoint_is_never_worse_than_earlier_epochs() {
        let out = tiny_run(3, 6);
        let m = &out.manifest;
        let max = m.epochs.iter().map(|e| e.dev_span_f1).fold(f64::MIN, f64::max);
        assert_eq!(m.best_dev_f1, max);
        assert_eq!(m.epochs[m.best_epoch - 1].dev_span_f1, max);
    }

    #[test]
    fn artifact_round_trip_predicts_identically() {
        let out = tiny_run(9, 2);
        let json = out.model.to_json().unwrap();
        let artifact: ModelArtifact = serde_json::from_str(&json).unwrap();
        let back = TrainedModel::from_artifact(&artifact).unwrap();
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn patience_zero_stops_at_first_non_improving_epoch() {
        let out = tiny_run(0, 20);
        let m = &out.manifest;
        if m.stop_reason == StopReason::Patience {
            let last = m.epochs.len();
            assert!(m.epochs[last - 1].dev_span_f1 <= m.best_dev_f1);
            assert_eq!(m.best_epoch, last - 1);
        }
    }
}
