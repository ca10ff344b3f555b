//! The multi-granular gated tagger.
//!
//! Dataflow for one sentence of `n` tokens:
//!
//! ```text
//! E      = embed(tokens)                       [n x d_e]
//! H*_tok = [E ; F_word ; embed_c(parse ids)]   [n x (d_e + d_w + d_c)]
//! H_tok  = BiLSTM(H*_tok)                      [n x 2h]
//! H_sent = [mean_pool(E) ; F_sent ; F_doc]     [1 x (d_e + d_s + d_d)]
//! p_sent = FC_sent(H_sent)                     [2]
//! g_sent = sigmoid(p_sent . W_g + b_g)         scalar
//! G_tok  = g_sent * H_tok                      [n x 2h]
//! p_tok  = FC_tok(G_tok)                       [n x 2]
//! ```
//!
//! The token encoder is a trainable embedding table; there are no special
//! boundary tokens, so the sentence representation pools real tokens only.
//! The gate is applied at inference as well as in training.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Token, TokenLabelSeq};
use crate::error::{Error, Result};
use crate::neuralcore::{
    bilstm_backward, bilstm_forward, embedding_backward, embedding_lookup, fc_backward,
    fc_forward, hconcat, hsplit, mean_pool, mean_pool_backward, seeded_rng, sigmoid,
    sigmoid_bce, softmax, softmax_ce, uniform_init, xavier_uniform, BiLstmCache, Checkpoint,
    LstmWeights, ParamId, ParamStore, Tensor, DEFAULT_LOGIT_CLAMP,
};

pub const DEFAULT_PARSE_DIM: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Token embedding width `d_e`.
    pub embed_dim: usize,
    /// Hidden size `h` of each LSTM direction.
    pub hidden: usize,
    /// Parse-path embedding width `d_c`; 0 disables the parse-path input.
    pub parse_dim: usize,
    pub parse_vocab: usize,
    /// `d_w`
    pub word_feature_dim: usize,
    /// `d_s`; 0 leaves sentence features out of `H_sent`.
    pub sentence_feature_dim: usize,
    /// `d_d`; 0 leaves document features out of `H_sent`.
    pub document_feature_dim: usize,
    pub logit_clamp: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 1,
            embed_dim: 32,
            hidden: 32,
            parse_dim: DEFAULT_PARSE_DIM,
            parse_vocab: crate::lexfeatures::DEFAULT_PARSE_VOCAB,
            word_feature_dim: 0,
            sentence_feature_dim: 0,
            document_feature_dim: 0,
            logit_clamp: DEFAULT_LOGIT_CLAMP,
        }
    }
}

impl ModelConfig {
    pub fn token_input_dim(&self) -> usize {
        self.embed_dim + self.word_feature_dim + self.parse_dim
    }

    pub fn sentence_input_dim(&self) -> usize {
        self.embed_dim + self.sentence_feature_dim + self.document_feature_dim
    }

    fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "vocab_size, embed_dim and hidden must be positive".into(),
            ));
        }
        if self.parse_dim > 0 && self.parse_vocab < 2 {
            return Err(Error::Config("parse_vocab must be at least 2".into()));
        }
        if self.logit_clamp.is_nan() || self.logit_clamp <= 0.0 {
            return Err(Error::Config("logit_clamp must be positive".into()));
        }
        Ok(())
    }
}

/// Word-to-id map for the embedding encoder. Id 0 is the unknown word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    lowercase: bool,
    words: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    lowercase: bool,
    words: Vec<String>,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        let index = r.words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab {
            lowercase: r.lowercase,
            words: r.words,
            index,
        }
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr {
            lowercase: v.lowercase,
            words: v.words,
        }
    }
}

pub const UNK: &str = "<unk>";

impl Vocab {
    /// Builds a vocabulary in first-seen order.
    pub fn build<'a>(surfaces: impl IntoIterator<Item = &'a str>, lowercase: bool) -> Self {
        let mut words = vec![UNK.to_string()];
        let mut index = HashMap::from([(UNK.to_string(), 0)]);
        for s in surfaces {
            let key = if lowercase { s.to_lowercase() } else { s.to_string() };
            if !index.contains_key(&key) {
                index.insert(key.clone(), words.len());
                words.push(key);
            }
        }
        Vocab {
            lowercase,
            words,
            index,
        }
    }

    pub fn id(&self, surface: &str) -> usize {
        let found = if self.lowercase {
            self.index.get(&surface.to_lowercase())
        } else {
            self.index.get(surface)
        };
        found.copied().unwrap_or(0)
    }

    pub fn ids(&self, tokens: &[Token]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(&t.surface)).collect()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 1
    }
}

/// Model inputs for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceBatch {
    pub token_ids: Vec<usize>,
    pub parse_ids: Vec<usize>,
    /// `[n x d_w]`
    pub f_word: Tensor,
    pub f_sent: Vec<f64>,
    pub f_doc: Vec<f64>,
    pub gold: Option<TokenLabelSeq>,
}

impl SentenceBatch {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateMode {
    /// `g_sent = sigmoid(W_g p_sent + b_g)`.
    Learned,
    /// Gate pinned to a constant; no gradient flows into the gate or,
    /// through it, into the sentence head from the token loss.
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    token_input: Tensor,
    lstm: BiLstmCache,
    h_tok: Tensor,
    h_sent: Tensor,
    gated: Tensor,
    gate_mode: GateMode,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub p_sent: [f64; 2],
    pub g_sent: f64,
    /// `[n x 2]`
    pub p_tok: Tensor,
    pub cache: ForwardCache,
}

impl ForwardOutput {
    /// Token-level BiLSTM states `H_tok` before gating.
    pub fn h_tok(&self) -> &Tensor {
        &self.cache.h_tok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SentenceLossKind {
    /// Two-class softmax cross-entropy on `p_sent`.
    #[default]
    Softmax,
    /// Binary cross-entropy with sigmoid on `p_sent[1] - p_sent[0]`.
    /// Identical in value and gradient to `Softmax`.
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLossConfig {
    pub alpha: f64,
    pub sent_class_weights: [f64; 2],
    pub tok_class_weights: [f64; 2],
    #[serde(default)]
    pub sentence_loss: SentenceLossKind,
}

impl Default for JointLossConfig {
    fn default() -> Self {
        JointLossConfig {
            alpha: 0.9,
            sent_class_weights: [1.0, 1.0],
            tok_class_weights: [1.0, 1.0],
            sentence_loss: SentenceLossKind::Softmax,
        }
    }
}

impl JointLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        let all = self.sent_class_weights.iter().chain(&self.tok_class_weights);
        if all.clone().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("class weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct JointLoss {
    pub total: f64,
    pub sent: f64,
    pub tok: f64,
    pub d_p_sent: [f64; 2],
    pub d_p_tok: Tensor,
}

/// `alpha * L_sent + (1 - alpha) * L_tok`, with `L_tok` the mean weighted
/// token cross-entropy, plus gradients w.r.t. the logits.
pub fn joint_loss(
    out: &ForwardOutput,
    gold: &TokenLabelSeq,
    config: &JointLossConfig,
    clamp: f64,
) -> Result<JointLoss> {
    let n = out.p_tok.rows();
    if gold.len() != n {
        return Err(Error::shape(
            "joint_loss",
            format!("{} gold labels for {n} tokens", gold.len()),
        ));
    }
    let alpha = config.alpha;
    let target = gold.sentence_label.index();
    let (sent, g_sent) = match config.sentence_loss {
        SentenceLossKind::Softmax => {
            let (l, g) = softmax_ce(&out.p_sent, target, &config.sent_class_weights, clamp);
            (l, [g[0], g[1]])
        }
        SentenceLossKind::Sigmoid => {
            let w = config.sent_class_weights[target];
            let (l, g) = sigmoid_bce(out.p_sent[1] - out.p_sent[0], target as f64, w, clamp);
            (l, [-g, g])
        }
    };
    let mut tok = 0.0;
    let mut d_tok = Vec::with_capacity(n * 2);
    let scale = if n > 0 { 1.0 / n as f64 } else { 0.0 };
    for (i, label) in gold.labels.iter().enumerate() {
        let (l, g) = softmax_ce(out.p_tok.row(i), label.index(), &config.tok_class_weights, clamp);
        tok += l;
        d_tok.extend(g.into_iter().map(|v| (1.0 - alpha) * scale * v));
    }
    tok *= scale;
    let total = alpha * sent + (1.0 - alpha) * tok;
    if !total.is_finite() {
        return Err(Error::NonFinite("joint loss".into()));
    }
    Ok(JointLoss {
        total,
        sent,
        tok,
        d_p_sent: [alpha * g_sent[0], alpha * g_sent[1]],
        d_p_tok: Tensor::matrix(n, 2, d_tok)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// Prop iff its logit is strictly larger; ties go to NonProp.
    Argmax,
    /// Prop iff softmax probability of Prop is at least the threshold.
    MinProb(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentencePrediction {
    /// Token labels; the sentence label here is derived from them.
    pub labels: TokenLabelSeq,
    /// Argmax of the sentence head.
    pub sentence_head: Label,
    pub g_sent: f64,
}

fn argmax_label(logits: &[f64]) -> Label {
    if logits[1] > logits[0] {
        Label::Prop
    } else {
        Label::NonProp
    }
}

pub fn decide(logits: &[f64], policy: ThresholdPolicy) -> Label {
    match policy {
        ThresholdPolicy::Argmax => argmax_label(logits),
        ThresholdPolicy::MinProb(t) => {
            if softmax(logits)[1] >= t {
                Label::Prop
            } else {
                Label::NonProp
            }
        }
    }
}

#[derive(Debug, Clone)]
struct ParamIds {
    tok_emb: ParamId,
    parse_emb: Option<ParamId>,
    lstm_fwd: [ParamId; 3],
    lstm_bwd: [ParamId; 3],
    sent_w: ParamId,
    sent_b: ParamId,
    gate_w: ParamId,
    gate_b: ParamId,
    tok_w: ParamId,
    tok_b: ParamId,
}

/// Gradient of one parameter from a single sentence. Embedding tables get
/// row-sparse gradients.
enum Grad {
    Dense(ParamId, Tensor),
    Rows(ParamId, Vec<usize>, Tensor),
}

#[derive(Debug, Clone)]
pub struct MgModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    ids: ParamIds,
}

impl MgModel {
    /// Initializes parameters from `seed`: uniform(-0.1, 0.1) embeddings,
    /// Xavier-uniform matrices, zero biases except +1 on LSTM forget gates.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(seed, 0);
        let mut store = ParamStore::new();
        let (d_e, h) = (config.embed_dim, config.hidden);
        let tok_emb = store.add("tok_emb", uniform_init(&[config.vocab_size, d_e], 0.1, &mut rng))?;
        let parse_emb = if config.parse_dim > 0 {
            Some(store.add(
                "parse_emb",
                uniform_init(&[config.parse_vocab, config.parse_dim], 0.1, &mut rng),
            )?)
        } else {
            None
        };
        let d_in = config.token_input_dim();
        let lstm = |store: &mut ParamStore, prefix: &str, rng: &mut _| -> Result<[ParamId; 3]> {
            let w_ih = store.add(format!("{prefix}.w_ih"), xavier_uniform(d_in, 4 * h, rng))?;
            let w_hh = store.add(format!("{prefix}.w_hh"), xavier_uniform(h, 4 * h, rng))?;
            let mut b = Tensor::zeros(&[4 * h]);
            b.data_mut()[h..2 * h].fill(1.0);
            let b = store.add(format!("{prefix}.b"), b)?;
            Ok([w_ih, w_hh, b])
        };
        let lstm_fwd = lstm(&mut store, "lstm_fwd", &mut rng)?;
        let lstm_bwd = lstm(&mut store, "lstm_bwd", &mut rng)?;
        let sent_w = store.add("sent_fc.w", xavier_uniform(config.sentence_input_dim(), 2, &mut rng))?;
        let sent_b = store.add("sent_fc.b", Tensor::zeros(&[2]))?;
        let gate_w = store.add("gate.w", xavier_uniform(2, 1, &mut rng))?;
        let gate_b = store.add("gate.b", Tensor::zeros(&[1]))?;
        let tok_w = store.add("tok_fc.w", xavier_uniform(2 * h, 2, &mut rng))?;
        let tok_b = store.add("tok_fc.b", Tensor::zeros(&[2]))?;
        Ok(MgModel {
            config,
            store,
            ids: ParamIds {
                tok_emb,
                parse_emb,
                lstm_fwd,
                lstm_bwd,
                sent_w,
                sent_b,
                gate_w,
                gate_b,
                tok_w,
                tok_b,
            },
        })
    }

    /// Rebuilds a model from a config and stored parameter values.
    pub fn from_checkpoint(config: ModelConfig, ckpt: &Checkpoint) -> Result<Self> {
        let mut model = MgModel::new(config, 0)?;
        model.store.load_checkpoint(ckpt)?;
        Ok(model)
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.store.id(name).map(|id| self.store.value(id))
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let id = self.store.id(name)?;
        Some(self.store.value_mut(id))
    }

    fn lstm_weights(&self, ids: &[ParamId; 3]) -> LstmWeights<'_> {
        LstmWeights {
            w_ih: self.store.value(ids[0]),
            w_hh: self.store.value(ids[1]),
            b: self.store.value(ids[2]),
        }
    }

    /// Checks a batch against the configured dimensions, naming the stage
    /// that would fail.
    pub fn validate_batch(&self, batch: &SentenceBatch) -> Result<()> {
        let c = &self.config;
        let n = batch.len();
        let stage = |stage: &str, detail: String| Err(Error::shape("mgmodel", format!("{stage}: {detail}")));
        if n == 0 {
            return stage("encoder", "sentence has no tokens".into());
        }
        if let Some(&bad) = batch.token_ids.iter().find(|&&id| id >= c.vocab_size) {
            return stage("encoder", format!("token id {bad} >= vocab size {}", c.vocab_size));
        }
        if batch.f_word.rows() != n || batch.f_word.cols() != c.word_feature_dim {
            return stage(
                "word features",
                format!("F_word {:?}, expected [{n}, {}]", batch.f_word.shape(), c.word_feature_dim),
            );
        }
        if c.parse_dim > 0 {
            if batch.parse_ids.len() != n {
                return stage("parse path", format!("{} ids for {n} tokens", batch.parse_ids.len()));
            }
            if let Some(&bad) = batch.parse_ids.iter().find(|&&id| id >= c.parse_vocab) {
                return stage("parse path", format!("id {bad} >= parse vocab {}", c.parse_vocab));
            }
        }
        if batch.f_sent.len() != c.sentence_feature_dim {
            return stage(
                "sentence features",
                format!("F_sent has {} values, expected {}", batch.f_sent.len(), c.sentence_feature_dim),
            );
        }
        if batch.f_doc.len() != c.document_feature_dim {
            return stage(
                "document features",
                format!("F_doc has {} values, expected {}", batch.f_doc.len(), c.document_feature_dim),
            );
        }
        if let Some(gold) = &batch.gold {
            if gold.len() != n {
                return stage("labels", format!("{} gold labels for {n} tokens", gold.len()));
            }
        }
        let finite = batch.f_word.all_finite()
            && batch.f_sent.iter().chain(&batch.f_doc).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("sentence features".into()));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &SentenceBatch, gate_mode: GateMode) -> Result<ForwardOutput> {
        self.validate_batch(batch)?;
        let ids = &self.ids;
        let n = batch.len();

        let embedded = embedding_lookup(&batch.token_ids, self.store.value(ids.tok_emb))?;
        let parse = match ids.parse_emb {
            Some(pid) => embedding_lookup(&batch.parse_ids, self.store.value(pid))?,
            None => Tensor::zeros(&[n, 0]),
        };
        let token_input = hconcat(&[&embedded, &batch.f_word, &parse])?;
        let (h_tok, lstm) = bilstm_forward(
            &token_input,
            self.lstm_weights(&ids.lstm_fwd),
            self.lstm_weights(&ids.lstm_bwd),
        )?;

        let pooled = mean_pool(&embedded)?;
        let f_sent = Tensor::matrix(1, batch.f_sent.len(), batch.f_sent.clone())?;
        let f_doc = Tensor::matrix(1, batch.f_doc.len(), batch.f_doc.clone())?;
        let h_sent = hconcat(&[&pooled, &f_sent, &f_doc])?;
        let p_sent_t = fc_forward(&h_sent, self.store.value(ids.sent_w), self.store.value(ids.sent_b))?;
        let p_sent = [p_sent_t.data()[0], p_sent_t.data()[1]];

        let g_sent = match gate_mode {
            GateMode::Learned => {
                let gate = fc_forward(&p_sent_t, self.store.value(ids.gate_w), self.store.value(ids.gate_b))?;
                sigmoid(gate.data()[0])
            }
            GateMode::Fixed(g) => g,
        };
        let mut gated = h_tok.clone();
        gated.scale(g_sent);
        let p_tok = fc_forward(&gated, self.store.value(ids.tok_w), self.store.value(ids.tok_b))?;
        if !g_sent.is_finite() || !p_sent.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("mgmodel forward".into()));
        }
        Ok(ForwardOutput {
            p_sent,
            g_sent,
            p_tok,
            cache: ForwardCache {
                token_input,
                lstm,
                h_tok,
                h_sent,
                gated,
                gate_mode,
            },
        })
    }

    fn gradients(
        &self,
        batch: &SentenceBatch,
        out: &ForwardOutput,
        d_p_sent: [f64; 2],
        d_p_tok: &Tensor,
    ) -> Result<Vec<Grad>> {
        let ids = &self.ids;
        let c = &self.config;
        let cache = &out.cache;
        let n = batch.len();
        let mut grads = Vec::with_capacity(12);

        // token head
        let tok = fc_backward(&cache.gated, self.store.value(ids.tok_w), d_p_tok)?;
        grads.push(Grad::Dense(ids.tok_w, tok.dw));
        grads.push(Grad::Dense(ids.tok_b, tok.db));
        let mut d_h_tok = tok.dx.clone();
        d_h_tok.scale(out.g_sent);

        // gate
        let mut d_p_sent_total = d_p_sent;
        match cache.gate_mode {
            GateMode::Learned => {
                let d_g: f64 = tok
                    .dx
                    .data()
                    .iter()
                    .zip(cache.h_tok.data())
                    .map(|(a, b)| a * b)
                    .sum();
                let d_z = d_g * out.g_sent * (1.0 - out.g_sent);
                let p = Tensor::matrix(1, 2, out.p_sent.to_vec())?;
                let gate = fc_backward(
                    &p,
                    self.store.value(ids.gate_w),
                    &Tensor::matrix(1, 1, vec![d_z])?,
                )?;
                grads.push(Grad::Dense(ids.gate_w, gate.dw));
                grads.push(Grad::Dense(ids.gate_b, gate.db));
                d_p_sent_total[0] += gate.dx.data()[0];
                d_p_sent_total[1] += gate.dx.data()[1];
            }
            GateMode::Fixed(_) => {
                grads.push(Grad::Dense(ids.gate_w, Tensor::zeros(&[2, 1])));
                grads.push(Grad::Dense(ids.gate_b, Tensor::zeros(&[1])));
            }
        }

        // sentence head
        let sent = fc_backward(
            &cache.h_sent,
            self.store.value(ids.sent_w),
            &Tensor::matrix(1, 2, d_p_sent_total.to_vec())?,
        )?;
        grads.push(Grad::Dense(ids.sent_w, sent.dw));
        grads.push(Grad::Dense(ids.sent_b, sent.db));
        let d_pooled = hsplit(
            &sent.dx,
            &[c.embed_dim, c.sentence_feature_dim, c.document_feature_dim],
        )?
        .swap_remove(0);
        let mut d_embedded = mean_pool_backward(&d_pooled, n)?;

        // BiLSTM
        let fwd = self.lstm_weights(&ids.lstm_fwd);
        let bwd = self.lstm_weights(&ids.lstm_bwd);
        let (d_input, gf, gb) = bilstm_backward(&cache.token_input, fwd, bwd, &cache.lstm, &d_h_tok)?;
        for (pid, g) in ids.lstm_fwd.iter().zip([gf.w_ih, gf.w_hh, gf.b]) {
            grads.push(Grad::Dense(*pid, g));
        }
        for (pid, g) in ids.lstm_bwd.iter().zip([gb.w_ih, gb.w_hh, gb.b]) {
            grads.push(Grad::Dense(*pid, g));
        }
        let mut parts = hsplit(&d_input, &[c.embed_dim, c.word_feature_dim, c.parse_dim])?;
        d_embedded.add_assign(&parts[0])?;
        grads.push(Grad::Rows(ids.tok_emb, batch.token_ids.clone(), d_embedded));
        if let Some(pid) = ids.parse_emb {
            grads.push(Grad::Rows(pid, batch.parse_ids.clone(), parts.swap_remove(2)));
        }
        Ok(grads)
    }

    /// Accumulates the gradient of a loss with the given logit gradients
    /// into the parameter store.
    pub fn backward(
        &mut self,
        batch: &SentenceBatch,
        out: &ForwardOutput,
        d_p_sent: [f64; 2],
        d_p_tok: &Tensor,
    ) -> Result<()> {
        let grads = self.gradients(batch, out, d_p_sent, d_p_tok)?;
        for g in grads {
            match g {
                Grad::Dense(id, t) => self.store.accumulate(id, &t)?,
                Grad::Rows(id, rows, t) => embedding_backward(&rows, &t, self.store.grad_mut(id))?,
            }
        }
        Ok(())
    }

    /// Forward, joint loss and backward for one gold-labelled sentence.
    pub fn accumulate_example(&mut self, batch: &SentenceBatch, loss: &JointLossConfig) -> Result<JointLoss> {
        let gold = batch
            .gold
            .as_ref()
            .ok_or_else(|| Error::Invalid("training sentence without gold labels".into()))?;
        let out = self.forward(batch, GateMode::Learned)?;
        let l = joint_loss(&out, gold, loss, self.config.logit_clamp)?;
        self.backward(batch, &out, l.d_p_sent, &l.d_p_tok)?;
        Ok(l)
    }

    /// Loss of one sentence without touching gradients.
    pub fn loss(&self, batch: &SentenceBatch, loss: &JointLossConfig, gate_mode: GateMode) -> Result<JointLoss> {
        let gold = batch
            .gold
            .as_ref()
            .ok_or_else(|| Error::Invalid("sentence without gold labels".into()))?;
        let out = self.forward(batch, gate_mode)?;
        joint_loss(&out, gold, loss, self.config.logit_clamp)
    }

    pub fn predict_tokens(&self, batch: &SentenceBatch, policy: ThresholdPolicy) -> Result<SentencePrediction> {
        let out = self.forward(batch, GateMode::Learned)?;
        let labels = (0..out.p_tok.rows())
            .map(|i| decide(out.p_tok.row(i), policy))
            .collect();
        Ok(SentencePrediction {
            labels: TokenLabelSeq::from_labels(labels),
            sentence_head: argmax_label(&out.p_sent),
            g_sent: out.g_sent,
        })
    }
}
