//! Central finite-difference checks for every backward pass.
//!
//! Each check reduces an op's output to a scalar with a random projection
//! `L = sum(r * y)`, feeds `r` to the analytic backward pass, and compares
//! against `(L(x + h) - L(x - h)) / 2h` per input coordinate. The error of
//! one tensor is `|a - n| / max(|a|, |n|)` in the Euclidean norm, and 0 when
//! both gradients vanish.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Label, TokenLabelSeq};
use crate::error::Result;
use crate::mgmodel::{joint_loss, GateMode, JointLossConfig, MgModel, ModelConfig, SentenceBatch, SentenceLossKind};
use crate::neuralcore::{
    bilstm_backward, bilstm_forward, embedding_backward, embedding_lookup, fc_backward, fc_forward, hconcat,
    hsplit, lstm_backward, lstm_forward, mean_pool, mean_pool_backward, seeded_rng, sigmoid_bce, softmax_ce,
    LstmWeights, Tensor,
};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Coordinates probed per tensor; larger tensors are sampled.
pub const MAX_COORDS: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub op: &'static str,
    pub wrt: String,
    pub rel_error: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.rel_error <= TOLERANCE
    }
}

pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn coords(len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= MAX_COORDS {
        (0..len).collect()
    } else {
        (0..MAX_COORDS).map(|_| rng.random_range(0..len)).collect()
    }
}

/// Compares `analytic` with central differences of `f` around `x`.
fn check_tensor(
    op: &'static str,
    wrt: &str,
    x: &Tensor,
    analytic: &Tensor,
    rng: &mut ChaCha8Rng,
    mut f: impl FnMut(&Tensor) -> Result<f64>,
) -> Result<CheckResult> {
    let idx = coords(x.len(), rng);
    let mut a = Vec::with_capacity(idx.len());
    let mut n = Vec::with_capacity(idx.len());
    let mut probe = x.clone();
    for &i in &idx {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + STEP;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - STEP;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        n.push((up - down) / (2.0 * STEP));
        a.push(analytic.data()[i]);
    }
    Ok(CheckResult {
        op,
        wrt: wrt.to_string(),
        rel_error: rel_error(&a, &n),
    })
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("shape matches")
}

fn project(y: &Tensor, r: &Tensor) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn check_fc(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let (n, d, k) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..4));
    let x = rand_tensor(&[n, d], rng);
    let w = rand_tensor(&[d, k], rng);
    let b = rand_tensor(&[k], rng);
    let r = rand_tensor(&[n, k], rng);
    let g = fc_backward(&x, &w, &r)?;
    Ok(vec![
        check_tensor("fc", "x", &x, &g.dx, rng, |p| Ok(project(&fc_forward(p, &w, &b)?, &r)))?,
        check_tensor("fc", "W", &w, &g.dw, rng, |p| Ok(project(&fc_forward(&x, p, &b)?, &r)))?,
        check_tensor("fc", "b", &b, &g.db, rng, |p| Ok(project(&fc_forward(&x, &w, p)?, &r)))?,
    ])
}

fn check_embedding(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let (v, d, n) = (rng.random_range(2..6), rng.random_range(1..4), rng.random_range(1..6));
    let table = rand_tensor(&[v, d], rng);
    let ids: Vec<usize> = (0..n).map(|_| rng.random_range(0..v)).collect();
    let r = rand_tensor(&[n, d], rng);
    let mut grad = Tensor::zeros(&[v, d]);
    embedding_backward(&ids, &r, &mut grad)?;
    Ok(vec![check_tensor("embedding", "table", &table, &grad, rng, |p| {
        Ok(project(&embedding_lookup(&ids, p)?, &r))
    })?])
}

fn check_mean_pool(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let (n, d) = (rng.random_range(1..6), rng.random_range(1..4));
    let x = rand_tensor(&[n, d], rng);
    let r = rand_tensor(&[d], rng);
    let dx = mean_pool_backward(&r, n)?;
    Ok(vec![check_tensor("mean_pool", "x", &x, &dx, rng, |p| Ok(project(&mean_pool(p)?, &r)))?])
}

fn check_concat(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let n = rng.random_range(1..4);
    let (wa, wb) = (rng.random_range(1..4), rng.random_range(0..3));
    let a = rand_tensor(&[n, wa], rng);
    let b = rand_tensor(&[n, wb], rng);
    let r = rand_tensor(&[n, wa + wb], rng);
    let parts = hsplit(&r, &[wa, wb])?;
    Ok(vec![
        check_tensor("hconcat", "left", &a, &parts[0], rng, |p| Ok(project(&hconcat(&[p, &b])?, &r)))?,
        check_tensor("hconcat", "right", &b, &parts[1], rng, |p| Ok(project(&hconcat(&[&a, p])?, &r)))?,
    ])
}

fn lstm_params(d: usize, h: usize, rng: &mut ChaCha8Rng) -> [Tensor; 3] {
    [rand_tensor(&[d, 4 * h], rng), rand_tensor(&[h, 4 * h], rng), rand_tensor(&[4 * h], rng)]
}

fn weights(p: &[Tensor; 3]) -> LstmWeights<'_> {
    LstmWeights {
        w_ih: &p[0],
        w_hh: &p[1],
        b: &p[2],
    }
}

fn check_lstm(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let (n, d, h) = (rng.random_range(1..5), rng.random_range(1..4), rng.random_range(1..4));
    let reverse = rng.random_bool(0.5);
    let op = if reverse { "lstm(reverse)" } else { "lstm" };
    let x = rand_tensor(&[n, d], rng);
    let p = lstm_params(d, h, rng);
    let r = rand_tensor(&[n, h], rng);
    let (_, cache) = lstm_forward(&x, weights(&p), reverse)?;
    let (dx, g) = lstm_backward(&x, weights(&p), &cache, &r)?;
    let mut out = vec![check_tensor(op, "x", &x, &dx, rng, |q| {
        Ok(project(&lstm_forward(q, weights(&p), reverse)?.0, &r))
    })?];
    for (i, (name, grad)) in [("W_ih", &g.w_ih), ("W_hh", &g.w_hh), ("b", &g.b)].into_iter().enumerate() {
        out.push(check_tensor(op, name, &p[i], grad, rng, |q| {
            let mut pp = p.clone();
            pp[i] = q.clone();
            Ok(project(&lstm_forward(&x, weights(&pp), reverse)?.0, &r))
        })?);
    }
    Ok(out)
}

fn check_bilstm(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let (n, d, h) = (rng.random_range(1..5), rng.random_range(1..4), rng.random_range(1..3));
    let x = rand_tensor(&[n, d], rng);
    let pf = lstm_params(d, h, rng);
    let pb = lstm_params(d, h, rng);
    let r = rand_tensor(&[n, 2 * h], rng);
    let (_, cache) = bilstm_forward(&x, weights(&pf), weights(&pb))?;
    let (dx, gf, gb) = bilstm_backward(&x, weights(&pf), weights(&pb), &cache, &r)?;
    let mut out = vec![check_tensor("bilstm", "x", &x, &dx, rng, |q| {
        Ok(project(&bilstm_forward(q, weights(&pf), weights(&pb))?.0, &r))
    })?];
    for (i, (gfi, gbi)) in [(&gf.w_ih, &gb.w_ih), (&gf.w_hh, &gb.w_hh), (&gf.b, &gb.b)].into_iter().enumerate() {
        out.push(check_tensor("bilstm", "forward weights", &pf[i], gfi, rng, |q| {
            let mut pp = pf.clone();
            pp[i] = q.clone();
            Ok(project(&bilstm_forward(&x, weights(&pp), weights(&pb))?.0, &r))
        })?);
        out.push(check_tensor("bilstm", "backward weights", &pb[i], gbi, rng, |q| {
            let mut pp = pb.clone();
            pp[i] = q.clone();
            Ok(project(&bilstm_forward(&x, weights(&pf), weights(&pp))?.0, &r))
        })?);
    }
    Ok(out)
}

fn check_losses(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let clamp = 30.0;
    let logit = Tensor::vector(vec![rng.random_range(-4.0..4.0)]);
    let target = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
    let weight = rng.random_range(0.1..2.0);
    let (_, dl) = sigmoid_bce(logit.data()[0], target, weight, clamp);
    let k = rng.random_range(2..5);
    let logits = rand_tensor(&[k], rng);
    let cls = rng.random_range(0..k);
    let cw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..2.0)).collect();
    let (_, g) = softmax_ce(logits.data(), cls, &cw, clamp);
    Ok(vec![
        check_tensor("sigmoid_bce", "logit", &logit, &Tensor::vector(vec![dl]), rng, |p| {
            Ok(sigmoid_bce(p.data()[0], target, weight, clamp).0)
        })?,
        check_tensor("softmax_ce", "logits", &logits, &Tensor::vector(g), rng, |p| {
            Ok(softmax_ce(p.data(), cls, &cw, clamp).0)
        })?,
    ])
}

/// A random small model and sentence for composite checks.
pub fn random_model_case(rng: &mut ChaCha8Rng, seed: u64) -> Result<(MgModel, SentenceBatch, JointLossConfig)> {
    let cfg = ModelConfig {
        vocab_size: rng.random_range(3..8),
        embed_dim: rng.random_range(1..4),
        hidden: rng.random_range(1..4),
        parse_dim: rng.random_range(0..3),
        parse_vocab: 5,
        word_feature_dim: rng.random_range(0..3),
        sentence_feature_dim: rng.random_range(0..3),
        document_feature_dim: rng.random_range(0..3),
        logit_clamp: 30.0,
    };
    let mut model = MgModel::new(cfg.clone(), seed)?;
    // spread parameters beyond the init ranges so every path carries gradient
    for p in model.store.iter_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    let n = rng.random_range(1..6);
    let labels: Vec<Label> = (0..n).map(|_| Label::from_index(rng.random_range(0..2))).collect();
    let batch = SentenceBatch {
        token_ids: (0..n).map(|_| rng.random_range(0..cfg.vocab_size)).collect(),
        parse_ids: if cfg.parse_dim > 0 {
            (0..n).map(|_| rng.random_range(0..cfg.parse_vocab)).collect()
        } else {
            Vec::new()
        },
        f_word: rand_tensor(&[n, cfg.word_feature_dim], rng),
        f_sent: (0..cfg.sentence_feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        f_doc: (0..cfg.document_feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        gold: Some(TokenLabelSeq::from_labels(labels)),
    };
    let loss = JointLossConfig {
        alpha: rng.random_range(0.0..=1.0),
        sent_class_weights: [rng.random_range(0.2..2.0), rng.random_range(0.2..2.0)],
        tok_class_weights: [rng.random_range(0.2..2.0), rng.random_range(0.2..2.0)],
        sentence_loss: if rng.random_bool(0.5) {
            SentenceLossKind::Softmax
        } else {
            SentenceLossKind::Sigmoid
        },
    };
    Ok((model, batch, loss))
}

/// Whole-model check: joint loss through both heads, the gate, the BiLSTM
/// and the embeddings, against every parameter tensor.
fn check_model(rng: &mut ChaCha8Rng, seed: u64) -> Result<Vec<CheckResult>> {
    let (mut model, batch, loss_cfg) = random_model_case(rng, seed)?;
    let clamp = model.config.logit_clamp;
    model.store.zero_grads();
    model.accumulate_example(&batch, &loss_cfg)?;
    let ids: Vec<_> = model.store.ids().collect();
    let mut out = Vec::new();
    for id in ids {
        let name = model.store.name(id).to_string();
        let value = model.store.value(id).clone();
        let grad = model.store.grad(id).clone();
        let gold = batch.gold.clone().expect("gold");
        let mut probe_model = model.clone();
        out.push(check_tensor("mg_model", &name, &value, &grad, rng, |q| {
            *probe_model.store.value_mut(id) = q.clone();
            let fwd = probe_model.forward(&batch, GateMode::Learned)?;
            Ok(joint_loss(&fwd, &gold, &loss_cfg, clamp)?.total)
        })?);
    }
    Ok(out)
}

/// One randomized trial over every op plus the composite model.
pub fn run_trial(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = seeded_rng(seed, 0x6C);
    let mut out = Vec::new();
    out.extend(check_fc(&mut rng)?);
    out.extend(check_embedding(&mut rng)?);
    out.extend(check_mean_pool(&mut rng)?);
    out.extend(check_concat(&mut rng)?);
    out.extend(check_lstm(&mut rng)?);
    out.extend(check_bilstm(&mut rng)?);
    out.extend(check_losses(&mut rng)?);
    out.extend(check_model(&mut rng, seed)?);
    Ok(out)
}

/// Runs `trials` trials; returns every result.
pub fn run_suite(trials: usize, base_seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for t in 0..trials {
        out.extend(run_trial(base_seed.wrapping_add(t as u64))?);
    }
    Ok(out)
}
