//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if
//! any criterion fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mgspan::corpus::{tokenize, Article, Corpus, Label, Span};
use mgspan::fixtures::{generate, FixtureConfig, SyntheticCorpus, POS_TAGS};
use mgspan::gradcheck::{random_model_case, run_suite, TOLERANCE};
use mgspan::lexfeatures::CorpusAnnotations;
use mgspan::mgmodel::{joint_loss, GateMode, JointLossConfig, ThresholdPolicy};
use mgspan::neuralcore::{fc_forward, seeded_rng, softmax};
use mgspan::scorer::span_f1;
use mgspan::spanops::{ensemble, postprocess, PostProcessConfig};
use mgspan::trainer::{compute_class_weights, train, EncoderConfig, FeatureFlags, TrainConfig, TrainingData};
use rand::Rng;

const SEEDS: [u64; 7] = [1, 2, 3, 12, 123, 1234, 12345];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn c1_gradients() -> Outcome {
    let t = Instant::now();
    let results = match run_suite(100, 1) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("suite error: {e}")),
    };
    let elapsed = t.elapsed();
    let worst = results
        .iter()
        .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
        .expect("non-empty");
    let failed = results.iter().filter(|r| !r.passed()).count();
    outcome(
        failed == 0 && elapsed < Duration::from_secs(60),
        format!(
            "{} checks over 100 trials, {failed} above {TOLERANCE:e}, worst {:.2e} ({} wrt {}), {}",
            results.len(),
            worst.rel_error,
            worst.op,
            worst.wrt,
            secs(elapsed)
        ),
    )
}

/// Precision and recall from character sets, straight from the definition.
fn metric_oracle(pred: &[Span], gold: &[Span]) -> (f64, f64) {
    let chars = |s: &Span| -> BTreeSet<(String, usize)> { (s.start..s.end).map(|i| (s.article_id.clone(), i)).collect() };
    // normalize predictions to disjoint maximal runs
    let covered: BTreeSet<(String, usize)> = pred.iter().flat_map(chars).collect();
    let mut merged: Vec<Span> = Vec::new();
    for (id, i) in &covered {
        match merged.last_mut() {
            Some(last) if &last.article_id == id && last.end >= *i => last.end = i + 1,
            _ => merged.push(Span::new(id.clone(), *i, i + 1)),
        }
    }
    if merged.is_empty() && gold.is_empty() {
        return (1.0, 1.0);
    }
    let (mut p, mut r) = (0.0, 0.0);
    for s in &merged {
        for t in gold {
            let inter = chars(s).intersection(&chars(t)).count() as f64;
            p += inter / s.len() as f64;
            r += inter / t.len() as f64;
        }
    }
    let p = if merged.is_empty() { 0.0 } else { p / merged.len() as f64 };
    let r = if gold.is_empty() { 0.0 } else { r / gold.len() as f64 };
    (p, r)
}

fn c2_metric() -> Outcome {
    let t = Instant::now();
    let mut rng = seeded_rng(2, 0);
    let mut worst = 0.0f64;
    let random_spans = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Span> {
        (0..rng.random_range(0..6))
            .map(|_| {
                let id = ["a", "b"][rng.random_range(0..2)];
                let s = rng.random_range(0..30);
                Span::new(id, s, s + rng.random_range(1..10))
            })
            .collect()
    };
    for _ in 0..1000 {
        let pred = random_spans(&mut rng);
        let gold = random_spans(&mut rng);
        let r = span_f1(&pred, &gold).expect("valid spans");
        let (p, rc) = metric_oracle(&pred, &gold);
        worst = worst.max((r.precision - p).abs()).max((r.recall - rc).abs());
    }
    let elapsed = t.elapsed();
    let ex = span_f1(&[Span::new("a", 0, 10)], &[Span::new("a", 5, 15)]).expect("valid");
    let example = (ex.precision, ex.recall, ex.f1) == (0.5, 0.5, 0.5);
    outcome(
        worst <= 1e-12 && example && elapsed < Duration::from_secs(5),
        format!(
            "1000 instances, max |diff| {worst:.1e}, [0,10) vs [5,15) gives P={} R={} F1={}, {}",
            ex.precision,
            ex.recall,
            ex.f1,
            secs(elapsed)
        ),
    )
}

fn c3_gate() -> Outcome {
    let mut rng = seeded_rng(3, 0);
    let mut ok = true;
    for trial in 0..50 {
        let (model, batch, _) = random_model_case(&mut rng, trial).expect("model");
        let w = model.param("tok_fc.w").expect("tok_fc.w");
        let b = model.param("tok_fc.b").expect("tok_fc.b");
        let closed = model.forward(&batch, GateMode::Fixed(0.0)).expect("forward");
        ok &= (0..closed.p_tok.rows()).all(|i| closed.p_tok.row(i) == b.data());
        let open = model.forward(&batch, GateMode::Fixed(1.0)).expect("forward");
        ok &= open.p_tok == fc_forward(open.h_tok(), w, b).expect("fc");
    }
    outcome(ok, "50 random models: g=0 gives exactly the token bias, g=1 exactly the ungated head")
}

fn c4_alpha() -> Outcome {
    let mut rng = seeded_rng(4, 0);
    let (mut worst_lin, mut worst_oracle) = (0.0f64, 0.0f64);
    let mut exact = true;
    for trial in 0..50 {
        let (model, batch, base) = random_model_case(&mut rng, trial).expect("model");
        let out = model.forward(&batch, GateMode::Learned).expect("forward");
        let gold = batch.gold.as_ref().expect("gold");
        let at = |alpha: f64| {
            joint_loss(&out, gold, &JointLossConfig { alpha, ..base }, model.config.logit_clamp).expect("loss")
        };
        let (l0, l5, l1) = (at(0.0), at(0.5), at(1.0));
        worst_lin = worst_lin.max((l5.total - (l0.total + l1.total) / 2.0).abs());
        exact &= l1.total == l1.sent && l0.total == l0.tok;
        // single-task losses computed from the logits directly
        let ce = |logits: &[f64], y: Label, w: [f64; 2]| -w[y.index()] * softmax(logits)[y.index()].ln();
        let sent = ce(&out.p_sent, gold.sentence_label, base.sent_class_weights);
        let tok = (0..out.p_tok.rows())
            .map(|i| ce(out.p_tok.row(i), gold.labels[i], base.tok_class_weights))
            .sum::<f64>()
            / out.p_tok.rows() as f64;
        worst_oracle = worst_oracle.max((l1.total - sent).abs()).max((l0.total - tok).abs());
    }
    outcome(
        worst_lin <= 1e-12 && exact && worst_oracle <= 1e-12,
        format!(
            "50 random cases: max |L(0.5) - (L(0)+L(1))/2| {worst_lin:.1e}, endpoints exact: {exact}, \
             max deviation from direct single-task losses {worst_oracle:.1e}"
        ),
    )
}

fn c5_weights() -> Outcome {
    let w = compute_class_weights(&[90, 10], false).expect("weights");
    let formula = (w[0] - 0.2).abs() <= 1e-12 && (w[1] - 1.8).abs() <= 1e-12;
    let balanced = compute_class_weights(&[50, 50], false).expect("weights");
    let unit = balanced == vec![1.0, 1.0];
    let mut rng = seeded_rng(5, 0);
    let mut same = true;
    for trial in 0..20 {
        let (model, batch, base) = random_model_case(&mut rng, trial).expect("model");
        let out = model.forward(&batch, GateMode::Learned).expect("forward");
        let gold = batch.gold.as_ref().expect("gold");
        let weighted = JointLossConfig {
            sent_class_weights: [balanced[0], balanced[1]],
            tok_class_weights: [balanced[0], balanced[1]],
            ..base
        };
        let plain = JointLossConfig {
            sent_class_weights: [1.0, 1.0],
            tok_class_weights: [1.0, 1.0],
            ..base
        };
        let clamp = model.config.logit_clamp;
        same &= joint_loss(&out, gold, &weighted, clamp).expect("loss").total
            == joint_loss(&out, gold, &plain, clamp).expect("loss").total;
    }
    outcome(
        formula && unit && same,
        format!("{{90,10}} -> {{{}, {}}}, {{50,50}} -> {:?}, balanced weighted loss identical: {same}", w[0], w[1], balanced),
    )
}

fn data<'a>(c: &'a SyntheticCorpus, tags: &'a [String], features: bool) -> TrainingData<'a> {
    TrainingData {
        train: &c.train,
        dev: &c.dev,
        annotations: if features {
            CorpusAnnotations {
                parse: Some(&c.parse),
                pos: Some(&c.pos),
            }
        } else {
            CorpusAnnotations::default()
        },
        affect_lexicons: std::slice::from_ref(&c.affect),
        semantic_lexicons: std::slice::from_ref(&c.semantic),
        pos_tags: tags,
    }
}

fn pos_tags() -> Vec<String> {
    POS_TAGS.iter().map(|s| s.to_string()).collect()
}

/// Affect lexicon, syntax surrogates and salience, plus sentence and
/// document features.
fn full_flags() -> FeatureFlags {
    FeatureFlags {
        semantic: false,
        ..FeatureFlags::default()
    }
}

fn c6_end_to_end() -> Outcome {
    let tags = pos_tags();
    let corpus = generate(&FixtureConfig::default()).expect("fixtures");
    let cfg = TrainConfig {
        target_f1: Some(0.95),
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let main = train(&data(&corpus, &tags, true), &cfg, &EncoderConfig::default(), full_flags()).expect("train");
    let main_time = t.elapsed();
    let reached = main.manifest.epochs_to_target;

    let imbalanced = generate(&FixtureConfig {
        prop_rate: 0.1,
        ..FixtureConfig::default()
    })
    .expect("fixtures");
    let epochs = |weighted: bool| {
        let c = TrainConfig { weighted, ..cfg };
        train(&data(&imbalanced, &tags, true), &c, &EncoderConfig::default(), full_flags())
            .expect("train")
            .manifest
            .epochs_to_target
            .unwrap_or(usize::MAX)
    };
    let (w, u) = (epochs(true), epochs(false));
    let show = |e: usize| if e == usize::MAX { "never".to_string() } else { e.to_string() };
    outcome(
        reached.is_some_and(|e| e <= 20) && main_time < Duration::from_secs(600) && w <= u,
        format!(
            "{} sentences: dev span F1 {:.4} at epoch {} in {}; 9:1 variant epochs to 0.95: weighted {}, unweighted {}",
            corpus.num_sentences(),
            main.manifest.best_dev_f1,
            reached.map_or("never".into(), |e| e.to_string()),
            secs(main_time),
            show(w),
            show(u)
        ),
    )
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn c7_ensemble() -> Outcome {
    let tags = pos_tags();
    let corpus = generate(&FixtureConfig::default()).expect("fixtures");
    // short, feature-free training so members disagree
    let mut members = Vec::new();
    let mut f1s = Vec::new();
    for seed in SEEDS {
        let cfg = TrainConfig {
            seed,
            lr: 3e-4,
            epochs: 1,
            ..TrainConfig::default()
        };
        let out = train(&data(&corpus, &tags, false), &cfg, &EncoderConfig::default(), FeatureFlags::none())
            .expect("train");
        let pred = out
            .model
            .predict_corpus(&corpus.dev.articles, CorpusAnnotations::default(), ThresholdPolicy::Argmax)
            .expect("predict");
        f1s.push(span_f1(&pred, &corpus.dev.spans).expect("score").f1);
        members.push(pred);
    }
    let copies = vec![members[0].clone(); 7];
    let copy_vote = ensemble(&corpus.dev.articles, &copies, None).expect("vote");
    let identity = copy_vote == mgspan::spanops::merge_spans(&members[0]);
    let voted = ensemble(&corpus.dev.articles, &members, None).expect("vote");
    let ens_f1 = span_f1(&voted, &corpus.dev.spans).expect("score").f1;
    let med = median(&mut f1s.clone());
    outcome(
        identity && ens_f1 >= med,
        format!(
            "vote of 7 copies is identity: {identity}; members F1 {:?}, median {med:.4}, vote {ens_f1:.4}",
            f1s.iter().map(|f| (f * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    )
}

/// Splits multi-word spans at a word boundary and pulls adjacent quotes in.
fn inject_noise(articles: &[Article], spans: &[Span]) -> Vec<Span> {
    let mut out = Vec::new();
    for s in spans {
        let a = articles.iter().find(|a| a.id == s.article_id).expect("article");
        let chars = a.chars();
        let words: Vec<_> = tokenize(a).into_iter().filter(|t| t.start >= s.start && t.end <= s.end).collect();
        let (mut start, mut end) = (s.start, s.end);
        if start > 0 && end < chars.len() && chars[start - 1] == '"' && chars[end] == '"' {
            start -= 1;
            end += 1;
        }
        match words.len() {
            0 | 1 => out.push(Span::new(&s.article_id, start, end)),
            2 => {
                out.push(Span::new(&s.article_id, start, words[0].end));
                out.push(Span::new(&s.article_id, words[1].start, end));
            }
            _ => {
                out.push(Span::new(&s.article_id, start, words[0].end));
                out.push(Span::new(&s.article_id, words[2].start, end));
            }
        }
    }
    out
}

fn c8_postprocess() -> Outcome {
    let corpus = generate(&FixtureConfig::default()).expect("fixtures");
    let dev: &Corpus = &corpus.dev;
    let cfg = PostProcessConfig {
        loaded_language_lexicon: Some(corpus.loaded_words.clone()),
        ..PostProcessConfig::default()
    };
    let base = span_f1(&dev.spans, &dev.spans).expect("score").f1;
    let noisy = inject_noise(&dev.articles, &dev.spans);
    let noisy_f1 = span_f1(&noisy, &dev.spans).expect("score").f1;
    let once = postprocess(&dev.articles, &noisy, &cfg);
    let twice = postprocess(&dev.articles, &once, &cfg);
    let fixed_f1 = span_f1(&once, &dev.spans).expect("score").f1;
    let plain_cfg = PostProcessConfig::default();
    let plain_once = postprocess(&dev.articles, &noisy, &plain_cfg);
    let plain_ok = plain_once == postprocess(&dev.articles, &plain_once, &plain_cfg);
    let plain_f1 = span_f1(&plain_once, &dev.spans).expect("score").f1;
    let idempotent = once == twice && plain_ok;
    outcome(
        idempotent && base - fixed_f1 <= 0.01 && base - plain_f1 <= 0.01,
        format!(
            "idempotent: {idempotent}; F1 clean {base:.4}, with injected gaps/quotes {noisy_f1:.4}, \
             after post-processing {fixed_f1:.4} (without loaded-language step {plain_f1:.4})"
        ),
    )
}

fn run(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mgspan"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let p = |s: &str| dir.path().join(s).display().to_string();
    let result = (|| -> Result<Vec<(String, bool)>, String> {
        run(&["make-fixtures", "--out", &p("fx"), "--seed", "1"])?;
        for r in ["run1", "run2"] {
            run(&["train", "--config", &p("fx/config.json"), "--seed", "3", "--epochs", "3", "--out", &p(r)])?;
        }
        Ok(["model.json", "metrics.csv"]
            .iter()
            .map(|f| {
                let read = |r: &str| std::fs::read(Path::new(&p(r)).join(f)).unwrap_or_default();
                let a = read("run1");
                (f.to_string(), !a.is_empty() && a == read("run2"))
            })
            .collect())
    })();
    match result {
        Ok(files) => outcome(
            files.iter().all(|(_, same)| *same),
            format!(
                "two CLI train runs, seed 3: {}",
                files
                    .iter()
                    .map(|(f, same)| format!("{f} {}", if *same { "identical" } else { "DIFFERS" }))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        ),
        Err(e) => outcome(false, format!("cli failed: {}", e.trim())),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient suite", c1_gradients),
        ("metric oracle", c2_metric),
        ("gate semantics", c3_gate),
        ("joint-loss linearity", c4_alpha),
        ("class-weight formula", c5_weights),
        ("end-to-end learning", c6_end_to_end),
        ("ensemble properties", c7_ensemble),
        ("post-processing", c8_postprocess),
        ("determinism", c9_determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.passed {
            failures += 1;
        }
        println!("criterion {}: {} {name}: {}", i + 1, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
