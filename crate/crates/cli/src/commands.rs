use std::path::{Path, PathBuf};

use mgspan::corpus::{
    apply_sentence_bounds, format_spans, load_articles, load_corpus, project_spans, read_sentence_bounds,
    read_spans, sentence_slices, split_at_sentences, tokenize, validate_spans, Article, Label,
};
use mgspan::fixtures::{self, layout, FixtureConfig};
use mgspan::lexfeatures::{load_word_list, CorpusAnnotations, TokenAnnotations};
use mgspan::mgmodel::ThresholdPolicy;
use mgspan::scorer::span_f1;
use mgspan::spanops::{ensemble as vote, postprocess as run_postprocess, PostProcessConfig};
use mgspan::trainer::{self, metrics_csv, Featurizer, TrainedModel, TrainingData};
use mgspan::{Error, Result};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{load_data, DataPaths, LexiconPaths, LoadedData, RunConfig};
use crate::manifest::OutputDir;
use crate::{
    EnsembleArgs, FeaturizeArgs, FixtureArgs, IngestArgs, PostprocessArgs, PredictArgs, ScoreArgs, TrainArgs,
};

fn to_json<T: serde::Serialize>(value: &T, context: &str) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Json {
        context: context.into(),
        source: e,
    })?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn to_value<T: serde::Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("plain data serializes")
}

fn articles_with_bounds(dir: &Path, sentences: Option<&Path>) -> Result<Vec<Article>> {
    let mut articles = load_articles(dir)?;
    if let Some(p) = sentences {
        apply_sentence_bounds(&mut articles, &read_sentence_bounds(p)?)?;
    }
    Ok(articles)
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn inputs(paths: &[Option<&Path>]) -> Vec<PathBuf> {
    paths.iter().flatten().map(|p| p.to_path_buf()).collect()
}

pub fn ingest(args: IngestArgs) -> Result<()> {
    let mut corpus = load_corpus(&args.articles, &args.labels)?;
    if let Some(p) = &args.sentences {
        apply_sentence_bounds(&mut corpus.articles, &read_sentence_bounds(p)?)?;
    }
    let mut spans = corpus.spans.clone();
    spans.sort();
    let mut rows = String::from("article_id\tsentence\ttoken\tstart\tend\tsurface\tlabel\n");
    let (mut n_tokens, mut n_prop_tokens, mut n_sent, mut n_prop_sent, mut crossing) = (0, 0, 0, 0, 0);
    for a in &corpus.articles {
        let tokens = tokenize(a);
        let gold: Vec<_> = corpus.spans_for(&a.id).cloned().collect();
        crossing += split_at_sentences(a, &gold).len().saturating_sub(gold.len());
        let labels = project_spans(a, &tokens, &gold);
        for (si, (toks, seq)) in sentence_slices(&tokens, a.num_sentences()).iter().zip(&labels).enumerate() {
            n_sent += 1;
            n_prop_sent += usize::from(seq.sentence_label == Label::Prop);
            for (ti, (t, l)) in toks.iter().zip(&seq.labels).enumerate() {
                n_tokens += 1;
                n_prop_tokens += usize::from(*l == Label::Prop);
                rows.push_str(&format!(
                    "{}\t{si}\t{ti}\t{}\t{}\t{}\t{}\n",
                    a.id,
                    t.start,
                    t.end,
                    t.surface,
                    l.index()
                ));
            }
        }
    }
    let summary = json!({
        "articles": corpus.articles.len(),
        "sentences": n_sent,
        "prop_sentences": n_prop_sent,
        "tokens": n_tokens,
        "prop_tokens": n_prop_tokens,
        "spans": spans.len(),
        "extra_pieces_from_cross_sentence_spans": crossing,
    });
    let mut out = OutputDir::create(&args.out)?;
    out.write("spans.tsv", format_spans(&spans).as_bytes())?;
    out.write("tokens.tsv", rows.as_bytes())?;
    out.write("summary.json", &to_json(&summary, "summary")?)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    out.finish(
        "ingest",
        None,
        json!({ "sentences": args.sentences }),
        &inputs(&[Some(&args.articles), Some(&args.labels), args.sentences.as_deref()]),
    )
}

fn training_data(data: &LoadedData) -> TrainingData<'_> {
    TrainingData {
        train: &data.train,
        dev: &data.dev,
        annotations: CorpusAnnotations {
            parse: data.parse.as_ref(),
            pos: data.pos.as_ref(),
        },
        affect_lexicons: &data.affect,
        semantic_lexicons: &data.semantic,
        pos_tags: &data.pos_tags,
    }
}

pub fn featurize(args: FeaturizeArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let data = load_data(&cfg)?;
    trainer::check_split(&data.train, &data.dev)?;
    let td = training_data(&data);
    let featurizer = Featurizer::build(&td, cfg.features, &cfg.encoder);
    let train_words: Vec<String> = data
        .train
        .articles
        .iter()
        .flat_map(|a| tokenize(a).into_iter().map(|t| t.surface))
        .collect();
    let miss_rates: serde_json::Map<String, serde_json::Value> = featurizer
        .spec
        .lexicons
        .iter()
        .map(|l| (l.name.clone(), json!(l.miss_rate(train_words.iter().map(String::as_str)))))
        .collect();
    let summary = json!({
        "vocab_size": featurizer.vocab.len(),
        "word_feature_dim": featurizer.spec.word_dim(),
        "sentence_feature_dim": featurizer.spec.sentence_dim(),
        "document_feature_dim": featurizer.spec.document_dim(),
        "salience_words": featurizer.spec.salience.as_ref().map(|s| s.len()),
        "lexicon_miss_rates": miss_rates,
        "model_config": featurizer.model_config(&cfg.encoder),
    });
    let mut out = OutputDir::create(&args.out)?;
    out.write("featurizer.json", &to_json(&featurizer, "featurizer")?)?;
    out.write("summary.json", &to_json(&summary, "summary")?)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    let mut ins = vec![args.config.clone()];
    ins.extend(cfg.inputs());
    out.finish("featurize", None, to_value(&cfg), &ins)
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    let t = &mut cfg.train;
    if let Some(v) = args.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = args.epochs {
        t.epochs = v;
    }
    if let Some(v) = args.lr {
        t.lr = v;
    }
    if let Some(v) = args.alpha {
        t.alpha = v;
    }
    if let Some(v) = args.l2_beta {
        t.l2_beta = v;
    }
    if let Some(v) = args.patience {
        t.patience = v;
    }
    if args.target_f1.is_some() {
        t.target_f1 = args.target_f1;
    }
    if args.unweighted {
        t.weighted = false;
    }
    if args.smoothing {
        t.smoothing = true;
    }
    if let Some(s) = args.seed {
        t.seed = s;
    }
    cfg.train.validate()?;
    let data = load_data(&cfg)?;
    let mut ins = vec![args.config.clone()];
    ins.extend(cfg.inputs());

    let multi = !args.seeds.is_empty();
    let seeds = if multi { args.seeds.clone() } else { vec![cfg.train.seed] };
    let run = |seed: u64| -> Result<(u64, f64)> {
        let mut run_cfg = cfg.clone();
        run_cfg.train.seed = seed;
        let dir = if multi {
            args.out.join(format!("seed-{seed}"))
        } else {
            args.out.clone()
        };
        let outcome = trainer::train(
            &training_data(&data),
            &run_cfg.train,
            &run_cfg.encoder,
            run_cfg.features,
        )?;
        let mut out = OutputDir::create(&dir)?;
        out.write("model.json", outcome.model.to_json()?.as_bytes())?;
        out.write("metrics.csv", metrics_csv(&outcome.manifest.epochs).as_bytes())?;
        out.write("train_manifest.json", &to_json(&outcome.manifest, "train manifest")?)?;
        out.finish("train", Some(seed), to_value(&run_cfg), &ins)?;
        Ok((seed, outcome.manifest.best_dev_f1))
    };
    let results = pool(args.threads)?.install(|| seeds.par_iter().map(|&s| run(s)).collect::<Vec<_>>());
    for r in results {
        let (seed, f1) = r?;
        println!("seed {seed}: best dev span F1 {f1:.6}");
    }
    Ok(())
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let policy = match args.min_prob {
        Some(p) if p > 0.0 && p <= 1.0 => ThresholdPolicy::MinProb(p),
        Some(p) => return Err(Error::Config(format!("--min-prob {p} must lie in (0, 1]"))),
        None => ThresholdPolicy::Argmax,
    };
    let model = TrainedModel::load(&args.model)?;
    let articles = articles_with_bounds(&args.articles, args.sentences.as_deref())?;
    let parse = args.parse.as_deref().map(TokenAnnotations::load).transpose()?;
    let pos = args.pos.as_deref().map(TokenAnnotations::load).transpose()?;
    let ann = CorpusAnnotations {
        parse: parse.as_ref(),
        pos: pos.as_ref(),
    };
    let per_article = pool(args.threads)?.install(|| {
        articles
            .par_iter()
            .map(|a| model.predict_article(a, ann, policy))
            .collect::<Result<Vec<_>>>()
    })?;
    let spans: Vec<_> = per_article.into_iter().flatten().collect();
    let mut out = OutputDir::create(&args.out)?;
    out.write("predictions.tsv", format_spans(&spans).as_bytes())?;
    println!("{} spans over {} articles", spans.len(), articles.len());
    out.finish(
        "predict",
        None,
        json!({ "min_prob": args.min_prob }),
        &inputs(&[
            Some(&args.model),
            Some(&args.articles),
            args.parse.as_deref(),
            args.pos.as_deref(),
            args.sentences.as_deref(),
        ]),
    )
}

pub fn ensemble(args: EnsembleArgs) -> Result<()> {
    let articles = load_articles(&args.articles)?;
    let members = args
        .preds
        .iter()
        .map(|p| {
            let spans = read_spans(p)?;
            validate_spans(&articles, &spans)?;
            Ok(spans)
        })
        .collect::<Result<Vec<_>>>()?;
    let spans = vote(&articles, &members, args.quorum)?;
    let mut out = OutputDir::create(&args.out)?;
    out.write("ensemble.tsv", format_spans(&spans).as_bytes())?;
    println!("{} members, {} spans", members.len(), spans.len());
    let mut ins = args.preds.clone();
    ins.push(args.articles.clone());
    out.finish("ensemble", None, json!({ "quorum": args.quorum }), &ins)
}

pub fn postprocess(args: PostprocessArgs) -> Result<()> {
    let articles = load_articles(&args.articles)?;
    let spans = read_spans(&args.pred)?;
    validate_spans(&articles, &spans)?;
    let lower = |v: Vec<String>| v.into_iter().map(|w| w.to_lowercase()).collect();
    let mut cfg = PostProcessConfig {
        max_gap_words: args.max_gap,
        merge_within_sentence: !args.across_sentences,
        trim_stopwords: !args.no_trim,
        ..PostProcessConfig::default()
    };
    if let Some(p) = &args.stopwords {
        cfg.stopwords = lower(load_word_list(p)?);
    }
    if let Some(p) = &args.loaded_language {
        cfg.loaded_language_lexicon = Some(lower(load_word_list(p)?));
    }
    let result = run_postprocess(&articles, &spans, &cfg);
    let mut out = OutputDir::create(&args.out)?;
    out.write("postprocessed.tsv", format_spans(&result).as_bytes())?;
    println!("{} spans in, {} spans out", spans.len(), result.len());
    out.finish(
        "postprocess",
        None,
        to_value(&cfg),
        &inputs(&[
            Some(&args.pred),
            Some(&args.articles),
            args.stopwords.as_deref(),
            args.loaded_language.as_deref(),
        ]),
    )
}

pub fn score(args: ScoreArgs) -> Result<()> {
    let pred = read_spans(&args.pred)?;
    let gold = read_spans(&args.gold)?;
    if let Some(dir) = &args.articles {
        let articles = load_articles(dir)?;
        validate_spans(&articles, &pred)?;
        validate_spans(&articles, &gold)?;
    }
    let report = span_f1(&pred, &gold)?;
    println!("{report}");
    if let Some(dir) = &args.out {
        let mut out = OutputDir::create(dir)?;
        out.write("score.csv", report.to_csv().as_bytes())?;
        out.write("score.json", &to_json(&report, "score report")?)?;
        out.finish(
            "score",
            None,
            json!({}),
            &inputs(&[Some(&args.pred), Some(&args.gold), args.articles.as_deref()]),
        )?;
    }
    Ok(())
}

pub fn make_fixtures(args: FixtureArgs) -> Result<()> {
    let fc = FixtureConfig {
        articles: args.articles,
        sentences_per_article: args.sentences,
        prop_rate: args.prop_rate,
        quote_rate: args.quote_rate,
        dev_fraction: args.dev_fraction,
        seed: args.seed,
    };
    let corpus = fixtures::generate(&fc)?;
    corpus.write_to(&args.out)?;
    let cfg = RunConfig {
        data: DataPaths {
            train_articles: layout::TRAIN_ARTICLES.into(),
            train_labels: layout::TRAIN_LABELS.into(),
            dev_articles: layout::DEV_ARTICLES.into(),
            dev_labels: layout::DEV_LABELS.into(),
            parse: Some(layout::PARSE.into()),
            pos: Some(layout::POS.into()),
            pos_tags: Some(layout::POS_TAGSET.into()),
            sentences: None,
        },
        lexicons: LexiconPaths {
            affect: vec![layout::AFFECT_LEXICON.into()],
            semantic: vec![layout::SEMANTIC_LEXICON.into()],
        },
        features: Default::default(),
        encoder: Default::default(),
        train: Default::default(),
    };
    let mut out = OutputDir::create(&args.out)?;
    out.write("config.json", &to_json(&cfg, "run config")?)?;
    for name in ["train", "dev", "annotations", "lexicons"] {
        out.record(name)?;
    }
    println!(
        "{} train + {} dev articles, {} sentences, {} gold spans",
        corpus.train.articles.len(),
        corpus.dev.articles.len(),
        corpus.num_sentences(),
        corpus.train.spans.len() + corpus.dev.spans.len()
    );
    out.finish("make-fixtures", Some(args.seed), to_value(&fc), &[])
}
