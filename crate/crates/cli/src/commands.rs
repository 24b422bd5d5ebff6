use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ppn::corpus::{
    generate_corpus, load_corpus, load_schemas, load_split, make_splits, save_corpus, save_schemas, save_split,
    Document, GeneratorConfig, SchemaSet, SplitMode, SplitSpec,
};
use ppn::eval::{
    evaluate, predict_document, run_ablations, speed_bench, Ablation, InferenceOptions, MetricsReport,
};
use ppn::linking::{build_link_matrix, build_masks, Prediction};
use ppn::model::{grad_check, load_checkpoint, tiny_fixture, Model, ModelConfig};
use ppn::serialize::Vocab;
use ppn::train::{build_vocab, train as train_model, VOCAB_FILE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{config_error, Overrides, RunConfig};
use crate::{
    AblateArgs, BenchArgs, CheckpointArgs, Common, CorpusArgs, DecodeArgs, EvalArgs, GenArgs, GradcheckArgs,
    ModelFlags, SplitArgs, TrainArgs, TrainFlags,
};

/// `error[kind]: message` on one line.
pub fn error_line(e: &anyhow::Error) -> String {
    let kind = match e.downcast_ref::<ppn::Error>() {
        Some(err) => match err {
            ppn::Error::Config(_) => "config",
            ppn::Error::Split(_) => "split",
            ppn::Error::Parse { .. } => "parse",
            ppn::Error::Validation { .. } => "validation",
            ppn::Error::Schema(_) => "schema",
            ppn::Error::Input(_) => "input",
            ppn::Error::Truncation { .. } => "truncation",
            ppn::Error::Coverage { .. } => "coverage",
            ppn::Error::Numeric(_) | ppn::Error::NonFiniteLoss { .. } => "numeric",
            ppn::Error::Checkpoint(_) => "checkpoint",
            ppn::Error::Evaluation(_) => "evaluation",
            ppn::Error::Benchmark(_) => "benchmark",
            ppn::Error::Io { .. } => "io",
            ppn::Error::Json(_) => "json",
        },
        None if e.downcast_ref::<std::io::Error>().is_some() => "io",
        None => "usage",
    };
    let msg = format!("{e:#}").replace('\n', " ");
    format!("error[{kind}]: {msg}")
}

fn load_config(common: &Common, overrides: Overrides) -> Result<RunConfig> {
    let mut overrides = overrides;
    overrides.set("preset", common.preset);
    RunConfig::load(common.config.as_deref(), overrides.into_value())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(ppn::Error::Input(format!("{what} `{}` does not exist", path.display())).into())
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn load_inputs(args: &CorpusArgs) -> Result<(Vec<Document>, SchemaSet, PathBuf)> {
    require(&args.corpus, "corpus")?;
    let schemas_path = args.schemas.clone().unwrap_or_else(|| sibling(&args.corpus, "schemas.json"));
    require(&schemas_path, "schema file")?;
    let docs = load_corpus(&args.corpus)?;
    let schemas = SchemaSet::new(load_schemas(&schemas_path)?);
    Ok((docs, schemas, schemas_path))
}

fn load_trained(args: &CheckpointArgs) -> Result<(Model<f32>, Vocab, PathBuf)> {
    require(&args.checkpoint, "checkpoint")?;
    let vocab_path = args.vocab.clone().unwrap_or_else(|| sibling(&args.checkpoint, VOCAB_FILE));
    require(&vocab_path, "vocabulary")?;
    let (model, _) = load_checkpoint(&args.checkpoint)?;
    let vocab = Vocab::load(&vocab_path)?;
    Ok((model, vocab, vocab_path))
}

fn inference(config: &RunConfig, model: &ModelConfig, threshold: Option<f64>) -> InferenceOptions {
    let mut opts = config.train.inference();
    opts.max_seq_len = model.max_seq_len;
    if let Some(t) = threshold {
        opts.threshold = t;
    }
    opts
}

fn model_overrides(o: &mut Overrides, m: &ModelFlags) {
    o.set("model.d_model", m.d_model)
        .set("model.n_layers", m.n_layers)
        .set("model.n_heads", m.n_heads)
        .set("model.d_head_score", m.d_head_score)
        .set("model.dropout", m.dropout)
        .set("model.use_sinusoidal", m.no_sinusoidal.then_some(false))
        .set("model.use_key_channels", m.no_key_channels.then_some(false))
        .set("model.use_qci", m.no_qci.then_some(false))
        .set("model.use_qhi", m.no_qhi.then_some(false))
        .set("model.use_qti", m.no_qti.then_some(false));
}

fn train_overrides(o: &mut Overrides, t: &TrainFlags) {
    o.set("train.learning_rate", t.lr)
        .set("train.epochs", t.epochs)
        .set("train.batch_size", t.batch_size)
        .set("train.warmup_ratio", t.warmup_ratio)
        .set("train.eval_every_steps", t.eval_every)
        .set("train.max_steps", t.max_steps)
        .set("train.seed", t.seed)
        .set("train.threshold", t.threshold)
        .set("train.dev_fraction", t.dev_fraction);
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

pub fn gen(a: GenArgs) -> Result<()> {
    let mut o = Overrides::new();
    o.set("generator.categories", a.categories)
        .set("generator.docs_per_category", a.docs_per_category)
        .set("generator.layouts_per_category", a.layouts_per_category)
        .set("generator.min_types", a.min_types)
        .set("generator.max_types", a.max_types)
        .set("generator.no_key_ratio", a.no_key_ratio)
        .set("generator.multi_span_prob", a.multi_span_prob)
        .set("generator.seed", a.seed);
    let config = load_config(&a.common, o)?;
    config.generator.validate()?;
    let corpus = generate_corpus(&config.generator)?;
    create_dir(&a.out)?;
    save_corpus(&corpus.documents, a.out.join("corpus.jsonl"))?;
    save_schemas(&corpus.schemas, a.out.join("schemas.json"))?;
    config.echo(&a.out, "gen", json!({}))?;
    let n_tokens: usize = corpus.documents.iter().map(|d| d.tokens.len()).sum();
    print_json(&json!({
        "documents": corpus.documents.len(),
        "categories": corpus.schemas.len(),
        "mean_tokens": n_tokens as f64 / corpus.documents.len().max(1) as f64,
        "max_tokens": corpus.documents.iter().map(|d| d.tokens.len()).max().unwrap_or(0),
        "no_key_fraction": corpus.no_key_fraction(),
    }))
}

pub fn split(a: SplitArgs) -> Result<()> {
    let mut o = Overrides::new();
    if let Some(m) = &a.mode {
        o.set("split.mode", Some(m.parse::<SplitMode>()?));
    }
    o.set("split.k", a.k).set("split.seed", a.seed);
    let config = load_config(&a.common, o)?;
    require(&a.corpus, "corpus")?;
    let docs = load_corpus(&a.corpus)?;
    let s = &config.split;
    let spec = make_splits(&docs, s.mode, s.k, s.seed)?;
    create_dir(&a.out)?;
    save_split(&spec, a.out.join("split.json"))?;
    config.echo(&a.out, "split", json!({ "corpus": path_str(&a.corpus) }))?;
    print_json(&json!({
        "mode": spec.mode,
        "k": spec.k,
        "train_documents": spec.train_ids.len(),
        "test_documents": spec.test_ids.len(),
    }))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut o = Overrides::new();
    model_overrides(&mut o, &a.model);
    train_overrides(&mut o, &a.train);
    let config = load_config(&a.common, o)?;
    let (docs, schemas, schemas_path) = load_inputs(&a.corpus)?;
    require(&a.split, "split")?;
    let split = load_split(&a.split)?;
    create_dir(&a.out)?;
    config.echo(
        &a.out,
        "train",
        json!({
            "corpus": path_str(&a.corpus.corpus),
            "schemas": path_str(&schemas_path),
            "split": path_str(&a.split),
        }),
    )?;
    let out = train_model(&config.train, &config.model, &docs, &schemas, &split, &a.out)?;
    print_json(&json!({
        "checkpoint": path_str(&out.checkpoint),
        "vocab": path_str(&out.vocab_path),
        "log": path_str(&out.log_path),
        "total_steps": out.total_steps,
        "best_step": out.best_step,
        "best_dev_f1": out.best_dev_f1,
    }))
}

fn select_split(docs: &[Document], split: &SplitSpec) -> Result<Vec<Document>> {
    split
        .test_ids
        .iter()
        .map(|id| {
            docs.iter()
                .find(|d| &d.id == id)
                .cloned()
                .ok_or_else(|| ppn::Error::Split(format!("test document `{id}` is not in the corpus")).into())
        })
        .collect()
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut o = Overrides::new();
    o.set("train.threshold", a.threshold);
    let config = load_config(&a.common, o)?;
    let (model, vocab, vocab_path) = load_trained(&a.checkpoint)?;
    let (docs, schemas, schemas_path) = load_inputs(&a.corpus)?;
    let (docs, default_mode) = match &a.split {
        Some(path) => {
            require(path, "split")?;
            let spec = load_split(path)?;
            let mode = match (spec.mode, spec.k) {
                (SplitMode::FewShot, Some(k)) => format!("few_shot_{k}"),
                (m, _) => serde_json::to_value(m)?.as_str().unwrap_or_default().to_string(),
            };
            (select_split(&docs, &spec)?, mode)
        }
        None => (docs, "all".to_string()),
    };
    let opts = inference(&config, &model.config, None);
    let (metrics, predictions) = evaluate(&model, &vocab, &schemas, &docs, &opts)?;
    let report = MetricsReport {
        mode: a.mode.unwrap_or(default_mode),
        metrics,
    };
    create_dir(&a.out)?;
    write_json(&report, &a.out.join("metrics.json"))?;
    write_jsonl(&predictions, &a.out.join("predictions.jsonl"))?;
    config.echo(
        &a.out,
        "eval",
        json!({
            "checkpoint": path_str(&a.checkpoint.checkpoint),
            "vocab": path_str(&vocab_path),
            "corpus": path_str(&a.corpus.corpus),
            "schemas": path_str(&schemas_path),
            "split": a.split.as_deref().map(path_str),
            "inference": opts,
        }),
    )?;
    print_json(&report)
}

pub fn decode(a: DecodeArgs) -> Result<()> {
    let mut o = Overrides::new();
    o.set("train.threshold", a.threshold);
    let config = load_config(&a.common, o)?;
    let (model, vocab, _) = load_trained(&a.checkpoint)?;
    let (docs, schemas, _) = load_inputs(&a.corpus)?;
    let doc = docs
        .iter()
        .find(|d| d.id == a.doc_id)
        .ok_or_else(|| ppn::Error::Input(format!("document `{}` is not in the corpus", a.doc_id)))?;
    let opts = inference(&config, &model.config, None);
    let prediction = predict_document(&model, &vocab, &schemas, doc, &opts)?;
    writeln!(std::io::stdout().lock(), "{}", serde_json::to_string(&prediction)?)?;
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let mut o = Overrides::new();
    o.set("train.seed", a.seed);
    let config = load_config(&a.common, o)?;
    if a.questions == 0 || a.docs == 0 {
        return Err(config_error("--questions and --docs must be positive"));
    }
    let (docs, schemas) = match &a.corpus {
        Some(path) => {
            let (docs, schemas, _) = load_inputs(&CorpusArgs {
                corpus: path.clone(),
                schemas: a.schemas.clone(),
            })?;
            let docs: Vec<Document> = docs.into_iter().take(a.docs).collect();
            if docs.len() < a.docs {
                return Err(ppn::Error::Benchmark(format!("corpus holds {} documents, {} requested", docs.len(), a.docs)).into());
            }
            (docs, schemas)
        }
        None => {
            let generator = GeneratorConfig {
                categories: 1,
                docs_per_category: a.docs,
                min_types: a.questions,
                max_types: a.questions,
                seed: config.generator.seed,
                ..config.generator.clone()
            };
            let corpus = generate_corpus(&generator)?;
            (corpus.documents, SchemaSet::new(corpus.schemas))
        }
    };
    let (model, vocab) = match &a.checkpoint {
        Some(path) => {
            let (model, vocab, _) = load_trained(&CheckpointArgs {
                checkpoint: path.clone(),
                vocab: a.vocab.clone(),
            })?;
            (model, vocab)
        }
        None => {
            let refs: Vec<&Document> = docs.iter().collect();
            let vocab = build_vocab(&refs, &schemas, 1)?;
            let model_config = ModelConfig {
                vocab_size: vocab.len(),
                ..config.model.clone()
            };
            let model = Model::init(model_config, &mut ChaCha8Rng::seed_from_u64(config.train.seed))?;
            (model, vocab)
        }
    };
    let opts = inference(&config, &model.config, None);
    let (report, outputs) = speed_bench(&model, &vocab, &schemas, &docs, a.questions, &opts)?;
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_json(&report, &out.join("speed.json"))?;
        write_jsonl::<Prediction>(&outputs.parallel, &out.join("predictions_parallel.jsonl"))?;
        write_jsonl::<Prediction>(&outputs.sequential, &out.join("predictions_sequential.jsonl"))?;
        config.echo(out, "bench", json!({ "questions": a.questions, "docs": a.docs }))?;
    }
    print_json(&report)
}

pub fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let (doc, sample, vocab) = tiny_fixture(a.seq_len)?;
    let config = ModelConfig {
        vocab_size: vocab.len(),
        d_model: a.d_model,
        n_layers: a.n_layers,
        n_heads: a.n_heads,
        d_head_score: a.d_head_score,
        max_seq_len: a.seq_len,
        dropout: 0.0,
        use_key_channels: !a.no_key_channels,
        ..Default::default()
    };
    let model: Model<f64> = Model::init(config, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    let n = model.config.n_link_types();
    let gold = build_link_matrix(&sample, &doc, n)?;
    let mask = build_masks(&sample, n, model.config.isolation());
    let report = grad_check(&model, &sample, &gold, &mask, a.eps, a.per_tensor, a.seed)?;
    print_json(&json!({
        "max_rel_error": report.max_rel_error,
        "tolerance": a.tolerance,
        "passed": report.max_rel_error < a.tolerance,
        "coordinates": report.coordinates,
        "per_tensor": report.per_tensor.iter().map(|(n, e)| json!({ "tensor": n, "max_rel_error": e })).collect::<Vec<Value>>(),
    }))?;
    if report.max_rel_error < a.tolerance {
        Ok(())
    } else {
        Err(ppn::Error::Numeric(format!(
            "max relative error {:.3e} exceeds {:.1e}",
            report.max_rel_error, a.tolerance
        ))
        .into())
    }
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let mut o = Overrides::new();
    model_overrides(&mut o, &a.model);
    train_overrides(&mut o, &a.train);
    let config = load_config(&a.common, o)?;
    let ablations = a
        .ablations
        .iter()
        .map(|s| s.trim().parse::<Ablation>())
        .collect::<ppn::Result<Vec<_>>>()?;
    let (docs, schemas, schemas_path) = load_inputs(&a.corpus)?;
    require(&a.split, "split")?;
    let split = load_split(&a.split)?;
    create_dir(&a.out)?;
    config.echo(
        &a.out,
        "ablate",
        json!({
            "corpus": path_str(&a.corpus.corpus),
            "schemas": path_str(&schemas_path),
            "split": path_str(&a.split),
            "ablations": ablations.iter().map(|x| x.name()).collect::<Vec<_>>(),
        }),
    )?;
    let report = run_ablations(&docs, &schemas, &split, &ablations, &config.model, &config.train, &a.out)?;
    write_json(&report, &a.out.join("ablations.json"))?;
    print_json(&report)
}
