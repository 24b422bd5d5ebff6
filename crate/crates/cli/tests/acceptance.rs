//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the lines always reach the terminal. Pass
//! substrings as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- speed`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ndarray::{Array2, Array3};
use ppn::corpus::{generate_corpus, Document, GeneratorConfig, Role, SchemaSet, Span, SplitMode, SplitSpec};
use ppn::eval::{evaluate, InferenceOptions};
use ppn::linking::{
    build_link_matrix, build_masks, decode, ChannelGrid, DecodeOptions, LinkType, Prediction, FULL_CHANNELS,
};
use ppn::model::{circle_loss, load_checkpoint, score, Model, ModelConfig};
use ppn::serialize::{samples_for_document, Vocab};
use ppn::train::{train, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Check = anyhow::Result<(bool, String)>;

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

const MIN: u64 = 60;

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria = [
        Criterion { name: "round_trip", limit: Duration::from_secs(30), run: round_trip },
        Criterion { name: "mask_soundness", limit: Duration::from_secs(30), run: mask_soundness },
        Criterion { name: "gradient_check", limit: Duration::from_secs(2 * MIN), run: gradient_check },
        Criterion { name: "rotary_shift_invariance", limit: Duration::from_secs(10), run: rotary_shift_invariance },
        Criterion { name: "circle_loss_values", limit: Duration::from_secs(10), run: circle_loss_values },
        Criterion { name: "overfit", limit: Duration::from_secs(5 * MIN), run: overfit },
        Criterion { name: "few_shot", limit: Duration::from_secs(20 * MIN), run: few_shot },
        Criterion { name: "speed", limit: Duration::from_secs(10 * MIN), run: speed },
        Criterion { name: "ablation_plumbing", limit: Duration::from_secs(10 * MIN), run: ablation_plumbing },
        Criterion { name: "determinism", limit: Duration::from_secs(10 * MIN), run: determinism },
    ];
    let mut failed = 0;
    for c in criteria.iter().filter(|c| filters.is_empty() || filters.iter().any(|f| c.name.contains(f.as_str()))) {
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.limit;
        let (ok, detail) = match result {
            Ok((ok, detail)) => (ok && in_time, detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        let time_note = if in_time { String::new() } else { format!(" over the {}s limit", c.limit.as_secs()) };
        println!(
            "{} {}: {} [{:.1}s{}]",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            detail,
            elapsed.as_secs_f64(),
            time_note
        );
        if !ok {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn ppn(args: &[&str]) -> anyhow::Result<(String, String)> {
    let out = Command::new(env!("CARGO_BIN_EXE_ppn")).args(args).output()?;
    let stdout = String::from_utf8(out.stdout)?;
    let stderr = String::from_utf8(out.stderr)?;
    if !out.status.success() {
        anyhow::bail!("`ppn {}` failed: {}", args.join(" "), stderr.trim());
    }
    Ok((stdout, stderr))
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn read_json(path: &Path) -> anyhow::Result<Value> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// The shared oracle corpus: 20 categories of 25 documents.
fn oracle_corpus() -> anyhow::Result<(Vec<Document>, SchemaSet, Vocab)> {
    let corpus = generate_corpus(&GeneratorConfig {
        categories: 20,
        docs_per_category: 25,
        seed: 101,
        ..Default::default()
    })?;
    let labels: Vec<String> = corpus.schemas.iter().flat_map(|s| s.value_types.clone()).collect();
    let vocab = Vocab::build(&corpus.documents, &labels);
    Ok((corpus.documents, SchemaSet::new(corpus.schemas), vocab))
}

/// Gold (label, value spans, key spans) triples read straight off the annotation.
fn gold_entities(doc: &Document) -> BTreeSet<(String, Vec<Span>, Option<Vec<Span>>)> {
    doc.entities
        .iter()
        .enumerate()
        .filter(|(_, e)| e.role == Role::Value)
        .map(|(vi, e)| {
            let key = doc.kv_links.iter().find(|l| l.value == vi).map(|l| doc.entities[l.key].spans.clone());
            (e.label.clone().unwrap_or_default(), e.spans.clone(), key)
        })
        .collect()
}

fn predicted_entities(p: &Prediction) -> BTreeSet<(String, Vec<Span>, Option<Vec<Span>>)> {
    p.answers
        .iter()
        .flat_map(|(l, ents)| ents.iter().map(move |e| (l.clone(), e.spans.clone(), e.key_spans.clone())))
        .collect()
}

fn round_trip() -> Check {
    let (docs, schemas, vocab) = oracle_corpus()?;
    let (mut explicit, mut keyless, mut multi) = (0, 0, 0);
    let (mut gold_n, mut pred_n, mut correct) = (0usize, 0usize, 0usize);
    for d in &docs {
        let gold = gold_entities(d);
        for (_, spans, key) in &gold {
            if key.is_some() {
                explicit += 1;
            } else {
                keyless += 1;
            }
            if spans.len() > 1 {
                multi += 1;
            }
        }
        let mut pred = Prediction::empty(&d.id);
        for sample in samples_for_document(d, &schemas, &vocab, 128, 512)? {
            let z = build_link_matrix(&sample, d, FULL_CHANNELS)?;
            pred.merge(decode(&z, &sample, DecodeOptions::default()));
        }
        let pred = predicted_entities(&pred);
        gold_n += gold.len();
        pred_n += pred.len();
        correct += gold.intersection(&pred).count();
    }
    let p = correct as f64 / pred_n.max(1) as f64;
    let r = correct as f64 / gold_n.max(1) as f64;
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    let ok = docs.len() >= 500 && explicit > 0 && keyless > 0 && multi > 0 && f1 == 1.0;
    Ok((
        ok,
        format!(
            "{} documents ({explicit} explicit-key, {keyless} no-key, {multi} multi-span values), F1 {f1} (required exactly 1.0)",
            docs.len()
        ),
    ))
}

fn mask_soundness() -> Check {
    let (docs, schemas, vocab) = oracle_corpus()?;
    let (mut violations, mut cells) = (0usize, 0usize);
    for d in &docs {
        for sample in samples_for_document(d, &schemas, &vocab, 128, 512)? {
            let z = build_link_matrix(&sample, d, FULL_CHANNELS)?;
            let m = build_masks(&sample, FULL_CHANNELS, Default::default());
            for (c, i, j) in z.ones() {
                cells += 1;
                if !m.get_channel(c - 1, i, j) {
                    violations += 1;
                }
            }
        }
    }
    Ok((violations == 0, format!("{violations} violations over {cells} gold cells in {} documents", docs.len())))
}

fn gradient_check() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for args in [
        ["--d-model", "8", "--seq-len", "16", "--n-layers", "1"],
        ["--d-model", "16", "--seq-len", "24", "--n-layers", "2"],
    ] {
        let mut full = vec!["gradcheck"];
        full.extend(args);
        let (out, _) = ppn(&full)?;
        let v: Value = serde_json::from_str(&out)?;
        let err = v["max_rel_error"].as_f64().unwrap_or(f64::INFINITY);
        let tensors = v["per_tensor"].as_array().map_or(0, Vec::len);
        ok &= err < 1e-4 && tensors > 0;
        details.push(format!("d_model {} L {}: max rel error {err:.2e} over {tensors} tensors", args[1], args[3]));
    }
    Ok((ok, format!("{} (required < 1e-4)", details.join("; "))))
}

fn open_grid(len: usize) -> ChannelGrid {
    let mut g = ChannelGrid::zeros(FULL_CHANNELS, len);
    for link in LinkType::ALL {
        for i in 0..len {
            for j in 0..len {
                g.set(link, i, j, true);
            }
        }
    }
    g
}

fn rotary_shift_invariance() -> Check {
    let len = 24;
    let base = ModelConfig {
        vocab_size: 10,
        d_model: 16,
        n_layers: 1,
        n_heads: 2,
        d_head_score: 8,
        max_seq_len: 64,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let row: Vec<f64> = (0..base.d_model).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h = Array2::from_shape_fn((len, base.d_model), |(_, c)| row[c]);
    let pos: Vec<u32> = (0..len as u32).collect();
    let mask = open_grid(len);

    let model: Model<f64> = Model::init(base.clone(), &mut ChaCha8Rng::seed_from_u64(3))?;
    let z = score(h.view(), &mask, &model.params, &base, &pos);
    let mut worst = 0.0f64;
    for shift in 1..8 {
        for k in 0..FULL_CHANNELS {
            for i in 0..len - shift {
                for j in 0..len - shift {
                    worst = worst.max((z[[k, i, j]] - z[[k, i + shift, j + shift]]).abs());
                }
            }
        }
    }

    let flat = ModelConfig { use_sinusoidal: false, ..base };
    let model: Model<f64> = Model::init(flat.clone(), &mut ChaCha8Rng::seed_from_u64(3))?;
    let mut mask = mask;
    mask.set(LinkType::KeyNext, 2, 5, false);
    let z = score(h.view(), &mask, &model.params, &flat, &pos);
    let mut spread = 0.0f64;
    for k in 0..FULL_CHANNELS {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..len {
            for j in 0..len {
                if mask.get_channel(k, i, j) {
                    lo = lo.min(z[[k, i, j]]);
                    hi = hi.max(z[[k, i, j]]);
                }
            }
        }
        spread = spread.max(hi - lo);
    }
    Ok((
        worst < 1e-5 && spread < 1e-12,
        format!("max shift difference {worst:.2e} over shifts 1..7 (required < 1e-5); spread without rotary {spread:.2e}"),
    ))
}

/// ln(1 + sum of e^s over negatives) + ln(1 + sum of e^-s over positives).
fn circle_oracle(pos: &[f64], neg: &[f64]) -> f64 {
    (1.0 + neg.iter().map(|s| s.exp()).sum::<f64>()).ln() + (1.0 + pos.iter().map(|s| (-s).exp()).sum::<f64>()).ln()
}

/// Loss of one channel whose first row holds `pos` then `neg` scores and
/// whose other cells are masked out.
fn row_loss(pos: &[f64], neg: &[f64]) -> f64 {
    let n = (pos.len() + neg.len()).max(1);
    let mut z = Array3::zeros((1, n, n));
    let mut gold = ChannelGrid::zeros(1, n);
    let mut mask = ChannelGrid::zeros(1, n);
    for (j, &v) in pos.iter().chain(neg).enumerate() {
        z[[0, 0, j]] = v;
        mask.set(LinkType::ValueNext, 0, j, true);
        gold.set(LinkType::ValueNext, 0, j, j < pos.len());
    }
    circle_loss(z.view(), &gold, &mask)
}

/// Name, positive scores, negative scores, pinned reference value.
type LossCase = (&'static str, Vec<f64>, Vec<f64>, Option<f64>);

#[allow(clippy::approx_constant)]
fn circle_loss_values() -> Check {
    let cases: [LossCase; 4] = [
        ("empty", vec![], vec![], Some(0.0)),
        ("pos 2.0, neg -1.0", vec![2.0], vec![-1.0], Some(0.4402)),
        ("neg 0", vec![], vec![0.0], Some(0.6931)),
        ("pos 0.3 1.5, neg -0.2 0.7 -2", vec![0.3, 1.5], vec![-0.2, 0.7, -2.0], None),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (name, pos, neg, reference) in &cases {
        let got = row_loss(pos, neg);
        let oracle = circle_oracle(pos, neg);
        ok &= (got - oracle).abs() < 1e-12;
        if let Some(r) = reference {
            ok &= (got - r).abs() <= 1e-4;
        }
        details.push(format!("{name} -> {got:.4}"));
    }
    Ok((ok, format!("{} (reference values within 1e-4)", details.join("; "))))
}

fn overfit() -> Check {
    let corpus = generate_corpus(&GeneratorConfig {
        categories: 2,
        docs_per_category: 4,
        seed: 23,
        ..Default::default()
    })?;
    let schemas = SchemaSet::new(corpus.schemas);
    let docs = corpus.documents;
    let split = SplitSpec {
        mode: SplitMode::Full,
        k: None,
        seed: 0,
        train_ids: docs.iter().map(|d| d.id.clone()).collect(),
        test_ids: Vec::new(),
    };
    let model = ModelConfig {
        d_model: 32,
        n_layers: 1,
        n_heads: 2,
        d_head_score: 16,
        dropout: 0.0,
        max_seq_len: 128,
        ..Default::default()
    };
    let config = TrainConfig {
        learning_rate: 1e-2,
        epochs: 150,
        batch_size: 4,
        eval_every_steps: 25,
        max_steps: Some(300),
        dev_fraction: 0.0,
        max_seq_len: 128,
        shuffle_questions: false,
        question_keep_prob: 1.0,
        ..TrainConfig::desk()
    };
    let dir = tempfile::tempdir()?;
    let out = train(&config, &model, &docs, &schemas, &split, dir.path())?;
    let (best, _) = load_checkpoint(&out.checkpoint)?;
    let opts = InferenceOptions { max_seq_len: 128, ..config.inference() };
    let (m, _) = evaluate(&best, &out.vocab, &schemas, &docs, &opts)?;
    Ok((
        docs.len() == 8 && out.total_steps <= 300 && m.f1 == 1.0,
        format!(
            "8 documents, training-set F1 {:.4} at step {} of {} (required 1.0 within 300 steps)",
            m.f1, out.best_step, out.total_steps
        ),
    ))
}

fn few_shot() -> Check {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let data = root.join("data");
    ppn(&["gen", "--out", &s(&data)])?;
    let corpus = s(&data.join("corpus.jsonl"));
    let mut f1 = std::collections::BTreeMap::new();
    for (name, mode, k) in [("zero_shot", "zero_shot", None), ("few_shot_10", "few_shot", Some("10")), ("full", "full", None)] {
        let split_dir = root.join(format!("split_{name}"));
        let mut args = vec!["split", "--corpus", &corpus, "--mode", mode, "--out"];
        let split_out = s(&split_dir);
        args.push(&split_out);
        if let Some(k) = k {
            args.extend(["--k", k]);
        }
        ppn(&args)?;
        let split = s(&split_dir.join("split.json"));
        let run = s(&root.join(format!("run_{name}")));
        ppn(&["train", "--corpus", &corpus, "--split", &split, "--out", &run])?;
        let eval_dir = root.join(format!("eval_{name}"));
        let ckpt = s(&root.join(format!("run_{name}")).join("best.ckpt"));
        ppn(&["eval", "--checkpoint", &ckpt, "--corpus", &corpus, "--split", &split, "--out", &s(&eval_dir)])?;
        let m = read_json(&eval_dir.join("metrics.json"))?;
        f1.insert(name, m["f1"].as_f64().unwrap_or(0.0));
    }
    let (zero, few, full) = (f1["zero_shot"], f1["few_shot_10"], f1["full"]);
    let ordered = full >= few && few >= zero;
    Ok((
        few >= 0.85 && zero > 0.0,
        format!(
            "10x30 corpus: few-shot(10) F1 {few:.4} (required >= 0.85), zero-shot F1 {zero:.4} (required > 0), full F1 {full:.4}; ordering full >= few >= zero {}",
            if ordered { "holds" } else { "does not hold" }
        ),
    ))
}

fn speed() -> Check {
    let (out, _) = ppn(&["bench", "--questions", "16", "--docs", "100"])?;
    let v: Value = serde_json::from_str(&out)?;
    let ratio = v["ratio"].as_f64().unwrap_or(0.0);
    let docs = v["n_documents"].as_u64().unwrap_or(0);
    let q = v["n_questions_total"].as_u64().unwrap_or(0);
    Ok((
        ratio >= 3.0 && docs >= 100 && q == 16 * docs,
        format!(
            "{docs} documents x 16 questions: parallel {:.3}s, sequential {:.3}s, ratio {ratio:.2} (required >= 3; reference {})",
            v["parallel_wall_time"].as_f64().unwrap_or(0.0),
            v["sequential_wall_time"].as_f64().unwrap_or(0.0),
            v["reference_ratio"]
        ),
    ))
}

const SMALL_MODEL: [&str; 8] = ["--d-model", "16", "--n-layers", "1", "--n-heads", "2", "--d-head-score", "8"];

fn small_data(root: &Path) -> anyhow::Result<(String, String)> {
    let data = root.join("data");
    ppn(&["gen", "--out", &s(&data), "--categories", "2", "--docs-per-category", "15", "--seed", "4"])?;
    let corpus = s(&data.join("corpus.jsonl"));
    ppn(&["split", "--corpus", &corpus, "--mode", "full", "--seed", "2", "--out", &s(&root.join("split"))])?;
    Ok((corpus, s(&root.join("split").join("split.json"))))
}

fn ablation_plumbing() -> Check {
    let dir = tempfile::tempdir()?;
    let (corpus, split) = small_data(dir.path())?;
    let out = dir.path().join("ablate");
    let out_s = s(&out);
    let args = ["ablate", "--corpus", &corpus, "--split", &split, "--eval-every", "50", "--max-steps", "300", "--out", &out_s];
    ppn(&args)?;
    let report = read_json(&out.join("ablations.json"))?;
    let rows = report["rows"].as_array().cloned().unwrap_or_default();
    let names: Vec<&str> = rows.iter().filter_map(|r| r["name"].as_str()).collect();
    let expected = ["full", "-sin", "-key", "-QCI", "-QHI", "-QTI"];
    let key_row = rows.iter().find(|r| r["name"] == "-key");
    let key_channels = match key_row.and_then(|r| r["checkpoint"].as_str()) {
        Some(p) => load_checkpoint(p)?.0.config.n_link_types(),
        None => 0,
    };
    let deltas = rows.iter().all(|r| r["delta_f1"].is_f64());
    let summary: Vec<String> = rows
        .iter()
        .map(|r| {
            let f = |k: &str| r[k].as_f64().unwrap_or(f64::NAN);
            format!("{} F1 {:.3} ({:+.3})", r["name"].as_str().unwrap_or("?"), f("f1"), f("delta_f1"))
        })
        .collect();
    Ok((
        names == expected && key_channels == 5 && deltas,
        format!("rows [{}]; -key checkpoint has {key_channels} channels", summary.join(", ")),
    ))
}

fn files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            out.extend(files(&p)?);
        } else {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Runs every command into `root` and returns the decode stdout.
fn run_all(root: &Path, corpus_seed: &str) -> anyhow::Result<String> {
    let data = root.join("data");
    ppn(&["gen", "--out", &s(&data), "--categories", "2", "--docs-per-category", "6", "--seed", corpus_seed])?;
    let corpus = s(&data.join("corpus.jsonl"));
    ppn(&["split", "--corpus", &corpus, "--mode", "few_shot", "--k", "1", "--seed", "2", "--out", &s(&root.join("split"))])?;
    let split = s(&root.join("split").join("split.json"));
    let run = s(&root.join("train"));
    let mut args = vec!["train", "--corpus", &corpus, "--split", &split, "--out", &run, "--eval-every", "3", "--max-steps", "6"];
    args.extend(SMALL_MODEL);
    ppn(&args)?;
    let ckpt = s(&root.join("train").join("best.ckpt"));
    ppn(&["eval", "--checkpoint", &ckpt, "--corpus", &corpus, "--split", &split, "--out", &s(&root.join("eval"))])?;
    let first: Value = serde_json::from_str(
        std::fs::read_to_string(&corpus)?.lines().next().ok_or_else(|| anyhow::anyhow!("empty corpus"))?,
    )?;
    let doc_id = first["id"].as_str().unwrap_or_default().to_string();
    let (decoded, _) = ppn(&["decode", "--checkpoint", &ckpt, "--corpus", &corpus, "--doc-id", &doc_id])?;
    ppn(&["bench", "--questions", "4", "--docs", "20", "--out", &s(&root.join("bench"))])?;
    let mut args = vec!["ablate", "--corpus", &corpus, "--split", &split, "--ablations", "key,qti", "--eval-every", "3", "--max-steps", "6"];
    let ablate = s(&root.join("ablate"));
    args.extend(["--out", &ablate]);
    args.extend(SMALL_MODEL);
    ppn(&args)?;
    Ok(decoded)
}

fn determinism() -> Check {
    let dir = tempfile::tempdir()?;
    let work = dir.path().join("work");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let da = run_all(&work, "9")?;
    std::fs::rename(&work, &a)?;
    let db = run_all(&work, "9")?;
    std::fs::rename(&work, &b)?;
    let rel = |root: &Path| -> anyhow::Result<Vec<PathBuf>> {
        Ok(files(root)?.iter().map(|p| p.strip_prefix(root).map(Path::to_path_buf)).collect::<Result<_, _>>()?)
    };
    let (rel_a, rel_b) = (rel(&a)?, rel(&b)?);
    if rel_a != rel_b {
        return Ok((false, "the two runs wrote different file sets".into()));
    }
    let mut compared = 0;
    let mut differing = Vec::new();
    for r in &rel_a {
        // Wall-clock timings are the one output that cannot repeat.
        if r.ends_with("speed.json") {
            continue;
        }
        compared += 1;
        if std::fs::read(a.join(r))? != std::fs::read(b.join(r))? {
            differing.push(r.display().to_string());
        }
    }
    let ok = differing.is_empty() && da == db && compared > 0;
    Ok((
        ok,
        if ok {
            format!("gen, split, train, eval, decode, bench and ablate: {compared} output files identical across reruns")
        } else {
            format!("differing outputs: {:?}; decode identical: {}", differing, da == db)
        },
    ))
}
