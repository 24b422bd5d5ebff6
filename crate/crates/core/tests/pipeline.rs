use ppn::corpus::{
    generate_corpus, load_corpus, load_schemas, load_split, make_splits, save_corpus, save_schemas, save_split,
    GeneratorConfig, SchemaSet, SplitMode,
};
use ppn::eval::{evaluate, score_predictions};
use ppn::linking::{build_link_matrix, decode, gold_prediction, DecodeOptions, Prediction, FULL_CHANNELS};
use ppn::model::ModelConfig;
use ppn::serialize::{samples_for_document, Vocab};
use ppn::train::{train, TrainConfig};
use proptest::prelude::*;

#[test]
fn files_round_trip_and_a_trained_model_evaluates() {
    let corpus = generate_corpus(&GeneratorConfig {
        categories: 3,
        docs_per_category: 4,
        seed: 12,
        ..Default::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_corpus(&corpus.documents, dir.path().join("c.jsonl")).unwrap();
    save_schemas(&corpus.schemas, dir.path().join("s.json")).unwrap();
    let docs = load_corpus(dir.path().join("c.jsonl")).unwrap();
    let schemas = SchemaSet::new(load_schemas(dir.path().join("s.json")).unwrap());
    assert_eq!(docs, corpus.documents);

    let split = make_splits(&docs, SplitMode::ZeroShot, None, 3).unwrap();
    save_split(&split, dir.path().join("split.json")).unwrap();
    assert_eq!(load_split(dir.path().join("split.json")).unwrap(), split);

    let model = ModelConfig {
        d_model: 16,
        n_layers: 1,
        n_heads: 2,
        d_head_score: 8,
        max_seq_len: 128,
        ..Default::default()
    };
    let config = TrainConfig {
        max_steps: Some(4),
        eval_every_steps: 2,
        max_seq_len: 128,
        ..TrainConfig::desk()
    };
    let out = train(&config, &model, &docs, &schemas, &split, dir.path().join("run")).unwrap();
    let test: Vec<_> = docs.iter().filter(|d| split.test_ids.contains(&d.id)).cloned().collect();
    let opts = ppn::eval::InferenceOptions {
        max_seq_len: 128,
        ..config.inference()
    };
    let (metrics, preds) = evaluate(&out.model, &out.vocab, &schemas, &test, &opts).unwrap();
    assert_eq!(preds.len(), test.len());
    assert!((0.0..=1.0).contains(&metrics.f1));
    assert_eq!(metrics, score_predictions(&test, &preds));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn any_generated_corpus_round_trips_through_decode(seed in 0u64..10_000, multi in 0.0f64..0.6, no_key in 0.0f64..0.9) {
        let corpus = generate_corpus(&GeneratorConfig {
            categories: 2,
            docs_per_category: 3,
            multi_span_prob: multi,
            no_key_ratio: no_key,
            seed,
            ..Default::default()
        })
        .unwrap();
        let schemas = SchemaSet::new(corpus.schemas.clone());
        let labels: Vec<String> = corpus.schemas.iter().flat_map(|s| s.value_types.clone()).collect();
        let vocab = Vocab::build(&corpus.documents, &labels);
        for d in &corpus.documents {
            let mut pred = Prediction::empty(&d.id);
            for s in samples_for_document(d, &schemas, &vocab, 128, 512).unwrap() {
                pred.merge(decode(&build_link_matrix(&s, d, FULL_CHANNELS).unwrap(), &s, DecodeOptions::default()));
            }
            let asked: Vec<&str> = pred.answers.keys().map(String::as_str).collect();
            prop_assert_eq!(&pred, &gold_prediction(d, asked));
        }
    }
}
