use hce::cli::EncoderSpec;
use hce::encoder::{read_encoder, write_encoder};
use hce::eval::{generate_synthetic_corpus, Metric, Qrels, RunFile, SyntheticCorpusSpec};
use hce::hierarchy::{read_tree, write_tree};
use hce::index::{read_index, write_index, MipsIndex};
use hce::training::{evaluate_recall, train, TrainConfig, TrainMode};

fn small_task() -> hce::eval::SyntheticDataset {
    generate_synthetic_corpus(&SyntheticCorpusSpec {
        num_topics: 8,
        docs_per_topic: 16,
        tokens_per_doc: 24,
        train_queries_per_topic: 12,
        dev_queries_per_topic: 4,
        vocab_size: 1200,
        seed: 3,
        paraphrase_rate: 0.5,
        disjoint_dev_targets: false,
    })
    .unwrap()
}

#[test]
fn train_persist_index_and_score() {
    let data = small_task();
    let dir = tempfile::tempdir().unwrap();
    let init = EncoderSpec {
        dim: 32,
        hidden: 32,
        bucket_count: 4096,
        hash_seed: 0,
        dropout_rate: 0.1,
    }
    .init(3)
    .unwrap();
    let cfg = TrainConfig {
        mode: TrainMode::Joint,
        alpha: 0.5,
        temperature: 0.1,
        learning_rate: 1.0,
        batch_size: 16,
        epochs: 4,
        branching_factor: Some(4),
        cotrain: true,
        seed: 3,
        ..TrainConfig::default()
    };
    let out = train(init.clone(), &data.corpus, &data.train, &data.dev, &cfg).unwrap();
    assert_eq!(out.tree.depth(), 4);
    assert!(out.encoder.is_finite());
    let before = evaluate_recall(&init, &data.dev, &data.corpus, 10).unwrap();
    let after = evaluate_recall(&out.encoder, &data.dev, &data.corpus, 10).unwrap();
    assert!(after > before, "recall@10 {before} -> {after}");

    let enc_path = dir.path().join("e.hce");
    write_encoder(&out.encoder, &enc_path).unwrap();
    let encoder = read_encoder(&enc_path).unwrap();
    assert_eq!(encoder, out.encoder);

    let tree_path = dir.path().join("t.hct");
    write_tree(&out.tree, &tree_path).unwrap();
    let back = read_tree(&tree_path).unwrap();
    assert_eq!(back.doc_paths(), out.tree.doc_paths());
    assert_eq!(back.leaf_docs(), out.tree.leaf_docs());
    for t in 0..=back.depth() {
        assert_eq!(back.level(t), out.tree.level(t));
    }

    let index = MipsIndex::build(&encoder, &data.corpus).unwrap();
    let idx_path = dir.path().join("i.hci");
    write_index(&index, &idx_path).unwrap();
    let index = read_index(&idx_path).unwrap();

    // the index run scores the same as the library recall
    let mut run = RunFile::new();
    let mut qrels = Qrels::new();
    for p in &data.dev {
        let q = encoder.encode_text(&p.query.text).unwrap();
        let hits = index.search(&q, 10).unwrap().hits;
        run.insert(
            &p.query.query_id,
            hits.into_iter()
                .map(|h| hce::eval::RankedDoc {
                    doc_id: h.doc_id,
                    score: h.score,
                })
                .collect(),
        );
        qrels.insert(&p.query.query_id, &p.positive_doc_id, 1);
    }
    let via_run = Metric::parse("recall@10")
        .unwrap()
        .evaluate(&qrels, &run)
        .unwrap();
    assert!((via_run - after).abs() < 1e-12);
}

#[test]
fn corrupt_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad");
    std::fs::write(&p, b"HCE1 not really").unwrap();
    assert!(read_encoder(&p).is_err());
    assert!(read_tree(&p).is_err());
    assert!(read_index(&p).is_err());
    assert!(read_encoder(&dir.path().join("missing")).is_err());
}
