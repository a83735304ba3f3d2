mod common;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stateguard_core::embed::{
    build_dataset, build_vocabulary, load_dataset, normalize_features, serialize_dataset, EmbeddingMatrix, NormalizedDataset,
    TokenScheme, Vocabulary, UNK_TOKEN,
};
use stateguard_core::gcn::{DenseMatrix, GcnModel};
use stateguard_core::optimize::OptimizedGraph;
use stateguard_core::pipeline::ingest_paths;
use stateguard_core::train::{evaluate, predict_probabilities, split, train, EvalMetrics, SplitSpec, TrainConfig, TrainError};

fn corpus(projects: usize, seed: u64) -> (tempfile::TempDir, Vec<(String, OptimizedGraph)>) {
    let dir = tempfile::tempdir().unwrap();
    common::synth_corpus(dir.path(), projects, seed);
    let config = common::small_config(dir.path());
    let (bundles, _) = ingest_paths(&[dir.path().to_path_buf()], &config).unwrap();
    (dir, bundles.into_iter().map(|b| (b.project_id, b.graph)).collect())
}

fn dataset(graphs: &[(String, OptimizedGraph)], scheme: TokenScheme) -> NormalizedDataset {
    let plain: Vec<_> = graphs.iter().map(|(_, g)| g.clone()).collect();
    let vocab = build_vocabulary(&plain, 1, scheme);
    build_dataset(graphs, &vocab, &EmbeddingMatrix::seeded(8, vocab.len(), 3)).unwrap()
}

#[test]
fn vocabulary_ignores_graph_order() {
    let (_dir, graphs) = corpus(12, 5);
    let mut plain: Vec<_> = graphs.iter().map(|(_, g)| g.clone()).collect();
    let scheme = TokenScheme::KindWithNameBucket { buckets: 16 };
    let a = build_vocabulary(&plain, 2, scheme);
    plain.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(build_vocabulary(&plain, 2, scheme), a);
    assert_eq!(a.tokens().last().map(String::as_str), Some(UNK_TOKEN));
    let idx: Vec<usize> = a.word2idx().values().copied().collect();
    let mut sorted = idx.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..a.len()).collect::<Vec<_>>());
}

#[test]
fn normalized_rows_have_unit_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut data: Vec<f64> = (0..100 * 16).map(|_| rng.gen_range(-5.0..5.0)).collect();
    data[16..32].iter_mut().for_each(|v| *v = 0.0);
    let z = normalize_features(&DenseMatrix::from_vec(100, 16, data)).unwrap();
    for r in 0..100 {
        // summed back to front, unlike the implementation
        let norm = z.row(r).iter().rev().fold(0.0, |acc, v| acc + v * v).sqrt();
        if r == 1 {
            assert_eq!(norm, 0.0);
        } else {
            assert!((norm - 1.0).abs() <= 1e-9);
        }
    }
    let bad = DenseMatrix::from_vec(1, 2, vec![f64::NAN, 1.0]);
    assert!(normalize_features(&bad).is_err());
}

#[test]
fn dataset_shape_and_round_trip() {
    let (dir, graphs) = corpus(10, 8);
    let d = dataset(&graphs, TokenScheme::Kind);
    for (g, (_, graph)) in graphs.iter().enumerate() {
        let (start, end) = d.graph_boundaries[g];
        assert_eq!(end - start, graph.nodes.len());
        let ids: Vec<i64> = graph.nodes.keys().copied().collect();
        assert_eq!(&d.node_ids[start..end], ids.as_slice());
        for (i, j) in d.graph_edges(g) {
            let (a, b) = (ids[i], ids[j]);
            assert!(graph.edges.iter().any(|e| e.e_start == a && e.e_end == b));
        }
    }
    // same token, same feature row
    for i in 0..d.num_nodes() {
        for j in 0..i.min(200) {
            if d.node_labels[i] == d.node_labels[j] {
                assert_eq!(d.features.row(i), d.features.row(j));
            }
        }
    }
    let path = dir.path().join("d.sgds");
    serialize_dataset(&d, &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), d);

    let empty = build_dataset(&[], &Vocabulary::from_tokens(vec![UNK_TOKEN.into()], TokenScheme::Kind).unwrap(), &EmbeddingMatrix::seeded(4, 1, 1)).unwrap();
    serialize_dataset(&empty, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!((back.num_graphs(), back.num_nodes()), (0, 0));
}

#[test]
fn metrics_recount_and_threshold_sweeps() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let n = rng.gen_range(1..40);
        let probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let mut last_recall = f64::INFINITY;
        for t in [0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0] {
            let m = EvalMetrics::from_pairs(probs.iter().map(|&p| p >= t).zip(labels.iter().copied()));
            assert_eq!(m.total(), n);
            assert!(m.recall <= last_recall);
            last_recall = m.recall;
            if t == 0.0 && labels.contains(&true) {
                assert_eq!(m.recall, 1.0);
            }
        }
    }
}

fn small_model(d: &NormalizedDataset, seed: u64) -> GcnModel {
    let config = stateguard_core::gcn::GcnConfig { embedding_dim: 8, hidden_dims: vec![8, 8, 8], num_classes: 2, seed, train_embedding: true };
    GcnModel::new(config, d.vocabulary.clone(), d.embedding.clone()).unwrap()
}

#[test]
fn zero_epochs_returns_initial_model() {
    let (_dir, graphs) = corpus(10, 3);
    let d = dataset(&graphs, TokenScheme::Kind);
    let (a, b) = split(&d, &SplitSpec::default()).unwrap();
    let model = small_model(&d, 1);
    let out = train(model.clone(), &a, &b, &TrainConfig { epochs: 0, ..TrainConfig::default() }).unwrap();
    assert_eq!(out.model, model);
    assert!(out.history.is_empty());
}

#[test]
fn constant_label_corpus_trains() {
    let (_dir, graphs) = corpus(12, 6);
    let mut d = dataset(&graphs, TokenScheme::Kind);
    d.graph_labels.iter_mut().for_each(|l| *l = Some(false));
    assert!(matches!(split(&d, &SplitSpec::default()), Err(TrainError::MissingClass)));
    let (a, b) = split(&d, &SplitSpec { stratified: false, ..SplitSpec::default() }).unwrap();
    let out = train(small_model(&d, 2), &a, &b, &TrainConfig { epochs: 3, ..TrainConfig::default() }).unwrap();
    assert!(!out.history.is_empty());
    for r in &out.history {
        assert!(r.train_loss.is_finite() && r.val_loss.is_finite());
        assert_eq!(r.metrics.recall, 0.0);
        assert!(r.metrics.undefined.contains(&"recall".to_string()));
    }
}

#[test]
fn evaluate_recounts_predictions() {
    let (_dir, graphs) = corpus(16, 12);
    let d = dataset(&graphs, TokenScheme::Kind);
    let model = small_model(&d, 5);
    let probs = predict_probabilities(&model, &d).unwrap();
    for t in [0.0, 0.5, 1.0] {
        let m = evaluate(&model, &d, t).unwrap();
        let pairs: Vec<(bool, bool)> = probs.iter().map(|&p| p >= t).zip(d.graph_labels.iter().map(|l| l.unwrap())).collect();
        assert_eq!(m.tp, pairs.iter().filter(|&&(p, y)| p && y).count());
        assert_eq!(m.fp, pairs.iter().filter(|&&(p, y)| p && !y).count());
        assert_eq!(m.tn, pairs.iter().filter(|&&(p, y)| !p && !y).count());
        assert_eq!(m.fn_, pairs.iter().filter(|&&(p, y)| !p && y).count());
    }
    assert_eq!(evaluate(&model, &d, 0.0).unwrap().recall, 1.0);

    let mut unlabeled = d.clone();
    unlabeled.graph_labels[0] = None;
    assert!(matches!(evaluate(&model, &unlabeled, 0.5), Err(TrainError::UnlabeledDataset)));

    let other = dataset(&graphs, TokenScheme::KindWithNameBucket { buckets: 16 });
    assert!(matches!(evaluate(&model, &other, 0.5), Err(TrainError::VocabularyMismatch)));
}
