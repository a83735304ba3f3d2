mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stateguard_core::embed::{EmbeddingMatrix, TokenScheme, Vocabulary, UNK_TOKEN};
use stateguard_core::gcn::{
    decode_checkpoint, encode_checkpoint, loss, normalized_adjacency, optimizer_step, softmax_rows, AdamConfig,
    DenseMatrix, GcnConfig, GcnModel, GraphInput, TrainState,
};

#[test]
fn adjacency_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let n = rng.gen_range(1..=8);
        let edges = common::random_edges(&mut rng, n);
        let s = normalized_adjacency(&edges, n).unwrap();
        assert!(s.max_abs_diff(&common::brute_force_adjacency(&edges, n)) <= 1e-12);
        assert_eq!(s, s.transpose());
        // D^-1/2 Â D^-1/2 · D^1/2 · 1 = D^-1/2 · Â · 1 = D^1/2 · 1
        let mut degree = vec![1.0; n];
        for (i, d) in degree.iter_mut().enumerate() {
            let mut nbrs: Vec<usize> = edges.iter().filter_map(|&(a, b)| (a == i && b != i).then_some(b).or((b == i && a != i).then_some(a))).collect();
            nbrs.sort_unstable();
            nbrs.dedup();
            *d += nbrs.len() as f64;
        }
        let sqrt_d = DenseMatrix::from_vec(n, 1, degree.iter().map(|d| d.sqrt()).collect());
        let lhs = s.matmul(&sqrt_d);
        for i in 0..n {
            assert!((lhs[(i, 0)] - degree[i].sqrt()).abs() < 1e-12);
        }
    }
}

fn unit_model(dim: usize, hidden: Vec<usize>) -> GcnModel {
    let vocab = Vocabulary::from_tokens(vec![UNK_TOKEN.into()], TokenScheme::Kind).unwrap();
    let config = GcnConfig { embedding_dim: dim, hidden_dims: hidden, num_classes: 2, seed: 1, train_embedding: false };
    GcnModel::new(config, vocab, EmbeddingMatrix::seeded(dim, 1, 1)).unwrap()
}

#[test]
fn two_node_hand_computation() {
    // Â = all 0.5; unit features and all-ones 1x1 weights give
    // H1 = H2 = H3 = [1, 1], pooled 1, logits (1, 1)
    let mut model = unit_model(1, vec![1, 1, 1]);
    for w in &mut model.weights[..3] {
        *w = DenseMatrix::filled(1, 1, 1.0);
    }
    model.weights[3] = DenseMatrix::from_rows(&[vec![1.0, 1.0]]);
    let input = GraphInput::single(vec![0, 0], DenseMatrix::filled(2, 1, 1.0), normalized_adjacency(&[(0, 1)], 2).unwrap());
    let pass = model.forward(&input).unwrap();
    for h in &pass.hidden {
        assert_eq!(h, &DenseMatrix::filled(2, 1, 1.0));
    }
    assert_eq!(pass.logits, DenseMatrix::from_rows(&[vec![1.0, 1.0]]));
    assert_eq!(pass.probabilities, DenseMatrix::from_rows(&[vec![0.5, 0.5]]));

    // readout (0, 2) instead: p1 = e^2 / (1 + e^2)
    model.weights[3] = DenseMatrix::from_rows(&[vec![0.0, 2.0]]);
    let p = model.forward(&input).unwrap().probabilities[(0, 1)];
    assert!((p - 2f64.exp() / (1.0 + 2f64.exp())).abs() < 1e-15);
}

#[test]
fn single_node_zero_feature() {
    let mut model = unit_model(2, vec![2, 2, 2]);
    for w in &mut model.weights[..3] {
        *w = DenseMatrix::identity(2);
    }
    let input = GraphInput::single(vec![0], DenseMatrix::zeros(1, 2), normalized_adjacency(&[], 1).unwrap());
    let pass = model.forward(&input).unwrap();
    assert!(pass.hidden.iter().all(|h| h.data().iter().all(|&v| v == 0.0)));
    assert_eq!(pass.probabilities, DenseMatrix::from_rows(&[vec![0.5, 0.5]]));
}

#[test]
fn loss_matches_per_sample_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let ps: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ys: Vec<bool> = (0..4).map(|_| rng.gen_bool(0.5)).collect();
        let m = DenseMatrix::from_vec(4, 2, ps.iter().flat_map(|&p| [1.0 - p, p]).collect());
        let mut expected = 0.0;
        for (p, y) in ps.iter().zip(&ys) {
            let p = p.clamp(1e-12, 1.0 - 1e-12);
            expected -= if *y { p.ln() } else { (1.0 - p).ln() };
        }
        let got = loss(&m, &ys).unwrap();
        assert!((got - expected / 4.0).abs() < 1e-12);
        assert!(got >= 0.0);
    }
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..25 {
        let err = common::gradient_check(seed, 1e-5, 1e-6);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn adam_constant_gradient_converges_to_base_rate() {
    let config = AdamConfig { warmup_steps: 0, ..AdamConfig::default() };
    let mut p = DenseMatrix::zeros(1, 1);
    let g = DenseMatrix::filled(1, 1, 0.3);
    let mut state = TrainState::new(config, [&p]);
    let mut previous = 0.0;
    for step in 1..=200 {
        optimizer_step(&mut state, &mut [&mut p], &[&g]).unwrap();
        let delta = previous - p[(0, 0)];
        previous = p[(0, 0)];
        // m_hat / sqrt(v_hat) = g / |g| exactly for a constant gradient
        let expected = config.base_lr * 0.3 / (0.3 + config.epsilon);
        assert!((delta - expected).abs() < 1e-12, "step {step}: {delta}");
    }
}

#[test]
fn training_steps_are_deterministic() {
    let run = || {
        let (mut model, input, label) = common::random_instance(42);
        let mut state = TrainState::new(AdamConfig::default(), model.parameters_mut().into_iter().map(|p| &*p));
        for _ in 0..20 {
            let (_, grads) = model.loss_and_gradients(&input, &[label]).unwrap();
            let list = grads.as_list();
            optimizer_step(&mut state, &mut model.parameters_mut(), &list).unwrap();
        }
        encode_checkpoint(&model)
    };
    let a = run();
    assert_eq!(a, run());
    decode_checkpoint(&a).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(values in prop::collection::vec(-700.0f64..700.0, 2..=12)) {
        let rows = values.len() / 2;
        let m = DenseMatrix::from_vec(rows, 2, values[..rows * 2].to_vec());
        let s = softmax_rows(&m);
        for r in 0..rows {
            prop_assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn logits_are_permutation_invariant(seed in any::<u64>()) {
        let (model, input, _) = common::random_instance(seed);
        let n = input.num_nodes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let mut adj = DenseMatrix::zeros(n, n);
        let mut features = DenseMatrix::zeros(n, input.features.cols());
        let mut tokens = vec![0; n];
        for i in 0..n {
            for j in 0..n {
                adj.row_mut(perm[i])[perm[j]] = input.norm_adj[(i, j)];
            }
            features.row_mut(perm[i]).copy_from_slice(input.features.row(i));
            tokens[perm[i]] = input.token_ids[i];
        }
        let permuted = GraphInput::single(tokens, features, adj);
        let a = model.forward(&input).unwrap().logits;
        let b = model.forward(&permuted).unwrap().logits;
        prop_assert!(a.max_abs_diff(&b) < 1e-9);
    }
}
