#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stateguard_core::ast::{AstTree, CanonicalAstNode, SrcSpan};
use stateguard_core::deps::{build_graph, tag_dependencies, AttributedGraph, DependencyCategory, LabelSet};
use stateguard_core::embed::NormalizedDataset;
use stateguard_core::pipeline::{dataset_from_bundles, ingest_paths, PipelineConfig};
use stateguard_core::synth::{generate_corpus, write_corpus, SynthConfig};

pub const KINDS: [&str; 8] = ["A", "B", "C", "D", "E", "F", "G", "H"];

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

/// Random tree of `n` nodes: node `i > 0` hangs under a random earlier node.
/// Ids are shuffled so they carry no structural information.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> AstTree {
    let parents: Vec<Option<usize>> = (0..n).map(|i| (i > 0).then(|| rng.gen_range(0..i))).collect();
    let mut ids: Vec<i64> = (1..=n as i64 * 3).collect();
    ids.shuffle(rng);
    ids.truncate(n);

    let mut children = vec![Vec::new(); n];
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(i);
        }
    }
    let mut nodes = Vec::with_capacity(n);
    let mut stack = vec![0usize];
    let mut offset = 0;
    while let Some(i) = stack.pop() {
        let mut node = CanonicalAstNode::new(ids[i], KINDS[rng.gen_range(0..KINDS.len())]);
        node.parent_id = parents[i].map(|p| ids[p]);
        node.child_ids = children[i].iter().map(|&c| ids[c]).collect();
        node.src_span = SrcSpan { offset, length: 1, file_index: 0 };
        offset += 1;
        nodes.push(node);
        stack.extend(children[i].iter().rev());
    }
    AstTree::from_nodes("random.sol", "0.8.0", nodes).expect("unique ids")
}

pub fn random_labels(rng: &mut ChaCha8Rng) -> LabelSet {
    loop {
        let mut chosen = BTreeMap::new();
        for k in KINDS {
            if rng.gen_bool(0.5) {
                chosen.insert(k.to_string(), DependencyCategory::ALL[rng.gen_range(0..5)]);
            }
        }
        if let Ok(l) = LabelSet::new(chosen) {
            return l;
        }
    }
}

pub fn graph_of(tree: AstTree, labels: &LabelSet) -> AttributedGraph {
    build_graph(&tag_dependencies(tree, labels))
}

/// Descendant sets along tree edges.
pub fn reachability(children: &BTreeMap<i64, Vec<i64>>, nodes: impl Iterator<Item = i64>) -> BTreeMap<i64, BTreeSet<i64>> {
    nodes
        .map(|n| {
            let mut seen = BTreeSet::new();
            let mut stack = children.get(&n).cloned().unwrap_or_default();
            while let Some(m) = stack.pop() {
                if seen.insert(m) {
                    stack.extend(children.get(&m).into_iter().flatten());
                }
            }
            (n, seen)
        })
        .collect()
}

pub fn small_config(out: &Path) -> PipelineConfig {
    PipelineConfig {
        output_dir: out.to_path_buf(),
        embedding_dim: 16,
        hidden_dims: vec![16, 16, 16],
        epochs: 15,
        ..PipelineConfig::default()
    }
}

pub fn synth_corpus(dir: &Path, projects: usize, seed: u64) -> Vec<PathBuf> {
    let corpus = generate_corpus(&SynthConfig { projects, seed, ..SynthConfig::default() });
    write_corpus(&corpus, dir).expect("write corpus")
}

pub fn corpus_dataset(dir: &Path, config: &PipelineConfig) -> NormalizedDataset {
    let (bundles, _) = ingest_paths(&[dir.to_path_buf()], config).expect("ingest");
    dataset_from_bundles(&bundles, config).expect("dataset")
}

fn has_node(v: &serde_json::Value) -> bool {
    match v {
        serde_json::Value::Object(o) => o.contains_key("id") || o.values().any(has_node),
        serde_json::Value::Array(a) => a.iter().any(has_node),
        _ => false,
    }
}

fn legacy_children(v: &serde_json::Value, out: &mut Vec<serde_json::Value>) {
    match v {
        serde_json::Value::Object(o) if o.contains_key("id") => out.push(to_legacy(v)),
        serde_json::Value::Object(o) => o.values().for_each(|c| legacy_children(c, out)),
        serde_json::Value::Array(a) => a.iter().for_each(|c| legacy_children(c, out)),
        _ => {}
    }
}

/// Re-encodes a compact (`nodeType`) AST in the legacy `name` /
/// `attributes` / `children` layout.
pub fn to_legacy(v: &serde_json::Value) -> serde_json::Value {
    use serde_json::{json, Map, Value};
    let obj = v.as_object().expect("node object");
    let kind = obj["nodeType"].as_str().expect("compact node");
    let mut attributes = Map::new();
    let mut children = Vec::new();
    for (key, value) in obj {
        match key.as_str() {
            "id" | "nodeType" | "src" => {}
            _ if has_node(value) => legacy_children(value, &mut children),
            "typeDescriptions" => {
                attributes.insert("type".into(), value["typeString"].clone());
            }
            "name" if kind == "Identifier" => {
                attributes.insert("value".into(), value.clone());
            }
            "memberName" => {
                attributes.insert("member_name".into(), value.clone());
            }
            _ => {
                attributes.insert(key.clone(), value.clone());
            }
        }
    }
    json!({ "id": obj["id"], "name": kind, "src": obj["src"], "attributes": Value::Object(attributes), "children": children })
}

use stateguard_core::embed::{EmbeddingMatrix, TokenScheme, Vocabulary, UNK_TOKEN};
use stateguard_core::gcn::{loss, normalized_adjacency, DenseMatrix, GcnConfig, GcnModel, GraphInput};

/// `D^-1/2 (A + I) D^-1/2` via explicit dense products.
pub fn brute_force_adjacency(edges: &[(usize, usize)], n: usize) -> DenseMatrix {
    let mut a = DenseMatrix::identity(n);
    for &(i, j) in edges {
        if i != j {
            a.row_mut(i)[j] = 1.0;
            a.row_mut(j)[i] = 1.0;
        }
    }
    let mut d = DenseMatrix::zeros(n, n);
    for i in 0..n {
        d.row_mut(i)[i] = 1.0 / a.row(i).iter().sum::<f64>().sqrt();
    }
    d.matmul(&a).matmul(&d)
}

pub fn random_edges(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    let count = rng.gen_range(0..=n * n);
    (0..count).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Small random model and single-graph input.
pub fn random_instance(seed: u64) -> (GcnModel, GraphInput, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=6);
    let dim = rng.gen_range(1..=4);
    let hidden: Vec<usize> = (0..3).map(|_| rng.gen_range(1..=4)).collect();
    let vocab_len = rng.gen_range(1..=4);
    let mut tokens: Vec<String> = (0..vocab_len).map(|i| format!("K{i}")).collect();
    tokens.push(UNK_TOKEN.into());
    let vocab = Vocabulary::from_tokens(tokens, TokenScheme::Kind).unwrap();
    let config = GcnConfig { embedding_dim: dim, hidden_dims: hidden, num_classes: 2, seed, train_embedding: rng.gen_bool(0.5) };
    let mut embedding = EmbeddingMatrix::seeded(dim, vocab.len(), seed ^ 0x5eed);
    embedding.m = random_matrix(&mut rng, dim, vocab.len());
    let mut model = GcnModel::new(config, vocab, embedding).unwrap();
    for w in &mut model.weights {
        *w = random_matrix(&mut rng, w.rows(), w.cols());
    }
    let edges = random_edges(&mut rng, n);
    let token_ids = (0..n).map(|_| rng.gen_range(0..=vocab_len)).collect();
    let features = random_matrix(&mut rng, n, dim);
    let input = GraphInput::single(token_ids, features, normalized_adjacency(&edges, n).unwrap());
    (model, input, rng.gen_bool(0.5))
}

fn loss_of(model: &GcnModel, input: &GraphInput, label: bool) -> f64 {
    loss(&model.forward(input).unwrap().probabilities, &[label]).unwrap()
}

/// Largest relative deviation between analytic and central-difference
/// gradients over every trainable entry. Entries where both are below
/// `floor` are compared against `floor`.
pub fn gradient_check(seed: u64, h: f64, floor: f64) -> f64 {
    let (mut model, input, label) = random_instance(seed);
    let (_, grads) = model.loss_and_gradients(&input, &[label]).unwrap();
    let analytic: Vec<DenseMatrix> = grads.as_list().into_iter().cloned().collect();
    let mut worst: f64 = 0.0;
    for (p, g) in analytic.iter().enumerate() {
        for k in 0..g.data().len() {
            let original = model.parameters_mut()[p].data()[k];
            model.parameters_mut()[p].data_mut()[k] = original + h;
            let up = loss_of(&model, &input, label);
            model.parameters_mut()[p].data_mut()[k] = original - h;
            let down = loss_of(&model, &input, label);
            model.parameters_mut()[p].data_mut()[k] = original;
            let numeric = (up - down) / (2.0 * h);
            let a = g.data()[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(floor));
        }
    }
    worst
}
