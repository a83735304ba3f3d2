mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stateguard_core::ast::{load_ast_file, parse_ast_document, AstTree};
use stateguard_core::deps::{
    build_graph, identify_cross_contract_nodes, tag_dependencies, AttributedGraph, DependencyCategory, EdgeType,
    GraphWarning, InteractionPoint, LabelSet,
};
use stateguard_core::optimize::{merge_subgraphs, optimize_graph, OptimizeError};

fn fixture_graphs(names: &[&str]) -> Vec<AttributedGraph> {
    let labels = LabelSet::default();
    names
        .iter()
        .map(|n| {
            let doc = &load_ast_file(&common::fixture(&format!("two_contracts/{n}"))).unwrap()[0];
            build_graph(&tag_dependencies(parse_ast_document(doc).unwrap(), &labels))
        })
        .collect()
}

fn all_labels() -> LabelSet {
    LabelSet::new(common::KINDS.iter().map(|k| (k.to_string(), DependencyCategory::Expression)).collect()).unwrap()
}

fn tree(seed: u64, n: usize) -> AstTree {
    common::random_tree(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

#[test]
fn vault_calls_into_token() {
    let graphs = fixture_graphs(&["Token.ast.json", "Vault.ast.json"]);
    let scan = identify_cross_contract_nodes(&graphs);
    assert_eq!(scan.points.len(), 1);
    let p = scan.points[0];
    assert_eq!((p.graph_index, p.target_graph), (1, 0));
    assert_eq!(graphs[1].nodes[&p.node_id].n_type, "FunctionCall");
    assert_eq!(graphs[0].definitions[&p.target_node].name, "transfer");
    assert!(scan.warnings.is_empty());

    let labels = LabelSet::default();
    let optimized: Vec<_> = graphs.iter().map(|g| optimize_graph(g, &labels).unwrap()).collect();
    let merged = merge_subgraphs(&optimized, &scan.points).unwrap();
    let node_total: usize = optimized.iter().map(|g| g.nodes.len()).sum();
    let edge_total: usize = optimized.iter().map(|g| g.edges.len()).sum();
    assert_eq!(merged.nodes.len(), node_total);
    assert_eq!(merged.edges.len(), edge_total + 1);
    let crossing: Vec<_> = merged
        .edges
        .iter()
        .filter(|e| merged.provenance[&e.e_start] != merged.provenance[&e.e_end])
        .collect();
    assert_eq!(crossing.len(), 1);
    assert_eq!(crossing[0].e_type, EdgeType::FunctionCall);
    assert!(merged.is_acyclic());
}

#[test]
fn local_calls_are_not_interactions() {
    let graphs = fixture_graphs(&["Vault.ast.json"]);
    let local = graphs[0].edges.iter().filter(|e| e.e_type == EdgeType::FunctionCall).count();
    assert!(local >= 1, "fixture has a local helper call");
    let scan = identify_cross_contract_nodes(&graphs);
    assert!(scan.points.is_empty());
    // the token call has nowhere to go without Token
    assert!(matches!(scan.warnings.as_slice(), [GraphWarning::UnresolvedExternalCall { callee, .. }] if callee.contains("transfer")));
}

#[test]
fn merge_counts() {
    let a = optimize_graph(&common::graph_of(tree(1, 4), &all_labels()), &all_labels()).unwrap();
    let b = optimize_graph(&common::graph_of(tree(2, 6), &all_labels()), &all_labels()).unwrap();
    let point = InteractionPoint {
        graph_index: 0,
        node_id: *a.nodes.keys().next_back().unwrap(),
        target_graph: 1,
        target_node: b.roots[0],
    };
    let merged = merge_subgraphs(&[a.clone(), b.clone()], &[point]).unwrap();
    assert_eq!(merged.nodes.len(), 10);
    assert_eq!(merged.edges.len(), a.edges.len() + b.edges.len() + 1);

    let union = merge_subgraphs(&[a.clone(), b.clone()], &[]).unwrap();
    assert_eq!(union.edges.len(), a.edges.len() + b.edges.len());
    assert_eq!(union.roots.len(), 2);

    let own = InteractionPoint { graph_index: 0, node_id: a.roots[0], target_graph: 0, target_node: a.roots[0] };
    assert_eq!(merge_subgraphs(&[a.clone(), b.clone()], &[own]).unwrap(), union);

    let bad = InteractionPoint { target_graph: 5, ..point };
    assert!(matches!(merge_subgraphs(&[a, b], &[bad]), Err(OptimizeError::UnknownGraph(5))));
}

#[test]
fn all_labeled_is_identity() {
    let g = common::graph_of(tree(3, 40), &all_labels());
    let o = optimize_graph(&g, &all_labels()).unwrap();
    assert_eq!(o.nodes, g.nodes);
    assert_eq!(o.edges, g.edges);
}

#[test]
fn data_edges_need_both_endpoints() {
    let graphs = fixture_graphs(&["Vault.ast.json"]);
    let full = LabelSet::default();
    let without_decls = full.filtered(|k| k != "VariableDeclaration").unwrap();
    let g = &graphs[0];
    let before = g.edges.iter().filter(|e| e.e_type == EdgeType::DataDep).count();
    assert!(before > 0);
    let kept = optimize_graph(g, &full).unwrap();
    assert_eq!(kept.edges.iter().filter(|e| e.e_type == EdgeType::DataDep).count(), before);
    let pruned = optimize_graph(g, &without_decls).unwrap();
    for e in pruned.edges.iter().filter(|e| e.e_type == EdgeType::DataDep) {
        assert!(pruned.nodes.contains_key(&e.e_start) && pruned.nodes.contains_key(&e.e_end));
        assert_ne!(pruned.nodes[&e.e_end].n_type, "VariableDeclaration");
    }
}

#[test]
fn edge_dump_lines() {
    let g = optimize_graph(&common::graph_of(tree(4, 5), &all_labels()), &all_labels()).unwrap();
    let dump = g.edge_list_dump();
    assert_eq!(dump.lines().count(), g.edges.len());
    for line in dump.lines() {
        let parts: Vec<_> = line.split(' ').collect();
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[2], "ast_child");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn optimizer_properties(seed in any::<u64>(), n in 1usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = common::random_tree(&mut rng, n);
        let labels = common::random_labels(&mut rng);
        let g = common::graph_of(t, &labels);
        let o = match optimize_graph(&g, &labels) {
            Ok(o) => o,
            Err(OptimizeError::EmptyResult(_)) => {
                prop_assert!(g.nodes.values().all(|n| !labels.contains(&n.n_type)));
                return Ok(());
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(o.nodes.len() <= g.nodes.len());
        prop_assert!(o.edges.len() <= g.edges.len());
        prop_assert!(o.is_acyclic());
        for (id, node) in &o.nodes {
            prop_assert!(*id == g.root || labels.contains(&node.n_type));
        }
        let again = optimize_graph(&o.to_attributed().unwrap(), &labels).unwrap();
        prop_assert_eq!(&again.nodes, &o.nodes);
        prop_assert_eq!(&again.edges, &o.edges);

        let original = common::reachability(&g.ast_children(), g.nodes.keys().copied());
        let optimized = common::reachability(&o.adjacency(), o.nodes.keys().copied());
        let restricted: BTreeMap<_, _> = original
            .into_iter()
            .filter(|(k, _)| o.nodes.contains_key(k))
            .map(|(k, set)| (k, set.into_iter().filter(|m| o.nodes.contains_key(m)).collect()))
            .collect();
        prop_assert_eq!(restricted, optimized);
    }
}
