//! Label-driven graph pruning and per-project subgraph merging.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deps::{
    successor_map, AttributedGraph, CallSite, EdgeAttr, EdgeType, FunctionSignature, GraphWarning,
    InteractionPoint, LabelSet, NodeAttr,
};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("no node of {0} has a kind in the label set")]
    EmptyResult(String),
    #[error("node id {0} collides after offsetting")]
    IdCollision(i64),
    #[error("interaction refers to unknown graph {0}")]
    UnknownGraph(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentInfo {
    pub path: String,
    pub source_len: u64,
}

/// Graph restricted to labeled nodes (`V'`), possibly spanning several
/// source units after merging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedGraph {
    /// One root per merged document.
    pub roots: Vec<i64>,
    pub nodes: BTreeMap<i64, NodeAttr>,
    pub edges: Vec<EdgeAttr>,
    /// Node id to the path of the document it came from.
    pub provenance: BTreeMap<i64, String>,
    pub documents: Vec<DocumentInfo>,
    pub definitions: BTreeMap<i64, FunctionSignature>,
    pub calls: BTreeMap<i64, CallSite>,
    pub graph_label: Option<bool>,
    pub warnings: Vec<GraphWarning>,
}

impl OptimizedGraph {
    pub fn adjacency(&self) -> BTreeMap<i64, Vec<i64>> {
        successor_map(self.nodes.keys(), &self.edges)
    }

    /// View of a single-document graph as an attributed graph, so it can be
    /// optimized again. `None` for merged multi-document graphs.
    pub fn to_attributed(&self) -> Option<AttributedGraph> {
        let ([root], [doc]) = (self.roots.as_slice(), self.documents.as_slice()) else {
            return None;
        };
        Some(AttributedGraph {
            source_path: doc.path.clone(),
            source_len: doc.source_len,
            root: *root,
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
            adjacency: self.adjacency(),
            graph_label: self.graph_label,
            definitions: self.definitions.clone(),
            calls: self.calls.clone(),
            warnings: self.warnings.clone(),
        })
    }

    pub fn is_acyclic(&self) -> bool {
        crate::deps::topological_order(self.nodes.keys().copied(), &self.edges).is_some()
    }

    /// Plain `start end type` edge list, one edge per line.
    pub fn edge_list_dump(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {}", e.e_start, e.e_end, e.e_type);
        }
        out
    }
}

/// Removes every node whose kind is outside `labels`, keeping the root.
///
/// A single depth-first pass in source order: a removed node's children are
/// re-attached to the nearest retained ancestor with a fresh `AstChild` edge,
/// removed leaves simply disappear. Non-tree edges survive only when both
/// endpoints are retained.
pub fn optimize_graph(g: &AttributedGraph, labels: &LabelSet) -> Result<OptimizedGraph, OptimizeError> {
    if !g.nodes.values().any(|n| labels.contains(&n.n_type)) {
        return Err(OptimizeError::EmptyResult(g.source_path.clone()));
    }
    let keep = |id: i64| id == g.root || g.nodes.get(&id).is_some_and(|n| labels.contains(&n.n_type));
    let children = g.ast_children();

    let mut nodes = BTreeMap::new();
    let mut edges = Vec::new();
    let mut visited = HashSet::new();
    let mut stack: Vec<(i64, Option<i64>)> = vec![(g.root, None)];
    while let Some((id, anchor)) = stack.pop() {
        if !visited.insert(id) {
            continue;
        }
        let next_anchor = if keep(id) {
            let mut attr = g.nodes[&id].clone();
            attr.category = labels.category(&attr.n_type);
            nodes.insert(id, attr);
            if let Some(parent) = anchor {
                edges.push(EdgeAttr::new(parent, id, EdgeType::AstChild));
            }
            Some(id)
        } else {
            anchor
        };
        if let Some(kids) = children.get(&id) {
            stack.extend(kids.iter().rev().map(|&k| (k, next_anchor)));
        }
    }

    edges.extend(
        g.edges
            .iter()
            .filter(|e| e.e_type != EdgeType::AstChild)
            .filter(|e| nodes.contains_key(&e.e_start) && nodes.contains_key(&e.e_end))
            .copied(),
    );

    let provenance = nodes.keys().map(|&id| (id, g.source_path.clone())).collect();
    Ok(OptimizedGraph {
        roots: vec![g.root],
        definitions: g.definitions.iter().filter(|(id, _)| nodes.contains_key(id)).map(|(k, v)| (*k, v.clone())).collect(),
        calls: g.calls.iter().filter(|(id, _)| nodes.contains_key(id)).map(|(k, v)| (*k, v.clone())).collect(),
        nodes,
        edges,
        provenance,
        documents: vec![DocumentInfo { path: g.source_path.clone(), source_len: g.source_len }],
        graph_label: g.graph_label,
        warnings: g.warnings.clone(),
    })
}

/// Disjoint union of per-document graphs plus one `FunctionCall` edge per
/// interaction point.
///
/// Node ids of graph `k` are shifted so they start right after the largest
/// id of graph `k - 1`. Interaction endpoints use the original per-graph ids.
pub fn merge_subgraphs(
    graphs: &[OptimizedGraph],
    interactions: &[InteractionPoint],
) -> Result<OptimizedGraph, OptimizeError> {
    let mut merged = OptimizedGraph {
        roots: Vec::new(),
        nodes: BTreeMap::new(),
        edges: Vec::new(),
        provenance: BTreeMap::new(),
        documents: Vec::new(),
        definitions: BTreeMap::new(),
        calls: BTreeMap::new(),
        graph_label: None,
        warnings: Vec::new(),
    };

    let mut shifts = Vec::with_capacity(graphs.len());
    let mut base = 0i64;
    for g in graphs {
        let min = g.nodes.keys().next().copied().unwrap_or(0);
        let max = g.nodes.keys().next_back().copied().unwrap_or(-1);
        let shift = base - min;
        shifts.push(shift);
        base += (max - min + 1).max(0);

        for (&id, attr) in &g.nodes {
            let new_id = id + shift;
            let mut attr = attr.clone();
            attr.n_id = new_id;
            if merged.nodes.insert(new_id, attr).is_some() {
                return Err(OptimizeError::IdCollision(new_id));
            }
        }
        merged.roots.extend(g.roots.iter().map(|r| r + shift));
        merged.edges.extend(
            g.edges.iter().map(|e| EdgeAttr::new(e.e_start + shift, e.e_end + shift, e.e_type)),
        );
        merged.provenance.extend(g.provenance.iter().map(|(id, p)| (id + shift, p.clone())));
        merged.definitions.extend(g.definitions.iter().map(|(id, s)| (id + shift, s.clone())));
        merged.calls.extend(g.calls.iter().map(|(id, s)| (id + shift, s.clone())));
        merged.documents.extend(g.documents.iter().cloned());
        merged.warnings.extend(g.warnings.iter().cloned());
        merged.graph_label = merged.graph_label.or(g.graph_label);
    }

    let mut added = HashSet::new();
    for point in interactions {
        let caller_shift = *shifts.get(point.graph_index).ok_or(OptimizeError::UnknownGraph(point.graph_index))?;
        let callee_shift = *shifts.get(point.target_graph).ok_or(OptimizeError::UnknownGraph(point.target_graph))?;
        let caller_kept = graphs[point.graph_index].nodes.contains_key(&point.node_id);
        let callee_kept = graphs[point.target_graph].nodes.contains_key(&point.target_node);
        if point.graph_index == point.target_graph {
            continue;
        }
        if !(caller_kept && callee_kept) {
            merged.warnings.push(GraphWarning::PrunedInteraction { caller: point.node_id, callee: point.target_node });
            continue;
        }
        let edge = EdgeAttr::new(point.node_id + caller_shift, point.target_node + callee_shift, EdgeType::FunctionCall);
        if added.insert(edge) {
            merged.edges.push(edge);
        }
    }
    Ok(merged)
}
