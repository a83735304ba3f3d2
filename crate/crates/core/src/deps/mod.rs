//! Dependency feature extraction: categorize AST nodes and build the
//! attributed dependency graph of one source unit.

mod cross;
mod labels;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{AstTree, CallTarget, SrcSpan};

pub use cross::{identify_cross_contract_nodes, CrossContractScan, InteractionPoint};
pub use labels::{DependencyCategory, LabelSet};

#[derive(Debug, Error)]
pub enum DepsError {
    #[error("label set is empty")]
    EmptyLabelSet,
    #[error("label table line {line}: {reason}")]
    LabelTable { line: usize, reason: String },
}

/// Node attribute tuple `(N_id, N_n, N_t, N_v)` plus its category and
/// source location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeAttr {
    pub n_id: i64,
    pub n_name: Option<String>,
    pub n_type: String,
    pub n_value: Option<String>,
    pub category: Option<DependencyCategory>,
    pub span: SrcSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    AstChild,
    ControlDep,
    DataDep,
    FunctionCall,
}

impl EdgeType {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeType::AstChild => "ast_child",
            EdgeType::ControlDep => "control_dep",
            EdgeType::DataDep => "data_dep",
            EdgeType::FunctionCall => "function_call",
        }
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Edge attribute tuple `(E_s, E_e, E_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeAttr {
    pub e_start: i64,
    pub e_end: i64,
    pub e_type: EdgeType,
}

impl EdgeAttr {
    pub fn new(e_start: i64, e_end: i64, e_type: EdgeType) -> Self {
        EdgeAttr { e_start, e_end, e_type }
    }
}

/// Signature of a function definition, qualified by its enclosing contract.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FunctionSignature {
    pub contract: Option<String>,
    pub name: String,
    pub arity: usize,
}

impl FunctionSignature {
    pub fn qualified_name(&self) -> String {
        match &self.contract {
            Some(c) => format!("{c}.{}", self.name),
            None => self.name.clone(),
        }
    }
}

/// A call node's target together with the contract the call occurs in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallSite {
    pub caller_contract: Option<String>,
    pub target: CallTarget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphWarning {
    /// A reference names a declaration id absent from the document.
    DanglingReference { from: i64, target: i64 },
    /// A reference resolves to a node that is not a categorized declaration.
    NonDeclarationTarget { from: i64, target: i64 },
    /// A qualified call matched no definition anywhere in the project.
    UnresolvedExternalCall { document: String, node: i64, callee: String },
    /// A cross-contract interaction endpoint did not survive optimization.
    PrunedInteraction { caller: i64, callee: i64 },
}

impl fmt::Display for GraphWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphWarning::DanglingReference { from, target } => {
                write!(f, "node {from} references missing declaration {target}")
            }
            GraphWarning::NonDeclarationTarget { from, target } => {
                write!(f, "node {from} references non-declaration node {target}")
            }
            GraphWarning::UnresolvedExternalCall { document, node, callee } => {
                write!(f, "{document}: call node {node} to {callee} has no matching definition")
            }
            GraphWarning::PrunedInteraction { caller, callee } => {
                write!(f, "interaction {caller} -> {callee} dropped by optimization")
            }
        }
    }
}

/// Per-node categories for a canonical tree, parallel to `tree.nodes()`.
#[derive(Debug, Clone)]
pub struct TaggedTree {
    pub tree: AstTree,
    pub categories: Vec<Option<DependencyCategory>>,
}

impl TaggedTree {
    pub fn category(&self, id: i64) -> Option<DependencyCategory> {
        self.tree.position(id).and_then(|p| self.categories[p])
    }
}

/// Assigns each node the category of its kind in `labels`.
pub fn tag_dependencies(tree: AstTree, labels: &LabelSet) -> TaggedTree {
    let categories = tree.nodes().iter().map(|n| labels.category(&n.kind)).collect();
    TaggedTree { tree, categories }
}

/// Directed dependency graph of one source unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributedGraph {
    pub source_path: String,
    /// Length of the source unit in bytes, as far as the AST reveals it.
    pub source_len: u64,
    pub root: i64,
    pub nodes: BTreeMap<i64, NodeAttr>,
    pub edges: Vec<EdgeAttr>,
    /// Successor lists `N_i`, the projection of `edges`.
    pub adjacency: BTreeMap<i64, Vec<i64>>,
    pub graph_label: Option<bool>,
    pub definitions: BTreeMap<i64, FunctionSignature>,
    pub calls: BTreeMap<i64, CallSite>,
    pub warnings: Vec<GraphWarning>,
}

/// Successor projection of an edge list; every node gets an entry.
pub fn successor_map<'a>(
    node_ids: impl IntoIterator<Item = &'a i64>,
    edges: &[EdgeAttr],
) -> BTreeMap<i64, Vec<i64>> {
    let mut adjacency: BTreeMap<i64, Vec<i64>> = node_ids.into_iter().map(|&id| (id, Vec::new())).collect();
    for edge in edges {
        adjacency.entry(edge.e_start).or_default().push(edge.e_end);
    }
    adjacency
}

impl AttributedGraph {
    /// Children along `AstChild` edges, in edge order.
    pub fn ast_children(&self) -> BTreeMap<i64, Vec<i64>> {
        let mut children: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
        for edge in self.edges.iter().filter(|e| e.e_type == EdgeType::AstChild) {
            children.entry(edge.e_start).or_default().push(edge.e_end);
        }
        children
    }

    pub fn rebuild_adjacency(&mut self) {
        self.adjacency = successor_map(self.nodes.keys(), &self.edges);
    }

    /// Kahn topological sort over `AstChild` edges; `None` on a cycle.
    pub fn ast_topological_order(&self) -> Option<Vec<i64>> {
        topological_order(self.nodes.keys().copied(), &self.edges)
    }
}

pub(crate) fn topological_order(nodes: impl Iterator<Item = i64>, edges: &[EdgeAttr]) -> Option<Vec<i64>> {
    let mut indegree: BTreeMap<i64, usize> = nodes.map(|n| (n, 0)).collect();
    let mut succ: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
    for e in edges.iter().filter(|e| e.e_type == EdgeType::AstChild) {
        *indegree.entry(e.e_end).or_default() += 1;
        indegree.entry(e.e_start).or_default();
        succ.entry(e.e_start).or_default().push(e.e_end);
    }
    let mut ready: Vec<i64> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    let mut order = Vec::with_capacity(indegree.len());
    while let Some(n) = ready.pop() {
        order.push(n);
        for &m in succ.get(&n).into_iter().flatten() {
            let d = indegree.get_mut(&m).expect("endpoint registered");
            *d -= 1;
            if *d == 0 {
                ready.push(m);
            }
        }
    }
    (order.len() == indegree.len()).then_some(order)
}

/// Builds the attributed graph of a tagged tree.
///
/// Edges, in order: one `AstChild` edge per parent/child pair (in document
/// order of the child), then per node in document order its `DataDep` edge
/// (identifier use to referenced declaration) and `FunctionCall` edge (call
/// to the uniquely matching definition in this document).
pub fn build_graph(tagged: &TaggedTree) -> AttributedGraph {
    let tree = &tagged.tree;
    let mut nodes = BTreeMap::new();
    let mut edges = Vec::new();
    let mut warnings = Vec::new();
    let mut definitions = BTreeMap::new();
    let mut calls = BTreeMap::new();

    for (node, category) in tree.nodes().iter().zip(&tagged.categories) {
        nodes.insert(
            node.id,
            NodeAttr {
                n_id: node.id,
                n_name: node.name.clone(),
                n_type: node.kind.clone(),
                n_value: node.value.clone(),
                category: *category,
                span: node.src_span,
            },
        );
        if let Some(parent) = node.parent_id {
            edges.push(EdgeAttr::new(parent, node.id, EdgeType::AstChild));
        }
        let contract = enclosing_contract(tree, node);
        if node.kind == "FunctionDefinition" {
            if let Some(name) = node.name.as_deref().filter(|n| !n.is_empty()) {
                definitions.insert(
                    node.id,
                    FunctionSignature { contract: contract.clone(), name: name.to_owned(), arity: node.arity.unwrap_or(0) },
                );
            }
        }
        if let (Some(target), Some(DependencyCategory::Function)) = (&node.call, category) {
            calls.insert(node.id, CallSite { caller_contract: contract, target: target.clone() });
        }
    }

    for (node, category) in tree.nodes().iter().zip(&tagged.categories) {
        if *category == Some(DependencyCategory::Data) {
            if let Some(target) = node.referenced_declaration.filter(|&t| t >= 0) {
                match tree.position(target) {
                    None => warnings.push(GraphWarning::DanglingReference { from: node.id, target }),
                    Some(pos) if tagged.categories[pos] == Some(DependencyCategory::Declaration) => {
                        edges.push(EdgeAttr::new(node.id, target, EdgeType::DataDep));
                    }
                    Some(_) => warnings.push(GraphWarning::NonDeclarationTarget { from: node.id, target }),
                }
            }
        }
        if let Some(site) = calls.get(&node.id) {
            if let Some(def) = resolve_local_call(site, &definitions) {
                if tagged.category(def) == Some(DependencyCategory::Declaration) {
                    edges.push(EdgeAttr::new(node.id, def, EdgeType::FunctionCall));
                }
            }
        }
    }

    let root = tree.root();
    let source_len = tree.nodes().iter().map(|n| n.src_span.end()).max().unwrap_or(0);
    let adjacency = successor_map(nodes.keys(), &edges);
    AttributedGraph {
        source_path: tree.source_unit_path.clone(),
        source_len,
        root: root.id,
        nodes,
        edges,
        adjacency,
        graph_label: None,
        definitions,
        calls,
        warnings,
    }
}

fn enclosing_contract(tree: &AstTree, node: &crate::ast::CanonicalAstNode) -> Option<String> {
    tree.ancestors(node).find(|a| a.kind == "ContractDefinition").and_then(|c| c.name.clone())
}

/// Exact name + arity resolution. A qualified call must match the
/// qualifying contract; an unqualified call prefers the caller's own
/// contract. Ambiguity resolves to nothing.
pub(crate) fn resolve_local_call(site: &CallSite, definitions: &BTreeMap<i64, FunctionSignature>) -> Option<i64> {
    let target = &site.target;
    let candidates: Vec<(i64, &FunctionSignature)> = definitions
        .iter()
        .filter(|(_, sig)| sig.name == target.name && sig.arity == target.arity)
        .map(|(&id, sig)| (id, sig))
        .collect();
    let narrowed: Vec<i64> = match &target.qualifier {
        Some(q) => candidates.iter().filter(|(_, s)| s.contract.as_ref() == Some(q)).map(|(id, _)| *id).collect(),
        None => {
            let own: Vec<i64> = candidates
                .iter()
                .filter(|(_, s)| site.caller_contract.is_some() && s.contract == site.caller_contract)
                .map(|(id, _)| *id)
                .collect();
            if own.is_empty() {
                candidates.iter().map(|(id, _)| *id).collect()
            } else {
                own
            }
        }
    };
    match narrowed.as_slice() {
        [single] => Some(*single),
        _ => None,
    }
}
