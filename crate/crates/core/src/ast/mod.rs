//! Compiler AST ingestion.
//!
//! Solidity compilers emit two broad AST encodings. Older (`--ast-json`,
//! "legacy") documents store the syntax-element kind in `name` and keep the
//! payload under `attributes` and `children`; newer compact documents store
//! the kind in `nodeType` with named child fields. Both carry a unique integer
//! `id` on every syntax node, and children always live in arrays or objects
//! nested below their parent. Parsing works from those two facts only, so the
//! same code reads every compiler version.

mod compiler;
mod hierarchy;
mod input;
mod parse;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compiler::{invoke_external_compiler, CompilerConfig};
pub use hierarchy::{infer_hierarchy, LeveledNode};
pub use input::{load_ast_file, parse_ast_text};
pub use parse::parse_ast_document;

/// Kind assigned to nodes that carry neither `nodeType` nor a legacy `name`.
pub const UNKNOWN_KIND: &str = "Unknown";

#[derive(Debug, Error)]
pub enum AstError {
    #[error("malformed AST: {0}")]
    MalformedAst(String),
    #[error("unsupported AST format: {without_kind} of {total} nodes carry no kind field")]
    UnsupportedFormat { without_kind: usize, total: usize },
    #[error("node {id} at level {level} has no candidate parent")]
    OrphanNode { id: i64, level: usize },
    #[error("no compiler configured or found for version {version}: {detail}")]
    CompilerNotFound { version: String, detail: String },
    #[error("compilation of {path} failed: {stderr}")]
    CompilationFailed { path: String, stderr: String },
    #[error("invalid compiler configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// An AST document as emitted by the compiler, before canonicalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAstDocument {
    pub source_unit_path: String,
    pub compiler_version: String,
    pub root: serde_json::Value,
}

/// Compiler source location `offset:length:file`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SrcSpan {
    pub offset: u64,
    pub length: u64,
    pub file_index: i64,
}

impl SrcSpan {
    /// Parses the compiler's `src` string. Anything unparseable yields the
    /// zero span.
    pub fn parse(src: &str) -> Self {
        let mut parts = src.split(':');
        let mut next = || parts.next().and_then(|p| p.trim().parse::<i64>().ok());
        match (next(), next(), next()) {
            (Some(offset), Some(length), Some(file_index)) if offset >= 0 && length >= 0 => {
                SrcSpan { offset: offset as u64, length: length as u64, file_index }
            }
            _ => SrcSpan::default(),
        }
    }

    pub fn end(&self) -> u64 {
        self.offset + self.length
    }
}

impl fmt::Display for SrcSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.offset, self.length, self.file_index)
    }
}

/// Callee description recorded on call nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallTarget {
    /// Contract the callee is reached through (`B` in `b.f()` where `b` has
    /// type `contract B`), when the AST exposes it.
    pub qualifier: Option<String>,
    pub name: String,
    pub arity: usize,
}

/// Version-independent AST node.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalAstNode {
    pub id: i64,
    pub kind: String,
    pub name: Option<String>,
    pub value: Option<String>,
    pub src_span: SrcSpan,
    pub parent_id: Option<i64>,
    pub child_ids: Vec<i64>,
    /// Compiler-resolved declaration this node refers to.
    pub referenced_declaration: Option<i64>,
    /// Declared or inferred type string (`typeDescriptions.typeString`, or the
    /// legacy `attributes.type`).
    pub type_string: Option<String>,
    /// Parameter count, on function-like definitions.
    pub arity: Option<usize>,
    /// Callee, on call nodes.
    pub call: Option<CallTarget>,
}

impl CanonicalAstNode {
    pub fn new(id: i64, kind: impl Into<String>) -> Self {
        CanonicalAstNode {
            id,
            kind: kind.into(),
            name: None,
            value: None,
            src_span: SrcSpan::default(),
            parent_id: None,
            child_ids: Vec::new(),
            referenced_declaration: None,
            type_string: None,
            arity: None,
            call: None,
        }
    }

    pub fn is_unknown(&self) -> bool {
        self.kind == UNKNOWN_KIND
    }
}

/// A canonical tree for one source unit. Nodes are stored in document
/// (pre-)order, so `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct AstTree {
    pub source_unit_path: String,
    pub compiler_version: String,
    nodes: Vec<CanonicalAstNode>,
    index: HashMap<i64, usize>,
}

impl AstTree {
    /// Assembles a tree from nodes in document order. Parent and child links
    /// must already be consistent; `infer_hierarchy` produces such lists.
    pub fn from_nodes(
        source_unit_path: impl Into<String>,
        compiler_version: impl Into<String>,
        nodes: Vec<CanonicalAstNode>,
    ) -> Result<Self, AstError> {
        if nodes.is_empty() {
            return Err(AstError::MalformedAst("document contains no id-bearing nodes".into()));
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (pos, node) in nodes.iter().enumerate() {
            if index.insert(node.id, pos).is_some() {
                return Err(AstError::MalformedAst(format!("duplicate node id {}", node.id)));
            }
        }
        Ok(AstTree {
            source_unit_path: source_unit_path.into(),
            compiler_version: compiler_version.into(),
            nodes,
            index,
        })
    }

    pub fn root(&self) -> &CanonicalAstNode {
        &self.nodes[0]
    }

    pub fn nodes(&self) -> &[CanonicalAstNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: i64) -> Option<&CanonicalAstNode> {
        self.index.get(&id).map(|&pos| &self.nodes[pos])
    }

    pub fn position(&self, id: i64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn parent(&self, node: &CanonicalAstNode) -> Option<&CanonicalAstNode> {
        node.parent_id.and_then(|p| self.get(p))
    }

    /// Ancestors of `node`, nearest first.
    pub fn ancestors<'a>(&'a self, node: &'a CanonicalAstNode) -> impl Iterator<Item = &'a CanonicalAstNode> + 'a {
        std::iter::successors(self.parent(node), move |n| self.parent(n))
    }

    pub fn depth(&self, node: &CanonicalAstNode) -> usize {
        self.ancestors(node).count()
    }

    /// `(kind, name)` pairs of all nodes, sorted. Used to compare encodings of
    /// the same source.
    pub fn kind_name_multiset(&self) -> Vec<(String, Option<String>)> {
        let mut pairs: Vec<_> = self.nodes.iter().map(|n| (n.kind.clone(), n.name.clone())).collect();
        pairs.sort();
        pairs
    }
}

/// Defect taxonomy tags attached to labeled projects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectCategory {
    LogicalInconsistency,
    ResourceConstraint,
    AccessControl,
    TypeAndDeclarationError,
    ExceptionHandling,
}

impl DefectCategory {
    pub const ALL: [DefectCategory; 5] = [
        DefectCategory::LogicalInconsistency,
        DefectCategory::ResourceConstraint,
        DefectCategory::AccessControl,
        DefectCategory::TypeAndDeclarationError,
        DefectCategory::ExceptionHandling,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DefectCategory::LogicalInconsistency => "logical_inconsistency",
            DefectCategory::ResourceConstraint => "resource_constraint",
            DefectCategory::AccessControl => "access_control",
            DefectCategory::TypeAndDeclarationError => "type_and_declaration_error",
            DefectCategory::ExceptionHandling => "exception_handling",
        }
    }
}

impl fmt::Display for DefectCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A multi-contract project: one canonical tree per source unit.
#[derive(Debug, Clone)]
pub struct ContractProject {
    pub project_id: String,
    pub documents: Vec<AstTree>,
    pub label: Option<bool>,
    pub defect_categories: BTreeSet<DefectCategory>,
}

impl ContractProject {
    pub fn new(project_id: impl Into<String>, documents: Vec<AstTree>) -> Result<Self, AstError> {
        if documents.is_empty() {
            return Err(AstError::MalformedAst("project has no documents".into()));
        }
        Ok(ContractProject {
            project_id: project_id.into(),
            documents,
            label: None,
            defect_categories: BTreeSet::new(),
        })
    }
}
