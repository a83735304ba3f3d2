use super::{AstError, CanonicalAstNode};

/// A parsed node annotated with its nesting level (number of id-bearing
/// ancestors) in document order.
#[derive(Debug, Clone, PartialEq)]
pub struct LeveledNode {
    pub node: CanonicalAstNode,
    pub level: usize,
}

impl LeveledNode {
    pub fn new(node: CanonicalAstNode, level: usize) -> Self {
        LeveledNode { node, level }
    }
}

/// Links a document-ordered list of leveled nodes into a tree.
///
/// A node's parent is the nearest preceding node one level up; nodes sharing
/// that parent are siblings, in document order. A node seen at level `k`
/// closes every open level deeper than `k`, so a later node can never attach
/// to a parent that lies inside an already finished subtree.
pub fn infer_hierarchy(nodes: Vec<LeveledNode>) -> Result<Vec<CanonicalAstNode>, AstError> {
    let mut out: Vec<CanonicalAstNode> = Vec::with_capacity(nodes.len());
    // open[k] = position in `out` of the most recent node at level k
    let mut open: Vec<usize> = Vec::new();

    for LeveledNode { mut node, level } in nodes {
        node.parent_id = None;
        node.child_ids.clear();
        let pos = out.len();
        if level == 0 {
            if !out.is_empty() {
                return Err(AstError::MalformedAst(format!(
                    "node {} is a second root of the document",
                    node.id
                )));
            }
        } else {
            let parent_pos = *open
                .get(level - 1)
                .ok_or(AstError::OrphanNode { id: node.id, level })?;
            let parent = &mut out[parent_pos];
            parent.child_ids.push(node.id);
            node.parent_id = Some(parent.id);
        }
        open.truncate(level);
        open.push(pos);
        out.push(node);
    }
    Ok(out)
}
