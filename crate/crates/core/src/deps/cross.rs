use serde::{Deserialize, Serialize};

use super::{resolve_local_call, AttributedGraph, GraphWarning};

/// A call node in one document whose callee is defined in another document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionPoint {
    pub graph_index: usize,
    pub node_id: i64,
    pub target_graph: usize,
    pub target_node: i64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CrossContractScan {
    pub points: Vec<InteractionPoint>,
    pub warnings: Vec<GraphWarning>,
}

/// Finds call nodes whose `Contract.function` target (with matching arity)
/// is defined in a different document of the same project.
///
/// Calls that resolve inside their own document are not interactions.
/// Qualified calls matching nothing in the project are reported as
/// warnings; unqualified unresolved calls are builtins or inherited members
/// and are ignored. When several documents define the target, the lowest
/// document index (then lowest node id) wins.
pub fn identify_cross_contract_nodes(graphs: &[AttributedGraph]) -> CrossContractScan {
    let mut scan = CrossContractScan::default();
    for (gi, graph) in graphs.iter().enumerate() {
        for (&call_id, site) in &graph.calls {
            if resolve_local_call(site, &graph.definitions).is_some() {
                continue;
            }
            let Some(qualifier) = site.target.qualifier.as_ref() else {
                continue;
            };
            let found = graphs
                .iter()
                .enumerate()
                .filter(|&(gj, _)| gj != gi)
                .find_map(|(gj, other)| {
                    other
                        .definitions
                        .iter()
                        .find(|(_, sig)| {
                            sig.contract.as_ref() == Some(qualifier)
                                && sig.name == site.target.name
                                && sig.arity == site.target.arity
                        })
                        .map(|(&def_id, _)| (gj, def_id))
                });
            match found {
                Some((target_graph, target_node)) => scan.points.push(InteractionPoint {
                    graph_index: gi,
                    node_id: call_id,
                    target_graph,
                    target_node,
                }),
                None => {
                    // the definition may sit in this document under the
                    // qualifier with a different resolution outcome (overloads)
                    let local = graph.definitions.values().any(|sig| {
                        sig.contract.as_ref() == Some(qualifier) && sig.name == site.target.name
                    });
                    if !local {
                        scan.warnings.push(GraphWarning::UnresolvedExternalCall {
                            document: graph.source_path.clone(),
                            node: call_id,
                            callee: format!("{qualifier}.{}", site.target.name),
                        });
                    }
                }
            }
        }
    }
    scan
}
