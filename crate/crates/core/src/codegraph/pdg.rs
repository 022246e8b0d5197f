use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::{DepGraph, NodeId, NodeKind, Span};
use crate::{Error, Result};

/// Merges a data-flow and a control-flow graph of the same snippet.
///
/// Nodes with equal kind, label and span collapse into one; every edge of
/// both inputs is kept with its endpoints renumbered. Node ids follow the
/// order DFG nodes, then CFG nodes.
pub fn build_pdg(dfg: &DepGraph, cfg: &DepGraph) -> Result<DepGraph> {
    if let (Some(a), Some(b)) = (dfg.source, cfg.source) {
        if a != b {
            return Err(Error::GraphMismatch);
        }
    }
    let mut out = DepGraph {
        source: dfg.source.or(cfg.source),
        ..DepGraph::default()
    };
    let mut index: BTreeMap<(NodeKind, String, Option<Span>), NodeId> = BTreeMap::new();
    let mut remaps = Vec::with_capacity(2);
    for g in [dfg, cfg] {
        let mut remap = BTreeMap::new();
        for n in &g.nodes {
            let key = (n.kind, n.label.clone(), n.span);
            let id = *index
                .entry(key)
                .or_insert_with(|| out.add_node(n.kind, n.label.clone(), n.span));
            remap.insert(n.id, id);
        }
        remaps.push(remap);
    }
    for (g, remap) in [dfg, cfg].into_iter().zip(&remaps) {
        for e in &g.edges {
            let (Some(&src), Some(&dst)) = (remap.get(&e.src), remap.get(&e.dst)) else {
                return Err(Error::invalid("graph", "edge references a missing node"));
            };
            out.add_edge(src, dst, e.kind);
        }
    }
    Ok(out)
}
