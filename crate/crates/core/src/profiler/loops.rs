use std::collections::BTreeSet;

use indexmap::IndexMap;
use petgraph::algo::dominators;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::ir::{BlockId, Procedure};

/// Natural-loop nesting depth of every block.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoopInfo {
    pub depth: IndexMap<BlockId, u32>,
}

impl LoopInfo {
    pub fn depth_of(&self, b: &BlockId) -> u32 {
        self.depth.get(b).copied().unwrap_or(0)
    }
}

/// Loop depths from dominator-based natural loops. Loops sharing a header
/// are merged. Retreating edges whose target does not dominate their source
/// (irreducible flow) form no loop, so such blocks keep the depth of the
/// reducible loops around them.
pub fn loop_depths(p: &Procedure) -> LoopInfo {
    let mut g: DiGraph<(), ()> = DiGraph::new();
    let idx: IndexMap<&BlockId, NodeIndex> = p.blocks.keys().map(|b| (b, g.add_node(()))).collect();
    for b in p.blocks.values() {
        for s in &b.succs {
            if let Some(&t) = idx.get(s) {
                g.add_edge(idx[&b.id], t, ());
            }
        }
    }
    let mut depth: IndexMap<BlockId, u32> = p.blocks.keys().map(|b| (b.clone(), 0)).collect();
    let Some(&root) = idx.get(&p.entry) else {
        return LoopInfo { depth };
    };
    let dom = dominators::simple_fast(&g, root);
    let dominates = |h: NodeIndex, n: NodeIndex| {
        dom.dominators(n)
            .map(|mut it| it.any(|d| d == h))
            .unwrap_or(false)
    };

    let mut bodies: IndexMap<NodeIndex, BTreeSet<NodeIndex>> = IndexMap::new();
    for e in g.edge_indices() {
        let (u, h) = g.edge_endpoints(e).expect("edge");
        if !dominates(h, u) {
            continue;
        }
        let body = bodies.entry(h).or_insert_with(|| BTreeSet::from([h]));
        let mut stack = vec![u];
        while let Some(n) = stack.pop() {
            if body.insert(n) {
                stack.extend(g.neighbors_directed(n, petgraph::Direction::Incoming));
            }
        }
    }
    let names: Vec<&BlockId> = idx.keys().copied().collect();
    for body in bodies.values() {
        for n in body {
            *depth.get_mut(names[n.index()]).expect("block") += 1;
        }
    }
    LoopInfo { depth }
}
