use std::collections::BTreeSet;

use indexmap::IndexMap;

use super::{Block, BlockId, Procedure};

pub type RegSet = BTreeSet<String>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Liveness {
    pub live_in: IndexMap<BlockId, RegSet>,
    pub live_out: IndexMap<BlockId, RegSet>,
}

/// Registers read in `b` before any write to them in `b`, and the
/// registers `b` writes.
pub fn use_def(b: &Block) -> (RegSet, RegSet) {
    let mut uses = RegSet::new();
    let mut defs = RegSet::new();
    for i in &b.instrs {
        for u in i.uses() {
            if !defs.contains(u) {
                uses.insert(u.to_string());
            }
        }
        if let Some(d) = i.def() {
            defs.insert(d.to_string());
        }
    }
    (uses, defs)
}

/// Backward may-liveness over the procedure's CFG.
pub fn liveness(p: &Procedure) -> Liveness {
    let ud: IndexMap<&BlockId, (RegSet, RegSet)> = p.blocks.iter().map(|(k, b)| (k, use_def(b))).collect();
    let mut live_in: IndexMap<BlockId, RegSet> = p.blocks.keys().map(|k| (k.clone(), RegSet::new())).collect();
    let mut live_out = live_in.clone();
    let mut changed = true;
    while changed {
        changed = false;
        for b in p.blocks.values().rev() {
            let out: RegSet = b
                .succs
                .iter()
                .filter_map(|s| live_in.get(s))
                .flat_map(|s| s.iter().cloned())
                .collect();
            let (uses, defs) = &ud[&b.id];
            let inn: RegSet = uses.iter().cloned().chain(out.difference(defs).cloned()).collect();
            if inn != live_in[&b.id] {
                live_in.insert(b.id.clone(), inn);
                changed = true;
            }
            live_out.insert(b.id.clone(), out);
        }
    }
    Liveness { live_in, live_out }
}
