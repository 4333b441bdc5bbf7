use std::collections::BTreeSet;

use indexmap::IndexMap;

use super::Region;
use crate::ir::{BlockId, Procedure, Weight};

/// Region blocks other than the region entry that have a predecessor
/// outside the region, in region order.
pub fn side_entries(proc: &Procedure, region: &Region) -> Vec<BlockId> {
    let members = region.block_set();
    let preds = proc.preds();
    region
        .blocks
        .iter()
        .filter(|b| **b != region.entry)
        .filter(|b| preds.get(*b).is_some_and(|ps| ps.iter().any(|p| !members.contains(p))))
        .cloned()
        .collect()
}

/// Removes side entries by cloning each side-entered block together with
/// everything downstream of it inside the region, stopping at the region
/// entry. Outside predecessors move to the clone. The clone takes the share
/// of the original's weight that its outside predecessors carry.
pub fn tail_duplicate(proc: &Procedure, region: &Region) -> (Procedure, Vec<BlockId>) {
    let mut p = proc.clone();
    let members = region.block_set();
    let mut clones = Vec::new();
    while let Some(b) = side_entries(&p, region).into_iter().next() {
        let preds = p.preds();
        let outside: Vec<BlockId> = preds[&b].iter().filter(|q| !members.contains(*q)).cloned().collect();
        let w_out: Weight = outside.iter().map(|q| p.blocks[q].weight.clone()).sum();
        let w_all: Weight = preds[&b].iter().map(|q| p.blocks[q].weight.clone()).sum();

        // downstream closure inside the region
        let mut tail: Vec<BlockId> = vec![b.clone()];
        let mut seen: BTreeSet<BlockId> = tail.iter().cloned().collect();
        let mut i = 0;
        while i < tail.len() {
            for s in &p.blocks[&tail[i]].succs {
                if members.contains(s) && *s != region.entry && seen.insert(s.clone()) {
                    tail.push(s.clone());
                }
            }
            i += 1;
        }

        let mut map: IndexMap<BlockId, BlockId> = IndexMap::new();
        for t in &tail {
            let id = p.fresh_block_id(t, "d");
            // reserve the id before picking the next one
            p.blocks.insert(id.clone(), p.blocks[t].clone());
            map.insert(t.clone(), id);
        }
        for (orig, id) in &map {
            let src = p.blocks[orig].clone();
            let share = if w_all.is_zero() {
                Weight::zero()
            } else {
                src.weight.scaled(&w_out, &w_all)
            };
            let c = p.blocks.get_mut(id).expect("clone");
            c.id = id.clone();
            c.succs = src.succs.iter().map(|s| map.get(s).unwrap_or(s).clone()).collect();
            c.clone_of = Some(src.clone_of.clone().unwrap_or_else(|| orig.clone()));
            c.weight = share.clone();
            let o = p.blocks.get_mut(orig).expect("original");
            o.weight = &o.weight - &share;
            clones.push(id.clone());
        }
        for q in &outside {
            for s in p.blocks.get_mut(q).expect("pred").succs.iter_mut() {
                if *s == b {
                    *s = map[&b].clone();
                }
            }
        }
    }
    (p, clones)
}
