use std::collections::BTreeSet;

use indexmap::IndexMap;

use super::{side_entries, Region};
use crate::ir::liveness::{liveness, use_def, RegSet};
use crate::ir::{Block, BlockId, Instr, Procedure};

pub const PROLOGUE: &str = "__prologue";
pub const EPILOGUE: &str = "__epilogue";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EncapError {
    #[error("region has side entries at {0:?}")]
    MultipleEntries(Vec<BlockId>),
    #[error("unit was encapsulated from `{unit}`, not `{proc}`")]
    WrongProcedure { unit: String, proc: String },
    #[error("block `{0}` of the unit does not match the procedure")]
    Mismatch(BlockId),
}

/// A region cut out of its procedure as a standalone unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncapsulatedRegion {
    pub proc: String,
    pub region_id: usize,
    pub entry: BlockId,
    /// Region blocks, unchanged apart from what an optimizer does to their
    /// non-terminator instructions.
    pub blocks: IndexMap<BlockId, Block>,
    /// Registers read before being written on some path from the entry.
    pub live_in: RegSet,
    /// Registers live on some edge leaving the region.
    pub live_out: RegSet,
}

impl EncapsulatedRegion {
    /// Single-entry single-exit view: a prologue jumping to the entry, and
    /// every edge leaving the region (including returns) redirected to one
    /// epilogue.
    pub fn as_procedure(&self) -> Procedure {
        let pro = BlockId::new(PROLOGUE);
        let epi = BlockId::new(EPILOGUE);
        let mut blocks = IndexMap::new();
        let mut b = Block::new(pro.clone(), self.proc.clone());
        b.instrs.push(Instr::Jump);
        b.succs.push(self.entry.clone());
        blocks.insert(pro.clone(), b);
        for (id, src) in &self.blocks {
            let mut b = src.clone();
            b.clone_of = None;
            for s in b.succs.iter_mut() {
                if !self.blocks.contains_key(s) {
                    *s = epi.clone();
                }
            }
            if matches!(b.instrs.last(), Some(Instr::Return { .. })) {
                b.instrs.pop();
                b.instrs.push(Instr::Jump);
                b.succs = vec![epi.clone()];
            }
            blocks.insert(id.clone(), b);
        }
        let mut e = Block::new(epi.clone(), self.proc.clone());
        e.instrs.push(Instr::Return {
            value: crate::ir::Operand::Imm(0),
        });
        blocks.insert(epi.clone(), e);
        Procedure {
            name: format!("{}#{}", self.proc, self.region_id),
            params: self.live_in.iter().cloned().collect(),
            blocks,
            entry: pro,
            exit: epi,
        }
    }

    pub fn code_size(&self) -> usize {
        self.blocks.values().map(Block::len).sum()
    }
}

/// Liveness restricted to `blocks`, where leaving the region contributes
/// `exit_live(target)`.
pub(crate) fn region_liveness(
    blocks: &IndexMap<BlockId, Block>,
    exit_live: impl Fn(&BlockId) -> RegSet,
) -> IndexMap<BlockId, (RegSet, RegSet)> {
    let ud: IndexMap<&BlockId, (RegSet, RegSet)> = blocks.iter().map(|(k, b)| (k, use_def(b))).collect();
    let mut sets: IndexMap<BlockId, (RegSet, RegSet)> =
        blocks.keys().map(|k| (k.clone(), (RegSet::new(), RegSet::new()))).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for b in blocks.values().rev() {
            let mut out = RegSet::new();
            for s in &b.succs {
                match sets.get(s) {
                    Some((inn, _)) => out.extend(inn.iter().cloned()),
                    None => out.extend(exit_live(s)),
                }
            }
            let (uses, defs) = &ud[&b.id];
            let inn: RegSet = uses.iter().cloned().chain(out.difference(defs).cloned()).collect();
            let slot = sets.get_mut(&b.id).expect("block");
            if slot.0 != inn || slot.1 != out {
                *slot = (inn, out);
                changed = true;
            }
        }
    }
    sets
}

pub fn encapsulate(proc: &Procedure, region: &Region) -> Result<EncapsulatedRegion, EncapError> {
    let side = side_entries(proc, region);
    if !side.is_empty() {
        return Err(EncapError::MultipleEntries(side));
    }
    let blocks: IndexMap<BlockId, Block> = region
        .blocks
        .iter()
        .map(|b| (b.clone(), proc.blocks[b].clone()))
        .collect();
    let internal = region_liveness(&blocks, |_| RegSet::new());
    let live_in = internal[&region.entry].0.clone();
    let proc_live = liveness(proc);
    let exits: BTreeSet<&BlockId> = blocks
        .values()
        .flat_map(|b| b.succs.iter())
        .filter(|s| !blocks.contains_key(*s))
        .collect();
    let live_out = exits
        .into_iter()
        .flat_map(|s| proc_live.live_in[s].iter().cloned())
        .collect();
    Ok(EncapsulatedRegion {
        proc: proc.name.clone(),
        region_id: region.id,
        entry: region.entry.clone(),
        blocks,
        live_in,
        live_out,
    })
}

/// Puts the unit's instruction bodies back into `proc`. Fails unless every
/// unit block exists in `proc` with the same successors and terminator.
pub fn reintegrate(unit: &EncapsulatedRegion, proc: &Procedure) -> Result<Procedure, EncapError> {
    if unit.proc != proc.name {
        return Err(EncapError::WrongProcedure {
            unit: unit.proc.clone(),
            proc: proc.name.clone(),
        });
    }
    let mut out = proc.clone();
    for (id, b) in &unit.blocks {
        let Some(target) = out.blocks.get_mut(id) else {
            return Err(EncapError::Mismatch(id.clone()));
        };
        if target.succs != b.succs || target.instrs.last() != b.instrs.last() {
            return Err(EncapError::Mismatch(id.clone()));
        }
        target.instrs = b.instrs.clone();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_program, validate, Program};

    const P: &str = "proc main(a) {
block 1:
  c = lt a 5
  branch c 2 3
block 2:
  x = add a 1
  jump 4
block 3:
  x = const 2
  jump 4
block 4:
  y = add x b
  print y
  return y
}
";

    fn region(v: &[&str]) -> Region {
        let mut r = Region::new("main", BlockId::from(v[0]));
        r.blocks = v.iter().map(|s| BlockId::from(*s)).collect();
        r
    }

    fn set(v: &[&str]) -> RegSet {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_block_unit() {
        let p = parse_program(P).unwrap();
        let u = encapsulate(p.main(), &region(&["4"])).unwrap();
        let view = u.as_procedure();
        let order: Vec<&str> = view.blocks.keys().map(BlockId::as_str).collect();
        assert_eq!(order, vec![PROLOGUE, "4", EPILOGUE]);
        assert_eq!(u.live_in, set(&["b", "x"]));
        let prog = Program {
            procedures: [(view.name.clone(), view.clone())].into_iter().collect(),
            externals: Default::default(),
            entry: view.name.clone(),
        };
        assert!(validate(&prog).is_empty(), "{:?}", validate(&prog));
    }

    #[test]
    fn two_exits_share_one_epilogue() {
        let p = parse_program(P).unwrap();
        let u = encapsulate(p.main(), &region(&["1", "2", "3"])).unwrap();
        let view = u.as_procedure();
        let epi = BlockId::new(EPILOGUE);
        assert!(view.blocks[&BlockId::from("2")].succs == vec![epi.clone()]);
        assert!(view.blocks[&BlockId::from("3")].succs == vec![epi.clone()]);
        assert_eq!(u.live_in, set(&["a"]));
        assert_eq!(u.live_out, set(&["b", "x"]));
    }

    #[test]
    fn live_in_matches_brute_force() {
        // brute force: walk every acyclic path from the entry and collect
        // registers read before written on that path
        fn walk(u: &EncapsulatedRegion, b: &BlockId, defined: RegSet, acc: &mut RegSet, depth: usize) {
            let Some(block) = u.blocks.get(b) else { return };
            let mut defined = defined;
            for i in &block.instrs {
                for r in i.uses() {
                    if !defined.contains(r) {
                        acc.insert(r.to_string());
                    }
                }
                if let Some(d) = i.def() {
                    defined.insert(d.to_string());
                }
            }
            if depth < 12 {
                for s in &block.succs {
                    walk(u, s, defined.clone(), acc, depth + 1);
                }
            }
        }
        let p = parse_program(P).unwrap();
        for r in [vec!["1", "2", "3", "4"], vec!["1", "2", "3"], vec!["4"]] {
            let u = encapsulate(p.main(), &region(&r)).unwrap();
            let mut acc = RegSet::new();
            walk(&u, &u.entry, RegSet::new(), &mut acc, 0);
            assert_eq!(u.live_in, acc);
        }
    }

    #[test]
    fn side_entry_is_rejected() {
        let p = parse_program(P).unwrap();
        let e = encapsulate(p.main(), &region(&["1", "2", "4"])).unwrap_err();
        assert_eq!(e, EncapError::MultipleEntries(vec![BlockId::from("4")]));
    }

    #[test]
    fn round_trip_and_mismatch() {
        let p = parse_program(P).unwrap();
        let u = encapsulate(p.main(), &region(&["1", "2", "3", "4"])).unwrap();
        assert_eq!(&reintegrate(&u, p.main()).unwrap(), p.main());
        let mut other = p.main().clone();
        other.name = "f".into();
        assert!(matches!(reintegrate(&u, &other), Err(EncapError::WrongProcedure { .. })));
        let mut bad = u.clone();
        bad.blocks[0].succs.reverse();
        assert_eq!(reintegrate(&bad, p.main()), Err(EncapError::Mismatch(BlockId::from("1"))));
    }
}
