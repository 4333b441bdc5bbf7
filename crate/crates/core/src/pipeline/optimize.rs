//! Optimizer run on each encapsulated region: block-local constant folding
//! followed by dead-instruction elimination over the region.

use std::collections::HashMap;

use crate::ir::liveness::RegSet;
use crate::ir::{BinOp, Block, Instr, Operand};
use crate::region::EncapsulatedRegion;

fn fold_block(b: &mut Block) {
    let mut known: HashMap<String, i64> = HashMap::new();
    let value = |known: &HashMap<String, i64>, o: &Operand| match o {
        Operand::Imm(v) => Some(*v),
        Operand::Reg(r) => known.get(r).copied(),
    };
    let n = b.instrs.len();
    for (i, ins) in b.instrs.iter_mut().enumerate() {
        // terminators stay untouched so the unit still matches its procedure
        if i + 1 == n && ins.is_terminator() {
            break;
        }
        match ins {
            Instr::Bin { op, dst, lhs, rhs } => {
                for o in [&mut *lhs, &mut *rhs] {
                    if let Some(v) = value(&known, o) {
                        *o = Operand::Imm(v);
                    }
                }
                let folded = match (&*lhs, &*rhs) {
                    (Operand::Imm(a), Operand::Imm(c)) => op.eval(*a, *c),
                    _ => None,
                };
                match folded {
                    Some(v) => {
                        known.insert(dst.clone(), v);
                        *ins = Instr::Const { dst: dst.clone(), value: v };
                    }
                    None => {
                        known.remove(dst.as_str());
                    }
                }
            }
            Instr::Const { dst, value } => {
                known.insert(dst.clone(), *value);
            }
            Instr::Move { dst, src } => match value(&known, src) {
                Some(v) => {
                    known.insert(dst.clone(), v);
                    *ins = Instr::Const { dst: dst.clone(), value: v };
                }
                None => {
                    known.remove(dst.as_str());
                }
            },
            Instr::Print { src } => {
                if let Some(v) = value(&known, src) {
                    *src = Operand::Imm(v);
                }
            }
            Instr::Call { dst, args, .. } => {
                for a in args.iter_mut() {
                    if let Some(v) = value(&known, a) {
                        *a = Operand::Imm(v);
                    }
                }
                known.remove(dst.as_str());
            }
            Instr::Branch { .. } | Instr::Jump | Instr::Return { .. } => {}
        }
    }
}

/// Instructions with no effect besides writing their destination. A
/// division may trap, so it only qualifies once folded away.
fn removable(i: &Instr) -> bool {
    match i {
        Instr::Const { .. } | Instr::Move { .. } => true,
        Instr::Bin { op, .. } => *op != BinOp::Div,
        _ => false,
    }
}

fn dce(unit: &mut EncapsulatedRegion) -> bool {
    let out = unit.live_out.clone();
    let sets = crate::region::region_liveness(&unit.blocks, |_| out.clone());
    let mut changed = false;
    for (id, b) in unit.blocks.iter_mut() {
        let mut live: RegSet = sets[id].1.clone();
        let mut keep = vec![true; b.instrs.len()];
        for (k, ins) in b.instrs.iter().enumerate().rev() {
            if let Some(d) = ins.def() {
                if removable(ins) && !live.contains(d) {
                    keep[k] = false;
                    continue;
                }
                live.remove(d);
            }
            live.extend(ins.uses().into_iter().map(str::to_string));
        }
        if keep.iter().any(|k| !k) {
            changed = true;
            let mut it = keep.iter();
            b.instrs.retain(|_| *it.next().expect("flag"));
        }
    }
    changed
}

/// Folds and cleans one unit. Live-out registers and every observable
/// instruction survive, and the instruction count never grows.
pub fn optimize_region(unit: &EncapsulatedRegion) -> EncapsulatedRegion {
    let mut u = unit.clone();
    for b in u.blocks.values_mut() {
        fold_block(b);
    }
    while dce(&mut u) {}
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_program, BlockId};
    use crate::region::{encapsulate, Region};

    fn unit(src: &str, blocks: &[&str]) -> EncapsulatedRegion {
        let p = parse_program(src).unwrap();
        let mut r = Region::new("main", BlockId::from(blocks[0]));
        r.blocks = blocks.iter().map(|b| BlockId::from(*b)).collect();
        encapsulate(p.main(), &r).unwrap()
    }

    const P: &str = "proc main(a) {
block 1:
  x = const 2
  y = const 3
  r = add x y
  t = mul a 4
  z = div a 0
  jump 2
block 2:
  print r
  return r
}
";

    #[test]
    fn folds_live_out_sum() {
        let u = optimize_region(&unit(P, &["1"]));
        let b = &u.blocks[&BlockId::from("1")];
        assert!(b.instrs.contains(&Instr::Const { dst: "r".into(), value: 5 }));
        // x, y and t are dead; the unfoldable division stays
        assert_eq!(b.instrs.len(), 3);
        assert!(matches!(b.instrs[1], Instr::Bin { op: BinOp::Div, .. }));
    }

    #[test]
    fn never_grows_and_keeps_terminators() {
        for blocks in [vec!["1"], vec!["2"], vec!["1", "2"]] {
            let before = unit(P, &blocks);
            let after = optimize_region(&before);
            assert!(after.code_size() <= before.code_size());
            for (id, b) in &before.blocks {
                assert_eq!(b.instrs.last(), after.blocks[id].instrs.last());
            }
        }
    }

    #[test]
    fn whole_unit_propagates_print() {
        let u = optimize_region(&unit(P, &["1", "2"]));
        let b2 = &u.blocks[&BlockId::from("2")];
        // folding is block-local, so the print in block 2 still reads r
        assert_eq!(b2.instrs[0], Instr::Print { src: Operand::reg("r") });
    }
}
