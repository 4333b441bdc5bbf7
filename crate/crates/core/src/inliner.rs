//! Single-site inlining and the up-front aggressive inliner.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;

use crate::heuristics::{
    loop_call_weight, recursive_procedures, should_inline, CalleeStats, Eligibility, GrowthState, Reason,
    SecondOrderPolicy,
};
use crate::ir::{BlockId, CodeSize, Instr, Operand, Procedure, Program, Weight};
use crate::profiler::loop_depths;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Callsite {
    pub caller: String,
    pub block: BlockId,
    pub callee: String,
    /// Weight of the call block.
    pub frequency: Weight,
}

impl Callsite {
    /// The callsite held by `caller.block`, if that block is a call block.
    pub fn at(program: &Program, caller: &str, block: &BlockId) -> Option<Callsite> {
        let b = program.proc(caller)?.block(block)?;
        let (_, callee, _) = b.call()?;
        Some(Callsite {
            caller: caller.to_string(),
            block: block.clone(),
            callee: callee.to_string(),
            frequency: b.weight.clone(),
        })
    }

    pub fn all(program: &Program) -> Vec<Callsite> {
        program
            .procedures
            .values()
            .flat_map(|p| p.callsites().map(move |(b, _)| (p.name.as_str(), b)))
            .filter_map(|(p, b)| Callsite::at(program, p, b))
            .collect()
    }
}

impl fmt::Display for Callsite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{} -> {}", self.caller, self.block, self.callee)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum InlineError {
    #[error("`{0}` is external and cannot be inlined")]
    External(String),
    #[error("call to `{callee}` passes {got} arguments, callee takes {expected}")]
    ParamMismatch {
        callee: String,
        expected: usize,
        got: usize,
    },
    #[error("`{0}` is not a call block")]
    NotACallSite(String),
    #[error("no procedure `{0}`")]
    UnknownProcedure(String),
}

/// Static facts about every procedure that the gates consult.
#[derive(Clone, Debug, Default)]
pub struct CalleeTable {
    stats: BTreeMap<String, CalleeStats>,
}

impl CalleeTable {
    pub fn new(program: &Program, loop_depth_weight: u64) -> Self {
        let rec = recursive_procedures(program);
        let stats = program
            .procedures
            .values()
            .map(|p| {
                let s = CalleeStats {
                    size: p.code_size(),
                    loop_call_weight: loop_call_weight(p, &loop_depths(p), loop_depth_weight),
                    recursive: rec.contains(&p.name),
                };
                (p.name.clone(), s)
            })
            .collect();
        CalleeTable { stats }
    }

    pub fn get(&self, name: &str) -> Option<&CalleeStats> {
        self.stats.get(name)
    }

    /// Structural checks first (external, arity), then the policy gates.
    pub fn eligibility(
        &self,
        program: &Program,
        site: &Callsite,
        policy: &SecondOrderPolicy,
        growth: GrowthState,
        seed_weight: Option<&Weight>,
    ) -> Eligibility {
        let (Some(callee), Some(stats)) = (program.proc(&site.callee), self.stats.get(&site.callee)) else {
            return Reason::External.into();
        };
        let args = program
            .block(&crate::ir::BlockRef::new(site.caller.clone(), site.block.clone()))
            .and_then(|b| b.call().map(|(_, _, a)| a.len()));
        if args != Some(callee.params.len()) {
            return Reason::ParamMismatch.into();
        }
        should_inline(site, stats, policy, growth, seed_weight)
    }
}

pub fn inline_eligibility(
    program: &Program,
    site: &Callsite,
    policy: &SecondOrderPolicy,
    growth: GrowthState,
    seed_weight: Option<&Weight>,
) -> Eligibility {
    CalleeTable::new(program, policy.loop_depth_weight).eligibility(program, site, policy, growth, seed_weight)
}

/// What happens to the call block when its callee is copied in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SiteMode {
    /// The call block disappears; its predecessors jump straight to the copy
    /// of the callee entry. Parameters that the callee assigns still need a
    /// binding block, so in that case the site stays as in `Keep`.
    Replace,
    /// The call block stays as `param moves; jump entry'`.
    Keep,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InlineResult {
    /// Callee block id to its copy in the caller.
    pub map: IndexMap<BlockId, BlockId>,
    pub entry: BlockId,
    pub exit: BlockId,
    /// Whether the call block survived as a trampoline.
    pub site_kept: bool,
}

impl InlineResult {
    pub fn copies(&self) -> impl Iterator<Item = &BlockId> {
        self.map.values()
    }
}

fn register_prefix(caller: &Procedure) -> String {
    let regs = caller.registers();
    (0..)
        .map(|k| format!("__i{k}_"))
        .find(|p| !regs.iter().any(|r| r.starts_with(p.as_str())))
        .expect("unbounded prefix space")
}

/// Copies `callee` into `caller` at the call block `site`.
pub fn inline_into(
    caller: &mut Procedure,
    site: &BlockId,
    callee: &Procedure,
    mode: SiteMode,
) -> Result<InlineResult, InlineError> {
    let call_block = caller
        .block(site)
        .ok_or_else(|| InlineError::NotACallSite(site.to_string()))?
        .clone();
    let (dst, callee_name, args) = call_block
        .call()
        .ok_or_else(|| InlineError::NotACallSite(site.to_string()))?;
    if callee_name != callee.name {
        return Err(InlineError::UnknownProcedure(callee_name.to_string()));
    }
    if args.len() != callee.params.len() {
        return Err(InlineError::ParamMismatch {
            callee: callee.name.clone(),
            expected: callee.params.len(),
            got: args.len(),
        });
    }
    let dst = dst.to_string();
    let args = args.to_vec();
    let succ = call_block.succs[0].clone();

    let prefix = register_prefix(caller);
    let assigned: BTreeSet<&str> = callee
        .blocks
        .values()
        .flat_map(|b| b.instrs.iter().filter_map(Instr::def))
        .collect();
    let mut binding: BTreeMap<&str, Operand> = BTreeMap::new();
    let mut moves = Vec::new();
    for (p, a) in callee.params.iter().zip(&args) {
        if assigned.contains(p.as_str()) {
            moves.push(Instr::Move {
                dst: format!("{prefix}{p}"),
                src: a.clone(),
            });
        } else {
            binding.insert(p, a.clone());
        }
    }
    // callee registers read before any write start at zero on every call
    let exposed = crate::ir::liveness::liveness(callee)
        .live_in
        .swap_remove(&callee.entry)
        .unwrap_or_default();
    for r in exposed.iter().filter(|r| !callee.params.contains(r)) {
        moves.push(Instr::Const {
            dst: format!("{prefix}{r}"),
            value: 0,
        });
    }
    let rename = |r: &str| match binding.get(r) {
        Some(o) => o.clone(),
        None => Operand::Reg(format!("{prefix}{r}")),
    };

    let mut taken: BTreeSet<BlockId> = caller.blocks.keys().cloned().collect();
    let mut map = IndexMap::new();
    for id in callee.blocks.keys() {
        let new = if taken.contains(id) {
            let root = id.as_str().split('_').next().unwrap_or(id.as_str()).to_string();
            (1..)
                .map(|n| BlockId::new(format!("{root}_i{n}")))
                .find(|c| !taken.contains(c))
                .expect("unbounded id space")
        } else {
            id.clone()
        };
        taken.insert(new.clone());
        map.insert(id.clone(), new);
    }

    let keep = mode == SiteMode::Keep || !moves.is_empty();
    let entry = map[&callee.entry].clone();
    if keep {
        let b = caller.block_mut(site).expect("site");
        moves.push(Instr::Jump);
        b.instrs = moves;
        b.succs = vec![entry.clone()];
    } else {
        caller.blocks.shift_remove(site);
        for b in caller.blocks.values_mut() {
            for s in b.succs.iter_mut() {
                if s == site {
                    *s = entry.clone();
                }
            }
        }
        if caller.entry == *site {
            caller.entry = entry.clone();
        }
    }

    for (old, new) in &map {
        let src = &callee.blocks[old];
        let mut b = src.clone();
        b.id = new.clone();
        b.succs = src.succs.iter().map(|s| map[s].clone()).collect();
        b.weight = src.weight.scaled(&call_block.weight, &callee.blocks[&callee.entry].weight);
        b.clone_of = src.clone_of.as_ref().map(|c| map.get(c).cloned().unwrap_or_else(|| c.clone()));
        for i in b.instrs.iter_mut() {
            i.rename_regs(rename);
        }
        if let Some(Instr::Return { value }) = b.instrs.last().cloned() {
            b.instrs.pop();
            b.instrs.push(Instr::Move {
                dst: dst.clone(),
                src: value,
            });
            b.instrs.push(Instr::Jump);
            b.succs = vec![succ.clone()];
        }
        caller.blocks.insert(new.clone(), b);
    }
    let exit = map[&callee.exit].clone();
    Ok(InlineResult {
        map,
        entry,
        exit,
        site_kept: keep,
    })
}

/// Replaces the call at `site` with a copy of the callee's body.
pub fn inline_at(program: &Program, site: &Callsite) -> Result<(Program, InlineResult), InlineError> {
    if program.externals.contains(&site.callee) {
        return Err(InlineError::External(site.callee.clone()));
    }
    let callee = program
        .proc(&site.callee)
        .ok_or_else(|| InlineError::UnknownProcedure(site.callee.clone()))?
        .clone();
    let mut out = program.clone();
    let caller = out
        .proc_mut(&site.caller)
        .ok_or_else(|| InlineError::UnknownProcedure(site.caller.clone()))?;
    let r = inline_into(caller, &site.block, &callee, SiteMode::Replace)?;
    Ok((out, r))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InlineRecord {
    pub site: Callsite,
    pub callee_size: usize,
}

/// Inlines the most frequent eligible site until none is left under the
/// growth limit. Ties go to the smaller callee, then to the site name.
/// Only structural gates, recursion blocking and the size cap apply; the
/// frequency gate belongs to region formation.
pub fn aggressive_inline(program: &Program, policy: &SecondOrderPolicy) -> (Program, Vec<InlineRecord>) {
    let original = program.size_without_clones();
    let mut cur = program.clone();
    let mut log = Vec::new();
    let policy = SecondOrderPolicy {
        frequency_ratio: None,
        ..policy.clone()
    };
    // recursion and loop weights are properties of the source call graph
    let table = CalleeTable::new(program, policy.loop_depth_weight);
    loop {
        let growth = GrowthState {
            original,
            current: cur.size_without_clones(),
        };
        let best = Callsite::all(&cur)
            .into_iter()
            .filter_map(|s| {
                let size = cur.proc(&s.callee)?.code_size();
                let ok = table.eligibility(&cur, &s, &policy, growth, None).allowed;
                ok.then_some((s, size))
            })
            .min_by(|(a, sa), (b, sb)| {
                b.frequency
                    .cmp(&a.frequency)
                    .then(sa.cmp(sb))
                    .then_with(|| (&a.caller, &a.block).cmp(&(&b.caller, &b.block)))
            });
        let Some((site, callee_size)) = best else { break };
        let (next, _) = inline_at(&cur, &site).expect("eligible site inlines");
        cur = next;
        log.push(InlineRecord { site, callee_size });
    }
    (cur, log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_program, validate, BlockRef};
    use crate::profiler::{interpret, DEFAULT_FUEL};

    const TWO: &str = "proc main(a) {
block 1:
  r = call f(a, 3)
  jump 2
block 2:
  print r
  return r
}
proc f(x, y) {
block 1:
  c = lt x y
  branch c 2 3
block 2:
  x = add x 10
  jump 3
block 3:
  z = mul x y
  return z
}
";

    #[test]
    fn inline_preserves_semantics_and_origin() {
        let p = parse_program(TWO).unwrap();
        let site = Callsite::at(&p, "main", &"1".into()).unwrap();
        let (q, r) = inline_at(&p, &site).unwrap();
        assert!(validate(&q).is_empty(), "{q}");
        assert!(r.site_kept, "x is assigned, so a binding block is needed");
        for input in [0, 2, 5] {
            let a = interpret(&p, &[input], DEFAULT_FUEL).unwrap();
            let b = interpret(&q, &[input], DEFAULT_FUEL).unwrap();
            assert_eq!(a.observable(), b.observable());
        }
        let main = q.main();
        for c in r.copies() {
            assert_eq!(main.blocks[c].origin, "f");
        }
        assert_eq!(main.blocks[&BlockId::from("1")].origin, "main");
    }

    #[test]
    fn single_block_callee_growth() {
        let p = parse_program(
            "proc main() {\nblock 1:\n  r = call z()\n  jump 2\nblock 2:\n  return r\n}\nproc z() {\nblock 1:\n  return 0\n}\n",
        )
        .unwrap();
        let site = Callsite::at(&p, "main", &"1".into()).unwrap();
        let (q, r) = inline_at(&p, &site).unwrap();
        assert!(!r.site_kept);
        assert_eq!(q.main().code_size(), p.main().code_size() + 1 - 1);
        assert_eq!(q.main().entry, r.entry);
        assert!(validate(&q).is_empty());
    }

    #[test]
    fn weights_scale_by_site_frequency() {
        let p = parse_program(
            "proc main() {
block 1 [weight 1]:
  jump 2
block 2 [weight 30]:
  r = call g()
  jump 3
block 3 [weight 1]:
  return r
}
proc g() {
block 8 [weight 40]:
  branch c 9 10
block 9 [weight 10]:
  jump 10
block 10 [weight 40]:
  return 0
}
",
        )
        .unwrap();
        let site = Callsite::at(&p, "main", &"2".into()).unwrap();
        let (q, r) = inline_at(&p, &site).unwrap();
        let w = |b: &str| q.block(&BlockRef::new("main", b)).unwrap().weight.to_string();
        assert_eq!(w(r.entry.as_str()), "30");
        assert_eq!(w("9"), "15/2");
        let copied: Weight = r.copies().map(|c| q.main().blocks[c].weight.clone()).sum();
        let callee: Weight = p.proc("g").unwrap().blocks.values().map(|b| b.weight.clone()).sum();
        assert!(copied <= callee);
    }

    #[test]
    fn clashing_ids_get_fresh_names() {
        let p = parse_program(
            "proc main() {\nblock 1:\n  r = call g()\n  jump 2\nblock 2:\n  return r\n}\nproc g() {\nblock 1:\n  jump 2\nblock 2:\n  return 7\n}\n",
        )
        .unwrap();
        let site = Callsite::at(&p, "main", &"1".into()).unwrap();
        let (q, r) = inline_at(&p, &site).unwrap();
        assert_eq!(r.entry.as_str(), "1_i1");
        assert_eq!(r.exit.as_str(), "2_i1");
        assert!(validate(&q).is_empty());
        assert_eq!(interpret(&q, &[], 100).unwrap().result, 7);
    }

    #[test]
    fn refusals() {
        let p = parse_program(
            "extern e\nproc main() {\nblock 1:\n  r = call e()\n  jump 2\nblock 2:\n  return r\n}\n",
        )
        .unwrap();
        let site = Callsite::at(&p, "main", &"1".into()).unwrap();
        assert_eq!(inline_at(&p, &site).unwrap_err(), InlineError::External("e".into()));
        let g = GrowthState {
            original: 6,
            current: 6,
        };
        let e = inline_eligibility(&p, &site, &SecondOrderPolicy::default(), g, None);
        assert_eq!(e.reason, Reason::External);
    }

    #[test]
    fn aggressive_inline_respects_limit() {
        let p = parse_program(
            "proc main() {
block 1 [weight 1]:
  a = call f()
  jump 2
block 2 [weight 1]:
  b = call f()
  jump 3
block 3 [weight 1]:
  return b
}
proc f() {
block 1 [weight 2]:
  x = const 1
  y = const 2
  z = add x y
  return z
}
",
        )
        .unwrap();
        // size 9; limit 0.2 allows current < 10.8, first inline grows by 3
        let (q, log) = aggressive_inline(&p, &SecondOrderPolicy::default());
        assert_eq!(log.len(), 1);
        assert_eq!(q.code_size(), 12);
        assert!(validate(&q).is_empty());
        let none = parse_program("proc main() {\nblock 1:\n  return 0\n}\n").unwrap();
        assert_eq!(aggressive_inline(&none, &SecondOrderPolicy::default()).0, none);
    }
}
