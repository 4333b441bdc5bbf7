//! Interpreter-based profiling and loop nesting analysis.

mod loops;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::ir::{BlockId, BlockRef, Instr, Operand, Procedure, Program, Weight};

pub use loops::{loop_depths, LoopInfo};

pub const DEFAULT_FUEL: u64 = 10_000_000;
pub const DEFAULT_CALL_OVERHEAD: u64 = 5;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum InterpError {
    #[error("fuel exhausted after {0} instructions")]
    FuelExhausted(u64),
    #[error("division by zero in {0}")]
    DivisionByZero(BlockRef),
    #[error("call to `{callee}` with {got} arguments, expected {expected}")]
    ArityMismatch {
        callee: String,
        expected: usize,
        got: usize,
    },
    #[error("no procedure `{0}`")]
    UnknownProcedure(String),
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("profile references unknown block `{0}`")]
    UnknownBlock(String),
    #[error("malformed profile: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecutionProfile {
    pub block_counts: BTreeMap<BlockRef, u64>,
    pub dynamic_instructions: u64,
    pub dynamic_calls: u64,
    pub outputs: Vec<i64>,
    /// Value returned by the entry procedure.
    pub result: i64,
}

#[derive(Serialize, Deserialize)]
struct ProfileJson {
    blocks: BTreeMap<String, u64>,
    dynamic_instructions: u64,
    dynamic_calls: u64,
}

impl ExecutionProfile {
    pub fn count(&self, r: &BlockRef) -> u64 {
        self.block_counts.get(r).copied().unwrap_or(0)
    }

    pub fn dynamic_cost(&self, call_overhead: u64) -> u64 {
        self.dynamic_instructions + call_overhead * self.dynamic_calls
    }

    /// Observable behaviour: printed values followed by the result.
    pub fn observable(&self) -> (Vec<i64>, i64) {
        (self.outputs.clone(), self.result)
    }

    pub fn to_json(&self) -> String {
        let j = ProfileJson {
            blocks: self
                .block_counts
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            dynamic_instructions: self.dynamic_instructions,
            dynamic_calls: self.dynamic_calls,
        };
        serde_json::to_string(&j).expect("profile serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ProfileError> {
        let j: ProfileJson = serde_json::from_str(text)?;
        let mut block_counts = BTreeMap::new();
        for (k, v) in j.blocks {
            let (p, b) = k
                .split_once('.')
                .ok_or_else(|| ProfileError::UnknownBlock(k.clone()))?;
            block_counts.insert(BlockRef::new(p, b), v);
        }
        Ok(ExecutionProfile {
            block_counts,
            dynamic_instructions: j.dynamic_instructions,
            dynamic_calls: j.dynamic_calls,
            ..Default::default()
        })
    }
}

struct Frame<'a> {
    proc: &'a Procedure,
    block: &'a BlockId,
    pc: usize,
    regs: HashMap<&'a str, i64>,
    ret_dst: Option<&'a str>,
}

impl<'a> Frame<'a> {
    fn new(proc: &'a Procedure, args: &[i64], ret_dst: Option<&'a str>) -> Self {
        let regs = proc
            .params
            .iter()
            .map(String::as_str)
            .zip(args.iter().copied().chain(std::iter::repeat(0)))
            .collect();
        Frame {
            proc,
            block: &proc.entry,
            pc: 0,
            regs,
            ret_dst,
        }
    }

    fn val(&self, o: &Operand) -> i64 {
        match o {
            Operand::Imm(v) => *v,
            Operand::Reg(r) => self.regs.get(r.as_str()).copied().unwrap_or(0),
        }
    }
}

/// Runs `program` from its entry procedure. The entry's parameters take
/// their values from `input` in order; missing values are zero. Calls to
/// external procedures return zero.
pub fn interpret(program: &Program, input: &[i64], fuel: u64) -> Result<ExecutionProfile, InterpError> {
    let main = program
        .proc(&program.entry)
        .ok_or_else(|| InterpError::UnknownProcedure(program.entry.clone()))?;
    let mut prof = ExecutionProfile::default();
    let mut counts: HashMap<(&str, &BlockId), u64> = HashMap::new();
    let mut stack = vec![Frame::new(main, input, None)];
    *counts.entry((&main.name, &main.entry)).or_default() += 1;

    loop {
        let f = stack.last_mut().expect("non-empty stack");
        let proc: &Procedure = f.proc;
        let block = &proc.blocks[f.block];
        let instr = &block.instrs[f.pc];
        prof.dynamic_instructions += 1;
        if prof.dynamic_instructions > fuel {
            return Err(InterpError::FuelExhausted(fuel));
        }
        f.pc += 1;
        match instr {
            Instr::Const { dst, value } => {
                f.regs.insert(dst, *value);
            }
            Instr::Bin { op, dst, lhs, rhs } => {
                let v = op.eval(f.val(lhs), f.val(rhs)).ok_or_else(|| {
                    InterpError::DivisionByZero(BlockRef::new(proc.name.clone(), block.id.clone()))
                })?;
                f.regs.insert(dst, v);
            }
            Instr::Move { dst, src } => {
                let v = f.val(src);
                f.regs.insert(dst, v);
            }
            Instr::Print { src } => prof.outputs.push(f.val(src)),
            Instr::Call { dst, callee, args } => {
                prof.dynamic_calls += 1;
                let vals: Vec<i64> = args.iter().map(|a| f.val(a)).collect();
                match program.proc(callee) {
                    None => {
                        if !program.externals.contains(callee) {
                            return Err(InterpError::UnknownProcedure(callee.clone()));
                        }
                        f.regs.insert(dst, 0);
                    }
                    Some(q) => {
                        if q.params.len() != vals.len() {
                            return Err(InterpError::ArityMismatch {
                                callee: callee.clone(),
                                expected: q.params.len(),
                                got: vals.len(),
                            });
                        }
                        *counts.entry((&q.name, &q.entry)).or_default() += 1;
                        stack.push(Frame::new(q, &vals, Some(dst)));
                    }
                }
            }
            Instr::Branch { cond } => {
                let t = if f.val(cond) != 0 { 0 } else { 1 };
                f.block = &block.succs[t];
                f.pc = 0;
                *counts.entry((&proc.name, f.block)).or_default() += 1;
            }
            Instr::Jump => {
                f.block = &block.succs[0];
                f.pc = 0;
                *counts.entry((&proc.name, f.block)).or_default() += 1;
            }
            Instr::Return { value } => {
                let v = f.val(value);
                let done = stack.pop().expect("frame");
                match (stack.last_mut(), done.ret_dst) {
                    (Some(caller), Some(dst)) => {
                        caller.regs.insert(dst, v);
                    }
                    _ => {
                        prof.result = v;
                        break;
                    }
                }
            }
        }
    }

    prof.block_counts = counts
        .into_iter()
        .map(|((p, b), n)| (BlockRef::new(p, b.clone()), n))
        .collect();
    Ok(prof)
}

/// Copy of `program` whose block weights are the profile's counts.
/// Blocks the profile does not mention get weight zero.
pub fn annotate_profile(program: &Program, profile: &ExecutionProfile) -> Result<Program, ProfileError> {
    if let Some(r) = profile.block_counts.keys().find(|r| program.block(r).is_none()) {
        return Err(ProfileError::UnknownBlock(r.to_string()));
    }
    let mut out = program.clone();
    for p in out.procedures.values_mut() {
        for b in p.blocks.values_mut() {
            let r = BlockRef::new(p.name.clone(), b.id.clone());
            b.weight = Weight::from_count(profile.count(&r));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_program, CodeSize};

    const SUM: &str = "proc main() {
block 1:
  s = const 0
  i = const 1
  jump 2
block 2:
  c = lt 10 i
  branch c 4 3
block 3:
  s = add s i
  i = add i 1
  jump 2
block 4:
  print s
  return s
}
";

    #[test]
    fn prints_constant() {
        let p = parse_program("proc main() {\nblock 1:\n  r = const 42\n  print r\n  return r\n}\n").unwrap();
        let prof = interpret(&p, &[], DEFAULT_FUEL).unwrap();
        assert_eq!(prof.outputs, vec![42]);
        assert_eq!(prof.dynamic_instructions as usize, p.code_size());
    }

    #[test]
    fn sum_loop_counts() {
        let p = parse_program(SUM).unwrap();
        let prof = interpret(&p, &[], DEFAULT_FUEL).unwrap();
        // hand trace: header runs for i = 1..=11, body for i = 1..=10
        assert_eq!(prof.count(&BlockRef::new("main", "1")), 1);
        assert_eq!(prof.count(&BlockRef::new("main", "2")), 11);
        assert_eq!(prof.count(&BlockRef::new("main", "3")), 10);
        assert_eq!(prof.outputs, vec![55]);
        let recomputed: u64 = prof
            .block_counts
            .iter()
            .map(|(r, n)| n * p.block(r).unwrap().len() as u64)
            .sum();
        assert_eq!(recomputed, prof.dynamic_instructions);
    }

    #[test]
    fn fuel_and_faults() {
        let p = parse_program(SUM).unwrap();
        assert_eq!(interpret(&p, &[], 10), Err(InterpError::FuelExhausted(10)));
        let d = parse_program("proc main(x) {\nblock 1:\n  r = div 1 x\n  return r\n}\n").unwrap();
        assert!(matches!(interpret(&d, &[0], 100), Err(InterpError::DivisionByZero(_))));
        assert_eq!(interpret(&d, &[1], 100).unwrap().result, 1);
    }

    #[test]
    fn calls_and_externals() {
        let p = parse_program(
            "extern ext\nproc main(a) {\nblock 1:\n  r = call f(a)\n  jump 2\nblock 2:\n  e = call ext()\n  jump 3\nblock 3:\n  r = add r e\n  return r\n}\nproc f(x) {\nblock 1:\n  y = mul x 2\n  return y\n}\n",
        )
        .unwrap();
        let prof = interpret(&p, &[21], DEFAULT_FUEL).unwrap();
        assert_eq!(prof.result, 42);
        assert_eq!(prof.dynamic_calls, 2);
        assert_eq!(prof.count(&BlockRef::new("f", "1")), 1);
        assert_eq!(prof.dynamic_cost(5), prof.dynamic_instructions + 10);
    }

    #[test]
    fn annotate_and_json() {
        let p = parse_program(SUM).unwrap();
        let empty = annotate_profile(&p, &ExecutionProfile::default()).unwrap();
        assert!(!empty.has_weights());

        let mut one = ExecutionProfile::default();
        one.block_counts.insert(BlockRef::new("main", "1"), 5);
        let a = annotate_profile(&p, &one).unwrap();
        assert_eq!(a.block(&BlockRef::new("main", "1")).unwrap().weight, Weight::from_count(5));
        assert!(a.block(&BlockRef::new("main", "2")).unwrap().weight.is_zero());

        let prof = interpret(&p, &[], DEFAULT_FUEL).unwrap();
        let a = annotate_profile(&p, &prof).unwrap();
        let back: BTreeMap<BlockRef, u64> = a
            .all_blocks()
            .map(|r| {
                let w = a.block(&r).unwrap().weight.round_count();
                (r, w)
            })
            .filter(|(_, w)| *w > 0)
            .collect();
        assert_eq!(back, prof.block_counts);

        let json = prof.to_json();
        let again = ExecutionProfile::from_json(&json).unwrap();
        assert_eq!(again.to_json(), json);

        let mut bad = ExecutionProfile::default();
        bad.block_counts.insert(BlockRef::new("main", "99"), 1);
        assert!(annotate_profile(&p, &bad).is_err());
    }
}
