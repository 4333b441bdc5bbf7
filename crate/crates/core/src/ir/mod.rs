//! The intermediate representation: programs made of procedures, each a
//! single-entry CFG of basic blocks.
//!
//! Control flow lives in [`Block::succs`]; terminator instructions carry no
//! targets. A `branch` goes to `succs[0]` when its condition is non-zero and
//! to `succs[1]` otherwise. Calls always sit alone in a block followed only by
//! a `jump`, so "is this block a call" is a block-level question.

pub mod liveness;
mod parse;
mod print;
mod validate;
mod weight;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexMap;

pub use parse::{parse_program, ParseError};
pub use validate::{validate, Diagnostic, DiagnosticKind};
pub use weight::Weight;

/// Block identifier. Ordered numerically when both sides are decimal
/// numbers, numeric ids before symbolic ones, symbolic ids lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlockId(String);

impl BlockId {
    pub fn new(id: impl Into<String>) -> Self {
        BlockId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn numeric_key(&self) -> Option<&str> {
        if !self.0.is_empty() && self.0.bytes().all(|b| b.is_ascii_digit()) {
            Some(self.0.trim_start_matches('0'))
        } else {
            None
        }
    }
}

impl Ord for BlockId {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.numeric_key(), other.numeric_key()) {
            (Some(a), Some(b)) => a
                .len()
                .cmp(&b.len())
                .then_with(|| a.cmp(b))
                .then_with(|| self.0.cmp(&other.0)),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => self.0.cmp(&other.0),
        }
    }
}

impl PartialOrd for BlockId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BlockId {
    fn from(s: &str) -> Self {
        BlockId(s.to_string())
    }
}

impl From<u32> for BlockId {
    fn from(n: u32) -> Self {
        BlockId(n.to_string())
    }
}

/// A block qualified by the procedure that holds it.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockRef {
    pub proc: String,
    pub block: BlockId,
}

impl BlockRef {
    pub fn new(proc: impl Into<String>, block: impl Into<BlockId>) -> Self {
        BlockRef {
            proc: proc.into(),
            block: block.into(),
        }
    }
}

impl fmt::Display for BlockRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.proc, self.block)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Reg(String),
    Imm(i64),
}

impl Operand {
    pub fn reg(name: impl Into<String>) -> Self {
        Operand::Reg(name.into())
    }

    pub fn as_reg(&self) -> Option<&str> {
        match self {
            Operand::Reg(r) => Some(r),
            Operand::Imm(_) => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => f.write_str(r),
            Operand::Imm(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Eq,
}

impl BinOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
            BinOp::Lt => "lt",
            BinOp::Eq => "eq",
        }
    }

    /// Evaluates the operation; `None` on division by zero.
    pub fn eval(self, a: i64, b: i64) -> Option<i64> {
        Some(match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::Div => {
                if b == 0 {
                    return None;
                }
                a.wrapping_div(b)
            }
            BinOp::Lt => (a < b) as i64,
            BinOp::Eq => (a == b) as i64,
        })
    }
}

/// Opcode of an instruction, as it appears in the text format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Opcode {
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Eq,
    Branch,
    Jump,
    Call,
    Return,
    Print,
    Move,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instr {
    Const {
        dst: String,
        value: i64,
    },
    Bin {
        op: BinOp,
        dst: String,
        lhs: Operand,
        rhs: Operand,
    },
    Move {
        dst: String,
        src: Operand,
    },
    Print {
        src: Operand,
    },
    Call {
        dst: String,
        callee: String,
        args: Vec<Operand>,
    },
    Branch {
        cond: Operand,
    },
    Jump,
    Return {
        value: Operand,
    },
}

impl Instr {
    pub fn opcode(&self) -> Opcode {
        match self {
            Instr::Const { .. } => Opcode::Const,
            Instr::Bin { op, .. } => match op {
                BinOp::Add => Opcode::Add,
                BinOp::Sub => Opcode::Sub,
                BinOp::Mul => Opcode::Mul,
                BinOp::Div => Opcode::Div,
                BinOp::Lt => Opcode::Lt,
                BinOp::Eq => Opcode::Eq,
            },
            Instr::Move { .. } => Opcode::Move,
            Instr::Print { .. } => Opcode::Print,
            Instr::Call { .. } => Opcode::Call,
            Instr::Branch { .. } => Opcode::Branch,
            Instr::Jump => Opcode::Jump,
            Instr::Return { .. } => Opcode::Return,
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(self, Instr::Branch { .. } | Instr::Jump | Instr::Return { .. })
    }

    /// Register written by this instruction, if any.
    pub fn def(&self) -> Option<&str> {
        match self {
            Instr::Const { dst, .. }
            | Instr::Bin { dst, .. }
            | Instr::Move { dst, .. }
            | Instr::Call { dst, .. } => Some(dst),
            _ => None,
        }
    }

    /// Registers read by this instruction, in operand order.
    pub fn uses(&self) -> Vec<&str> {
        let ops: Vec<&Operand> = match self {
            Instr::Bin { lhs, rhs, .. } => vec![lhs, rhs],
            Instr::Move { src, .. } | Instr::Print { src } => vec![src],
            Instr::Call { args, .. } => args.iter().collect(),
            Instr::Branch { cond } => vec![cond],
            Instr::Return { value } => vec![value],
            Instr::Const { .. } | Instr::Jump => vec![],
        };
        ops.into_iter().filter_map(Operand::as_reg).collect()
    }

    /// Applies `f` to every register name, read or written.
    pub fn rename_regs(&mut self, mut f: impl FnMut(&str) -> Operand) {
        let mut op = |o: &mut Operand| {
            if let Operand::Reg(r) = o {
                *o = f(r);
            }
        };
        match self {
            Instr::Const { dst, .. } => rename_dst(dst, &mut op),
            Instr::Bin { dst, lhs, rhs, .. } => {
                op(lhs);
                op(rhs);
                rename_dst(dst, &mut op);
            }
            Instr::Move { dst, src } => {
                op(src);
                rename_dst(dst, &mut op);
            }
            Instr::Print { src } => op(src),
            Instr::Call { dst, args, .. } => {
                args.iter_mut().for_each(&mut op);
                rename_dst(dst, &mut op);
            }
            Instr::Branch { cond } => op(cond),
            Instr::Return { value } => op(value),
            Instr::Jump => {}
        }
    }
}

fn rename_dst(dst: &mut String, op: &mut impl FnMut(&mut Operand)) {
    let mut o = Operand::Reg(std::mem::take(dst));
    op(&mut o);
    match o {
        Operand::Reg(r) => *dst = r,
        // a destination can only be renamed to another register
        Operand::Imm(_) => panic!("destination register renamed to an immediate"),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub id: BlockId,
    pub instrs: Vec<Instr>,
    pub succs: Vec<BlockId>,
    pub weight: Weight,
    /// Procedure the block's code came from before any inlining.
    pub origin: String,
    /// Original block this one was tail-duplicated from.
    pub clone_of: Option<BlockId>,
}

impl Block {
    pub fn new(id: impl Into<BlockId>, origin: impl Into<String>) -> Self {
        Block {
            id: id.into(),
            instrs: Vec::new(),
            succs: Vec::new(),
            weight: Weight::zero(),
            origin: origin.into(),
            clone_of: None,
        }
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    /// The call in this block, when it is a call block.
    pub fn call(&self) -> Option<(&str, &str, &[Operand])> {
        self.instrs.iter().find_map(|i| match i {
            Instr::Call { dst, callee, args } => Some((dst.as_str(), callee.as_str(), &args[..])),
            _ => None,
        })
    }

    pub fn is_call(&self) -> bool {
        self.call().is_some()
    }

    pub fn is_return(&self) -> bool {
        matches!(self.instrs.last(), Some(Instr::Return { .. }))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Procedure {
    pub name: String,
    pub params: Vec<String>,
    pub blocks: IndexMap<BlockId, Block>,
    pub entry: BlockId,
    pub exit: BlockId,
}

impl Procedure {
    pub fn block(&self, id: &BlockId) -> Option<&Block> {
        self.blocks.get(id)
    }

    pub fn block_mut(&mut self, id: &BlockId) -> Option<&mut Block> {
        self.blocks.get_mut(id)
    }

    /// Predecessor lists, keyed by block, each in block order.
    pub fn preds(&self) -> IndexMap<BlockId, Vec<BlockId>> {
        let mut preds: IndexMap<BlockId, Vec<BlockId>> =
            self.blocks.keys().map(|k| (k.clone(), Vec::new())).collect();
        for b in self.blocks.values() {
            for s in &b.succs {
                if let Some(p) = preds.get_mut(s) {
                    if !p.contains(&b.id) {
                        p.push(b.id.clone());
                    }
                }
            }
        }
        preds
    }

    /// Call blocks and their callees, in block order.
    pub fn callsites(&self) -> impl Iterator<Item = (&BlockId, &str)> {
        self.blocks
            .values()
            .filter_map(|b| b.call().map(|(_, callee, _)| (&b.id, callee)))
    }

    /// Every register named in the procedure, including parameters.
    pub fn registers(&self) -> BTreeSet<String> {
        let mut regs: BTreeSet<String> = self.params.iter().cloned().collect();
        for b in self.blocks.values() {
            for i in &b.instrs {
                if let Some(d) = i.def() {
                    regs.insert(d.to_string());
                }
                regs.extend(i.uses().into_iter().map(str::to_string));
            }
        }
        regs
    }

    /// A block id not yet used in this procedure, derived from `base`.
    pub fn fresh_block_id(&self, base: &BlockId, tag: &str) -> BlockId {
        let root = base.as_str().split("_").next().unwrap_or(base.as_str());
        (1..)
            .map(|n| BlockId(format!("{root}_{tag}{n}")))
            .find(|id| !self.blocks.contains_key(id))
            .expect("unbounded id space")
    }

    pub fn has_weights(&self) -> bool {
        self.blocks.values().any(|b| !b.weight.is_zero())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub procedures: IndexMap<String, Procedure>,
    /// Procedures without a body: never inlined, return 0 when called.
    pub externals: BTreeSet<String>,
    pub entry: String,
}

impl Program {
    pub fn proc(&self, name: &str) -> Option<&Procedure> {
        self.procedures.get(name)
    }

    pub fn proc_mut(&mut self, name: &str) -> Option<&mut Procedure> {
        self.procedures.get_mut(name)
    }

    pub fn main(&self) -> &Procedure {
        &self.procedures[&self.entry]
    }

    pub fn block(&self, r: &BlockRef) -> Option<&Block> {
        self.proc(&r.proc).and_then(|p| p.block(&r.block))
    }

    pub fn block_count(&self) -> usize {
        self.procedures.values().map(|p| p.blocks.len()).sum()
    }

    pub fn all_blocks(&self) -> impl Iterator<Item = BlockRef> + '_ {
        self.procedures.values().flat_map(|p| {
            p.blocks
                .keys()
                .map(move |b| BlockRef::new(p.name.clone(), b.clone()))
        })
    }

    pub fn has_weights(&self) -> bool {
        self.procedures.values().any(Procedure::has_weights)
    }

    /// Returns a copy with every block weight multiplied by `k`.
    pub fn scale_weights(&self, k: u64) -> Program {
        let mut p = self.clone();
        let k = Weight::from_count(k);
        for proc in p.procedures.values_mut() {
            for b in proc.blocks.values_mut() {
                b.weight = &b.weight * &k;
            }
        }
        p
    }
}

/// Instruction count, the unit every size measurement uses.
pub trait CodeSize {
    fn code_size(&self) -> usize;
}

impl CodeSize for Block {
    fn code_size(&self) -> usize {
        self.instrs.len()
    }
}

impl CodeSize for Procedure {
    fn code_size(&self) -> usize {
        self.blocks.values().map(CodeSize::code_size).sum()
    }
}

impl CodeSize for Program {
    fn code_size(&self) -> usize {
        self.procedures.values().map(CodeSize::code_size).sum()
    }
}

impl Program {
    /// Size excluding tail-duplicated blocks.
    pub fn size_without_clones(&self) -> usize {
        self.procedures
            .values()
            .flat_map(|p| p.blocks.values())
            .filter(|b| b.clone_of.is_none())
            .map(CodeSize::code_size)
            .sum()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::print_program(self))
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::print_procedure(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_ids_order_naturally() {
        let mut ids: Vec<BlockId> = ["10", "9", "b", "11_t1", "2", "a"]
            .iter()
            .map(|s| BlockId::from(*s))
            .collect();
        ids.sort();
        let got: Vec<&str> = ids.iter().map(BlockId::as_str).collect();
        assert_eq!(got, ["2", "9", "10", "11_t1", "a", "b"]);
    }

    #[test]
    fn procedure_size_sums_blocks() {
        let mut p = Procedure {
            name: "f".into(),
            params: vec![],
            blocks: IndexMap::new(),
            entry: "1".into(),
            exit: "3".into(),
        };
        for (id, n) in [("1", 4), ("2", 1), ("3", 2)] {
            let mut b = Block::new(id, "f");
            b.instrs = (0..n).map(|_| Instr::Jump).collect();
            p.blocks.insert(b.id.clone(), b);
        }
        assert_eq!(p.code_size(), 7);
    }
}
