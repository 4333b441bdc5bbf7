use std::fmt::Write;

use super::{Block, Instr, Procedure, Program};

pub(super) fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for e in &p.externals {
        let _ = writeln!(out, "extern {e}");
    }
    // entry procedure first so that re-parsing picks the same entry
    let entry = p.procedures.get(&p.entry);
    for proc in entry
        .into_iter()
        .chain(p.procedures.values().filter(|q| q.name != p.entry))
    {
        out.push_str(&print_procedure(proc));
    }
    out
}

pub(super) fn print_procedure(p: &Procedure) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "proc {}({}) {{", p.name, p.params.join(", "));
    let entry = p.blocks.get(&p.entry);
    for b in entry
        .into_iter()
        .chain(p.blocks.values().filter(|b| b.id != p.entry))
    {
        print_block(&mut out, p, b);
    }
    out.push_str("}\n");
    out
}

fn print_block(out: &mut String, p: &Procedure, b: &Block) {
    let _ = write!(out, "block {}", b.id);
    if !b.weight.is_zero() {
        let _ = write!(out, " [weight {}]", b.weight);
    }
    if b.origin != p.name {
        let _ = write!(out, " [origin {}]", b.origin);
    }
    if let Some(c) = &b.clone_of {
        let _ = write!(out, " [clone_of {c}]");
    }
    out.push_str(":\n");
    for i in &b.instrs {
        out.push_str("  ");
        match i {
            Instr::Const { dst, value } => {
                let _ = write!(out, "{dst} = const {value}");
            }
            Instr::Bin { op, dst, lhs, rhs } => {
                let _ = write!(out, "{dst} = {} {lhs} {rhs}", op.mnemonic());
            }
            Instr::Move { dst, src } => {
                let _ = write!(out, "{dst} = move {src}");
            }
            Instr::Print { src } => {
                let _ = write!(out, "print {src}");
            }
            Instr::Call { dst, callee, args } => {
                let args: Vec<String> = args.iter().map(ToString::to_string).collect();
                let _ = write!(out, "{dst} = call {callee}({})", args.join(", "));
            }
            Instr::Branch { cond } => {
                let t = b.succs.first().map(ToString::to_string).unwrap_or_default();
                let f = b.succs.get(1).map(ToString::to_string).unwrap_or_default();
                let _ = write!(out, "branch {cond} {t} {f}");
            }
            Instr::Jump => {
                let t = b.succs.first().map(ToString::to_string).unwrap_or_default();
                let _ = write!(out, "jump {t}");
            }
            Instr::Return { value } => {
                let _ = write!(out, "return {value}");
            }
        }
        out.push('\n');
    }
}
