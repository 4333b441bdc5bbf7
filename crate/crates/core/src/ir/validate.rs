use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use super::{BlockId, Instr, Procedure, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    MissingEntryProcedure,
    UndefinedCallee,
    UnknownSuccessor,
    SuccessorArity,
    MultipleEntries,
    EntryHasPredecessors,
    MultipleExits,
    NoExit,
    Unreachable,
    TerminatorPlacement,
    CallPlacement,
}

impl DiagnosticKind {
    pub fn label(self) -> &'static str {
        match self {
            DiagnosticKind::MissingEntryProcedure => "missing entry procedure",
            DiagnosticKind::UndefinedCallee => "undefined callee",
            DiagnosticKind::UnknownSuccessor => "unknown successor",
            DiagnosticKind::SuccessorArity => "successor arity",
            DiagnosticKind::MultipleEntries => "multiple entries",
            DiagnosticKind::EntryHasPredecessors => "entry has predecessors",
            DiagnosticKind::MultipleExits => "multiple exits",
            DiagnosticKind::NoExit => "no exit",
            DiagnosticKind::Unreachable => "unreachable block",
            DiagnosticKind::TerminatorPlacement => "terminator placement",
            DiagnosticKind::CallPlacement => "call placement",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// `proc` or `proc.block`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.kind.label(), self.location, self.message)
    }
}

struct Sink(Vec<Diagnostic>);

impl Sink {
    fn push(&mut self, kind: DiagnosticKind, location: String, message: impl Into<String>) {
        self.0.push(Diagnostic {
            kind,
            location,
            message: message.into(),
        });
    }
}

/// Checks every structural invariant of the IR. An empty result means the
/// program is well formed.
pub fn validate(program: &Program) -> Vec<Diagnostic> {
    let mut sink = Sink(Vec::new());
    if !program.procedures.contains_key(&program.entry) {
        sink.push(
            DiagnosticKind::MissingEntryProcedure,
            program.entry.clone(),
            "entry procedure is not defined",
        );
    }
    for p in program.procedures.values() {
        validate_procedure(program, p, &mut sink);
    }
    sink.0
}

fn validate_procedure(program: &Program, p: &Procedure, sink: &mut Sink) {
    let loc = |b: &BlockId| format!("{}.{}", p.name, b);

    for b in p.blocks.values() {
        if b.succs.len() > 2 {
            sink.push(
                DiagnosticKind::SuccessorArity,
                loc(&b.id),
                format!("{} successors, at most 2 allowed", b.succs.len()),
            );
        }
        for s in &b.succs {
            if !p.blocks.contains_key(s) {
                sink.push(DiagnosticKind::UnknownSuccessor, loc(&b.id), format!("successor `{s}`"));
            }
        }
        for (i, instr) in b.instrs.iter().enumerate() {
            let last = i + 1 == b.instrs.len();
            if instr.is_terminator() && !last {
                sink.push(
                    DiagnosticKind::TerminatorPlacement,
                    loc(&b.id),
                    format!("terminator at position {i} is not last"),
                );
            }
            if let Instr::Call { callee, .. } = instr {
                if !program.procedures.contains_key(callee) && !program.externals.contains(callee) {
                    sink.push(DiagnosticKind::UndefinedCallee, loc(&b.id), format!("`{callee}`"));
                }
            }
        }
        let arity_ok = match b.instrs.last() {
            Some(Instr::Branch { .. }) => b.succs.len() == 2,
            Some(Instr::Jump) => b.succs.len() == 1,
            Some(Instr::Return { .. }) => b.succs.is_empty(),
            _ => false,
        };
        if !arity_ok {
            sink.push(
                DiagnosticKind::TerminatorPlacement,
                loc(&b.id),
                "block must end in a terminator matching its successor count",
            );
        }
        let calls = b
            .instrs
            .iter()
            .filter(|i| matches!(i, Instr::Call { .. }))
            .count();
        if calls > 0
            && !(calls == 1
                && b.instrs.len() == 2
                && matches!(b.instrs[0], Instr::Call { .. })
                && matches!(b.instrs[1], Instr::Jump))
        {
            sink.push(
                DiagnosticKind::CallPlacement,
                loc(&b.id),
                "a call block holds exactly one call followed by a jump",
            );
        }
    }

    let preds = p.preds();
    let roots: Vec<&BlockId> = preds
        .iter()
        .filter(|(_, ps)| ps.is_empty())
        .map(|(b, _)| b)
        .collect();
    if roots.len() > 1 {
        let names: Vec<String> = roots.iter().map(ToString::to_string).collect();
        sink.push(
            DiagnosticKind::MultipleEntries,
            p.name.clone(),
            format!("blocks without predecessors: {}", names.join(", ")),
        );
    }
    match preds.get(&p.entry) {
        None => sink.push(
            DiagnosticKind::UnknownSuccessor,
            p.name.clone(),
            format!("entry block `{}` does not exist", p.entry),
        ),
        Some(ps) if !ps.is_empty() => sink.push(
            DiagnosticKind::EntryHasPredecessors,
            loc(&p.entry),
            "entry block has predecessors",
        ),
        _ => {}
    }

    // Tail duplication may copy the exit block; copies of the exit count as
    // the same logical exit.
    let exits: Vec<&BlockId> = p
        .blocks
        .values()
        .filter(|b| b.succs.is_empty() && b.clone_of.as_ref() != Some(&p.exit))
        .map(|b| &b.id)
        .collect();
    match exits.as_slice() {
        [] => sink.push(DiagnosticKind::NoExit, p.name.clone(), "no block without successors"),
        [only] if **only == p.exit => {}
        _ => {
            let names: Vec<String> = exits.iter().map(ToString::to_string).collect();
            sink.push(
                DiagnosticKind::MultipleExits,
                p.name.clone(),
                format!("exit is `{}`, blocks without successors: {}", p.exit, names.join(", ")),
            );
        }
    }

    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    if p.blocks.contains_key(&p.entry) {
        seen.insert(p.entry.clone());
        queue.push_back(p.entry.clone());
    }
    while let Some(b) = queue.pop_front() {
        for s in &p.blocks[&b].succs {
            if p.blocks.contains_key(s) && seen.insert(s.clone()) {
                queue.push_back(s.clone());
            }
        }
    }
    for b in p.blocks.keys().filter(|b| !seen.contains(*b)) {
        sink.push(DiagnosticKind::Unreachable, loc(b), "not reachable from the entry block");
    }
}
