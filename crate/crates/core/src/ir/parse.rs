//! Line-oriented text format.
//!
//! ```text
//! # comment
//! extern helper
//! proc main(n) {
//! block 1 [weight 10]:
//!   r1 = const 5
//!   r2 = call f(r1, n)
//!   jump 2
//! block 2:
//!   return r2
//! }
//! ```
//!
//! The first block of a procedure is its entry. The program entry is `main`
//! when present, otherwise the first procedure.

use std::collections::{BTreeSet, HashSet};

use indexmap::IndexMap;

use super::{validate, BinOp, Block, BlockId, Diagnostic, Instr, Operand, Procedure, Program, Weight};

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:1: duplicate procedure `{name}`")]
    DuplicateProcedure { line: usize, name: String },
    #[error("{line}:1: duplicate block `{block}` in `{proc}`")]
    DuplicateBlock { line: usize, proc: String, block: String },
    #[error("undefined branch target `{target}` in `{proc}`")]
    UndefinedTarget { proc: String, target: String },
    #[error("undefined callee `{callee}` in `{proc}`")]
    UndefinedCallee { proc: String, callee: String },
    #[error("invalid program: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
}

struct Line<'a> {
    no: usize,
    text: &'a str,
}

impl<'a> Line<'a> {
    fn err(&self, at: &str, msg: impl Into<String>) -> ParseError {
        let col = self.text.find(at).map_or(1, |i| i + 1);
        ParseError::Syntax {
            line: self.no,
            col,
            msg: msg.into(),
        }
    }
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_block_id(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn operand(line: &Line, tok: &str) -> Result<Operand, ParseError> {
    if let Ok(v) = tok.parse::<i64>() {
        Ok(Operand::Imm(v))
    } else if is_ident(tok) {
        Ok(Operand::Reg(tok.to_string()))
    } else {
        Err(line.err(tok, format!("expected register or integer, found `{tok}`")))
    }
}

fn register(line: &Line, tok: &str) -> Result<String, ParseError> {
    if is_ident(tok) {
        Ok(tok.to_string())
    } else {
        Err(line.err(tok, format!("expected register, found `{tok}`")))
    }
}

fn block_id(line: &Line, tok: &str) -> Result<BlockId, ParseError> {
    if is_block_id(tok) {
        Ok(BlockId::new(tok))
    } else {
        Err(line.err(tok, format!("invalid block id `{tok}`")))
    }
}

/// Splits `name(a, b)` into the name and argument tokens.
fn call_syntax<'a>(line: &Line, s: &'a str) -> Result<(&'a str, Vec<&'a str>), ParseError> {
    let open = s.find('(').ok_or_else(|| line.err(s, "expected `(`"))?;
    let close = s.rfind(')').ok_or_else(|| line.err(s, "expected `)`"))?;
    if close < open || !s[close + 1..].trim().is_empty() {
        return Err(line.err(s, "malformed argument list"));
    }
    let name = s[..open].trim();
    let inner = s[open + 1..close].trim();
    let args = if inner.is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(str::trim).collect()
    };
    Ok((name, args))
}

/// Parses one instruction; returns branch targets for terminators.
fn instruction(line: &Line) -> Result<(Instr, Vec<BlockId>), ParseError> {
    let text = line.text.trim();
    if let Some((lhs, rhs)) = text.split_once('=') {
        let dst = register(line, lhs.trim())?;
        let rhs = rhs.trim();
        let (op, rest) = rhs.split_once(char::is_whitespace).unwrap_or((rhs, ""));
        let rest = rest.trim();
        let toks: Vec<&str> = rest.split_whitespace().collect();
        let instr = match op {
            "const" => {
                let [v] = toks[..] else {
                    return Err(line.err(rhs, "const takes one integer"));
                };
                let value = v
                    .parse()
                    .map_err(|_| line.err(v, format!("expected integer, found `{v}`")))?;
                Instr::Const { dst, value }
            }
            "move" => {
                let [v] = toks[..] else {
                    return Err(line.err(rhs, "move takes one operand"));
                };
                Instr::Move {
                    dst,
                    src: operand(line, v)?,
                }
            }
            "call" => {
                let (name, args) = call_syntax(line, rest)?;
                if !is_ident(name) {
                    return Err(line.err(name, format!("invalid procedure name `{name}`")));
                }
                let args = args
                    .into_iter()
                    .map(|a| operand(line, a))
                    .collect::<Result<_, _>>()?;
                Instr::Call {
                    dst,
                    callee: name.to_string(),
                    args,
                }
            }
            _ => {
                let op = match op {
                    "add" => BinOp::Add,
                    "sub" => BinOp::Sub,
                    "mul" => BinOp::Mul,
                    "div" => BinOp::Div,
                    "lt" => BinOp::Lt,
                    "eq" => BinOp::Eq,
                    other => return Err(line.err(other, format!("unknown opcode `{other}`"))),
                };
                let [a, b] = toks[..] else {
                    return Err(line.err(rhs, format!("{} takes two operands", op.mnemonic())));
                };
                Instr::Bin {
                    op,
                    dst,
                    lhs: operand(line, a)?,
                    rhs: operand(line, b)?,
                }
            }
        };
        return Ok((instr, Vec::new()));
    }
    let toks: Vec<&str> = text.split_whitespace().collect();
    match toks[..] {
        ["branch", c, t, f] => Ok((
            Instr::Branch {
                cond: operand(line, c)?,
            },
            vec![block_id(line, t)?, block_id(line, f)?],
        )),
        ["jump", t] => Ok((Instr::Jump, vec![block_id(line, t)?])),
        ["return", v] => Ok((
            Instr::Return {
                value: operand(line, v)?,
            },
            Vec::new(),
        )),
        ["print", v] => Ok((
            Instr::Print {
                src: operand(line, v)?,
            },
            Vec::new(),
        )),
        _ => Err(line.err(text, format!("unrecognized instruction `{text}`"))),
    }
}

/// `block ID [weight N] [origin P] [clone_of B]:`
fn block_header(line: &Line, proc: &str) -> Result<Block, ParseError> {
    let text = line.text.trim();
    let body = text
        .strip_prefix("block")
        .and_then(|s| s.strip_suffix(':'))
        .ok_or_else(|| line.err(text, "expected `block ID:`"))?
        .trim();
    let (id, mut attrs) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
    let mut block = Block::new(block_id(line, id)?, proc);
    loop {
        attrs = attrs.trim();
        if attrs.is_empty() {
            break;
        }
        let inner_end = attrs
            .strip_prefix('[')
            .and_then(|s| s.find(']'))
            .ok_or_else(|| line.err(attrs, "expected `[attribute value]`"))?;
        let inner = &attrs[1..=inner_end];
        let (key, value) = inner
            .trim()
            .split_once(char::is_whitespace)
            .ok_or_else(|| line.err(inner, "attribute needs a value"))?;
        let value = value.trim();
        match key {
            "weight" => {
                block.weight = value
                    .parse::<Weight>()
                    .map_err(|e| line.err(value, e.to_string()))?
            }
            "origin" if is_ident(value) => block.origin = value.to_string(),
            "clone_of" => block.clone_of = Some(block_id(line, value)?),
            _ => return Err(line.err(key, format!("unknown block attribute `{key}`"))),
        }
        attrs = &attrs[inner_end + 2..];
    }
    Ok(block)
}

/// `proc NAME(p1, p2) {`
fn proc_header(line: &Line) -> Result<(String, Vec<String>), ParseError> {
    let text = line.text.trim();
    let body = text
        .strip_prefix("proc")
        .and_then(|s| s.strip_suffix('{'))
        .ok_or_else(|| line.err(text, "expected `proc NAME(...) {`"))?
        .trim();
    let (name, params) = call_syntax(line, body)?;
    if !is_ident(name) {
        return Err(line.err(name, format!("invalid procedure name `{name}`")));
    }
    let params = params
        .into_iter()
        .map(|p| register(line, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((name.to_string(), params))
}

struct ProcBuilder {
    name: String,
    params: Vec<String>,
    blocks: IndexMap<BlockId, Block>,
    current: Option<Block>,
    terminated: bool,
}

impl ProcBuilder {
    fn finish_block(&mut self, line: &Line) -> Result<(), ParseError> {
        if let Some(b) = self.current.take() {
            if !self.terminated {
                return Err(line.err(
                    line.text.trim(),
                    format!("block `{}` does not end in branch, jump or return", b.id),
                ));
            }
            if self.blocks.contains_key(&b.id) {
                return Err(ParseError::DuplicateBlock {
                    line: line.no,
                    proc: self.name.clone(),
                    block: b.id.to_string(),
                });
            }
            self.blocks.insert(b.id.clone(), b);
        }
        Ok(())
    }

    fn finish(self) -> Result<Procedure, ParseError> {
        let entry = self
            .blocks
            .keys()
            .next()
            .cloned()
            .ok_or_else(|| ParseError::Syntax {
                line: 0,
                col: 1,
                msg: format!("procedure `{}` has no blocks", self.name),
            })?;
        for b in self.blocks.values() {
            if let Some(t) = b.succs.iter().find(|s| !self.blocks.contains_key(*s)) {
                return Err(ParseError::UndefinedTarget {
                    proc: self.name.clone(),
                    target: t.to_string(),
                });
            }
        }
        let exit = self
            .blocks
            .values()
            .find(|b| b.succs.is_empty() && b.clone_of.is_none())
            .or_else(|| self.blocks.values().find(|b| b.succs.is_empty()))
            .map(|b| b.id.clone())
            .unwrap_or_else(|| entry.clone());
        Ok(Procedure {
            name: self.name,
            params: self.params,
            blocks: self.blocks,
            entry,
            exit,
        })
    }
}

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut procedures: IndexMap<String, Procedure> = IndexMap::new();
    let mut externals = BTreeSet::new();
    let mut current: Option<ProcBuilder> = None;
    let mut last_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let stripped = raw.split('#').next().unwrap_or("");
        let line = Line {
            no: i + 1,
            text: stripped,
        };
        last_line = line.no;
        let t = stripped.trim();
        if t.is_empty() {
            continue;
        }
        match current.as_mut() {
            None => {
                if let Some(name) = t.strip_prefix("extern ") {
                    let name = name.trim();
                    if !is_ident(name) {
                        return Err(line.err(name, format!("invalid procedure name `{name}`")));
                    }
                    externals.insert(name.to_string());
                } else {
                    let (name, params) = proc_header(&line)?;
                    if procedures.contains_key(&name) || externals.contains(&name) {
                        return Err(ParseError::DuplicateProcedure { line: line.no, name });
                    }
                    current = Some(ProcBuilder {
                        name,
                        params,
                        blocks: IndexMap::new(),
                        current: None,
                        terminated: false,
                    });
                }
            }
            Some(pb) => {
                if t == "}" {
                    pb.finish_block(&line)?;
                    let pb = current.take().expect("inside a procedure");
                    if procedures.contains_key(&pb.name) {
                        return Err(ParseError::DuplicateProcedure {
                            line: line.no,
                            name: pb.name,
                        });
                    }
                    let p = pb.finish()?;
                    procedures.insert(p.name.clone(), p);
                } else if t.starts_with("block ") || t.starts_with("block\t") {
                    pb.finish_block(&line)?;
                    pb.current = Some(block_header(&line, &pb.name)?);
                    pb.terminated = false;
                } else {
                    let Some(block) = pb.current.as_mut() else {
                        return Err(line.err(t, "instruction outside of a block"));
                    };
                    if pb.terminated {
                        return Err(line.err(t, "instruction after block terminator"));
                    }
                    let (instr, targets) = instruction(&line)?;
                    pb.terminated = instr.is_terminator();
                    block.succs = targets;
                    block.instrs.push(instr);
                }
            }
        }
    }
    if current.is_some() {
        return Err(ParseError::Syntax {
            line: last_line + 1,
            col: 1,
            msg: "unexpected end of input: missing `}`".into(),
        });
    }

    let defined: HashSet<&str> = procedures
        .keys()
        .map(String::as_str)
        .chain(externals.iter().map(String::as_str))
        .collect();
    for p in procedures.values() {
        if let Some((_, callee)) = p.callsites().find(|(_, c)| !defined.contains(c)) {
            return Err(ParseError::UndefinedCallee {
                proc: p.name.clone(),
                callee: callee.to_string(),
            });
        }
    }

    let entry = if procedures.contains_key("main") {
        "main".to_string()
    } else {
        procedures.keys().next().cloned().ok_or(ParseError::Syntax {
            line: 1,
            col: 1,
            msg: "program has no procedures".into(),
        })?
    };
    let program = Program {
        procedures,
        externals,
        entry,
    };
    let diags = validate(&program);
    if diags.is_empty() {
        Ok(program)
    } else {
        Err(ParseError::Invalid(diags))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let p = parse_program("proc main() {\nblock 1:\n  return 0\n}\n").unwrap();
        assert_eq!(p.procedures.len(), 1);
        assert_eq!(p.block_count(), 1);
        assert_eq!(p.entry, "main");
    }

    #[test]
    fn undefined_callee_is_rejected() {
        let src = "proc main() {\nblock 1:\n  r = call nope()\n  jump 2\nblock 2:\n  return r\n}\n";
        let err = parse_program(src).unwrap_err();
        assert!(err.to_string().contains("undefined callee"), "{err}");
    }

    #[test]
    fn undefined_target_is_rejected() {
        let src = "proc main() {\nblock 1:\n  jump 9\n}\n";
        assert!(matches!(
            parse_program(src),
            Err(ParseError::UndefinedTarget { .. })
        ));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let dup_block = "proc main() {\nblock 1:\n  jump 1\nblock 1:\n  return 0\n}\n";
        assert!(matches!(
            parse_program(dup_block),
            Err(ParseError::DuplicateBlock { .. })
        ));
        let dup_proc = "proc f() {\nblock 1:\n  return 0\n}\nproc f() {\nblock 1:\n  return 0\n}\n";
        assert!(matches!(
            parse_program(dup_proc),
            Err(ParseError::DuplicateProcedure { .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let src = "proc main() {\nblock 1:\n  r1 = frob 1 2\n  return r1\n}\n";
        match parse_program(src) {
            Err(ParseError::Syntax { line, col, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(col, 8);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn attributes_and_comments() {
        let src = "# header\nextern ext\nproc main() { # trailing\nblock 1 [weight 7/2] [origin g]:\n  r = call ext(1)\n  jump 2\nblock 2 [weight 3]:\n  return r\n}\n";
        let p = parse_program(src).unwrap();
        let b = p.main().block(&"1".into()).unwrap();
        assert_eq!(b.weight.to_string(), "7/2");
        assert_eq!(b.origin, "g");
        assert!(p.externals.contains("ext"));
    }
}
