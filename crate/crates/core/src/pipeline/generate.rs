//! Seeded generator of small valid programs for property tests and the
//! `gen`/`check` commands.
//!
//! Loops are counted with small trip counts and every procedure gets a
//! budget of dynamic instructions, so generated programs finish well inside
//! the default fuel. Calls go only to later procedures unless `recursive`
//! is set, in which case a procedure may also call back to an earlier one
//! (never `main`) behind a depth counter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ir::{parse_program, Program};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub procs: usize,
    pub max_blocks: usize,
    pub call_density: f64,
    pub loop_prob: f64,
    pub recursive: bool,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            procs: 4,
            max_blocks: 12,
            call_density: 0.3,
            loop_prob: 0.3,
            recursive: false,
        }
    }
}

/// Dynamic instructions one procedure may cost, callees included.
const BUDGET: u64 = 20_000;
const MAX_TRIPS: u64 = 4;
const MAX_NEST: usize = 2;
const POOL: [&str; 4] = ["v0", "v1", "v2", "v3"];

struct Text {
    id: u32,
    lines: Vec<String>,
}

struct ProcGen<'a> {
    rng: &'a mut ChaCha8Rng,
    shape: &'a Shape,
    idx: usize,
    /// Cost of each later procedure.
    costs: &'a [u64],
    blocks: Vec<Text>,
    cur: usize,
    next_id: u32,
    cost: u64,
    fresh: usize,
    back_call_done: bool,
}

fn proc_name(i: usize) -> String {
    if i == 0 {
        "main".to_string()
    } else {
        format!("p{i}")
    }
}

impl ProcGen<'_> {
    fn open(&mut self) -> usize {
        self.blocks.push(Text {
            id: self.next_id,
            lines: Vec::new(),
        });
        self.next_id += 1;
        self.blocks.len() - 1
    }

    fn emit(&mut self, line: String, mult: u64) {
        self.cost += mult;
        self.blocks[self.cur].lines.push(line);
    }

    fn id(&self, b: usize) -> u32 {
        self.blocks[b].id
    }

    fn reg(&mut self) -> &'static str {
        POOL[self.rng.gen_range(0..POOL.len())]
    }

    fn operand(&mut self) -> String {
        if self.rng.gen_bool(0.4) {
            self.rng.gen_range(-9..10i64).to_string()
        } else {
            self.reg().to_string()
        }
    }

    fn arith(&mut self, mult: u64) {
        let dst = self.reg();
        let lhs = self.reg();
        let line = match self.rng.gen_range(0..7) {
            0 => format!("{dst} = add {lhs} {}", self.operand()),
            1 => format!("{dst} = sub {lhs} {}", self.operand()),
            2 => format!("{dst} = mul {lhs} {}", self.operand()),
            3 => format!("{dst} = div {lhs} {}", self.rng.gen_range(1..8)),
            4 => format!("{dst} = lt {lhs} {}", self.operand()),
            5 => format!("{dst} = eq {lhs} {}", self.operand()),
            _ => format!("{dst} = const {}", self.rng.gen_range(-20..21)),
        };
        self.emit(line, mult);
        if self.rng.gen_bool(0.1) {
            let r = self.reg();
            self.emit(format!("print {r}"), mult);
        }
    }

    fn jump_to_new(&mut self, mult: u64) -> usize {
        let b = self.open();
        let id = self.id(b);
        self.emit(format!("jump {id}"), mult);
        b
    }

    fn call(&mut self, callee: usize, depth_arg: &str, mult: u64) {
        let blk = self.jump_to_new(mult);
        self.cur = blk;
        let (dst, arg) = (self.reg(), self.reg());
        let name = proc_name(callee);
        self.emit(format!("{dst} = call {name}({arg}, {depth_arg})"), mult);
        let after = self.jump_to_new(mult);
        self.cur = after;
        self.cost += mult * self.costs.get(callee).copied().unwrap_or(0);
    }

    fn forward_target(&mut self, mult: u64) -> Option<usize> {
        let n = self.shape.procs;
        if self.idx + 1 >= n {
            return None;
        }
        let j = self.rng.gen_range(self.idx + 1..n);
        (self.cost + mult * (self.costs[j] + 2) <= BUDGET).then_some(j)
    }

    fn back_call(&mut self) {
        let j = self.rng.gen_range(1..=self.idx);
        self.fresh += 1;
        let (dm, g) = (format!("dm{}", self.fresh), format!("g{}", self.fresh));
        self.emit(format!("{dm} = sub d 1"), 1);
        self.emit(format!("{g} = lt 0 d"), 1);
        let call_blk = self.open();
        let skip = self.open();
        let (c, s) = (self.id(call_blk), self.id(skip));
        self.emit(format!("branch {g} {c} {s}"), 1);
        self.cur = call_blk;
        let (dst, arg) = (self.reg(), self.reg());
        self.emit(format!("{dst} = call {}({arg}, {dm})", proc_name(j)), 1);
        self.emit(format!("jump {s}"), 1);
        self.cur = skip;
        self.back_call_done = true;
    }

    fn segment(&mut self, nest: usize, mult: u64) {
        let roll: f64 = self.rng.gen();
        let can_grow = self.blocks.len() < self.shape.max_blocks;
        if can_grow && roll < self.shape.call_density {
            if self.shape.recursive && nest == 0 && self.idx > 0 && !self.back_call_done && self.rng.gen_bool(0.3) {
                self.back_call();
            } else if let Some(j) = self.forward_target(mult) {
                self.call(j, "d", mult);
            } else {
                self.arith(mult);
            }
        } else if can_grow && nest < MAX_NEST && roll < self.shape.call_density + self.shape.loop_prob {
            let trips = self.rng.gen_range(1..=MAX_TRIPS);
            self.fresh += 1;
            let (i, c) = (format!("i{}", self.fresh), format!("c{}", self.fresh));
            self.emit(format!("{i} = const 0"), mult);
            let head = self.jump_to_new(mult);
            self.cur = head;
            let inner = mult * (trips + 1);
            self.emit(format!("{c} = lt {i} {trips}"), inner);
            let body = self.open();
            let exit = self.open();
            let (b, x) = (self.id(body), self.id(exit));
            self.emit(format!("branch {c} {b} {x}"), inner);
            self.cur = body;
            let body_mult = mult * trips;
            for _ in 0..self.rng.gen_range(1..=2) {
                self.segment(nest + 1, body_mult);
            }
            self.emit(format!("{i} = add {i} 1"), body_mult);
            let h = self.id(head);
            self.emit(format!("jump {h}"), body_mult);
            self.cur = exit;
        } else if can_grow && roll < self.shape.call_density + self.shape.loop_prob + 0.25 {
            self.fresh += 1;
            let c = format!("c{}", self.fresh);
            let (a, b) = (self.reg(), self.operand());
            self.emit(format!("{c} = lt {a} {b}"), mult);
            let t = self.open();
            let f = self.open();
            let join = self.open();
            let (ti, fi, ji) = (self.id(t), self.id(f), self.id(join));
            self.emit(format!("branch {c} {ti} {fi}"), mult);
            for arm in [t, f] {
                self.cur = arm;
                for _ in 0..self.rng.gen_range(1..=2) {
                    self.arith(mult);
                }
                self.emit(format!("jump {ji}"), mult);
            }
            self.cur = join;
        } else {
            for _ in 0..self.rng.gen_range(1..=3) {
                self.arith(mult);
            }
        }
    }

    fn render(&self, params: &str) -> String {
        let mut s = format!("proc {}({params}) {{\n", proc_name(self.idx));
        for b in &self.blocks {
            s += &format!("block {}:\n", b.id);
            for l in &b.lines {
                s += &format!("  {l}\n");
            }
        }
        s + "}\n"
    }
}

/// Deterministic for a given `seed` and `shape`.
pub fn generate_program(seed: u64, shape: &Shape) -> Program {
    let shape = Shape {
        procs: shape.procs.max(1),
        max_blocks: shape.max_blocks.max(1),
        ..shape.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.procs;
    // every procedure but main gets one caller among the earlier ones
    let mut required: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 1..n {
        required[rng.gen_range(0..j)].push(j);
    }
    let mut costs = vec![0u64; n];
    let mut texts = vec![String::new(); n];
    for idx in (0..n).rev() {
        let mut g = ProcGen {
            rng: &mut rng,
            shape: &shape,
            idx,
            costs: &costs,
            blocks: Vec::new(),
            cur: 0,
            next_id: 1,
            cost: 0,
            fresh: 0,
            back_call_done: false,
        };
        g.cur = g.open();
        let (params, first) = if idx == 0 { ("n", "n") } else { ("a, d", "a") };
        g.emit(format!("v0 = add {first} 1"), 1);
        for r in &POOL[1..] {
            let v = g.rng.gen_range(-5..6);
            g.emit(format!("{r} = const {v}"), 1);
        }
        if idx == 0 {
            g.emit("d = const 2".into(), 1);
        }
        for j in required[idx].clone() {
            g.call(j, "d", 1);
        }
        let segments = g.rng.gen_range(1..=shape.max_blocks.div_ceil(2));
        for _ in 0..segments {
            g.segment(0, 1);
        }
        let (p, r) = (g.reg(), g.reg());
        g.emit(format!("print {p}"), 1);
        g.emit(format!("return {r}"), 1);
        let cost = g.cost;
        texts[idx] = g.render(params);
        costs[idx] = cost;
    }
    parse_program(&texts.concat()).expect("generated program is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::validate;
    use crate::profiler::{interpret, DEFAULT_FUEL};

    #[test]
    fn deterministic() {
        let s = Shape::default();
        assert_eq!(generate_program(7, &s), generate_program(7, &s));
        assert_ne!(generate_program(7, &s), generate_program(8, &s));
    }

    #[test]
    fn single_call_free_procedure() {
        let s = Shape {
            procs: 1,
            call_density: 0.0,
            ..Shape::default()
        };
        for seed in 0..20 {
            let p = generate_program(seed, &s);
            assert_eq!(p.procedures.len(), 1);
            assert_eq!(p.main().callsites().count(), 0);
        }
    }

    #[test]
    fn valid_and_terminating() {
        for recursive in [false, true] {
            let s = Shape {
                procs: 5,
                recursive,
                call_density: 0.4,
                ..Shape::default()
            };
            for seed in 0..200 {
                let p = generate_program(seed, &s);
                assert!(validate(&p).is_empty(), "seed {seed}");
                interpret(&p, &[seed as i64 % 13 - 6], DEFAULT_FUEL).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            }
        }
    }
}
