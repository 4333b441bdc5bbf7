//! Region formation with inlining decided at callsites as growth reaches
//! them.
//!
//! Formation starts in `main`. When a growing region reaches a call that
//! passes the gates, the callee is copied into the host procedure and
//! partitioned recursively; its entry and exit regions come back and are
//! spliced into the caller's regions, while its other regions are final.
//! Procedures that still have callers afterwards are partitioned on their
//! own.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::heuristics::{order_procedures, FirstOrderPolicy, GrowthState, HeuristicCombo, Reason};
use crate::inliner::{inline_into, CalleeTable, Callsite, InlineRecord, SiteMode};
use crate::ir::{BlockId, CodeSize, Procedure, Program, Weight};
use crate::region::{
    finish_tail_duplication, is_desirable, most_frequent, select_seed, Region, RegionKind, RegionParams, RegionSet,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RegionClassification {
    pub entry_region: usize,
    pub exit_region: usize,
    pub pass_through: bool,
    pub locals: Vec<usize>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("block `{0}` is not covered by the regions")]
    Uncovered(BlockId),
}

/// Entry, exit and local regions of one procedure instance.
pub fn classify_regions(
    blocks: &[BlockId],
    entry: &BlockId,
    exit: &BlockId,
    regions: &[Region],
) -> Result<RegionClassification, ClassifyError> {
    let find = |b: &BlockId| {
        regions
            .iter()
            .find(|r| r.contains(b))
            .map(|r| r.id)
            .ok_or_else(|| ClassifyError::Uncovered(b.clone()))
    };
    for b in blocks {
        find(b)?;
    }
    let entry_region = find(entry)?;
    let exit_region = find(exit)?;
    let locals = regions
        .iter()
        .map(|r| r.id)
        .filter(|id| *id != entry_region && *id != exit_region)
        .collect();
    Ok(RegionClassification {
        entry_region,
        exit_region,
        pass_through: entry_region == exit_region,
        locals,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    EnterProcedure {
        proc: String,
        size: usize,
    },
    LeaveProcedure {
        proc: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        classification: Option<RegionClassification>,
    },
    RegionCompleted {
        region: usize,
        blocks: Vec<String>,
    },
    InlinePerformed {
        caller: String,
        block: String,
        callee: String,
    },
    InlineRefused {
        caller: String,
        block: String,
        callee: String,
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SeqEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FormationTrace {
    pub events: Vec<SeqEvent>,
    /// Σ sizes of open procedures after each enter or leave.
    pub live_size_samples: Vec<usize>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("leave of `{0}` without a matching enter")]
    Unbalanced(String),
    #[error("{0} procedures still open at the end of the trace")]
    Unclosed(usize),
}

impl FormationTrace {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("trace serializes")
    }

    /// Procedures that received an inlined copy, with multiplicity.
    pub fn inlined_callees(&self) -> Vec<&str> {
        self.events
            .iter()
            .filter_map(|e| match &e.event {
                TraceEvent::InlinePerformed { callee, .. } => Some(callee.as_str()),
                _ => None,
            })
            .collect()
    }
}

/// Largest total size of procedures open at once, replayed from the
/// enter/leave events.
pub fn peak_live_size(trace: &FormationTrace) -> Result<usize, TraceError> {
    let mut open: Vec<(&str, usize)> = Vec::new();
    let mut peak = 0;
    for e in &trace.events {
        match &e.event {
            TraceEvent::EnterProcedure { proc, size } => {
                open.push((proc, *size));
                peak = peak.max(open.iter().map(|(_, s)| s).sum());
            }
            TraceEvent::LeaveProcedure { proc, .. } => match open.pop() {
                Some((p, _)) if p == proc => {}
                _ => return Err(TraceError::Unbalanced(proc.clone())),
            },
            _ => {}
        }
    }
    if !open.is_empty() {
        return Err(TraceError::Unclosed(open.len()));
    }
    Ok(peak)
}

#[derive(Clone, Debug)]
pub struct DemandOutput {
    pub program: Program,
    pub regions: RegionSet,
    pub trace: FormationTrace,
    pub inlined: Vec<InlineRecord>,
}

struct RState {
    blocks: Vec<BlockId>,
    seed: BlockId,
    entry: BlockId,
    kind: Option<RegionKind>,
}

struct Scope {
    proc: String,
    blocks: Vec<BlockId>,
    entry: BlockId,
    exit: BlockId,
}

struct Engine<'a> {
    src: &'a Program,
    work: Program,
    combo: &'a HeuristicCombo,
    params: &'a RegionParams,
    table: CalleeTable,
    original: usize,
    host: String,
    arena: Vec<Option<RState>>,
    owner: HashMap<BlockId, usize>,
    open: Vec<(String, usize)>,
    trace: FormationTrace,
    inlined: Vec<InlineRecord>,
    inline_count: BTreeMap<String, usize>,
    /// Finished regions per host procedure.
    done: BTreeMap<String, Vec<usize>>,
}

enum Splice {
    Refused,
    Done { entry_r: usize, exit_r: usize, exit: BlockId },
}

impl<'a> Engine<'a> {
    fn proc(&self) -> &Procedure {
        &self.work.procedures[&self.host]
    }

    fn weight(&self, b: &BlockId) -> Weight {
        self.proc().blocks[b].weight.clone()
    }

    fn emit(&mut self, event: TraceEvent) {
        let seq = self.trace.events.len() as u64;
        self.trace.events.push(SeqEvent { seq, event });
    }

    fn sample(&mut self) {
        let s = self.open.iter().map(|(_, s)| s).sum();
        self.trace.live_size_samples.push(s);
    }

    fn region(&mut self, i: usize) -> &mut RState {
        self.arena[i].as_mut().expect("live region")
    }

    fn new_region(&mut self, seed: BlockId) -> usize {
        let i = self.arena.len();
        self.owner.insert(seed.clone(), i);
        self.arena.push(Some(RState {
            blocks: vec![seed.clone()],
            entry: seed.clone(),
            seed,
            kind: None,
        }));
        i
    }

    fn add(&mut self, r: usize, b: BlockId) {
        self.owner.insert(b.clone(), r);
        self.region(r).blocks.push(b);
    }

    /// Moves every block of `from` into `into`.
    fn absorb(&mut self, into: usize, from: usize) {
        if into == from {
            return;
        }
        let src = self.arena[from].take().expect("live region");
        for b in &src.blocks {
            self.owner.insert(b.clone(), into);
        }
        let dst = self.region(into);
        dst.blocks.extend(src.blocks);
        if dst.kind.is_none() {
            dst.kind = src.kind;
        }
    }

    fn len(&self, r: usize) -> usize {
        self.arena[r].as_ref().map_or(0, |s| s.blocks.len())
    }

    fn desirable(&self, x: &BlockId, y: &BlockId, seed_w: &Weight) -> bool {
        let r = self.owner[x];
        is_desirable(&self.weight(x), &self.weight(y), seed_w, self.len(r), self.params)
    }

    fn finalize(&mut self, r: usize, kind: RegionKind) {
        let host = self.host.clone();
        let s = self.region(r);
        if s.kind.is_none() {
            s.kind = Some(kind);
        }
        let blocks = s.blocks.iter().map(|b| format!("{host}.{b}")).collect();
        self.done.entry(self.host.clone()).or_default().push(r);
        self.emit(TraceEvent::RegionCompleted { region: r, blocks });
    }

    /// Inlines the call at `y` if allowed and partitions the copy.
    fn try_splice(&mut self, y: &BlockId, seed_w: Option<&Weight>) -> Splice {
        let site = Callsite::at(&self.work, &self.host, y).expect("call block");
        let reason = if self.open.iter().any(|(p, _)| *p == site.callee) {
            // never descend into a procedure that is already open
            Reason::RecursiveBlocked
        } else if self.src.proc(&site.callee).is_none() {
            Reason::External
        } else {
            let growth = GrowthState {
                original: self.original,
                current: self.work.size_without_clones(),
            };
            self.table
                .eligibility(&self.work, &site, &self.combo.second, growth, seed_w)
                .reason
        };
        if reason != Reason::Ok {
            self.emit(TraceEvent::InlineRefused {
                caller: site.caller.clone(),
                block: site.block.to_string(),
                callee: site.callee.clone(),
                reason: reason.to_string(),
            });
            return Splice::Refused;
        }
        let callee = self.src.procedures[&site.callee].clone();
        let host = self.work.procedures.get_mut(&self.host).expect("host");
        let res = inline_into(host, y, &callee, SiteMode::Keep).expect("eligible site inlines");
        self.emit(TraceEvent::InlinePerformed {
            caller: site.caller.clone(),
            block: site.block.to_string(),
            callee: site.callee.clone(),
        });
        *self.inline_count.entry(site.callee.clone()).or_default() += 1;
        self.inlined.push(InlineRecord {
            callee_size: callee.code_size(),
            site: site.clone(),
        });
        let scope = Scope {
            proc: site.callee.clone(),
            blocks: res.copies().cloned().collect(),
            entry: res.entry.clone(),
            exit: res.exit.clone(),
        };
        let (entry_r, exit_r) = self.form(scope, false).expect("callee returns its boundary regions");
        Splice::Done {
            entry_r,
            exit_r,
            exit: res.exit,
        }
    }

    fn form(&mut self, scope: Scope, isolated: bool) -> Option<(usize, usize)> {
        let size = self.src.proc(&scope.proc).map_or(0, CodeSize::code_size);
        self.open.push((scope.proc.clone(), size));
        self.emit(TraceEvent::EnterProcedure {
            proc: scope.proc.clone(),
            size,
        });
        self.sample();

        let mut wl: BTreeSet<BlockId> = scope.blocks.iter().cloned().collect();
        let mut rlist: Vec<usize> = Vec::new();
        while let Ok(s) = select_seed(self.proc(), &wl) {
            wl.remove(&s);
            let seed_w = self.weight(&s);
            let a = self.new_region(s.clone());
            let mut iter = vec![a];
            let mut succ_x = s.clone();
            if self.proc().blocks[&s].is_call() {
                if let Splice::Done { entry_r, exit_r, exit } = self.try_splice(&s, None) {
                    self.absorb(a, entry_r);
                    if entry_r != exit_r {
                        iter.push(exit_r);
                    }
                    succ_x = exit;
                }
            }

            // successor path
            let mut x = succ_x;
            loop {
                let Some(y) = most_frequent(self.proc(), self.proc().blocks[&x].succs.iter()) else { break };
                if !wl.contains(&y) || !self.desirable(&x, &y, &seed_w) {
                    break;
                }
                let rx = self.owner[&x];
                if self.proc().blocks[&y].is_call() {
                    match self.try_splice(&y, Some(&seed_w)) {
                        Splice::Refused => break,
                        Splice::Done { entry_r, exit_r, exit } => {
                            wl.remove(&y);
                            self.add(rx, y);
                            self.absorb(rx, entry_r);
                            if entry_r != exit_r {
                                iter.push(exit_r);
                            }
                            x = exit;
                        }
                    }
                } else {
                    wl.remove(&y);
                    self.add(rx, y.clone());
                    x = y;
                }
            }

            // predecessor path, mirroring the successor path
            let mut x = s.clone();
            loop {
                let preds = self.proc().preds();
                let Some(y) = most_frequent(self.proc(), preds[&x].iter()) else { break };
                if !wl.contains(&y) || !self.desirable(&x, &y, &seed_w) {
                    break;
                }
                let rx = self.owner[&x];
                if self.proc().blocks[&y].is_call() {
                    match self.try_splice(&y, Some(&seed_w)) {
                        Splice::Refused => break,
                        Splice::Done { entry_r, exit_r, .. } => {
                            wl.remove(&y);
                            if entry_r != exit_r {
                                let head = self.arena[exit_r].as_ref().expect("exit region").entry.clone();
                                self.absorb(rx, exit_r);
                                self.region(rx).entry = head;
                                self.add(entry_r, y.clone());
                                self.region(entry_r).entry = y.clone();
                                iter.push(entry_r);
                            } else {
                                self.absorb(rx, entry_r);
                                self.add(rx, y.clone());
                                self.region(rx).entry = y.clone();
                            }
                            x = y;
                        }
                    }
                } else {
                    wl.remove(&y);
                    self.add(rx, y.clone());
                    self.region(rx).entry = y.clone();
                    x = y;
                }
            }

            // desirable successors of everything gathered so far
            let mut stack: Vec<BlockId> = iter
                .iter()
                .filter_map(|r| self.arena[*r].as_ref())
                .flat_map(|r| r.blocks.iter().cloned())
                .collect();
            while let Some(x) = stack.pop() {
                let succs = self.proc().blocks[&x].succs.clone();
                for y in succs {
                    if !wl.contains(&y) || !self.desirable(&x, &y, &seed_w) {
                        continue;
                    }
                    let rx = self.owner[&x];
                    if self.proc().blocks[&y].is_call() {
                        if let Splice::Done { entry_r, exit_r, exit } = self.try_splice(&y, Some(&seed_w)) {
                            wl.remove(&y);
                            self.add(rx, y);
                            self.absorb(rx, entry_r);
                            if entry_r != exit_r {
                                iter.push(exit_r);
                            }
                            stack.push(exit);
                        }
                    } else {
                        wl.remove(&y);
                        self.add(rx, y.clone());
                        stack.push(y);
                    }
                }
            }
            rlist.extend(iter.into_iter().filter(|r| self.arena[*r].is_some()));
        }

        let rlist: Vec<usize> = rlist.into_iter().filter(|r| self.arena[*r].is_some()).collect();
        let ret = if isolated {
            for r in rlist {
                self.finalize(r, RegionKind::Local);
            }
            self.emit(TraceEvent::LeaveProcedure {
                proc: scope.proc.clone(),
                classification: None,
            });
            None
        } else {
            let entry_r = self.owner[&scope.entry];
            let exit_r = self.owner[&scope.exit];
            let locals: Vec<usize> = rlist.iter().copied().filter(|r| *r != entry_r && *r != exit_r).collect();
            for r in &locals {
                self.finalize(*r, RegionKind::Local);
            }
            if entry_r == exit_r {
                let s = self.region(entry_r);
                s.kind.get_or_insert(RegionKind::PassThrough);
            } else {
                self.region(entry_r).kind.get_or_insert(RegionKind::Entry);
                self.region(exit_r).kind.get_or_insert(RegionKind::Exit);
            }
            self.emit(TraceEvent::LeaveProcedure {
                proc: scope.proc.clone(),
                classification: Some(RegionClassification {
                    entry_region: entry_r,
                    exit_region: exit_r,
                    pass_through: entry_r == exit_r,
                    locals,
                }),
            });
            Some((entry_r, exit_r))
        };
        self.open.pop();
        self.sample();
        ret
    }

    fn run_host(&mut self, name: &str) {
        self.host = name.to_string();
        self.owner.clear();
        let p = self.proc();
        let scope = Scope {
            proc: name.to_string(),
            blocks: p.blocks.keys().cloned().collect(),
            entry: p.entry.clone(),
            exit: p.exit.clone(),
        };
        self.form(scope, true);
    }

    /// Procedures other than `main` that had a site inlined and are no
    /// longer called from any live procedure.
    fn dead(&self) -> BTreeSet<String> {
        let mut dead = BTreeSet::new();
        loop {
            let before = dead.len();
            for (name, n) in &self.inline_count {
                if *n == 0 || *name == self.work.entry || dead.contains(name) {
                    continue;
                }
                let called = self.work.procedures.values().any(|p| {
                    p.name != *name && !dead.contains(&p.name) && p.callsites().any(|(_, c)| c == name)
                });
                if !called {
                    dead.insert(name.clone());
                }
            }
            if dead.len() == before {
                return dead;
            }
        }
    }
}

/// Demand-driven formation over `program`, whose block weights must be set.
pub fn form_regions_demand(program: &Program, combo: &HeuristicCombo, params: &RegionParams) -> DemandOutput {
    let mut e = Engine {
        src: program,
        work: program.clone(),
        combo,
        params,
        table: CalleeTable::new(program, combo.second.loop_depth_weight),
        original: program.size_without_clones(),
        host: program.entry.clone(),
        arena: Vec::new(),
        owner: HashMap::new(),
        open: Vec::new(),
        trace: FormationTrace::default(),
        inlined: Vec::new(),
        inline_count: BTreeMap::new(),
        done: BTreeMap::new(),
    };
    let order = order_procedures(program, combo.first, None)
        .or_else(|_| order_procedures(program, FirstOrderPolicy::None, None))
        .expect("name order needs no profile");

    let main = program.entry.clone();
    e.run_host(&main);
    let mut processed: BTreeSet<String> = BTreeSet::from([main.clone()]);
    loop {
        let dead = e.dead();
        let next = order
            .iter()
            .find(|f| !processed.contains(*f) && !dead.contains(*f))
            .cloned();
        let Some(f) = next else { break };
        processed.insert(f.clone());
        e.run_host(&f);
    }
    for f in e.dead() {
        e.work.procedures.shift_remove(&f);
        e.done.remove(&f);
    }

    let mut regions = RegionSet::default();
    let mut next_id = e.arena.len();
    let hosts: Vec<String> = e.work.procedures.keys().cloned().collect();
    for host in hosts {
        let list: Vec<Region> = e
            .done
            .get(&host)
            .into_iter()
            .flatten()
            .filter_map(|i| {
                let s = e.arena[*i].as_ref()?;
                Some(Region {
                    id: *i,
                    proc: host.clone(),
                    blocks: s.blocks.clone(),
                    seed: s.seed.clone(),
                    entry: s.entry.clone(),
                    kind: s.kind.unwrap_or(RegionKind::Local),
                })
            })
            .collect();
        let (p, list) = finish_tail_duplication(&e.work.procedures[&host], list, params, &mut next_id);
        e.work.procedures.insert(host.clone(), p);
        regions.regions.extend(list);
    }
    DemandOutput {
        program: e.work,
        regions,
        trace: e.trace,
        inlined: e.inlined,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristics::{combo_config, ComboName};
    use crate::ir::{parse_program, validate};
    use crate::profiler::{interpret, DEFAULT_FUEL};
    use crate::region::form_regions_phased;

    const NESTED_CALLS: &str = include_str!("../fixtures/nested_calls.ir");
    const G_PASS_THROUGH: &str = include_str!("../fixtures/g_pass_through.ir");

    fn ids(v: &[&str]) -> BTreeSet<BlockId> {
        v.iter().map(|s| BlockId::from(*s)).collect()
    }

    /// Original (non-clone) blocks per region, empty sets dropped.
    fn originals(out: &DemandOutput) -> BTreeSet<(String, BTreeSet<BlockId>)> {
        out.regions
            .regions
            .iter()
            .map(|r| {
                let p = &out.program.procedures[&r.proc];
                let set = r.blocks.iter().filter(|b| p.blocks[*b].clone_of.is_none()).cloned().collect();
                (r.proc.clone(), set)
            })
            .filter(|(_, s): &(String, BTreeSet<BlockId>)| !s.is_empty())
            .collect()
    }

    fn run(src: &str, combo: ComboName) -> DemandOutput {
        let p = parse_program(src).unwrap();
        let mut c = HeuristicCombo::new(combo);
        c.strategy = crate::heuristics::Strategy::Demand;
        form_regions_demand(&p, &c, &RegionParams::default())
    }

    #[test]
    fn g_pass_through_splices_pass_through_region() {
        let out = run(G_PASS_THROUGH, ComboName::H3);
        let want: BTreeSet<(String, BTreeSet<BlockId>)> = [
            ids(&["1", "2", "3", "4", "5", "7", "8", "10", "11"]),
            ids(&["6"]),
            ids(&["9"]),
        ]
        .into_iter()
        .map(|s| ("F".to_string(), s))
        .collect();
        assert_eq!(originals(&out), want);
        let big = out.regions.regions.iter().find(|r| r.contains(&BlockId::from("4"))).unwrap();
        assert_eq!(big.seed, BlockId::from("2"));
        assert_eq!(big.entry, BlockId::from("1"));
        assert_eq!(big.kind, RegionKind::PassThrough);
        // G was inlined at its only site and is gone
        assert!(out.program.proc("G").is_none());
        out.regions.check_partition(&out.program).unwrap();
        assert!(validate(&out.program).is_empty());
    }

    #[test]
    fn g_pass_through_local_regions_complete_before_leave() {
        let out = run(G_PASS_THROUGH, ComboName::H3);
        let ev: Vec<&TraceEvent> = out.trace.events.iter().map(|e| &e.event).collect();
        let leave_g = ev
            .iter()
            .position(|e| matches!(e, TraceEvent::LeaveProcedure { proc, .. } if proc == "G"))
            .unwrap();
        let local_9 = ev
            .iter()
            .position(|e| matches!(e, TraceEvent::RegionCompleted { blocks, .. } if blocks == &vec!["F.9".to_string()]))
            .unwrap();
        assert!(local_9 < leave_g);
        let TraceEvent::LeaveProcedure { classification: Some(c), .. } = ev[leave_g] else { panic!() };
        assert!(c.pass_through);
        assert_eq!(c.locals.len(), 1);
    }

    #[test]
    fn nested_calls_classification() {
        let out = run(NESTED_CALLS, ComboName::H3);
        let leave = |name: &str| {
            out.trace
                .events
                .iter()
                .find_map(|e| match &e.event {
                    TraceEvent::LeaveProcedure { proc, classification: Some(c) } if proc == name => Some(c.clone()),
                    _ => None,
                })
                .unwrap()
        };
        assert!(leave("B").pass_through);
        let c = leave("C");
        assert!(!c.pass_through);
        let entry = out.regions.regions.iter().find(|r| r.contains(&BlockId::from("20"))).unwrap();
        let host = &out.program.procedures[&entry.proc];
        let from_c: BTreeSet<BlockId> = entry
            .blocks
            .iter()
            .filter(|b| host.blocks[*b].origin == "C" && host.blocks[*b].clone_of.is_none())
            .cloned()
            .collect();
        assert_eq!(from_c, ids(&["20", "21", "22"]));
    }

    #[test]
    fn call_free_matches_phased() {
        let src = "proc main(a) {
block 1 [weight 10]:
  c = lt a 5
  branch c 2 3
block 2 [weight 8]:
  x = const 1
  jump 4
block 3 [weight 2]:
  x = const 2
  jump 4
block 4 [weight 10]:
  print x
  return x
}
";
        let p = parse_program(src).unwrap();
        let out = run(src, ComboName::H2);
        let (q, phased) = form_regions_phased(p.main(), &RegionParams::default(), true);
        assert_eq!(out.program.main(), &q);
        let a: Vec<_> = out.regions.regions.iter().map(|r| (&r.blocks, &r.seed, &r.entry)).collect();
        let b: Vec<_> = phased.iter().map(|r| (&r.blocks, &r.seed, &r.entry)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn semantics_and_trace_balance() {
        for (src, inputs) in [(NESTED_CALLS, vec![-4, 0, 9]), (G_PASS_THROUGH, vec![-2, 3, 8])] {
            let p = parse_program(src).unwrap();
            let out = run(src, ComboName::H3);
            for a in inputs {
                assert_eq!(
                    interpret(&p, &[a], DEFAULT_FUEL).unwrap().observable(),
                    interpret(&out.program, &[a], DEFAULT_FUEL).unwrap().observable()
                );
            }
            let peak = peak_live_size(&out.trace).unwrap();
            assert!(peak <= p.code_size());
        }
    }

    #[test]
    fn refused_site_keeps_callee() {
        let mut c = combo_config("H2").unwrap();
        c.second.max_callee_size = Some(1);
        let p = parse_program(G_PASS_THROUGH).unwrap();
        let out = form_regions_demand(&p, &c, &RegionParams::default());
        assert!(out.inlined.is_empty());
        assert!(out.program.proc("G").is_some());
        assert!(out.trace.events.iter().any(|e| matches!(
            &e.event,
            TraceEvent::InlineRefused { reason, .. } if reason == "policy_rejected(size)"
        )));
        out.regions.check_partition(&out.program).unwrap();
    }

    #[test]
    fn unbalanced_trace_is_an_error() {
        let mut t = FormationTrace::default();
        t.events.push(SeqEvent {
            seq: 0,
            event: TraceEvent::LeaveProcedure {
                proc: "f".into(),
                classification: None,
            },
        });
        assert_eq!(peak_live_size(&t), Err(TraceError::Unbalanced("f".into())));
    }

    #[test]
    fn classify_helper() {
        let mut a = Region::new("F", BlockId::from("1"));
        a.blocks = vec!["1".into(), "3".into()];
        let mut b = Region::new("F", BlockId::from("2"));
        b.id = 1;
        let blocks = vec![BlockId::from("1"), "2".into(), "3".into()];
        let c = classify_regions(&blocks, &"1".into(), &"3".into(), &[a.clone(), b.clone()]).unwrap();
        assert!(c.pass_through);
        assert_eq!(c.locals, vec![1]);
        assert_eq!(
            classify_regions(&blocks, &"1".into(), &"3".into(), &[a]),
            Err(ClassifyError::Uncovered("2".into()))
        );
    }
}
