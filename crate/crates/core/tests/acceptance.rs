//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use regionlab::demand::{form_regions_demand, TraceEvent};
use regionlab::heuristics::{
    loop_call_weight, order_procedures, ComboName, FirstOrderPolicy, HeuristicCombo, Strategy, LOOP_DEPTH_WEIGHT,
};
use regionlab::inliner::aggressive_inline;
use regionlab::ir::{parse_program, BlockId};
use regionlab::metrics::{memory_requirement_demand, memory_requirement_phased, profile_variance};
use regionlab::pipeline::check::{check_corpus, check_program, corpus_input, CorpusReport, Violation};
use regionlab::pipeline::{compile, generate_program, CompilationResult, Shape};
use regionlab::profiler::{annotate_profile, interpret, loop_depths, DEFAULT_CALL_OVERHEAD, DEFAULT_FUEL};
use regionlab::region::{form_regions_phased, RegionParams};

const F_CALLS_G: &str = include_str!("../fixtures/f_calls_g.ir");
const NESTED_CALLS: &str = include_str!("../fixtures/nested_calls.ir");
const G_PASS_THROUGH: &str = include_str!("../fixtures/g_pass_through.ir");
const HOT: &str = include_str!("../fixtures/hot_loop.ir");

type Outcome = Result<String, String>;

fn ids(v: &[&str]) -> BTreeSet<BlockId> {
    v.iter().map(|s| BlockId::from(*s)).collect()
}

/// Non-clone blocks of each region of `proc`, empty sets dropped.
fn originals(r: &CompilationResult, proc: &str) -> BTreeSet<BTreeSet<BlockId>> {
    r.regions
        .regions
        .iter()
        .filter(|x| x.proc == proc)
        .map(|x| {
            let p = &r.program_out.procedures[&x.proc];
            x.blocks.iter().filter(|b| p.blocks[*b].clone_of.is_none()).cloned().collect()
        })
        .filter(|s: &BTreeSet<BlockId>| !s.is_empty())
        .collect()
}

fn all_combos() -> Vec<HeuristicCombo> {
    ComboName::ALL.iter().map(|n| HeuristicCombo::new(*n)).collect()
}

fn demand_with_h1_gates() -> HeuristicCombo {
    let mut c = HeuristicCombo::new(ComboName::H1);
    c.strategy = Strategy::Demand;
    c
}

fn f_calls_g() -> Outcome {
    let start = Instant::now();
    let p = parse_program(F_CALLS_G).map_err(|e| e.to_string())?;
    let r = compile(&p, &[1], &HeuristicCombo::new(ComboName::H1), &RegionParams::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let want: BTreeSet<BTreeSet<BlockId>> =
        [ids(&["1", "2", "3", "5", "7", "8", "10", "11"]), ids(&["6"]), ids(&["9"])].into_iter().collect();
    let got = originals(&r, "F");
    let seed = r.regions.regions.iter().find(|x| x.proc == "F").map(|x| x.seed.clone());
    if got != want {
        return Err(format!("partition {got:?}"));
    }
    if seed != Some(BlockId::from("8")) {
        return Err(format!("first seed {seed:?}"));
    }
    if secs >= 1.0 {
        return Err(format!("took {secs:.3}s"));
    }
    Ok(format!("{{1,2,3,5,7,8,10,11}} {{6}} {{9}}, seed 8, {secs:.3}s"))
}

fn g_pass_through() -> Outcome {
    let p = parse_program(G_PASS_THROUGH).map_err(|e| e.to_string())?;
    let r = compile(&p, &[1], &demand_with_h1_gates(), &RegionParams::default()).map_err(|e| e.to_string())?;
    let trace = r.trace.as_ref().ok_or("no trace")?;
    let ev: Vec<&TraceEvent> = trace.events.iter().map(|e| &e.event).collect();
    let leave_g = ev
        .iter()
        .position(|e| matches!(e, TraceEvent::LeaveProcedure { proc, .. } if proc == "G"))
        .ok_or("G never left")?;
    let TraceEvent::LeaveProcedure { classification: Some(c), .. } = ev[leave_g] else {
        return Err("G left without classification".into());
    };
    if !c.pass_through {
        return Err("G's entry and exit regions differ".into());
    }
    let local9 = ev[..leave_g]
        .iter()
        .any(|e| matches!(e, TraceEvent::RegionCompleted { blocks, .. } if blocks.first().map(String::as_str) == Some("F.9")));
    if !local9 {
        return Err("G's local region {9} not completed before leaving G".into());
    }
    let want: BTreeSet<BTreeSet<BlockId>> =
        [ids(&["1", "2", "3", "4", "5", "7", "8", "10", "11"]), ids(&["6"]), ids(&["9"])].into_iter().collect();
    let got = originals(&r, "F");
    if got != want {
        return Err(format!("partition {got:?}"));
    }
    Ok("G: {8,10,11} pass-through + local {9}; F: {1,2,3,4,5,7}+{8,10,11}, local {6}".into())
}

fn nested_calls() -> Outcome {
    let p = parse_program(NESTED_CALLS).map_err(|e| e.to_string())?;
    let r = compile(&p, &[4], &HeuristicCombo::new(ComboName::H3), &RegionParams::default()).map_err(|e| e.to_string())?;
    let trace = r.trace.as_ref().ok_or("no trace")?;
    let class = |name: &str| {
        trace.events.iter().find_map(|e| match &e.event {
            TraceEvent::LeaveProcedure { proc, classification: Some(c) } if proc == name => Some(c.clone()),
            _ => None,
        })
    };
    let b = class("B").ok_or("B not inlined")?;
    let c = class("C").ok_or("C not inlined")?;
    if !b.pass_through || c.pass_through {
        return Err(format!("B pass-through {}, C pass-through {}", b.pass_through, c.pass_through));
    }
    let entry = r
        .regions
        .regions
        .iter()
        .find(|x| x.contains(&BlockId::from("20")))
        .ok_or("C entry not in any region")?;
    let host = &r.program_out.procedures[&entry.proc];
    let from_c: BTreeSet<BlockId> = entry
        .blocks
        .iter()
        .filter(|b| host.blocks[*b].origin == "C" && host.blocks[*b].clone_of.is_none())
        .cloned()
        .collect();
    if from_c != ids(&["20", "21", "22"]) {
        return Err(format!("C entry region {from_c:?}"));
    }
    Ok("B pass-through at A's site; C entry region {20,21,22} ends before C's exit".into())
}

fn count(reports: &[&CorpusReport], pick: impl Fn(&Violation) -> bool) -> (usize, Option<String>) {
    let mut n = 0;
    let mut first = None;
    for r in reports {
        for (seed, vs) in &r.failures {
            for v in vs.iter().filter(|v| pick(v)) {
                n += 1;
                first.get_or_insert_with(|| format!("seed {seed}: {v:?}"));
            }
        }
    }
    (n, first)
}

fn zero(n: usize, first: Option<String>, programs: usize, what: &str) -> Outcome {
    match first {
        None => Ok(format!("0 violations over {programs} programs ({what})")),
        Some(f) => Err(format!("{n} violations, first {f}")),
    }
}

fn memory(reports: &[&CorpusReport], programs: usize) -> Outcome {
    let (n, first) = count(reports, |v| matches!(v, Violation::Memory { .. }));
    zero(n, first, programs, "demand worst and peak live size vs phased")?;
    // directional: many procedures, short chains
    let shape = Shape {
        procs: 12,
        max_blocks: 8,
        call_density: 0.1,
        ..Shape::default()
    };
    let mut ratios = Vec::new();
    for seed in 0..100 {
        let p = generate_program(seed, &shape);
        let prof = interpret(&p, &corpus_input(seed), DEFAULT_FUEL).map_err(|e| e.to_string())?;
        let w = annotate_profile(&p, &prof).map_err(|e| e.to_string())?;
        let phased = memory_requirement_phased(&aggressive_inline(&w, &HeuristicCombo::new(ComboName::H1).second).0);
        ratios.push(memory_requirement_demand(&w).0 / phased as f64);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    if mean >= 1.0 {
        return Err(format!("mean demand/phased ratio {mean:.3}"));
    }
    Ok(format!("0 violations over {programs} programs; mean demand/phased ratio {mean:.3} on 12-procedure corpus"))
}

fn loop_weight() -> Outcome {
    let p = parse_program(
        "proc main() {
block 1:
  i = const 0
  jump 10
block 10:
  x = call none()
  jump 2
block 2:
  c = lt i 3
  branch c 3 6
block 3:
  y = call one()
  jump 4
block 4:
  j = const 0
  jump 5
block 5:
  d = lt j 2
  branch d 7 8
block 7:
  z = call two()
  jump 9
block 9:
  j = add j 1
  jump 5
block 8:
  i = add i 1
  jump 2
block 6:
  return 0
}
proc none() {
block 1:
  return 0
}
proc one() {
block 1:
  i = const 0
  jump 2
block 2:
  c = lt i 3
  branch c 3 4
block 3:
  x = call none()
  jump 5
block 5:
  i = add i 1
  jump 2
block 4:
  return 0
}
proc two() {
block 1:
  return 0
}
",
    )
    .map_err(|e| e.to_string())?;
    let w = |name: &str| {
        let f = &p.procedures[name];
        loop_call_weight(f, &loop_depths(f), LOOP_DEPTH_WEIGHT)
    };
    let got = (w("none"), w("one"), w("main"));
    if got != (0, 10, 30) {
        return Err(format!("got {got:?}"));
    }
    Ok("0 callsites -> 0, one depth-1 site -> 10, depths {1,2} -> 30".into())
}

fn scale_invariance() -> Outcome {
    let shape = Shape::default();
    let params = RegionParams::default();
    let policies = [
        FirstOrderPolicy::None,
        FirstOrderPolicy::ProfileTimeDesc,
        FirstOrderPolicy::CallsitesDescThenSizeAsc,
        FirstOrderPolicy::LoopCallWeightDescThenSizeAsc,
    ];
    for seed in 0..100 {
        let p = generate_program(seed, &shape);
        let input = corpus_input(seed);
        let prof = interpret(&p, &input, DEFAULT_FUEL).map_err(|e| e.to_string())?;
        let a = annotate_profile(&p, &prof).map_err(|e| e.to_string())?;
        let b = a.scale_weights(7);
        for pol in policies {
            if order_procedures(&a, pol, None).ok() != order_procedures(&b, pol, None).ok() {
                return Err(format!("seed {seed}: order under {pol:?}"));
            }
        }
        for combo in all_combos() {
            let ra = compile(&a, &input, &combo, &params).map_err(|e| e.to_string())?;
            let rb = compile(&b, &input, &combo, &params).map_err(|e| e.to_string())?;
            let shape_of = |r: &CompilationResult| {
                r.regions
                    .regions
                    .iter()
                    .map(|x| (x.proc.clone(), x.blocks.clone(), x.seed.clone(), x.entry.clone()))
                    .collect::<Vec<_>>()
            };
            if shape_of(&ra) != shape_of(&rb) {
                return Err(format!("seed {seed} {}: partition", combo.name));
            }
            let decisions = |r: &CompilationResult| {
                r.inlined
                    .iter()
                    .map(|i| (i.site.caller.clone(), i.site.block.clone(), i.site.callee.clone(), i.callee_size))
                    .collect::<Vec<_>>()
            };
            if decisions(&ra) != decisions(&rb) {
                return Err(format!("seed {seed} {}: inline decisions", combo.name));
            }
            if ra.trace != rb.trace {
                return Err(format!("seed {seed} {}: formation trace", combo.name));
            }
            for (x, y) in ra.regions.regions.iter().zip(&rb.regions.regions) {
                let vx = profile_variance(x, &ra.program_out, 0.01).map_err(|e| e.to_string())?;
                let vy = profile_variance(y, &rb.program_out, 0.01).map_err(|e| e.to_string())?;
                if vx != vy {
                    return Err(format!("seed {seed} {}: variance {vx:?} vs {vy:?}", combo.name));
                }
            }
        }
    }
    Ok("100 programs x 7 combinations, weights x7: partitions, orders, gates, variances identical".into())
}

fn call_free() -> Outcome {
    let shape = Shape {
        procs: 1,
        call_density: 0.0,
        max_blocks: 16,
        ..Shape::default()
    };
    let params = RegionParams::default();
    let mut combo = HeuristicCombo::new(ComboName::H2);
    combo.strategy = Strategy::Demand;
    for seed in 0..500 {
        let p = generate_program(seed, &shape);
        let prof = interpret(&p, &corpus_input(seed), DEFAULT_FUEL).map_err(|e| e.to_string())?;
        let w = annotate_profile(&p, &prof).map_err(|e| e.to_string())?;
        let d = form_regions_demand(&w, &combo, &params);
        let (q, ph) = form_regions_phased(w.main(), &params, true);
        let a: Vec<_> = d.regions.regions.iter().map(|r| (&r.blocks, &r.seed, &r.entry)).collect();
        let b: Vec<_> = ph.iter().map(|r| (&r.blocks, &r.seed, &r.entry)).collect();
        if a != b || d.program.main() != &q {
            return Err(format!("seed {seed} differs"));
        }
    }
    Ok("500 call-free programs, identical regions".into())
}

fn dynamic_cost() -> Outcome {
    let start = Instant::now();
    let p = parse_program(HOT).map_err(|e| e.to_string())?;
    let input = [2];
    let params = RegionParams::default();
    let run = |n: ComboName| -> Result<(u64, u64), String> {
        let r = compile(&p, &input, &HeuristicCombo::new(n), &params).map_err(|e| e.to_string())?;
        let prof = interpret(&r.program_out, &input, DEFAULT_FUEL).map_err(|e| e.to_string())?;
        Ok((r.report.dynamic_cost, prof.dynamic_calls))
    };
    let (c0, calls0) = run(ComboName::H0)?;
    if calls0 < 10_000 {
        return Err(format!("only {calls0} dynamic calls"));
    }
    let mut notes = vec![format!("H0 {c0}")];
    for n in [ComboName::H1, ComboName::H4] {
        let (c, calls) = run(n)?;
        let inlined = calls0 - calls;
        let need = 0.9 * (DEFAULT_CALL_OVERHEAD * inlined) as f64;
        let saved = c0 as f64 - c as f64;
        if inlined == 0 || saved < need {
            return Err(format!("{n}: saved {saved} of required {need} ({inlined} calls inlined)"));
        }
        notes.push(format!("{n} {c} (saved {saved}, need {need})"));
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 10.0 {
        return Err(format!("took {secs:.2}s"));
    }
    Ok(format!("{}; {secs:.2}s", notes.join(", ")))
}

fn fixtures_semantics() -> Result<usize, String> {
    let combos = all_combos();
    let params = RegionParams::default();
    let mut n = 0;
    for (name, src, inputs) in [
        ("f_calls_g", F_CALLS_G, vec![-3, 0, 4]),
        ("nested_calls", NESTED_CALLS, vec![-5, 0, 6]),
        ("g_pass_through", G_PASS_THROUGH, vec![-2, 1, 9]),
        ("hot_loop", HOT, vec![0, 7]),
    ] {
        let p = parse_program(src).map_err(|e| e.to_string())?;
        for i in inputs {
            let vs = check_program(&p, &[i], &combos, &params);
            if let Some(v) = vs.iter().find(|v| matches!(v, Violation::Semantics { .. } | Violation::Compile { .. })) {
                return Err(format!("{name} input {i}: {v:?}"));
            }
            n += 1;
        }
    }
    Ok(n)
}

fn main() -> ExitCode {
    let combos = all_combos();
    let params = RegionParams::default();
    let plain = check_corpus(0, 500, &Shape::default(), &combos, &params);
    let recursive = check_corpus(
        500,
        500,
        &Shape {
            procs: 5,
            recursive: true,
            ..Shape::default()
        },
        &combos,
        &params,
    );
    let reports = [&plain, &recursive];
    let programs = plain.programs + recursive.programs;

    let growth = || {
        let (n, f) = count(&reports, |v| matches!(v, Violation::GrowthCap { .. } | Violation::CalleeTooLarge { .. }));
        zero(n, f, programs, "size <= 1.2 x original + largest inlined callee; H2 callees <= 25")
    };
    let partition = || {
        let (n, f) = count(&reports, |v| matches!(v, Violation::Partition { .. } | Violation::SideEntry { .. }));
        zero(n, f, programs, "partition and single entry, all combinations")
    };
    let semantics = || {
        let (n, f) = count(&reports, |v| matches!(v, Violation::Semantics { .. } | Violation::Compile { .. }));
        zero(n, f, programs, "all combinations")?;
        let k = fixtures_semantics()?;
        Ok(format!("0 violations over {programs} programs and {k} fixture runs, all combinations"))
    };
    let recursion = || {
        let (n, f) = count(&reports, |v| matches!(v, Violation::RecursiveInline { .. }));
        zero(n, f, programs, "H3-H6, half the corpus recursive")
    };

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("phased F/G partition", Box::new(f_calls_g)),
        ("demand F/G partition", Box::new(g_pass_through)),
        ("nested inline classification", Box::new(nested_calls)),
        ("memory dominance", Box::new(|| memory(&reports, programs))),
        ("growth cap", Box::new(growth)),
        ("partition and single entry", Box::new(partition)),
        ("semantics preservation", Box::new(semantics)),
        ("recursion gate", Box::new(recursion)),
        ("loop call weight", Box::new(loop_weight)),
        ("scale invariance", Box::new(scale_invariance)),
        ("call-free equivalence", Box::new(call_free)),
        ("dynamic-cost proxy", Box::new(dynamic_cost)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(msg) => println!("PASS {:>2} {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
