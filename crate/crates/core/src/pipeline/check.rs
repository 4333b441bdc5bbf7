//! Properties every compilation must satisfy, checked over one program or
//! a generated corpus.

use rayon::prelude::*;
use serde::Serialize;

use super::{compile, generate_program, Shape};
use crate::demand::peak_live_size;
use crate::heuristics::{recursive_procedures, ComboName, HeuristicCombo};
use crate::inliner::aggressive_inline;
use crate::ir::{Program, Weight};
use crate::metrics::{memory_requirement_demand, memory_requirement_phased};
use crate::profiler::{annotate_profile, interpret, DEFAULT_FUEL};
use crate::region::{side_entries, RegionParams};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Compile { combo: ComboName, message: String },
    Semantics { combo: ComboName },
    Partition { combo: ComboName, message: String },
    SideEntry { combo: ComboName, region: usize },
    GrowthCap { combo: ComboName, size: usize, original: usize, slack: usize },
    CalleeTooLarge { combo: ComboName, callee: String, size: usize },
    RecursiveInline { combo: ComboName, callee: String },
    Memory { what: String, value: usize, phased: usize },
}

/// Input used for generated program `seed`.
pub fn corpus_input(seed: u64) -> Vec<i64> {
    vec![(seed % 13) as i64 - 6]
}

/// Runs every combo on `program` and reports what went wrong.
pub fn check_program(program: &Program, input: &[i64], combos: &[HeuristicCombo], params: &RegionParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let Ok(reference) = interpret(program, input, DEFAULT_FUEL) else {
        return out;
    };
    let want = reference.observable();
    let original = program.size_without_clones();
    let recursive = recursive_procedures(program);
    let weighted = if program.has_weights() {
        program.clone()
    } else {
        annotate_profile(program, &reference).expect("profile of this program")
    };
    let phased_mem = memory_requirement_phased(&aggressive_inline(&weighted, &HeuristicCombo::new(ComboName::H1).second).0);
    let (_, worst) = memory_requirement_demand(program);
    if worst > phased_mem {
        out.push(Violation::Memory {
            what: "demand_worst".into(),
            value: worst,
            phased: phased_mem,
        });
    }

    for combo in combos {
        let name = combo.name;
        let r = match compile(program, input, combo, params) {
            Ok(r) => r,
            Err(e) => {
                out.push(Violation::Compile {
                    combo: name,
                    message: e.to_string(),
                });
                continue;
            }
        };
        match interpret(&r.program_out, input, DEFAULT_FUEL) {
            Ok(got) if got.observable() == want => {}
            _ => out.push(Violation::Semantics { combo: name }),
        }
        if let Err(e) = r.regions.check_partition(&r.program_out) {
            out.push(Violation::Partition {
                combo: name,
                message: e.to_string(),
            });
        }
        for reg in &r.regions.regions {
            if let Some(p) = r.program_out.proc(&reg.proc) {
                if !side_entries(p, reg).is_empty() {
                    out.push(Violation::SideEntry {
                        combo: name,
                        region: reg.id,
                    });
                }
            }
        }
        if !r.inlined.is_empty() {
            let slack = r.inlined.iter().map(|i| i.callee_size).max().unwrap_or(0);
            let size = r.program_out.size_without_clones();
            let factor = Weight::from_decimal(1.0 + combo.second.growth_limit).unwrap_or_default();
            let bound = &(&Weight::from_count(original as u64) * &factor) + &Weight::from_count(slack as u64);
            if Weight::from_count(size as u64) > bound {
                out.push(Violation::GrowthCap {
                    combo: name,
                    size,
                    original,
                    slack,
                });
            }
        }
        if let Some(cap) = combo.second.max_callee_size {
            for i in r.inlined.iter().filter(|i| i.callee_size > cap) {
                out.push(Violation::CalleeTooLarge {
                    combo: name,
                    callee: i.site.callee.clone(),
                    size: i.callee_size,
                });
            }
        }
        if combo.second.block_recursion {
            for i in r.inlined.iter().filter(|i| recursive.contains(&i.site.callee)) {
                out.push(Violation::RecursiveInline {
                    combo: name,
                    callee: i.site.callee.clone(),
                });
            }
        }
        if let Some(t) = &r.trace {
            match peak_live_size(t) {
                Ok(peak) if peak <= phased_mem => {}
                Ok(peak) => out.push(Violation::Memory {
                    what: format!("peak_live_size[{name}]"),
                    value: peak,
                    phased: phased_mem,
                }),
                Err(e) => out.push(Violation::Compile {
                    combo: name,
                    message: e.to_string(),
                }),
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct CorpusReport {
    pub programs: usize,
    /// (seed, violations) for every program with at least one.
    pub failures: Vec<(u64, Vec<Violation>)>,
}

impl CorpusReport {
    pub fn violation_count(&self) -> usize {
        self.failures.iter().map(|(_, v)| v.len()).sum()
    }
}

/// Checks `count` generated programs starting at `seed`, in parallel. The
/// report lists failures in seed order.
pub fn check_corpus(seed: u64, count: u64, shape: &Shape, combos: &[HeuristicCombo], params: &RegionParams) -> CorpusReport {
    let mut failures: Vec<(u64, Vec<Violation>)> = (seed..seed + count)
        .into_par_iter()
        .filter_map(|s| {
            let p = generate_program(s, shape);
            let v = check_program(&p, &corpus_input(s), combos, params);
            (!v.is_empty()).then_some((s, v))
        })
        .collect();
    failures.sort_by_key(|(s, _)| *s);
    CorpusReport {
        programs: count as usize,
        failures,
    }
}
