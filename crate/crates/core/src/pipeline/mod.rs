//! End-to-end driver: profile, form regions under a heuristic combination,
//! optimize every region in isolation, put the results back and measure.

pub mod check;
pub mod compare;
pub mod generate;
pub mod optimize;

use std::time::Instant;

use crate::demand::{form_regions_demand, FormationTrace};
use crate::heuristics::{order_procedures, FirstOrderPolicy, HeuristicCombo, HeuristicError, Strategy};
use crate::inliner::{aggressive_inline, InlineRecord};
use crate::ir::{validate, Diagnostic, Program};
use crate::metrics::{
    code_growth_pct, interprocedural_scope, memory_requirement_demand, memory_requirement_phased,
    memory_requirement_procedure, unit_stats, variance_summary, MetricsError, MetricsReport,
    DEFAULT_INVARIANCE_THRESHOLD,
};
use crate::profiler::{annotate_profile, interpret, InterpError, ProfileError, DEFAULT_CALL_OVERHEAD, DEFAULT_FUEL};
use crate::region::{
    encapsulate, form_regions_phased, reintegrate, select_seed, EncapError, Region, RegionError, RegionParams,
    RegionSet,
};

pub use compare::{compare, ComparisonTable};
pub use generate::{generate_program, Shape};
pub use optimize::optimize_region;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid program: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Params(#[from] RegionError),
    #[error("interpreter: {0}")]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
    #[error("encapsulation: {0}")]
    Encap(#[from] EncapError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Debug)]
pub struct CompilationResult {
    pub combo: HeuristicCombo,
    pub input: Vec<i64>,
    /// The input program with weights: its own annotations if it has any,
    /// otherwise counts from running it on `input`.
    pub source: Program,
    pub program_out: Program,
    pub regions: RegionSet,
    pub trace: Option<FormationTrace>,
    pub inlined: Vec<InlineRecord>,
    pub report: MetricsReport,
    /// Wall-clock time of the whole compilation, informational only.
    pub compile_ms: f64,
}

/// One region per procedure, entered at the procedure entry.
fn procedure_regions(program: &Program) -> RegionSet {
    let regions = program
        .procedures
        .values()
        .map(|p| {
            let all = p.blocks.keys().cloned().collect();
            let mut r = Region::new(p.name.clone(), select_seed(p, &all).expect("procedure has blocks"));
            r.blocks = p.blocks.keys().cloned().collect();
            r.entry = p.entry.clone();
            r
        })
        .collect();
    RegionSet { regions }
}

fn phased(src: &Program, combo: &HeuristicCombo, params: &RegionParams) -> (Program, RegionSet, Vec<InlineRecord>) {
    let (mut work, records) = aggressive_inline(src, &combo.second);
    let order = order_procedures(&work, combo.first, None)
        .or_else(|_| order_procedures(&work, FirstOrderPolicy::None, None))
        .expect("name order needs no profile");
    let mut set = RegionSet::default();
    for name in order {
        let (p, regions) = form_regions_phased(&work.procedures[&name], params, true);
        work.procedures.insert(name, p);
        set.regions.extend(regions);
    }
    set.renumber();
    (work, set, records)
}

/// Encapsulates, optimizes and reintegrates every region in order.
fn optimize_all(mut program: Program, regions: &RegionSet) -> Result<Program, EncapError> {
    for r in &regions.regions {
        let proc = &program.procedures[&r.proc];
        let unit = encapsulate(proc, r)?;
        let done = optimize::optimize_region(&unit);
        let p = reintegrate(&done, proc)?;
        program.procedures.insert(r.proc.clone(), p);
    }
    Ok(program)
}

/// Measurements for a finished compilation. `source` is the profiled
/// input program.
pub fn build_report(
    source: &Program,
    combo: &HeuristicCombo,
    program_out: &Program,
    regions: &RegionSet,
    dynamic_cost: u64,
) -> Result<MetricsReport, MetricsError> {
    let (memory_avg, memory_worst) = match combo.strategy {
        Strategy::ProcedureBased => memory_requirement_procedure(source),
        Strategy::Phased => {
            let m = memory_requirement_phased(&aggressive_inline(source, &combo.second).0);
            (m as f64, m)
        }
        Strategy::Demand => memory_requirement_demand(source),
    };
    let (unit_count, unit_avg_size) = unit_stats(regions, program_out)?;
    let (profile_variance, pct_invariant_units) =
        variance_summary(regions, program_out, DEFAULT_INVARIANCE_THRESHOLD)?;
    let (pct_interprocedural_ops, _) = interprocedural_scope(regions, program_out)?;
    Ok(MetricsReport {
        strategy: combo.name,
        memory_avg,
        memory_worst,
        code_growth_pct: code_growth_pct(source, program_out)?,
        unit_count,
        unit_avg_size,
        profile_variance,
        pct_invariant_units,
        pct_interprocedural_ops,
        dynamic_cost,
    })
}

pub fn compile(
    program: &Program,
    input: &[i64],
    combo: &HeuristicCombo,
    params: &RegionParams,
) -> Result<CompilationResult, PipelineError> {
    let start = Instant::now();
    let diags = validate(program);
    if !diags.is_empty() {
        return Err(PipelineError::Invalid(diags));
    }
    params.check()?;
    // annotated weights in the input win over a fresh profile
    let source = if program.has_weights() {
        program.clone()
    } else {
        annotate_profile(program, &interpret(program, input, DEFAULT_FUEL)?)?
    };

    let (work, regions, trace, inlined) = match combo.strategy {
        Strategy::ProcedureBased => (source.clone(), procedure_regions(&source), None, Vec::new()),
        Strategy::Phased => {
            let (w, r, i) = phased(&source, combo, params);
            (w, r, None, i)
        }
        Strategy::Demand => {
            let out = form_regions_demand(&source, combo, params);
            (out.program, out.regions, Some(out.trace), out.inlined)
        }
    };
    let program_out = optimize_all(work, &regions)?;
    let dynamic_cost = interpret(&program_out, input, DEFAULT_FUEL)?.dynamic_cost(DEFAULT_CALL_OVERHEAD);
    let report = build_report(&source, combo, &program_out, &regions, dynamic_cost)?;
    Ok(CompilationResult {
        combo: combo.clone(),
        input: input.to_vec(),
        source,
        program_out,
        regions,
        trace,
        inlined,
        report,
        compile_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Rebuilds the report from the result's own fields.
pub fn recompute_report(result: &CompilationResult) -> Result<MetricsReport, PipelineError> {
    let cost = interpret(&result.program_out, &result.input, DEFAULT_FUEL)?.dynamic_cost(DEFAULT_CALL_OVERHEAD);
    Ok(build_report(
        &result.source,
        &result.combo,
        &result.program_out,
        &result.regions,
        cost,
    )?)
}
