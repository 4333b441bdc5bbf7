//! Measurements taken on one compilation: memory estimates, code growth,
//! unit counts and sizes, profile variance and interprocedural scope.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::heuristics::ComboName;
use crate::ir::{CodeSize, Program, Weight};
use crate::region::{Region, RegionSet};

pub const DEFAULT_INVARIANCE_THRESHOLD: f64 = 0.01;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("original program has no instructions")]
    ZeroSize,
    #[error("region set is empty")]
    NoRegions,
    #[error("region {0} names a procedure or block that does not exist")]
    MissingBlock(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub strategy: ComboName,
    pub memory_avg: f64,
    pub memory_worst: usize,
    pub code_growth_pct: f64,
    pub unit_count: usize,
    pub unit_avg_size: f64,
    /// Mean over units.
    pub profile_variance: f64,
    pub pct_invariant_units: f64,
    pub pct_interprocedural_ops: f64,
    pub dynamic_cost: u64,
}

impl MetricsReport {
    /// Column names in table order.
    pub const COLUMNS: [&'static str; 10] = [
        "strategy",
        "memory_avg",
        "memory_worst",
        "code_growth_pct",
        "unit_count",
        "unit_avg_size",
        "profile_variance",
        "pct_invariant_units",
        "pct_interprocedural_ops",
        "dynamic_cost",
    ];

    pub fn values(&self) -> Vec<String> {
        vec![
            self.strategy.to_string(),
            format!("{:.1}", self.memory_avg),
            self.memory_worst.to_string(),
            format!("{:.2}", self.code_growth_pct),
            self.unit_count.to_string(),
            format!("{:.2}", self.unit_avg_size),
            format!("{:.4}", self.profile_variance),
            format!("{:.1}", self.pct_invariant_units),
            format!("{:.2}", self.pct_interprocedural_ops),
            self.dynamic_cost.to_string(),
        ]
    }
}

/// Memory for phased formation: the whole program after aggressive
/// inlining is resident.
pub fn memory_requirement_phased(program_after_aggressive_inline: &Program) -> usize {
    program_after_aggressive_inline.code_size()
}

/// Mean and worst Σ procedure sizes over all maximal acyclic call chains
/// from the entry procedure. A call back into a procedure already on the
/// chain is not followed.
pub fn memory_requirement_demand(program: &Program) -> (f64, usize) {
    let callees: BTreeMap<&str, BTreeSet<&str>> = program
        .procedures
        .values()
        .map(|p| {
            let cs = p
                .callsites()
                .map(|(_, c)| c)
                .filter(|c| program.procedures.contains_key(*c))
                .collect();
            (p.name.as_str(), cs)
        })
        .collect();
    let size = |n: &str| program.procedures[n].code_size();

    let mut costs: Vec<usize> = Vec::new();
    // explicit stack of (path, next callee index)
    let mut path: Vec<&str> = vec![program.entry.as_str()];
    let mut cursor: Vec<usize> = vec![0];
    let mut extended: Vec<bool> = vec![false];
    let mut cost = size(&program.entry);
    while let Some(&top) = path.last() {
        let i = *cursor.last().expect("cursor");
        let next = callees[top].iter().filter(|c| !path.contains(*c)).nth(i).copied();
        match next {
            Some(c) => {
                *cursor.last_mut().expect("cursor") += 1;
                *extended.last_mut().expect("flag") = true;
                path.push(c);
                cursor.push(0);
                extended.push(false);
                cost += size(c);
            }
            None => {
                if !extended.pop().expect("flag") {
                    costs.push(cost);
                }
                cursor.pop();
                cost -= size(top);
                path.pop();
            }
        }
    }
    let worst = costs.iter().copied().max().unwrap_or(0);
    let avg = if costs.is_empty() {
        0.0
    } else {
        costs.iter().sum::<usize>() as f64 / costs.len() as f64
    };
    (avg, worst)
}

/// Memory when each procedure is its own unit: mean and largest procedure.
pub fn memory_requirement_procedure(program: &Program) -> (f64, usize) {
    let sizes: Vec<usize> = program.procedures.values().map(CodeSize::code_size).collect();
    let worst = sizes.iter().copied().max().unwrap_or(0);
    let avg = if sizes.is_empty() {
        0.0
    } else {
        sizes.iter().sum::<usize>() as f64 / sizes.len() as f64
    };
    (avg, worst)
}

pub fn code_growth_pct(original: &Program, compiled: &Program) -> Result<f64, MetricsError> {
    let o = original.code_size();
    if o == 0 {
        return Err(MetricsError::ZeroSize);
    }
    Ok(100.0 * (compiled.code_size() as f64 - o as f64) / o as f64)
}

/// Number of units and their mean size in instructions.
pub fn unit_stats(regions: &RegionSet, program: &Program) -> Result<(usize, f64), MetricsError> {
    if regions.is_empty() {
        return Err(MetricsError::NoRegions);
    }
    let mut total = 0;
    for r in &regions.regions {
        let p = program.proc(&r.proc).ok_or(MetricsError::MissingBlock(r.id))?;
        total += r.size(p);
    }
    Ok((regions.len(), total as f64 / regions.len() as f64))
}

/// Population standard deviation of block weights divided by the unit's
/// largest weight.
pub fn profile_variance(unit: &Region, program: &Program, threshold: f64) -> Result<(f64, bool), MetricsError> {
    let p = program.proc(&unit.proc).ok_or(MetricsError::MissingBlock(unit.id))?;
    let mut ws: Vec<&Weight> = Vec::with_capacity(unit.blocks.len());
    for b in &unit.blocks {
        ws.push(&p.block(b).ok_or(MetricsError::MissingBlock(unit.id))?.weight);
    }
    let Some(max) = ws.iter().copied().max() else {
        return Ok((0.0, true));
    };
    if max.is_zero() {
        return Ok((0.0, true));
    }
    // normalize exactly so scaling every weight gives identical floats
    let norm: Vec<f64> = ws
        .iter()
        .map(|w| Weight::from(w.ratio(max).expect("nonzero max")).to_f64())
        .collect();
    let n = norm.len() as f64;
    let mean = norm.iter().sum::<f64>() / n;
    let var = norm.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    Ok((sd, sd <= threshold))
}

/// Share of instructions whose block came from a procedure other than the
/// one the region's seed came from, and the number of regions that mix
/// origins.
pub fn interprocedural_scope(regions: &RegionSet, program: &Program) -> Result<(f64, usize), MetricsError> {
    let mut inter = 0usize;
    let mut total = 0usize;
    let mut mixed = 0usize;
    for r in &regions.regions {
        let p = program.proc(&r.proc).ok_or(MetricsError::MissingBlock(r.id))?;
        let home = &p.block(&r.seed).ok_or(MetricsError::MissingBlock(r.id))?.origin;
        let mut origins = BTreeSet::new();
        for b in &r.blocks {
            let blk = p.block(b).ok_or(MetricsError::MissingBlock(r.id))?;
            origins.insert(&blk.origin);
            total += blk.len();
            if blk.origin != *home {
                inter += blk.len();
            }
        }
        if origins.len() > 1 {
            mixed += 1;
        }
    }
    let pct = if total == 0 { 0.0 } else { 100.0 * inter as f64 / total as f64 };
    Ok((pct, mixed))
}

/// Mean variance over units and the share of invariant units.
pub fn variance_summary(regions: &RegionSet, program: &Program, threshold: f64) -> Result<(f64, f64), MetricsError> {
    if regions.is_empty() {
        return Err(MetricsError::NoRegions);
    }
    let mut sum = 0.0;
    let mut inv = 0usize;
    for r in &regions.regions {
        let (v, ok) = profile_variance(r, program, threshold)?;
        sum += v;
        inv += ok as usize;
    }
    let n = regions.len() as f64;
    Ok((sum / n, 100.0 * inv as f64 / n))
}
