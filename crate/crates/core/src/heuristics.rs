//! Procedure orderings, per-callsite inlining gates, and the H0..H6
//! combinations.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::inliner::Callsite;
use crate::ir::{CodeSize, Procedure, Program, Weight};
use crate::profiler::{ExecutionProfile, LoopInfo};

pub const LOOP_DEPTH_WEIGHT: u64 = 10;
pub const DEFAULT_GROWTH_LIMIT: f64 = 0.20;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum HeuristicError {
    #[error("unknown heuristic combination `{0}`")]
    UnknownCombo(String),
    #[error("ordering needs a profile and none is available")]
    MissingProfile,
    #[error("unknown setting `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstOrderPolicy {
    None,
    ProfileTimeDesc,
    CallsitesDescThenSizeAsc,
    LoopCallWeightDescThenSizeAsc,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecondOrderPolicy {
    /// Minimum site frequency as a fraction of the region seed's weight.
    pub frequency_ratio: Option<f64>,
    pub max_callee_size: Option<usize>,
    pub block_recursion: bool,
    pub growth_limit: f64,
    pub min_loop_call_weight: Option<u64>,
    pub loop_depth_weight: u64,
}

impl Default for SecondOrderPolicy {
    fn default() -> Self {
        SecondOrderPolicy {
            frequency_ratio: None,
            max_callee_size: None,
            block_recursion: false,
            growth_limit: DEFAULT_GROWTH_LIMIT,
            min_loop_call_weight: None,
            loop_depth_weight: LOOP_DEPTH_WEIGHT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ProcedureBased,
    Phased,
    Demand,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ComboName {
    H0,
    H1,
    H2,
    H3,
    H4,
    H5,
    H6,
}

impl ComboName {
    pub const ALL: [ComboName; 7] = [
        ComboName::H0,
        ComboName::H1,
        ComboName::H2,
        ComboName::H3,
        ComboName::H4,
        ComboName::H5,
        ComboName::H6,
    ];
}

impl fmt::Display for ComboName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ComboName {
    type Err = HeuristicError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ComboName::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| HeuristicError::UnknownCombo(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeuristicCombo {
    pub name: ComboName,
    pub first: FirstOrderPolicy,
    pub second: SecondOrderPolicy,
    pub strategy: Strategy,
}

pub fn combo_config(name: &str) -> Result<HeuristicCombo, HeuristicError> {
    Ok(HeuristicCombo::new(name.parse()?))
}

impl HeuristicCombo {
    pub fn new(name: ComboName) -> Self {
        use FirstOrderPolicy::*;
        let h1_gates = SecondOrderPolicy {
            frequency_ratio: Some(0.5),
            ..SecondOrderPolicy::default()
        };
        let h3_gates = SecondOrderPolicy {
            block_recursion: true,
            ..h1_gates.clone()
        };
        let (first, second, strategy) = match name {
            ComboName::H0 => (None, SecondOrderPolicy::default(), Strategy::ProcedureBased),
            ComboName::H1 => (ProfileTimeDesc, h1_gates, Strategy::Phased),
            ComboName::H2 => (
                CallsitesDescThenSizeAsc,
                SecondOrderPolicy {
                    max_callee_size: Some(25),
                    ..h1_gates
                },
                Strategy::Demand,
            ),
            ComboName::H3 => (CallsitesDescThenSizeAsc, h3_gates, Strategy::Demand),
            ComboName::H4 => (LoopCallWeightDescThenSizeAsc, h3_gates, Strategy::Demand),
            ComboName::H5 => (ProfileTimeDesc, h3_gates, Strategy::Demand),
            ComboName::H6 => (
                ProfileTimeDesc,
                SecondOrderPolicy {
                    min_loop_call_weight: Some(10),
                    ..h3_gates
                },
                Strategy::Demand,
            ),
        };
        HeuristicCombo {
            name,
            first,
            second,
            strategy,
        }
    }

    /// Overrides one second-order threshold. `none` disables optional gates.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HeuristicError> {
        let bad = || HeuristicError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        let off = value.eq_ignore_ascii_case("none");
        let s = &mut self.second;
        match key {
            "frequency_ratio" => {
                s.frequency_ratio = if off {
                    Option::None
                } else {
                    let r: f64 = value.parse().map_err(|_| bad())?;
                    if !(r > 0.0 && r.is_finite()) {
                        return Err(bad());
                    }
                    Some(r)
                }
            }
            "max_callee_size" => {
                s.max_callee_size = if off { Option::None } else { Some(value.parse().map_err(|_| bad())?) }
            }
            "min_loop_call_weight" => {
                s.min_loop_call_weight = if off { Option::None } else { Some(value.parse().map_err(|_| bad())?) }
            }
            "block_recursion" => s.block_recursion = value.parse().map_err(|_| bad())?,
            "growth_limit" => {
                let g: f64 = value.parse().map_err(|_| bad())?;
                if !(g >= 0.0 && g.is_finite()) {
                    return Err(bad());
                }
                s.growth_limit = g;
            }
            "loop_depth_weight" => s.loop_depth_weight = value.parse().map_err(|_| bad())?,
            _ => return Err(HeuristicError::UnknownKey(key.to_string())),
        }
        Ok(())
    }
}

/// Σ over callsites of loop depth × `w`.
pub fn loop_call_weight(p: &Procedure, loops: &LoopInfo, w: u64) -> u64 {
    p.callsites()
        .map(|(b, _)| u64::from(loops.depth_of(b)) * w)
        .sum()
}

/// Procedures that lie on a cycle of the static call graph, including
/// directly self-recursive ones.
pub fn recursive_procedures(program: &Program) -> BTreeSet<String> {
    let mut g: DiGraph<&str, ()> = DiGraph::new();
    let idx: BTreeMap<&str, _> = program
        .procedures
        .keys()
        .map(|n| (n.as_str(), g.add_node(n.as_str())))
        .collect();
    let mut out = BTreeSet::new();
    for p in program.procedures.values() {
        for (_, callee) in p.callsites() {
            if let Some(&t) = idx.get(callee) {
                g.update_edge(idx[p.name.as_str()], t, ());
                if callee == p.name {
                    out.insert(p.name.clone());
                }
            }
        }
    }
    for scc in tarjan_scc(&g) {
        if scc.len() > 1 {
            out.extend(scc.into_iter().map(|n| g[n].to_string()));
        }
    }
    out
}

/// Exclusive execution cycles per procedure: Σ count × block length.
fn procedure_times(program: &Program, profile: Option<&ExecutionProfile>) -> Result<BTreeMap<String, Weight>, HeuristicError> {
    if profile.is_none() && !program.has_weights() {
        return Err(HeuristicError::MissingProfile);
    }
    let mut t = BTreeMap::new();
    for p in program.procedures.values() {
        let total: Weight = p
            .blocks
            .values()
            .map(|b| {
                let n = match profile {
                    Some(prof) => Weight::from_count(prof.count(&crate::ir::BlockRef::new(p.name.clone(), b.id.clone()))),
                    Option::None => b.weight.clone(),
                };
                &n * &Weight::from_count(b.len() as u64)
            })
            .sum();
        t.insert(p.name.clone(), total);
    }
    Ok(t)
}

/// Order in which procedures are considered. Falls back to block weights
/// when `profile` is absent. Ties go to the smaller procedure, then name.
pub fn order_procedures(
    program: &Program,
    policy: FirstOrderPolicy,
    profile: Option<&ExecutionProfile>,
) -> Result<Vec<String>, HeuristicError> {
    let mut names: Vec<&Procedure> = program.procedures.values().collect();
    names.sort_by(|a, b| a.name.cmp(&b.name));
    match policy {
        FirstOrderPolicy::None => {}
        FirstOrderPolicy::ProfileTimeDesc => {
            let t = procedure_times(program, profile)?;
            names.sort_by_key(|p| (Reverse(t[&p.name].clone()), p.code_size()));
        }
        FirstOrderPolicy::CallsitesDescThenSizeAsc => {
            names.sort_by_key(|p| (Reverse(p.callsites().count()), p.code_size()));
        }
        FirstOrderPolicy::LoopCallWeightDescThenSizeAsc => {
            names.sort_by_key(|p| {
                let lw = loop_call_weight(p, &crate::profiler::loop_depths(p), LOOP_DEPTH_WEIGHT);
                (Reverse(lw), p.code_size())
            });
        }
    }
    Ok(names.into_iter().map(|p| p.name.clone()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyGate {
    Size,
    Frequency,
    Loopweight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Ok,
    ParamMismatch,
    RecursiveBlocked,
    GrowthLimit,
    External,
    PolicyRejected(PolicyGate),
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reason::Ok => f.write_str("ok"),
            Reason::ParamMismatch => f.write_str("param_mismatch"),
            Reason::RecursiveBlocked => f.write_str("recursive_blocked"),
            Reason::GrowthLimit => f.write_str("growth_limit"),
            Reason::External => f.write_str("external"),
            Reason::PolicyRejected(g) => {
                let g = match g {
                    PolicyGate::Size => "size",
                    PolicyGate::Frequency => "frequency",
                    PolicyGate::Loopweight => "loopweight",
                };
                write!(f, "policy_rejected({g})")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Eligibility {
    pub allowed: bool,
    pub reason: Reason,
}

impl From<Reason> for Eligibility {
    fn from(reason: Reason) -> Self {
        Eligibility {
            allowed: reason == Reason::Ok,
            reason,
        }
    }
}

/// Program size now and before any inlining, both in instructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GrowthState {
    pub original: usize,
    pub current: usize,
}

impl GrowthState {
    /// `current < original × (1 + limit)`, evaluated exactly.
    pub fn below_limit(&self, limit: f64) -> bool {
        let limit = Weight::from_decimal(limit).unwrap_or_default().as_rational().clone();
        let cap = BigRational::from_integer(self.original.into()) * (BigRational::from_integer(1.into()) + limit);
        BigRational::from_integer(self.current.into()) < cap
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CalleeStats {
    pub size: usize,
    pub loop_call_weight: u64,
    pub recursive: bool,
}

/// Second-order gates for one site. `seed_weight` is the weight of the seed
/// of the region being grown; with no region under way the frequency gate
/// passes.
pub fn should_inline(
    site: &Callsite,
    stats: &CalleeStats,
    policy: &SecondOrderPolicy,
    growth: GrowthState,
    seed_weight: Option<&Weight>,
) -> Eligibility {
    if policy.block_recursion && stats.recursive {
        return Reason::RecursiveBlocked.into();
    }
    if !growth.below_limit(policy.growth_limit) {
        return Reason::GrowthLimit.into();
    }
    if policy.max_callee_size.is_some_and(|m| stats.size > m) {
        return Reason::PolicyRejected(PolicyGate::Size).into();
    }
    if let (Some(r), Some(seed)) = (policy.frequency_ratio, seed_weight) {
        let r = Weight::from_decimal(r).unwrap_or_default();
        if site.frequency < &r * seed {
            return Reason::PolicyRejected(PolicyGate::Frequency).into();
        }
    }
    if policy.min_loop_call_weight.is_some_and(|m| stats.loop_call_weight < m) {
        return Reason::PolicyRejected(PolicyGate::Loopweight).into();
    }
    Reason::Ok.into()
}
