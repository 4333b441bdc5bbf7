//! Profile-driven region formation within one procedure, plus the region
//! types shared by every strategy.

mod encap;
mod taildup;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::ir::{BlockId, BlockRef, CodeSize, Procedure, Program, Weight};

pub use encap::{encapsulate, reintegrate, EncapError, EncapsulatedRegion};
pub(crate) use encap::region_liveness;
pub use taildup::{side_entries, tail_duplicate};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RegionError {
    #[error("seed selection on an empty worklist")]
    EmptyWorklist,
    #[error("invalid region parameters: {0}")]
    BadParams(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionParams {
    pub desirability_ratio: f64,
    pub max_region_blocks: usize,
}

impl Default for RegionParams {
    fn default() -> Self {
        RegionParams {
            desirability_ratio: 0.5,
            max_region_blocks: 200,
        }
    }
}

impl RegionParams {
    pub fn check(&self) -> Result<(), RegionError> {
        if !(self.desirability_ratio > 0.0 && self.desirability_ratio <= 1.0) {
            return Err(RegionError::BadParams(format!(
                "desirability_ratio {} outside (0, 1]",
                self.desirability_ratio
            )));
        }
        if self.max_region_blocks == 0 {
            return Err(RegionError::BadParams("max_region_blocks must be at least 1".into()));
        }
        Ok(())
    }

    pub fn ratio(&self) -> Weight {
        Weight::from_decimal(self.desirability_ratio).unwrap_or_default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Local,
    Entry,
    Exit,
    PassThrough,
    Unclassified,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub id: usize,
    /// Procedure whose CFG holds the blocks.
    pub proc: String,
    /// Blocks in the order they joined the region.
    pub blocks: Vec<BlockId>,
    pub seed: BlockId,
    /// The one block through which control enters the region.
    pub entry: BlockId,
    pub kind: RegionKind,
}

impl Region {
    pub fn new(proc: impl Into<String>, seed: BlockId) -> Self {
        Region {
            id: 0,
            proc: proc.into(),
            blocks: vec![seed.clone()],
            entry: seed.clone(),
            seed,
            kind: RegionKind::Unclassified,
        }
    }

    pub fn contains(&self, b: &BlockId) -> bool {
        self.blocks.contains(b)
    }

    pub fn block_set(&self) -> BTreeSet<BlockId> {
        self.blocks.iter().cloned().collect()
    }

    pub fn refs(&self) -> impl Iterator<Item = BlockRef> + '_ {
        self.blocks.iter().map(|b| BlockRef::new(self.proc.clone(), b.clone()))
    }

    pub fn size(&self, proc: &Procedure) -> usize {
        self.blocks
            .iter()
            .filter_map(|b| proc.block(b))
            .map(CodeSize::code_size)
            .sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RegionSet {
    pub regions: Vec<Region>,
}

#[derive(Serialize)]
struct RegionJson {
    id: usize,
    kind: RegionKind,
    seed: String,
    blocks: Vec<String>,
    size: usize,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("block {0} is in no region")]
    Uncovered(BlockRef),
    #[error("block {0} is in more than one region")]
    Overlap(BlockRef),
    #[error("region {0} names missing block {1}")]
    Missing(usize, BlockRef),
}

impl RegionSet {
    /// Renumbers regions 0.. in their current order.
    pub fn renumber(&mut self) {
        for (i, r) in self.regions.iter_mut().enumerate() {
            r.id = i;
        }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Region index per block.
    pub fn owner_map(&self) -> BTreeMap<BlockRef, usize> {
        let mut m = BTreeMap::new();
        for (i, r) in self.regions.iter().enumerate() {
            for b in r.refs() {
                m.insert(b, i);
            }
        }
        m
    }

    /// Every block of `program` in exactly one region, and nothing else.
    pub fn check_partition(&self, program: &Program) -> Result<(), PartitionError> {
        let mut seen = BTreeSet::new();
        for r in &self.regions {
            for b in r.refs() {
                if program.block(&b).is_none() {
                    return Err(PartitionError::Missing(r.id, b));
                }
                if !seen.insert(b.clone()) {
                    return Err(PartitionError::Overlap(b));
                }
            }
        }
        match program.all_blocks().find(|b| !seen.contains(b)) {
            Some(b) => Err(PartitionError::Uncovered(b)),
            None => Ok(()),
        }
    }

    /// Membership as sets of block ids per procedure, ignoring order, ids,
    /// seeds and kinds.
    pub fn partition(&self) -> BTreeSet<(String, BTreeSet<BlockId>)> {
        self.regions
            .iter()
            .map(|r| (r.proc.clone(), r.block_set()))
            .collect()
    }

    pub fn to_json(&self, program: &Program) -> serde_json::Value {
        let list: Vec<RegionJson> = self
            .regions
            .iter()
            .map(|r| RegionJson {
                id: r.id,
                kind: r.kind,
                seed: format!("{}.{}", r.proc, r.seed),
                blocks: r.refs().map(|b| b.to_string()).collect(),
                size: program.proc(&r.proc).map(|p| r.size(p)).unwrap_or(0),
            })
            .collect();
        serde_json::to_value(list).expect("regions serialize")
    }
}

/// Highest weight in `worklist`; ties go to the lowest block id.
pub fn select_seed(proc: &Procedure, worklist: &BTreeSet<BlockId>) -> Result<BlockId, RegionError> {
    most_frequent(proc, worklist.iter()).ok_or(RegionError::EmptyWorklist)
}

/// Heaviest of `cands`, lowest id on ties.
pub(crate) fn most_frequent<'a>(proc: &Procedure, cands: impl Iterator<Item = &'a BlockId>) -> Option<BlockId> {
    let mut best: Option<(&Weight, &BlockId)> = None;
    for c in cands {
        let w = &proc.blocks[c].weight;
        best = match best {
            Some((bw, bid)) if bw > w || (bw == w && bid <= c) => Some((bw, bid)),
            _ => Some((w, c)),
        };
    }
    best.map(|(_, b)| b.clone())
}

/// Weight test shared by every growth step: `y` must reach the ratio of
/// both `x` and the seed, and the region must have room.
pub fn is_desirable(x: &Weight, y: &Weight, seed: &Weight, region_len: usize, params: &RegionParams) -> bool {
    let r = params.ratio();
    region_len < params.max_region_blocks && *y >= &r * x && *y >= &r * seed
}

/// In phased mode a call that survived inlining halts growth.
fn desirable_phased(proc: &Procedure, x: &BlockId, y: &BlockId, seed: &BlockId, len: usize, params: &RegionParams) -> bool {
    let b = &proc.blocks;
    !b[y].is_call() && is_desirable(&b[x].weight, &b[y].weight, &b[seed].weight, len, params)
}

/// Grows one region from `seed` over blocks still in `worklist`, removing
/// what it takes. Used by the phased partitioner.
fn grow_phased(proc: &Procedure, seed: BlockId, worklist: &mut BTreeSet<BlockId>, params: &RegionParams) -> Region {
    let preds = proc.preds();
    worklist.remove(&seed);
    let mut r = Region::new(proc.name.clone(), seed.clone());
    let mut path = vec![seed.clone()];

    let mut x = seed.clone();
    while let Some(y) = most_frequent(proc, proc.blocks[&x].succs.iter()) {
        if !worklist.contains(&y) || !desirable_phased(proc, &x, &y, &seed, r.blocks.len(), params) {
            break;
        }
        worklist.remove(&y);
        r.blocks.push(y.clone());
        path.push(y.clone());
        x = y;
    }

    let mut x = seed.clone();
    while let Some(y) = most_frequent(proc, preds[&x].iter()) {
        if !worklist.contains(&y) || !desirable_phased(proc, &x, &y, &seed, r.blocks.len(), params) {
            break;
        }
        worklist.remove(&y);
        r.blocks.push(y.clone());
        path.push(y.clone());
        r.entry = y.clone();
        x = y;
    }

    let mut stack = path;
    while let Some(x) = stack.pop() {
        for y in &proc.blocks[&x].succs {
            if worklist.contains(y) && desirable_phased(proc, &x, y, &seed, r.blocks.len(), params) {
                worklist.remove(y);
                r.blocks.push(y.clone());
                stack.push(y.clone());
            }
        }
    }
    r
}

/// Partitions one procedure into regions, numbered from 0. With
/// `tail_dup`, side entries are removed once the original blocks are
/// partitioned (see [`finish_tail_duplication`]).
pub fn form_regions_phased(proc: &Procedure, params: &RegionParams, tail_dup: bool) -> (Procedure, Vec<Region>) {
    let mut worklist: BTreeSet<BlockId> = proc.blocks.keys().cloned().collect();
    let mut out = Vec::new();
    while let Ok(seed) = select_seed(proc, &worklist) {
        let mut r = grow_phased(proc, seed, &mut worklist, params);
        r.id = out.len();
        out.push(r);
    }
    if !tail_dup {
        return (proc.clone(), out);
    }
    let mut next = out.len();
    finish_tail_duplication(proc, out, params, &mut next)
}

/// Upper bound on duplication rounds; each round only revisits regions
/// built from the previous round's clones.
const MAX_TD_ROUNDS: usize = 64;

/// Tail-duplicates every region with side entries, in order. The clones
/// are then partitioned among themselves with the same growth rules and
/// the new regions get the same treatment, until nothing is cloned. New
/// regions take ids from `next_id` and are local.
pub fn finish_tail_duplication(
    proc: &Procedure,
    mut regions: Vec<Region>,
    params: &RegionParams,
    next_id: &mut usize,
) -> (Procedure, Vec<Region>) {
    let mut proc = proc.clone();
    let mut from = 0;
    for _ in 0..MAX_TD_ROUNDS {
        let mut clones: BTreeSet<BlockId> = BTreeSet::new();
        for r in &regions[from..] {
            let (p, c) = tail_duplicate(&proc, r);
            proc = p;
            clones.extend(c);
        }
        if clones.is_empty() {
            break;
        }
        from = regions.len();
        while let Ok(seed) = select_seed(&proc, &clones) {
            let mut r = grow_phased(&proc, seed, &mut clones, params);
            r.id = *next_id;
            r.kind = RegionKind::Local;
            *next_id += 1;
            regions.push(r);
        }
    }
    (proc, regions)
}
