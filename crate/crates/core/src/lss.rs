//! Locality-sensitive sampling.
//!
//! A decay function `p` is approximated from below by a staircase: level `r` is an LSH table
//! set over an independent `rho_r`-subsample whose hash parameters make every item within
//! `gamma_r = sup{x : p(x) >= 2^-r}` of the query come back with probability at least 1/2.
//! The union of all levels plus a `rho_0` baseline subsample contains each item `v` with
//! probability at least `p(d(v, u)) / 2`.
//!
//! Container blob (`LSS1`, little-endian):
//!
//! ```text
//! "LSS1" | seed u64 | dim u32
//!        | n u64 | beta f64 | c f64 | delta f64 | level rule u8 | rho_0 f64 | cutoff f64
//!        | R u32 | R x ( r u32 | rho f64 | active u8 [ gamma f64 | a u32 | b u32 ] )
//!        | baseline count u64 | baseline item ids u64
//!        | per active level: blob length u64 | LSH1 blob
//! ```

use std::fs;
use std::path::Path;

use indexmap::IndexSet;

use crate::choice::DecayFunction;
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::lsh::{q, retrieval_prob, LshTableSet, MAX_KEY_BITS};
use crate::model::{check_dims, chord, Item, ItemId, ItemUniverse, UnitVector};
use crate::rng::{coin, derive_seed};

pub const LSS_MAGIC: &[u8; 4] = b"LSS1";

/// Failure probability allowed to each level's near-neighbor structure.
pub const ANN_EPSILON: f64 = 0.5;

/// Largest `c * gamma_r` fed to `q`; at distance 2 the collision probability is zero.
pub const MAX_HASH_RADIUS: f64 = 2.0 - 1e-9;

/// Bisection tolerance for `gamma_r`.
pub const GAMMA_TOLERANCE: f64 = 1e-9;

const MAX_TABLES: u32 = 1 << 16;
const BASELINE_TAG: u64 = 0xBA5E;

/// How many levels to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelRule {
    /// `R = floor(log2 n^(1 - beta))`.
    #[default]
    Definition,
    /// `R = ceil(1 + log2 n)`.
    Extended,
}

impl LevelRule {
    pub fn level_count(self, n: usize, beta: f64) -> u32 {
        let lg = (n.max(1) as f64).log2();
        match self {
            LevelRule::Definition => ((1.0 - beta) * lg + 1e-9).floor().max(0.0) as u32,
            LevelRule::Extended => (1.0 + lg - 1e-9).ceil().max(0.0) as u32,
        }
    }

    fn code(self) -> u8 {
        match self {
            LevelRule::Definition => 0,
            LevelRule::Extended => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(LevelRule::Definition),
            1 => Ok(LevelRule::Extended),
            other => Err(Error::malformed(format!("unknown level rule {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanConfig {
    /// Candidate budget exponent in `[0, 1)`.
    pub beta: f64,
    /// Near-neighbor approximation factor, `> 1`.
    pub c: f64,
    /// Hash-quality exponent in `(0, 1)`; `1/c` for hyperplanes.
    pub delta: f64,
    pub levels: LevelRule,
}

impl PlanConfig {
    pub fn new(beta: f64, c: f64) -> Self {
        Self {
            beta,
            c,
            delta: 1.0 / c,
            levels: LevelRule::Definition,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::param(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if !(self.c.is_finite() && self.c > 1.0) {
            return Err(Error::param(format!("c must exceed 1, got {}", self.c)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelParams {
    pub gamma: f64,
    pub a: u32,
    pub b: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub r: u32,
    pub rho: f64,
    /// `None` when `p` never reaches `2^-r`.
    pub params: Option<LevelParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelPlan {
    pub n: usize,
    pub config: PlanConfig,
    pub rho0: f64,
    /// Distance beyond which `p` vanishes.
    pub cutoff: f64,
    pub levels: Vec<Level>,
}

impl LevelPlan {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn active(&self) -> impl Iterator<Item = (&Level, &LevelParams)> {
        self.levels.iter().filter_map(|l| l.params.as_ref().map(|p| (l, p)))
    }

    /// Expected number of stored item slots, `sum_r rho_r n b_r`.
    pub fn expected_slots(&self, n: usize) -> f64 {
        self.active().map(|(l, p)| l.rho * n as f64 * p.b as f64).sum()
    }

    /// Pruning radius for level candidates: `min(c gamma_r, cutoff)`.
    fn prune_radius(&self, params: &LevelParams) -> f64 {
        (self.config.c * params.gamma).min(self.cutoff)
    }
}

/// `rho_r = 1/(2^r - 1)` below the top level, `1/2^(R-1)` at `r = R`.
pub fn level_rho(r: u32, levels: u32) -> f64 {
    if r < levels {
        1.0 / ((2f64).powi(r as i32) - 1.0)
    } else {
        1.0 / (2f64).powi(r as i32 - 1)
    }
}

/// `sup{x in [0, cutoff] : p(x) >= t}` by bisection, or `None` if `p(0) < t`.
pub fn level_radius(p: &DecayFunction, t: f64) -> Option<f64> {
    if p.value(0.0) < t {
        return None;
    }
    let cutoff = p.cutoff().min(2.0);
    if p.value(cutoff) >= t {
        return Some(cutoff);
    }
    let (mut lo, mut hi) = (0.0f64, cutoff);
    while hi - lo > GAMMA_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if p.value(mid) >= t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

fn hash_params(r: u32, n: usize, gamma: f64, cfg: &PlanConfig) -> Result<(u32, u32)> {
    let n = n as f64;
    let target = (2f64).powi(r as i32) * n.powf(cfg.beta - 1.0);
    let far = q((cfg.c * gamma).min(MAX_HASH_RADIUS));
    let a = if target >= 1.0 {
        1.0
    } else if far >= 1.0 {
        f64::INFINITY
    } else {
        (target.ln() / far.ln()).ceil().max(1.0)
    };
    if a > MAX_KEY_BITS as f64 {
        return Err(Error::Guard {
            what: "hash width a_r",
            value: a,
            limit: MAX_KEY_BITS as f64,
        });
    }
    let a = a as u32;
    let near = q(gamma);
    let b_formula =
        (std::f64::consts::LN_2 * (2f64).powf(-(r as f64) * cfg.delta) * n.powf(cfg.delta * (1.0 - cfg.beta)) / near)
            .ceil()
            .max(1.0);
    // The formula presumes log_{q(c x)} q(x) <= delta; enforce the per-level 1/2 directly.
    let hit = near.powi(a as i32);
    let b_needed = if hit >= 1.0 {
        1.0
    } else if hit <= 0.0 {
        f64::INFINITY
    } else {
        ((1.0 - ANN_EPSILON).ln() / (1.0 - hit).ln()).ceil().max(1.0)
    };
    let mut b = b_formula.max(b_needed);
    if b > MAX_TABLES as f64 {
        return Err(Error::Guard {
            what: "table count b_r",
            value: b,
            limit: MAX_TABLES as f64,
        });
    }
    // ceil() on a ratio landing a hair under an integer can undershoot by one
    while retrieval_prob(gamma, a, b as u32) < 1.0 - ANN_EPSILON {
        b += 1.0;
    }
    Ok((a, b as u32))
}

/// Level parameters for sampling `n` items proportionally to at least `p(d)/2`.
pub fn plan_levels(p: &DecayFunction, n: usize, cfg: PlanConfig) -> Result<LevelPlan> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::param("cannot plan levels for an empty universe"));
    }
    let count = cfg.levels.level_count(n, cfg.beta);
    let mut levels = Vec::with_capacity(count as usize);
    for r in 1..=count {
        let rho = level_rho(r, count);
        let params = match level_radius(p, (0.5f64).powi(r as i32)) {
            None => None,
            Some(gamma) => {
                let (a, b) = hash_params(r, n, gamma, &cfg)?;
                Some(LevelParams { gamma, a, b })
            }
        };
        levels.push(Level { r, rho, params });
    }
    Ok(LevelPlan {
        n,
        config: cfg,
        rho0: (0.5 * (n as f64).powf(cfg.beta - 1.0)).min(1.0),
        cutoff: p.cutoff(),
        levels,
    })
}

#[derive(Debug, Clone)]
pub struct LssIndex {
    plan: LevelPlan,
    seed: u64,
    dim: usize,
    baseline: IndexSet<ItemId>,
    /// Aligned with `plan.levels`; `None` for inactive levels.
    levels: Vec<Option<LshTableSet>>,
}

impl PartialEq for LssIndex {
    fn eq(&self, other: &Self) -> bool {
        self.to_bytes() == other.to_bytes()
    }
}

impl LssIndex {
    /// An index over no items.
    pub fn empty(plan: LevelPlan, dim: usize, seed: u64) -> Result<Self> {
        let levels = plan
            .levels
            .iter()
            .map(|l| {
                l.params
                    .map(|p| LshTableSet::new(dim, l.rho, p.a, p.b, derive_seed(seed, l.r as u64)))
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            plan,
            seed,
            dim,
            baseline: IndexSet::new(),
            levels,
        })
    }

    pub fn build(universe: &ItemUniverse, plan: LevelPlan, seed: u64) -> Result<Self> {
        let mut index = Self::empty(plan, universe.dim(), seed)?;
        for item in universe.items() {
            index.insert_item(item)?;
        }
        Ok(index)
    }

    pub fn plan(&self) -> &LevelPlan {
        &self.plan
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn baseline(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.baseline.iter().copied()
    }

    pub fn level_tables(&self) -> impl Iterator<Item = (&Level, &LshTableSet)> {
        self.plan
            .levels
            .iter()
            .zip(&self.levels)
            .filter_map(|(l, t)| t.as_ref().map(|t| (l, t)))
    }

    /// Item slots across all tables of all levels.
    pub fn stored_slots(&self) -> usize {
        self.level_tables().map(|(_, t)| t.len() * t.b() as usize).sum()
    }

    fn baseline_admits(&self, id: ItemId) -> bool {
        coin(derive_seed(self.seed, BASELINE_TAG), id.0) < self.plan.rho0
    }

    /// Add `item`; it joins each level and the baseline independently at that level's rate.
    pub fn insert_item(&mut self, item: &Item) -> Result<()> {
        check_dims(self.dim, item.embedding.dim())?;
        if self.baseline_admits(item.id) {
            self.baseline.insert(item.id);
        }
        for table in self.levels.iter_mut().flatten() {
            table.offer(item.id, &item.embedding)?;
        }
        Ok(())
    }

    /// Remove `id` everywhere; absent ids are ignored.
    pub fn remove_item(&mut self, id: ItemId) {
        self.baseline.shift_remove(&id);
        for table in self.levels.iter_mut().flatten() {
            table.remove(id);
        }
    }

    /// Baseline subsample plus every level's LSH collisions, unpruned.
    pub fn query(&self, u: &UnitVector) -> Result<Vec<ItemId>> {
        check_dims(self.dim, u.dim())?;
        let mut out: Vec<ItemId> = self.baseline.iter().copied().collect();
        for table in self.levels.iter().flatten() {
            table.collect_collisions(u, &mut out)?;
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Like [`LssIndex::query`], but level candidates farther than `min(c gamma_r, cutoff)`
    /// are dropped. The baseline is always kept, so the `p(d)/2` floor is unaffected.
    pub fn query_pruned(&self, u: &UnitVector, universe: &ItemUniverse) -> Result<Vec<ItemId>> {
        check_dims(self.dim, u.dim())?;
        let mut tagged: Vec<(ItemId, f64)> = Vec::new();
        let mut buf = Vec::new();
        for (level, table) in self.plan.levels.iter().zip(&self.levels) {
            let (Some(table), Some(params)) = (table, level.params.as_ref()) else {
                continue;
            };
            buf.clear();
            table.collect_collisions(u, &mut buf)?;
            let radius = self.plan.prune_radius(params);
            tagged.extend(buf.iter().map(|&id| (id, radius)));
        }
        tagged.sort_unstable_by(|x, y| x.0.cmp(&y.0).then(y.1.total_cmp(&x.1)));
        let mut out: Vec<ItemId> = self.baseline.iter().copied().collect();
        let mut last = None;
        for (id, radius) in tagged {
            if last == Some(id) {
                continue;
            }
            last = Some(id);
            let v = universe.embedding(id)?;
            if chord(v.as_slice(), u.as_slice()) <= radius {
                out.push(id);
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(LSS_MAGIC);
        w.u64(self.seed);
        w.u32(self.dim as u32);
        let plan = &self.plan;
        w.u64(plan.n as u64);
        w.f64(plan.config.beta);
        w.f64(plan.config.c);
        w.f64(plan.config.delta);
        w.u8(plan.config.levels.code());
        w.f64(plan.rho0);
        w.f64(plan.cutoff);
        w.u32(plan.levels.len() as u32);
        for l in &plan.levels {
            w.u32(l.r);
            w.f64(l.rho);
            match l.params {
                None => w.u8(0),
                Some(p) => {
                    w.u8(1);
                    w.f64(p.gamma);
                    w.u32(p.a);
                    w.u32(p.b);
                }
            }
        }
        w.u64(self.baseline.len() as u64);
        for id in &self.baseline {
            w.u64(id.0);
        }
        for table in self.levels.iter().flatten() {
            let blob = table.to_bytes();
            w.u64(blob.len() as u64);
            w.bytes(&blob);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(LSS_MAGIC)?;
        let seed = r.u64()?;
        let dim = r.u32()? as usize;
        let n = r.u64()? as usize;
        let config = PlanConfig {
            beta: r.f64()?,
            c: r.f64()?,
            delta: r.f64()?,
            levels: LevelRule::from_code(r.u8()?)?,
        };
        config.validate().map_err(|e| Error::malformed(format!("plan: {e}")))?;
        let rho0 = r.f64()?;
        let cutoff = r.f64()?;
        let count = r.u32()?;
        let mut levels = Vec::new();
        for _ in 0..count {
            let lr = r.u32()?;
            let rho = r.f64()?;
            let params = match r.u8()? {
                0 => None,
                1 => Some(LevelParams {
                    gamma: r.f64()?,
                    a: r.u32()?,
                    b: r.u32()?,
                }),
                other => return Err(Error::malformed(format!("bad level flag {other}"))),
            };
            levels.push(Level { r: lr, rho, params });
        }
        let plan = LevelPlan {
            n,
            config,
            rho0,
            cutoff,
            levels,
        };
        let nb = r.len(8)?;
        let mut baseline = IndexSet::with_capacity(nb);
        for _ in 0..nb {
            baseline.insert(ItemId(r.u64()?));
        }
        let mut tables = Vec::with_capacity(plan.levels.len());
        for l in &plan.levels {
            let Some(p) = l.params else {
                tables.push(None);
                continue;
            };
            let len = r.len(1)?;
            let t = LshTableSet::from_bytes(r.take(len)?)?;
            if t.a() != p.a || t.b() != p.b || t.rho() != l.rho || t.dim() != dim {
                return Err(Error::malformed(format!("level {} tables disagree with the plan", l.r)));
            }
            tables.push(Some(t));
        }
        r.finish()?;
        Ok(Self {
            plan,
            seed,
            dim,
            baseline,
            levels: tables,
        })
    }
}

pub fn build_lss(universe: &ItemUniverse, plan: &LevelPlan, seed: u64) -> Result<LssIndex> {
    LssIndex::build(universe, plan.clone(), seed)
}

pub fn query_lss(index: &LssIndex, u: &UnitVector) -> Result<Vec<ItemId>> {
    index.query(u)
}

pub fn insert_item(index: &mut LssIndex, item: &Item) -> Result<()> {
    index.insert_item(item)
}

pub fn remove_item(index: &mut LssIndex, id: ItemId) {
    index.remove_item(id)
}

pub fn persist_index(index: &LssIndex, path: &Path) -> Result<()> {
    fs::write(path, index.to_bytes())?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<LssIndex> {
    LssIndex::from_bytes(&fs::read(path)?)
}
