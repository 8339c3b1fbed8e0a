//! The sub-linear pipeline: query `s` independent sampling indices to prune the catalogue to
//! a small candidate set, then run greedy submodular maximization over the candidates.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use crate::choice::{attraction_table, mixture_objective, ChoiceModel, MnlAccumulator};
use crate::error::{Error, Result};
use crate::lss::{LevelPlan, LssIndex};
use crate::model::{ItemId, ItemUniverse, UserMixture};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    pub epsilon1: f64,
    pub epsilon2: f64,
    /// Per-draw inclusion floor as a fraction of `g({v})`; 1/2 for locality-sensitive sampling.
    pub sampling_floor: f64,
    pub s_override: Option<usize>,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            epsilon1: 0.1,
            epsilon2: 0.05,
            sampling_floor: 0.5,
            s_override: None,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epsilon1", self.epsilon1),
            ("epsilon2", self.epsilon2),
            ("sampling_floor", self.sampling_floor),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::param(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if self.s_override == Some(0) {
            return Err(Error::param("s_override must be at least 1"));
        }
        Ok(())
    }

    /// Ensemble size for cardinality `k`: the override if set, the bound otherwise.
    pub fn sample_count(&self, k: usize) -> Result<usize> {
        self.validate()?;
        match self.s_override {
            Some(s) => Ok(s),
            None => required_samples(k, self.sampling_floor, self.epsilon1, self.epsilon2),
        }
    }
}

/// `ceil((k / (c_s eps2)) ln(k / eps1))`, at least 1.
pub fn required_samples(k: usize, sampling_floor: f64, epsilon1: f64, epsilon2: f64) -> Result<usize> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    for (name, v) in [
        ("sampling_floor", sampling_floor),
        ("epsilon1", epsilon1),
        ("epsilon2", epsilon2),
    ] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::param(format!("{name} must lie in (0, 1], got {v}")));
        }
    }
    let k = k as f64;
    let s = (k / (sampling_floor * epsilon2) * (k / epsilon1).ln()).ceil();
    Ok(s.max(1.0) as usize)
}

/// A chosen offer set, in selection order.
#[derive(Debug, Clone, PartialEq)]
pub struct OfferSet {
    pub items: Vec<ItemId>,
    /// Mixture objective `g` of `items`.
    pub value: f64,
    /// Marginal gain realized at each greedy step.
    pub gains: Vec<f64>,
}

impl OfferSet {
    pub fn empty() -> Self {
        Self {
            items: Vec::new(),
            value: 0.0,
            gains: Vec::new(),
        }
    }

    /// Whether the realized gains never increased from one step to the next.
    pub fn gains_non_increasing(&self, tol: f64) -> bool {
        self.gains.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

/// `s` independently seeded sampling indices over the same universe.
#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<LssIndex>,
}

impl Ensemble {
    /// Build `s` members in parallel; member `i` is seeded with `derive_seed(seed, i)`.
    pub fn build(universe: &ItemUniverse, plan: &LevelPlan, s: usize, seed: u64) -> Result<Self> {
        let members = (0..s)
            .into_par_iter()
            .map(|i| LssIndex::build(universe, plan.clone(), derive_seed(seed, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { members })
    }

    pub fn from_members(members: Vec<LssIndex>) -> Self {
        Self { members }
    }

    pub fn members(&self) -> &[LssIndex] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Total stored item slots across members; the ensemble's dominant memory cost.
    pub fn stored_slots(&self) -> usize {
        self.members.iter().map(LssIndex::stored_slots).sum()
    }
}

/// Union over members of one pruned sampling query each, member `i` queried at a user type
/// drawn uniformly from the mixture.
pub fn prune<R: Rng + ?Sized>(
    ensemble: &[LssIndex],
    mixture: &UserMixture,
    universe: &ItemUniverse,
    rng: &mut R,
) -> Result<Vec<ItemId>> {
    if ensemble.is_empty() {
        return Err(Error::param("cannot prune with an empty ensemble"));
    }
    mixture.check_dim(universe.dim())?;
    let draws: Vec<usize> = (0..ensemble.len())
        .map(|_| rng.random_range(0..mixture.len()))
        .collect();
    let parts = ensemble
        .par_iter()
        .zip(draws.par_iter())
        .map(|(index, &t)| index.query_pruned(&mixture.types()[t], universe))
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<ItemId> = parts.into_iter().flatten().collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

struct GreedyState {
    candidates: Vec<ItemId>,
    table: Vec<crate::choice::Attraction>,
    m: usize,
    no_choice: f64,
    acc: Vec<MnlAccumulator>,
    current: Vec<f64>,
    taken: Vec<bool>,
}

impl GreedyState {
    fn new<M: ChoiceModel + ?Sized>(
        candidates: &[ItemId],
        mixture: &UserMixture,
        model: &M,
        universe: &ItemUniverse,
    ) -> Result<Self> {
        mixture.check_dim(universe.dim())?;
        let mut candidates = candidates.to_vec();
        candidates.sort_unstable();
        candidates.dedup();
        let table = attraction_table(&candidates, mixture, model, universe)?;
        let m = mixture.len();
        let no_choice = model.no_choice_weight();
        Ok(Self {
            taken: vec![false; candidates.len()],
            candidates,
            table,
            m,
            no_choice,
            acc: vec![MnlAccumulator::default(); m],
            current: vec![0.0; m],
        })
    }

    fn gain(&self, c: usize) -> f64 {
        let row = &self.table[c * self.m..(c + 1) * self.m];
        let total: f64 = row
            .iter()
            .zip(&self.acc)
            .zip(&self.current)
            .map(|((a, acc), cur)| acc.value_with(*a, self.no_choice) - cur)
            .sum();
        total / self.m as f64
    }

    fn take(&mut self, c: usize) {
        self.taken[c] = true;
        let row = &self.table[c * self.m..(c + 1) * self.m];
        for ((a, acc), cur) in row.iter().zip(self.acc.iter_mut()).zip(self.current.iter_mut()) {
            acc.add(*a);
            *cur = acc.value(self.no_choice);
        }
    }
}

#[derive(PartialEq)]
struct Entry {
    gain: f64,
    id: ItemId,
    pos: usize,
    stamp: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain.total_cmp(&other.gain).then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn finish<M: ChoiceModel + ?Sized>(
    items: Vec<ItemId>,
    gains: Vec<f64>,
    mixture: &UserMixture,
    model: &M,
    universe: &ItemUniverse,
) -> Result<OfferSet> {
    let value = mixture_objective(&items, mixture, model, universe)?;
    Ok(OfferSet { items, value, gains })
}

/// Greedy maximization of `g` over `candidates` with at most `k` picks.
///
/// Uses lazy evaluation: stale gains stay in a max-heap as upper bounds and are refreshed
/// only when they reach the top. Ties go to the smallest item id, so the result equals
/// [`greedy_plain`] for submodular models.
pub fn greedy<M: ChoiceModel + ?Sized>(
    candidates: &[ItemId],
    k: usize,
    mixture: &UserMixture,
    model: &M,
    universe: &ItemUniverse,
) -> Result<OfferSet> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    if !model.is_monotone_submodular() {
        return greedy_plain(candidates, k, mixture, model, universe);
    }
    let mut st = GreedyState::new(candidates, mixture, model, universe)?;
    let mut heap: BinaryHeap<Entry> = (0..st.candidates.len())
        .map(|pos| Entry {
            gain: st.gain(pos),
            id: st.candidates[pos],
            pos,
            stamp: 0,
        })
        .collect();
    let steps = k.min(st.candidates.len());
    let (mut items, mut gains) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
    for step in 0..steps {
        while let Some(top) = heap.pop() {
            if top.stamp == step {
                st.take(top.pos);
                items.push(top.id);
                gains.push(top.gain);
                break;
            }
            heap.push(Entry {
                gain: st.gain(top.pos),
                stamp: step,
                ..top
            });
        }
    }
    finish(items, gains, mixture, model, universe)
}

/// Textbook greedy: every step re-evaluates every remaining candidate.
pub fn greedy_plain<M: ChoiceModel + ?Sized>(
    candidates: &[ItemId],
    k: usize,
    mixture: &UserMixture,
    model: &M,
    universe: &ItemUniverse,
) -> Result<OfferSet> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    let mut st = GreedyState::new(candidates, mixture, model, universe)?;
    let steps = k.min(st.candidates.len());
    let (mut items, mut gains) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
    for _ in 0..steps {
        // candidates are sorted, so keeping the first strict maximum breaks ties by id
        let best = (0..st.candidates.len())
            .filter(|&c| !st.taken[c])
            .map(|c| (c, st.gain(c)))
            .fold(None, |best: Option<(usize, f64)>, (c, g)| match best {
                Some((_, bg)) if bg >= g => best,
                _ => Some((c, g)),
            });
        let Some((c, g)) = best else { break };
        st.take(c);
        items.push(st.candidates[c]);
        gains.push(g);
    }
    finish(items, gains, mixture, model, universe)
}

#[derive(Debug, Clone)]
pub struct Recommendation {
    pub offer: OfferSet,
    /// `|V~|`, the pruned candidate count.
    pub candidates: usize,
    pub samples: usize,
    pub prune_time: Duration,
    pub greedy_time: Duration,
}

/// Prune with the first `s` ensemble members, then run greedy over the survivors.
pub fn recommend<M: ChoiceModel + ?Sized, R: Rng + ?Sized>(
    ensemble: &Ensemble,
    mixture: &UserMixture,
    k: usize,
    config: &PruneConfig,
    model: &M,
    universe: &ItemUniverse,
    rng: &mut R,
) -> Result<Recommendation> {
    let s = config.sample_count(k)?;
    if ensemble.len() < s {
        return Err(Error::param(format!(
            "ensemble has {} members but {s} samples are required",
            ensemble.len()
        )));
    }
    let t0 = Instant::now();
    let candidates = prune(&ensemble.members()[..s], mixture, universe, rng)?;
    let t1 = Instant::now();
    let offer = greedy(&candidates, k, mixture, model, universe)?;
    let t2 = Instant::now();
    Ok(Recommendation {
        offer,
        candidates: candidates.len(),
        samples: s,
        prune_time: t1 - t0,
        greedy_time: t2 - t1,
    })
}
