//! Experiment drivers: sampling probabilities by distance, the baseline comparison, and the
//! scaling sweep. Each returns a typed result that renders to a [`Table`].

use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::choice::{p_from_tmnl, DecayFunction, TruncatedMnl, TruncatedMnlParams};
use crate::error::{Error, Result};
use crate::harness::baseline::{baseline_recommend, BaselineKind, Neighbors};
use crate::harness::config::ExperimentConfig;
use crate::harness::report::Table;
use crate::harness::stats::{mean_se, power_law_fit, PowerLaw};
use crate::harness::synth::{cluster_mixture, distance_uniform, gen_synthetic, ClusterSpec, Synthetic};
use crate::lss::{plan_levels, LevelPlan, LssIndex};
use crate::model::{ItemId, ItemUniverse, UnitVector, UserMixture};
use crate::optimizer::{recommend, Ensemble};
use crate::rng::{derive_seed, rng_from_seed};

const DATA_TAG: u64 = 1;
const BUILD_TAG: u64 = 2;
const USER_TAG: u64 = 3;
const PRUNE_TAG: u64 = 4;

fn seeded(seed: u64, tag: u64, i: u64) -> u64 {
    derive_seed(derive_seed(seed, tag), i)
}

/// The `[data]` section's synthetic universe. For distance-uniform data this is exactly the
/// universe `run_sample_probs` measures.
pub fn generate(cfg: &ExperimentConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let d = &cfg.data;
    gen_synthetic(
        d.n,
        d.d,
        seeded(cfg.experiment.seed, DATA_TAG, 0),
        d.law,
        d.cluster_spec(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceBin {
    pub mid_distance: f64,
    pub p: f64,
    pub lower_bound: f64,
    pub frequency: f64,
    /// Standard error of the frequency across replications.
    pub standard_error: f64,
    pub items: usize,
}

#[derive(Debug, Clone)]
pub struct SampleProbsResult {
    pub bins: Vec<DistanceBin>,
    pub inflation: f64,
    pub plan: LevelPlan,
    pub replications: usize,
}

impl SampleProbsResult {
    /// Bins with `p(mid) > p_floor`, and how many of them reach `lower - 3 SE`.
    pub fn bound_check(&self, p_floor: f64) -> (usize, usize) {
        let checked: Vec<&DistanceBin> = self.bins.iter().filter(|b| b.p > p_floor).collect();
        let passed = checked
            .iter()
            .filter(|b| b.frequency >= b.lower_bound - 3.0 * b.standard_error)
            .count();
        (checked.len(), passed)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(vec![
            "mid_distance",
            "p",
            "lower_bound",
            "frequency",
            "standard_error",
            "items",
        ]);
        for b in &self.bins {
            t.push(vec![
                b.mid_distance.to_string(),
                b.p.to_string(),
                b.lower_bound.to_string(),
                b.frequency.to_string(),
                b.standard_error.to_string(),
                b.items.to_string(),
            ]);
        }
        let (checked, passed) = self.bound_check(0.02);
        t.note("inflation", self.inflation);
        t.note("rho0", self.plan.rho0);
        t.note("levels", self.plan.level_count());
        t.note("active_levels", self.plan.active().count());
        t.note("replications", self.replications);
        t.note("bins_checked", checked);
        t.note("bins_passing", passed);
        t
    }
}

/// Sampling frequency by distance for the truncated-logit decay in `cfg.model`.
pub fn run_sample_probs(cfg: &ExperimentConfig) -> Result<SampleProbsResult> {
    cfg.validate()?;
    let p = p_from_tmnl(&cfg.model.params()?)?;
    run_sample_probs_with(cfg, &p)
}

/// [`run_sample_probs`] for an arbitrary decay function on distance-uniform data.
///
/// The index is planned against `cfg.plan.inflation * p` (clipped to 1); since every item is
/// returned with at least half the planned probability, the reported lower bound is
/// `min(inflation * p, 1) / 2`.
pub fn run_sample_probs_with(cfg: &ExperimentConfig, p: &DecayFunction) -> Result<SampleProbsResult> {
    let seed = cfg.experiment.seed;
    let (universe, u) = distance_uniform(cfg.data.n, cfg.data.d, seeded(seed, DATA_TAG, 0))?;
    let planned = cfg.plan.planned_decay(p)?;
    let plan = plan_levels(&planned, universe.len(), cfg.plan.plan_config())?;

    let mut order: Vec<(f64, usize)> = universe
        .items()
        .iter()
        .enumerate()
        .map(|(i, it)| Ok((it.embedding.distance(&u)?, i)))
        .collect::<Result<_>>()?;
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let bin_size = cfg.experiment.bin_size;
    let bin_of_pos = {
        let mut v = vec![0usize; universe.len()];
        for (rank, &(_, pos)) in order.iter().enumerate() {
            v[pos] = rank / bin_size;
        }
        v
    };
    let bins = order.len().div_ceil(bin_size);

    let reps = cfg.experiment.replications;
    let counts = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let index = LssIndex::build(&universe, plan.clone(), seeded(seed, BUILD_TAG, rep as u64))?;
            let mut c = vec![0usize; bins];
            for id in index.query_pruned(&u, &universe)? {
                let pos = universe.position(id).ok_or(Error::UnknownItem(id))?;
                c[bin_of_pos[pos]] += 1;
            }
            Ok(c)
        })
        .collect::<Result<Vec<Vec<usize>>>>()?;

    let out = order
        .chunks(bin_size)
        .enumerate()
        .map(|(b, chunk)| {
            let len = chunk.len();
            let mid = chunk.iter().map(|x| x.0).sum::<f64>() / len as f64;
            let per_rep: Vec<f64> = counts.iter().map(|c| c[b] as f64 / len as f64).collect();
            let (frequency, standard_error) = mean_se(&per_rep);
            DistanceBin {
                mid_distance: mid,
                p: p.value(mid),
                lower_bound: planned.value(mid) / 2.0,
                frequency,
                standard_error,
                items: len,
            }
        })
        .collect();
    Ok(SampleProbsResult {
        bins: out,
        inflation: cfg.plan.inflation,
        plan,
        replications: reps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodScore {
    pub sigma: f64,
    pub method: &'static str,
    pub avg_conversion: f64,
    pub standard_error: f64,
    /// Fraction of users for which the method was best; ties split evenly.
    pub win_fraction: f64,
    /// Mean offered-from candidate count (`|V~|` for the pipeline, `n` for the baselines).
    pub mean_candidates: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkResult {
    pub scores: Vec<MethodScore>,
    pub samples: usize,
    pub mean_fallbacks: usize,
}

impl BenchmarkResult {
    pub fn score(&self, sigma: f64, method: &str) -> Option<&MethodScore> {
        self.scores.iter().find(|s| s.sigma == sigma && s.method == method)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(vec![
            "sigma",
            "method",
            "avg_conversion",
            "standard_error",
            "win_fraction",
            "mean_candidates",
        ]);
        for s in &self.scores {
            t.push(vec![
                s.sigma.to_string(),
                s.method.to_string(),
                s.avg_conversion.to_string(),
                s.standard_error.to_string(),
                s.win_fraction.to_string(),
                s.mean_candidates.to_string(),
            ]);
        }
        t.note("samples", self.samples);
        t.note("mean_fallbacks", self.mean_fallbacks);
        t
    }
}

pub const METHODS: [&str; 3] = ["lss", "mean", "last"];

/// Test users: each draws its types from a few random clusters, each type being the
/// embedding of a random item of that cluster.
pub fn benchmark_users(
    universe: &ItemUniverse,
    spec: ClusterSpec,
    count: usize,
    types: usize,
    clusters_per_user: usize,
    seed: u64,
) -> Result<Vec<UserMixture>> {
    let n = universe.len();
    let per_user = clusters_per_user.min(spec.clusters);
    (0..count)
        .map(|j| {
            let mut rng = rng_from_seed(seeded(seed, USER_TAG, j as u64));
            let chosen = sample(&mut rng, spec.clusters, per_user).into_vec();
            let picks = (0..types)
                .map(|_| {
                    let c = chosen[rng.random_range(0..chosen.len())];
                    let members = (n + spec.clusters - 1 - c) / spec.clusters;
                    if members == 0 {
                        return Err(Error::param(format!("cluster {c} has no items")));
                    }
                    let i = c + spec.clusters * rng.random_range(0..members);
                    Ok(universe.items()[i].embedding.clone())
                })
                .collect::<Result<Vec<UnitVector>>>()?;
            UserMixture::new(picks)
        })
        .collect()
}

fn win_shares(values: &[f64; 3]) -> [f64; 3] {
    let best = values.iter().cloned().fold(f64::MIN, f64::max);
    let tol = 1e-12 * best.abs().max(1e-300);
    let winners: Vec<bool> = values.iter().map(|&v| best - v <= tol).collect();
    let count = winners.iter().filter(|&&w| w).count() as f64;
    let mut out = [0.0; 3];
    for (o, w) in out.iter_mut().zip(winners) {
        if w {
            *o = 1.0 / count;
        }
    }
    out
}

/// Pipeline versus nearest-neighbor baselines on cluster-mixture data, for each sigma.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkResult> {
    cfg.validate()?;
    let b = &cfg.benchmark;
    let seed = cfg.experiment.seed;
    let spec = ClusterSpec {
        clusters: b.clusters,
        spread: b.spread,
    };
    let (universe, _) = cluster_mixture(b.n, b.d, seeded(seed, DATA_TAG, 1), spec)?;
    let users = benchmark_users(&universe, spec, b.mixtures, b.types, b.clusters_per_user, seed)?;
    let k = cfg.prune.k;
    let prune_cfg = cfg.prune.prune_config();
    let s = prune_cfg.sample_count(k)?;
    let mut scores = Vec::new();
    let mut fallbacks = 0;
    for (si, &sigma) in b.sigmas.iter().enumerate() {
        let params = TruncatedMnlParams::with_reference_inner(sigma, b.reference_inner, cfg.model.theta)?;
        let model = TruncatedMnl::new(params)?;
        let planned = cfg.plan.planned_decay(&p_from_tmnl(&params)?)?;
        let plan = plan_levels(&planned, universe.len(), cfg.plan.plan_config())?;
        let ensemble = Ensemble::build(&universe, &plan, s, seeded(seed, BUILD_TAG, si as u64))?;
        let outcomes = users
            .par_iter()
            .enumerate()
            .map(|(j, mix)| {
                let mut rng = rng_from_seed(seeded(seed, PRUNE_TAG, (si * b.mixtures + j) as u64));
                let rec = recommend(&ensemble, mix, k, &prune_cfg, &model, &universe, &mut rng)?;
                let mean = baseline_recommend(BaselineKind::Mean, mix, k, &universe, Neighbors::Exact, &model)?;
                let last = baseline_recommend(BaselineKind::Last, mix, k, &universe, Neighbors::Exact, &model)?;
                Ok((
                    [rec.offer.value, mean.offer.value, last.offer.value],
                    rec.candidates,
                    mean.fallback,
                ))
            })
            .collect::<Result<Vec<([f64; 3], usize, bool)>>>()?;
        fallbacks += outcomes.iter().filter(|o| o.2).count();
        let shares: Vec<[f64; 3]> = outcomes.iter().map(|o| win_shares(&o.0)).collect();
        let cand: Vec<f64> = outcomes.iter().map(|o| o.1 as f64).collect();
        for (mi, method) in METHODS.iter().enumerate() {
            let vals: Vec<f64> = outcomes.iter().map(|o| o.0[mi]).collect();
            let (avg, se) = mean_se(&vals);
            let win = shares.iter().map(|s| s[mi]).sum::<f64>() / users.len() as f64;
            let mean_candidates = if mi == 0 {
                mean_se(&cand).0
            } else {
                universe.len() as f64
            };
            scores.push(MethodScore {
                sigma,
                method,
                avg_conversion: avg,
                standard_error: se,
                win_fraction: win,
                mean_candidates,
            });
        }
    }
    Ok(BenchmarkResult {
        scores,
        samples: s,
        mean_fallbacks: fallbacks,
    })
}

/// Mean of the truncated-logit singleton conversion over distances uniform on `[0, 2]`.
pub fn mean_decay_uniform(params: &TruncatedMnlParams) -> f64 {
    let hi = params.theta.min(std::f64::consts::SQRT_2);
    let steps = 4000;
    let h = hi / steps as f64;
    let f = |x: f64| params.singleton(1.0 - x * x / 2.0);
    let mut sum = f(0.0) + f(hi * (1.0 - 1e-12));
    for i in 1..steps {
        sum += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0 / 2.0
}

/// The no-choice weight `w` giving expected total mass `n^beta` on distance-uniform data.
pub fn calibrate_no_choice(n: usize, beta: f64, sigma: f64, theta: f64) -> Result<f64> {
    let target = (n as f64).powf(beta - 1.0);
    let mass = |lw: f64| TruncatedMnlParams::new(sigma, lw.exp(), theta).map(|p| mean_decay_uniform(&p));
    let (mut lo, mut hi) = (1.0 / sigma - 60.0, 1.0 / sigma + 60.0);
    if mass(lo)? < target || mass(hi)? > target {
        return Err(Error::param(format!(
            "cannot reach mass fraction {target} with sigma {sigma}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    pub w: f64,
    /// `sum_v p(d(u, v))` on the generated data.
    pub mass: f64,
    pub active_levels: usize,
    pub mean_query_seconds: f64,
    pub query_standard_error: f64,
    /// Mean pruned candidate count.
    pub mean_candidates: f64,
    /// Mean raw collision count before pruning.
    pub mean_collisions: f64,
}

#[derive(Debug, Clone)]
pub struct ScalingResult {
    pub rows: Vec<ScalingRow>,
    pub time_fit: Option<PowerLaw>,
    pub candidate_fit: Option<PowerLaw>,
}

impl ScalingResult {
    pub fn table(&self) -> Table {
        let mut t = Table::new(vec![
            "n",
            "w",
            "mass",
            "active_levels",
            "mean_query_seconds",
            "query_standard_error",
            "mean_candidates",
            "mean_collisions",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.n.to_string(),
                r.w.to_string(),
                r.mass.to_string(),
                r.active_levels.to_string(),
                r.mean_query_seconds.to_string(),
                r.query_standard_error.to_string(),
                r.mean_candidates.to_string(),
                r.mean_collisions.to_string(),
            ]);
        }
        let fmt = |f: &Option<PowerLaw>| f.map_or("nan".to_string(), |f| f.exponent.to_string());
        t.note("time_exponent", fmt(&self.time_fit));
        t.note("candidate_exponent", fmt(&self.candidate_fit));
        t
    }
}

/// Query time and candidate count across catalogue sizes, with `w` re-tuned per size so the
/// decay's total mass stays at `n^beta`.
pub fn run_scaling(cfg: &ExperimentConfig) -> Result<ScalingResult> {
    cfg.validate()?;
    let sc = &cfg.scaling;
    let seed = cfg.experiment.seed;
    let mut rows = Vec::new();
    for &n in &sc.ns {
        let (universe, u) = distance_uniform(n, sc.d, seeded(seed, DATA_TAG, n as u64))?;
        let w = calibrate_no_choice(n, cfg.plan.beta, sc.sigma, cfg.model.theta)?;
        let params = TruncatedMnlParams::new(sc.sigma, w, cfg.model.theta)?;
        let p = p_from_tmnl(&params)?;
        let mass: f64 = universe
            .items()
            .iter()
            .map(|it| Ok(p.value(it.embedding.distance(&u)?)))
            .sum::<Result<f64>>()?;
        let planned = cfg.plan.planned_decay(&p)?;
        let plan = plan_levels(&planned, n, cfg.plan.plan_config())?;
        let indexes = (0..sc.builds)
            .into_par_iter()
            .map(|b| LssIndex::build(&universe, plan.clone(), seeded(seed, BUILD_TAG, (n * 1000 + b) as u64)))
            .collect::<Result<Vec<_>>>()?;
        let mut times = Vec::with_capacity(sc.builds * sc.queries);
        let mut collisions = Vec::with_capacity(sc.builds);
        let mut candidates = Vec::with_capacity(sc.builds);
        for index in &indexes {
            let mut size = 0;
            for _ in 0..sc.queries {
                let t0 = Instant::now();
                let out = index.query(&u)?;
                times.push(t0.elapsed().as_secs_f64());
                size = std::hint::black_box(out).len();
            }
            collisions.push(size as f64);
            candidates.push(index.query_pruned(&u, &universe)?.len() as f64);
        }
        let (mean_query_seconds, query_standard_error) = mean_se(&times);
        rows.push(ScalingRow {
            n,
            w,
            mass,
            active_levels: plan.active().count(),
            mean_query_seconds,
            query_standard_error,
            mean_candidates: mean_se(&candidates).0,
            mean_collisions: mean_se(&collisions).0,
        });
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let time_fit = power_law_fit(&ns, &rows.iter().map(|r| r.mean_query_seconds).collect::<Vec<_>>());
    let candidate_fit = power_law_fit(&ns, &rows.iter().map(|r| r.mean_candidates).collect::<Vec<_>>());
    Ok(ScalingResult {
        rows,
        time_fit,
        candidate_fit,
    })
}

/// Ids of the universe sorted by distance to `u`.
pub fn by_distance(universe: &ItemUniverse, u: &UnitVector) -> Result<Vec<(f64, ItemId)>> {
    let mut v = universe
        .items()
        .iter()
        .map(|it| Ok((it.embedding.distance(u)?, it.id)))
        .collect::<Result<Vec<_>>>()?;
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(v)
}
