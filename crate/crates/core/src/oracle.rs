//! Exact and brute-force reference implementations. Slow by design; used to check the
//! sampling indices and the optimizer on small instances.

use rand::Rng;
use rayon::prelude::*;

use crate::choice::{attraction_table, mixture_objective, ChoiceModel, MnlAccumulator};
use crate::error::{Error, Result};
use crate::model::{ItemId, ItemUniverse, UserMixture};
use crate::optimizer::OfferSet;
use crate::rng::rng_from_seed;

/// Largest subset count `exhaustive_opt` will enumerate.
pub const MAX_SUBSETS: f64 = 1e7;

/// `g({v})` for every item, in universe order.
pub fn singleton_values<M: ChoiceModel + ?Sized>(
    universe: &ItemUniverse,
    mixture: &UserMixture,
    model: &M,
) -> Result<Vec<f64>> {
    mixture.check_dim(universe.dim())?;
    universe
        .items()
        .par_iter()
        .map(|item| mixture_objective(&[item.id], mixture, model, universe))
        .collect()
}

/// Include every item independently with probability exactly `g({v})`.
pub fn ideal_sample<M: ChoiceModel + ?Sized, R: Rng + ?Sized>(
    universe: &ItemUniverse,
    mixture: &UserMixture,
    model: &M,
    rng: &mut R,
) -> Result<Vec<ItemId>> {
    let probs = singleton_values(universe, mixture, model)?;
    Ok(sample_independent(universe, &probs, rng))
}

/// Independent Bernoulli inclusion with precomputed per-item probabilities.
pub fn sample_independent<R: Rng + ?Sized>(universe: &ItemUniverse, probs: &[f64], rng: &mut R) -> Vec<ItemId> {
    universe
        .items()
        .iter()
        .zip(probs)
        .filter(|(_, &p)| rng.random::<f64>() < p)
        .map(|(item, _)| item.id)
        .collect()
}

/// `C(n, k)` as a float; exact for the ranges the guard cares about.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact optimum of `g` over all subsets of size at most `k`, by enumeration.
///
/// Among equal values the lexicographically first subset (by sorted item ids) wins.
pub fn exhaustive_opt<M: ChoiceModel + ?Sized>(
    universe: &ItemUniverse,
    k: usize,
    mixture: &UserMixture,
    model: &M,
) -> Result<OfferSet> {
    let mut ids: Vec<ItemId> = universe.ids().collect();
    ids.sort_unstable();
    exhaustive_over(&ids, k, mixture, model, universe)
}

/// [`exhaustive_opt`] restricted to `candidates`.
pub fn exhaustive_over<M: ChoiceModel + ?Sized>(
    candidates: &[ItemId],
    k: usize,
    mixture: &UserMixture,
    model: &M,
    universe: &ItemUniverse,
) -> Result<OfferSet> {
    mixture.check_dim(universe.dim())?;
    let mut ids = candidates.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let n = ids.len();
    let k = k.min(n);
    let count = binomial(n, k);
    if count > MAX_SUBSETS {
        return Err(Error::Guard {
            what: "subset count C(n, k)",
            value: count,
            limit: MAX_SUBSETS,
        });
    }
    let table = attraction_table(&ids, mixture, model, universe)?;
    let search = Search {
        table: &table,
        m: mixture.len(),
        no_choice: model.no_choice_weight(),
        n,
        k,
    };
    let mut best = (0.0, Vec::new());
    let mut chosen = Vec::with_capacity(k);
    let acc = vec![MnlAccumulator::default(); mixture.len()];
    best.0 = search.value(&acc);
    search.descend(0, &acc, &mut chosen, &mut best);
    let items: Vec<ItemId> = best.1.iter().map(|&i| ids[i]).collect();
    let value = mixture_objective(&items, mixture, model, universe)?;
    Ok(OfferSet {
        items,
        value,
        gains: Vec::new(),
    })
}

struct Search<'a> {
    table: &'a [crate::choice::Attraction],
    m: usize,
    no_choice: f64,
    n: usize,
    k: usize,
}

impl Search<'_> {
    fn value(&self, acc: &[MnlAccumulator]) -> f64 {
        acc.iter().map(|a| a.value(self.no_choice)).sum::<f64>() / self.m as f64
    }

    fn descend(&self, start: usize, acc: &[MnlAccumulator], chosen: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) {
        if chosen.len() == self.k {
            return;
        }
        let mut next = acc.to_vec();
        for i in start..self.n {
            next.copy_from_slice(acc);
            for (a, row) in next.iter_mut().zip(&self.table[i * self.m..(i + 1) * self.m]) {
                a.add(*row);
            }
            chosen.push(i);
            let v = self.value(&next);
            if v > best.0 {
                *best = (v, chosen.clone());
            }
            self.descend(i + 1, &next, chosen, best);
            chosen.pop();
        }
    }
}

/// Per-item inclusion frequencies of a randomized set sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionEstimate {
    /// Item ids in universe order.
    pub items: Vec<ItemId>,
    pub frequency: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub reps: usize,
}

impl InclusionEstimate {
    pub fn get(&self, id: ItemId) -> Option<(f64, f64)> {
        let i = self.items.iter().position(|&x| x == id)?;
        Some((self.frequency[i], self.standard_error[i]))
    }
}

/// Run `sampler(rep)` for `rep in 0..reps` (in parallel) and count how often each item shows
/// up. Duplicates within one draw count once.
pub fn estimate_inclusion<F>(sampler: F, universe: &ItemUniverse, reps: usize) -> Result<InclusionEstimate>
where
    F: Fn(usize) -> Result<Vec<ItemId>> + Sync,
{
    if reps < 2 {
        return Err(Error::param(format!("at least 2 replications required, got {reps}")));
    }
    let n = universe.len();
    let counts = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut seen = vec![false; n];
            for id in sampler(rep)? {
                let pos = universe.position(id).ok_or(Error::UnknownItem(id))?;
                seen[pos] = true;
            }
            Ok(seen)
        })
        .try_fold(
            || vec![0u64; n],
            |mut acc, seen: Result<Vec<bool>>| {
                for (c, s) in acc.iter_mut().zip(seen?) {
                    *c += s as u64;
                }
                Ok::<_, Error>(acc)
            },
        )
        .try_reduce(
            || vec![0u64; n],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;
    let frequency: Vec<f64> = counts.iter().map(|&c| c as f64 / reps as f64).collect();
    let standard_error = frequency.iter().map(|f| (f * (1.0 - f) / reps as f64).sqrt()).collect();
    Ok(InclusionEstimate {
        items: universe.ids().collect(),
        frequency,
        standard_error,
        reps,
    })
}

/// How the sample-average problem draws its user types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SaaSampling {
    /// `m` i.i.d. uniform draws from the ground-truth types.
    #[default]
    WithReplacement,
    /// The ground-truth types themselves; requires `m` to equal their count.
    FullSupport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaaGap {
    pub m: usize,
    /// Optimum under the ground-truth mixture.
    pub opt: f64,
    /// Per-trial `OPT - g(S*_m)` under the ground truth.
    pub gaps: Vec<f64>,
    pub mean_gap: f64,
    pub standard_error: f64,
}

/// Optimality gap of solving the problem on `m` sampled types instead of the full mixture.
#[allow(clippy::too_many_arguments)]
pub fn saa_gap<M: ChoiceModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    truth: &UserMixture,
    universe: &ItemUniverse,
    m: usize,
    k: usize,
    trials: usize,
    sampling: SaaSampling,
    rng: &mut R,
) -> Result<SaaGap> {
    if m == 0 || m > truth.len() {
        return Err(Error::param(format!("m must lie in [1, {}], got {m}", truth.len())));
    }
    if trials == 0 {
        return Err(Error::param("at least one trial required"));
    }
    if sampling == SaaSampling::FullSupport && m != truth.len() {
        return Err(Error::param(
            "full-support sampling requires m to equal the mixture size",
        ));
    }
    let opt = exhaustive_opt(universe, k, truth, model)?.value;
    let seeds: Vec<u64> = (0..trials).map(|_| rng.random()).collect();
    let gaps = seeds
        .par_iter()
        .map(|&seed| {
            let sample = match sampling {
                SaaSampling::FullSupport => truth.clone(),
                SaaSampling::WithReplacement => {
                    let mut r = rng_from_seed(seed);
                    let types = (0..m)
                        .map(|_| truth.types()[r.random_range(0..truth.len())].clone())
                        .collect();
                    UserMixture::new(types)?
                }
            };
            let solved = exhaustive_opt(universe, k, &sample, model)?;
            Ok(opt - mixture_objective(&solved.items, truth, model, universe)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean_gap, standard_error) = mean_and_se(&gaps);
    Ok(SaaGap {
        m,
        opt,
        gaps,
        mean_gap,
        standard_error,
    })
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::{TruncatedMnl, TruncatedMnlParams};
    use crate::harness::synth::random_unit;
    use crate::model::UnitVector;
    use crate::optimizer::greedy;

    fn model(sigma: f64, w: f64) -> TruncatedMnl {
        TruncatedMnl::new(TruncatedMnlParams::new(sigma, w, std::f64::consts::SQRT_2).unwrap()).unwrap()
    }

    fn instance(seed: u64, n: usize, m: usize, d: usize) -> (ItemUniverse, UserMixture) {
        let mut rng = rng_from_seed(seed);
        let uni = ItemUniverse::from_embeddings(d, (0..n).map(|_| random_unit(&mut rng, d)).collect()).unwrap();
        let mix = UserMixture::new((0..m).map(|_| random_unit(&mut rng, d)).collect()).unwrap();
        (uni, mix)
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(6, 2), 15.0);
        assert_eq!(binomial(25, 3), 2300.0);
        assert_eq!(binomial(3, 5), 0.0);
        assert_eq!(binomial(50, 25), 126_410_606_437_752.0);
    }

    #[test]
    fn ideal_sample_extremes() {
        // every item orthogonal or opposite to the user: zero conversion
        let u = UnitVector::normalize(&[1.0, 0.0]).unwrap();
        let far = vec![
            UnitVector::normalize(&[0.0, 1.0]).unwrap(),
            UnitVector::normalize(&[-1.0, 0.3]).unwrap(),
        ];
        let uni = ItemUniverse::from_embeddings(2, far).unwrap();
        let mix = UserMixture::single(u.clone());
        let mut rng = rng_from_seed(1);
        for _ in 0..100 {
            assert!(ideal_sample(&uni, &mix, &model(1.0, 10.0), &mut rng)
                .unwrap()
                .is_empty());
        }
        // no-choice weight zero makes a lone aligned item certain
        let uni =
            ItemUniverse::from_embeddings(2, vec![u.clone(), UnitVector::normalize(&[-1.0, 0.0]).unwrap()]).unwrap();
        for _ in 0..100 {
            assert_eq!(
                ideal_sample(&uni, &mix, &model(1.0, 0.0), &mut rng).unwrap(),
                vec![ItemId(0)]
            );
        }
    }

    #[test]
    fn ideal_sample_matches_singletons() {
        let (uni, mix) = instance(3, 100, 3, 4);
        let m = model(0.3, 2.0);
        let probs = singleton_values(&uni, &mix, &m).unwrap();
        let est = estimate_inclusion(
            |rep| Ok(sample_independent(&uni, &probs, &mut rng_from_seed(rep as u64))),
            &uni,
            10_000,
        )
        .unwrap();
        for (i, &p) in probs.iter().enumerate() {
            let se = (p * (1.0 - p) / 10_000.0).sqrt();
            assert!(
                (est.frequency[i] - p).abs() <= 3.0 * se + 1e-3,
                "item {i}: {} vs {p}",
                est.frequency[i]
            );
        }
    }

    #[test]
    fn expected_sample_size() {
        let (uni, mix) = instance(4, 200, 2, 3);
        let m = model(0.5, 1.0);
        let probs = singleton_values(&uni, &mix, &m).unwrap();
        let mean: f64 = probs.iter().sum();
        let var: f64 = probs.iter().map(|p| p * (1.0 - p)).sum();
        let mut rng = rng_from_seed(5);
        let reps = 2000;
        let total: usize = (0..reps)
            .map(|_| sample_independent(&uni, &probs, &mut rng).len())
            .sum();
        let avg = total as f64 / reps as f64;
        assert!(
            (avg - mean).abs() <= 3.0 * (var / reps as f64).sqrt(),
            "{avg} vs {mean}"
        );
    }

    #[test]
    fn deterministic_sampler_has_zero_error() {
        let (uni, _) = instance(6, 10, 1, 3);
        let est = estimate_inclusion(|_| Ok(vec![ItemId(2), ItemId(5), ItemId(2)]), &uni, 7).unwrap();
        for (i, (&f, &se)) in est.frequency.iter().zip(&est.standard_error).enumerate() {
            assert_eq!(f, if i == 2 || i == 5 { 1.0 } else { 0.0 });
            assert_eq!(se, 0.0);
        }
        assert_eq!(est.get(ItemId(5)), Some((1.0, 0.0)));
        assert!(estimate_inclusion(|_| Ok(vec![]), &uni, 1).is_err());
        assert!(matches!(
            estimate_inclusion(|_| Ok(vec![ItemId(99)]), &uni, 3),
            Err(Error::UnknownItem(ItemId(99)))
        ));
    }

    #[test]
    fn grand_set_when_k_equals_n() {
        let (uni, mix) = instance(7, 7, 3, 3);
        let opt = exhaustive_opt(&uni, 7, &mix, &model(0.5, 1.0)).unwrap();
        let mut items = opt.items.clone();
        items.sort();
        let all: Vec<ItemId> = uni.ids().collect();
        let grand = mixture_objective(&all, &mix, &model(0.5, 1.0), &uni).unwrap();
        assert!((opt.value - grand).abs() < 1e-12);
    }

    #[test]
    fn six_items_pairs_by_independent_enumeration() {
        let (uni, mix) = instance(8, 6, 1, 3);
        let m = model(0.4, 1.5);
        let u = &mix.types()[0];
        // conversion written out directly from the logit formula
        let f = |set: &[usize]| {
            let weights: Vec<f64> = set
                .iter()
                .map(|&i| uni.items()[i].embedding.dot(u).unwrap())
                .filter(|&x| x > 0.0)
                .map(|x| (x / 0.4).exp())
                .collect();
            let s: f64 = weights.iter().sum();
            s / (1.5 + s)
        };
        let mut table = vec![(f(&[]), vec![])];
        for i in 0..6 {
            table.push((f(&[i]), vec![i]));
            for j in i + 1..6 {
                table.push((f(&[i, j]), vec![i, j]));
            }
        }
        assert_eq!(table.len(), 22);
        let best = table.iter().fold(&table[0], |b, x| if x.0 > b.0 { x } else { b });
        let opt = exhaustive_opt(&uni, 2, &mix, &m).unwrap();
        assert!((opt.value - best.0).abs() < 1e-12);
        let ids: Vec<ItemId> = best.1.iter().map(|&i| ItemId(i as u64)).collect();
        assert_eq!(opt.items, ids);
    }

    #[test]
    fn guard_rejects_large_instances() {
        let (uni, mix) = instance(9, 60, 1, 3);
        match exhaustive_opt(&uni, 10, &mix, &model(1.0, 1.0)) {
            Err(Error::Guard { value, limit, .. }) => {
                assert!(value > limit);
                assert_eq!(limit, MAX_SUBSETS);
            }
            other => panic!("expected guard, got {other:?}"),
        }
    }

    #[test]
    fn greedy_is_within_the_classic_ratio() {
        for seed in 0..30 {
            let (uni, mix) = instance(200 + seed, 20, 5, 4);
            let m = model(0.3, 3.0);
            let opt = exhaustive_opt(&uni, 3, &mix, &m).unwrap();
            let ids: Vec<ItemId> = uni.ids().collect();
            let g = greedy(&ids, 3, &mix, &m, &uni).unwrap();
            assert!(g.value <= opt.value + 1e-12);
            assert!(
                g.value >= 0.632 * opt.value,
                "seed {seed}: {} vs {}",
                g.value,
                opt.value
            );
        }
    }

    #[test]
    fn full_support_has_zero_gap() {
        let (uni, mix) = instance(10, 10, 6, 3);
        let gap = saa_gap(
            &model(0.3, 1.0),
            &mix,
            &uni,
            6,
            2,
            5,
            SaaSampling::FullSupport,
            &mut rng_from_seed(0),
        )
        .unwrap();
        assert!(gap.gaps.iter().all(|&g| g == 0.0));
        assert!(saa_gap(
            &model(0.3, 1.0),
            &mix,
            &uni,
            5,
            2,
            5,
            SaaSampling::FullSupport,
            &mut rng_from_seed(0)
        )
        .is_err());
        assert!(saa_gap(
            &model(0.3, 1.0),
            &mix,
            &uni,
            7,
            2,
            5,
            SaaSampling::WithReplacement,
            &mut rng_from_seed(0)
        )
        .is_err());
    }

    #[test]
    fn union_of_ideal_samples_is_near_optimal() {
        // optimizing over a union of s ideal samples loses at most eps1*OPT + eps2 on average
        let (eps1, eps2, k) = (0.2, 0.1, 2);
        let s = crate::optimizer::required_samples(k, 1.0, eps1, eps2).unwrap();
        let mut rng = rng_from_seed(11);
        for seed in 0..5 {
            let (uni, mix) = instance(300 + seed, 15, 3, 3);
            let m = model(0.3, 2.0);
            let opt = exhaustive_opt(&uni, k, &mix, &m).unwrap().value;
            let probs = singleton_values(&uni, &mix, &m).unwrap();
            let trials = 200;
            let vals: Vec<f64> = (0..trials)
                .map(|_| {
                    let mut union: Vec<ItemId> = (0..s)
                        .flat_map(|_| sample_independent(&uni, &probs, &mut rng))
                        .collect();
                    union.sort();
                    union.dedup();
                    exhaustive_over(&union, k, &mix, &m, &uni).unwrap().value
                })
                .collect();
            let (mean, se) = mean_and_se(&vals);
            assert!(mean + 2.326 * se >= (1.0 - eps1) * opt - eps2, "{mean} vs {opt}");
        }
    }
}
