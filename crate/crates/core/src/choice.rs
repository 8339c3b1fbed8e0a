//! Choice-model evaluation.
//!
//! Both supported models are multinomial-logit shaped: every offered item `j` carries an
//! attraction weight `e_j` and a reward `r_j` for a given user, and
//!
//! ```text
//! f(S, u) = sum_{j in S} r_j e_j / (w + sum_{j in S} e_j)
//! ```
//!
//! Weights are reported on a common rescaled footing (`exp((v.u - 1) / sigma)` and
//! `w exp(-1 / sigma)`), which keeps `sigma` as small as 0.01 far from overflow. Random
//! utility models with non-Gumbel noise do not have this shape; they would need their own
//! [`ChoiceModel`] implementation evaluating the choice probability directly.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{inner_from_chord, ItemId, ItemUniverse, UnitVector, UserMixture};

/// Smallest accepted Gumbel scale; `1 / sigma` must stay well inside `exp`'s range.
pub const MIN_SIGMA: f64 = 1.0 / 700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attraction {
    pub weight: f64,
    pub reward: f64,
}

pub trait ChoiceModel: Send + Sync {
    /// Attraction of `item` (with embedding `v`) for a user of type `u`.
    fn attraction(&self, item: ItemId, v: &UnitVector, u: &UnitVector) -> Result<Attraction>;

    /// No-choice weight on the same scale as [`ChoiceModel::attraction`].
    fn no_choice_weight(&self) -> f64;

    /// Whether `f(., u)` is monotone submodular for every user type.
    fn is_monotone_submodular(&self) -> bool;

    /// `f(S, u)`.
    fn value(&self, set: &[ItemId], u: &UnitVector, universe: &ItemUniverse) -> Result<f64> {
        let mut acc = MnlAccumulator::default();
        for &id in set {
            let v = universe.embedding(id)?;
            acc.add(self.attraction(id, v, u)?);
        }
        Ok(acc.value(self.no_choice_weight()))
    }
}

/// Running numerator/denominator of an MNL-shaped objective for one user type.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MnlAccumulator {
    pub reward_weight: f64,
    pub weight: f64,
}

impl MnlAccumulator {
    pub fn add(&mut self, a: Attraction) {
        self.reward_weight += a.reward * a.weight;
        self.weight += a.weight;
    }

    pub fn value(&self, no_choice: f64) -> f64 {
        let den = no_choice + self.weight;
        if den > 0.0 {
            self.reward_weight / den
        } else {
            0.0
        }
    }

    /// Value after adding `a`, without mutating.
    pub fn value_with(&self, a: Attraction, no_choice: f64) -> f64 {
        let mut next = *self;
        next.add(a);
        next.value(no_choice)
    }
}

/// Conversion under a multinomial logit truncated to items with positive affinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedMnlParams {
    /// Gumbel scale.
    pub sigma: f64,
    /// No-choice weight.
    pub w: f64,
    /// Distance cutoff in `(0, 2]`.
    pub theta: f64,
}

impl TruncatedMnlParams {
    pub fn new(sigma: f64, w: f64, theta: f64) -> Result<Self> {
        let p = Self { sigma, w, theta };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with `w = exp(reference / sigma)`: an item with inner product `reference`
    /// converts with probability 1/2 when offered alone.
    pub fn with_reference_inner(sigma: f64, reference: f64, theta: f64) -> Result<Self> {
        Self::new(sigma, (reference / sigma).exp(), theta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= MIN_SIGMA) {
            return Err(Error::param(format!(
                "sigma must be >= {MIN_SIGMA}, got {}",
                self.sigma
            )));
        }
        if !(self.w.is_finite() && self.w >= 0.0) {
            return Err(Error::param(format!("w must be finite and >= 0, got {}", self.w)));
        }
        if !(self.theta > 0.0 && self.theta <= 2.0) {
            return Err(Error::param(format!("theta must lie in (0, 2], got {}", self.theta)));
        }
        Ok(())
    }

    /// Smallest inner product that still contributes: `v.u > max(0, 1 - theta^2/2)`.
    pub fn inner_floor(&self) -> f64 {
        inner_from_chord(self.theta).max(0.0)
    }

    /// Rescaled weight of an item with inner product `inner`.
    #[inline]
    pub fn weight(&self, inner: f64) -> f64 {
        if inner > self.inner_floor() {
            ((inner - 1.0) / self.sigma).exp()
        } else {
            0.0
        }
    }

    #[inline]
    pub fn rescaled_no_choice(&self) -> f64 {
        if self.w == 0.0 {
            0.0
        } else {
            (self.w.ln() - 1.0 / self.sigma).exp()
        }
    }

    /// Singleton conversion at inner product `inner`.
    pub fn singleton(&self, inner: f64) -> f64 {
        let e = self.weight(inner);
        MnlAccumulator {
            reward_weight: e,
            weight: e,
        }
        .value(self.rescaled_no_choice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedMnl {
    pub params: TruncatedMnlParams,
}

impl TruncatedMnl {
    pub fn new(params: TruncatedMnlParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl ChoiceModel for TruncatedMnl {
    fn attraction(&self, _item: ItemId, v: &UnitVector, u: &UnitVector) -> Result<Attraction> {
        let inner = v.dot(u)?;
        Ok(Attraction {
            weight: self.params.weight(inner),
            reward: 1.0,
        })
    }

    fn no_choice_weight(&self) -> f64 {
        self.params.rescaled_no_choice()
    }

    fn is_monotone_submodular(&self) -> bool {
        true
    }
}

/// Expected revenue under plain MNL with per-item revenues.
#[derive(Debug, Clone, PartialEq)]
pub struct RevenueMnlParams {
    pub revenues: HashMap<ItemId, f64>,
    pub w: f64,
}

impl RevenueMnlParams {
    pub fn new(revenues: HashMap<ItemId, f64>, w: f64) -> Result<Self> {
        if let Some((id, r)) = revenues.iter().find(|(_, r)| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::param(format!(
                "revenue of item {id} must be finite and >= 0, got {r}"
            )));
        }
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::param(format!("w must be finite and >= 0, got {w}")));
        }
        Ok(Self { revenues, w })
    }

    /// `(r_min, r_max)` over the configured revenues.
    pub fn revenue_range(&self) -> Option<(f64, f64)> {
        let mut it = self.revenues.values().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), r| (lo.min(r), hi.max(r))))
    }
}

/// Revenue MNL. Only monotone submodular when [`check_submodular_condition`] holds, so greedy
/// guarantees do not apply in general.
#[derive(Debug, Clone, PartialEq)]
pub struct RevenueMnl {
    pub params: RevenueMnlParams,
}

impl RevenueMnl {
    pub fn new(params: RevenueMnlParams) -> Self {
        Self { params }
    }
}

impl ChoiceModel for RevenueMnl {
    fn attraction(&self, item: ItemId, v: &UnitVector, u: &UnitVector) -> Result<Attraction> {
        let reward = *self.params.revenues.get(&item).ok_or(Error::MissingRevenue(item))?;
        Ok(Attraction {
            weight: (v.dot(u)? - 1.0).exp(),
            reward,
        })
    }

    fn no_choice_weight(&self) -> f64 {
        self.params.w * (-1.0f64).exp()
    }

    fn is_monotone_submodular(&self) -> bool {
        false
    }
}

pub fn conversion_tmnl(
    set: &[ItemId],
    u: &UnitVector,
    params: &TruncatedMnlParams,
    universe: &ItemUniverse,
) -> Result<f64> {
    TruncatedMnl::new(*params)?.value(set, u, universe)
}

pub fn revenue_mnl(set: &[ItemId], u: &UnitVector, params: &RevenueMnlParams, universe: &ItemUniverse) -> Result<f64> {
    RevenueMnl::new(params.clone()).value(set, u, universe)
}

/// Outcome of testing `r_min / r_max >= max_{|S| <= k} conversion(S, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmodularityCheck {
    pub holds: bool,
    pub revenue_ratio: f64,
    pub max_conversion: f64,
    /// Violating assortment and the index of the user type it was found for.
    pub witness: Option<(Vec<ItemId>, usize)>,
}

/// Check the revenue-spread condition under which revenue MNL is monotone submodular.
///
/// MNL conversion grows with the total attraction of the offered set, so for each user the
/// maximum over `|S| <= k` is attained by the `k` items of largest `v.u`; this is exact for
/// any universe size.
pub fn check_submodular_condition(
    universe: &ItemUniverse,
    params: &RevenueMnlParams,
    k: usize,
    users: &[UnitVector],
) -> Result<SubmodularityCheck> {
    let revenue_ratio = match params.revenue_range() {
        Some((lo, hi)) if hi > 0.0 => lo / hi,
        _ => 1.0,
    };
    let mut max_conversion = 0.0f64;
    let mut witness = None;
    for (ui, u) in users.iter().enumerate() {
        let mut scored = universe
            .items()
            .iter()
            .map(|it| Ok((it.embedding.dot(u)?, it.id)))
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.truncate(k);
        let total: f64 = scored.iter().map(|(ip, _)| (ip - 1.0).exp()).sum();
        let w = params.w * (-1.0f64).exp();
        let conv = if w + total > 0.0 { total / (w + total) } else { 0.0 };
        if conv > max_conversion {
            max_conversion = conv;
            if conv > revenue_ratio {
                witness = Some((scored.iter().map(|&(_, id)| id).collect(), ui));
            }
        }
    }
    Ok(SubmodularityCheck {
        holds: revenue_ratio >= max_conversion,
        revenue_ratio,
        max_conversion,
        witness,
    })
}

/// `g(S) = (1/m) sum_i f(S, u_i)`.
pub fn mixture_objective<M: ChoiceModel + ?Sized>(
    set: &[ItemId],
    mixture: &UserMixture,
    model: &M,
    universe: &ItemUniverse,
) -> Result<f64> {
    mixture.check_dim(universe.dim())?;
    let mut total = 0.0;
    for u in mixture.types() {
        total += model.value(set, u, universe)?;
    }
    Ok(total / mixture.len() as f64)
}

/// `g(S + v) - g(S)`.
pub fn marginal_gain<M: ChoiceModel + ?Sized>(
    set: &[ItemId],
    v: ItemId,
    mixture: &UserMixture,
    model: &M,
    universe: &ItemUniverse,
) -> Result<f64> {
    if set.contains(&v) {
        return Err(Error::AlreadySelected(v));
    }
    let mut with = set.to_vec();
    with.push(v);
    Ok(mixture_objective(&with, mixture, model, universe)? - mixture_objective(set, mixture, model, universe)?)
}

/// Attraction matrix for `candidates x mixture types`, row-major by candidate.
pub(crate) fn attraction_table<M: ChoiceModel + ?Sized>(
    candidates: &[ItemId],
    mixture: &UserMixture,
    model: &M,
    universe: &ItemUniverse,
) -> Result<Vec<Attraction>> {
    let mut out = Vec::with_capacity(candidates.len() * mixture.len());
    for &id in candidates {
        let v = universe.embedding(id)?;
        for u in mixture.types() {
            out.push(model.attraction(id, v, u)?);
        }
    }
    Ok(out)
}

/// Non-increasing map from distance to `[0, 1]` that vanishes beyond a cutoff.
#[derive(Clone)]
pub struct DecayFunction {
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    cutoff: f64,
    label: String,
}

impl fmt::Debug for DecayFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DecayFunction")
            .field("label", &self.label)
            .field("cutoff", &self.cutoff)
            .finish()
    }
}

const MONOTONE_GRID: usize = 1000;

impl DecayFunction {
    /// Wrap `eval`; values beyond `cutoff` are forced to zero and the result is checked to be
    /// non-increasing and `[0, 1]`-valued on a grid over `[0, 2]`.
    pub fn new(
        label: impl Into<String>,
        cutoff: f64,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(cutoff.is_finite() && cutoff >= 0.0) {
            return Err(Error::param(format!(
                "decay cutoff must be finite and >= 0, got {cutoff}"
            )));
        }
        let p = Self {
            eval: Arc::new(eval),
            cutoff,
            label: label.into(),
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let mut prev = f64::INFINITY;
        for i in 0..=MONOTONE_GRID {
            let x = 2.0 * i as f64 / MONOTONE_GRID as f64;
            let y = (self.eval)(x);
            if !(0.0..=1.0).contains(&y) {
                return Err(Error::param(format!("decay {} leaves [0,1] at x={x}: {y}", self.label)));
            }
            let y = self.value(x);
            if y > prev {
                return Err(Error::param(format!("decay {} increases at x={x}", self.label)));
            }
            prev = y;
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        if x > self.cutoff {
            0.0
        } else {
            (self.eval)(x)
        }
    }

    /// `p(x) = 0` for every `x > cutoff`.
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `p(x) = 1` for `x <= radius`, else 0.
    pub fn indicator(radius: f64) -> Result<Self> {
        Self::new(format!("indicator(x<={radius})"), radius, move |x| {
            if x <= radius {
                1.0
            } else {
                0.0
            }
        })
    }

    /// `min(factor * p, 1)`.
    pub fn inflated(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::param(format!("inflation factor must be positive, got {factor}")));
        }
        let inner = self.eval.clone();
        let cutoff = self.cutoff;
        Self::new(format!("min({factor}*{}, 1)", self.label), self.cutoff, move |x| {
            if x > cutoff {
                0.0
            } else {
                (factor * inner(x)).min(1.0)
            }
        })
    }

    /// `sum_v p(d_v / c)`; `c = 1` gives the expected ideal sample size around a user.
    pub fn total_mass(&self, distances: &[f64], contraction: f64) -> f64 {
        distances.iter().map(|&d| self.value(d / contraction)).sum()
    }
}

/// Singleton-conversion decay for truncated MNL:
/// `p(x) = e^{mu/sigma} / (w + e^{mu/sigma})` with `mu = 1 - x^2/2`, zero once the item is truncated.
pub fn p_from_tmnl(params: &TruncatedMnlParams) -> Result<DecayFunction> {
    params.validate()?;
    let p = *params;
    let cutoff = p.theta.min(std::f64::consts::SQRT_2);
    DecayFunction::new(
        format!("tmnl(sigma={},w={},theta={})", p.sigma, p.w, p.theta),
        cutoff,
        move |x| {
            if x >= cutoff {
                0.0
            } else {
                p.singleton(inner_from_chord(x))
            }
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{distance, Item};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_unit(rng: &mut impl Rng, d: usize) -> UnitVector {
        let raw: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        UnitVector::normalize(&raw).unwrap()
    }

    fn random_universe(rng: &mut impl Rng, n: usize, d: usize) -> ItemUniverse {
        ItemUniverse::from_embeddings(d, (0..n).map(|_| random_unit(rng, d)).collect()).unwrap()
    }

    fn e1(d: usize) -> UnitVector {
        let mut x = vec![0.0; d];
        x[0] = 1.0;
        UnitVector::normalize(&x).unwrap()
    }

    fn default_params() -> TruncatedMnlParams {
        TruncatedMnlParams::new(1.0, 10.0, std::f64::consts::SQRT_2).unwrap()
    }

    #[test]
    fn tmnl_closed_forms() {
        let u = e1(2);
        let uni = ItemUniverse::from_embeddings(
            2,
            vec![
                e1(2),
                UnitVector::normalize(&[0.0, 1.0]).unwrap(),
                UnitVector::normalize(&[-1.0, 0.2]).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(conversion_tmnl(&[], &u, &default_params(), &uni).unwrap(), 0.0);
        let e = std::f64::consts::E;
        let got = conversion_tmnl(&[ItemId(0)], &u, &default_params(), &uni).unwrap();
        assert!((got - e / (10.0 + e)).abs() < 1e-15);
        assert!((got - 0.213731).abs() < 1e-6);
        for sigma in [0.01, 0.3, 1.0] {
            for w in [0.0, 1.0, 1e6] {
                let p = TruncatedMnlParams::new(sigma, w, 2.0).unwrap();
                assert_eq!(conversion_tmnl(&[ItemId(1)], &u, &p, &uni).unwrap(), 0.0);
                assert_eq!(conversion_tmnl(&[ItemId(2)], &u, &p, &uni).unwrap(), 0.0);
            }
        }
        assert!(conversion_tmnl(&[ItemId(9)], &u, &default_params(), &uni).is_err());
    }

    #[test]
    fn small_sigma_does_not_overflow() {
        let p = TruncatedMnlParams::with_reference_inner(0.01, 0.95, 2.0).unwrap();
        assert!((p.singleton(0.95) - 0.5).abs() < 1e-12);
        assert!(p.singleton(1.0) > 0.99 && p.singleton(1.0) < 1.0);
        assert!(p.singleton(0.5) < 1e-15);
    }

    #[test]
    fn revenue_closed_forms() {
        let u = e1(2);
        let uni = ItemUniverse::from_embeddings(
            2,
            vec![
                UnitVector::normalize(&[0.0, 1.0]).unwrap(),
                e1(2),
                UnitVector::normalize(&[1.0, 1.0]).unwrap(),
            ],
        )
        .unwrap();
        let revs: HashMap<_, _> = [(ItemId(0), 2.0), (ItemId(1), 3.0), (ItemId(2), 3.0)].into();
        let params = RevenueMnlParams::new(revs, 1.0).unwrap();
        assert_eq!(revenue_mnl(&[], &u, &params, &uni).unwrap(), 0.0);
        let got = revenue_mnl(&[ItemId(0)], &u, &params, &uni).unwrap();
        assert!((got - 1.0).abs() < 1e-15);

        let flat: HashMap<_, _> = (0..3).map(|i| (ItemId(i), 4.5)).collect();
        let params = RevenueMnlParams::new(flat, 0.0).unwrap();
        for s in [
            vec![ItemId(0)],
            vec![ItemId(1), ItemId(2)],
            vec![ItemId(0), ItemId(1), ItemId(2)],
        ] {
            assert!((revenue_mnl(&s, &u, &params, &uni).unwrap() - 4.5).abs() < 1e-12);
        }
        let partial = RevenueMnlParams::new([(ItemId(0), 1.0)].into(), 1.0).unwrap();
        assert!(matches!(
            revenue_mnl(&[ItemId(1)], &u, &partial, &uni),
            Err(Error::MissingRevenue(ItemId(1)))
        ));
        assert!(RevenueMnlParams::new([(ItemId(0), -1.0)].into(), 1.0).is_err());
    }

    #[test]
    fn submodular_condition_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let uni = random_universe(&mut rng, 10, 4);
        let users: Vec<_> = (0..3).map(|_| random_unit(&mut rng, 4)).collect();
        let flat: HashMap<_, _> = uni.ids().map(|id| (id, 2.0)).collect();
        let c = check_submodular_condition(&uni, &RevenueMnlParams::new(flat, 1.0).unwrap(), 3, &users).unwrap();
        assert!(c.holds && c.witness.is_none());

        let spread: HashMap<_, _> = uni.ids().map(|id| (id, 1.0 + id.0 as f64)).collect();
        let c = check_submodular_condition(&uni, &RevenueMnlParams::new(spread, 0.0).unwrap(), 1, &users).unwrap();
        assert!(!c.holds);
        assert!((c.max_conversion - 1.0).abs() < 1e-15);
        assert!(c.witness.is_some());
    }

    /// Enumerates every `|S| <= k` and compares with the top-k shortcut.
    #[test]
    fn submodular_condition_matches_enumeration() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let uni = random_universe(&mut rng, 10, 3);
            let users: Vec<_> = (0..4).map(|_| random_unit(&mut rng, 3)).collect();
            let revs: HashMap<_, _> = uni.ids().map(|id| (id, rng.random_range(0.9..1.0))).collect();
            let params = RevenueMnlParams::new(revs, 500.0 * if seed % 2 == 0 { 1.0 } else { 0.001 }).unwrap();
            let k = 1 + (seed as usize % 4);
            let fast = check_submodular_condition(&uni, &params, k, &users).unwrap();

            let n = uni.len();
            let mut best = 0.0f64;
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize > k {
                    continue;
                }
                for u in &users {
                    let mut tot = 0.0;
                    for j in 0..n {
                        if mask & (1 << j) != 0 {
                            tot += uni.items()[j].embedding.dot(u).unwrap().exp();
                        }
                    }
                    let conv = if params.w + tot > 0.0 {
                        tot / (params.w + tot)
                    } else {
                        0.0
                    };
                    best = best.max(conv);
                }
            }
            assert!((best - fast.max_conversion).abs() < 1e-12, "seed {seed}");
            let (lo, hi) = params.revenue_range().unwrap();
            assert_eq!(fast.holds, lo / hi >= best, "seed {seed}");
        }
    }

    #[test]
    fn mixture_objective_is_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let uni = random_universe(&mut rng, 8, 3);
        let model = TruncatedMnl::new(TruncatedMnlParams::new(0.5, 2.0, 2.0).unwrap()).unwrap();
        let u1 = random_unit(&mut rng, 3);
        let u2 = random_unit(&mut rng, 3);
        let s = [ItemId(1), ItemId(4)];
        let single = mixture_objective(&s, &UserMixture::single(u1.clone()), &model, &uni).unwrap();
        assert_eq!(single, model.value(&s, &u1, &uni).unwrap());
        let pair = UserMixture::new(vec![u1.clone(), u2.clone()]).unwrap();
        let g = mixture_objective(&s, &pair, &model, &uni).unwrap();
        let f1 = model.value(&s, &u1, &uni).unwrap();
        let f2 = model.value(&s, &u2, &uni).unwrap();
        assert!((g - (f1 + f2) / 2.0).abs() < 1e-15);
        assert_eq!(mixture_objective(&[], &pair, &model, &uni).unwrap(), 0.0);
    }

    #[test]
    fn mixture_of_point_two_and_point_four() {
        // Two users seeing one item at inner products chosen so f = 0.2 and f = 0.4.
        let params = TruncatedMnlParams::new(0.5, 6.0, 2.0).unwrap();
        // f = e/(W + e) solved for the inner product
        let inner_for = |f: f64| params.sigma * (params.w * f / (1.0 - f)).ln();
        let (a, b) = (inner_for(0.2), inner_for(0.4));
        let item = e1(2);
        let user = |ip: f64| UnitVector::normalize(&[ip, (1.0 - ip * ip).sqrt()]).unwrap();
        let uni = ItemUniverse::from_embeddings(2, vec![item]).unwrap();
        let model = TruncatedMnl::new(params).unwrap();
        let mix = UserMixture::new(vec![user(a), user(b)]).unwrap();
        let g = mixture_objective(&[ItemId(0)], &mix, &model, &uni).unwrap();
        assert!((g - 0.3).abs() < 1e-12, "{g}");
    }

    #[test]
    fn marginal_gain_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let uni = random_universe(&mut rng, 15, 4);
        let mix = UserMixture::new((0..3).map(|_| random_unit(&mut rng, 4)).collect()).unwrap();
        let model = TruncatedMnl::new(TruncatedMnlParams::new(0.3, 3.0, 2.0).unwrap()).unwrap();
        let g1 = mixture_objective(&[ItemId(3)], &mix, &model, &uni).unwrap();
        assert_eq!(marginal_gain(&[], ItemId(3), &mix, &model, &uni).unwrap(), g1);

        let s = [ItemId(0), ItemId(5), ItemId(9)];
        for v in 10..15 {
            let v = ItemId(v);
            let mut sv = s.to_vec();
            sv.push(v);
            let expect = mixture_objective(&sv, &mix, &model, &uni).unwrap()
                - mixture_objective(&s, &mix, &model, &uni).unwrap();
            let got = marginal_gain(&s, v, &mix, &model, &uni).unwrap();
            assert_eq!(got, expect);
            assert!(got >= 0.0);
        }
        assert!(matches!(
            marginal_gain(&s, ItemId(5), &mix, &model, &uni),
            Err(Error::AlreadySelected(ItemId(5)))
        ));

        // an item facing away from every type is truncated out
        let away = UnitVector::normalize(&[-1.0, 0.0]).unwrap();
        let uni2 = ItemUniverse::from_embeddings(2, vec![away]).unwrap();
        let mix2 = UserMixture::new(vec![e1(2), UnitVector::normalize(&[0.3, 1.0]).unwrap()]).unwrap();
        assert_eq!(marginal_gain(&[], ItemId(0), &mix2, &model, &uni2).unwrap(), 0.0);
    }

    #[test]
    fn tmnl_decay_values() {
        let p = p_from_tmnl(&default_params()).unwrap();
        let e = std::f64::consts::E;
        assert!((p.value(0.0) - e / (10.0 + e)).abs() < 1e-15);
        // closed form 1 - 10/(10 + exp(1 - x^2/2))
        for x in [0.0, 0.3, 0.9, 1.3] {
            let direct = 1.0 - 10.0 / (10.0 + (1.0 - x * x / 2.0f64).exp());
            assert!((p.value(x) - direct).abs() < 1e-12);
        }
        let below = std::f64::consts::SQRT_2 * (1.0 - 1e-12);
        assert!((p.value(below) - 1.0 / 11.0).abs() < 1e-9);
        for x in [std::f64::consts::SQRT_2, 1.5, 2.0] {
            assert_eq!(p.value(x), 0.0);
        }
        let narrow = p_from_tmnl(&TruncatedMnlParams::new(0.2, 1.0, 0.5).unwrap()).unwrap();
        assert_eq!(narrow.value(0.5), 0.0);
        assert!(narrow.value(0.49) > 0.0);
    }

    #[test]
    fn decay_rejects_increasing_functions() {
        assert!(DecayFunction::new("bad", 2.0, |x| x / 2.0).is_err());
        assert!(DecayFunction::new("big", 2.0, |_| 1.5).is_err());
        let ind = DecayFunction::indicator(0.7).unwrap();
        assert_eq!(ind.value(0.7), 1.0);
        assert_eq!(ind.value(0.7000001), 0.0);
        let infl = p_from_tmnl(&default_params()).unwrap().inflated(1.9).unwrap();
        assert!((infl.value(0.0) - 1.9 * std::f64::consts::E / (10.0 + std::f64::consts::E)).abs() < 1e-15);
        assert_eq!(
            DecayFunction::indicator(0.5).unwrap().inflated(3.0).unwrap().value(0.1),
            1.0
        );
    }

    #[test]
    fn decay_upper_bounds_singleton_conversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (sigma, w, theta) in [
            (1.0, 10.0, std::f64::consts::SQRT_2),
            (0.05, 40.0, 1.0),
            (0.3, 0.0, 2.0),
        ] {
            let params = TruncatedMnlParams::new(sigma, w, theta).unwrap();
            let p = p_from_tmnl(&params).unwrap();
            for _ in 0..10_000 {
                let u = random_unit(&mut rng, 5);
                let v = random_unit(&mut rng, 5);
                let uni = ItemUniverse::new(
                    5,
                    vec![Item {
                        id: ItemId(0),
                        embedding: v.clone(),
                    }],
                )
                .unwrap();
                let f = conversion_tmnl(&[ItemId(0)], &u, &params, &uni).unwrap();
                let bound = p.value(distance(&u, &v).unwrap());
                assert!((bound - f).abs() <= 1e-12, "p={bound} f={f}");
            }
        }
    }

    #[test]
    fn tmnl_is_monotone_and_submodular_on_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let uni = random_universe(&mut rng, 12, 3);
        let model = TruncatedMnl::new(TruncatedMnlParams::new(0.4, 2.0, 2.0).unwrap()).unwrap();
        for _ in 0..1000 {
            let u = random_unit(&mut rng, 3);
            let mut ids: Vec<ItemId> = uni.ids().collect();
            for i in (1..ids.len()).rev() {
                ids.swap(i, rng.random_range(0..=i));
            }
            let v = ids[0];
            let t_len = rng.random_range(0..ids.len() - 1);
            let s_len = rng.random_range(0..=t_len);
            let t = &ids[1..1 + t_len];
            let s = &t[..s_len];
            let f = |set: &[ItemId]| model.value(set, &u, &uni).unwrap();
            let with = |set: &[ItemId]| {
                let mut x = set.to_vec();
                x.push(v);
                f(&x)
            };
            assert!(with(s) >= f(s) - 1e-15);
            assert!(with(s) - f(s) >= with(t) - f(t) - 1e-12);
        }
    }

    #[test]
    fn default_decay_mass_is_measurable() {
        // distances spread uniformly over [0, 2]: the mass is a fixed fraction of n, so the
        // implied budget exponent creeps towards one as n grows
        let p = p_from_tmnl(&default_params()).unwrap();
        let exps: Vec<f64> = [1_000usize, 100_000]
            .iter()
            .map(|&n| {
                let ds: Vec<f64> = (0..n).map(|i| 2.0 * (i as f64 + 0.5) / n as f64).collect();
                p.total_mass(&ds, 1.0).ln() / (n as f64).ln()
            })
            .collect();
        assert!(exps[0] < exps[1] && exps[1] < 1.0);
    }
}
