//! Nearest-neighbor baselines: recommend the `k` items closest to one summary point of the
//! user's types.

use serde::{Deserialize, Serialize};

use crate::choice::{mixture_objective, ChoiceModel};
use crate::error::{Error, Result};
use crate::lss::LssIndex;
use crate::model::{chord, ItemId, ItemUniverse, UnitVector, UserMixture};
use crate::optimizer::OfferSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    /// Neighbors of the normalized mean of the types.
    Mean,
    /// Neighbors of the final type.
    Last,
}

/// Where neighbors come from.
#[derive(Debug, Clone, Copy)]
pub enum Neighbors<'a> {
    /// Linear scan over the whole universe.
    Exact,
    /// Candidates from a sampling index, ranked by exact distance.
    Index(&'a LssIndex),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub offer: OfferSet,
    pub query: UnitVector,
    /// Set when the types' mean had zero norm and the first type was used instead.
    pub fallback: bool,
}

/// The summary point for `kind`, plus whether the zero-mean fallback fired.
pub fn baseline_query(kind: BaselineKind, mixture: &UserMixture) -> (UnitVector, bool) {
    let types = mixture.types();
    match kind {
        BaselineKind::Last => (types[types.len() - 1].clone(), false),
        BaselineKind::Mean => {
            let mut sum = vec![0.0; mixture.dim()];
            for t in types {
                for (s, x) in sum.iter_mut().zip(t.as_slice()) {
                    *s += x;
                }
            }
            let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm <= 1e-9 * types.len() as f64 {
                return (types[0].clone(), true);
            }
            match UnitVector::normalize(&sum) {
                Ok(u) => (u, false),
                Err(_) => (types[0].clone(), true),
            }
        }
    }
}

/// The `k` items of `pool` closest to `u`, nearest first, ties by smallest id.
pub fn nearest(u: &UnitVector, pool: &[ItemId], k: usize, universe: &ItemUniverse) -> Result<Vec<ItemId>> {
    let mut scored = pool
        .iter()
        .map(|&id| Ok((chord(universe.embedding(id)?.as_slice(), u.as_slice()), id)))
        .collect::<Result<Vec<(f64, ItemId)>>>()?;
    let by = |a: &(f64, ItemId), b: &(f64, ItemId)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if scored.len() > k && k > 0 {
        scored.select_nth_unstable_by(k - 1, by);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by);
    scored.truncate(k);
    Ok(scored.into_iter().map(|(_, id)| id).collect())
}

pub fn baseline_recommend<M: ChoiceModel + ?Sized>(
    kind: BaselineKind,
    mixture: &UserMixture,
    k: usize,
    universe: &ItemUniverse,
    neighbors: Neighbors<'_>,
    model: &M,
) -> Result<BaselineOutcome> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    mixture.check_dim(universe.dim())?;
    let (query, fallback) = baseline_query(kind, mixture);
    let items = match neighbors {
        Neighbors::Exact => {
            let all: Vec<ItemId> = universe.ids().collect();
            nearest(&query, &all, k, universe)?
        }
        Neighbors::Index(index) => nearest(&query, &index.query(&query)?, k, universe)?,
    };
    let value = mixture_objective(&items, mixture, model, universe)?;
    Ok(BaselineOutcome {
        offer: OfferSet {
            items,
            value,
            gains: Vec::new(),
        },
        query,
        fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::{TruncatedMnl, TruncatedMnlParams};
    use crate::harness::synth::random_unit;
    use crate::rng::rng_from_seed;

    fn model() -> TruncatedMnl {
        TruncatedMnl::new(TruncatedMnlParams::new(0.5, 1.0, std::f64::consts::SQRT_2).unwrap()).unwrap()
    }

    #[test]
    fn single_type_mean_equals_last() {
        let mut rng = rng_from_seed(1);
        let uni = ItemUniverse::from_embeddings(4, (0..50).map(|_| random_unit(&mut rng, 4)).collect()).unwrap();
        let mix = UserMixture::single(random_unit(&mut rng, 4));
        let a = baseline_recommend(BaselineKind::Mean, &mix, 5, &uni, Neighbors::Exact, &model()).unwrap();
        let b = baseline_recommend(BaselineKind::Last, &mix, 5, &uni, Neighbors::Exact, &model()).unwrap();
        assert_eq!(a.offer.items, b.offer.items);
        assert!(!a.fallback);
    }

    #[test]
    fn antipodal_types_fall_back() {
        let u = UnitVector::normalize(&[0.3, -0.4, 0.5]).unwrap();
        let v = UnitVector::normalize(&[-0.3, 0.4, -0.5]).unwrap();
        let mix = UserMixture::new(vec![u.clone(), v]).unwrap();
        let (q, fallback) = baseline_query(BaselineKind::Mean, &mix);
        assert!(fallback);
        assert_eq!(q, u);
    }

    #[test]
    fn exact_scan_matches_sorting_everything() {
        let mut rng = rng_from_seed(2);
        let uni = ItemUniverse::from_embeddings(5, (0..100).map(|_| random_unit(&mut rng, 5)).collect()).unwrap();
        for _ in 0..20 {
            let mix = UserMixture::new((0..3).map(|_| random_unit(&mut rng, 5)).collect()).unwrap();
            let out = baseline_recommend(BaselineKind::Mean, &mix, 7, &uni, Neighbors::Exact, &model()).unwrap();
            let mut all: Vec<(f64, ItemId)> = uni
                .items()
                .iter()
                .map(|it| (it.embedding.distance(&out.query).unwrap(), it.id))
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let expect: Vec<ItemId> = all[..7].iter().map(|x| x.1).collect();
            assert_eq!(out.offer.items, expect);
        }
    }

    #[test]
    fn fewer_items_than_k() {
        let mut rng = rng_from_seed(3);
        let uni = ItemUniverse::from_embeddings(3, (0..3).map(|_| random_unit(&mut rng, 3)).collect()).unwrap();
        let mix = UserMixture::single(random_unit(&mut rng, 3));
        let out = baseline_recommend(BaselineKind::Last, &mix, 10, &uni, Neighbors::Exact, &model()).unwrap();
        assert_eq!(out.offer.items.len(), 3);
    }
}
