//! Fixtures shared by the criterion benchmarks.

use offerset_core::harness::synth::{distance_uniform, random_unit};
use offerset_core::{
    p_from_tmnl, plan_levels, rng_from_seed, ItemUniverse, LssIndex, PlanConfig, TruncatedMnl, TruncatedMnlParams,
    UnitVector, UserMixture,
};

/// Distance-uniform universe with one index planned for the default truncated-logit decay.
pub struct Fixture {
    pub universe: ItemUniverse,
    pub user: UnitVector,
    pub index: LssIndex,
    pub model: TruncatedMnl,
    pub params: TruncatedMnlParams,
}

pub fn fixture(n: usize, d: usize, seed: u64) -> Fixture {
    let (universe, user) = distance_uniform(n, d, seed).expect("valid dimensions");
    let params = TruncatedMnlParams::new(1.0, 10.0, std::f64::consts::SQRT_2).expect("valid model");
    let p = p_from_tmnl(&params).expect("valid decay");
    let plan = plan_levels(&p, n, PlanConfig::new(0.5, 2.0)).expect("plannable");
    let index = LssIndex::build(&universe, plan, seed).expect("buildable");
    Fixture {
        universe,
        user,
        index,
        model: TruncatedMnl::new(params).expect("valid model"),
        params,
    }
}

pub fn random_mixture(m: usize, d: usize, seed: u64) -> UserMixture {
    let mut rng = rng_from_seed(seed);
    UserMixture::new((0..m).map(|_| random_unit(&mut rng, d)).collect()).expect("non-empty")
}
