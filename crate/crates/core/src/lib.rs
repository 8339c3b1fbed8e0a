//! Sub-linear offer-set recommendation over embedded catalogues.
//!
//! Items and users live on the unit sphere. A choice model turns an offer set into an
//! expected conversion (or revenue). Locality-sensitive sampling indices prune the catalogue
//! to a small candidate set and greedy maximization picks the final offer set.

pub mod choice;
mod codec;
pub mod error;
pub mod harness;
pub mod lsh;
pub mod lss;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod rng;
pub mod vecfile;

pub use choice::{
    check_submodular_condition, conversion_tmnl, marginal_gain, mixture_objective, p_from_tmnl, revenue_mnl,
    Attraction, ChoiceModel, DecayFunction, MnlAccumulator, RevenueMnl, RevenueMnlParams, SubmodularityCheck,
    TruncatedMnl, TruncatedMnlParams,
};
pub use error::{Error, Result};
pub use lsh::{build_lsh, collision_prob, query_lsh, retrieval_prob, HyperplaneFamily, LshTableSet};
pub use lss::{
    build_lss, insert_item, load_index, persist_index, plan_levels, query_lss, remove_item, Level, LevelParams,
    LevelPlan, LevelRule, LssIndex, PlanConfig,
};
pub use model::{distance, unit_normalize, Item, ItemId, ItemUniverse, UnitVector, UserMixture};
pub use optimizer::{greedy, prune, recommend, required_samples, Ensemble, OfferSet, PruneConfig, Recommendation};
pub use rng::{derive_seed, rng_from_seed};
