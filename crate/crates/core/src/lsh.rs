//! Hyperplane LSH and the subsampled multi-table structure `LSH_{rho,a,b}`.
//!
//! A table set keeps a `rho`-subsample of the items in `b` hash tables; table `j` keys an
//! item by the signs of its inner products with `a` Gaussian directions. A query returns every
//! stored item whose full `a`-bit key matches the query's key in at least one table.
//!
//! Blob layout (`LSH1`, little-endian):
//!
//! ```text
//! "LSH1" | seed u64 | rho f64 | a u32 | b u32 | dim u32
//!        | b*a*dim f64 directions (table-major, then bit, then coordinate)
//!        | member count u64 | per member: item_id u64, b keys u64
//! ```
//!
//! Members are stored in insertion order; buckets are rebuilt from the member keys on load,
//! so a load/save cycle reproduces the blob byte for byte.

use std::collections::HashMap;
use std::f64::consts::PI;

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::model::{check_dims, dot, inner_from_chord, ItemId, ItemUniverse, UnitVector};
use crate::rng::{coin, derive_seed, rng_from_seed};

pub const LSH_MAGIC: &[u8; 4] = b"LSH1";

/// Widest supported key.
pub const MAX_KEY_BITS: u32 = 64;

const SAMPLE_TAG: u64 = 0x5a4d_504c;
const HASH_TAG: u64 = 0x4841_5348;

/// Collision probability of one hyperplane hash for unit vectors at distance `x`:
/// `q(x) = 1 - arccos(1 - x^2/2) / pi`.
pub fn collision_prob(x: f64) -> Result<f64> {
    if !(0.0..=2.0).contains(&x) {
        return Err(Error::param(format!("distance must lie in [0, 2], got {x}")));
    }
    Ok(q(x))
}

#[inline]
pub(crate) fn q(x: f64) -> f64 {
    1.0 - inner_from_chord(x).clamp(-1.0, 1.0).acos() / PI
}

/// Random hyperplane hash functions on `S^{d-1}`; each function is one standard-normal
/// direction and hashes a vector to the sign of its inner product with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HyperplaneFamily {
    pub dim: usize,
    pub seed: u64,
}

impl HyperplaneFamily {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    /// `count` directions, concatenated.
    pub fn draw(&self, count: usize) -> Vec<f64> {
        let mut rng = rng_from_seed(self.seed);
        (0..count * self.dim).map(|_| rng.sample(StandardNormal)).collect()
    }
}

/// Sign bit, with a zero inner product counted as positive.
#[inline]
fn sign_bit(direction: &[f64], v: &[f64]) -> u64 {
    (dot(direction, v) >= 0.0) as u64
}

#[derive(Debug, Clone)]
pub struct LshTableSet {
    seed: u64,
    rho: f64,
    a: u32,
    b: u32,
    dim: usize,
    directions: Vec<f64>,
    buckets: Vec<HashMap<u64, Vec<ItemId>>>,
    members: IndexMap<ItemId, Box<[u64]>>,
}

impl PartialEq for LshTableSet {
    fn eq(&self, other: &Self) -> bool {
        self.to_bytes() == other.to_bytes()
    }
}

impl LshTableSet {
    /// An empty structure with freshly drawn hash functions.
    pub fn new(dim: usize, rho: f64, a: u32, b: u32, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::param(format!("rho must lie in [0, 1], got {rho}")));
        }
        if a == 0 || a > MAX_KEY_BITS {
            return Err(Error::param(format!("a must lie in 1..={MAX_KEY_BITS}, got {a}")));
        }
        if b == 0 {
            return Err(Error::param("b must be at least 1"));
        }
        if dim < 2 {
            return Err(Error::param(format!("dimension must be at least 2, got {dim}")));
        }
        let family = HyperplaneFamily::new(dim, derive_seed(seed, HASH_TAG));
        Ok(Self {
            seed,
            rho,
            a,
            b,
            dim,
            directions: family.draw(a as usize * b as usize),
            buckets: vec![HashMap::new(); b as usize],
            members: IndexMap::new(),
        })
    }

    /// Subsample `universe` at rate `rho` and hash the retained items into `b` tables.
    pub fn build(universe: &ItemUniverse, rho: f64, a: u32, b: u32, seed: u64) -> Result<Self> {
        let mut set = Self::new(universe.dim(), rho, a, b, seed)?;
        for item in universe.items() {
            set.offer(item.id, &item.embedding)?;
        }
        Ok(set)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn a(&self) -> u32 {
        self.a
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The retained subsample `rho V`, in insertion order.
    pub fn sampled_items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.members.keys().copied()
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.members.contains_key(&id)
    }

    /// Whether `id` survives this structure's subsampling.
    pub fn admits(&self, id: ItemId) -> bool {
        coin(derive_seed(self.seed, SAMPLE_TAG), id.0) < self.rho
    }

    fn table_key(&self, table: usize, v: &[f64]) -> u64 {
        let a = self.a as usize;
        let base = table * a * self.dim;
        let mut key = 0u64;
        for bit in 0..a {
            let off = base + bit * self.dim;
            key |= sign_bit(&self.directions[off..off + self.dim], v) << bit;
        }
        key
    }

    /// The `b` table keys of `v`.
    pub fn keys(&self, v: &UnitVector) -> Result<Vec<u64>> {
        check_dims(self.dim, v.dim())?;
        Ok((0..self.b as usize).map(|j| self.table_key(j, v.as_slice())).collect())
    }

    /// Insert `id` if it survives subsampling. Returns whether it is stored afterwards.
    pub fn offer(&mut self, id: ItemId, v: &UnitVector) -> Result<bool> {
        check_dims(self.dim, v.dim())?;
        if !self.admits(id) {
            return Ok(false);
        }
        self.insert(id, v)?;
        Ok(true)
    }

    /// Hash `id` into every table regardless of subsampling; re-inserting is a no-op.
    pub fn insert(&mut self, id: ItemId, v: &UnitVector) -> Result<()> {
        if self.members.contains_key(&id) {
            return Ok(());
        }
        let keys = self.keys(v)?;
        for (table, &key) in self.buckets.iter_mut().zip(&keys) {
            table.entry(key).or_default().push(id);
        }
        self.members.insert(id, keys.into_boxed_slice());
        Ok(())
    }

    /// Remove `id` from every table. Returns whether it was present.
    pub fn remove(&mut self, id: ItemId) -> bool {
        let Some(keys) = self.members.shift_remove(&id) else {
            return false;
        };
        for (table, key) in self.buckets.iter_mut().zip(keys.iter()) {
            if let Some(bucket) = table.get_mut(key) {
                bucket.retain(|&x| x != id);
                if bucket.is_empty() {
                    table.remove(key);
                }
            }
        }
        true
    }

    /// Append every colliding item (with repeats across tables) to `out`.
    pub fn collect_collisions(&self, u: &UnitVector, out: &mut Vec<ItemId>) -> Result<()> {
        check_dims(self.dim, u.dim())?;
        if self.members.is_empty() {
            return Ok(());
        }
        for (j, table) in self.buckets.iter().enumerate() {
            if let Some(bucket) = table.get(&self.table_key(j, u.as_slice())) {
                out.extend_from_slice(bucket);
            }
        }
        Ok(())
    }

    /// Items of `rho V` sharing a full key with `u` in some table, sorted and deduplicated.
    pub fn query(&self, u: &UnitVector) -> Result<Vec<ItemId>> {
        let mut out = Vec::new();
        self.collect_collisions(u, &mut out)?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Stored `(table, key, bucket)` triples, for invariant checks.
    pub fn buckets(&self) -> impl Iterator<Item = (usize, u64, &[ItemId])> + '_ {
        self.buckets
            .iter()
            .enumerate()
            .flat_map(|(j, t)| t.iter().map(move |(k, b)| (j, *k, b.as_slice())))
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.bytes(LSH_MAGIC);
        w.u64(self.seed);
        w.f64(self.rho);
        w.u32(self.a);
        w.u32(self.b);
        w.u32(self.dim as u32);
        for &x in &self.directions {
            w.f64(x);
        }
        w.u64(self.members.len() as u64);
        for (id, keys) in &self.members {
            w.u64(id.0);
            for &k in keys.iter() {
                w.u64(k);
            }
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        r.magic(LSH_MAGIC)?;
        let seed = r.u64()?;
        let rho = r.f64()?;
        let a = r.u32()?;
        let b = r.u32()?;
        let dim = r.u32()? as usize;
        let mut set = Self::new(dim, rho, a, b, seed)?;
        for x in set.directions.iter_mut() {
            *x = r.f64()?;
        }
        let count = r.len(8 * (1 + b as usize))?;
        let key_mask = if a == 64 { u64::MAX } else { (1u64 << a) - 1 };
        for _ in 0..count {
            let id = ItemId(r.u64()?);
            let keys = (0..b).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
            if keys.iter().any(|k| k & !key_mask != 0) {
                return Err(Error::malformed(format!("key of item {id} is wider than {a} bits")));
            }
            for (table, &key) in set.buckets.iter_mut().zip(&keys) {
                table.entry(key).or_default().push(id);
            }
            if set.members.insert(id, keys.into_boxed_slice()).is_some() {
                return Err(Error::malformed(format!("item {id} stored twice")));
            }
        }
        Ok(set)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let set = Self::decode(&mut r)?;
        r.finish()?;
        Ok(set)
    }
}

pub fn build_lsh(universe: &ItemUniverse, rho: f64, a: u32, b: u32, seed: u64) -> Result<LshTableSet> {
    LshTableSet::build(universe, rho, a, b, seed)
}

pub fn query_lsh(tables: &LshTableSet, u: &UnitVector) -> Result<Vec<ItemId>> {
    tables.query(u)
}

/// Probability that an item at distance `x` shares a key with the query in at least one of
/// `b` tables of width `a`: `1 - (1 - q(x)^a)^b`.
pub fn retrieval_prob(x: f64, a: u32, b: u32) -> f64 {
    1.0 - (1.0 - q(x).powi(a as i32)).powi(b as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{point_at_distance, random_unit};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn universe(n: usize, d: usize, seed: u64) -> ItemUniverse {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ItemUniverse::from_embeddings(d, (0..n).map(|_| random_unit(&mut rng, d)).collect()).unwrap()
    }

    #[test]
    fn collision_prob_special_points() {
        assert_eq!(collision_prob(0.0).unwrap(), 1.0);
        assert!((collision_prob(2f64.sqrt()).unwrap() - 0.5).abs() < 1e-15);
        assert!(collision_prob(2.0).unwrap().abs() < 1e-15);
        assert!(collision_prob(-0.1).is_err());
        assert!(collision_prob(2.1).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(LshTableSet::new(3, 0.5, 0, 1, 1).is_err());
        assert!(LshTableSet::new(3, 0.5, 65, 1, 1).is_err());
        assert!(LshTableSet::new(3, 0.5, 64, 1, 1).is_ok());
        assert!(LshTableSet::new(3, 0.5, 4, 0, 1).is_err());
        assert!(LshTableSet::new(3, 1.5, 4, 1, 1).is_err());
    }

    #[test]
    fn rho_zero_is_empty() {
        let uni = universe(200, 5, 1);
        let set = build_lsh(&uni, 0.0, 4, 3, 9).unwrap();
        assert!(set.is_empty());
        for item in uni.items().iter().take(20) {
            assert!(query_lsh(&set, &item.embedding).unwrap().is_empty());
        }
    }

    #[test]
    fn antipodal_items_never_share_a_key() {
        let v = UnitVector::normalize(&[0.3, -0.2, 0.9]).unwrap();
        let w = UnitVector::normalize(&[-0.3, 0.2, -0.9]).unwrap();
        let uni = ItemUniverse::from_embeddings(3, vec![v.clone(), w.clone()]).unwrap();
        for seed in 0..200 {
            let set = build_lsh(&uni, 1.0, 1, 1, seed).unwrap();
            assert_eq!(set.len(), 2);
            assert_ne!(set.keys(&v).unwrap(), set.keys(&w).unwrap());
            assert_eq!(set.query(&v).unwrap(), vec![ItemId(0)]);
        }
    }

    #[test]
    fn subsample_size_concentrates() {
        let uni = universe(1000, 4, 2);
        let set = build_lsh(&uni, 0.5, 6, 2, 77).unwrap();
        let bound = 3.0 * (1000.0f64 * 0.25).sqrt();
        assert!((set.len() as f64 - 500.0).abs() <= bound, "{}", set.len());
    }

    #[test]
    fn every_member_sits_once_in_each_table() {
        let uni = universe(300, 6, 3);
        let set = build_lsh(&uni, 0.7, 5, 4, 5).unwrap();
        let mut counts: HashMap<ItemId, Vec<usize>> = HashMap::new();
        for (table, key, bucket) in set.buckets() {
            assert!(key < 1 << 5);
            for &id in bucket {
                counts.entry(id).or_default().push(table);
            }
        }
        assert_eq!(counts.len(), set.len());
        for tables in counts.values() {
            let mut t = tables.clone();
            t.sort();
            assert_eq!(t, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn self_query_always_hits_and_output_is_sampled() {
        let uni = universe(400, 8, 4);
        let set = build_lsh(&uni, 0.6, 10, 3, 11).unwrap();
        let sampled: HashSet<ItemId> = set.sampled_items().collect();
        for item in uni.items() {
            let got = set.query(&item.embedding).unwrap();
            if sampled.contains(&item.id) {
                assert!(got.contains(&item.id));
            }
            assert!(got.iter().all(|id| sampled.contains(id)));
            assert!(got.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn retrieval_frequency_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let d = 10;
        let u = random_unit(&mut rng, d);
        for (x, a, b) in [(0.5, 4, 3), (0.9, 6, 5), (1.3, 2, 2)] {
            let mut embeddings: Vec<_> = (0..199).map(|_| random_unit(&mut rng, d)).collect();
            embeddings.insert(0, point_at_distance(&u, x, &mut rng));
            let uni = ItemUniverse::from_embeddings(d, embeddings).unwrap();
            let reps = 1000;
            let hits = (0..reps)
                .filter(|&s| {
                    build_lsh(&uni, 1.0, a, b, 1000 + s)
                        .unwrap()
                        .query(&u)
                        .unwrap()
                        .contains(&ItemId(0))
                })
                .count();
            let expect = retrieval_prob(x, a, b);
            let se = (expect * (1.0 - expect) / reps as f64).sqrt();
            let freq = hits as f64 / reps as f64;
            assert!((freq - expect).abs() <= 3.0 * se, "x={x}: {freq} vs {expect}");
        }
    }

    #[test]
    fn same_seed_same_tables() {
        let uni = universe(500, 5, 6);
        let a = build_lsh(&uni, 0.4, 8, 3, 21).unwrap();
        let b = build_lsh(&uni, 0.4, 8, 3, 21).unwrap();
        let c = build_lsh(&uni, 0.4, 8, 3, 22).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_ne!(a.to_bytes(), c.to_bytes());
        for item in uni.items().iter().take(50) {
            assert_eq!(a.query(&item.embedding).unwrap(), b.query(&item.embedding).unwrap());
        }
    }

    #[test]
    fn blob_round_trip_and_corruption() {
        let uni = universe(300, 5, 8);
        let mut set = build_lsh(&uni, 0.5, 7, 3, 3).unwrap();
        let victim = set.sampled_items().nth(3).unwrap();
        set.remove(victim);
        let bytes = set.to_bytes();
        let back = LshTableSet::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        for item in uni.items() {
            assert_eq!(
                back.query(&item.embedding).unwrap(),
                set.query(&item.embedding).unwrap()
            );
        }
        assert!(LshTableSet::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[3] = b'9';
        assert!(matches!(LshTableSet::from_bytes(&bad), Err(Error::Version(_))));
    }

    #[test]
    fn insert_and_remove() {
        let uni = universe(100, 4, 10);
        let mut set = build_lsh(&uni, 1.0, 5, 2, 4).unwrap();
        let v = &uni.items()[7];
        assert!(set.remove(v.id));
        assert!(!set.remove(v.id));
        assert!(!set.query(&v.embedding).unwrap().contains(&v.id));
        assert!(set.buckets().all(|(_, _, b)| !b.contains(&v.id)));
        set.offer(v.id, &v.embedding).unwrap();
        assert!(set.query(&v.embedding).unwrap().contains(&v.id));
        let wrong = UnitVector::normalize(&[1.0, 0.0]).unwrap();
        assert!(set.offer(ItemId(999), &wrong).is_err());
    }
}
