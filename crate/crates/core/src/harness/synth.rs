//! Synthetic item universes.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, inner_from_chord, ItemUniverse, UnitVector, UserMixture};
use crate::rng::rng_from_seed;

/// Uniform draw from the sphere.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, d: usize) -> UnitVector {
    loop {
        let raw: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(v) = UnitVector::normalize(&raw) {
            return v;
        }
    }
}

/// A uniformly random unit vector at distance exactly `x` from `u` (up to rounding).
pub fn point_at_distance<R: Rng + ?Sized>(u: &UnitVector, x: f64, rng: &mut R) -> UnitVector {
    let t = inner_from_chord(x.clamp(0.0, 2.0));
    let s = (1.0 - t * t).max(0.0).sqrt();
    let d = u.dim();
    let us = u.as_slice();
    let z = loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let proj = dot(&g, us);
        let orth: Vec<f64> = g.iter().zip(us).map(|(gi, ui)| gi - proj * ui).collect();
        let norm = dot(&orth, &orth).sqrt();
        if norm > 1e-9 {
            break orth.into_iter().map(|o| o / norm).collect::<Vec<_>>();
        }
    };
    let raw: Vec<f64> = us.iter().zip(&z).map(|(ui, zi)| t * ui + s * zi).collect();
    UnitVector::normalize(&raw).expect("combination of orthonormal vectors is non-zero")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Law {
    /// One query point; item distances to it i.i.d. uniform on `[0, 2]`.
    #[default]
    DistanceUniform,
    /// Items scattered around a handful of random centers.
    ClusterMixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub clusters: usize,
    /// Relative size of the Gaussian offset added to a center before re-normalizing.
    pub spread: f64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            clusters: 10,
            spread: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub universe: ItemUniverse,
    /// The query point for distance-uniform data, the cluster centers otherwise.
    pub users: UserMixture,
}

/// Distance-uniform universe around a random query point.
pub fn distance_uniform(n: usize, d: usize, seed: u64) -> Result<(ItemUniverse, UnitVector)> {
    if d < 2 {
        return Err(Error::param(format!("dimension must be at least 2, got {d}")));
    }
    let mut rng = rng_from_seed(seed);
    let u = random_unit(&mut rng, d);
    let items = (0..n)
        .map(|_| {
            let x = rng.random_range(0.0..2.0);
            point_at_distance(&u, x, &mut rng)
        })
        .collect();
    Ok((ItemUniverse::from_embeddings(d, items)?, u))
}

/// Items spread around `spec.clusters` random centers; item `i` belongs to cluster `i % clusters`.
pub fn cluster_mixture(n: usize, d: usize, seed: u64, spec: ClusterSpec) -> Result<(ItemUniverse, Vec<UnitVector>)> {
    if d < 2 {
        return Err(Error::param(format!("dimension must be at least 2, got {d}")));
    }
    if spec.clusters == 0 || spec.spread.is_nan() || spec.spread < 0.0 {
        return Err(Error::param(
            "cluster mixture needs >= 1 cluster and a non-negative spread",
        ));
    }
    let mut rng = rng_from_seed(seed);
    let centers: Vec<UnitVector> = (0..spec.clusters).map(|_| random_unit(&mut rng, d)).collect();
    let scale = spec.spread / (d as f64).sqrt();
    let items = (0..n)
        .map(|i| {
            let c = centers[i % spec.clusters].as_slice();
            let raw: Vec<f64> = c
                .iter()
                .map(|ci| ci + scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            UnitVector::normalize(&raw)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ItemUniverse::from_embeddings(d, items)?, centers))
}

pub fn gen_synthetic(n: usize, d: usize, seed: u64, law: Law, spec: ClusterSpec) -> Result<Synthetic> {
    match law {
        Law::DistanceUniform => {
            let (universe, u) = distance_uniform(n, d, seed)?;
            Ok(Synthetic {
                universe,
                users: UserMixture::single(u),
            })
        }
        Law::ClusterMixture => {
            let (universe, centers) = cluster_mixture(n, d, seed, spec)?;
            Ok(Synthetic {
                universe,
                users: UserMixture::new(centers)?,
            })
        }
    }
}

/// Kolmogorov-Smirnov statistic of `sample` against `U[lo, hi]`.
pub fn ks_uniform(sample: &[f64], lo: f64, hi: f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
