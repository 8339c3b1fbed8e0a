//! Embedding-space primitives: unit vectors on the sphere, the chordal distance between
//! them, and the item and user-type containers everything else is built over.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Norm tolerance for vectors constructed in memory.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Looser tolerance accepted on ingest; such vectors are silently re-normalized.
pub const INGEST_TOLERANCE: f64 = 1e-6;

/// Opaque item identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemId(pub u64);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point on the unit sphere `S^{d-1}`, `d >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Scale `raw` onto the sphere.
    pub fn normalize(raw: &[f64]) -> Result<Self> {
        if raw.len() < 2 {
            return Err(Error::InvalidVector(format!(
                "dimension must be at least 2, got {}",
                raw.len()
            )));
        }
        if let Some(i) = raw.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidVector(format!(
                "non-finite coordinate {} at index {i}",
                raw[i]
            )));
        }
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidVector(format!("cannot normalize vector of norm {norm}")));
        }
        Ok(Self(raw.iter().map(|x| x / norm).collect()))
    }

    /// Accept `coords` only if already unit-norm within `tol`, then re-normalize exactly.
    pub fn with_tolerance(coords: &[f64], tol: f64) -> Result<Self> {
        let v = Self::normalize(coords)?;
        let norm = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > tol {
            return Err(Error::InvalidVector(format!("norm {norm} is not within {tol} of 1")));
        }
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &UnitVector) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(dot(&self.0, &other.0))
    }

    /// Chordal distance, equal to `sqrt(2(1 - u.v))` on the sphere and clamped to `[0, 2]`.
    ///
    /// Evaluated as `|u - v|` so that nearby points do not lose precision to cancellation.
    pub fn distance(&self, other: &UnitVector) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(chord(&self.0, &other.0))
    }
}

/// `unit_normalize` under its operation name.
pub fn unit_normalize(raw: &[f64]) -> Result<UnitVector> {
    UnitVector::normalize(raw)
}

pub fn distance(u: &UnitVector, v: &UnitVector) -> Result<f64> {
    u.distance(v)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn chord(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
        .min(2.0)
}

/// Distance between unit vectors with inner product `inner`.
#[inline]
pub fn chord_from_inner(inner: f64) -> f64 {
    (2.0 * (1.0 - inner)).max(0.0).sqrt().min(2.0)
}

/// Inner product between unit vectors at distance `x`.
#[inline]
pub fn inner_from_chord(x: f64) -> f64 {
    1.0 - 0.5 * x * x
}

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: ItemId,
    pub embedding: UnitVector,
}

/// The catalogue of offerable items, all embedded in one dimension.
#[derive(Debug, Clone)]
pub struct ItemUniverse {
    dim: usize,
    items: Vec<Item>,
    positions: HashMap<ItemId, usize>,
}

impl ItemUniverse {
    pub fn new(dim: usize, items: Vec<Item>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::param(format!("dimension must be at least 2, got {dim}")));
        }
        let mut positions = HashMap::with_capacity(items.len());
        for (pos, item) in items.iter().enumerate() {
            check_dims(dim, item.embedding.dim())?;
            if positions.insert(item.id, pos).is_some() {
                return Err(Error::DuplicateItem(item.id));
            }
        }
        Ok(Self { dim, items, positions })
    }

    /// Universe whose ids are the positions `0..n`.
    pub fn from_embeddings(dim: usize, embeddings: Vec<UnitVector>) -> Result<Self> {
        let items = embeddings
            .into_iter()
            .enumerate()
            .map(|(i, embedding)| Item {
                id: ItemId(i as u64),
                embedding,
            })
            .collect();
        Self::new(dim, items)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn ids(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.items.iter().map(|it| it.id)
    }

    pub fn position(&self, id: ItemId) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    pub fn get(&self, id: ItemId) -> Option<&Item> {
        self.position(id).map(|p| &self.items[p])
    }

    pub fn embedding(&self, id: ItemId) -> Result<&UnitVector> {
        self.get(id).map(|it| &it.embedding).ok_or(Error::UnknownItem(id))
    }
}

/// The random user `U`: uniform over `m >= 1` types.
#[derive(Debug, Clone, PartialEq)]
pub struct UserMixture {
    types: Vec<UnitVector>,
}

impl UserMixture {
    pub fn new(types: Vec<UnitVector>) -> Result<Self> {
        let first = types
            .first()
            .ok_or_else(|| Error::param("a user mixture needs at least one type"))?;
        for t in &types[1..] {
            check_dims(first.dim(), t.dim())?;
        }
        Ok(Self { types })
    }

    pub fn single(u: UnitVector) -> Self {
        Self { types: vec![u] }
    }

    pub fn types(&self) -> &[UnitVector] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.types[0].dim()
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        check_dims(dim, self.dim())
    }
}
