//! Flat body-major coordinate blocks for configurations and velocities.

use crate::error::{Error, Result};

/// An `N x d` block of real coordinates stored body-major: the entry for
/// body `i`, coordinate `k` lives at `i * dim + k`. Both configurations
/// (positions) and velocities share this layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Coords {
    data: Vec<f64>,
    dim: usize,
}

impl Coords {
    /// Build from flat body-major data. Fails if the length is not a
    /// multiple of `dim` or contains non-finite entries.
    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "flat length {} is not a positive multiple of dim {}",
                data.len(),
                dim
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("non-finite coordinate".into()));
        }
        Ok(Self { data, dim })
    }

    /// Build from per-body rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("rows empty or of unequal lengths".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::from_flat(data, dim)
    }

    pub fn zeros(n_bodies: usize, dim: usize) -> Self {
        Self { data: vec![0.0; n_bodies * dim], dim }
    }

    pub fn n_bodies(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn body(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn body_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Euclidean distance between bodies `i` and `j`.
    pub fn pair_distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.body(i), self.body(j));
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    /// `self + c * other`, in place.
    pub fn add_scaled(&mut self, other: &Coords, c: f64) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in &mut self.data {
            *a *= c;
        }
    }

    pub fn scaled(&self, c: f64) -> Coords {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    pub fn sub(&self, other: &Coords) -> Coords {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    pub fn add(&self, other: &Coords) -> Coords {
        let mut out = self.clone();
        out.add_scaled(other, 1.0);
        out
    }

    /// Plain Euclidean inner product of the flat data (no masses).
    pub fn dot_euclid(&self, other: &Coords) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_euclid(&self) -> f64 {
        self.dot_euclid(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Positions of the N bodies: a point of configuration space.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration(pub Coords);

/// Velocities of the N bodies (also used for asymptotic velocity
/// configurations, which live in the same space).
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity(pub Coords);

impl Configuration {
    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        Ok(Self(Coords::from_flat(data, dim)?))
    }

    pub fn coords(&self) -> &Coords {
        &self.0
    }
}

impl Velocity {
    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        Ok(Self(Coords::from_flat(data, dim)?))
    }

    pub fn coords(&self) -> &Coords {
        &self.0
    }
}
