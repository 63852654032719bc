//! Attribution containers.

use std::ops::{Deref, Index, IndexMut};

use serde::{Deserialize, Serialize};

/// Per-player scores `φ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct AttributionVector {
    values: Vec<f64>,
}

impl AttributionVector {
    pub fn zeros(d: usize) -> Self {
        AttributionVector { values: vec![0.0; d] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &AttributionVector, scale: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// Largest absolute componentwise difference; infinite on length mismatch.
    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        max_abs_diff(&self.values, other)
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

impl From<Vec<f64>> for AttributionVector {
    fn from(values: Vec<f64>) -> Self {
        AttributionVector { values }
    }
}

impl Deref for AttributionVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl Index<usize> for AttributionVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl IndexMut<usize> for AttributionVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

/// Dense `d × d` matrix of pairwise indices `Φ_ij`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    dim: usize,
    values: Vec<f64>,
}

impl InteractionMatrix {
    pub fn zeros(dim: usize) -> Self {
        InteractionMatrix {
            dim,
            values: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major entries.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Sum of every entry; equals the gap for an exact explanation.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn add_scaled(&mut self, other: &InteractionMatrix, scale: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn max_abs_diff(&self, other: &InteractionMatrix) -> f64 {
        if self.dim != other.dim {
            return f64::INFINITY;
        }
        max_abs_diff(&self.values, &other.values)
    }
}

impl Index<(usize, usize)> for InteractionMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.values[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for InteractionMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.values[i * self.dim + j]
    }
}
