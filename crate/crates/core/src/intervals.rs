//! Hyperrectangles and embedding states.
//!
//! An [`IntervalVector`] is the closed box `[lower, upper]`, possibly with
//! infinite extents. An [`EmbeddingState`] is a point `(under, over)` of the
//! doubled statespace; when ordered it denotes the box `[under, over]`.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Default cap on the dimension accepted by [`IntervalVector::corners`].
pub const DEFAULT_CORNER_LIMIT: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalVector {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl IntervalVector {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        for i in 0..lower.len() {
            // NaN fails this comparison too
            if !(lower[i] <= upper[i]) {
                return Err(Error::InvalidInterval { index: i });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(lower),
            DVector::from_column_slice(upper),
        )
    }

    /// The box `[x, x]`.
    pub fn point(x: &DVector<f64>) -> Self {
        Self {
            lower: x.clone(),
            upper: x.clone(),
        }
    }

    /// `[lo, hi]^n`.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(DVector::from_element(n, lo), DVector::from_element(n, hi))
    }

    /// All of ℝⁿ.
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn is_finite(&self) -> bool {
        self.lower
            .iter()
            .chain(self.upper.iter())
            .all(|v| v.is_finite())
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn widths(&self) -> DVector<f64> {
        &self.upper - &self.lower
    }

    /// Exact closed-box membership. Callers add slack explicitly.
    pub fn contains(&self, z: &DVector<f64>) -> Result<bool> {
        check_dim(self.dim(), z.len())?;
        Ok(self
            .lower
            .iter()
            .zip(self.upper.iter())
            .zip(z.iter())
            .all(|((lo, hi), v)| *lo <= *v && *v <= *hi))
    }

    /// True when `self ⊆ other`.
    pub fn is_subset_of(&self, other: &IntervalVector) -> Result<bool> {
        check_dim(other.dim(), self.dim())?;
        Ok((0..self.dim())
            .all(|i| other.lower[i] <= self.lower[i] && self.upper[i] <= other.upper[i]))
    }

    /// The box grown by `margin` on every side.
    pub fn inflate(&self, margin: f64) -> Self {
        Self {
            lower: self.lower.add_scalar(-margin),
            upper: self.upper.add_scalar(margin),
        }
    }

    /// A uniform sample from a finite box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        if let Some(index) =
            (0..self.dim()).find(|&i| !self.lower[i].is_finite() || !self.upper[i].is_finite())
        {
            return Err(Error::UnboundedBox { index });
        }
        Ok(DVector::from_fn(self.dim(), |i, _| {
            self.lower[i] + (self.upper[i] - self.lower[i]) * rng.random::<f64>()
        }))
    }

    /// Vertices of the box using the default dimension cap.
    pub fn corners(&self) -> Result<Vec<DVector<f64>>> {
        self.corners_with_limit(DEFAULT_CORNER_LIMIT)
    }

    /// Vertex list of length exactly 2ⁿ, in binary counting order: bit `i` of
    /// the index selects `upper[i]`. Degenerate coordinates produce repeated
    /// vertices, which are kept.
    pub fn corners_with_limit(&self, limit: usize) -> Result<Vec<DVector<f64>>> {
        let n = self.dim();
        if n > limit {
            return Err(Error::TooManyCorners { n, limit });
        }
        if let Some(index) =
            (0..n).find(|&i| !self.lower[i].is_finite() || !self.upper[i].is_finite())
        {
            return Err(Error::UnboundedBox { index });
        }
        Ok((0..1usize << n)
            .map(|mask| {
                DVector::from_fn(n, |i, _| {
                    if mask >> i & 1 == 1 {
                        self.upper[i]
                    } else {
                        self.lower[i]
                    }
                })
            })
            .collect())
    }
}

/// A point `a = (under, over)` of the embedding statespace ℝ²ⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    pub under: DVector<f64>,
    pub over: DVector<f64>,
}

impl EmbeddingState {
    pub fn new(under: DVector<f64>, over: DVector<f64>) -> Result<Self> {
        check_dim(under.len(), over.len())?;
        Ok(Self { under, over })
    }

    /// The diagonal state `(x, x)`.
    pub fn diagonal(x: &DVector<f64>) -> Self {
        Self {
            under: x.clone(),
            over: x.clone(),
        }
    }

    pub fn from_box(iv: &IntervalVector) -> Self {
        Self {
            under: iv.lower.clone(),
            over: iv.upper.clone(),
        }
    }

    /// Split a stacked `[under; over]` vector.
    pub fn from_stacked(v: &DVector<f64>) -> Result<Self> {
        if v.len() % 2 != 0 {
            return Err(Error::DimensionMismatch {
                expected: v.len() + 1,
                found: v.len(),
            });
        }
        let n = v.len() / 2;
        Ok(Self {
            under: v.rows(0, n).into_owned(),
            over: v.rows(n, n).into_owned(),
        })
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.under.len();
        DVector::from_fn(2 * n, |i, _| {
            if i < n {
                self.under[i]
            } else {
                self.over[i - n]
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.under.len()
    }

    /// First coordinate where `under > over`, if any.
    pub fn order_violation(&self) -> Option<usize> {
        (0..self.dim()).find(|&i| !(self.under[i] <= self.over[i]))
    }

    pub fn is_ordered(&self) -> bool {
        self.order_violation().is_none()
    }

    /// ⟦a⟧ = [under, over].
    pub fn rect(&self) -> Result<IntervalVector> {
        if let Some(index) = self.order_violation() {
            return Err(Error::OrderViolation { index });
        }
        Ok(IntervalVector {
            lower: self.under.clone(),
            upper: self.over.clone(),
        })
    }
}
