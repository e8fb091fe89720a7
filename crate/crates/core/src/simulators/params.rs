use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box of admissible control parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl Bounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        let b = Self { low, high };
        b.validate()?;
        Ok(b)
    }

    pub fn uniform(dim: usize, low: f64, high: f64) -> Result<Self> {
        Self::new(vec![low; dim], vec![high; dim])
    }

    pub fn validate(&self) -> Result<()> {
        if self.low.len() != self.high.len() || self.low.is_empty() {
            return Err(Error::config("bounds need matching, nonempty low/high"));
        }
        for (i, (l, h)) in self.low.iter().zip(&self.high).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::config(format!(
                    "bounds dimension {i}: need low < high, got [{l}, {h}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| h - l).collect()
    }

    /// Euclidean length of the box diagonal.
    pub fn diagonal(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(v, (l, h))| *l <= *v && v <= h)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.dim(),
                x.len()
            )));
        }
        if !self.contains(x) {
            return Err(Error::OutOfBounds(format!(
                "{x:?} outside [{:?}, {:?}]",
                self.low, self.high
            )));
        }
        Ok(())
    }

    /// Project onto the box; the flag reports whether any coordinate moved.
    pub fn clamp(&self, x: &[f64]) -> (Vec<f64>, bool) {
        let mut clamped = false;
        let out = x
            .iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(&v, (&l, &h))| {
                let c = v.clamp(l, h);
                clamped |= c != v;
                c
            })
            .collect();
        (out, clamped)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(&l, &h)| rng.random_range(l..=h))
            .collect()
    }

    /// Affine map of the box onto `[−1, 1]` per dimension.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(v, (l, h))| 2.0 * (v - l) / (h - l) - 1.0)
            .collect()
    }

    /// d(normalized)/d(raw) per dimension.
    pub fn normalize_scale(&self) -> Vec<f64> {
        self.widths().iter().map(|w| 2.0 / w).collect()
    }
}

/// A point in the search space together with the box it must lie in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub values: Vec<f64>,
    pub bounds: Bounds,
}

impl ControlParams {
    pub fn new(values: Vec<f64>, bounds: Bounds) -> Result<Self> {
        bounds.check(&values)?;
        Ok(Self { values, bounds })
    }

    /// Explicit clamping constructor; never applied implicitly.
    pub fn clamped(values: &[f64], bounds: Bounds) -> Self {
        let (values, _) = bounds.clamp(values);
        Self { values, bounds }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}
