//! Fixed-budget encoding of `Y*` and normalization of `X` for network input.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulators::{Bounds, SystemId, SystemSpec, Trajectory};

/// Raw trajectory slots per system.
pub fn default_slot_budget(system: SystemId) -> usize {
    match system {
        SystemId::GramacyLee | SystemId::Rastrigin => 0,
        SystemId::Burgers => 2,
        SystemId::Ks => 16,
        SystemId::Billiards2d => 40,
        SystemId::Billiards4d => 64,
    }
}

/// How a trajectory is reduced to network input slots, and how slots and
/// parameters are scaled.
///
/// Slot `i` reads frame `⌊(i + ½)·F / S⌋`. Slots sharing a frame spread
/// evenly over its components, offset by the frame index so consecutive
/// frames sample different components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingDescriptor {
    pub system: SystemId,
    pub frame_count: usize,
    pub frame_len: usize,
    /// Flat indices `frame · frame_len + component`.
    pub slots: Vec<usize>,
    pub slot_center: Vec<f64>,
    pub slot_scale: Vec<f64>,
    pub param_bounds: Bounds,
}

fn slot_indices(frame_count: usize, frame_len: usize, budget: usize) -> Vec<usize> {
    let frame_of = |i: usize| ((2 * i + 1) * frame_count) / (2 * budget);
    let mut out = Vec::with_capacity(budget);
    let mut i = 0;
    while i < budget {
        let f = frame_of(i);
        let k = (i..budget).take_while(|&j| frame_of(j) == f).count();
        for j in 0..k {
            let comp = (((2 * j + 1) * frame_len) / (2 * k) + f) % frame_len;
            out.push(f * frame_len + comp);
        }
        i += k;
    }
    out
}

impl EncodingDescriptor {
    pub fn new(system: &SystemSpec, budget: usize) -> Result<Self> {
        let (frame_count, frame_len) = system.trajectory_shape().unwrap_or((0, 0));
        let total = frame_count * frame_len;
        if budget > total {
            return Err(Error::config(format!(
                "{} trajectories have {total} values, cannot fill {budget} slots",
                system.id().name()
            )));
        }
        let slots = if budget == 0 {
            Vec::new()
        } else {
            slot_indices(frame_count, frame_len, budget)
        };
        Ok(Self {
            system: system.id(),
            frame_count,
            frame_len,
            slot_center: vec![0.0; slots.len()],
            slot_scale: vec![1.0; slots.len()],
            slots,
            param_bounds: system.bounds(),
        })
    }

    pub fn for_system(system: &SystemSpec) -> Result<Self> {
        Self::new(system, default_slot_budget(system.id()))
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn param_dim(&self) -> usize {
        self.param_bounds.dim()
    }

    /// Width of `[scaled slots, normalized X]`.
    pub fn input_width(&self) -> usize {
        self.slot_count() + self.param_dim()
    }

    /// Same slot map and search space; scaling may differ.
    pub fn compatible(&self, other: &Self) -> bool {
        self.system == other.system
            && self.frame_count == other.frame_count
            && self.frame_len == other.frame_len
            && self.slots == other.slots
            && self.param_bounds == other.param_bounds
    }

    /// Unscaled slot values of `y`.
    pub fn raw_slots(&self, y: &Trajectory) -> Result<Vec<f64>> {
        if y.system != self.system {
            return Err(Error::shape(format!(
                "encoding is for {} but trajectory comes from {}",
                self.system.name(),
                y.system.name()
            )));
        }
        if y.frame_len() != self.frame_len || y.frame_count() < self.frame_count {
            return Err(Error::shape(format!(
                "encoding needs {} frames of {} values, trajectory has {} of {}",
                self.frame_count,
                self.frame_len,
                y.frame_count(),
                y.frame_len()
            )));
        }
        Ok(self
            .slots
            .iter()
            .map(|&s| y.frames[s / self.frame_len][s % self.frame_len])
            .collect())
    }

    pub fn scale_slots(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.slot_center.iter().zip(&self.slot_scale))
            .map(|(v, (c, s))| (v - c) / s)
            .collect()
    }

    /// Standardize each slot over the rows of `raw` (unit scale when constant).
    pub fn fit_scaling(&mut self, raw: ArrayView2<f64>) {
        let n = raw.nrows().max(1) as f64;
        for (j, col) in raw.columns().into_iter().enumerate() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            self.slot_center[j] = mean;
            self.slot_scale[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
    }

    /// Map `X` affinely so that `Z` becomes `[−1, 1]` per axis.
    pub fn normalize_params(&self, xs: &[f64]) -> Vec<f64> {
        self.param_bounds.normalize(xs)
    }

    /// `d(normalized)/d(raw)` per axis.
    pub fn param_scale(&self) -> Vec<f64> {
        self.param_bounds.normalize_scale()
    }
}

/// Deterministic slot readout of `y`, before scaling.
pub fn encode_trajectory(y: &Trajectory, descriptor: &EncodingDescriptor) -> Result<Vec<f64>> {
    descriptor.raw_slots(y)
}
