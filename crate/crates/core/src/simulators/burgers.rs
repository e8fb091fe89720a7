//! Viscous Burgers equation `u_t + u u_x = ν u_xx` on a periodic grid.
//!
//! Explicit Euler in time, conservative first-order upwind flux for the
//! advection term and second-order central differences for diffusion.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::trajectory::{SystemId, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurgersSpec {
    pub grid_points: usize,
    pub domain_length: f64,
    pub frame_interval: f64,
    /// Frames saved including the initial state.
    pub frame_count: usize,
    pub internal_dt: f64,
    /// Search interval for the viscosity.
    pub nu_bounds: [f64; 2],
}

impl Default for BurgersSpec {
    fn default() -> Self {
        Self {
            grid_points: 64,
            domain_length: TAU,
            frame_interval: 0.5,
            frame_count: 11,
            internal_dt: 1e-3,
            nu_bounds: [0.01, 0.5],
        }
    }
}

impl BurgersSpec {
    pub fn dx(&self) -> f64 {
        self.domain_length / self.grid_points as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.grid_points).map(|i| i as f64 * self.dx()).collect()
    }

    fn steps_per_frame(&self) -> Result<usize> {
        let ratio = self.frame_interval / self.internal_dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio {
            return Err(Error::config(format!(
                "internal_dt {} does not divide frame_interval {}",
                self.internal_dt, self.frame_interval
            )));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 3 || !(self.domain_length > 0.0) || self.frame_count == 0 {
            return Err(Error::config(
                "burgers: need ≥ 3 grid points, positive length and frames",
            ));
        }
        if !(self.internal_dt > 0.0 && self.frame_interval > 0.0) {
            return Err(Error::config("burgers: time steps must be positive"));
        }
        if !(0.0 <= self.nu_bounds[0] && self.nu_bounds[0] < self.nu_bounds[1]) {
            return Err(Error::config("burgers: need 0 ≤ ν_low < ν_high"));
        }
        self.steps_per_frame()?;
        Ok(())
    }

    /// Explicit stability factor `dt·(max|u|/dx + 2ν/dx²)`; must not exceed 1.
    pub fn stability_number(&self, max_speed: f64, nu: f64) -> f64 {
        let dx = self.dx();
        self.internal_dt * (max_speed / dx + 2.0 * nu / (dx * dx))
    }

    /// Random smooth periodic field: three low modes with random amplitude
    /// in `[−1/2, 1/2]` and random phase.
    pub fn random_initial_state(&self, rng: &mut impl Rng) -> Vec<f64> {
        let modes: Vec<(f64, f64)> = (1..=3)
            .map(|_| (rng.random_range(-1.0..=1.0), rng.random_range(0.0..TAU)))
            .collect();
        self.grid()
            .iter()
            .map(|&x| {
                modes
                    .iter()
                    .enumerate()
                    .map(|(k, (a, phi))| a * (2.0 * PI * (k + 1) as f64 * x / self.domain_length + phi).sin())
                    .sum::<f64>()
                    / 2.0
            })
            .collect()
    }
}

fn upwind_flux(left: f64, right: f64) -> f64 {
    if left + right >= 0.0 {
        0.5 * left * left
    } else {
        0.5 * right * right
    }
}

pub fn burgers_simulate(spec: &BurgersSpec, u0: &[f64], nu: f64) -> Result<Trajectory> {
    spec.validate()?;
    let n = spec.grid_points;
    if u0.len() != n {
        return Err(Error::shape(format!("u0 has {} points, grid has {n}", u0.len())));
    }
    if !nu.is_finite() || nu < 0.0 {
        return Err(Error::OutOfBounds(format!("viscosity must be ≥ 0, got {nu}")));
    }
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("burgers initial state".into()));
    }
    let max_speed = u0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let stab = spec.stability_number(max_speed, nu);
    if stab > 1.0 {
        return Err(Error::Stability(format!(
            "dt = {} with ν = {nu} and max|u| = {max_speed} gives stability number {stab:.3} > 1",
            spec.internal_dt
        )));
    }

    let steps = spec.steps_per_frame()?;
    let dx = spec.dx();
    let adv = spec.internal_dt / dx;
    let diff = nu * spec.internal_dt / (dx * dx);

    let mut u = u0.to_vec();
    let mut next = vec![0.0; n];
    let mut flux = vec![0.0; n];
    let mut frames = Vec::with_capacity(spec.frame_count);
    let mut times = Vec::with_capacity(spec.frame_count);
    frames.push(u.clone());
    times.push(0.0);

    for frame in 1..spec.frame_count {
        for _ in 0..steps {
            // flux[i] lives at the i+1/2 interface
            for i in 0..n {
                flux[i] = upwind_flux(u[i], u[(i + 1) % n]);
            }
            for i in 0..n {
                let left = (i + n - 1) % n;
                let right = (i + 1) % n;
                next[i] = u[i] - adv * (flux[i] - flux[left]) + diff * (u[right] - 2.0 * u[i] + u[left]);
            }
            std::mem::swap(&mut u, &mut next);
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                time: frame as f64 * spec.frame_interval,
            });
        }
        frames.push(u.clone());
        times.push(frame as f64 * spec.frame_interval);
    }
    Trajectory::new(SystemId::Burgers, frames, times)
}
