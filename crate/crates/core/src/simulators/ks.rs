//! Forced Kuramoto–Sivashinsky equation
//! `u_t = α·G(x) − u_xx − u_xxxx − β·u·u_x` on a periodic domain.
//!
//! Pseudo-spectral in space, fourth-order exponential time differencing
//! (ETDRK4, with contour-integral coefficients) in time.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::trajectory::{SystemId, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KsSpec {
    pub grid_points: usize,
    pub domain_length: f64,
    pub end_time: f64,
    pub frame_interval: f64,
    pub internal_dt: f64,
    /// Forcing profile `G(x)` sampled on the grid.
    pub forcing: Vec<f64>,
    pub alpha_bounds: [f64; 2],
    pub beta_bounds: [f64; 2],
}

impl Default for KsSpec {
    fn default() -> Self {
        Self::with_grid(64, 64.0)
    }
}

impl KsSpec {
    /// Default timing and bounds with `G(x) = sin(2πx/L)`.
    pub fn with_grid(grid_points: usize, domain_length: f64) -> Self {
        let forcing = (0..grid_points)
            .map(|i| (TAU * i as f64 / grid_points as f64).sin())
            .collect();
        Self {
            grid_points,
            domain_length,
            end_time: 75.0,
            frame_interval: 0.5,
            internal_dt: 0.05,
            forcing,
            alpha_bounds: [-1.0, 1.0],
            beta_bounds: [0.25, 0.75],
        }
    }

    pub fn frame_count(&self) -> usize {
        (self.end_time / self.frame_interval).round() as usize + 1
    }

    fn integral_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
        let r = num / den;
        let n = r.round();
        if n < 1.0 || (r - n).abs() > 1e-9 * r {
            return Err(Error::config(format!("ks: {what} ({num} / {den}) must be integral")));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.grid_points.is_power_of_two() || self.grid_points < 4 {
            return Err(Error::config("ks: grid_points must be a power of two ≥ 4"));
        }
        if self.forcing.len() != self.grid_points {
            return Err(Error::config("ks: forcing profile length must equal grid_points"));
        }
        if !(self.domain_length > 0.0 && self.internal_dt > 0.0) {
            return Err(Error::config("ks: domain length and dt must be positive"));
        }
        Self::integral_ratio(self.end_time, self.frame_interval, "end_time / frame_interval")?;
        Self::integral_ratio(self.frame_interval, self.internal_dt, "frame_interval / internal_dt")?;
        Ok(())
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.grid_points as isize;
        (0..n)
            .map(|i| {
                let m = if i <= n / 2 { i } else { i - n };
                TAU * m as f64 / self.domain_length
            })
            .collect()
    }

    /// Four lowest domain modes, amplitudes uniform in `[−1/2, 1/2]`, random phases.
    pub fn random_initial_state(&self, rng: &mut impl Rng) -> Vec<f64> {
        let modes: Vec<(f64, f64)> = (1..=4)
            .map(|_| (rng.random_range(-1.0..=1.0), rng.random_range(0.0..TAU)))
            .collect();
        (0..self.grid_points)
            .map(|i| {
                let x = i as f64 * self.domain_length / self.grid_points as f64;
                modes
                    .iter()
                    .enumerate()
                    .map(|(k, (a, phi))| a * (2.0 * PI * (k + 1) as f64 * x / self.domain_length + phi).cos())
                    .sum::<f64>()
                    / 2.0
            })
            .collect()
    }
}

/// Precomputed ETDRK4 coefficients for one (spec, dt) pair.
struct Etdrk4 {
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
    /// `i·k` with the Nyquist mode zeroed.
    ik: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Etdrk4 {
    fn new(spec: &KsSpec) -> Self {
        let n = spec.grid_points;
        let h = spec.internal_dt;
        let k = spec.wavenumbers();
        const CONTOUR: usize = 32;
        let roots: Vec<Complex64> = (1..=CONTOUR)
            .map(|j| Complex64::from_polar(1.0, PI * (j as f64 - 0.5) / CONTOUR as f64))
            .collect();
        let mut c = Etdrk4 {
            e: vec![0.0; n],
            e2: vec![0.0; n],
            q: vec![0.0; n],
            f1: vec![0.0; n],
            f2: vec![0.0; n],
            f3: vec![0.0; n],
            ik: k.iter().map(|&kk| Complex64::new(0.0, kk)).collect(),
            fwd: FftPlanner::new().plan_fft_forward(n),
            inv: FftPlanner::new().plan_fft_inverse(n),
        };
        c.ik[n / 2] = Complex64::new(0.0, 0.0);
        for (i, &kk) in k.iter().enumerate() {
            let l = kk * kk - kk.powi(4);
            c.e[i] = (h * l).exp();
            c.e2[i] = (h * l / 2.0).exp();
            let (mut q, mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0, 0.0);
            for r in &roots {
                let z = Complex64::new(h * l, 0.0) + r;
                let ez = z.exp();
                let z3 = z * z * z;
                q += (((z / 2.0).exp() - 1.0) / z).re;
                f1 += ((-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3).re;
                f2 += ((2.0 + z + ez * (z - 2.0)) / z3).re;
                f3 += ((-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3).re;
            }
            let m = CONTOUR as f64;
            c.q[i] = h * q / m;
            c.f1[i] = h * f1 / m;
            c.f2[i] = h * f2 / m;
            c.f3[i] = h * f3 / m;
        }
        c
    }
}

struct Nonlinear<'a> {
    coef: &'a Etdrk4,
    forcing_hat: Vec<Complex64>,
    beta: f64,
    scratch: Vec<Complex64>,
}

impl Nonlinear<'_> {
    /// `α·Ĝ − (β/2)·ik·FFT(u²)` for spectral state `v`.
    fn eval(&mut self, v: &[Complex64], out: &mut [Complex64]) {
        let n = v.len();
        self.scratch.copy_from_slice(v);
        self.coef.inv.process(&mut self.scratch);
        let inv_n = 1.0 / n as f64;
        for s in self.scratch.iter_mut() {
            let u = s.re * inv_n;
            *s = Complex64::new(u * u, 0.0);
        }
        self.coef.fwd.process(&mut self.scratch);
        for i in 0..n {
            out[i] = self.forcing_hat[i] - self.coef.ik[i] * self.scratch[i] * (0.5 * self.beta);
        }
    }
}

fn to_physical(coef: &Etdrk4, v: &[Complex64]) -> Vec<f64> {
    let mut buf = v.to_vec();
    coef.inv.process(&mut buf);
    let inv_n = 1.0 / v.len() as f64;
    buf.iter().map(|c| c.re * inv_n).collect()
}

pub fn ks_simulate(spec: &KsSpec, u0: &[f64], alpha: f64, beta: f64) -> Result<Trajectory> {
    spec.validate()?;
    let n = spec.grid_points;
    if u0.len() != n {
        return Err(Error::shape(format!("u0 has {} points, grid has {n}", u0.len())));
    }
    let in_range = |v: f64, b: [f64; 2]| b[0] <= v && v <= b[1];
    if !in_range(alpha, spec.alpha_bounds) || !in_range(beta, spec.beta_bounds) {
        return Err(Error::OutOfBounds(format!(
            "ks: α = {alpha} must lie in {:?} and β = {beta} in {:?}",
            spec.alpha_bounds, spec.beta_bounds
        )));
    }

    let coef = Etdrk4::new(spec);
    let mut forcing_hat: Vec<Complex64> = spec.forcing.iter().map(|&g| Complex64::new(alpha * g, 0.0)).collect();
    coef.fwd.process(&mut forcing_hat);
    let mut nl = Nonlinear {
        coef: &coef,
        forcing_hat,
        beta,
        scratch: vec![Complex64::default(); n],
    };

    let mut v: Vec<Complex64> = u0.iter().map(|&u| Complex64::new(u, 0.0)).collect();
    coef.fwd.process(&mut v);

    let zero = Complex64::default();
    let (mut nv, mut na, mut nb, mut nc) = (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
    let (mut a, mut b, mut c) = (vec![zero; n], vec![zero; n], vec![zero; n]);

    let frames_total = spec.frame_count();
    let steps = (spec.frame_interval / spec.internal_dt).round() as usize;
    let mut frames = Vec::with_capacity(frames_total);
    let mut times = Vec::with_capacity(frames_total);
    frames.push(u0.to_vec());
    times.push(0.0);

    for frame in 1..frames_total {
        for _ in 0..steps {
            nl.eval(&v, &mut nv);
            for i in 0..n {
                a[i] = v[i] * coef.e2[i] + nv[i] * coef.q[i];
            }
            nl.eval(&a, &mut na);
            for i in 0..n {
                b[i] = v[i] * coef.e2[i] + na[i] * coef.q[i];
            }
            nl.eval(&b, &mut nb);
            for i in 0..n {
                c[i] = a[i] * coef.e2[i] + (nb[i] * 2.0 - nv[i]) * coef.q[i];
            }
            nl.eval(&c, &mut nc);
            for i in 0..n {
                v[i] =
                    v[i] * coef.e[i] + nv[i] * coef.f1[i] + (na[i] + nb[i]) * (2.0 * coef.f2[i]) + nc[i] * coef.f3[i];
            }
        }
        let t = frame as f64 * spec.frame_interval;
        let u = to_physical(&coef, &v);
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::BlowUp { time: t });
        }
        frames.push(u);
        times.push(t);
    }
    Trajectory::new(SystemId::Ks, frames, times)
}
