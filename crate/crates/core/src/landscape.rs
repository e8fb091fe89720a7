//! Configuration loss `L(Y*, X) = ‖P(Y₀, X) − Y*‖²` and landscape probes.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulators::trajectory::format_f64;
use crate::simulators::{Bounds, SystemId, SystemSpec, Trajectory};

/// Default cap on grid nodes per [`sample_grid`] call.
pub const DEFAULT_GRID_BUDGET: usize = 1_000_000;

/// One inverse problem: recover `true_params` from `true_trajectory`.
///
/// For analytic landscapes the truth is the global minimizer and there is
/// no trajectory; the loss is `f(x) − min f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseProblem {
    pub id: u64,
    pub system: SystemSpec,
    pub true_params: Vec<f64>,
    pub initial_state: Vec<f64>,
    pub true_trajectory: Option<Trajectory>,
    /// `min f` for analytic landscapes.
    pub offset: f64,
}

impl InverseProblem {
    /// Build a problem by simulating `Y* = P(Y₀, X*)`.
    pub fn new(id: u64, system: SystemSpec, initial_state: Vec<f64>, true_params: Vec<f64>) -> Result<Self> {
        system.validate()?;
        system.bounds().check(&true_params)?;
        if system.is_analytic() {
            let offset = system.analytic_minimum()?.1;
            return Ok(Self {
                id,
                system,
                true_params,
                initial_state: Vec::new(),
                true_trajectory: None,
                offset,
            });
        }
        let traj = system
            .simulate(&initial_state, &true_params)
            .map_err(|e| e.in_problem(id))?;
        Ok(Self {
            id,
            system,
            true_params,
            initial_state,
            true_trajectory: Some(traj),
            offset: 0.0,
        })
    }

    /// Seeded problem `index` of a batch: uniform `X* ∈ Z`, then a random
    /// initial state for PDE systems. Analytic problems take the global
    /// minimizer as truth.
    pub fn generate(system: &SystemSpec, seed: u64, index: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        if system.is_analytic() {
            let (x, _) = system.analytic_minimum()?;
            return Self::new(index, system.clone(), Vec::new(), x);
        }
        let x = system.bounds().sample(&mut rng);
        let y0 = system.random_initial_state(&mut rng);
        Self::new(index, system.clone(), y0, x)
    }

    pub fn batch(system: &SystemSpec, seed: u64, count: usize) -> Result<Vec<Self>> {
        (0..count as u64)
            .into_par_iter()
            .map(|i| Self::generate(system, seed, i))
            .collect()
    }

    pub fn system_id(&self) -> SystemId {
        self.system.id()
    }

    pub fn bounds(&self) -> Bounds {
        self.system.bounds()
    }

    /// `L(Y*, xs)`.
    pub fn loss(&self, xs: &[f64]) -> Result<f64> {
        configuration_loss(self, xs)
    }
}

/// Squared L2 distance between `P(Y₀, xs)` and `Y*`, summed over every frame
/// and component.
pub fn configuration_loss(problem: &InverseProblem, xs: &[f64]) -> Result<f64> {
    problem
        .system
        .bounds()
        .check(xs)
        .map_err(|e| e.in_problem(problem.id))?;
    match &problem.true_trajectory {
        None => Ok(problem.system.analytic_value(xs)? - problem.offset),
        Some(truth) => {
            let traj = problem
                .system
                .simulate(&problem.initial_state, xs)
                .map_err(|e| e.in_problem(problem.id))?;
            traj.squared_distance(truth).map_err(|e| e.in_problem(problem.id))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSource {
    GroundTruth,
    Proxy,
}

/// Loss values on a tensor-product grid, stored row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub param_names: Vec<String>,
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub source: GridSource,
}

fn linspace(low: f64, high: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                high
            } else {
                low + (high - low) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

impl LandscapeGrid {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Multi-index of flat node `flat`.
    pub fn index(&self, mut flat: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        for d in (0..shape.len()).rev() {
            idx[d] = flat % shape[d];
            flat /= shape[d];
        }
        idx
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, axis)| axis[i])
            .collect()
    }

    /// Index of the smallest value.
    pub fn argmin(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |best, (i, &v)| if v < best.1 { (i, v) } else { best },
            )
            .0
    }

    /// CSV with one row per node: coordinates, then `loss`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = self.param_names.clone();
        header.push("loss".into());
        out.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row: Vec<String> = self.node(i).into_iter().map(format_f64).collect();
            row.push(format_f64(*v));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Evaluate `eval` at every node of the grid spanning `bounds` with
/// `resolution[d]` points on axis `d`. Nodes are evaluated in parallel and
/// stored in order.
pub fn sample_grid<F>(
    bounds: &Bounds,
    param_names: Vec<String>,
    resolution: &[usize],
    budget: usize,
    source: GridSource,
    eval: F,
) -> Result<LandscapeGrid>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if resolution.len() != bounds.dim() {
        return Err(Error::shape(format!(
            "resolution has {} axes, search space has {}",
            resolution.len(),
            bounds.dim()
        )));
    }
    if let Some(r) = resolution.iter().find(|&&r| r < 2) {
        return Err(Error::config(format!("grid resolution must be ≥ 2 per axis, got {r}")));
    }
    let required = resolution
        .iter()
        .try_fold(1usize, |acc, &r| acc.checked_mul(r))
        .unwrap_or(usize::MAX);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let axes: Vec<Vec<f64>> = resolution
        .iter()
        .enumerate()
        .map(|(d, &r)| linspace(bounds.low[d], bounds.high[d], r))
        .collect();
    let mut grid = LandscapeGrid {
        param_names,
        axes,
        values: Vec::new(),
        source,
    };
    grid.values = (0..required)
        .into_par_iter()
        .map(|i| eval(&grid.node(i)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(grid)
}

/// Ground-truth configuration-loss grid for `problem`.
pub fn sample_ground_truth_grid(
    problem: &InverseProblem,
    resolution: &[usize],
    budget: usize,
) -> Result<LandscapeGrid> {
    sample_grid(
        &problem.bounds(),
        problem.system.param_names(),
        resolution,
        budget,
        GridSource::GroundTruth,
        |x| configuration_loss(problem, x),
    )
}

/// Interior nodes strictly below every axis-adjacent neighbour.
pub fn count_local_minima(grid: &LandscapeGrid) -> usize {
    let shape = grid.shape();
    let strides: Vec<usize> = (0..shape.len()).map(|d| shape[d + 1..].iter().product()).collect();
    (0..grid.values.len())
        .filter(|&flat| {
            let idx = grid.index(flat);
            let v = grid.values[flat];
            idx.iter().enumerate().all(|(d, &i)| {
                i > 0 && i + 1 < shape[d] && v < grid.values[flat - strides[d]] && v < grid.values[flat + strides[d]]
            })
        })
        .count()
}
