//! Forward models `P(Y₀, X)`: analytic test landscapes, Burgers, forced
//! Kuramoto–Sivashinsky and event-driven billiards.

pub mod analytic;
pub mod billiards;
pub mod burgers;
pub mod ks;
pub mod params;
pub mod trajectory;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use analytic::{gramacy_lee, rastrigin};
pub use billiards::{billiards_simulate, BilliardsMode, BilliardsSpec};
pub use burgers::{burgers_simulate, BurgersSpec};
pub use ks::{ks_simulate, KsSpec};
pub use params::{Bounds, ControlParams};
pub use trajectory::{SystemId, Trajectory};

use crate::error::{Error, Result};

/// A forward model together with its fixed configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum SystemSpec {
    GramacyLee,
    Rastrigin { dim: usize },
    Burgers(BurgersSpec),
    Ks(KsSpec),
    Billiards(BilliardsSpec),
}

impl SystemSpec {
    pub fn id(&self) -> SystemId {
        match self {
            SystemSpec::GramacyLee => SystemId::GramacyLee,
            SystemSpec::Rastrigin { .. } => SystemId::Rastrigin,
            SystemSpec::Burgers(_) => SystemId::Burgers,
            SystemSpec::Ks(_) => SystemId::Ks,
            SystemSpec::Billiards(b) => match b.mode {
                BilliardsMode::TwoD => SystemId::Billiards2d,
                BilliardsMode::FourD => SystemId::Billiards4d,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SystemSpec::GramacyLee => Ok(()),
            SystemSpec::Rastrigin { dim } if *dim == 0 => Err(Error::config("rastrigin dim must be positive")),
            SystemSpec::Rastrigin { .. } => Ok(()),
            SystemSpec::Burgers(s) => s.validate(),
            SystemSpec::Ks(s) => s.validate(),
            SystemSpec::Billiards(s) => s.validate(),
        }
    }

    /// Landscapes with a closed form and no trajectory.
    pub fn is_analytic(&self) -> bool {
        matches!(self, SystemSpec::GramacyLee | SystemSpec::Rastrigin { .. })
    }

    /// The search space `Z`.
    pub fn bounds(&self) -> Bounds {
        let (low, high) = match self {
            SystemSpec::GramacyLee => {
                let (l, h) = analytic::GRAMACY_LEE_DOMAIN;
                (vec![l], vec![h])
            }
            SystemSpec::Rastrigin { dim } => {
                let (l, h) = analytic::RASTRIGIN_DOMAIN;
                (vec![l; *dim], vec![h; *dim])
            }
            SystemSpec::Burgers(s) => (vec![s.nu_bounds[0]], vec![s.nu_bounds[1]]),
            SystemSpec::Ks(s) => (
                vec![s.alpha_bounds[0], s.beta_bounds[0]],
                vec![s.alpha_bounds[1], s.beta_bounds[1]],
            ),
            SystemSpec::Billiards(s) => s.bounds(),
        };
        Bounds { low, high }
    }

    pub fn param_names(&self) -> Vec<String> {
        let names: Vec<&str> = match self {
            SystemSpec::GramacyLee => vec!["x"],
            SystemSpec::Rastrigin { dim } => return (0..*dim).map(|i| format!("x{i}")).collect(),
            SystemSpec::Burgers(_) => vec!["nu"],
            SystemSpec::Ks(_) => vec!["alpha", "beta"],
            SystemSpec::Billiards(b) => match b.mode {
                BilliardsMode::TwoD => vec!["alpha", "y0_cue"],
                BilliardsMode::FourD => vec!["y0_cue", "x0_cue", "alpha", "v0_cue"],
            },
        };
        names.into_iter().map(String::from).collect()
    }

    /// Analytic landscape value `f(x)`; errors for simulated systems.
    pub fn analytic_value(&self, x: &[f64]) -> Result<f64> {
        match self {
            SystemSpec::GramacyLee => {
                if x.len() != 1 {
                    return Err(Error::shape("gramacy_lee takes one parameter"));
                }
                Ok(gramacy_lee(x[0]))
            }
            SystemSpec::Rastrigin { dim } => {
                if x.len() != *dim {
                    return Err(Error::shape(format!("rastrigin takes {dim} parameters")));
                }
                Ok(rastrigin(x))
            }
            _ => Err(Error::config("system has no closed-form landscape")),
        }
    }

    pub fn analytic_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            SystemSpec::GramacyLee => Ok(vec![analytic::gramacy_lee_derivative(x[0])]),
            SystemSpec::Rastrigin { .. } => Ok(analytic::rastrigin_gradient(x)),
            _ => Err(Error::config("system has no closed-form landscape")),
        }
    }

    /// Global minimizer and minimum of an analytic landscape.
    pub fn analytic_minimum(&self) -> Result<(Vec<f64>, f64)> {
        match self {
            SystemSpec::GramacyLee => {
                let (x, f) = analytic::gramacy_lee_minimum();
                Ok((vec![x], f))
            }
            SystemSpec::Rastrigin { dim } => Ok((vec![0.0; *dim], 0.0)),
            _ => Err(Error::config("system has no closed-form landscape")),
        }
    }

    /// `(frame_count, frame_len)` of simulated trajectories; `None` for
    /// analytic landscapes.
    pub fn trajectory_shape(&self) -> Option<(usize, usize)> {
        match self {
            SystemSpec::GramacyLee | SystemSpec::Rastrigin { .. } => None,
            SystemSpec::Burgers(s) => Some((s.frame_count, s.grid_points)),
            SystemSpec::Ks(s) => Some((s.frame_count(), s.grid_points)),
            SystemSpec::Billiards(s) => Some((s.keyframe_count, s.frame_len())),
        }
    }

    /// Random initial state `Y₀` for systems that have one.
    pub fn random_initial_state(&self, rng: &mut impl Rng) -> Vec<f64> {
        match self {
            SystemSpec::Burgers(s) => s.random_initial_state(rng),
            SystemSpec::Ks(s) => s.random_initial_state(rng),
            _ => Vec::new(),
        }
    }

    /// Run the forward model from `initial_state` under `params`.
    pub fn simulate(&self, initial_state: &[f64], params: &[f64]) -> Result<Trajectory> {
        match self {
            SystemSpec::Burgers(s) => {
                if params.len() != 1 {
                    return Err(Error::shape("burgers takes (nu)"));
                }
                burgers_simulate(s, initial_state, params[0])
            }
            SystemSpec::Ks(s) => {
                if params.len() != 2 {
                    return Err(Error::shape("ks takes (alpha, beta)"));
                }
                ks_simulate(s, initial_state, params[0], params[1])
            }
            SystemSpec::Billiards(s) => billiards_simulate(s, params),
            _ => Err(Error::config("analytic landscapes have no trajectory")),
        }
    }
}
