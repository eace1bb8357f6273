//! Fluxes and initial data of the supported experiments.

use std::f64::consts::PI;

use crate::error::{DsgError, Result};
use crate::mesh::{Boundary, DistributionParams};

/// Safety margin applied to the sampled Burgers wave speed.
pub const BURGERS_VISCOSITY_MARGIN: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxModel {
    /// `f(u, ξ) = coeff·ξ·u`
    Advection { coeff: f64 },
    /// `f(u) = speed·u`, no ξ dependence.
    Linear { speed: f64 },
    /// `f(u) = u²/2`
    Burgers,
}

impl FluxModel {
    #[inline]
    pub fn f(&self, u: f64, xi: f64) -> f64 {
        match *self {
            FluxModel::Advection { coeff } => coeff * xi * u,
            FluxModel::Linear { speed } => speed * u,
            FluxModel::Burgers => 0.5 * u * u,
        }
    }

    #[inline]
    pub fn f_u(&self, u: f64, xi: f64) -> f64 {
        match *self {
            FluxModel::Advection { coeff } => coeff * xi,
            FluxModel::Linear { speed } => speed,
            FluxModel::Burgers => u,
        }
    }

    #[inline]
    pub fn f_xi(&self, u: f64, _xi: f64) -> f64 {
        match *self {
            FluxModel::Advection { coeff } => coeff * u,
            FluxModel::Linear { .. } | FluxModel::Burgers => 0.0,
        }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self, FluxModel::Burgers)
    }

    pub fn depends_on_xi(&self) -> bool {
        matches!(self, FluxModel::Advection { .. })
    }

    /// Global Lax-Friedrichs viscosity from the support and the sampled state
    /// values at every tensor quadrature node.
    pub fn viscosity_estimate(&self, params: &DistributionParams, max_abs_u: f64) -> f64 {
        match *self {
            FluxModel::Advection { coeff } => coeff.abs() * params.max_abs(),
            FluxModel::Linear { speed } => speed.abs(),
            FluxModel::Burgers => BURGERS_VISCOSITY_MARGIN * max_abs_u,
        }
    }

    /// `(∂c/∂ξᴸ, ∂c/∂ξᴿ)` of the viscosity estimate at fixed state. Where
    /// `|ξᴸ| = |ξᴿ|` the two one-sided slopes are averaged, which is what a
    /// central difference sees.
    pub fn viscosity_param_derivative(&self, params: &DistributionParams) -> [f64; 2] {
        match *self {
            FluxModel::Advection { coeff } => {
                let (l, r) = (params.xi_left, params.xi_right);
                let a = coeff.abs();
                let (dl, dr) = (a * l.signum(), a * r.signum());
                match l.abs().partial_cmp(&r.abs()) {
                    Some(std::cmp::Ordering::Greater) => [dl, 0.0],
                    Some(std::cmp::Ordering::Less) => [0.0, dr],
                    _ => [0.5 * dl, 0.5 * dr],
                }
            }
            FluxModel::Linear { .. } | FluxModel::Burgers => [0.0, 0.0],
        }
    }
}

pub fn advection(a_coeff: f64) -> FluxModel {
    FluxModel::Advection { coeff: a_coeff }
}

pub fn burgers() -> FluxModel {
    FluxModel::Burgers
}

/// Initial datum `u₀(x, ξ)` together with its exact ξ-partial.
#[derive(Clone, Copy)]
pub struct InitialDatum {
    pub value: fn(f64, f64) -> f64,
    pub dxi: fn(f64, f64) -> f64,
}

impl std::fmt::Debug for InitialDatum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("InitialDatum")
    }
}

impl InitialDatum {
    pub fn eval(&self, x: f64, xi: f64) -> f64 {
        (self.value)(x, xi)
    }

    pub fn eval_dxi(&self, x: f64, xi: f64) -> f64 {
        (self.dxi)(x, xi)
    }

    /// `u₀ ≡ c` is handy for tests; only a few constants are provided since
    /// the datum is a plain function pointer.
    pub fn one() -> Self {
        Self {
            value: |_, _| 1.0,
            dxi: zero,
        }
    }
}

fn zero(_x: f64, _xi: f64) -> f64 {
    0.0
}

fn shock_value(x: f64, _xi: f64) -> f64 {
    if x > 0.4 && x < 0.6 {
        1.0
    } else {
        0.0
    }
}

fn sinus_value(x: f64, _xi: f64) -> f64 {
    (2.0 * PI * x).sin()
}

fn burgers_value(x: f64, xi: f64) -> f64 {
    (2.0 * PI * x).sin() + 0.5 * xi
}

fn burgers_dxi(_x: f64, _xi: f64) -> f64 {
    0.5
}

pub fn shock_initial() -> InitialDatum {
    InitialDatum {
        value: shock_value,
        dxi: zero,
    }
}

pub fn sinus_initial() -> InitialDatum {
    InitialDatum {
        value: sinus_value,
        dxi: zero,
    }
}

pub fn burgers_initial() -> InitialDatum {
    InitialDatum {
        value: burgers_value,
        dxi: burgers_dxi,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    AdvectionShock,
    AdvectionSinus,
    Burgers,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] = [
        ProblemKind::AdvectionShock,
        ProblemKind::AdvectionSinus,
        ProblemKind::Burgers,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::AdvectionShock => "advection-shock",
            ProblemKind::AdvectionSinus => "advection-sinus",
            ProblemKind::Burgers => "burgers",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| {
                DsgError::Config(format!(
                    "unknown problem '{name}' (expected advection-shock, advection-sinus or burgers)"
                ))
            })
    }

    pub fn definition(&self) -> ProblemDefinition {
        match self {
            ProblemKind::AdvectionShock => ProblemDefinition {
                kind: *self,
                flux: advection(2.0),
                initial: shock_initial(),
                boundary: Boundary::Outflow,
            },
            ProblemKind::AdvectionSinus => ProblemDefinition {
                kind: *self,
                flux: advection(1.0),
                initial: sinus_initial(),
                boundary: Boundary::Periodic,
            },
            ProblemKind::Burgers => ProblemDefinition {
                kind: *self,
                flux: burgers(),
                initial: burgers_initial(),
                boundary: Boundary::Periodic,
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProblemDefinition {
    pub kind: ProblemKind,
    pub flux: FluxModel,
    pub initial: InitialDatum,
    /// Boundary treatment the experiment is defined with.
    pub boundary: Boundary,
}
