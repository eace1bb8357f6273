//! SSP Runge-Kutta time stepping and the stored forward trajectory.

use super::{minmod_limit, semi_discrete_rhs, LimiterConfig, Scheme};
use crate::error::{DsgError, Result};
use crate::field::CoefficientField;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RkMethod {
    ForwardEuler,
    SspRk2,
    SspRk3,
}

impl RkMethod {
    /// Default stage policy: forward Euler for `K_X = 0`, two stages otherwise.
    pub fn default_for(kx: usize) -> Self {
        if kx == 0 {
            RkMethod::ForwardEuler
        } else {
            RkMethod::SspRk2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    pub final_time: f64,
    pub cfl_safety: f64,
    pub limiter: Option<LimiterConfig>,
    /// Overrides the default stage policy.
    pub method: Option<RkMethod>,
    /// Keep every accepted state; otherwise only the endpoints are stored.
    pub store_intermediate: bool,
}

impl ForwardOptions {
    pub fn new(final_time: f64) -> Self {
        Self {
            final_time,
            cfl_safety: 0.5,
            limiter: Some(LimiterConfig::default()),
            method: None,
            store_intermediate: true,
        }
    }
}

/// Uniform time slicing of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

/// `safety·Δx/c` before snapping.
pub fn cfl_dt_raw(dx: f64, c: f64, safety: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(DsgError::Config(format!(
            "viscosity constant must be positive, got {c}"
        )));
    }
    if !(safety > 0.0) {
        return Err(DsgError::Config(format!(
            "CFL safety must be positive, got {safety}"
        )));
    }
    Ok(safety * dx / c)
}

/// CFL step reduced so that it divides `final_time` exactly.
pub fn cfl_dt(dx: f64, c: f64, safety: f64, final_time: f64) -> Result<TimeGrid> {
    let raw = cfl_dt_raw(dx, c, safety)?;
    if final_time <= 0.0 {
        return Ok(TimeGrid { dt: raw, steps: 0 });
    }
    // Guard against T/raw landing a hair above an integer.
    let steps = ((final_time / raw) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    Ok(TimeGrid {
        dt: final_time / steps as f64,
        steps,
    })
}

/// States at every accepted time step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CoefficientField>,
    /// Viscosity constant used for the step starting at `times[n]`.
    pub viscosity: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub method: RkMethod,
    pub limiter: Option<LimiterConfig>,
}

impl Trajectory {
    pub fn final_state(&self) -> &CoefficientField {
        self.states
            .last()
            .expect("trajectory always holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    /// Whether every step was stored (required by the adjoint).
    pub fn is_dense(&self) -> bool {
        self.states.len() == self.steps + 1
    }

    /// Piecewise-linear interpolation of the stored states.
    pub fn state_at(&self, t: f64) -> CoefficientField {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let idx = self.times.partition_point(|&s| s <= t).clamp(1, n - 1);
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let theta = (t - t0) / (t1 - t0);
        if theta <= 1e-12 {
            return self.states[idx - 1].clone();
        }
        if theta >= 1.0 - 1e-12 {
            return self.states[idx].clone();
        }
        self.states[idx - 1].lincomb(1.0 - theta, &self.states[idx], theta)
    }

    /// Inputs of the Euler stages of step `n`, recomputed from the stored
    /// state: `[u_n]`, `[u_n, u⁽¹⁾]` or `[u_n, u⁽¹⁾, u⁽²⁾]`.
    pub fn stage_states(&self, scheme: &Scheme, n: usize) -> Vec<CoefficientField> {
        let u = &self.states[n];
        let c = self.viscosity[n];
        let lim = self.limiter.as_ref();
        let euler = |v: &CoefficientField| {
            let mut out = v.clone();
            out.axpy(self.dt, &semi_discrete_rhs(scheme, v, c));
            limited(scheme, out, lim)
        };
        match self.method {
            RkMethod::ForwardEuler => vec![u.clone()],
            RkMethod::SspRk2 => {
                let u1 = euler(u);
                vec![u.clone(), u1]
            }
            RkMethod::SspRk3 => {
                let u1 = euler(u);
                let u2 = limited(scheme, u.lincomb(0.75, &euler(&u1), 0.25), lim);
                vec![u.clone(), u1, u2]
            }
        }
    }

    /// Viscosity constant in force at time `t`.
    pub fn viscosity_at(&self, t: f64) -> f64 {
        if self.viscosity.is_empty() {
            return 0.0;
        }
        let n = ((t / self.dt) + 1e-9).floor().max(0.0) as usize;
        self.viscosity[n.min(self.viscosity.len() - 1)]
    }
}

/// Cell width seen by the CFL condition of a degree-`K_X` DG scheme.
pub fn dg_cell_width(scheme: &Scheme) -> f64 {
    scheme.phys.dx / (2 * scheme.kx() + 1) as f64
}

fn limited(
    scheme: &Scheme,
    mut u: CoefficientField,
    limiter: Option<&LimiterConfig>,
) -> CoefficientField {
    if let Some(cfg) = limiter {
        minmod_limit(scheme, &mut u, cfg);
    }
    u
}

/// One step of the chosen SSP scheme with viscosity `c`, limiting after
/// every stage.
pub fn ssp_rk_step(
    scheme: &Scheme,
    u: &CoefficientField,
    dt: f64,
    c: f64,
    method: RkMethod,
    limiter: Option<&LimiterConfig>,
) -> CoefficientField {
    let euler = |v: &CoefficientField| {
        let mut out = v.clone();
        out.axpy(dt, &semi_discrete_rhs(scheme, v, c));
        limited(scheme, out, limiter)
    };
    match method {
        RkMethod::ForwardEuler => euler(u),
        RkMethod::SspRk2 => {
            let u1 = euler(u);
            let u2 = euler(&u1);
            limited(scheme, u.lincomb(0.5, &u2, 0.5), limiter)
        }
        RkMethod::SspRk3 => {
            let u1 = euler(u);
            let u2 = limited(scheme, u.lincomb(0.75, &euler(&u1), 0.25), limiter);
            limited(
                scheme,
                u.lincomb(1.0 / 3.0, &euler(&u2), 2.0 / 3.0),
                limiter,
            )
        }
    }
}

/// Integrates from the initial state to `options.final_time`.
///
/// The step size comes from the initial viscosity constant and the DG
/// stability bound `Δx/(c(2K_X+1))` scaled by `options.cfl_safety`; the
/// constant itself is refreshed at the start of every step.
pub fn forward_solve(
    scheme: &Scheme,
    initial: CoefficientField,
    options: &ForwardOptions,
) -> Result<Trajectory> {
    let method = options
        .method
        .unwrap_or_else(|| RkMethod::default_for(scheme.kx()));
    let limiter = options.limiter.as_ref();
    let c0 = scheme.viscosity(&initial);
    if options.final_time <= 0.0 {
        return Ok(Trajectory {
            times: vec![0.0],
            states: vec![initial],
            viscosity: vec![c0],
            dt: 0.0,
            steps: 0,
            method,
            limiter: options.limiter,
        });
    }
    let grid = cfl_dt(
        dg_cell_width(scheme),
        c0,
        options.cfl_safety,
        options.final_time,
    )?;
    let mut times = vec![0.0];
    let mut viscosity = Vec::with_capacity(grid.steps);
    let mut states = vec![initial];
    let mut current = states[0].clone();
    for n in 0..grid.steps {
        let c = if n == 0 {
            c0
        } else {
            scheme.viscosity(&current)
        };
        viscosity.push(c);
        let next = ssp_rk_step(scheme, &current, grid.dt, c, method, limiter);
        let t = if n + 1 == grid.steps {
            options.final_time
        } else {
            (n + 1) as f64 * grid.dt
        };
        if !next.is_finite() {
            return Err(DsgError::BlowUp {
                time: t,
                max_abs: next.max_abs(),
            });
        }
        if options.store_intermediate || n + 1 == grid.steps {
            times.push(t);
            states.push(next.clone());
        }
        current = next;
    }
    Ok(Trajectory {
        times,
        states,
        viscosity,
        dt: grid.dt,
        steps: grid.steps,
        method,
        limiter: options.limiter,
    })
}
