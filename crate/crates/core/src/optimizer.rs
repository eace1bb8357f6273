//! Reduced-cost minimization over the distribution endpoints.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adjoint::{
    adjoint_solve, assemble_gradient, GradientQuadrature, ParameterGradientPieces,
};
use crate::dsg::{forward_solve, project_initial, ForwardOptions, Scheme, Trajectory};
use crate::error::{DsgError, Result};
use crate::field::CoefficientField;
use crate::mesh::{build_stochastic_mesh, DistributionParams, PhysicalMesh, DEFAULT_MIN_WIDTH};
use crate::problems::ProblemDefinition;

/// Value of the cost functional split into its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    /// `½ Σ ‖u(T) − u_D‖²`
    pub misfit: f64,
    /// `(δ/2) ‖ξ − ξ_p‖²`
    pub penalty: f64,
    pub total: f64,
    /// `‖u(T) − u_D‖₂`
    pub distance: f64,
}

impl CostBreakdown {
    pub fn new(
        state_t: &CoefficientField,
        data: &CoefficientField,
        params: &DistributionParams,
        prior: [f64; 2],
        delta: f64,
    ) -> Result<Self> {
        state_t.check_same_shape(data)?;
        let sq: f64 = state_t
            .as_slice()
            .iter()
            .zip(data.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let x = params.as_array();
        let dp = (x[0] - prior[0]).powi(2) + (x[1] - prior[1]).powi(2);
        let misfit = 0.5 * sq;
        let penalty = 0.5 * delta * dp;
        Ok(Self {
            misfit,
            penalty,
            total: misfit + penalty,
            distance: sq.sqrt(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Steepest,
    Bfgs,
}

impl FromStr for Method {
    type Err = DsgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "steepest" => Ok(Method::Steepest),
            "bfgs" => Ok(Method::Bfgs),
            other => Err(DsgError::Config(format!(
                "unknown optimizer method '{other}' (expected steepest or bfgs)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Steepest => "steepest",
            Method::Bfgs => "bfgs",
        })
    }
}

/// Armijo backtracking constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub alpha_init: f64,
    pub c1: f64,
    pub beta: f64,
    pub max_backtracks: usize,
    pub min_width: f64,
    /// First trial once the BFGS matrix holds curvature information.
    pub alpha_quasi_newton: Option<f64>,
}

impl LineSearch {
    pub fn new(alpha_init: f64) -> Self {
        Self {
            alpha_init,
            c1: 1e-4,
            beta: 0.5,
            max_backtracks: 40,
            min_width: DEFAULT_MIN_WIDTH,
            alpha_quasi_newton: Some(1.0),
        }
    }
}

/// When the BFGS matrix is put back to the identity before a step, in
/// addition to the curvature guard inside the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetRule {
    /// Reset when `−ξᵀ H g > 0`, with `ξ` the current parameters.
    #[default]
    Parameter,
    /// Reset when `H g` is not a descent direction, `gᵀ H g ≤ 0`.
    Descent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    pub tol: f64,
    pub max_iterations: usize,
    pub line_search: LineSearch,
    pub reset: ResetRule,
}

impl OptimizerConfig {
    pub fn new(method: Method, tol: f64, alpha_init: f64) -> Self {
        Self {
            method,
            tol,
            max_iterations: 200,
            line_search: LineSearch::new(alpha_init),
            reset: ResetRule::default(),
        }
    }
}

/// Inverse Hessian approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsState {
    pub inverse_hessian: [[f64; 2]; 2],
    pub previous_gradient: Option<[f64; 2]>,
    pub previous_step: Option<[f64; 2]>,
}

impl Default for BfgsState {
    fn default() -> Self {
        Self::identity()
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm(a: [f64; 2]) -> f64 {
    dot(a, a).sqrt()
}

fn mat_vec(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

impl BfgsState {
    pub const IDENTITY: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

    pub fn identity() -> Self {
        Self {
            inverse_hessian: Self::IDENTITY,
            previous_gradient: None,
            previous_step: None,
        }
    }

    pub fn reset(&mut self) {
        self.inverse_hessian = Self::IDENTITY;
    }

    pub fn is_identity(&self) -> bool {
        self.inverse_hessian == Self::IDENTITY
    }

    /// `H⁻¹ g`; the update is `ξ − α H⁻¹ g`.
    pub fn direction(&self, gradient: [f64; 2]) -> [f64; 2] {
        mat_vec(&self.inverse_hessian, gradient)
    }

    /// Standard inverse-BFGS update. Returns `false` and resets to the
    /// identity when the curvature `yᵀs` is not safely positive.
    pub fn update(&mut self, s: [f64; 2], y: [f64; 2]) -> bool {
        self.previous_step = Some(s);
        let ys = dot(y, s);
        if !(ys > 1e-12) || !ys.is_finite() {
            self.reset();
            return false;
        }
        let h = self.inverse_hessian;
        let hy = mat_vec(&h, y);
        let yhy = dot(y, hy);
        let factor = (1.0 + yhy / ys) / ys;
        let mut out = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                // H is symmetric, so (H y sᵀ)_{ab} = hy_a s_b and (s yᵀ H)_{ab} = s_a hy_b.
                out[a][b] = h[a][b] - (s[a] * hy[b] + hy[a] * s[b]) / ys + factor * s[a] * s[b];
            }
        }
        // Remove the rounding asymmetry.
        let off = 0.5 * (out[0][1] + out[1][0]);
        out[0][1] = off;
        out[1][0] = off;
        self.inverse_hessian = out;
        true
    }
}

/// `ξ − α g`
pub fn steepest_descent_step(params: [f64; 2], gradient: [f64; 2], alpha: f64) -> [f64; 2] {
    [
        params[0] - alpha * gradient[0],
        params[1] - alpha * gradient[1],
    ]
}

/// Anything the loop can minimize.
pub trait Objective {
    fn cost(&mut self, params: &DistributionParams) -> Result<CostBreakdown>;
    fn cost_and_gradient(
        &mut self,
        params: &DistributionParams,
    ) -> Result<(CostBreakdown, [f64; 2])>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoOutcome {
    pub alpha: f64,
    pub params: DistributionParams,
    pub cost: CostBreakdown,
    /// Number of trial points evaluated, the accepted one included.
    pub trials: usize,
}

/// Backtracks from `alpha_init` until `Ĵ(ξ − α d) ≤ Ĵ(ξ) − c₁ α dᵀg` at a
/// feasible trial point.
pub fn armijo_search<O: Objective + ?Sized>(
    objective: &mut O,
    params: &DistributionParams,
    direction: [f64; 2],
    cost: &CostBreakdown,
    gradient: [f64; 2],
    ls: &LineSearch,
) -> Result<ArmijoOutcome> {
    let slope = dot(direction, gradient);
    if !(slope > 0.0) {
        return Err(DsgError::NoDescentDirection { slope });
    }
    let x = params.as_array();
    let mut alpha = ls.alpha_init;
    for trial in 1..=ls.max_backtracks + 1 {
        let cand = steepest_descent_step(x, direction, alpha);
        if let Ok(p) = DistributionParams::with_min_width(cand[0], cand[1], ls.min_width) {
            let c = objective.cost(&p)?;
            if c.total <= cost.total - ls.c1 * alpha * slope && c.total < cost.total {
                return Ok(ArmijoOutcome {
                    alpha,
                    params: p,
                    cost: c,
                    trials: trial,
                });
            }
        }
        alpha *= ls.beta;
    }
    Err(DsgError::LineSearchFailed {
        trials: ls.max_backtracks + 1,
    })
}

/// One row of the optimization history, taken at the start of an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub xi_left: f64,
    pub xi_right: f64,
    #[serde(rename = "J")]
    pub cost: f64,
    #[serde(rename = "j")]
    pub penalty: f64,
    pub state_distance: f64,
    pub gradient_norm: f64,
    pub armijo_steps: usize,
    pub alpha: f64,
    pub seconds: f64,
}

/// Deterministic trace columns; wall time goes to a separate timing file.
pub const TRACE_COLUMNS: [&str; 9] = [
    "iteration",
    "xi_left",
    "xi_right",
    "J",
    "j",
    "state_distance",
    "gradient_norm",
    "armijo_steps",
    "alpha",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OptimizationTrace {
    pub records: Vec<IterationRecord>,
}

impl OptimizationTrace {
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{}", TRACE_COLUMNS.join(","))?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.iteration,
                r.xi_left,
                r.xi_right,
                r.cost,
                r.penalty,
                r.state_distance,
                r.gradient_norm,
                r.armijo_steps,
                r.alpha,
            )?;
        }
        Ok(())
    }

    /// `iteration,seconds`, elapsed since the start of the run.
    pub fn write_timing_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "iteration,seconds")?;
        for r in &self.records {
            writeln!(out, "{},{}", r.iteration, r.seconds)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    NoDescentDirection,
    LineSearchFailed,
    BlowUp,
    MaxIterations,
}

impl Status {
    pub fn is_success(&self) -> bool {
        *self == Status::Converged
    }
}

#[derive(Debug, Clone)]
pub struct IdentifyOutcome {
    pub params: DistributionParams,
    pub status: Status,
    pub trace: OptimizationTrace,
    /// The error that ended the run, if any.
    pub message: Option<String>,
    pub seconds: f64,
}

impl IdentifyOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.records.len()
    }
}

fn status_of(err: &DsgError) -> Option<Status> {
    match err {
        DsgError::NoDescentDirection { .. } => Some(Status::NoDescentDirection),
        DsgError::LineSearchFailed { .. } => Some(Status::LineSearchFailed),
        DsgError::BlowUp { .. } => Some(Status::BlowUp),
        _ => None,
    }
}

/// Runs the descent loop from `start`. Optimizer failures end the loop with
/// a status; other errors are returned.
pub fn identify<O: Objective + ?Sized>(
    objective: &mut O,
    start: DistributionParams,
    config: &OptimizerConfig,
) -> Result<IdentifyOutcome> {
    let clock = Instant::now();
    let mut trace = OptimizationTrace::default();
    let mut params = start;
    let mut bfgs = BfgsState::identity();
    let finish = |params, status, trace, message: Option<String>| IdentifyOutcome {
        params,
        status,
        trace,
        message,
        seconds: clock.elapsed().as_secs_f64(),
    };

    let (mut cost, mut grad) = match objective.cost_and_gradient(&params) {
        Ok(v) => v,
        Err(e) => match status_of(&e) {
            Some(s) => return Ok(finish(params, s, trace, Some(e.to_string()))),
            None => return Err(e),
        },
    };
    for iteration in 1..=config.max_iterations {
        let mut record = IterationRecord {
            iteration,
            xi_left: params.xi_left,
            xi_right: params.xi_right,
            cost: cost.total,
            penalty: cost.penalty,
            state_distance: cost.distance,
            gradient_norm: norm(grad),
            armijo_steps: 0,
            alpha: 0.0,
            seconds: 0.0,
        };
        if record.gradient_norm < config.tol {
            record.seconds = clock.elapsed().as_secs_f64();
            trace.records.push(record);
            return Ok(finish(params, Status::Converged, trace, None));
        }
        let direction = match config.method {
            Method::Steepest => grad,
            Method::Bfgs => {
                let d = bfgs.direction(grad);
                let reset = match config.reset {
                    ResetRule::Parameter => -dot(params.as_array(), d) > 0.0,
                    ResetRule::Descent => dot(grad, d) <= 0.0,
                };
                if reset {
                    bfgs.reset();
                }
                bfgs.direction(grad)
            }
        };
        let mut ls_cfg = config.line_search;
        if let (Method::Bfgs, Some(a)) = (config.method, ls_cfg.alpha_quasi_newton) {
            if !bfgs.is_identity() {
                ls_cfg.alpha_init = a;
            }
        }
        let step =
            armijo_search(objective, &params, direction, &cost, grad, &ls_cfg).and_then(|ls| {
                let (c, g) = objective.cost_and_gradient(&ls.params)?;
                Ok((ls, c, g))
            });
        let (ls, new_cost, new_grad) = match step {
            Ok(v) => v,
            Err(e) => {
                if let DsgError::LineSearchFailed { trials } = e {
                    record.armijo_steps = trials;
                }
                record.seconds = clock.elapsed().as_secs_f64();
                trace.records.push(record);
                return match status_of(&e) {
                    Some(s) => Ok(finish(params, s, trace, Some(e.to_string()))),
                    None => Err(e),
                };
            }
        };
        record.armijo_steps = ls.trials;
        record.alpha = ls.alpha;
        record.seconds = clock.elapsed().as_secs_f64();
        trace.records.push(record);

        if config.method == Method::Bfgs {
            let (a, b) = (params.as_array(), ls.params.as_array());
            let s = [b[0] - a[0], b[1] - a[1]];
            let y = [new_grad[0] - grad[0], new_grad[1] - grad[1]];
            bfgs.update(s, y);
            bfgs.previous_gradient = Some(grad);
        }
        params = ls.params;
        cost = new_cost;
        grad = new_grad;
    }
    Ok(finish(params, Status::MaxIterations, trace, None))
}

/// Discretization settings that stay fixed while the endpoints move.
#[derive(Debug, Clone, Copy)]
pub struct Discretization {
    pub phys: PhysicalMesh,
    pub num_elements: usize,
    pub kx: usize,
    pub kxi: usize,
    pub forward: ForwardOptions,
}

impl Discretization {
    pub fn scheme(
        &self,
        flux: crate::problems::FluxModel,
        params: DistributionParams,
    ) -> Result<Scheme> {
        let stoch = build_stochastic_mesh(params, self.num_elements)?;
        Scheme::new(self.phys, stoch, self.kx, self.kxi, flux)
    }
}

/// The PDE-constrained reduced cost `Ĵ(ξ)` and its adjoint gradient.
#[derive(Debug, Clone)]
pub struct IdentificationProblem {
    pub problem: ProblemDefinition,
    pub disc: Discretization,
    pub data: CoefficientField,
    pub prior: [f64; 2],
    pub delta: f64,
    pub quadrature: GradientQuadrature,
}

impl IdentificationProblem {
    pub fn scheme(&self, params: DistributionParams) -> Result<Scheme> {
        self.disc.scheme(self.problem.flux, params)
    }

    /// Forward solve at `params` and the resulting cost.
    pub fn reduced_cost(
        &self,
        params: &DistributionParams,
    ) -> Result<(CostBreakdown, Trajectory, Scheme)> {
        let scheme = self.scheme(*params)?;
        let u0 = project_initial(&scheme, &self.problem.initial);
        let traj = forward_solve(&scheme, u0, &self.disc.forward)?;
        let cost = CostBreakdown::new(
            traj.final_state(),
            &self.data,
            params,
            self.prior,
            self.delta,
        )?;
        Ok((cost, traj, scheme))
    }

    /// Adjoint gradient at `params`, reusing a trajectory computed there.
    pub fn gradient_pieces(
        &self,
        scheme: &Scheme,
        trajectory: &Trajectory,
    ) -> Result<ParameterGradientPieces> {
        let adj = adjoint_solve(scheme, trajectory, &self.data)?;
        assemble_gradient(
            scheme,
            trajectory,
            &adj,
            &scheme.stoch.params,
            self.prior,
            self.delta,
            &self.problem.initial,
            self.quadrature,
        )
    }

    pub fn evaluate(
        &self,
        params: &DistributionParams,
    ) -> Result<(CostBreakdown, ParameterGradientPieces)> {
        let (cost, traj, scheme) = self.reduced_cost(params)?;
        Ok((cost, self.gradient_pieces(&scheme, &traj)?))
    }
}

impl Objective for IdentificationProblem {
    fn cost(&mut self, params: &DistributionParams) -> Result<CostBreakdown> {
        let mut opts = self.disc.forward;
        opts.store_intermediate = false;
        let scheme = self.scheme(*params)?;
        let traj = forward_solve(
            &scheme,
            project_initial(&scheme, &self.problem.initial),
            &opts,
        )?;
        CostBreakdown::new(
            traj.final_state(),
            &self.data,
            params,
            self.prior,
            self.delta,
        )
    }

    fn cost_and_gradient(
        &mut self,
        params: &DistributionParams,
    ) -> Result<(CostBreakdown, [f64; 2])> {
        let (c, g) = self.evaluate(params)?;
        Ok((c, g.total))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// `½ (x − a)ᵀ Q (x − a)` with the endpoints as `x`.
    struct Quadratic {
        q: [[f64; 2]; 2],
        a: [f64; 2],
        evaluations: usize,
    }

    impl Quadratic {
        fn value(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
            let d = [x[0] - self.a[0], x[1] - self.a[1]];
            let g = mat_vec(&self.q, d);
            (0.5 * dot(d, g), g)
        }
    }

    impl Objective for Quadratic {
        fn cost(&mut self, p: &DistributionParams) -> Result<CostBreakdown> {
            self.evaluations += 1;
            let v = self.value(p.as_array()).0;
            Ok(CostBreakdown {
                misfit: v,
                penalty: 0.0,
                total: v,
                distance: (2.0 * v).sqrt(),
            })
        }

        fn cost_and_gradient(
            &mut self,
            p: &DistributionParams,
        ) -> Result<(CostBreakdown, [f64; 2])> {
            let c = self.cost(p)?;
            Ok((c, self.value(p.as_array()).1))
        }
    }

    fn params(l: f64, r: f64) -> DistributionParams {
        DistributionParams::new(l, r).unwrap()
    }

    #[test]
    fn steepest_examples() {
        assert_eq!(
            steepest_descent_step([-1.0, 1.0], [0.0, 0.0], 3.0),
            [-1.0, 1.0]
        );
        let s = steepest_descent_step([-1.0, 1.0], [0.1, -0.1], 1.0);
        assert_abs_diff_eq!(s[0], -1.1, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 1.1, epsilon = 1e-15);
        let full = steepest_descent_step([0.3, 0.9], [0.7, -0.2], 0.5);
        let half = steepest_descent_step([0.3, 0.9], [0.7, -0.2], 0.25);
        for k in 0..2 {
            let x = [0.3, 0.9][k];
            assert_abs_diff_eq!(full[k] - x, 2.0 * (half[k] - x), epsilon = 1e-15);
        }
    }

    #[test]
    fn direction_examples() {
        let b = BfgsState::identity();
        assert_eq!(b.direction([0.3, -2.0]), [0.3, -2.0]);
        let d = BfgsState {
            inverse_hessian: [[2.0, 0.0], [0.0, 0.5]],
            ..b
        };
        assert_eq!(d.direction([1.0, 1.0]), [2.0, 0.5]);
    }

    #[test]
    fn update_examples() {
        let mut b = BfgsState::identity();
        assert!(b.update([1.0, 0.0], [2.0, 0.0]));
        assert_abs_diff_eq!(b.inverse_hessian[0][0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b.inverse_hessian[1][1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.inverse_hessian[0][1], 0.0, epsilon = 1e-15);
        let hy = b.direction([2.0, 0.0]);
        assert_abs_diff_eq!(hy[0], 1.0, epsilon = 1e-15);

        let mut b = BfgsState {
            inverse_hessian: [[3.0, 1.0], [1.0, 2.0]],
            ..BfgsState::identity()
        };
        assert!(!b.update([1.0, 0.0], [0.0, 1.0]));
        assert!(b.is_identity());
    }

    #[test]
    fn quadratic_converges_quickly_with_bfgs() {
        let mut q = Quadratic {
            q: [[3.0, 1.0], [1.0, 2.0]],
            a: [-1.0, 1.0],
            evaluations: 0,
        };
        let cfg = OptimizerConfig::new(Method::Bfgs, 1e-8, 1.0);
        let out = identify(&mut q, params(-0.2, 2.5), &cfg).unwrap();
        assert_eq!(out.status, Status::Converged);
        assert_abs_diff_eq!(out.params.xi_left, -1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(out.params.xi_right, 1.0, epsilon = 1e-7);
        let costs: Vec<f64> = out.trace.records.iter().map(|r| r.cost).collect();
        assert!(costs.windows(2).all(|w| w[1] < w[0]));
        let steep = identify(
            &mut q,
            params(-0.2, 2.5),
            &OptimizerConfig::new(Method::Steepest, 1e-8, 1.0),
        )
        .unwrap();
        assert!(
            out.iterations() < steep.iterations(),
            "{} {}",
            out.iterations(),
            steep.iterations()
        );
    }

    /// Exact line search on a quadratic: BFGS needs at most two steps.
    #[test]
    fn bfgs_terminates_on_quadratic_with_exact_steps() {
        let qm = [[4.0, 1.0], [1.0, 1.5]];
        let quad = Quadratic {
            q: qm,
            a: [0.5, -0.25],
            evaluations: 0,
        };
        let mut x = [2.0, 1.0];
        let mut b = BfgsState::identity();
        let mut g = quad.value(x).1;
        let mut steps = 0;
        while norm(g) > 1e-12 && steps < 3 {
            let d = b.direction(g);
            let alpha = dot(g, d) / dot(d, mat_vec(&qm, d));
            let xn = steepest_descent_step(x, d, alpha);
            let gn = quad.value(xn).1;
            b.update([xn[0] - x[0], xn[1] - x[1]], [gn[0] - g[0], gn[1] - g[1]]);
            x = xn;
            g = gn;
            steps += 1;
        }
        assert!(norm(g) < 1e-10 && steps <= 2, "{steps} {g:?}");
    }

    #[test]
    fn armijo_terminates_with_strict_decrease() {
        let mut q = Quadratic {
            q: [[1.0, 0.0], [0.0, 1.0]],
            a: [-1.0, 1.0],
            evaluations: 0,
        };
        let p = params(-0.5, 0.5);
        let (c, g) = q.cost_and_gradient(&p).unwrap();
        let out = armijo_search(&mut q, &p, g, &c, g, &LineSearch::new(1e6)).unwrap();
        assert!(out.cost.total < c.total);
        assert!(out.trials > 1 && out.trials < 41);
        assert_eq!(out.trials, q.evaluations - 1);
    }

    #[test]
    fn armijo_rejects_ascent_and_infeasible_steps() {
        let mut q = Quadratic {
            q: [[1.0, 0.0], [0.0, 1.0]],
            a: [0.0, 0.0],
            evaluations: 0,
        };
        let p = params(-0.5, 0.5);
        let (c, g) = q.cost_and_gradient(&p).unwrap();
        let err =
            armijo_search(&mut q, &p, [-g[0], -g[1]], &c, g, &LineSearch::new(1.0)).unwrap_err();
        assert!(matches!(err, DsgError::NoDescentDirection { .. }));
        // The quadratic minimum (0, 0) is infeasible; trials crossing it are skipped.
        let out = armijo_search(&mut q, &p, g, &c, g, &LineSearch::new(4.0)).unwrap();
        assert!(out.params.xi_left < out.params.xi_right);
    }

    #[test]
    fn stationary_start_stops_at_first_iteration() {
        let mut q = Quadratic {
            q: [[1.0, 0.0], [0.0, 1.0]],
            a: [-1.0, 1.0],
            evaluations: 0,
        };
        let out = identify(
            &mut q,
            params(-1.0, 1.0),
            &OptimizerConfig::new(Method::Bfgs, 1e-6, 1.0),
        )
        .unwrap();
        assert_eq!(out.status, Status::Converged);
        assert_eq!(out.iterations(), 1);
        assert_eq!(out.trace.records[0].armijo_steps, 0);
    }

    #[test]
    fn first_candidates_agree_between_methods() {
        let start = params(-0.3, 0.4);
        let mut runs = Vec::new();
        for m in [Method::Steepest, Method::Bfgs] {
            let mut q = Quadratic {
                q: [[2.0, 0.5], [0.5, 1.0]],
                a: [-1.0, 1.0],
                evaluations: 0,
            };
            let mut cfg = OptimizerConfig::new(m, 1e-10, 0.7);
            cfg.max_iterations = 1;
            runs.push(identify(&mut q, start, &cfg).unwrap());
        }
        assert_eq!(runs[0].params, runs[1].params);
        assert_eq!(runs[0].status, Status::MaxIterations);
    }

    #[test]
    fn cost_breakdown_parts() {
        let shape = crate::field::FieldShape::new(0, 0, 2, 1);
        let u = CoefficientField::from_vec(shape, vec![1.0, 2.0]).unwrap();
        let d = CoefficientField::from_vec(shape, vec![1.0, 0.0]).unwrap();
        let c = CostBreakdown::new(&u, &d, &params(-1.0, 1.0), [-1.0, 2.0], 0.5).unwrap();
        assert_eq!(c.misfit, 2.0);
        assert_eq!(c.penalty, 0.25);
        assert_eq!(c.total, 2.25);
        assert_eq!(c.distance, 2.0);
    }

    #[test]
    fn trace_csv_columns() {
        let mut t = OptimizationTrace::default();
        t.records.push(IterationRecord {
            iteration: 1,
            xi_left: -1.0,
            xi_right: 1.0,
            cost: 0.5,
            penalty: 0.25,
            state_distance: 0.1,
            gradient_norm: 1e-3,
            armijo_steps: 2,
            alpha: 0.25,
            seconds: 0.0,
        });
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRACE_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "1,-1,1,0.5,0.25,0.1,0.001,2,0.25");
    }

    proptest! {
        #[test]
        fn secant_and_symmetry(
            s0 in -2.0f64..2.0, s1 in -2.0f64..2.0,
            y0 in -2.0f64..2.0, y1 in -2.0f64..2.0,
            h00 in 0.5f64..3.0, h11 in 0.5f64..3.0, h01 in -0.4f64..0.4,
        ) {
            let (s, y) = ([s0, s1], [y0, y1]);
            prop_assume!(dot(y, s) > 0.1 * norm(s) * norm(y) && norm(s) > 1e-2);
            let mut b = BfgsState { inverse_hessian: [[h00, h01], [h01, h11]], ..BfgsState::identity() };
            prop_assert!(b.update(s, y));
            let hy = b.direction(y);
            let err = ((hy[0] - s[0]).powi(2) + (hy[1] - s[1]).powi(2)).sqrt();
            prop_assert!(err < 1e-12 * norm(s), "{}", err);
            prop_assert!((b.inverse_hessian[0][1] - b.inverse_hessian[1][0]).abs() <= 1e-13);
        }

        #[test]
        fn identity_preserved_when_y_equals_s(s0 in -3.0f64..3.0, s1 in -3.0f64..3.0) {
            prop_assume!(s0.abs() + s1.abs() > 1e-3);
            let mut b = BfgsState::identity();
            prop_assert!(b.update([s0, s1], [s0, s1]));
            for a in 0..2 { for c in 0..2 {
                let e = if a == c { 1.0 } else { 0.0 };
                prop_assert!((b.inverse_hessian[a][c] - e).abs() < 1e-13);
            }}
        }
    }
}
