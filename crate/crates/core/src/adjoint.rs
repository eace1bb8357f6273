//! Adjoint of the DsG system and the parameter derivatives of its operators.
//!
//! The forward system is `u' = M1⁻¹ R(u)` with `R = M2 − M3`. The adjoint is
//! integrated in reversed time `τ = T − t` as `dp/dτ = M1⁻¹ J_Rᵀ p`, where
//! `J_R` is the exact Jacobian of the unlimited operator with the viscosity
//! constant frozen.

use rayon::prelude::*;
use serde::Serialize;

use crate::dsg::{RkMethod, Scheme, Side, Trajectory};
use crate::error::{DsgError, Result};
use crate::field::CoefficientField;
use crate::mesh::DistributionParams;
use crate::problems::InitialDatum;

/// Adjoint states share the coefficient layout of the forward state.
pub type AdjointField = CoefficientField;

/// Adjoint states at every forward time slice, in forward time order.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<AdjointField>,
}

/// Pieces of the reduced gradient; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParameterGradientPieces {
    pub flux_term: [f64; 2],
    pub init_term: [f64; 2],
    pub penalty_term: [f64; 2],
    pub total: [f64; 2],
}

/// `p(T) = M1⁻¹ (u_D − u(T))`
pub fn terminal_condition(
    scheme: &Scheme,
    state_t: &CoefficientField,
    data: &CoefficientField,
) -> Result<AdjointField> {
    state_t.check_same_shape(data)?;
    let mut p = data.lincomb(1.0, state_t, -1.0);
    scheme.apply_m1_inverse(&mut p);
    Ok(p)
}

/// `d_u M2(u) v`
pub fn dm2_apply(scheme: &Scheme, u: &CoefficientField, v: &CoefficientField) -> CoefficientField {
    let cl = scheme.shape.cell_len();
    let nxi = scheme.shape.nxi;
    let nn = scheme.nqx() * scheme.nqxi();
    let (ud, vd) = (u.as_slice(), v.as_slice());
    let flux = scheme.flux;
    let mut out = scheme.zeros();
    out.as_mut_slice()
        .par_chunks_mut(cl)
        .enumerate()
        .for_each(|(c, o)| {
            let j = c % nxi;
            let mut nu = vec![0.0; nn];
            let mut nv = vec![0.0; nn];
            scheme.nodal_values(&ud[c * cl..(c + 1) * cl], &mut nu);
            scheme.nodal_values(&vd[c * cl..(c + 1) * cl], &mut nv);
            let nqxi = scheme.nqxi();
            // Fold V into the integrand through the node index.
            let mut prod = vec![0.0; nn];
            for q in 0..scheme.nqx() {
                for rho in 0..nqxi {
                    let n = q * nqxi + rho;
                    prod[n] = flux.f_u(nu[n], scheme.xi_node(j, rho)) * nv[n];
                }
            }
            scheme.volume_term(&prod, o, |w, _| w);
        });
    out
}

/// `(d_u M2(u))ᵀ p`
pub fn dm2_transpose(scheme: &Scheme, u: &CoefficientField, p: &AdjointField) -> AdjointField {
    let s = scheme.shape;
    let (nh, nk, cl, nxi) = (s.nh, s.nk, s.cell_len(), s.nxi);
    let (nqx, nqxi) = (scheme.nqx(), scheme.nqxi());
    let inv_dx = 1.0 / scheme.phys.dx;
    let wx = &scheme.x_rule().weights;
    let wxi = &scheme.xi_rule().weights;
    let (ud, pd) = (u.as_slice(), p.as_slice());
    let flux = scheme.flux;
    let mut out = scheme.zeros();
    out.as_mut_slice()
        .par_chunks_mut(cl)
        .enumerate()
        .for_each(|(c, o)| {
            let j = c % nxi;
            let pc = &pd[c * cl..(c + 1) * cl];
            let mut nu = vec![0.0; nqx * nqxi];
            scheme.nodal_values(&ud[c * cl..(c + 1) * cl], &mut nu);
            for q in 0..nqx {
                for rho in 0..nqxi {
                    // Σ_{h,k} p^{h,k} ∂σ^h(x̂_q) φ^k(ξ̂_ρ)
                    let mut dp = 0.0;
                    for h in 1..nh {
                        let ds = scheme.dsigma_at(q, h);
                        for k in 0..nk {
                            dp += pc[h * nk + k] * ds * scheme.phi(rho, k);
                        }
                    }
                    let g = inv_dx
                        * wx[q]
                        * wxi[rho]
                        * flux.f_u(nu[q * nqxi + rho], scheme.xi_node(j, rho))
                        * dp;
                    if g == 0.0 {
                        continue;
                    }
                    for h in 0..nh {
                        let gs = g * scheme.sigma_at(q, h);
                        for k in 0..nk {
                            o[h * nk + k] += gs * scheme.phi(rho, k);
                        }
                    }
                }
            }
        });
    out
}

/// Partials of the interface flux at interface `m` with respect to the
/// minus-side right trace and the plus-side left trace. A missing side means
/// the ghost copies the interior trace, so that trace carries `f_u` in full.
#[inline]
fn flux_partials(scheme: &Scheme, um: Option<f64>, up: Option<f64>, xi: f64, c: f64) -> (f64, f64) {
    let f = scheme.flux;
    match (um, up) {
        (Some(a), Some(b)) => (0.5 * (f.f_u(a, xi) + c), 0.5 * (f.f_u(b, xi) - c)),
        (Some(a), None) => (f.f_u(a, xi), 0.0),
        (None, Some(b)) => (0.0, f.f_u(b, xi)),
        (None, None) => unreachable!("every interface touches a cell"),
    }
}

fn trace_at(
    traces: &[f64],
    cell: Option<usize>,
    j: usize,
    rho: usize,
    nxi: usize,
    nq: usize,
) -> Option<f64> {
    cell.map(|i| traces[(i * nxi + j) * nq + rho])
}

/// `d_u M3(u) v` with `c` frozen.
pub fn dm3_apply(
    scheme: &Scheme,
    u: &CoefficientField,
    v: &CoefficientField,
    c: f64,
) -> CoefficientField {
    let (ul, ur) = scheme.traces(u);
    let (vl, vr) = scheme.traces(v);
    let (nxi, nq) = (scheme.shape.nxi, scheme.nqxi());
    let mut dflux = vec![0.0; scheme.num_interfaces() * nxi * nq];
    dflux
        .par_chunks_mut(nxi * nq)
        .enumerate()
        .for_each(|(m, chunk)| {
            let (cm, cp) = scheme.interface_cells(m);
            for j in 0..nxi {
                for rho in 0..nq {
                    let um = trace_at(&ur, cm, j, rho, nxi, nq);
                    let up = trace_at(&ul, cp, j, rho, nxi, nq);
                    let (dm, dp) = flux_partials(scheme, um, up, scheme.xi_node(j, rho), c);
                    let vm = trace_at(&vr, cm, j, rho, nxi, nq).unwrap_or(0.0);
                    let vp = trace_at(&vl, cp, j, rho, nxi, nq).unwrap_or(0.0);
                    chunk[j * nq + rho] = dm * vm + dp * vp;
                }
            }
        });
    scheme.assemble_surface(&dflux)
}

/// `(d_u M3(u))ᵀ p` with `c` frozen.
pub fn dm3_transpose(
    scheme: &Scheme,
    u: &CoefficientField,
    p: &AdjointField,
    c: f64,
) -> AdjointField {
    let s = scheme.shape;
    let (nh, nk, cl, nxi, nq) = (s.nh, s.nk, s.cell_len(), s.nxi, scheme.nqxi());
    let inv_dx = 1.0 / scheme.phys.dx;
    let wxi = &scheme.xi_rule().weights;
    let (ul, ur) = scheme.traces(u);
    let (pl, pr) = scheme.traces(p);

    // Sensitivity of ⟨p, M3⟩ to each interface flux, times the flux partials.
    let nf = scheme.num_interfaces();
    let mut to_minus = vec![0.0; nf * nxi * nq];
    let mut to_plus = vec![0.0; nf * nxi * nq];
    to_minus
        .par_chunks_mut(nxi * nq)
        .zip(to_plus.par_chunks_mut(nxi * nq))
        .enumerate()
        .for_each(|(m, (tm, tp))| {
            let (cm, cp) = scheme.interface_cells(m);
            for j in 0..nxi {
                for rho in 0..nq {
                    let lambda = inv_dx
                        * wxi[rho]
                        * (trace_at(&pr, cm, j, rho, nxi, nq).unwrap_or(0.0)
                            - trace_at(&pl, cp, j, rho, nxi, nq).unwrap_or(0.0));
                    let um = trace_at(&ur, cm, j, rho, nxi, nq);
                    let up = trace_at(&ul, cp, j, rho, nxi, nq);
                    let (dm, dp) = flux_partials(scheme, um, up, scheme.xi_node(j, rho), c);
                    tm[j * nq + rho] = lambda * dm;
                    tp[j * nq + rho] = lambda * dp;
                }
            }
        });

    let right_edge = scheme.edge_values(Side::Right);
    let left_edge = scheme.edge_values(Side::Left);
    let mut out = scheme.zeros();
    out.as_mut_slice()
        .par_chunks_mut(cl)
        .enumerate()
        .for_each(|(cell, o)| {
            let (i, j) = (cell / nxi, cell % nxi);
            let (ml, mr) = scheme.cell_interfaces(i);
            for rho in 0..nq {
                let gr = to_minus[(mr * nxi + j) * nq + rho];
                let gl = to_plus[(ml * nxi + j) * nq + rho];
                for h in 0..nh {
                    let a = right_edge[h] * gr + left_edge[h] * gl;
                    for k in 0..nk {
                        o[h * nk + k] += a * scheme.phi(rho, k);
                    }
                }
            }
        });
    out
}

/// `M1⁻¹ J_R(u)ᵀ p`, the adjoint right-hand side in reversed time.
pub fn linearized_rhs(
    scheme: &Scheme,
    p: &AdjointField,
    state: &CoefficientField,
    c: f64,
) -> AdjointField {
    let mut out = dm2_transpose(scheme, state, p);
    out.axpy(-1.0, &dm3_transpose(scheme, state, p, c));
    scheme.apply_m1_inverse(&mut out);
    out
}

/// `M1⁻¹ J_R(u) v`, the forward linearization.
pub fn jacobian_apply(
    scheme: &Scheme,
    state: &CoefficientField,
    v: &CoefficientField,
    c: f64,
) -> CoefficientField {
    let mut out = dm2_apply(scheme, state, v);
    out.axpy(-1.0, &dm3_apply(scheme, state, v, c));
    scheme.apply_m1_inverse(&mut out);
    out
}

fn check_finite(p: &AdjointField, t: f64) -> Result<()> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(DsgError::BlowUp {
            time: t,
            max_abs: p.max_abs(),
        })
    }
}

/// Integrates the adjoint from `T` back to `0` with the forward scheme's
/// Runge-Kutta method and step size.
pub fn adjoint_solve(
    scheme: &Scheme,
    trajectory: &Trajectory,
    data: &CoefficientField,
) -> Result<AdjointTrajectory> {
    if !trajectory.is_dense() {
        return Err(DsgError::Argument(
            "adjoint solve needs a trajectory with every time step stored".into(),
        ));
    }
    let steps = trajectory.steps;
    let dt = trajectory.dt;
    let mut states = vec![scheme.zeros(); steps + 1];
    states[steps] = terminal_condition(scheme, trajectory.final_state(), data)?;
    for n in (0..steps).rev() {
        let c = trajectory.viscosity[n];
        let (t0, t1) = (trajectory.times[n], trajectory.times[n + 1]);
        let p = &states[n + 1];
        let euler = |q: &AdjointField, u: &CoefficientField| {
            let mut out = q.clone();
            out.axpy(dt, &linearized_rhs(scheme, q, u, c));
            out
        };
        let u1 = &trajectory.states[n + 1];
        let u0 = &trajectory.states[n];
        let next = match trajectory.method {
            RkMethod::ForwardEuler => euler(p, u1),
            RkMethod::SspRk2 => {
                let k1 = euler(p, u1);
                let k2 = euler(&k1, u0);
                p.lincomb(0.5, &k2, 0.5)
            }
            RkMethod::SspRk3 => {
                let k1 = euler(p, u1);
                let k2 = p.lincomb(0.75, &euler(&k1, u0), 0.25);
                let mid = trajectory.state_at(0.5 * (t0 + t1));
                p.lincomb(1.0 / 3.0, &euler(&k2, &mid), 2.0 / 3.0)
            }
        };
        check_finite(&next, t0)?;
        states[n] = next;
    }
    Ok(AdjointTrajectory {
        times: trajectory.times.clone(),
        states,
    })
}

/// `(∂_{ξᴸ} M2, ∂_{ξᴿ} M2)` at fixed coefficients.
pub fn d_params_m2(scheme: &Scheme, state: &CoefficientField) -> [CoefficientField; 2] {
    if !scheme.flux.depends_on_xi() {
        return [scheme.zeros(), scheme.zeros()];
    }
    let flux = scheme.flux;
    let part = |side: usize| {
        scheme.assemble_volume(state, |u, j, rho| {
            let (dl, dr) = scheme.chain(j, rho);
            flux.f_xi(u, scheme.xi_node(j, rho)) * if side == 0 { dl } else { dr }
        })
    };
    [part(0), part(1)]
}

/// `(∂_{ξᴸ} M3, ∂_{ξᴿ} M3)` at fixed coefficients. Besides the flux itself
/// the viscosity estimate moves with the support.
pub fn d_params_m3(scheme: &Scheme, state: &CoefficientField) -> [CoefficientField; 2] {
    if !scheme.flux.depends_on_xi() {
        return [scheme.zeros(), scheme.zeros()];
    }
    let (left, right) = scheme.traces(state);
    let flux = scheme.flux;
    let dc = flux.viscosity_param_derivative(&scheme.stoch.params);
    let part = |side: usize| {
        let d = scheme.interface_map(&left, &right, |a, b, j, rho| {
            let xi = scheme.xi_node(j, rho);
            let (dl, dr) = scheme.chain(j, rho);
            let chain = if side == 0 { dl } else { dr };
            0.5 * (flux.f_xi(a, xi) + flux.f_xi(b, xi)) * chain - 0.5 * dc[side] * (b - a)
        });
        scheme.assemble_surface(&d)
    };
    [part(0), part(1)]
}

/// Parameter derivatives of the projected initial coefficients.
pub fn d_params_initial(scheme: &Scheme, u0: &InitialDatum) -> [CoefficientField; 2] {
    let stoch = scheme.stoch;
    let part = |side: usize| {
        let mut out = scheme.project_raw(|x, xi, j, r| {
            let r_frac = stoch.fraction(j + 1, r);
            let chain = if side == 0 { 1.0 - r_frac } else { r_frac };
            u0.eval_dxi(x, xi) * chain
        });
        scheme.apply_m1_inverse(&mut out);
        out
    };
    [part(0), part(1)]
}

/// Time discretization of the flux part of the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientQuadrature {
    /// Composite trapezoid over the stored time slices.
    Trapezoid,
    /// Weights and stage states of the forward Runge-Kutta step, so that the
    /// flux term is the exact derivative of the unlimited discrete step.
    #[default]
    RungeKutta,
}

/// `⟨∂_ξ(M3 − M2)(u), q⟩` for both endpoints.
fn param_pairing(scheme: &Scheme, u: &CoefficientField, q: &AdjointField) -> [f64; 2] {
    let m2 = d_params_m2(scheme, u);
    let m3 = d_params_m3(scheme, u);
    [m3[0].dot(q) - m2[0].dot(q), m3[1].dot(q) - m2[1].dot(q)]
}

fn add_scaled(acc: &mut [f64; 2], w: f64, v: [f64; 2]) {
    acc[0] += w * v[0];
    acc[1] += w * v[1];
}

/// Time-integrated `⟨∂_ξ(M3 − M2)(u), p⟩`.
pub fn flux_term(
    scheme: &Scheme,
    trajectory: &Trajectory,
    adjoints: &AdjointTrajectory,
    quadrature: GradientQuadrature,
) -> [f64; 2] {
    let mut acc = [0.0; 2];
    let n = trajectory.times.len();
    if !scheme.flux.depends_on_xi() || n < 2 {
        return acc;
    }
    let dt = trajectory.dt;
    match quadrature {
        GradientQuadrature::Trapezoid => {
            for (idx, (u, p)) in trajectory.states.iter().zip(&adjoints.states).enumerate() {
                let w = if idx == 0 || idx == n - 1 {
                    0.5 * dt
                } else {
                    dt
                };
                add_scaled(&mut acc, w, param_pairing(scheme, u, p));
            }
        }
        GradientQuadrature::RungeKutta => {
            for step in 0..trajectory.steps {
                let p = &adjoints.states[step + 1];
                let c = trajectory.viscosity[step];
                let stages = trajectory.stage_states(scheme, step);
                let back = |q: &AdjointField, u: &CoefficientField| {
                    let mut out = q.clone();
                    out.axpy(dt, &linearized_rhs(scheme, q, u, c));
                    out
                };
                match trajectory.method {
                    RkMethod::ForwardEuler => {
                        add_scaled(&mut acc, dt, param_pairing(scheme, &stages[0], p))
                    }
                    RkMethod::SspRk2 => {
                        let w = back(p, &stages[1]);
                        add_scaled(&mut acc, 0.5 * dt, param_pairing(scheme, &stages[1], p));
                        add_scaled(&mut acc, 0.5 * dt, param_pairing(scheme, &stages[0], &w));
                    }
                    RkMethod::SspRk3 => {
                        let w2 = back(p, &stages[2]);
                        let w1 = back(&w2, &stages[1]);
                        add_scaled(
                            &mut acc,
                            2.0 / 3.0 * dt,
                            param_pairing(scheme, &stages[2], p),
                        );
                        add_scaled(&mut acc, dt / 6.0, param_pairing(scheme, &stages[1], &w2));
                        add_scaled(&mut acc, dt / 6.0, param_pairing(scheme, &stages[0], &w1));
                    }
                }
            }
        }
    }
    acc
}

/// Reduced gradient from a forward trajectory and its adjoint.
#[allow(clippy::too_many_arguments)]
pub fn assemble_gradient(
    scheme: &Scheme,
    trajectory: &Trajectory,
    adjoints: &AdjointTrajectory,
    params: &DistributionParams,
    prior: [f64; 2],
    delta: f64,
    u0: &InitialDatum,
    quadrature: GradientQuadrature,
) -> Result<ParameterGradientPieces> {
    if trajectory.times.len() != adjoints.times.len()
        || trajectory
            .times
            .iter()
            .zip(&adjoints.times)
            .any(|(a, b)| a != b)
    {
        return Err(DsgError::Data(
            "forward and adjoint time slices differ".into(),
        ));
    }
    let flux_term = flux_term(scheme, trajectory, adjoints, quadrature);
    let mut lambda0 = adjoints.states[0].clone();
    scheme.apply_m1(&mut lambda0);
    let du0 = d_params_initial(scheme, u0);
    let init_term = [-du0[0].dot(&lambda0), -du0[1].dot(&lambda0)];
    let x = params.as_array();
    let penalty_term = [delta * (x[0] - prior[0]), delta * (x[1] - prior[1])];
    let total = [
        flux_term[0] + init_term[0] + penalty_term[0],
        flux_term[1] + init_term[1] + penalty_term[1],
    ];
    Ok(ParameterGradientPieces {
        flux_term,
        init_term,
        penalty_term,
        total,
    })
}
