//! Semi-discrete DsG operator: projection, volume and surface terms, and the
//! Lax-Friedrichs coupling between cells.
//!
//! The right-hand side reads `∂_t u = M1⁻¹ (M2(u) − M3(u))`. All integrals are
//! evaluated on reference cells with a Lobatto rule in `x̂` and a Gauss-Legendre
//! rule in `ξ̂`; the tables below hold the basis at those nodes.

pub mod export;
pub mod limiter;
pub mod time;

use rayon::prelude::*;

use crate::basis::{gauss_legendre, gauss_lobatto, QuadratureRule, ReferenceBasis};
use crate::error::{DsgError, Result};
use crate::field::{CoefficientField, FieldShape};
use crate::mesh::{Boundary, PhysicalMesh, StochasticMesh};
use crate::problems::{FluxModel, InitialDatum};

pub use limiter::{minmod, minmod_limit, LimiterConfig};
pub use time::{
    cfl_dt, cfl_dt_raw, dg_cell_width, forward_solve, ssp_rk_step, ForwardOptions, RkMethod,
    TimeGrid, Trajectory,
};

/// Interface side of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Node tables for one reference rule: basis values `[node][degree]` flattened.
#[derive(Debug, Clone)]
struct NodeTable {
    rule: QuadratureRule,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl NodeTable {
    fn new(rule: QuadratureRule, basis: &ReferenceBasis) -> Self {
        let values = basis.value_table(&rule.nodes).concat();
        let derivs = basis.derivative_table(&rule.nodes).concat();
        Self {
            rule,
            values,
            derivs,
        }
    }

    fn len(&self) -> usize {
        self.rule.len()
    }
}

/// A fully specified discretization at fixed distribution parameters.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub phys: PhysicalMesh,
    pub stoch: StochasticMesh,
    pub shape: FieldShape,
    pub flux: FluxModel,
    sigma: ReferenceBasis,
    x: NodeTable,
    xi: NodeTable,
    x_proj: NodeTable,
    xi_proj: NodeTable,
    edge_left: Vec<f64>,
    edge_right: Vec<f64>,
    /// Global ξ at the stochastic nodes, `[j][ρ]`.
    xi_nodes: Vec<f64>,
    /// `(∂ξ/∂ξᴸ, ∂ξ/∂ξᴿ)` at the stochastic nodes, `[j][ρ]`.
    chain: Vec<(f64, f64)>,
    m1: Vec<f64>,
}

/// Number of Lobatto points in `x̂` used for the volume integrals.
pub fn lobatto_points(kx: usize) -> usize {
    (kx + 1).div_ceil(2) + 1
}

/// Number of Gauss-Legendre points in `ξ̂`.
pub fn legendre_points(kxi: usize) -> usize {
    (kxi + 1).div_ceil(2) + 1
}

impl Scheme {
    pub fn new(
        phys: PhysicalMesh,
        stoch: StochasticMesh,
        kx: usize,
        kxi: usize,
        flux: FluxModel,
    ) -> Result<Self> {
        Self::with_spatial_basis_scale(phys, stoch, kx, kxi, flux, 1.0)
    }

    /// Builds the scheme with `σ^h` multiplied by `scale`. Only useful to
    /// exercise the mass matrix; production runs use scale 1.
    pub fn with_spatial_basis_scale(
        phys: PhysicalMesh,
        stoch: StochasticMesh,
        kx: usize,
        kxi: usize,
        flux: FluxModel,
        scale: f64,
    ) -> Result<Self> {
        let sigma = ReferenceBasis::scaled(kx, scale)?;
        let phi_basis = ReferenceBasis::new(kxi)?;
        let x = NodeTable::new(gauss_lobatto(lobatto_points(kx))?, &sigma);
        let xi = NodeTable::new(gauss_legendre(legendre_points(kxi))?, &phi_basis);
        let x_proj = NodeTable::new(gauss_legendre(kx + 2)?, &sigma);
        let xi_proj = NodeTable::new(gauss_legendre(kxi + 2)?, &phi_basis);
        let edges = sigma.value_table(&[-0.5, 0.5]);
        let shape = FieldShape::new(kx, kxi, phys.num_cells, stoch.num_elements);

        let mut xi_nodes = Vec::with_capacity(stoch.num_elements * xi.len());
        let mut chain = Vec::with_capacity(stoch.num_elements * xi.len());
        for j in 1..=stoch.num_elements {
            for &r in &xi.rule.nodes {
                xi_nodes.push(stoch.to_global_unchecked(j, r));
                chain.push(stoch.d_to_global_d_params(j, r)?);
            }
        }

        let gs = sigma.gram_diagonal();
        let gp = phi_basis.gram_diagonal();
        let m1 = gs
            .iter()
            .flat_map(|a| gp.iter().map(move |b| a * b))
            .collect();

        Ok(Self {
            phys,
            stoch,
            shape,
            flux,
            sigma,
            x,
            xi,
            x_proj,
            xi_proj,
            edge_left: edges[0].clone(),
            edge_right: edges[1].clone(),
            xi_nodes,
            chain,
            m1,
        })
    }

    pub fn kx(&self) -> usize {
        self.shape.kx()
    }

    pub fn kxi(&self) -> usize {
        self.shape.kxi()
    }

    pub fn nqx(&self) -> usize {
        self.x.len()
    }

    pub fn nqxi(&self) -> usize {
        self.xi.len()
    }

    pub fn x_rule(&self) -> &QuadratureRule {
        &self.x.rule
    }

    pub fn xi_rule(&self) -> &QuadratureRule {
        &self.xi.rule
    }

    /// Global ξ of stochastic node `rho` in element `j` (0-based).
    #[inline]
    pub fn xi_node(&self, j: usize, rho: usize) -> f64 {
        self.xi_nodes[j * self.nqxi() + rho]
    }

    #[inline]
    pub(crate) fn chain(&self, j: usize, rho: usize) -> (f64, f64) {
        self.chain[j * self.nqxi() + rho]
    }

    /// Diagonal of `M1` for one cell, in `(h, k)` order. Identical for all cells.
    pub fn m1_diagonal(&self) -> &[f64] {
        &self.m1
    }

    pub fn zeros(&self) -> CoefficientField {
        CoefficientField::zeros(self.shape)
    }

    #[inline]
    pub(crate) fn phi(&self, rho: usize, k: usize) -> f64 {
        self.xi.values[rho * self.shape.nk + k]
    }

    #[inline]
    pub(crate) fn sigma_at(&self, q: usize, h: usize) -> f64 {
        self.x.values[q * self.shape.nh + h]
    }

    #[inline]
    pub(crate) fn dsigma_at(&self, q: usize, h: usize) -> f64 {
        self.x.derivs[q * self.shape.nh + h]
    }

    /// Spatial basis values at the two cell edges.
    pub fn edge_values(&self, side: Side) -> &[f64] {
        match side {
            Side::Left => &self.edge_left,
            Side::Right => &self.edge_right,
        }
    }

    /// Local polynomial of one cell evaluated at `(x̂, ξ̂)` in reference coordinates.
    pub fn eval_cell(&self, cell: &[f64], xr: f64, xir: f64) -> f64 {
        let nk = self.shape.nk;
        let mut acc = 0.0;
        for h in 0..self.shape.nh {
            let s = self.sigma.scale * crate::basis::orthonormal_value(h, xr);
            for k in 0..nk {
                acc += cell[h * nk + k] * s * crate::basis::orthonormal_value(k, xir);
            }
        }
        acc
    }

    /// Evaluates a field at a global point `(x, ξ)` inside the meshes.
    pub fn eval_global(&self, field: &CoefficientField, x: f64, xi: f64) -> f64 {
        let s = self.shape;
        let fi = ((x - self.phys.start) / self.phys.dx).floor();
        let i = (fi.max(0.0) as usize).min(s.nx - 1);
        let fj = ((xi - self.stoch.params.xi_left) / self.stoch.dxi).floor();
        let j = (fj.max(0.0) as usize).min(s.nxi - 1);
        let xr = ((x - self.phys.center(i)) / self.phys.dx).clamp(-0.5, 0.5);
        let xc = self.stoch.to_global_unchecked(j + 1, 0.0);
        let xir = ((xi - xc) / self.stoch.dxi).clamp(-0.5, 0.5);
        self.eval_cell(field.cell(i, j), xr, xir)
    }

    /// Values at the tensor nodes of one cell, `[q][ρ]`.
    pub(crate) fn nodal_values(&self, cell: &[f64], out: &mut [f64]) {
        let (nh, nk, nqx, nqxi) = (self.shape.nh, self.shape.nk, self.nqx(), self.nqxi());
        // v[h][ρ] = Σ_k u^{h,k} φ^k(ξ̂_ρ)
        let mut v = [0.0f64; (crate::basis::MAX_DEGREE + 1) * 16];
        debug_assert!(nh * nqxi <= v.len());
        for h in 0..nh {
            for rho in 0..nqxi {
                let mut acc = 0.0;
                for k in 0..nk {
                    acc += cell[h * nk + k] * self.phi(rho, k);
                }
                v[h * nqxi + rho] = acc;
            }
        }
        for q in 0..nqx {
            for rho in 0..nqxi {
                let mut acc = 0.0;
                for h in 0..nh {
                    acc += self.x.values[q * nh + h] * v[h * nqxi + rho];
                }
                out[q * nqxi + rho] = acc;
            }
        }
    }

    /// Trace of one cell at an edge for every stochastic node.
    pub(crate) fn edge_trace(&self, cell: &[f64], side: Side, out: &mut [f64]) {
        let (nh, nk) = (self.shape.nh, self.shape.nk);
        let edge = self.edge_values(side);
        for (rho, o) in out.iter_mut().enumerate().take(self.nqxi()) {
            let mut acc = 0.0;
            for h in 0..nh {
                let mut inner = 0.0;
                for k in 0..nk {
                    inner += cell[h * nk + k] * self.phi(rho, k);
                }
                acc += edge[h] * inner;
            }
            *o = acc;
        }
    }

    /// Left and right traces of every cell, each indexed `[(i, j)][ρ]`.
    pub(crate) fn traces(&self, field: &CoefficientField) -> (Vec<f64>, Vec<f64>) {
        let nq = self.nqxi();
        let cl = self.shape.cell_len();
        let data = field.as_slice();
        let mut left = vec![0.0; self.shape.nx * self.shape.nxi * nq];
        let mut right = vec![0.0; left.len()];
        left.par_chunks_mut(nq)
            .zip(right.par_chunks_mut(nq))
            .enumerate()
            .for_each(|(c, (l, r))| {
                let cell = &data[c * cl..(c + 1) * cl];
                self.edge_trace(cell, Side::Left, l);
                self.edge_trace(cell, Side::Right, r);
            });
        (left, right)
    }

    /// Number of distinct interfaces.
    pub(crate) fn num_interfaces(&self) -> usize {
        match self.phys.boundary {
            Boundary::Periodic => self.shape.nx,
            Boundary::Outflow => self.shape.nx + 1,
        }
    }

    /// Cells on the minus and plus side of interface `m`.
    #[inline]
    pub(crate) fn interface_cells(&self, m: usize) -> (Option<usize>, Option<usize>) {
        let nx = self.shape.nx;
        match self.phys.boundary {
            Boundary::Periodic => (Some((m + nx - 1) % nx), Some(m)),
            Boundary::Outflow => (
                if m == 0 { None } else { Some(m - 1) },
                if m == nx { None } else { Some(m) },
            ),
        }
    }

    /// Interfaces to the left and right of cell `i`.
    #[inline]
    pub(crate) fn cell_interfaces(&self, i: usize) -> (usize, usize) {
        match self.phys.boundary {
            Boundary::Periodic => (i, (i + 1) % self.shape.nx),
            Boundary::Outflow => (i, i + 1),
        }
    }

    /// `(u⁻, u⁺)` at interface `m`, element `j`, node `ρ`, with the boundary
    /// closure applied.
    #[inline]
    pub(crate) fn interface_pair(
        &self,
        left: &[f64],
        right: &[f64],
        m: usize,
        j: usize,
        rho: usize,
    ) -> (f64, f64) {
        let nq = self.nqxi();
        let nxi = self.shape.nxi;
        let (cm, cp) = self.interface_cells(m);
        let um = cm.map(|i| right[(i * nxi + j) * nq + rho]);
        let up = cp.map(|i| left[(i * nxi + j) * nq + rho]);
        match (um, up) {
            (Some(a), Some(b)) => (a, b),
            (Some(a), None) => (a, a),
            (None, Some(b)) => (b, b),
            (None, None) => unreachable!("every interface touches a cell"),
        }
    }

    /// Applies `g(u⁻, u⁺, j, ρ)` at every interface node, `[m][j][ρ]`.
    pub(crate) fn interface_map<G>(&self, left: &[f64], right: &[f64], g: G) -> Vec<f64>
    where
        G: Fn(f64, f64, usize, usize) -> f64 + Sync,
    {
        let nq = self.nqxi();
        let nxi = self.shape.nxi;
        let mut out = vec![0.0; self.num_interfaces() * nxi * nq];
        out.par_chunks_mut(nxi * nq)
            .enumerate()
            .for_each(|(m, chunk)| {
                for j in 0..nxi {
                    for rho in 0..nq {
                        let (a, b) = self.interface_pair(left, right, m, j, rho);
                        chunk[j * nq + rho] = g(a, b, j, rho);
                    }
                }
            });
        out
    }

    /// Adds `(1/Δx) Σ w_q w_ρ g(U_qρ, ρ) ∂σ^h(x̂_q) φ^k(ξ̂_ρ)` for one cell.
    pub(crate) fn volume_term<G>(&self, nodal: &[f64], out: &mut [f64], g: G)
    where
        G: Fn(f64, usize) -> f64,
    {
        let (nh, nk, nqx, nqxi) = (self.shape.nh, self.shape.nk, self.nqx(), self.nqxi());
        let inv_dx = 1.0 / self.phys.dx;
        for q in 0..nqx {
            let wq = self.x.rule.weights[q];
            for rho in 0..nqxi {
                let w = inv_dx * wq * self.xi.rule.weights[rho] * g(nodal[q * nqxi + rho], rho);
                if w == 0.0 {
                    continue;
                }
                for h in 1..nh {
                    let wd = w * self.x.derivs[q * nh + h];
                    for k in 0..nk {
                        out[h * nk + k] += wd * self.phi(rho, k);
                    }
                }
            }
        }
    }

    /// Adds `(1/Δx) Σ_ρ w_ρ φ^k (F_R σ^h(1/2) − F_L σ^h(−1/2))` for one cell.
    pub(crate) fn surface_term(&self, flux_left: &[f64], flux_right: &[f64], out: &mut [f64]) {
        let (nh, nk) = (self.shape.nh, self.shape.nk);
        let inv_dx = 1.0 / self.phys.dx;
        for rho in 0..self.nqxi() {
            let w = inv_dx * self.xi.rule.weights[rho];
            for h in 0..nh {
                let a =
                    w * (flux_right[rho] * self.edge_right[h] - flux_left[rho] * self.edge_left[h]);
                for k in 0..nk {
                    out[h * nk + k] += a * self.phi(rho, k);
                }
            }
        }
    }

    /// Volume integral with integrand `g(U, j, ρ)` assembled for every cell.
    pub(crate) fn assemble_volume<G>(&self, field: &CoefficientField, g: G) -> CoefficientField
    where
        G: Fn(f64, usize, usize) -> f64 + Sync,
    {
        let cl = self.shape.cell_len();
        let nxi = self.shape.nxi;
        let data = field.as_slice();
        let mut out = self.zeros();
        out.as_mut_slice()
            .par_chunks_mut(cl)
            .enumerate()
            .for_each(|(c, o)| {
                let j = c % nxi;
                let mut nodal = vec![0.0; self.nqx() * self.nqxi()];
                self.nodal_values(&data[c * cl..(c + 1) * cl], &mut nodal);
                self.volume_term(&nodal, o, |u, rho| g(u, j, rho));
            });
        out
    }

    /// Surface term for precomputed interface fluxes `[m][j][ρ]`.
    pub(crate) fn assemble_surface(&self, fluxes: &[f64]) -> CoefficientField {
        let cl = self.shape.cell_len();
        let (nxi, nq) = (self.shape.nxi, self.nqxi());
        let mut out = self.zeros();
        out.as_mut_slice()
            .par_chunks_mut(cl)
            .enumerate()
            .for_each(|(c, o)| {
                let (i, j) = (c / nxi, c % nxi);
                let (ml, mr) = self.cell_interfaces(i);
                let fl = &fluxes[(ml * nxi + j) * nq..(ml * nxi + j + 1) * nq];
                let fr = &fluxes[(mr * nxi + j) * nq..(mr * nxi + j + 1) * nq];
                self.surface_term(fl, fr, o);
            });
        out
    }

    /// Lax-Friedrichs fluxes at every interface node.
    pub(crate) fn numerical_fluxes(&self, field: &CoefficientField, c: f64) -> Vec<f64> {
        let (left, right) = self.traces(field);
        let flux = self.flux;
        self.interface_map(&left, &right, |a, b, j, rho| {
            lax_friedrichs(a, b, self.xi_node(j, rho), &flux, c)
        })
    }

    /// Largest `|u|` over all tensor nodes, interface nodes included.
    pub fn max_abs_at_nodes(&self, field: &CoefficientField) -> f64 {
        let cl = self.shape.cell_len();
        field
            .as_slice()
            .par_chunks(cl)
            .map(|cell| {
                let mut nodal = vec![0.0; self.nqx() * self.nqxi()];
                self.nodal_values(cell, &mut nodal);
                let mut edge = vec![0.0; self.nqxi()];
                let mut m = nodal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for side in [Side::Left, Side::Right] {
                    self.edge_trace(cell, side, &mut edge);
                    m = edge.iter().fold(m, |m, v| m.max(v.abs()));
                }
                m
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Global viscosity constant for the current state.
    pub fn viscosity(&self, field: &CoefficientField) -> f64 {
        let sample = if self.flux.is_linear() {
            0.0
        } else {
            self.max_abs_at_nodes(field)
        };
        self.flux.viscosity_estimate(&self.stoch.params, sample)
    }

    /// Divides each cell by the `M1` diagonal.
    pub(crate) fn apply_m1_inverse(&self, field: &mut CoefficientField) {
        if self.m1.iter().all(|&d| d == 1.0) {
            return;
        }
        let cl = self.shape.cell_len();
        for cell in field.as_mut_slice().chunks_mut(cl) {
            for (v, d) in cell.iter_mut().zip(&self.m1) {
                *v /= d;
            }
        }
    }

    pub(crate) fn apply_m1(&self, field: &mut CoefficientField) {
        let cl = self.shape.cell_len();
        for cell in field.as_mut_slice().chunks_mut(cl) {
            for (v, d) in cell.iter_mut().zip(&self.m1) {
                *v *= d;
            }
        }
    }

    /// Quadrature projection of a function of `(x, ξ, j, ρ)` onto the basis,
    /// without the `M1` solve. Uses the dedicated projection rule.
    pub(crate) fn project_raw<G>(&self, g: G) -> CoefficientField
    where
        G: Fn(f64, f64, usize, f64) -> f64 + Sync,
    {
        let (nh, nk, nxi) = (self.shape.nh, self.shape.nk, self.shape.nxi);
        let cl = self.shape.cell_len();
        let xq = &self.x_proj;
        let xiq = &self.xi_proj;
        let mut out = self.zeros();
        out.as_mut_slice()
            .par_chunks_mut(cl)
            .enumerate()
            .for_each(|(c, o)| {
                let (i, j) = (c / nxi, c % nxi);
                for (q, (xr, wx)) in xq.rule.iter().enumerate() {
                    let x = self.phys.to_global(i, xr);
                    for (rho, (r, wr)) in xiq.rule.iter().enumerate() {
                        let xi = self.stoch.to_global_unchecked(j + 1, r);
                        let v = wx * wr * g(x, xi, j, r);
                        for h in 0..nh {
                            let vs = v * xq.values[q * nh + h];
                            for k in 0..nk {
                                o[h * nk + k] += vs * xiq.values[rho * nk + k];
                            }
                        }
                    }
                }
            });
        out
    }
}

/// `½ (f(u⁻) + f(u⁺) − c (u⁺ − u⁻))`
#[inline]
pub fn lax_friedrichs(u_minus: f64, u_plus: f64, xi: f64, flux: &FluxModel, c: f64) -> f64 {
    0.5 * (flux.f(u_minus, xi) + flux.f(u_plus, xi) - c * (u_plus - u_minus))
}

/// Projects `u₀` onto the local bases of every cell.
pub fn project_initial(scheme: &Scheme, u0: &InitialDatum) -> CoefficientField {
    let mut out = scheme.project_raw(|x, xi, _, _| u0.eval(x, xi));
    scheme.apply_m1_inverse(&mut out);
    out
}

/// Diagonal of `M1` for one cell in `(h, k)` order.
pub fn assemble_m1(scheme: &Scheme) -> Vec<f64> {
    scheme.m1_diagonal().to_vec()
}

/// Trace of cell `(i, j)` (0-based) at an edge and stochastic node `rho`.
pub fn interface_values(
    scheme: &Scheme,
    state: &CoefficientField,
    i: usize,
    j: usize,
    side: Side,
    rho: usize,
) -> Result<f64> {
    let s = scheme.shape;
    if i >= s.nx || j >= s.nxi || rho >= scheme.nqxi() {
        return Err(DsgError::Argument(format!(
            "trace index (i={i}, j={j}, rho={rho}) out of range"
        )));
    }
    let mut buf = vec![0.0; scheme.nqxi()];
    scheme.edge_trace(state.cell(i, j), side, &mut buf);
    Ok(buf[rho])
}

/// Volume term `M2(u)`.
pub fn compute_m2(scheme: &Scheme, state: &CoefficientField) -> CoefficientField {
    let flux = scheme.flux;
    scheme.assemble_volume(state, |u, j, rho| flux.f(u, scheme.xi_node(j, rho)))
}

/// Surface term `M3(u)` with viscosity `c`.
pub fn compute_m3(scheme: &Scheme, state: &CoefficientField, c: f64) -> CoefficientField {
    scheme.assemble_surface(&scheme.numerical_fluxes(state, c))
}

/// `M1⁻¹ (M2(u) − M3(u))`
pub fn semi_discrete_rhs(scheme: &Scheme, state: &CoefficientField, c: f64) -> CoefficientField {
    let m2 = compute_m2(scheme, state);
    let m3 = compute_m3(scheme, state, c);
    let mut out = m2.lincomb(1.0, &m3, -1.0);
    scheme.apply_m1_inverse(&mut out);
    out
}
