//! TVB minmod limiting of the spatial slope, one stochastic mode at a time.

use rayon::prelude::*;

use super::{Scheme, Side};
use crate::field::CoefficientField;
use crate::mesh::Boundary;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimiterConfig {
    /// TVB constant `M`; slopes with `|ũ| ≤ M·Δx²` are left alone.
    pub tvb_m: f64,
}

impl Default for LimiterConfig {
    fn default() -> Self {
        Self { tvb_m: 0.0 }
    }
}

/// Classical minmod of three arguments.
#[inline]
pub fn minmod(a: f64, b: f64, c: f64) -> f64 {
    if a > 0.0 && b > 0.0 && c > 0.0 {
        a.min(b).min(c)
    } else if a < 0.0 && b < 0.0 && c < 0.0 {
        a.max(b).max(c)
    } else {
        0.0
    }
}

/// Limits `state` in place. Means `u^{0,k}` are never touched; a cell mode
/// whose slope is modified loses its `h ≥ 2` coefficients.
pub fn minmod_limit(scheme: &Scheme, state: &mut CoefficientField, config: &LimiterConfig) {
    let s = scheme.shape;
    if s.nh < 2 {
        return;
    }
    let (nh, nk, nx, nxi) = (s.nh, s.nk, s.nx, s.nxi);
    let cl = s.cell_len();
    let mean_scale = scheme.edge_values(Side::Right)[0];
    let slope_scale = scheme.edge_values(Side::Right)[1];
    let threshold = config.tvb_m * scheme.phys.dx * scheme.phys.dx;
    let periodic = scheme.phys.boundary == Boundary::Periodic;

    let means: Vec<f64> = state
        .as_slice()
        .chunks(cl)
        .flat_map(|cell| (0..nk).map(move |k| cell[k] * mean_scale))
        .collect();
    let mean = |i: usize, j: usize, k: usize| means[(i * nxi + j) * nk + k];

    state
        .as_mut_slice()
        .par_chunks_mut(cl)
        .enumerate()
        .for_each(|(c, cell)| {
            let (i, j) = (c / nxi, c % nxi);
            let (il, ir) = if periodic {
                ((i + nx - 1) % nx, (i + 1) % nx)
            } else {
                (i.saturating_sub(1), (i + 1).min(nx - 1))
            };
            for k in 0..nk {
                let slope = cell[nk + k] * slope_scale;
                if slope.abs() <= threshold {
                    continue;
                }
                let m = mean(i, j, k);
                let limited = minmod(slope, mean(ir, j, k) - m, m - mean(il, j, k));
                // Rounding in the rescale by σ¹(1/2) must not count as a change,
                // otherwise a second pass could move the slope by an ulp.
                if (limited - slope).abs() > 4.0 * f64::EPSILON * slope.abs() {
                    cell[nk + k] = limited / slope_scale;
                    for h in 2..nh {
                        cell[h * nk + k] = 0.0;
                    }
                }
            }
        });
}
