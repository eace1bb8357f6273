//! Tidy CSV output of coefficient snapshots and evaluated grids.

use std::io::Write;

use super::Scheme;
use crate::error::Result;
use crate::field::CoefficientField;

/// Sampling resolution for evaluated-grid output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlotGrid {
    pub nx: usize,
    pub nxi: usize,
}

impl PlotGrid {
    /// Midpoint sample positions in `x` and `ξ`.
    pub fn points(&self, scheme: &Scheme) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = (scheme.phys.start, scheme.phys.end);
        let p = scheme.stoch.params;
        let xs = (0..self.nx)
            .map(|n| a + (n as f64 + 0.5) * (b - a) / self.nx as f64)
            .collect();
        let xis = (0..self.nxi)
            .map(|n| p.xi_left + (n as f64 + 0.5) * p.width() / self.nxi as f64)
            .collect();
        (xs, xis)
    }
}

/// Header plus rows `(t, i, j, h, k, coefficient)`; `i`, `j` are 1-based.
pub fn write_coefficients<W: Write>(
    out: &mut W,
    snapshots: &[(f64, &CoefficientField)],
) -> Result<()> {
    writeln!(out, "t,i,j,h,k,coefficient")?;
    for (t, field) in snapshots {
        let s = field.shape();
        for i in 0..s.nx {
            for j in 0..s.nxi {
                for h in 0..s.nh {
                    for k in 0..s.nk {
                        writeln!(
                            out,
                            "{t},{},{},{h},{k},{}",
                            i + 1,
                            j + 1,
                            field.get(h, k, i, j)
                        )?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Header plus rows `(t, x, xi, u)` on the plot grid.
pub fn write_grid<W: Write>(
    out: &mut W,
    scheme: &Scheme,
    snapshots: &[(f64, &CoefficientField)],
    grid: PlotGrid,
    value_name: &str,
) -> Result<()> {
    writeln!(out, "t,x,xi,{value_name}")?;
    let (xs, xis) = grid.points(scheme);
    for (t, field) in snapshots {
        for &x in &xs {
            for &xi in &xis {
                writeln!(out, "{t},{x},{xi},{}", scheme.eval_global(field, x, xi))?;
            }
        }
    }
    Ok(())
}
