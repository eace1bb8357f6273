//! Physical and stochastic meshes with their affine reference maps.

use serde::{Deserialize, Serialize};

use crate::error::{DsgError, Result};

/// Smallest admissible support width `ξᴿ − ξᴸ`.
pub const DEFAULT_MIN_WIDTH: f64 = 1e-6;

/// Support `[ξᴸ, ξᴿ]` of the uniform input distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionParams {
    pub xi_left: f64,
    pub xi_right: f64,
}

impl DistributionParams {
    pub fn new(xi_left: f64, xi_right: f64) -> Result<Self> {
        Self::with_min_width(xi_left, xi_right, DEFAULT_MIN_WIDTH)
    }

    pub fn with_min_width(xi_left: f64, xi_right: f64, min_width: f64) -> Result<Self> {
        if !xi_left.is_finite() || !xi_right.is_finite() {
            return Err(DsgError::Domain(format!(
                "non-finite distribution parameters ({xi_left}, {xi_right})"
            )));
        }
        if xi_right - xi_left < min_width {
            return Err(DsgError::Domain(format!(
                "support [{xi_left}, {xi_right}] is narrower than the minimum width {min_width}"
            )));
        }
        Ok(Self { xi_left, xi_right })
    }

    pub fn width(&self) -> f64 {
        self.xi_right - self.xi_left
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.xi_left, self.xi_right]
    }

    /// Largest absolute value on the support.
    pub fn max_abs(&self) -> f64 {
        self.xi_left.abs().max(self.xi_right.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Outflow,
}

impl std::str::FromStr for Boundary {
    type Err = DsgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Boundary::Periodic),
            "outflow" => Ok(Boundary::Outflow),
            other => Err(DsgError::Config(format!(
                "unknown boundary '{other}' (expected periodic or outflow)"
            ))),
        }
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Boundary::Periodic => "periodic",
            Boundary::Outflow => "outflow",
        })
    }
}

/// Uniform mesh of `num_cells` cells on `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalMesh {
    pub start: f64,
    pub end: f64,
    pub num_cells: usize,
    pub dx: f64,
    pub boundary: Boundary,
}

impl PhysicalMesh {
    pub fn new(start: f64, end: f64, num_cells: usize, boundary: Boundary) -> Result<Self> {
        if num_cells == 0 {
            return Err(DsgError::Domain(
                "physical mesh needs at least one cell".into(),
            ));
        }
        if !(end > start) || !start.is_finite() || !end.is_finite() {
            return Err(DsgError::Domain(format!(
                "invalid spatial domain [{start}, {end}]"
            )));
        }
        Ok(Self {
            start,
            end,
            num_cells,
            dx: (end - start) / num_cells as f64,
            boundary,
        })
    }

    /// Center of cell `i` (0-based).
    pub fn center(&self, i: usize) -> f64 {
        self.start + (i as f64 + 0.5) * self.dx
    }

    /// Interface `x_{i-1/2}` for `i` in `0..=num_cells`.
    pub fn interface(&self, i: usize) -> f64 {
        self.start + i as f64 * self.dx
    }

    /// Physical coordinate of a reference point in cell `i`.
    pub fn to_global(&self, i: usize, ref_point: f64) -> f64 {
        self.center(i) + ref_point * self.dx
    }
}

/// Partition of `[ξᴸ, ξᴿ]` into equal multielements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticMesh {
    pub params: DistributionParams,
    pub num_elements: usize,
    pub dxi: f64,
}

pub fn build_stochastic_mesh(
    params: DistributionParams,
    num_elements: usize,
) -> Result<StochasticMesh> {
    if num_elements == 0 {
        return Err(DsgError::Domain(
            "stochastic mesh needs at least one element".into(),
        ));
    }
    DistributionParams::with_min_width(params.xi_left, params.xi_right, 0.0)?;
    Ok(StochasticMesh {
        params,
        num_elements,
        dxi: params.width() / num_elements as f64,
    })
}

impl StochasticMesh {
    fn check_element(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.num_elements {
            return Err(DsgError::Argument(format!(
                "element index {j} outside 1..={}",
                self.num_elements
            )));
        }
        Ok(())
    }

    /// Relative position `(ξ̂ + j − 1/2)/N_Ξ` of a reference point, `j` 1-based.
    #[inline]
    pub(crate) fn fraction(&self, j: usize, ref_point: f64) -> f64 {
        (ref_point + j as f64 - 0.5) / self.num_elements as f64
    }

    /// Element bounds `(ξ_{j-1/2}, ξ_{j+1/2})`, `j` 1-based.
    pub fn element(&self, j: usize) -> Result<(f64, f64)> {
        self.check_element(j)?;
        let l = self.params.xi_left;
        Ok((l + (j - 1) as f64 * self.dxi, l + j as f64 * self.dxi))
    }

    pub fn center(&self, j: usize) -> Result<f64> {
        self.to_global(j, 0.0)
    }

    /// Global ξ of a reference point in element `j` (1-based).
    pub fn to_global(&self, j: usize, ref_point: f64) -> Result<f64> {
        self.check_element(j)?;
        Ok(self.to_global_unchecked(j, ref_point))
    }

    #[inline]
    pub(crate) fn to_global_unchecked(self, j: usize, ref_point: f64) -> f64 {
        self.params.width() * self.fraction(j, ref_point) + self.params.xi_left
    }

    /// `(∂ξ/∂ξᴸ, ∂ξ/∂ξᴿ)` of the reference map.
    pub fn d_to_global_d_params(&self, j: usize, ref_point: f64) -> Result<(f64, f64)> {
        self.check_element(j)?;
        let r = self.fraction(j, ref_point);
        Ok((1.0 - r, r))
    }
}
