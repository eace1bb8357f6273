//! Modal coefficient tensors `u^{h,k}_{i,j}`.
//!
//! Storage is cell-major: all `(h, k)` coefficients of one `(i, j)` cell are
//! contiguous, which keeps per-cell kernels cache friendly and lets them be
//! split into disjoint chunks for parallel assembly.

use crate::error::{DsgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldShape {
    /// Number of spatial modes `K_X + 1`.
    pub nh: usize,
    /// Number of stochastic modes `K_Ξ + 1`.
    pub nk: usize,
    pub nx: usize,
    pub nxi: usize,
}

impl FieldShape {
    pub fn new(kx: usize, kxi: usize, nx: usize, nxi: usize) -> Self {
        Self {
            nh: kx + 1,
            nk: kxi + 1,
            nx,
            nxi,
        }
    }

    pub fn cell_len(&self) -> usize {
        self.nh * self.nk
    }

    pub fn len(&self) -> usize {
        self.cell_len() * self.nx * self.nxi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset of the first coefficient of cell `(i, j)` (both 0-based).
    #[inline]
    pub fn cell_offset(&self, i: usize, j: usize) -> usize {
        (i * self.nxi + j) * self.cell_len()
    }

    #[inline]
    pub fn index(&self, h: usize, k: usize, i: usize, j: usize) -> usize {
        self.cell_offset(i, j) + h * self.nk + k
    }

    pub fn kx(&self) -> usize {
        self.nh - 1
    }

    pub fn kxi(&self) -> usize {
        self.nk - 1
    }
}

/// DsG state. Indices `i` and `j` are 0-based here.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    shape: FieldShape,
    data: Vec<f64>,
}

impl CoefficientField {
    pub fn zeros(shape: FieldShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: FieldShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(DsgError::Data(format!(
                "coefficient vector has {} entries, shape needs {}",
                data.len(),
                shape.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> FieldShape {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, h: usize, k: usize, i: usize, j: usize) -> f64 {
        self.data[self.shape.index(h, k, i, j)]
    }

    #[inline]
    pub fn set(&mut self, h: usize, k: usize, i: usize, j: usize, value: f64) {
        let idx = self.shape.index(h, k, i, j);
        self.data[idx] = value;
    }

    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let o = self.shape.cell_offset(i, j);
        &self.data[o..o + self.shape.cell_len()]
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(DsgError::Data(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// `a * self + b * other`
    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Self {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self {
            shape: self.shape,
            data,
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    /// Coefficients in `(h, k, i, j)` row-major order (the on-disk layout).
    pub fn to_hkij(&self) -> Vec<f64> {
        let s = self.shape;
        let mut out = Vec::with_capacity(s.len());
        for h in 0..s.nh {
            for k in 0..s.nk {
                for i in 0..s.nx {
                    for j in 0..s.nxi {
                        out.push(self.get(h, k, i, j));
                    }
                }
            }
        }
        out
    }

    pub fn from_hkij(shape: FieldShape, values: &[f64]) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(DsgError::Data(format!(
                "payload has {} values, shape needs {}",
                values.len(),
                shape.len()
            )));
        }
        let mut f = Self::zeros(shape);
        let mut it = values.iter();
        for h in 0..shape.nh {
            for k in 0..shape.nk {
                for i in 0..shape.nx {
                    for j in 0..shape.nxi {
                        f.set(h, k, i, j, *it.next().unwrap());
                    }
                }
            }
        }
        Ok(f)
    }

    /// Sum of the cell/element means `Σ u^{0,0}_{i,j}`.
    pub fn mean_sum(&self) -> f64 {
        let s = self.shape;
        (0..s.nx)
            .flat_map(|i| (0..s.nxi).map(move |j| (i, j)))
            .map(|(i, j)| self.get(0, 0, i, j))
            .sum()
    }
}
