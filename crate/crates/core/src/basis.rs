//! Orthonormal Legendre bases and Gauss rules on the reference interval
//! `[-1/2, 1/2]`.
//!
//! Both the spatial basis and the stochastic basis are the shifted Legendre
//! polynomials normalised to unit `L²` norm on the reference interval, so
//! `p_0 ≡ 1` and `∫ p_m p_n = δ_mn`. Quadrature weights are scaled to sum to 1,
//! i.e. rules integrate against the unit-length measure of the reference cell.

use crate::error::{DsgError, Result};

/// Largest polynomial degree supported by the basis tables.
pub const MAX_DEGREE: usize = 16;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;
const POINT_SLACK: f64 = 1e-12;

/// Legendre polynomial `P_n(t)` on `[-1, 1]` and its derivative.
fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, t);
    let (mut dp_prev, mut dp) = (0.0, 1.0);
    for m in 1..n {
        let mf = m as f64;
        let p_next = ((2.0 * mf + 1.0) * t * p - mf * p_prev) / (mf + 1.0);
        let dp_next = dp_prev + (2.0 * mf + 1.0) * p;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p, dp)
}

fn check_args(degree: usize, point: f64) -> Result<()> {
    if degree > MAX_DEGREE {
        return Err(DsgError::Argument(format!(
            "degree {degree} exceeds the supported maximum {MAX_DEGREE}"
        )));
    }
    if !point.is_finite() || point.abs() > 0.5 + POINT_SLACK {
        return Err(DsgError::Argument(format!(
            "point {point} lies outside the reference interval [-1/2, 1/2]"
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn orthonormal_value(degree: usize, point: f64) -> f64 {
    let scale = (2.0 * degree as f64 + 1.0).sqrt();
    scale * legendre_with_derivative(degree, 2.0 * point).0
}

#[inline]
pub(crate) fn orthonormal_derivative(degree: usize, point: f64) -> f64 {
    let scale = (2.0 * degree as f64 + 1.0).sqrt();
    2.0 * scale * legendre_with_derivative(degree, 2.0 * point).1
}

/// Value of the orthonormal basis polynomial of the given degree at `point`.
pub fn legendre_orthonormal_eval(degree: usize, point: f64) -> Result<f64> {
    check_args(degree, point)?;
    Ok(orthonormal_value(degree, point))
}

/// Exact derivative of the orthonormal basis polynomial of the given degree.
pub fn legendre_orthonormal_deriv(degree: usize, point: f64) -> Result<f64> {
    check_args(degree, point)?;
    Ok(orthonormal_derivative(degree, point))
}

/// Nodes and weights on `[-1/2, 1/2]`; weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of `f` over the reference interval with unit measure.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

fn newton<F: Fn(f64) -> (f64, f64)>(mut t: f64, g: F) -> f64 {
    for _ in 0..NEWTON_MAX_ITER {
        let (value, slope) = g(t);
        let step = value / slope;
        t -= step;
        if step.abs() <= NEWTON_TOL {
            break;
        }
    }
    t
}

/// Gauss-Legendre rule with `num_nodes` points mapped to `[-1/2, 1/2]`.
pub fn gauss_legendre(num_nodes: usize) -> Result<QuadratureRule> {
    if num_nodes == 0 {
        return Err(DsgError::Argument(
            "Gauss-Legendre rule needs at least one node".into(),
        ));
    }
    let n = num_nodes;
    let nf = n as f64;
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let guess = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let t = newton(guess, |t| legendre_with_derivative(n, t));
            let (_, dp) = legendre_with_derivative(n, t);
            let w = 2.0 / ((1.0 - t * t) * dp * dp);
            (0.5 * t, 0.5 * w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(QuadratureRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Gauss-Lobatto rule with `num_nodes` points (both endpoints included)
/// mapped to `[-1/2, 1/2]`.
pub fn gauss_lobatto(num_nodes: usize) -> Result<QuadratureRule> {
    if num_nodes < 2 {
        return Err(DsgError::Argument(
            "Gauss-Lobatto rule needs at least two nodes".into(),
        ));
    }
    let n = num_nodes;
    let m = n - 1;
    let mf = m as f64;
    let weight = |t: f64| {
        let (p, _) = legendre_with_derivative(m, t);
        2.0 / (n as f64 * mf * p * p)
    };
    let mut pairs = Vec::with_capacity(n);
    pairs.push((-0.5, 0.5 * weight(-1.0)));
    for i in 1..m {
        let guess = -(std::f64::consts::PI * i as f64 / mf).cos();
        // Interior nodes are the roots of P'_m.
        let t = newton(guess, |t| {
            let (p, dp) = legendre_with_derivative(m, t);
            let ddp = (2.0 * t * dp - mf * (mf + 1.0) * p) / (1.0 - t * t);
            (dp, ddp)
        });
        pairs.push((0.5 * t, 0.5 * weight(t)));
    }
    pairs.push((0.5, 0.5 * weight(1.0)));
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(QuadratureRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Orthonormal Legendre basis on the reference interval, optionally scaled.
///
/// The scale factor exists so the mass-matrix assembly can be exercised with
/// a non-normalised basis; the scheme itself always runs with scale 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceBasis {
    pub max_degree: usize,
    pub scale: f64,
}

impl ReferenceBasis {
    pub fn new(max_degree: usize) -> Result<Self> {
        Self::scaled(max_degree, 1.0)
    }

    pub fn scaled(max_degree: usize, scale: f64) -> Result<Self> {
        if max_degree > MAX_DEGREE {
            return Err(DsgError::Argument(format!(
                "degree {max_degree} exceeds the supported maximum {MAX_DEGREE}"
            )));
        }
        Ok(Self { max_degree, scale })
    }

    pub fn eval(&self, degree: usize, point: f64) -> Result<f64> {
        self.check_degree(degree)?;
        Ok(self.scale * legendre_orthonormal_eval(degree, point)?)
    }

    pub fn deriv(&self, degree: usize, point: f64) -> Result<f64> {
        self.check_degree(degree)?;
        Ok(self.scale * legendre_orthonormal_deriv(degree, point)?)
    }

    /// Table `[point][degree]` of basis values.
    pub fn value_table(&self, points: &[f64]) -> Vec<Vec<f64>> {
        points
            .iter()
            .map(|&x| {
                (0..=self.max_degree)
                    .map(|h| self.scale * orthonormal_value(h, x))
                    .collect()
            })
            .collect()
    }

    /// Table `[point][degree]` of basis derivatives.
    pub fn derivative_table(&self, points: &[f64]) -> Vec<Vec<f64>> {
        points
            .iter()
            .map(|&x| {
                (0..=self.max_degree)
                    .map(|h| self.scale * orthonormal_derivative(h, x))
                    .collect()
            })
            .collect()
    }

    /// `∫ b_h² dx` over the reference interval, computed by quadrature.
    pub fn gram_diagonal(&self) -> Vec<f64> {
        let rule = gauss_legendre(self.max_degree + 1).expect("at least one node");
        (0..=self.max_degree)
            .map(|h| rule.integrate(|x| (self.scale * orthonormal_value(h, x)).powi(2)))
            .collect()
    }

    fn check_degree(&self, degree: usize) -> Result<()> {
        if degree > self.max_degree {
            return Err(DsgError::Argument(format!(
                "degree {degree} exceeds basis maximum {}",
                self.max_degree
            )));
        }
        Ok(())
    }
}
