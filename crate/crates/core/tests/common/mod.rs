#![allow(dead_code)]

use dsg_ident::config::RunConfig;
use dsg_ident::dsg::{ForwardOptions, Scheme};
use dsg_ident::mesh::{build_stochastic_mesh, Boundary, DistributionParams, PhysicalMesh};
use dsg_ident::problems::FluxModel;
use dsg_ident::CoefficientField;

pub fn scheme(
    nx: usize,
    nxi: usize,
    kx: usize,
    kxi: usize,
    flux: FluxModel,
    boundary: Boundary,
    params: (f64, f64),
) -> Scheme {
    let phys = PhysicalMesh::new(0.0, 1.0, nx, boundary).unwrap();
    let p = DistributionParams::new(params.0, params.1).unwrap();
    Scheme::new(phys, build_stochastic_mesh(p, nxi).unwrap(), kx, kxi, flux).unwrap()
}

/// Deterministic values in `[-0.5, 0.5)` from a 64-bit LCG.
pub fn noise(s: &Scheme, seed: u64) -> CoefficientField {
    let mut st = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(11);
    let mut f = s.zeros();
    for v in f.as_mut_slice() {
        st = st
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        *v = ((st >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
    }
    f
}

pub fn unlimited(final_time: f64) -> ForwardOptions {
    ForwardOptions {
        limiter: None,
        ..ForwardOptions::new(final_time)
    }
}

pub fn config(text: &str) -> RunConfig {
    RunConfig::from_toml(text).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// `⟨a, b⟩` weighted by the diagonal mass matrix.
pub fn m1_dot(s: &Scheme, a: &CoefficientField, b: &CoefficientField) -> f64 {
    let m = s.m1_diagonal();
    let cl = m.len();
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .enumerate()
        .map(|(n, (x, y))| m[n % cl] * x * y)
        .sum()
}
