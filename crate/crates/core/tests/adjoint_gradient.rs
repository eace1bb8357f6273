mod common;

use common::{config, m1_dot, noise, rel, scheme, unlimited};
use dsg_ident::adjoint::{adjoint_solve, d_params_m2, d_params_m3};
use dsg_ident::commands::identification_problem;
use dsg_ident::config::RunConfig;
use dsg_ident::data::generate_observations;
use dsg_ident::dsg::{
    compute_m3, forward_solve, semi_discrete_rhs, ForwardOptions, RkMethod, Scheme,
};
use dsg_ident::mesh::{Boundary, DistributionParams};
use dsg_ident::optimizer::{IdentificationProblem, Objective};
use dsg_ident::problems::{advection, FluxModel};
use dsg_ident::CoefficientField;

fn coarse(problem: &str, boundary: &str, final_time: f64) -> RunConfig {
    config(&format!(
        r#"
problem = "{problem}"
boundary = "{boundary}"
x_start = 0.0
x_end = 1.0
final_time = {final_time}
nx = 50
nxi = 5
kx = 1
kxi = 2
delta = 1e-2
tol = 1e-2
alpha_init = 1.0
prior = [-0.8, 1.4]
reference = [-1.0, 1.0]
limiter = false
"#
    ))
}

fn problem_for(cfg: &RunConfig) -> IdentificationProblem {
    let obs = generate_observations(
        &cfg.problem_definition().unwrap(),
        &cfg.discretization().unwrap(),
        cfg.reference_params().unwrap(),
    )
    .unwrap();
    identification_problem(cfg, obs).unwrap()
}

/// Central differences of the reduced cost, one pair of solves per component.
fn central_differences(p: &mut IdentificationProblem, at: [f64; 2], eps: f64) -> [f64; 2] {
    let mut fd = [0.0; 2];
    for (s, out) in fd.iter_mut().enumerate() {
        let mut plus = at;
        let mut minus = at;
        plus[s] += eps;
        minus[s] -= eps;
        let jp = p
            .cost(&DistributionParams::new(plus[0], plus[1]).unwrap())
            .unwrap()
            .total;
        let jm = p
            .cost(&DistributionParams::new(minus[0], minus[1]).unwrap())
            .unwrap()
            .total;
        *out = (jp - jm) / (2.0 * eps);
    }
    fd
}

fn gradient_error(cfg: &RunConfig, at: [f64; 2]) -> [f64; 2] {
    let mut p = problem_for(cfg);
    let (_, pieces) = p
        .evaluate(&DistributionParams::new(at[0], at[1]).unwrap())
        .unwrap();
    let fd = central_differences(&mut p, at, 1e-4);
    [rel(pieces.total[0], fd[0]), rel(pieces.total[1], fd[1])]
}

#[test]
fn sinus_gradient_matches_differences() {
    let e = gradient_error(&coarse("advection-sinus", "periodic", 0.01), [-0.8, 1.3]);
    assert!(e[0] < 1e-3 && e[1] < 1e-3, "{e:?}");
}

#[test]
fn shock_gradient_matches_differences() {
    let e = gradient_error(&coarse("advection-shock", "outflow", 0.01), [-0.8, 1.3]);
    assert!(e[0] < 1e-2 && e[1] < 1e-2, "{e:?}");
}

#[test]
fn burgers_gradient_matches_differences() {
    let e = gradient_error(&coarse("burgers", "periodic", 0.05), [-0.8, 1.3]);
    assert!(e[0] < 1e-2 && e[1] < 1e-2, "{e:?}");
}

#[test]
fn gradient_accuracy_holds_for_every_integrator() {
    for rk in ["euler", "ssp3"] {
        let text =
            coarse("advection-sinus", "periodic", 0.01).to_toml() + &format!("rk = \"{rk}\"\n");
        let e = gradient_error(&config(&text), [-0.9, 1.1]);
        assert!(e[0] < 1e-2 && e[1] < 1e-2, "{rk}: {e:?}");
    }
}

#[test]
fn linear_duality_is_exact() {
    for (method, boundary) in [
        (RkMethod::SspRk2, Boundary::Periodic),
        (RkMethod::ForwardEuler, Boundary::Outflow),
    ] {
        let s = scheme(6, 3, 1, 2, advection(2.0), boundary, (-0.6, 1.1));
        let v0 = noise(&s, 3);
        let opts = ForwardOptions {
            method: Some(method),
            ..unlimited(0.05)
        };
        let traj = forward_solve(&s, v0.clone(), &opts).unwrap();
        let data = noise(&s, 4);
        let adj = adjoint_solve(&s, &traj, &data).unwrap();
        let end = m1_dot(&s, traj.final_state(), adj.states.last().unwrap());
        let start = m1_dot(&s, &v0, &adj.states[0]);
        assert!(
            (end - start).abs() < 1e-8 * end.abs().max(1.0),
            "{method:?}: {end} vs {start}"
        );
    }
}

/// Columns of the semi-discrete operator.
fn dense_operator(s: &Scheme, c: f64) -> Vec<Vec<f64>> {
    let n = s.zeros().as_slice().len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|col| {
            let mut e = s.zeros();
            e.as_mut_slice()[col] = 1.0;
            semi_discrete_rhs(s, &e, c).into_vec()
        })
        .collect();
    (0..n)
        .map(|row| cols.iter().map(|c| c[row]).collect())
        .collect()
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// `exp(a)` by scaling and squaring of a truncated Taylor series.
fn expm(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let norm = a
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
    let scale = 0.5f64.powi(squarings);
    let b: Vec<Vec<f64>> = a
        .iter()
        .map(|r| r.iter().map(|v| v * scale).collect())
        .collect();
    let mut term: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut sum = term.clone();
    for k in 1..30 {
        term = mat_mul(&term, &b);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v /= k as f64;
            }
        }
        for (sr, tr) in sum.iter_mut().zip(&term) {
            for (s, t) in sr.iter_mut().zip(tr) {
                *s += t;
            }
        }
    }
    for _ in 0..squarings {
        sum = mat_mul(&sum, &sum);
    }
    sum
}

#[test]
fn adjoint_matches_matrix_exponential() {
    // Deterministic speed: the operator does not depend on ξᴵ.
    let s = scheme(
        4,
        2,
        1,
        1,
        FluxModel::Linear { speed: 1.5 },
        Boundary::Periodic,
        (-1.0, 1.0),
    );
    let t_end = 0.2;
    let a = dense_operator(&s, 1.5);
    let at: Vec<Vec<f64>> = (0..a.len())
        .map(|i| a.iter().map(|r| r[i]).collect())
        .collect();
    let scaled: Vec<Vec<f64>> = at
        .iter()
        .map(|r| r.iter().map(|v| v * t_end).collect())
        .collect();
    let prop = expm(&scaled);

    let u0 = noise(&s, 8);
    let data = noise(&s, 9);
    let errors: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&safety| {
            let opts = ForwardOptions {
                cfl_safety: safety,
                ..unlimited(t_end)
            };
            let traj = forward_solve(&s, u0.clone(), &opts).unwrap();
            let adj = adjoint_solve(&s, &traj, &data).unwrap();
            let pt = adj.states.last().unwrap().as_slice();
            let exact: Vec<f64> = prop
                .iter()
                .map(|r| r.iter().zip(pt).map(|(m, v)| m * v).sum())
                .collect();
            let diff: f64 = adj.states[0]
                .as_slice()
                .iter()
                .zip(&exact)
                .map(|(x, y)| (x - y).powi(2))
                .sum();
            let size: f64 = exact.iter().map(|v| v * v).sum();
            (diff / size).sqrt()
        })
        .collect();
    assert!(errors[2] < 1e-4, "{errors:?}");
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 1.7, "{errors:?}");
    }
}

/// `(−1)^k` reflection of the stochastic elements.
fn mirror(f: &CoefficientField) -> CoefficientField {
    let sh = f.shape();
    let mut out = f.clone();
    for i in 0..sh.nx {
        for j in 0..sh.nxi {
            for h in 0..sh.nh {
                for k in 0..sh.nk {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    out.set(h, k, i, sh.nxi - 1 - j, sign * f.get(h, k, i, j));
                }
            }
        }
    }
    out
}

#[test]
fn parameter_derivatives_mirror_on_symmetric_support() {
    // Odd flux a(ξ) = ξ, symmetric support and a state even in ξ: the flux
    // parts satisfy ∂ξᴸ = S ∂ξᴿ for the reflection S, while the viscosity
    // part, even in ξ, flips sign.
    let s = scheme(5, 4, 2, 3, advection(1.0), Boundary::Periodic, (-0.9, 0.9));
    let raw = noise(&s, 21);
    let even = raw.lincomb(0.5, &mirror(&raw), 0.5);
    assert_eq!(mirror(&even), even);
    let tol = 1e-12;

    let m2 = d_params_m2(&s, &even);
    assert!(mirror(&m2[1]).lincomb(1.0, &m2[0], -1.0).max_abs() < tol);

    // M3 is affine in c; its c-slope carries the viscosity part.
    let slope = compute_m3(&s, &even, 1.0).lincomb(1.0, &compute_m3(&s, &even, 0.0), -1.0);
    let dc = s.flux.viscosity_param_derivative(&s.stoch.params);
    let m3 = d_params_m3(&s, &even);
    let flux_part = |side: usize| m3[side].lincomb(1.0, &slope, -dc[side]);
    assert!(
        mirror(&flux_part(1))
            .lincomb(1.0, &flux_part(0), -1.0)
            .max_abs()
            < tol
    );
    let mut visc = [slope.clone(), slope];
    visc[0].scale(dc[0]);
    visc[1].scale(dc[1]);
    assert!(visc[0].max_abs() > 0.1);
    assert!(mirror(&visc[1]).lincomb(1.0, &visc[0], 1.0).max_abs() < tol);
}

#[test]
fn gradient_vanishes_at_perfect_fit() {
    let cfg = config(
        &(coarse("burgers", "periodic", 0.02)
            .to_toml()
            .replace("prior = [-0.8, 1.4]", "prior = [-1.0, 1.0]")),
    );
    let p = problem_for(&cfg);
    let (cost, pieces) = p.evaluate(&cfg.reference_params().unwrap()).unwrap();
    assert_eq!(cost.total, 0.0);
    assert_eq!(pieces.total, [0.0, 0.0]);
}

#[test]
fn burgers_gradient_is_the_initial_term() {
    let cfg = coarse("burgers", "periodic", 0.02);
    let p = problem_for(&cfg);
    let (_, g) = p
        .evaluate(&DistributionParams::new(-0.7, 1.2).unwrap())
        .unwrap();
    assert_eq!(g.flux_term, [0.0, 0.0]);
    assert!(g.init_term[0] != 0.0 && g.init_term[1] != 0.0);
}
