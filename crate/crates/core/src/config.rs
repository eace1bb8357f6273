//! Flat TOML run configuration.
//!
//! Physics fields are required; numerics fields have defaults.
//!
//! ```toml
//! problem = "advection-shock"   # advection-shock | advection-sinus | burgers
//! boundary = "outflow"          # periodic | outflow
//! x_start = 0.0                 # length units
//! x_end = 1.0
//! final_time = 0.01             # time units
//! nx = 200
//! nxi = 20
//! kx = 1
//! kxi = 4
//! delta = 1e-2                  # penalty weight
//! tol = 1e-2                    # stop when the gradient 2-norm is below
//! alpha_init = 0.125            # initial Armijo step
//! prior = [-0.8, 1.4]           # penalty prior
//! reference = [-1.0, 1.0]       # endpoints used to generate data
//! # optional
//! start = [-0.8, 1.4]           # first iterate, defaults to prior
//! method = "bfgs"               # bfgs | steepest
//! cfl_safety = 0.5
//! limiter = true
//! limiter_m = 0.0
//! rk = "ssp2"                   # euler | ssp2 | ssp3; default by K_X
//! max_iterations = 200
//! max_backtracks = 40
//! output_dir = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::RunSignature;
use crate::dsg::{ForwardOptions, LimiterConfig, RkMethod};
use crate::error::{DsgError, Result};
use crate::mesh::{Boundary, DistributionParams, PhysicalMesh};
use crate::optimizer::{Discretization, Method, OptimizerConfig};
use crate::problems::{ProblemDefinition, ProblemKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RkChoice {
    Euler,
    Ssp2,
    Ssp3,
}

impl From<RkChoice> for RkMethod {
    fn from(c: RkChoice) -> Self {
        match c {
            RkChoice::Euler => RkMethod::ForwardEuler,
            RkChoice::Ssp2 => RkMethod::SspRk2,
            RkChoice::Ssp3 => RkMethod::SspRk3,
        }
    }
}

fn default_method() -> Method {
    Method::Bfgs
}
fn default_safety() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_max_iterations() -> usize {
    200
}
fn default_backtracks() -> usize {
    40
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    pub boundary: Boundary,
    pub x_start: f64,
    pub x_end: f64,
    pub final_time: f64,
    pub nx: usize,
    pub nxi: usize,
    pub kx: usize,
    pub kxi: usize,
    pub delta: f64,
    pub tol: f64,
    pub alpha_init: f64,
    pub prior: [f64; 2],
    pub reference: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<[f64; 2]>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_safety")]
    pub cfl_safety: f64,
    #[serde(default = "default_true")]
    pub limiter: bool,
    #[serde(default)]
    pub limiter_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rk: Option<RkChoice>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_backtracks")]
    pub max_backtracks: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| DsgError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DsgError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(DsgError::Config(m));
        ProblemKind::from_name(&self.problem)?;
        for (name, v) in [("nx", self.nx), ("nxi", self.nxi)] {
            if v < 1 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if self.kx > crate::basis::MAX_DEGREE || self.kxi > crate::basis::MAX_DEGREE {
            return fail(format!(
                "polynomial degrees are limited to {}",
                crate::basis::MAX_DEGREE
            ));
        }
        // T = 0 is allowed so that a forward run can emit the projected datum.
        if !(self.final_time >= 0.0) || !self.final_time.is_finite() {
            return fail(format!(
                "final_time must be non-negative, got {}",
                self.final_time
            ));
        }
        if !(self.tol > 0.0) {
            return fail(format!("tol must be positive, got {}", self.tol));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return fail(format!("delta must be non-negative, got {}", self.delta));
        }
        if !(self.alpha_init > 0.0) {
            return fail(format!(
                "alpha_init must be positive, got {}",
                self.alpha_init
            ));
        }
        if !(self.cfl_safety > 0.0) {
            return fail(format!(
                "cfl_safety must be positive, got {}",
                self.cfl_safety
            ));
        }
        if !(self.limiter_m >= 0.0) {
            return fail(format!(
                "limiter_m must be non-negative, got {}",
                self.limiter_m
            ));
        }
        let named = [
            ("prior", Some(self.prior)),
            ("reference", Some(self.reference)),
            ("start", self.start),
        ];
        for (name, p) in named {
            if let Some([l, r]) = p {
                // The prior is only a penalty anchor and may be inverted.
                if name != "prior" {
                    DistributionParams::new(l, r)
                        .map_err(|e| DsgError::Config(format!("{name}: {e}")))?;
                } else if !(l.is_finite() && r.is_finite()) {
                    return fail("prior must be finite".into());
                }
            }
        }
        PhysicalMesh::new(self.x_start, self.x_end, self.nx, self.boundary)
            .map_err(|e| DsgError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn problem_definition(&self) -> Result<ProblemDefinition> {
        let mut def = ProblemKind::from_name(&self.problem)?.definition();
        def.boundary = self.boundary;
        Ok(def)
    }

    pub fn forward_options(&self) -> ForwardOptions {
        ForwardOptions {
            final_time: self.final_time,
            cfl_safety: self.cfl_safety,
            limiter: self.limiter.then_some(LimiterConfig {
                tvb_m: self.limiter_m,
            }),
            method: self.rk.map(Into::into),
            store_intermediate: true,
        }
    }

    pub fn discretization(&self) -> Result<Discretization> {
        Ok(Discretization {
            phys: PhysicalMesh::new(self.x_start, self.x_end, self.nx, self.boundary)?,
            num_elements: self.nxi,
            kx: self.kx,
            kxi: self.kxi,
            forward: self.forward_options(),
        })
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        let mut o = OptimizerConfig::new(self.method, self.tol, self.alpha_init);
        o.max_iterations = self.max_iterations;
        o.line_search.max_backtracks = self.max_backtracks;
        o
    }

    pub fn reference_params(&self) -> Result<DistributionParams> {
        DistributionParams::new(self.reference[0], self.reference[1])
    }

    pub fn start_params(&self) -> Result<DistributionParams> {
        let [l, r] = self.start.unwrap_or(self.prior);
        DistributionParams::new(l, r)
            .map_err(|e| DsgError::Config(format!("start (defaults to prior): {e}")))
    }

    pub fn signature(&self) -> RunSignature {
        RunSignature {
            problem: self.problem.clone(),
            final_time: self.final_time,
            nx: self.nx,
            nxi: self.nxi,
            kx: self.kx,
            kxi: self.kxi,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHOCK: &str = r#"
problem = "advection-shock"
boundary = "outflow"
x_start = 0.0
x_end = 1.0
final_time = 0.01
nx = 200
nxi = 20
kx = 1
kxi = 4
delta = 1e-2
tol = 1e-2
alpha_init = 0.125
prior = [-0.8, 1.4]
reference = [-1.0, 1.0]
"#;

    #[test]
    fn parses_with_defaults() {
        let c = RunConfig::from_toml(SHOCK).unwrap();
        assert_eq!(c.method, Method::Bfgs);
        assert_eq!(c.cfl_safety, 0.5);
        assert_eq!(c.limiter_m, 0.0);
        assert_eq!(c.max_iterations, 200);
        assert_eq!(c.start_params().unwrap().as_array(), [-0.8, 1.4]);
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn missing_field_named() {
        let text = SHOCK.replace("nxi = 20\n", "");
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("nxi"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let err = RunConfig::from_toml(&format!("{SHOCK}\nspeed = 3\n"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("speed"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        for (from, to) in [
            ("tol = 1e-2", "tol = 0.0"),
            ("final_time = 0.01", "final_time = -0.01"),
            ("nx = 200", "nx = 0"),
            ("delta = 1e-2", "delta = -1.0"),
            ("reference = [-1.0, 1.0]", "reference = [1.0, -1.0]"),
            ("problem = \"advection-shock\"", "problem = \"heat\""),
        ] {
            assert!(
                RunConfig::from_toml(&SHOCK.replace(from, to)).is_err(),
                "{to}"
            );
        }
        let inverted_prior = SHOCK.replace(
            "prior = [-0.8, 1.4]",
            "prior = [1.0, -1.0]\nstart = [-0.5, 0.5]",
        );
        assert!(RunConfig::from_toml(&inverted_prior).is_ok());
    }
}
