//! Resolved run configuration. A config JSON dumped by `--dump-config`
//! reproduces the run bit-identically when passed back via `--config`;
//! explicit flags override config-file values.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use shadow_ode::peano::SolveOptions;
use shadow_ode::RuleSpec;
use shadow_ode::SolverError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: String,
    pub field: String,
    pub dim: usize,
    pub x0: f64,
    pub y0: Vec<f64>,
    pub t_max: f64,
    pub n0: u64,
    pub refinements: u32,
    pub tol: f64,
    pub spacing: f64,
    pub escape_r0: f64,
    /// Perturbation rule descriptors; `funnel` consumes all, other commands
    /// use the first.
    pub pert: Vec<String>,
    pub two_sided: bool,
    pub eps0: f64,
    pub jeps: u32,
    pub minimal: bool,
    pub known: Option<String>,
    pub known_prime: Option<String>,
    pub known_c: Option<f64>,
    /// Integrand of the `integrate` command.
    pub f: Option<String>,
    pub a: f64,
    pub b: f64,
    pub pairs: usize,
    pub anchor: f64,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            field: "0".into(),
            dim: 1,
            x0: 0.0,
            y0: vec![0.0],
            t_max: 2.0,
            n0: 1 << 10,
            refinements: 8,
            tol: 1e-4,
            spacing: 1.0 / 128.0,
            escape_r0: 1e6,
            pert: vec!["zero".into()],
            two_sided: false,
            eps0: 1e-2,
            jeps: 12,
            minimal: false,
            known: None,
            known_prime: None,
            known_c: None,
            f: None,
            a: 0.0,
            b: 1.0,
            pairs: 50,
            anchor: 0.0,
            out: None,
            svg: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.dim == 0 {
            return Err(SolverError::Invalid("dim must be at least 1".into()));
        }
        if self.y0.len() != self.dim {
            return Err(SolverError::Invalid(format!(
                "y0 has {} component(s), expected {}",
                self.y0.len(),
                self.dim
            )));
        }
        if self.y0.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Invalid("y0 components must be finite".into()));
        }
        if !self.x0.is_finite() || self.x0 < 0.0 {
            return Err(SolverError::Invalid("x0 must be finite and nonnegative".into()));
        }
        self.solve_options()?.validate()
    }

    pub fn rules(&self) -> Result<Vec<RuleSpec>, SolverError> {
        if self.pert.is_empty() {
            return Ok(vec![RuleSpec::Zero]);
        }
        self.pert.iter().map(|p| RuleSpec::parse(p)).collect()
    }

    pub fn solve_options(&self) -> Result<SolveOptions, SolverError> {
        let rule = self.rules()?.into_iter().next().unwrap_or(RuleSpec::Zero);
        Ok(SolveOptions {
            n0: self.n0,
            refinements: self.refinements,
            t_max: self.t_max,
            tol: self.tol,
            query_spacing: self.spacing,
            escape_r0: self.escape_r0,
            rule,
            two_sided: self.two_sided,
            boundary_refine_passes: 0,
        })
    }
}
