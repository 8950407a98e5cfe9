//! The global solver: build a refinement ladder under a perturbation rule,
//! extract the shadow table, close it into a certified noncontinuable
//! solution, and validate solutions through the integral residual identity
//! `y(z) - y(x) = int_x^z F(t, y(t)) dt`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::expr::VectorField;
use crate::grid::{integrate_directed, norm_inf, Direction, GridSpec, Perturbation};
use crate::quad::integrate_certified_fn;
use crate::shadow::{
    close, estimate_order, extract, refine_boundary, LadderLevel, RefinementLadder, Sample,
    Solution,
};

/// Factor of the per-level stability floor used by [`RuleSpec::FlooredConstant`].
pub const STABILITY_FLOOR_FACTOR: f64 = 8.0;

/// Per-level realization recipe for the perturbation sequence.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum RuleSpec {
    /// The distinguished solution: eps_k = 0 at every level.
    Zero,
    /// The same constant at every level; the solution of the superequation
    /// z' = F + c.
    Constant(f64),
    /// A constant whose magnitude is floored at `8 * h` per level, keeping
    /// the explicit recursion inside its stability region near kinks of F
    /// (an attracting equilibrium at depth O(eps^2) is reflected off the
    /// kink whenever h > eps/4). The floor vanishes in the refinement
    /// limit, so the emulated shadow is that of the plain constant.
    FlooredConstant(f64),
    /// Per-step uniform draws in [-amplitude, amplitude] with the amplitude
    /// halving per level (an infinitesimal in the ladder emulation).
    Sampled { eps0: f64, seed: u64 },
}

impl RuleSpec {
    pub fn realize(&self, spec: &GridSpec, dim: usize) -> Perturbation {
        match self {
            RuleSpec::Zero => Perturbation::zero(),
            RuleSpec::Constant(c) => Perturbation::constant(*c),
            RuleSpec::FlooredConstant(c) => {
                let magnitude = c.abs().max(STABILITY_FLOOR_FACTOR * spec.h());
                Perturbation::constant(magnitude.copysign(*c))
            }
            RuleSpec::Sampled { eps0, seed } => {
                let amplitude = eps0 * 0.5f64.powi(spec.level as i32);
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
                        .wrapping_add(spec.level as u64),
                );
                let values = (0..spec.k_max as usize * dim)
                    .map(|_| rng.random_range(-amplitude..=amplitude))
                    .collect();
                Perturbation::sampled(values)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            RuleSpec::Zero => "zero".into(),
            RuleSpec::Constant(c) => format!("const:{c}"),
            RuleSpec::FlooredConstant(c) => format!("const-floored:{c}"),
            RuleSpec::Sampled { eps0, seed } => format!("sampled:eps0={eps0},seed={seed}"),
        }
    }

    /// Parse a CLI-style descriptor: `zero` or `const:<value>`.
    pub fn parse(text: &str) -> Result<RuleSpec, SolverError> {
        if text == "zero" {
            return Ok(RuleSpec::Zero);
        }
        if let Some(v) = text.strip_prefix("const:") {
            let c: f64 = v
                .parse()
                .map_err(|_| SolverError::Invalid(format!("bad perturbation constant `{v}`")))?;
            return Ok(RuleSpec::Constant(c));
        }
        if let Some(v) = text.strip_prefix("sampled:") {
            let eps0: f64 = v
                .parse()
                .map_err(|_| SolverError::Invalid(format!("bad sampled amplitude `{v}`")))?;
            return Ok(RuleSpec::Sampled { eps0, seed: 0 });
        }
        Err(SolverError::Invalid(format!(
            "unknown perturbation rule `{text}` (expected `zero`, `const:<v>`, or `sampled:<eps0>`)"
        )))
    }
}

/// Configuration of one global solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Coarsest step count per unit, a power of two.
    pub n0: u64,
    /// Number of refinements J; the ladder runs levels 0..=J.
    pub refinements: u32,
    /// Horizon length from x0.
    pub t_max: f64,
    /// Convergence tolerance of the shadow extraction.
    pub tol: f64,
    /// Query spacing of the shadow table (dyadic).
    pub query_spacing: f64,
    /// Base escape radius; level j uses R0 * 4^j.
    pub escape_r0: f64,
    pub rule: RuleSpec,
    pub two_sided: bool,
    /// Bisection passes sharpening the endpoint estimate (0 disables).
    pub boundary_refine_passes: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            n0: 1 << 10,
            refinements: 8,
            t_max: 2.0,
            tol: 1e-4,
            query_spacing: 1.0 / 128.0,
            escape_r0: 1e6,
            rule: RuleSpec::Zero,
            two_sided: false,
            boundary_refine_passes: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !self.n0.is_power_of_two() {
            return Err(SolverError::Invalid(format!(
                "N0 = {} is not a power of two",
                self.n0
            )));
        }
        if self.refinements < 3 {
            return Err(SolverError::Invalid(format!(
                "refinements J = {} must be at least 3",
                self.refinements
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(SolverError::Invalid("tol must be positive".into()));
        }
        if !self.t_max.is_finite() || self.t_max <= 0.0 {
            return Err(SolverError::Invalid("T_max must be positive and finite".into()));
        }
        if self.query_spacing.is_nan() || self.query_spacing <= 0.0 {
            return Err(SolverError::Invalid("query spacing must be positive".into()));
        }
        if self.escape_r0.is_nan() || self.escape_r0 <= 0.0 {
            return Err(SolverError::Invalid("escape radius must be positive".into()));
        }
        Ok(())
    }
}

/// Build the refinement ladder for one direction; levels run in parallel.
pub fn build_ladder(
    field: &VectorField,
    x0: f64,
    y0: &[f64],
    opts: &SolveOptions,
    direction: Direction,
) -> Result<RefinementLadder, SolverError> {
    opts.validate()?;
    let dim = field.dim();
    if y0.len() != dim {
        return Err(SolverError::Invalid(format!(
            "y0 has {} component(s), field has {dim}",
            y0.len()
        )));
    }
    if opts.escape_r0.is_nan() || opts.escape_r0 <= norm_inf(y0) {
        return Err(SolverError::Invalid(format!(
            "escape radius {} must exceed |y0|_inf = {}",
            opts.escape_r0,
            norm_inf(y0)
        )));
    }
    let levels: Result<Vec<LadderLevel>, SolverError> = (0..=opts.refinements)
        .into_par_iter()
        .map(|j| {
            let spec = GridSpec::new(x0, y0.to_vec(), opts.n0, j, opts.t_max)?;
            let perturbation = opts.rule.realize(&spec, dim);
            let escape_radius = opts.escape_r0 * 4f64.powi(j as i32);
            let trajectory =
                integrate_directed(field, &spec, &perturbation, escape_radius, direction)?;
            Ok(LadderLevel {
                spec,
                perturbation,
                trajectory,
                escape_radius,
            })
        })
        .collect();
    RefinementLadder::new(levels?)
}

fn solve_one_sided(
    field: &VectorField,
    x0: f64,
    y0: &[f64],
    opts: &SolveOptions,
    direction: Direction,
) -> Result<Solution, SolverError> {
    let ladder = build_ladder(field, x0, y0, opts, direction)?;
    let table = extract(&ladder, opts.query_spacing, opts.tol)?;
    let mut sol = close(&table)?;
    if opts.boundary_refine_passes > 0 {
        refine_boundary(&ladder, &mut sol, opts.boundary_refine_passes);
    }
    sol.provenance = opts.rule.describe();
    Ok(sol)
}

/// Produce a certified noncontinuable solution through `(x0, y0)` under the
/// given perturbation rule. With `two_sided`, a mirrored backward recursion
/// extends the domain to the left and the two halves are stitched.
pub fn solve_global(
    field: &VectorField,
    x0: f64,
    y0: &[f64],
    opts: &SolveOptions,
) -> Result<Solution, SolverError> {
    let forward = solve_one_sided(field, x0, y0, opts, Direction::Forward)?;
    if !opts.two_sided {
        return Ok(forward);
    }
    let backward = solve_one_sided(field, x0, y0, opts, Direction::Backward)?;
    // Stitch: backward samples (excluding the shared origin) reversed, then
    // the forward samples. The forward half is reproduced sample-for-sample.
    let mut samples: Vec<Sample> = backward
        .samples
        .iter()
        .skip(1)
        .rev()
        .cloned()
        .collect();
    samples.extend(forward.samples.iter().cloned());
    let mut certificate = forward.certificate.clone();
    certificate.max_err_est = certificate.max_err_est.max(backward.certificate.max_err_est);
    Ok(Solution {
        dim: forward.dim,
        x0,
        samples,
        a_est: forward.a_est,
        blow_up: forward.blow_up,
        a_left_est: Some(backward.a_est),
        blow_up_left: Some(backward.blow_up),
        horizon: forward.horizon,
        certificate,
        provenance: forward.provenance.clone(),
    })
}

/// Convenience: the ladder, table, and order estimate for diagnostics.
pub fn solve_order(
    field: &VectorField,
    x0: f64,
    y0: &[f64],
    opts: &SolveOptions,
) -> Result<f64, SolverError> {
    let ladder = build_ladder(field, x0, y0, opts, Direction::Forward)?;
    let table = extract(&ladder, opts.query_spacing, opts.tol)?;
    estimate_order(&table)
}

/// Check the fundamental-theorem identity on random sample pairs: returns
/// `max |sol(z) - sol(x) - int_x^z F(t, sol(t)) dt|_inf`.
///
/// Pairs are drawn from the samples certified at absolute tolerance
/// (`err_est <= tol`); near a blow-up the trailing samples carry honest but
/// large absolute error estimates and validate nothing. The quadrature runs
/// over the interpolated solution at the solution's own tolerance.
pub fn residual_check(
    sol: &Solution,
    field: &VectorField,
    pair_count: usize,
) -> Result<f64, SolverError> {
    if sol.samples.len() < 2 {
        return Err(SolverError::Invalid(
            "residual check needs at least two samples".into(),
        ));
    }
    let tol = sol.certificate.tol;
    let mut pool: Vec<usize> = (0..sol.samples.len())
        .filter(|&i| sol.samples[i].err_est <= tol)
        .collect();
    if pool.len() < 2 {
        pool = (0..sol.samples.len()).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0DE5);
    let dim = sol.dim;
    let mut worst = 0.0f64;
    for _ in 0..pair_count {
        let i = pool[rng.random_range(0..pool.len())];
        let mut j = pool[rng.random_range(0..pool.len())];
        if i == j {
            j = pool[(pool.iter().position(|&p| p == i).unwrap() + 1) % pool.len()];
        }
        let (lo, hi) = if sol.samples[i].x <= sol.samples[j].x {
            (i, j)
        } else {
            (j, i)
        };
        let (x, z) = (sol.samples[lo].x, sol.samples[hi].x);
        if x == z {
            continue;
        }
        let mut residual = 0.0f64;
        for comp in 0..dim {
            let integrand = |t: f64| {
                let y = sol.value_at(t).expect("t inside sampled domain");
                let mut out = vec![0.0; dim];
                field.eval_into(t, &y, &mut out)?;
                Ok(out[comp])
            };
            // the check allows 50x the solve tolerance; certify the
            // quadrature at 5x so it contributes a tenth of the budget
            let (integral, _) = integrate_certified_fn(integrand, x, z, 5.0 * tol, 1 << 24)?;
            let lhs = sol.samples[hi].value[comp] - sol.samples[lo].value[comp];
            residual = residual.max((lhs - integral).abs());
        }
        worst = worst.max(residual);
    }
    Ok(worst)
}
