//! Applications of per-step perturbations: recover the sequence realizing a
//! known closed-form solution through the mean-value construction, verify the
//! round trip, and sweep perturbation families to explore solution funnels of
//! non-unique problems.

use rayon::prelude::*;

use crate::error::SolverError;
use crate::expr::{Curve, VectorField};
use crate::grid::{integrate, EulerTrajectory, GridSpec, Perturbation};
use crate::peano::{solve_global, RuleSpec, SolveOptions};
use crate::shadow::Solution;

/// Number of scan subintervals per step when hunting the mean-value abscissa.
const SCAN_PARTS: usize = 64;
/// Bisection narrows the bracket to `h * 2^-20`.
const BISECT_WIDTH_BITS: i32 = 20;
/// Probe count of the derivative sanity gate.
const GATE_PROBES: usize = 100;
const GATE_TOL: f64 = 1e-10;

/// A closed-form solution `y` with its derivative and validity domain `[0, c]`.
#[derive(Debug, Clone)]
pub struct KnownSolution {
    pub y: Curve,
    pub y_prime: Curve,
    pub c: f64,
}

impl KnownSolution {
    pub fn new(y: Curve, y_prime: Curve, c: f64) -> Result<KnownSolution, SolverError> {
        if y.dim() != y_prime.dim() {
            return Err(SolverError::Invalid(
                "y and y' must have the same dimension".into(),
            ));
        }
        if !c.is_finite() || c <= 0.0 {
            return Err(SolverError::Invalid(format!("domain bound c = {c} must be positive")));
        }
        Ok(KnownSolution { y, y_prime, c })
    }

    /// Sanity gate: `y(x0)` matches the grid's initial value and
    /// `y'(x) = F(x, y(x))` within 1e-10 at 100 probe points.
    fn validate_against(
        &self,
        field: &VectorField,
        spec: &GridSpec,
    ) -> Result<(), SolverError> {
        let y0 = self
            .y
            .eval(spec.x0)
            .map_err(|e| SolverError::domain(None, e))?;
        for (a, b) in y0.iter().zip(&spec.y0) {
            if (a - b).abs() > GATE_TOL {
                return Err(SolverError::KnownSolutionMismatch {
                    x: spec.x0,
                    deviation: (a - b).abs(),
                });
            }
        }
        let end = self.c.min(spec.x0 + spec.k_max as f64 * spec.h());
        for i in 0..GATE_PROBES {
            let x = spec.x0 + (end - spec.x0) * i as f64 / (GATE_PROBES - 1) as f64;
            let yv = self.y.eval(x).map_err(|e| SolverError::domain(None, e))?;
            let dv = self
                .y_prime
                .eval(x)
                .map_err(|e| SolverError::domain(None, e))?;
            let fv = field.eval(x, &yv).map_err(|e| SolverError::domain(None, e))?;
            for (d, f) in dv.iter().zip(&fv) {
                let dev = (d - f).abs();
                if dev > GATE_TOL * (1.0 + f.abs()) {
                    return Err(SolverError::KnownSolutionMismatch { x, deviation: dev });
                }
            }
        }
        Ok(())
    }
}

/// For each step with `x_{k+1} <= c`, find the least `t_k` in
/// `[x_k, x_{k+1}]` solving `y(x_{k+1}) - y(x_k) = y'(t) * h` and set
/// `eps_k = F(t_k, y(t_k)) - F(x_k, y(x_k))`; beyond `c` the sequence is
/// zero. The least root is located by scanning 64 subintervals for the first
/// sign change and bisecting to width `h * 2^-20`.
pub fn recover(
    field: &VectorField,
    known: &KnownSolution,
    spec: &GridSpec,
) -> Result<Perturbation, SolverError> {
    if field.dim() != 1 {
        return Err(SolverError::SystemsUnsupported { dim: field.dim() });
    }
    if spec.dim() != 1 {
        return Err(SolverError::Invalid("grid state must be scalar".into()));
    }
    known.validate_against(field, spec)?;

    let h = spec.h();
    let steps = spec.k_max;
    let mut values = Vec::with_capacity(steps as usize);
    let mut abscissas = Vec::with_capacity(steps as usize);
    let y_at = |x: f64| -> Result<f64, SolverError> {
        Ok(known.y.eval(x).map_err(|e| SolverError::domain(None, e))?[0])
    };
    let yp_at = |x: f64| -> Result<f64, SolverError> {
        Ok(known
            .y_prime
            .eval(x)
            .map_err(|e| SolverError::domain(None, e))?[0])
    };
    let f_at = |x: f64, y: f64| -> Result<f64, SolverError> {
        Ok(field
            .eval(x, &[y])
            .map_err(|e| SolverError::domain(None, e))?[0])
    };

    for k in 0..steps {
        let x_k = spec.x_at(k);
        let x_next = spec.x_at(k + 1);
        if x_next > known.c {
            values.push(0.0);
            abscissas.push(x_k);
            continue;
        }
        let dy = y_at(x_next)? - y_at(x_k)?;
        // g(t) = y'(t) * h - dy; the mean value theorem provides a root.
        let g = |t: f64| -> Result<f64, SolverError> { Ok(yp_at(t)? * h - dy) };

        let mut t_k = None;
        let mut scan = Vec::with_capacity(SCAN_PARTS + 1);
        for i in 0..=SCAN_PARTS {
            let t = x_k + h * i as f64 / SCAN_PARTS as f64;
            scan.push((t, g(t)?));
        }
        for i in 0..=SCAN_PARTS {
            if scan[i].1 == 0.0 {
                t_k = Some(scan[i].0);
                break;
            }
            if i < SCAN_PARTS && (scan[i].1 < 0.0) != (scan[i + 1].1 < 0.0) {
                // leftmost bracketed root; bisect
                let (mut lo, mut g_lo) = scan[i];
                let mut hi = scan[i + 1].0;
                let width = h / 2f64.powi(BISECT_WIDTH_BITS);
                while hi - lo > width {
                    let mid = 0.5 * (lo + hi);
                    let g_mid = g(mid)?;
                    if g_mid == 0.0 {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if (g_mid < 0.0) == (g_lo < 0.0) {
                        lo = mid;
                        g_lo = g_mid;
                    } else {
                        hi = mid;
                    }
                }
                t_k = Some(0.5 * (lo + hi));
                break;
            }
        }
        let t_k = match t_k {
            Some(t) => t,
            None => {
                // No sign change: allow a curvature-scaled slack before
                // declaring failure (the root may sit at a tangency).
                let curvature = scan
                    .windows(2)
                    .map(|w| (w[1].1 - w[0].1).abs())
                    .fold(0.0f64, f64::max);
                let slack = 2.0 * curvature + 1e-13 * (1.0 + dy.abs());
                let (best_t, best_g) = scan
                    .iter()
                    .copied()
                    .min_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                    .unwrap();
                if best_g.abs() <= slack {
                    best_t
                } else {
                    return Err(SolverError::NoMeanValuePoint {
                        step: k,
                        residual: best_g.abs(),
                    });
                }
            }
        };
        let eps_k = f_at(t_k, y_at(t_k)?)? - f_at(x_k, y_at(x_k)?)?;
        values.push(eps_k);
        abscissas.push(t_k);
    }
    Ok(Perturbation::recorded(values, abscissas))
}

/// Rerun the recursion with the recorded sequence and return
/// `max_k |y_k - y(x_k)|` over the steps with `x_{k+1} <= c`.
pub fn verify_roundtrip(
    field: &VectorField,
    known: &KnownSolution,
    recovered: &Perturbation,
    spec: &GridSpec,
) -> Result<f64, SolverError> {
    let traj = integrate(field, spec, recovered, f64::INFINITY)?;
    roundtrip_deviation(&traj, known)
}

fn roundtrip_deviation(
    traj: &EulerTrajectory,
    known: &KnownSolution,
) -> Result<f64, SolverError> {
    let h = traj.spec.h();
    let mut max_dev = 0.0f64;
    for row in 0..traj.len() {
        let x = traj.x(row);
        if x + h > known.c {
            break;
        }
        let reference = known.y.eval(x).map_err(|e| SolverError::domain(None, e))?;
        for (a, b) in traj.y(row).iter().zip(&reference) {
            max_dev = max_dev.max((a - b).abs());
        }
    }
    Ok(max_dev)
}

/// Funnel sweep result: one solution per rule plus clusters of solutions
/// whose sup-distance on the common domain is within 3*tol.
#[derive(Debug)]
pub struct FunnelResult {
    pub solutions: Vec<Solution>,
    /// Indices into `solutions`, grouped.
    pub clusters: Vec<Vec<usize>>,
}

/// Sup-distance of two solutions over their common sampled abscissas.
pub fn sup_distance(a: &Solution, b: &Solution) -> f64 {
    let mut worst = 0.0f64;
    let len = a.samples.len().min(b.samples.len());
    for i in 0..len {
        let (sa, sb) = (&a.samples[i], &b.samples[i]);
        debug_assert_eq!(sa.x, sb.x);
        for (u, v) in sa.value.iter().zip(&sb.value) {
            worst = worst.max((u - v).abs());
        }
    }
    worst
}

/// One global solve per rule, run in parallel, then a dedup pass clustering
/// solutions within 3*tol of a cluster representative.
pub fn funnel(
    field: &VectorField,
    y0: &[f64],
    rules: &[RuleSpec],
    opts: &SolveOptions,
) -> Result<FunnelResult, SolverError> {
    if rules.is_empty() {
        return Err(SolverError::Invalid("funnel needs at least one rule".into()));
    }
    let solutions: Result<Vec<Solution>, SolverError> = rules
        .par_iter()
        .map(|rule| {
            let mut o = opts.clone();
            o.rule = rule.clone();
            solve_global(field, 0.0, y0, &o)
        })
        .collect();
    let solutions = solutions?;
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, sol) in solutions.iter().enumerate() {
        let mut placed = false;
        for cluster in clusters.iter_mut() {
            let representative = &solutions[cluster[0]];
            if sup_distance(sol, representative) <= 3.0 * opts.tol {
                cluster.push(i);
                placed = true;
                break;
            }
        }
        if !placed {
            clusters.push(vec![i]);
        }
    }
    Ok(FunnelResult {
        solutions,
        clusters,
    })
}
