//! Standard-part extraction: collapse a ladder of Euler trajectories at
//! h_j -> 0 into one certified solution, classifying each dyadic query point
//! as converged, diverged, or undefined.
//!
//! Convergence is a two-level Cauchy test in the chordal metric
//!
//! ```text
//! d(u, v) = |u - v| / sqrt((1 + u^2) (1 + v^2))
//! ```
//!
//! taken componentwise and maxed. For moderate values this is the absolute
//! gap up to a factor of at most 2; near a blow-up it measures convergence on
//! the one-point compactification, which is the sense in which a diverging
//! solution has a limit at all. The reported `err_est` stays the plain
//! absolute gap `|v_J - v_{J-1}|_inf`.

use serde::Serialize;

use crate::error::SolverError;
use crate::grid::{EulerTrajectory, GridSpec, Perturbation, StopReason};

/// Minimum number of ladder levels required by the classifier.
pub const MIN_LEVELS: usize = 3;

/// One rung of the refinement ladder.
#[derive(Debug, Clone)]
pub struct LadderLevel {
    pub spec: GridSpec,
    pub perturbation: Perturbation,
    pub trajectory: EulerTrajectory,
    pub escape_radius: f64,
}

/// Trajectories at N_j = N0 * 2^j with escalating escape radii; the finite
/// stand-in for one unlimited step count.
#[derive(Debug)]
pub struct RefinementLadder {
    levels: Vec<LadderLevel>,
}

impl RefinementLadder {
    pub fn new(levels: Vec<LadderLevel>) -> Result<RefinementLadder, SolverError> {
        if levels.len() < 2 {
            return Err(SolverError::InsufficientLadder {
                levels: levels.len(),
                required: MIN_LEVELS,
            });
        }
        for w in levels.windows(2) {
            if w[1].spec.n() != 2 * w[0].spec.n() {
                return Err(SolverError::Invalid(
                    "ladder step counts must double per level".into(),
                ));
            }
            if w[1].escape_radius <= w[0].escape_radius {
                return Err(SolverError::Invalid(
                    "ladder escape radii must strictly increase".into(),
                ));
            }
            if w[1].perturbation.eps_max() > w[0].perturbation.eps_max() + f64::EPSILON {
                return Err(SolverError::Invalid(
                    "ladder eps_max must not increase across refinements".into(),
                ));
            }
        }
        Ok(RefinementLadder { levels })
    }

    pub fn levels(&self) -> &[LadderLevel] {
        &self.levels
    }

    pub fn top(&self) -> &LadderLevel {
        self.levels.last().unwrap()
    }

    pub fn dim(&self) -> usize {
        self.levels[0].spec.dim()
    }

    pub fn x0(&self) -> f64 {
        self.levels[0].spec.x0
    }

    pub fn t_max(&self) -> f64 {
        self.levels[0].spec.t_max
    }
}

/// Chordal (Riemann-sphere) distance, componentwise, maxed.
pub fn chordal_gap(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| {
            let denom = ((1.0 + a * a) * (1.0 + b * b)).sqrt();
            (a - b).abs() / denom
        })
        .fold(0.0f64, f64::max)
}

fn abs_gap(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| (a - b).abs())
        .fold(0.0f64, f64::max)
}

/// Classification of one query point.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryStatus {
    Converged { value: Vec<f64>, err_est: f64 },
    Diverged { level: usize },
    Undefined,
}

/// Per-query refinement values and statuses on the dyadic query grid; the
/// finite emulation of the standard part on rationals.
#[derive(Debug)]
pub struct ShadowTable {
    pub x0: f64,
    pub spacing: f64,
    pub tol: f64,
    pub n_levels: usize,
    pub queries: Vec<f64>,
    pub statuses: Vec<QueryStatus>,
    /// `values[q][j]`: level-j interpolate at query q, when covered.
    pub values: Vec<Vec<Option<Vec<f64>>>>,
}

/// Did a trajectory stop by running off to the escape radius (or beyond the
/// finite range) strictly before reaching `q` along its direction?
fn diverged_before(traj: &EulerTrajectory, q: f64) -> bool {
    let escaped = matches!(
        traj.stop_reason,
        StopReason::Escaped(_) | StopReason::NonFinite
    );
    let unreached = match traj.direction {
        crate::grid::Direction::Forward => traj.covered_to() < q,
        crate::grid::Direction::Backward => traj.covered_to() > q,
    };
    escaped && unreached
}

fn classify(
    levels: &[LadderLevel],
    q: f64,
    tol: f64,
) -> (QueryStatus, Vec<Option<Vec<f64>>>) {
    let vals: Vec<Option<Vec<f64>>> = levels
        .iter()
        .map(|lv| lv.trajectory.value_at(q))
        .collect();
    let j = levels.len() - 1;
    let finite = |v: &Option<Vec<f64>>| {
        v.as_ref()
            .map(|v| v.iter().all(|x| x.is_finite()))
            .unwrap_or(false)
    };
    if finite(&vals[j]) && finite(&vals[j - 1]) && finite(&vals[j - 2]) {
        let v_top = vals[j].as_ref().unwrap();
        let v_prev = vals[j - 1].as_ref().unwrap();
        if chordal_gap(v_top, v_prev) <= tol {
            let status = QueryStatus::Converged {
                value: v_top.clone(),
                err_est: abs_gap(v_top, v_prev),
            };
            return (status, vals);
        }
    }
    // Monotone growth across the last two levels: both ran past their
    // (escalating) radii before reaching q.
    if diverged_before(&levels[j].trajectory, q) && diverged_before(&levels[j - 1].trajectory, q) {
        return (QueryStatus::Diverged { level: j }, vals);
    }
    (QueryStatus::Undefined, vals)
}

/// Classify every query `x0 + i*spacing` in `[x0, x0 + T_max]`.
pub fn extract(
    ladder: &RefinementLadder,
    query_spacing: f64,
    tol: f64,
) -> Result<ShadowTable, SolverError> {
    if ladder.levels().len() < MIN_LEVELS {
        return Err(SolverError::InsufficientLadder {
            levels: ladder.levels().len(),
            required: MIN_LEVELS,
        });
    }
    let h0 = ladder.levels()[0].spec.h();
    if query_spacing.is_nan() || query_spacing < h0 {
        return Err(SolverError::Invalid(format!(
            "query spacing {query_spacing} must be at least the coarsest step {h0}"
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(SolverError::Invalid("tol must be positive".into()));
    }
    let x0 = ladder.x0();
    let t_max = ladder.t_max();
    let count = (t_max / query_spacing).floor() as usize;
    let sign = match ladder.levels()[0].trajectory.direction {
        crate::grid::Direction::Forward => 1.0,
        crate::grid::Direction::Backward => -1.0,
    };
    let mut queries = Vec::with_capacity(count + 1);
    let mut statuses = Vec::with_capacity(count + 1);
    let mut values = Vec::with_capacity(count + 1);
    for i in 0..=count {
        let q = x0 + sign * i as f64 * query_spacing;
        let (status, vals) = classify(ladder.levels(), q, tol);
        queries.push(q);
        statuses.push(status);
        values.push(vals);
    }
    Ok(ShadowTable {
        x0,
        spacing: query_spacing,
        tol,
        n_levels: ladder.levels().len(),
        queries,
        statuses,
        values,
    })
}

/// One certified sample of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: f64,
    pub value: Vec<f64>,
    pub err_est: f64,
}

/// Convergence certificate attached to a [`Solution`].
#[derive(Debug, Clone, Serialize)]
pub struct SolutionCertificate {
    /// Observed refinement order (median over queries); `inf` when the
    /// deltas vanish identically.
    pub order: f64,
    pub max_err_est: f64,
    pub tol: f64,
    pub levels: usize,
}

/// Certified continuous-limit object: the contiguous converged prefix from
/// the origin, the right-endpoint estimate, and the blow-up flag.
#[derive(Debug, Clone)]
pub struct Solution {
    pub dim: usize,
    pub x0: f64,
    /// Samples sorted by abscissa. One-sided solutions start at `x0`;
    /// two-sided solutions extend to the left of it.
    pub samples: Vec<Sample>,
    /// Right endpoint estimate (absolute abscissa); `+inf` when the horizon
    /// cap was reached without a boundary.
    pub a_est: f64,
    pub blow_up: bool,
    /// Left endpoint estimate for two-sided solutions.
    pub a_left_est: Option<f64>,
    pub blow_up_left: Option<bool>,
    /// Last query covered by the horizon (the T_max cap).
    pub horizon: f64,
    pub certificate: SolutionCertificate,
    /// Description of the perturbation rule that produced this solution.
    pub provenance: String,
}

impl Solution {
    /// Linear interpolation over the samples. `None` outside the sampled range.
    pub fn value_at(&self, x: f64) -> Option<Vec<f64>> {
        if self.samples.is_empty() {
            return None;
        }
        let first = self.samples.first().unwrap().x;
        let last = self.samples.last().unwrap().x;
        if x < first || x > last {
            return None;
        }
        let row = self.samples.partition_point(|s| s.x <= x);
        if row == 0 {
            return Some(self.samples[0].value.clone());
        }
        if row >= self.samples.len() {
            return Some(self.samples.last().unwrap().value.clone());
        }
        let (s0, s1) = (&self.samples[row - 1], &self.samples[row]);
        let t = if s1.x == s0.x {
            0.0
        } else {
            (x - s0.x) / (s1.x - s0.x)
        };
        Some(
            (0..self.dim)
                .map(|i| s0.value[i] + t * (s1.value[i] - s0.value[i]))
                .collect(),
        )
    }

    pub fn last_sample(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// JSON header line followed by CSV rows `q,y0,...,y{n-1},err_est`.
    pub fn to_csv(&self) -> String {
        let header = serde_json::json!({
            "a_est": if self.a_est.is_finite() { Some(self.a_est) } else { None },
            "blow_up": self.blow_up,
            "order": if self.certificate.order.is_finite() { Some(self.certificate.order) } else { None },
            "tol": self.certificate.tol,
            "levels": self.certificate.levels,
        });
        let mut out = format!("{header}\n");
        out.push('q');
        for i in 0..self.dim {
            out.push_str(&format!(",y{i}"));
        }
        out.push_str(",err_est\n");
        for s in &self.samples {
            out.push_str(&format!("{}", s.x));
            for v in &s.value {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{}\n", s.err_est));
        }
        out
    }
}

/// Take the maximal contiguous converged prefix containing the origin; the
/// right endpoint estimate is the midpoint between the last converged and
/// first non-converged query, blow-up when that boundary diverged.
pub fn close(table: &ShadowTable) -> Result<Solution, SolverError> {
    let origin = table
        .statuses
        .first()
        .ok_or_else(|| SolverError::Invalid("empty shadow table".into()))?;
    if !matches!(origin, QueryStatus::Converged { .. }) {
        return Err(SolverError::OriginDiverged);
    }
    let mut samples = Vec::new();
    let mut boundary: Option<usize> = None;
    for (i, status) in table.statuses.iter().enumerate() {
        match status {
            QueryStatus::Converged { value, err_est } => samples.push(Sample {
                x: table.queries[i],
                value: value.clone(),
                err_est: *err_est,
            }),
            _ => {
                boundary = Some(i);
                break;
            }
        }
    }
    let dim = samples[0].value.len();
    let (a_est, blow_up) = match boundary {
        None => (f64::INFINITY, false),
        Some(i) => {
            let mid = 0.5 * (table.queries[i - 1] + table.queries[i]);
            let diverged = matches!(table.statuses[i], QueryStatus::Diverged { .. });
            (mid, diverged)
        }
    };
    let order = estimate_order(table).unwrap_or(f64::NAN);
    let max_err_est = samples.iter().map(|s| s.err_est).fold(0.0f64, f64::max);
    Ok(Solution {
        dim,
        x0: table.x0,
        samples,
        a_est,
        blow_up,
        a_left_est: None,
        blow_up_left: None,
        horizon: *table.queries.last().unwrap(),
        certificate: SolutionCertificate {
            order,
            max_err_est,
            tol: table.tol,
            levels: table.n_levels,
        },
        provenance: String::new(),
    })
}

/// Median over converged queries of
/// `log2(|v_{J-1} - v_{J-2}| / |v_J - v_{J-1}|)`; approximately 1 for the
/// Euler construction. Queries whose deltas vanish are exact and excluded;
/// if every query is exact the sentinel `+inf` is returned.
pub fn estimate_order(table: &ShadowTable) -> Result<f64, SolverError> {
    if table.n_levels < MIN_LEVELS {
        return Err(SolverError::InsufficientLadder {
            levels: table.n_levels,
            required: MIN_LEVELS,
        });
    }
    let converged: Vec<usize> = table
        .statuses
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, QueryStatus::Converged { .. }))
        .map(|(i, _)| i)
        .collect();
    if converged.len() < 5 {
        return Err(SolverError::TooFewSamples {
            converged: converged.len(),
            required: 5,
        });
    }
    let j = table.n_levels - 1;
    let mut ratios = Vec::new();
    let mut saw_inexact = false;
    for &qi in &converged {
        let vals = &table.values[qi];
        let (Some(v2), Some(v1), Some(v0)) = (&vals[j], &vals[j - 1], &vals[j - 2]) else {
            continue;
        };
        let num = abs_gap(v1, v0);
        let den = abs_gap(v2, v1);
        if num == 0.0 && den == 0.0 {
            continue;
        }
        saw_inexact = true;
        if den == 0.0 {
            ratios.push(f64::INFINITY);
        } else if num > 0.0 {
            ratios.push((num / den).log2());
        }
    }
    if !saw_inexact {
        return Ok(f64::INFINITY);
    }
    if ratios.is_empty() {
        return Err(SolverError::TooFewSamples {
            converged: 0,
            required: 5,
        });
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = ratios.len();
    Ok(if n % 2 == 1 {
        ratios[n / 2]
    } else {
        0.5 * (ratios[n / 2 - 1] + ratios[n / 2])
    })
}

/// Sharpen the endpoint estimate by classifying bisection midpoints between
/// the last converged and first non-converged query.
pub fn refine_boundary(
    ladder: &RefinementLadder,
    solution: &mut Solution,
    passes: u32,
) {
    if !solution.a_est.is_finite() || solution.samples.is_empty() {
        return;
    }
    let tol = solution.certificate.tol;
    let mut lo = solution.samples.last().unwrap().x;
    let mut hi = 2.0 * solution.a_est - lo;
    for _ in 0..passes {
        let mid = 0.5 * (lo + hi);
        let (status, _) = classify(ladder.levels(), mid, tol);
        match status {
            QueryStatus::Converged { .. } => lo = mid,
            _ => hi = mid,
        }
    }
    solution.a_est = 0.5 * (lo + hi);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::VectorField;
    use crate::grid::{integrate, Perturbation};

    fn build_ladder(field_text: &str, y0: f64, n0: u64, n_levels: usize, t_max: f64, r0: f64) -> RefinementLadder {
        let field = VectorField::parse(field_text, 1).unwrap();
        let levels = (0..n_levels)
            .map(|j| {
                let spec = GridSpec::new(0.0, vec![y0], n0, j as u32, t_max).unwrap();
                let pert = Perturbation::zero();
                let radius = r0 * 4f64.powi(j as i32);
                let trajectory = integrate(&field, &spec, &pert, radius).unwrap();
                LadderLevel {
                    spec,
                    perturbation: pert,
                    trajectory,
                    escape_radius: radius,
                }
            })
            .collect();
        RefinementLadder::new(levels).unwrap()
    }

    #[test]
    fn zero_field_all_queries_converge_exactly() {
        let ladder = build_ladder("0", 0.0, 256, 4, 1.0, 1e6);
        let table = extract(&ladder, 0.0078125, 1e-4).unwrap();
        for s in &table.statuses {
            match s {
                QueryStatus::Converged { value, err_est } => {
                    assert_eq!(value[0], 0.0);
                    assert_eq!(*err_est, 0.0);
                }
                other => panic!("unexpected status {other:?}"),
            }
        }
        let sol = close(&table).unwrap();
        assert_eq!(sol.a_est, f64::INFINITY);
        assert!(!sol.blow_up);
        assert!(sol.certificate.order.is_infinite());
    }

    #[test]
    fn exponential_converges_to_e() {
        let ladder = build_ladder("y", 1.0, 1024, 5, 2.0, 1e6);
        let table = extract(&ladder, 0.0078125, 1e-3).unwrap();
        let sol = close(&table).unwrap();
        let v = sol.value_at(1.0).unwrap()[0];
        assert!((v - std::f64::consts::E).abs() <= 1e-3, "v = {v}");
        let at_one = sol.samples.iter().find(|s| s.x == 1.0).unwrap();
        assert!(at_one.err_est <= 1e-3);
    }

    #[test]
    fn blowup_splits_queries() {
        // y' = y^2 from 1: converged strictly below 1, diverged above
        let ladder = build_ladder("y*y", 1.0, 1024, 9, 2.0, 1e6);
        let table = extract(&ladder, 0.0078125, 1e-4).unwrap();
        for (q, s) in table.queries.iter().zip(&table.statuses) {
            if *q < 0.999 {
                assert!(
                    matches!(s, QueryStatus::Converged { .. }),
                    "q = {q} should converge, got {s:?}"
                );
            }
            if *q > 1.01 {
                assert!(
                    matches!(s, QueryStatus::Diverged { .. }),
                    "q = {q} should diverge, got {s:?}"
                );
            }
        }
        let sol = close(&table).unwrap();
        assert!(sol.blow_up);
        assert!((sol.a_est - 1.0).abs() < 0.02, "a_est = {}", sol.a_est);
    }

    #[test]
    fn estimate_order_is_first_order_for_euler() {
        let ladder = build_ladder("y", 1.0, 1024, 5, 2.0, 1e6);
        let table = extract(&ladder, 0.0078125, 1e-3).unwrap();
        let p = estimate_order(&table).unwrap();
        assert!((0.7..=1.3).contains(&p), "order = {p}");
    }

    #[test]
    fn estimate_order_quadrature_field() {
        let ladder = build_ladder("sin(x)", 0.0, 1024, 5, 2.0, 1e6);
        let table = extract(&ladder, 0.0078125, 1e-3).unwrap();
        let p = estimate_order(&table).unwrap();
        assert!((0.7..=1.3).contains(&p), "order = {p}");
    }

    #[test]
    fn insufficient_ladder_is_rejected() {
        let ladder = build_ladder("y", 1.0, 256, 2, 1.0, 1e6);
        assert!(matches!(
            extract(&ladder, 0.0078125, 1e-4),
            Err(SolverError::InsufficientLadder { levels: 2, .. })
        ));
    }

    #[test]
    fn degenerate_prefix_keeps_origin() {
        // Mix levels whose perturbations differ wildly so nothing past the
        // origin is Cauchy: use a sampled "perturbation" of huge amplitude at
        // the top level only. Simpler: tolerance so tight only the exact
        // origin passes.
        let ladder = build_ladder("y", 1.0, 256, 4, 1.0, 1e6);
        let table = extract(&ladder, 0.0078125, 1e-16).unwrap();
        let sol = close(&table).unwrap();
        assert_eq!(sol.samples.len(), 1);
        assert_eq!(sol.samples[0].x, 0.0);
        assert!((sol.a_est - 0.00390625).abs() < 1e-12);
        assert!(!sol.blow_up); // boundary is Undefined, not Diverged
    }

    #[test]
    fn shadow_consistency_between_adjacent_levels() {
        let ladder = build_ladder("y*y", 1.0, 1024, 5, 2.0, 1e6);
        let tol = 1e-3;
        let table = extract(&ladder, 0.0078125, tol).unwrap();
        let j = table.n_levels - 1;
        for (qi, s) in table.statuses.iter().enumerate() {
            if matches!(s, QueryStatus::Converged { .. }) {
                for lv in [j - 1, j] {
                    let (Some(a), Some(b)) = (&table.values[qi][lv - 1], &table.values[qi][lv])
                    else {
                        continue;
                    };
                    assert!(
                        chordal_gap(a, b) <= 2.0 * tol,
                        "levels {lv}: gap {} at q {}",
                        chordal_gap(a, b),
                        table.queries[qi]
                    );
                }
            }
        }
    }

    #[test]
    fn s_continuity_surrogate_within_certificate_window() {
        // |value(q) - value(q')| <= (M + 1) |q - q'| + 2 tol on the converged
        // prefix, with M from the bound certificate, inside its window.
        use crate::grid::check_bound;
        let field = VectorField::parse("y", 1).unwrap();
        let ladder = build_ladder("y", 1.0, 1024, 5, 2.0, 1e6);
        let tol = 1e-3;
        let table = extract(&ladder, 0.0078125, tol).unwrap();
        let sol = close(&table).unwrap();
        let cert = check_bound(&ladder.top().trajectory, 0, &field).unwrap();
        assert!(cert.satisfied);
        let window: Vec<&Sample> = sol
            .samples
            .iter()
            .filter(|s| s.x < cert.e)
            .collect();
        for a in &window {
            for b in &window {
                let gap = (a.value[0] - b.value[0]).abs();
                assert!(
                    gap <= (cert.m + 1.0) * (a.x - b.x).abs() + 2.0 * tol,
                    "surrogate violated between {} and {}",
                    a.x,
                    b.x
                );
            }
        }
        assert!(window.len() > 10, "window too small to be meaningful");
    }

    #[test]
    fn domain_monotonicity_under_refinement() {
        let coarse = build_ladder("y*y", 1.0, 1024, 5, 2.0, 1e6);
        let fine = build_ladder("y*y", 1.0, 1024, 6, 2.0, 1e6);
        let ta = extract(&coarse, 0.0078125, 1e-4).unwrap();
        let tb = extract(&fine, 0.0078125, 1e-4).unwrap();
        let prefix = |t: &ShadowTable| {
            t.statuses
                .iter()
                .take_while(|s| matches!(s, QueryStatus::Converged { .. }))
                .count()
        };
        let (pa, pb) = (prefix(&ta), prefix(&tb));
        assert!(pb + 1 >= pa, "prefix shrank from {pa} to {pb}");
    }

    #[test]
    fn refine_boundary_sharpens_a_est() {
        let ladder = build_ladder("y*y", 1.0, 1024, 9, 2.0, 1e6);
        let table = extract(&ladder, 0.0078125, 1e-4).unwrap();
        let mut sol = close(&table).unwrap();
        let coarse_est = sol.a_est;
        refine_boundary(&ladder, &mut sol, 4);
        assert!((sol.a_est - 1.0).abs() <= (coarse_est - 1.0).abs() + 1e-12);
    }
}
