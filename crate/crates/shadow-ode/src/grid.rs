//! The perturbed Euler recursion on one fixed dyadic grid, plus the local
//! Lipschitz-type bound certificate.
//!
//! The step count N is a power of two, so h = 1/N and every abscissa
//! `x_k = x0 + k*h` is computed with at most one rounding (k*h itself is
//! exact below 2^53). The recursion
//!
//! ```text
//! y_{k+1} = y_k + (F(x_k, y_k) + eps_k) * h
//! ```
//!
//! is evaluated in a fixed operation order, so replaying a spec and
//! perturbation reproduces the stored trajectory bit for bit.

use crate::error::{DomainError, SolverError};
use crate::expr::{EvalStatus, VectorField};

/// Stored steps are thinned once a trajectory would exceed this many rows.
pub const FULL_STORAGE_LIMIT: u64 = 1 << 24;

/// Additive slack absorbing floating-point rounding in certificate checks.
pub const BOUND_SLACK: f64 = 1.0 / (1u64 << 40) as f64;

/// Default probe-rectangle half-widths for [`check_bound`].
pub const DEFAULT_BOUND_C: f64 = 1.0;
pub const DEFAULT_BOUND_D: f64 = 1.0;

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// One fixed grid: N = N0 * 2^level steps per unit, horizon capped by both
/// `t_max` and the paper-scale extent N^2.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GridSpec {
    pub x0: f64,
    pub y0: Vec<f64>,
    pub n0: u64,
    pub level: u32,
    pub t_max: f64,
    pub k_max: u64,
    pub store_stride: u64,
}

impl GridSpec {
    pub fn new(
        x0: f64,
        y0: Vec<f64>,
        n0: u64,
        level: u32,
        t_max: f64,
    ) -> Result<GridSpec, SolverError> {
        if !n0.is_power_of_two() {
            return Err(SolverError::Invalid(format!(
                "N0 = {n0} is not a power of two"
            )));
        }
        if level > 40 || n0.leading_zeros() < level {
            return Err(SolverError::Invalid(format!(
                "refinement level {level} overflows the step count"
            )));
        }
        if !t_max.is_finite() || t_max <= 0.0 {
            return Err(SolverError::Invalid(format!("T_max = {t_max} must be positive")));
        }
        if !x0.is_finite() || x0 < 0.0 {
            return Err(SolverError::Invalid(format!(
                "x0 = {x0} must be finite and nonnegative"
            )));
        }
        if y0.is_empty() || y0.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Invalid("y0 must be nonempty and finite".into()));
        }
        let n = n0 << level;
        let budget = (t_max * n as f64).ceil() as u64;
        let k_max = n.saturating_mul(n).min(budget);
        let store_stride = (k_max / FULL_STORAGE_LIMIT).max(1).next_power_of_two();
        Ok(GridSpec {
            x0,
            y0,
            n0,
            level,
            t_max,
            k_max,
            store_stride,
        })
    }

    /// Steps per unit length.
    pub fn n(&self) -> u64 {
        self.n0 << self.level
    }

    /// Step size, an exact power of two.
    pub fn h(&self) -> f64 {
        1.0 / self.n() as f64
    }

    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    pub fn x_at(&self, k: u64) -> f64 {
        self.x0 + k as f64 * self.h()
    }
}

/// A realized per-step perturbation sequence.
#[derive(Debug, Clone, serde::Serialize)]
pub enum PerturbationRule {
    Zero,
    Constant(f64),
    /// Realized draws, row-major `k * dim + component`.
    Sampled { values: Vec<f64> },
    /// Recovered sequence plus the mean-value abscissas `t_k`.
    Recorded { values: Vec<f64>, abscissas: Vec<f64> },
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Perturbation {
    rule: PerturbationRule,
    eps_max: f64,
}

impl Perturbation {
    pub fn zero() -> Perturbation {
        Perturbation {
            rule: PerturbationRule::Zero,
            eps_max: 0.0,
        }
    }

    pub fn constant(c: f64) -> Perturbation {
        Perturbation {
            rule: PerturbationRule::Constant(c),
            eps_max: c.abs(),
        }
    }

    pub fn sampled(values: Vec<f64>) -> Perturbation {
        let eps_max = norm_inf(&values);
        Perturbation {
            rule: PerturbationRule::Sampled { values },
            eps_max,
        }
    }

    pub fn recorded(values: Vec<f64>, abscissas: Vec<f64>) -> Perturbation {
        let eps_max = norm_inf(&values);
        Perturbation {
            rule: PerturbationRule::Recorded { values, abscissas },
            eps_max,
        }
    }

    /// Supremum norm of the realized sequence.
    pub fn eps_max(&self) -> f64 {
        self.eps_max
    }

    pub fn rule(&self) -> &PerturbationRule {
        &self.rule
    }

    #[inline]
    pub(crate) fn value(&self, k: u64, component: usize, dim: usize) -> f64 {
        match &self.rule {
            PerturbationRule::Zero => 0.0,
            PerturbationRule::Constant(c) => *c,
            PerturbationRule::Sampled { values } | PerturbationRule::Recorded { values, .. } => {
                values
                    .get(k as usize * dim + component)
                    .copied()
                    .unwrap_or(0.0)
            }
        }
    }

    pub fn describe(&self) -> String {
        match &self.rule {
            PerturbationRule::Zero => "zero".into(),
            PerturbationRule::Constant(c) => format!("const:{c}"),
            PerturbationRule::Sampled { .. } => format!("sampled(eps_max={})", self.eps_max),
            PerturbationRule::Recorded { .. } => format!("recorded(eps_max={})", self.eps_max),
        }
    }
}

/// Why a trajectory stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    /// Ran to `k_max`.
    BudgetExhausted,
    /// First index with `|y_k|_inf > R`; the radius is recorded.
    Escaped(f64),
    /// Field evaluation overflowed or the state left the finite range.
    NonFinite,
    /// Field evaluation left its real domain at the recorded step.
    DomainError { step: u64, error: DomainError },
}

/// Integration direction. Backward runs the mirrored recursion
/// `y_{k+1} = y_k - (F(x_k, y_k) + eps_k) * h` with `x_k = x0 - k*h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// One discrete orbit at a fixed step together with its perturbation and the
/// reason it stopped. Indices `0..=k_stop` satisfy the recursion invariant.
#[derive(Debug, Clone)]
pub struct EulerTrajectory {
    pub spec: GridSpec,
    pub perturbation: Perturbation,
    pub direction: Direction,
    ks: Vec<u64>,
    xs: Vec<f64>,
    ys: Vec<f64>, // row-major stored_rows x dim
    pub k_stop: u64,
    pub stop_reason: StopReason,
}

impl EulerTrajectory {
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Number of stored rows.
    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }

    pub fn stored_k(&self, row: usize) -> u64 {
        self.ks[row]
    }

    pub fn x(&self, row: usize) -> f64 {
        self.xs[row]
    }

    pub fn y(&self, row: usize) -> &[f64] {
        let d = self.dim();
        &self.ys[row * d..(row + 1) * d]
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn last_x(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn last_y(&self) -> &[f64] {
        self.y(self.len() - 1)
    }

    /// Signed span from `x0` to the stopping abscissa.
    pub fn covered_to(&self) -> f64 {
        self.last_x()
    }

    /// Locate the stored row bracketing `x` and linearly interpolate. Returns
    /// `None` outside the covered range.
    pub fn value_at(&self, x: f64) -> Option<Vec<f64>> {
        let d = self.dim();
        let (lo, hi) = match self.direction {
            Direction::Forward => (self.spec.x0, self.last_x()),
            Direction::Backward => (self.last_x(), self.spec.x0),
        };
        if x < lo || x > hi {
            return None;
        }
        // xs is monotone (increasing forward, decreasing backward)
        let row = match self.direction {
            Direction::Forward => self.xs.partition_point(|&v| v <= x),
            Direction::Backward => self.xs.partition_point(|&v| v >= x),
        };
        if row == 0 {
            return Some(self.y(0).to_vec());
        }
        if row >= self.len() {
            return Some(self.y(self.len() - 1).to_vec());
        }
        let (x0, x1) = (self.xs[row - 1], self.xs[row]);
        let t = if x1 == x0 { 0.0 } else { (x - x0) / (x1 - x0) };
        let (a, b) = (self.y(row - 1), self.y(row));
        Some((0..d).map(|i| a[i] + t * (b[i] - a[i])).collect())
    }

    /// CSV dump: header `k,x,y0,...,y{n-1}`, one row per stored step.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::from("k,x");
        for i in 0..d {
            out.push_str(&format!(",y{i}"));
        }
        out.push('\n');
        for row in 0..self.len() {
            out.push_str(&format!("{},{}", self.ks[row], self.xs[row]));
            for v in self.y(row) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Run the perturbed Euler recursion until escape, budget exhaustion, or a
/// non-finite/domain-error evaluation.
pub fn integrate(
    field: &VectorField,
    spec: &GridSpec,
    pert: &Perturbation,
    escape_radius: f64,
) -> Result<EulerTrajectory, SolverError> {
    integrate_directed(field, spec, pert, escape_radius, Direction::Forward)
}

pub fn integrate_directed(
    field: &VectorField,
    spec: &GridSpec,
    pert: &Perturbation,
    escape_radius: f64,
    direction: Direction,
) -> Result<EulerTrajectory, SolverError> {
    let dim = spec.dim();
    if field.dim() != dim {
        return Err(SolverError::Invalid(format!(
            "field dimension {} does not match y0 dimension {dim}",
            field.dim()
        )));
    }
    if escape_radius.is_nan() || escape_radius <= norm_inf(&spec.y0) {
        return Err(SolverError::Invalid(format!(
            "escape radius {escape_radius} must exceed |y0|_inf"
        )));
    }
    let h = spec.h();
    let signed_h = match direction {
        Direction::Forward => h,
        Direction::Backward => -h,
    };
    let stride = spec.store_stride;
    let mut ks: Vec<u64> = Vec::new();
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut y = spec.y0.clone();
    let mut f = vec![0.0; dim];
    let store = |k: u64, y: &[f64], ks: &mut Vec<u64>, xs: &mut Vec<f64>, ys: &mut Vec<f64>| {
        if ks.last() == Some(&k) {
            return;
        }
        ks.push(k);
        xs.push(spec.x0 + k as f64 * signed_h);
        ys.extend_from_slice(y);
    };

    let mut k = 0u64;
    let (k_stop, stop_reason) = loop {
        if k.is_multiple_of(stride) {
            store(k, &y, &mut ks, &mut xs, &mut ys);
        }
        if norm_inf(&y) > escape_radius {
            break (k, StopReason::Escaped(escape_radius));
        }
        if k == spec.k_max {
            break (k, StopReason::BudgetExhausted);
        }
        let x = spec.x0 + k as f64 * signed_h;
        match field.eval_into(x, &y, &mut f) {
            Err(e) => break (k, StopReason::DomainError { step: k, error: e }),
            Ok(EvalStatus::Overflow) => break (k, StopReason::NonFinite),
            Ok(EvalStatus::Finite) => {}
        }
        for i in 0..dim {
            y[i] += (f[i] + pert.value(k, i, dim)) * signed_h;
        }
        k += 1;
        if !y.iter().all(|v| v.is_finite()) {
            break (k, StopReason::NonFinite);
        }
    };
    store(k_stop, &y, &mut ks, &mut xs, &mut ys);

    Ok(EulerTrajectory {
        spec: spec.clone(),
        perturbation: pert.clone(),
        direction,
        ks,
        xs,
        ys,
        k_stop,
        stop_reason,
    })
}

/// Certificate for the bound `|y_k - y_l|_inf <= (M + eps) * |x_k - x_l|`
/// over a window around an anchor point.
#[derive(Debug, Clone)]
pub struct BoundCertificate {
    pub anchor_k: u64,
    /// Sampled rectangle in x.
    pub x_lo: f64,
    pub x_hi: f64,
    pub center_y: Vec<f64>,
    pub d: f64,
    pub e: f64,
    pub m: f64,
    pub satisfied: bool,
    /// First grid index violating containment or the pairwise bound.
    pub violation: Option<u64>,
}

/// [`check_bound_in`] with the default probe rectangle.
pub fn check_bound(
    traj: &EulerTrajectory,
    anchor: u64,
    field: &VectorField,
) -> Result<BoundCertificate, SolverError> {
    check_bound_in(traj, anchor, field, DEFAULT_BOUND_C, DEFAULT_BOUND_D)
}

/// Sample `|F|` on the rectangle `[x_p - c, x_p + c] x prod [y_i - d, y_i + d]`
/// (backward reach only when `x_p > x0`), inflate the sampled maximum by 1.05
/// to get M, set `e = min(c, d / (M + 1))`, then verify containment and the
/// pairwise bound over every stored index with `x` in the window, forward and
/// backward. A violation is reported in the certificate, not as an error.
pub fn check_bound_in(
    traj: &EulerTrajectory,
    anchor: u64,
    field: &VectorField,
    c: f64,
    d: f64,
) -> Result<BoundCertificate, SolverError> {
    if anchor >= traj.k_stop && traj.k_stop > 0 {
        return Err(SolverError::AnchorOutOfRange {
            anchor,
            k_stop: traj.k_stop,
        });
    }
    if c.is_nan() || d.is_nan() || c <= 0.0 || d <= 0.0 {
        return Err(SolverError::Invalid("c and d must be positive".into()));
    }
    let dim = traj.dim();
    // nearest stored row at or below the anchor index
    let row = match traj.ks.binary_search(&anchor) {
        Ok(r) => r,
        Err(r) => r.saturating_sub(1),
    };
    let x_p = traj.x(row);
    let y_p = traj.y(row).to_vec();
    let x0 = traj.spec.x0;

    let c_back = if x_p > x0 { c.min(x_p - x0) } else { 0.0 };
    let x_lo = x_p - c_back;
    let x_hi = x_p + c;

    // lattice sampling of |F| over the rectangle
    let per_axis: usize = match dim {
        0..=2 => 65,
        3 => 17,
        _ => 9,
    };
    let mut m_sampled = 0.0f64;
    let mut probe = vec![0.0; dim];
    let mut f = vec![0.0; dim];
    let mut idx = vec![0usize; dim];
    'outer: loop {
        for ix in 0..per_axis {
            let x = x_lo + (x_hi - x_lo) * ix as f64 / (per_axis - 1) as f64;
            for ((p, &ii), y_c) in probe.iter_mut().zip(&idx).zip(&y_p) {
                *p = y_c - d + 2.0 * d * ii as f64 / (per_axis - 1) as f64;
            }
            match field.eval_into(x, &probe, &mut f) {
                Err(e) => return Err(SolverError::domain(None, e)),
                Ok(EvalStatus::Overflow) => {
                    m_sampled = f64::INFINITY;
                }
                Ok(EvalStatus::Finite) => {
                    m_sampled = m_sampled.max(norm_inf(&f));
                }
            }
        }
        // odometer over the y-axes
        let mut axis = 0;
        loop {
            if axis == dim {
                break 'outer;
            }
            idx[axis] += 1;
            if idx[axis] < per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
    let m = 1.05 * m_sampled;
    let e = c.min(d / (m + 1.0));
    let eps = traj.perturbation.eps_max();

    // window of stored rows: x in (x_p - e, x_p + e) intersected with coverage
    let win_lo = if x_p > x0 { x_p - e } else { x_p };
    let win_hi = x_p + e;
    let rows: Vec<usize> = (0..traj.len())
        .filter(|&r| {
            let x = traj.x(r);
            (x > win_lo || (x == x_p && win_lo == x_p)) && x < win_hi
        })
        .collect();

    let mut satisfied = true;
    let mut violation = None;

    // containment in the rectangle
    for &r in &rows {
        let mut dev = 0.0f64;
        for (v, c) in traj.y(r).iter().zip(&y_p) {
            dev = dev.max((v - c).abs());
        }
        if dev > d {
            satisfied = false;
            violation = Some(traj.stored_k(r));
            break;
        }
    }

    // pairwise bound: adjacent rows, plus an even long-range subsample
    if satisfied {
        let limit = m + eps;
        let check_pair = |ra: usize, rb: usize| -> Option<u64> {
            let gap = (traj.x(ra) - traj.x(rb)).abs();
            let mut dev = 0.0f64;
            for i in 0..dim {
                dev = dev.max((traj.y(ra)[i] - traj.y(rb)[i]).abs());
            }
            if dev > limit * gap + BOUND_SLACK {
                Some(traj.stored_k(rb))
            } else {
                None
            }
        };
        'bound: {
            for w in rows.windows(2) {
                if let Some(k) = check_pair(w[0], w[1]) {
                    satisfied = false;
                    violation = Some(k);
                    break 'bound;
                }
            }
            let stride = (rows.len() / 256).max(1);
            let subsample: Vec<usize> = rows.iter().step_by(stride).copied().collect();
            for (i, &ra) in subsample.iter().enumerate() {
                for &rb in &subsample[i + 1..] {
                    if let Some(k) = check_pair(ra, rb) {
                        satisfied = false;
                        violation = Some(k);
                        break 'bound;
                    }
                }
            }
        }
    }

    Ok(BoundCertificate {
        anchor_k: traj.stored_k(row),
        x_lo,
        x_hi,
        center_y: y_p,
        d,
        e,
        m,
        satisfied,
        violation,
    })
}
