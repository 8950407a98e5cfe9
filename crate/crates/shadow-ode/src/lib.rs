//! Numerical ODE initial-value toolkit built on perturbation-parameterized
//! Euler integration over dyadic refinement ladders.
//!
//! The pieces:
//!
//! - [`expr`]: parse and evaluate right-hand sides `F(x, y0..y{n-1})`,
//!   scalar integrands, and closed-form curves.
//! - [`grid`]: the perturbed Euler recursion
//!   `y_{k+1} = y_k + (F(x_k, y_k) + eps_k) * h` on one fixed grid with
//!   `h = 1/N`, `N` a power of two, plus local Lipschitz-bound certificates.
//! - [`quad`]: left-endpoint Riemann sums on the absolute lattice `x_i = i*h`
//!   with a doubling convergence certificate.
//! - [`shadow`]: collapse a ladder of trajectories at `h_j -> 0` into one
//!   certified solution, classifying each dyadic query as converged,
//!   diverged, or undefined — with blow-up localization.
//! - [`peano`]: the global solver (ladder build, extraction, closing) and the
//!   integral-identity residual check.
//! - [`perturb`]: recover the per-step perturbation realizing a known
//!   closed-form solution, verify the round trip, and sweep rule families to
//!   explore solution funnels.
//! - [`osgood`]: maximal and minimal solutions via superequations
//!   `z' = F ± eps` with a decreasing epsilon ladder and continuation gluing.
//!
//! Everything is deterministic: identical configurations produce
//! bit-identical trajectories, solutions, and CSV dumps.

pub mod error;
pub mod expr;
pub mod grid;
pub mod osgood;
pub mod peano;
pub mod perturb;
pub mod quad;
pub mod shadow;

pub use error::{DomainError, ParseError, SolverError};
pub use expr::{Curve, EvalStatus, Expression, VectorField};
pub use grid::{
    check_bound, check_bound_in, integrate, BoundCertificate, EulerTrajectory, GridSpec,
    Perturbation, StopReason,
};
pub use osgood::{
    domination_check, epsilon_ladder, maximal, minimal, solve_super, EpsilonLadder, Flavor,
    MaximalSolution,
};
pub use peano::{residual_check, solve_global, RuleSpec, SolveOptions};
pub use perturb::{funnel, recover, verify_roundtrip, FunnelResult, KnownSolution};
pub use quad::{integrate_certified, riemann_sum, QuadCertificate, RiemannSpec};
pub use shadow::{
    close, estimate_order, extract, QueryStatus, RefinementLadder, Sample, ShadowTable, Solution,
};
