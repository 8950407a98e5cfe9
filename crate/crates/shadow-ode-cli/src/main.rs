//! Batch front end: parses flags or a config file, runs the named pipeline,
//! writes CSV tables and SVG plots, and prints a one-line JSON summary to
//! standard output.
//!
//! Exit codes: 0 success, 2 validation error, 4 domain error, 3 any other
//! numerical failure.

mod config;
mod svg;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use shadow_ode::expr::{Curve, VectorField};
use shadow_ode::grid::{check_bound, integrate, GridSpec, PerturbationRule};
use shadow_ode::peano::{residual_check, solve_global};
use shadow_ode::perturb::{funnel, recover, verify_roundtrip, KnownSolution};
use shadow_ode::quad::integrate_certified;
use shadow_ode::shadow::Solution;
use shadow_ode::{maximal, minimal, Expression, SolverError};

use config::RunConfig;
use svg::Series;

#[derive(Parser)]
#[command(name = "shadow-ode", version, about = "Euler-ladder ODE toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an initial value problem globally under a perturbation rule
    Solve(CommonArgs),
    /// Maximal (or --minimal) solution via the superequation epsilon ladder
    Osgood(CommonArgs),
    /// One solve per --pert rule; cluster the resulting solutions
    Funnel(CommonArgs),
    /// Recover the perturbation realizing a known closed-form solution
    Recover(CommonArgs),
    /// Certified lattice integral of a scalar integrand
    Integrate(CommonArgs),
    /// Integrate one trajectory and verify the local bound certificate
    Check(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Osgood(_) => "osgood",
            Command::Funnel(_) => "funnel",
            Command::Recover(_) => "recover",
            Command::Integrate(_) => "integrate",
            Command::Check(_) => "check",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Solve(a)
            | Command::Osgood(a)
            | Command::Funnel(a)
            | Command::Recover(a)
            | Command::Integrate(a)
            | Command::Check(a) => a,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Right-hand side F(x, y0..y{n-1}), semicolon-separated components
    #[arg(long)]
    field: Option<String>,
    /// State dimension
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    /// Comma-separated initial state
    #[arg(long, allow_hyphen_values = true)]
    y0: Option<String>,
    /// Horizon length from x0
    #[arg(long)]
    tmax: Option<f64>,
    /// Coarsest step count per unit (power of two)
    #[arg(long)]
    n0: Option<u64>,
    /// Ladder refinements J (levels 0..=J)
    #[arg(long)]
    refinements: Option<u32>,
    #[arg(long)]
    tol: Option<f64>,
    /// Query spacing of the sample grid
    #[arg(long)]
    spacing: Option<f64>,
    /// Perturbation rule `zero` or `const:<v>`; repeat for funnel
    #[arg(long, allow_hyphen_values = true)]
    pert: Vec<String>,
    #[arg(long)]
    two_sided: bool,
    /// Base epsilon of the osgood ladder
    #[arg(long)]
    eps0: Option<f64>,
    /// Number of epsilon halvings of the osgood ladder
    #[arg(long)]
    jeps: Option<u32>,
    /// Compute the minimal instead of the maximal solution
    #[arg(long)]
    minimal: bool,
    /// Known solution y(x) for recover, semicolon-separated components
    #[arg(long)]
    known: Option<String>,
    /// Derivative y'(x) of the known solution
    #[arg(long)]
    known_prime: Option<String>,
    /// Right end of the known solution's domain [0, c] (default tmax)
    #[arg(long)]
    known_c: Option<f64>,
    /// Integrand for `integrate`
    #[arg(long)]
    f: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    /// Random sample pairs for the residual check
    #[arg(long)]
    pairs: Option<usize>,
    /// Anchor abscissa for `check`
    #[arg(long, allow_hyphen_values = true)]
    anchor: Option<f64>,
    /// CSV output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG plot output path
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Load a config JSON; explicit flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the resolved config JSON and continue
    #[arg(long)]
    dump_config: Option<PathBuf>,
}

impl CommonArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), SolverError> {
        if let Some(v) = &self.field {
            cfg.field = v.clone();
        }
        if let Some(v) = self.dim {
            cfg.dim = v;
        }
        if let Some(v) = self.x0 {
            cfg.x0 = v;
        }
        if let Some(v) = &self.y0 {
            cfg.y0 = v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| SolverError::Invalid(format!("bad y0 component `{s}`")))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            if self.dim.is_none() && cfg.y0.len() != cfg.dim {
                cfg.dim = cfg.y0.len();
            }
        }
        if let Some(v) = self.tmax {
            cfg.t_max = v;
        }
        if let Some(v) = self.n0 {
            cfg.n0 = v;
        }
        if let Some(v) = self.refinements {
            cfg.refinements = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.spacing {
            cfg.spacing = v;
        }
        if !self.pert.is_empty() {
            cfg.pert = self.pert.clone();
        }
        if self.two_sided {
            cfg.two_sided = true;
        }
        if let Some(v) = self.eps0 {
            cfg.eps0 = v;
        }
        if let Some(v) = self.jeps {
            cfg.jeps = v;
        }
        if self.minimal {
            cfg.minimal = true;
        }
        if let Some(v) = &self.known {
            cfg.known = Some(v.clone());
        }
        if let Some(v) = &self.known_prime {
            cfg.known_prime = Some(v.clone());
        }
        if let Some(v) = self.known_c {
            cfg.known_c = Some(v);
        }
        if let Some(v) = &self.f {
            cfg.f = Some(v.clone());
        }
        if let Some(v) = self.a {
            cfg.a = v;
        }
        if let Some(v) = self.b {
            cfg.b = v;
        }
        if let Some(v) = self.pairs {
            cfg.pairs = v;
        }
        if let Some(v) = self.anchor {
            cfg.anchor = v;
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = &self.svg {
            cfg.svg = Some(v.clone());
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("SHADOW_ODE_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("shadow-ode: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &SolverError) -> u8 {
    match err {
        SolverError::Domain { .. } => 4,
        SolverError::Parse(_)
        | SolverError::Invalid(_)
        | SolverError::SystemsUnsupported { .. }
        | SolverError::KnownSolutionMismatch { .. }
        | SolverError::AnchorOutOfRange { .. } => 2,
        SolverError::NoConvergence { .. }
        | SolverError::OriginDiverged
        | SolverError::LadderNonMonotone { .. }
        | SolverError::InsufficientLadder { .. }
        | SolverError::TooFewSamples { .. }
        | SolverError::NoMeanValuePoint { .. } => 3,
    }
}

fn run(command: &Command) -> Result<(), SolverError> {
    let args = command.args();
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| SolverError::Invalid(format!("cannot read config: {e}")))?;
            let cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| SolverError::Invalid(format!("bad config JSON: {e}")))?;
            if !cfg.command.is_empty() && cfg.command != command.name() {
                return Err(SolverError::Invalid(format!(
                    "config was dumped by `{}`, not `{}`",
                    cfg.command,
                    command.name()
                )));
            }
            cfg
        }
        None => RunConfig::default(),
    };
    cfg.command = command.name().to_string();
    args.apply(&mut cfg)?;
    if let Some(path) = &args.dump_config {
        let text = serde_json::to_string_pretty(&cfg)
            .map_err(|e| SolverError::Invalid(format!("config serialization: {e}")))?;
        fs::write(path, text)
            .map_err(|e| SolverError::Invalid(format!("cannot write config: {e}")))?;
    }
    match command {
        Command::Solve(_) => run_solve(&cfg),
        Command::Osgood(_) => run_osgood(&cfg),
        Command::Funnel(_) => run_funnel(&cfg),
        Command::Recover(_) => run_recover(&cfg),
        Command::Integrate(_) => run_integrate(&cfg),
        Command::Check(_) => run_check(&cfg),
    }
}

fn fin(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn write_out(path: &Option<PathBuf>, contents: &str) -> Result<(), SolverError> {
    if let Some(path) = path {
        fs::write(path, contents)
            .map_err(|e| SolverError::Invalid(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn solution_series(sol: &Solution, label_prefix: &str) -> Vec<Series> {
    (0..sol.dim)
        .map(|c| Series {
            label: if label_prefix.is_empty() {
                format!("y{c}")
            } else {
                format!("{label_prefix} y{c}")
            },
            points: sol.samples.iter().map(|s| (s.x, s.value[c])).collect(),
        })
        .collect()
}

fn run_solve(cfg: &RunConfig) -> Result<(), SolverError> {
    cfg.validate()?;
    let field = VectorField::parse(&cfg.field, cfg.dim)?;
    let opts = cfg.solve_options()?;
    let sol = solve_global(&field, cfg.x0, &cfg.y0, &opts)?;
    let max_residual = if sol.samples.len() >= 2 {
        residual_check(&sol, &field, cfg.pairs)?
    } else {
        0.0
    };
    write_out(&cfg.out, &sol.to_csv())?;
    if let Some(path) = &cfg.svg {
        let series = solution_series(&sol, &sol.provenance);
        write_out(
            &Some(path.clone()),
            &svg::render(&series, &format!("solve: {}", cfg.field)),
        )?;
    }
    let summary = json!({
        "command": "solve",
        "a_est": fin(sol.a_est),
        "blow_up": sol.blow_up,
        "a_left_est": sol.a_left_est.and_then(fin),
        "order": fin(sol.certificate.order),
        "max_err_est": fin(sol.certificate.max_err_est),
        "max_residual": fin(max_residual),
        "samples": sol.samples.len(),
        "provenance": sol.provenance,
    });
    println!("{summary}");
    Ok(())
}

fn run_osgood(cfg: &RunConfig) -> Result<(), SolverError> {
    cfg.validate()?;
    let field = VectorField::parse(&cfg.field, cfg.dim)?;
    let opts = cfg.solve_options()?;
    if cfg.x0 != 0.0 {
        return Err(SolverError::Invalid(
            "the osgood construction starts at x0 = 0".into(),
        ));
    }
    let result = if cfg.minimal {
        minimal(&field, &cfg.y0, cfg.eps0, cfg.jeps, &opts)?
    } else {
        maximal(&field, &cfg.y0, cfg.eps0, cfg.jeps, &opts)?
    };
    write_out(&cfg.out, &result.solution.to_csv())?;
    if let Some(path) = &cfg.svg {
        let series = solution_series(&result.solution, &result.solution.provenance);
        write_out(
            &Some(path.clone()),
            &svg::render(&series, &format!("osgood: {}", cfg.field)),
        )?;
    }
    let summary = json!({
        "command": "osgood",
        "flavor": if cfg.minimal { "minimal" } else { "maximal" },
        "a_est": fin(result.solution.a_est),
        "blow_up": result.solution.blow_up,
        "order": fin(result.solution.certificate.order),
        "segments": result.segments.len(),
        "domination_margin": fin(result.domination_margin),
        "fully_resolved": result.fully_resolved,
        "samples": result.solution.samples.len(),
    });
    println!("{summary}");
    Ok(())
}

fn run_funnel(cfg: &RunConfig) -> Result<(), SolverError> {
    cfg.validate()?;
    let field = VectorField::parse(&cfg.field, cfg.dim)?;
    let opts = cfg.solve_options()?;
    let rules = cfg.rules()?;
    let result = funnel(&field, &cfg.y0, &rules, &opts)?;
    if cfg.out.is_some() {
        let mut csv = String::from("solution,rule,q");
        for c in 0..cfg.dim {
            csv.push_str(&format!(",y{c}"));
        }
        csv.push_str(",err_est\n");
        for (i, sol) in result.solutions.iter().enumerate() {
            for s in &sol.samples {
                csv.push_str(&format!("{i},{},{}", sol.provenance, s.x));
                for v in &s.value {
                    csv.push_str(&format!(",{v}"));
                }
                csv.push_str(&format!(",{}\n", s.err_est));
            }
        }
        write_out(&cfg.out, &csv)?;
    }
    if let Some(path) = &cfg.svg {
        let mut series = Vec::new();
        for sol in &result.solutions {
            series.extend(solution_series(sol, &sol.provenance));
        }
        write_out(
            &Some(path.clone()),
            &svg::render(&series, &format!("funnel: {}", cfg.field)),
        )?;
    }
    let summary = json!({
        "command": "funnel",
        "solutions": result.solutions.len(),
        "clusters": result.clusters,
        "a_est": result.solutions.iter().map(|s| fin(s.a_est)).collect::<Vec<_>>(),
        "blow_up": result.solutions.iter().map(|s| s.blow_up).collect::<Vec<_>>(),
        "rules": result.solutions.iter().map(|s| s.provenance.clone()).collect::<Vec<_>>(),
    });
    println!("{summary}");
    Ok(())
}

fn run_recover(cfg: &RunConfig) -> Result<(), SolverError> {
    cfg.validate()?;
    let field = VectorField::parse(&cfg.field, cfg.dim)?;
    let known_text = cfg
        .known
        .as_deref()
        .ok_or_else(|| SolverError::Invalid("recover needs --known".into()))?;
    let prime_text = cfg
        .known_prime
        .as_deref()
        .ok_or_else(|| SolverError::Invalid("recover needs --known-prime".into()))?;
    let c = cfg.known_c.unwrap_or(cfg.t_max);
    let known = KnownSolution::new(
        Curve::parse(known_text, cfg.dim)?,
        Curve::parse(prime_text, cfg.dim)?,
        c,
    )?;
    let spec = GridSpec::new(cfg.x0, cfg.y0.clone(), cfg.n0, 0, cfg.t_max)?;
    let pert = recover(&field, &known, &spec)?;
    let max_dev = verify_roundtrip(&field, &known, &pert, &spec)?;
    if cfg.out.is_some() {
        let mut csv = String::from("k,x,t,eps\n");
        if let PerturbationRule::Recorded { values, abscissas } = pert.rule() {
            for (k, (eps, t)) in values.iter().zip(abscissas).enumerate() {
                csv.push_str(&format!("{k},{},{t},{eps}\n", spec.x_at(k as u64)));
            }
        }
        write_out(&cfg.out, &csv)?;
    }
    let summary = json!({
        "command": "recover",
        "eps_max": pert.eps_max(),
        "max_dev": max_dev,
        "steps": spec.k_max,
        "c": c,
    });
    println!("{summary}");
    Ok(())
}

fn run_integrate(cfg: &RunConfig) -> Result<(), SolverError> {
    let f_text = cfg
        .f
        .as_deref()
        .ok_or_else(|| SolverError::Invalid("integrate needs --f".into()))?;
    let f = Expression::parse_scalar(f_text)?;
    if cfg.tol.is_nan() || cfg.tol <= 0.0 {
        return Err(SolverError::Invalid("tol must be positive".into()));
    }
    let (value, cert) = integrate_certified(&f, cfg.a, cfg.b, cfg.tol)?;
    let summary = json!({
        "command": "integrate",
        "value": value,
        "levels": cert.levels,
        "deltas": cert.deltas,
        "order": cert.observed_order().and_then(fin),
    });
    println!("{summary}");
    Ok(())
}

fn run_check(cfg: &RunConfig) -> Result<(), SolverError> {
    cfg.validate()?;
    let field = VectorField::parse(&cfg.field, cfg.dim)?;
    let spec = GridSpec::new(cfg.x0, cfg.y0.clone(), cfg.n0, cfg.refinements, cfg.t_max)?;
    let radius = cfg.escape_r0 * 4f64.powi(cfg.refinements as i32);
    let pert = cfg
        .rules()?
        .into_iter()
        .next()
        .unwrap()
        .realize(&spec, cfg.dim);
    let traj = integrate(&field, &spec, &pert, radius)?;
    let anchor = ((cfg.anchor - cfg.x0).max(0.0) * spec.n() as f64) as u64;
    let cert = check_bound(&traj, anchor.min(traj.k_stop.saturating_sub(1)), &field)?;
    write_out(&cfg.out, &traj.to_csv())?;
    let summary = json!({
        "command": "check",
        "satisfied": cert.satisfied,
        "m": cert.m,
        "e": cert.e,
        "d": cert.d,
        "anchor_k": cert.anchor_k,
        "violation": cert.violation,
        "k_stop": traj.k_stop,
    });
    println!("{summary}");
    Ok(())
}
