//! Parsing and evaluation of scalar expressions and vector fields used as ODE
//! right-hand sides and integrands.
//!
//! The grammar covers decimal literals, the operators `+ - * / ^` (with `^`
//! right-associative), unary minus, parentheses, the functions `sin cos tan
//! exp log sqrt abs sign` (unary) and `pow min max` (binary), and the
//! constants `pi` and `e`. Variables are `x` (alias `t`) plus the state
//! variables `y0..y{n-1}`; for scalar problems `y` aliases `y0`.
//!
//! Parsed objects are immutable and safe to evaluate from any number of
//! threads. Evaluation is referentially transparent: identical inputs give
//! bit-identical outputs. Overflow to a non-finite value is not an error —
//! downstream blow-up detection consumes it — and is reported through
//! [`EvalStatus::Overflow`]; genuine domain violations (log of a non-positive
//! number, square root of a negative) raise [`DomainError`].

mod lexer;
mod parser;

use std::fmt;

use crate::error::{DomainError, ParseError};
use parser::Parser;

/// Binary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Built-in functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Sign,
    Pow,
    Min,
    Max,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Pow => "pow",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Pow | Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "tan" => Some(Func::Tan),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            "abs" => Some(Func::Abs),
            "sign" => Some(Func::Sign),
            "pow" => Some(Func::Pow),
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            _ => None,
        }
    }
}

/// Abstract syntax tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var { name: String, slot: usize },
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// Declared-variable environment. Slot 0 is the abscissa `x`; slots `1..=n`
/// are the state components `y0..y{n-1}`.
#[derive(Debug, Clone)]
struct VarEnv {
    dim: usize,
}

impl VarEnv {
    fn scalar_abscissa() -> Self {
        VarEnv { dim: 0 }
    }

    fn field(dim: usize) -> Self {
        VarEnv { dim }
    }

    fn n_slots(&self) -> usize {
        1 + self.dim
    }

    fn slot_of(&self, name: &str) -> Option<usize> {
        match name {
            "x" | "t" => Some(0),
            "y" if self.dim == 1 => Some(1),
            _ => {
                let rest = name.strip_prefix('y')?;
                if rest.is_empty() || rest.len() > 1 && rest.starts_with('0') {
                    return None;
                }
                let idx: usize = rest.parse().ok()?;
                if idx < self.dim {
                    Some(1 + idx)
                } else {
                    None
                }
            }
        }
    }
}

/// Outcome flag of an evaluation that completed without a domain violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalStatus {
    /// All components finite.
    Finite,
    /// At least one component overflowed to infinity or NaN.
    Overflow,
}

fn eval_node(node: &Node, vars: &[f64]) -> Result<f64, DomainError> {
    Ok(match node {
        Node::Num(v) => *v,
        Node::Var { slot, .. } => vars[*slot],
        Node::Neg(a) => -eval_node(a, vars)?,
        Node::Bin(op, a, b) => {
            let x = eval_node(a, vars)?;
            let y = eval_node(b, vars)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
                BinOp::Pow => checked_pow(x, y)?,
            }
        }
        Node::Call(f, args) => match f {
            Func::Sin => eval_node(&args[0], vars)?.sin(),
            Func::Cos => eval_node(&args[0], vars)?.cos(),
            Func::Tan => eval_node(&args[0], vars)?.tan(),
            Func::Exp => eval_node(&args[0], vars)?.exp(),
            Func::Log => {
                let a = eval_node(&args[0], vars)?;
                if a <= 0.0 {
                    return Err(DomainError {
                        function: "log",
                        argument: a,
                    });
                }
                a.ln()
            }
            Func::Sqrt => {
                let a = eval_node(&args[0], vars)?;
                if a < 0.0 {
                    return Err(DomainError {
                        function: "sqrt",
                        argument: a,
                    });
                }
                a.sqrt()
            }
            Func::Abs => eval_node(&args[0], vars)?.abs(),
            Func::Sign => {
                let a = eval_node(&args[0], vars)?;
                if a.is_nan() {
                    f64::NAN
                } else if a > 0.0 {
                    1.0
                } else if a < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Func::Pow => {
                let a = eval_node(&args[0], vars)?;
                let b = eval_node(&args[1], vars)?;
                checked_pow(a, b)?
            }
            Func::Min => eval_node(&args[0], vars)?.min(eval_node(&args[1], vars)?),
            Func::Max => eval_node(&args[0], vars)?.max(eval_node(&args[1], vars)?),
        },
    })
}

fn checked_pow(base: f64, expo: f64) -> Result<f64, DomainError> {
    if base < 0.0 && expo.is_finite() && expo.fract() != 0.0 {
        return Err(DomainError {
            function: "pow",
            argument: base,
        });
    }
    Ok(base.powf(expo))
}

fn collect_free_vars(node: &Node, acc: &mut Vec<String>) {
    match node {
        Node::Num(_) => {}
        Node::Var { name, .. } => {
            if !acc.iter().any(|v| v == name) {
                acc.push(name.clone());
            }
        }
        Node::Neg(a) => collect_free_vars(a, acc),
        Node::Bin(_, a, b) => {
            collect_free_vars(a, acc);
            collect_free_vars(b, acc);
        }
        Node::Call(_, args) => {
            for a in args {
                collect_free_vars(a, acc);
            }
        }
    }
}

/// One parsed scalar expression together with its variable environment.
#[derive(Debug, Clone)]
pub struct Expression {
    root: Node,
    free_vars: Vec<String>,
    n_slots: usize,
}

impl Expression {
    /// Parse a scalar expression over the single variable `x` (alias `t`).
    pub fn parse_scalar(text: &str) -> Result<Expression, ParseError> {
        let env = VarEnv::scalar_abscissa();
        let mut p = Parser::new(text, &env)?;
        let comps = p.parse_components()?;
        if comps.len() != 1 {
            return Err(ParseError::DimensionMismatch {
                expected: 1,
                got: comps.len(),
            });
        }
        Ok(Self::from_node(comps.into_iter().next().unwrap(), env.n_slots()))
    }

    fn from_node(root: Node, n_slots: usize) -> Expression {
        let mut free_vars = Vec::new();
        collect_free_vars(&root, &mut free_vars);
        Expression {
            root,
            free_vars,
            n_slots,
        }
    }

    /// Evaluate with an explicit variable vector (`vars[0]` is `x`, then the
    /// state components). The result may be non-finite on overflow.
    pub fn eval(&self, vars: &[f64]) -> Result<f64, DomainError> {
        debug_assert!(vars.len() >= self.n_slots);
        eval_node(&self.root, vars)
    }

    /// Evaluate an expression of `x` only.
    pub fn eval_at(&self, x: f64) -> Result<f64, DomainError> {
        let vars = [x];
        debug_assert!(self.n_slots <= 1);
        eval_node(&self.root, &vars)
    }

    /// Free variable names in order of first occurrence.
    pub fn free_vars(&self) -> &[String] {
        &self.free_vars
    }

    pub fn root(&self) -> &Node {
        &self.root
    }
}

// Pretty-printing with minimal parentheses. The printed form reparses to a
// structurally identical tree.
fn prec(node: &Node) -> u8 {
    match node {
        Node::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Node::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Node::Neg(_) => 3,
        Node::Bin(BinOp::Pow, ..) => 4,
        Node::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => 3,
        Node::Num(_) | Node::Var { .. } | Node::Call(..) => 5,
    }
}

fn fmt_node(node: &Node, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = prec(node);
    if p < min_prec {
        write!(f, "(")?;
        fmt_node(node, 0, f)?;
        return write!(f, ")");
    }
    match node {
        Node::Num(v) => write!(f, "{v}"),
        Node::Var { name, .. } => write!(f, "{name}"),
        Node::Neg(a) => {
            write!(f, "-")?;
            fmt_node(a, 3, f)
        }
        Node::Bin(op, a, b) => {
            let (sym, lp, rp) = match op {
                BinOp::Add => ("+", 1, 2),
                BinOp::Sub => ("-", 1, 2),
                BinOp::Mul => ("*", 2, 3),
                BinOp::Div => ("/", 2, 3),
                BinOp::Pow => ("^", 5, 3),
            };
            fmt_node(a, lp, f)?;
            write!(f, "{sym}")?;
            fmt_node(b, rp, f)
        }
        Node::Call(func, args) => {
            write!(f, "{}(", func.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                fmt_node(a, 0, f)?;
            }
            write!(f, ")")
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_node(&self.root, 0, f)
    }
}

/// A parsed right-hand side `F(x, y0..y{n-1}) -> R^n`.
#[derive(Debug, Clone)]
pub struct VectorField {
    dim: usize,
    components: Vec<Expression>,
    declared_vars: Vec<String>,
    source: String,
}

impl VectorField {
    /// Parse a semicolon-separated list of `dim` component expressions.
    pub fn parse(text: &str, dim: usize) -> Result<VectorField, ParseError> {
        if dim == 0 {
            return Err(ParseError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        let env = VarEnv::field(dim);
        let mut p = Parser::new(text, &env)?;
        let comps = p.parse_components()?;
        if comps.len() != dim {
            return Err(ParseError::DimensionMismatch {
                expected: dim,
                got: comps.len(),
            });
        }
        let n_slots = env.n_slots();
        let mut declared_vars = vec!["x".to_string()];
        for i in 0..dim {
            declared_vars.push(format!("y{i}"));
        }
        Ok(VectorField {
            dim,
            components: comps
                .into_iter()
                .map(|c| Expression::from_node(c, n_slots))
                .collect(),
            declared_vars,
            source: text.to_string(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Expression] {
        &self.components
    }

    pub fn declared_vars(&self) -> &[String] {
        &self.declared_vars
    }

    /// Original source text.
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Component-wise evaluation into a caller-provided buffer.
    pub fn eval_into(
        &self,
        x: f64,
        y: &[f64],
        out: &mut [f64],
    ) -> Result<EvalStatus, DomainError> {
        debug_assert_eq!(y.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        let mut vars = Vec::with_capacity(1 + self.dim);
        vars.push(x);
        vars.extend_from_slice(y);
        let mut status = EvalStatus::Finite;
        for (o, c) in out.iter_mut().zip(&self.components) {
            let v = eval_node(&c.root, &vars)?;
            if !v.is_finite() {
                status = EvalStatus::Overflow;
            }
            *o = v;
        }
        Ok(status)
    }

    /// Convenience evaluation; non-finite components signal overflow.
    pub fn eval(&self, x: f64, y: &[f64]) -> Result<Vec<f64>, DomainError> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, y, &mut out)?;
        Ok(out)
    }
}

/// A parsed curve `x -> R^n` (closed-form solutions, integrand bundles).
#[derive(Debug, Clone)]
pub struct Curve {
    dim: usize,
    components: Vec<Expression>,
    source: String,
}

impl Curve {
    /// Parse a semicolon-separated list of `dim` expressions over `x` only.
    pub fn parse(text: &str, dim: usize) -> Result<Curve, ParseError> {
        let env = VarEnv::scalar_abscissa();
        let mut p = Parser::new(text, &env)?;
        let comps = p.parse_components()?;
        if comps.len() != dim {
            return Err(ParseError::DimensionMismatch {
                expected: dim,
                got: comps.len(),
            });
        }
        Ok(Curve {
            dim,
            components: comps
                .into_iter()
                .map(|c| Expression::from_node(c, env.n_slots()))
                .collect(),
            source: text.to_string(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) -> Result<EvalStatus, DomainError> {
        debug_assert_eq!(out.len(), self.dim);
        let vars = [x];
        let mut status = EvalStatus::Finite;
        for (o, c) in out.iter_mut().zip(&self.components) {
            let v = eval_node(&c.root, &vars)?;
            if !v.is_finite() {
                status = EvalStatus::Overflow;
            }
            *o = v;
        }
        Ok(status)
    }

    pub fn eval(&self, x: f64) -> Result<Vec<f64>, DomainError> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }
}
