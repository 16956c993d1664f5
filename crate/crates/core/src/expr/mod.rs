//! Scalar expressions over the six reserved variables `t, x, v, z, u, lam`.
//!
//! Lagrangians and dynamics are written as text, parsed into an [`Expr`] tree, and
//! differentiated symbolically. Variable roles: `x` is the sigma-shifted state, `v` the
//! delta derivative of the state (or `u` the sigma-shifted control), `z` the free end
//! value x(T), and `lam` the sigma-shifted multiplier.

mod diff;
mod parser;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use parser::{parse, ParseError, ParseErrorKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Var {
    T,
    X,
    V,
    Z,
    U,
    Lam,
}

impl Var {
    pub const ALL: [Var; 6] = [Var::T, Var::X, Var::V, Var::Z, Var::U, Var::Lam];

    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::V => "v",
            Var::Z => "z",
            Var::U => "u",
            Var::Lam => "lam",
        }
    }

    pub fn from_name(name: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.name() == name)
    }

    #[inline]
    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
}

impl UnaryOp {
    pub const FUNCTIONS: [UnaryOp; 5] = [UnaryOp::Sqrt, UnaryOp::Exp, UnaryOp::Log, UnaryOp::Sin, UnaryOp::Cos];

    pub fn function_name(self) -> Option<&'static str> {
        match self {
            UnaryOp::Neg => None,
            UnaryOp::Sqrt => Some("sqrt"),
            UnaryOp::Exp => Some("exp"),
            UnaryOp::Log => Some("log"),
            UnaryOp::Sin => Some("sin"),
            UnaryOp::Cos => Some("cos"),
        }
    }

    pub fn from_function_name(name: &str) -> Option<UnaryOp> {
        UnaryOp::FUNCTIONS
            .into_iter()
            .find(|op| op.function_name() == Some(name))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
            BinaryOp::Pow => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

/// Values of the six reserved variables.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Env {
    values: [f64; 6],
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: Var, value: f64) -> Self {
        self.values[var.slot()] = value;
        self
    }

    pub fn set(&mut self, var: Var, value: f64) {
        self.values[var.slot()] = value;
    }

    #[inline]
    pub fn get(&self, var: Var) -> f64 {
        self.values[var.slot()]
    }

    /// Environment for a Lagrangian f(t, x, v, z).
    pub fn txvz(t: f64, x: f64, v: f64, z: f64) -> Self {
        Self {
            values: [t, x, v, z, 0.0, 0.0],
        }
    }

    /// Environment for a control problem, H(t, x, u, lam, z).
    pub fn txulz(t: f64, x: f64, u: f64, lam: f64, z: f64) -> Self {
        Self {
            values: [t, x, 0.0, z, u, lam],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("{message} in `{subexpr}`")]
pub struct EvalError {
    pub message: String,
    pub subexpr: String,
}

impl EvalError {
    fn new(message: impl Into<String>, at: &Expr) -> Self {
        Self {
            message: message.into(),
            subexpr: at.to_string(),
        }
    }
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn eval(&self, env: &Env) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => env.get(*v),
            Expr::Unary(op, a) => {
                let a_val = a.eval(env)?;
                match op {
                    UnaryOp::Neg => -a_val,
                    UnaryOp::Sqrt => {
                        if a_val < 0.0 {
                            return Err(EvalError::new(format!("sqrt of negative value {a_val}"), self));
                        }
                        a_val.sqrt()
                    }
                    UnaryOp::Exp => a_val.exp(),
                    UnaryOp::Log => {
                        if a_val <= 0.0 {
                            return Err(EvalError::new(format!("log of non-positive value {a_val}"), self));
                        }
                        a_val.ln()
                    }
                    UnaryOp::Sin => a_val.sin(),
                    UnaryOp::Cos => a_val.cos(),
                }
            }
            Expr::Binary(op, a, b) => {
                let a_val = a.eval(env)?;
                let b_val = b.eval(env)?;
                match op {
                    BinaryOp::Add => a_val + b_val,
                    BinaryOp::Sub => a_val - b_val,
                    BinaryOp::Mul => a_val * b_val,
                    BinaryOp::Div => {
                        if b_val == 0.0 {
                            return Err(EvalError::new("division by zero", self));
                        }
                        a_val / b_val
                    }
                    BinaryOp::Pow => power(a_val, b_val).map_err(|m| EvalError::new(m, self))?,
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::new(format!("non-finite result {value}"), self))
        }
    }

    /// Sorted list of the variables occurring in the expression.
    pub fn variables(&self) -> Vec<Var> {
        let mut seen = [false; 6];
        self.visit_vars(&mut |v| seen[v.slot()] = true);
        Var::ALL.into_iter().filter(|v| seen[v.slot()]).collect()
    }

    pub fn depends_on(&self, var: Var) -> bool {
        let mut found = false;
        self.visit_vars(&mut |v| found |= v == var);
        found
    }

    fn visit_vars(&self, f: &mut impl FnMut(Var)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Unary(_, a) => a.visit_vars(f),
            Expr::Binary(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    /// Replaces every occurrence of `from` by `to`.
    pub fn rename(&self, from: Var, to: Var) -> Expr {
        match self {
            Expr::Var(v) if *v == from => Expr::Var(to),
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(a.rename(from, to))),
            Expr::Binary(op, a, b) => Expr::Binary(*op, Box::new(a.rename(from, to)), Box::new(b.rename(from, to))),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    /// Total polynomial degree in `vars`, treating every other variable as a coefficient.
    ///
    /// Returns `None` when the expression is not a polynomial in `vars` (for example when
    /// one of them sits under a `sqrt` or in a denominator).
    pub fn polynomial_degree(&self, vars: &[Var]) -> Option<u32> {
        match self {
            Expr::Const(_) => Some(0),
            Expr::Var(v) => Some(u32::from(vars.contains(v))),
            Expr::Unary(UnaryOp::Neg, a) => a.polynomial_degree(vars),
            Expr::Unary(_, a) => (a.polynomial_degree(vars)? == 0).then_some(0),
            Expr::Binary(op, a, b) => {
                let da = a.polynomial_degree(vars)?;
                let db = b.polynomial_degree(vars)?;
                match op {
                    BinaryOp::Add | BinaryOp::Sub => Some(da.max(db)),
                    BinaryOp::Mul => Some(da + db),
                    BinaryOp::Div => (db == 0).then_some(da),
                    BinaryOp::Pow => {
                        if da == 0 && db == 0 {
                            return Some(0);
                        }
                        match **b {
                            Expr::Const(c) if c >= 0.0 && c.fract() == 0.0 && c <= 64.0 => Some(da * c as u32),
                            _ => None,
                        }
                    }
                }
            }
        }
    }
}

fn power(base: f64, exponent: f64) -> Result<f64, String> {
    if base == 0.0 && exponent < 0.0 {
        return Err("zero raised to a negative power".into());
    }
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        return Ok(base.powi(exponent as i32));
    }
    if base < 0.0 {
        return Err(format!("negative base {base} with non-integer exponent {exponent}"));
    }
    Ok(base.powf(exponent))
}

// Printing: children are parenthesized when precedence or left-associativity demands it,
// so printing and re-parsing reproduces the tree.

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => PREC_UNARY,
            Expr::Const(_) | Expr::Var(_) => PREC_ATOM,
            Expr::Unary(UnaryOp::Neg, _) => PREC_UNARY,
            Expr::Unary(_, _) => PREC_ATOM,
            Expr::Binary(op, _, _) => op.precedence(),
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, needs_parens: bool) -> fmt::Result {
        if needs_parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Unary(UnaryOp::Neg, a) => {
                f.write_str("-")?;
                a.fmt_child(f, a.precedence() < PREC_POW)
            }
            Expr::Unary(op, a) => write!(f, "{}({a})", op.function_name().unwrap_or("?")),
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                let (left_parens, right_parens) = match op {
                    BinaryOp::Add | BinaryOp::Sub => (a.precedence() < PREC_ADD, b.precedence() <= PREC_ADD),
                    BinaryOp::Mul | BinaryOp::Div => (a.precedence() < PREC_MUL, b.precedence() <= PREC_MUL),
                    // right-associative; the base must bind tighter than unary minus
                    BinaryOp::Pow => (a.precedence() <= p, b.precedence() < PREC_UNARY),
                };
                a.fmt_child(f, left_parens)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_child(f, right_parens)
            }
        }
    }
}
