//! Symbolic partial differentiation with constant folding.

use super::{BinaryOp, Expr, UnaryOp, Var};

impl Expr {
    /// Partial derivative with respect to `wrt`.
    pub fn diff(&self, wrt: Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(v) => Expr::Const(if *v == wrt { 1.0 } else { 0.0 }),
            Expr::Unary(op, a) => {
                let da = a.diff(wrt);
                if is_zero(&da) {
                    return Expr::Const(0.0);
                }
                let a = (**a).clone();
                match op {
                    UnaryOp::Neg => neg(da),
                    UnaryOp::Sqrt => div(da, mul(Expr::Const(2.0), unary(UnaryOp::Sqrt, a))),
                    UnaryOp::Exp => mul(da, unary(UnaryOp::Exp, a)),
                    UnaryOp::Log => div(da, a),
                    UnaryOp::Sin => mul(da, unary(UnaryOp::Cos, a)),
                    UnaryOp::Cos => neg(mul(da, unary(UnaryOp::Sin, a))),
                }
            }
            Expr::Binary(op, a, b) => {
                let da = a.diff(wrt);
                let db = b.diff(wrt);
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinaryOp::Add => add(da, db),
                    BinaryOp::Sub => sub(da, db),
                    BinaryOp::Mul => add(mul(da, b.clone()), mul(a, db)),
                    BinaryOp::Div => {
                        if is_zero(&db) {
                            div(da, b)
                        } else {
                            div(sub(mul(da, b.clone()), mul(a, db)), pow(b, Expr::Const(2.0)))
                        }
                    }
                    BinaryOp::Pow => match b {
                        // power rule for constant exponents, no log-domain restriction
                        Expr::Const(c) => mul(mul(Expr::Const(c), pow(a, Expr::Const(c - 1.0))), da),
                        _ if is_zero(&db) => mul(mul(b.clone(), pow(a, sub(b, Expr::Const(1.0)))), da),
                        _ => {
                            // d exp(b log a) = exp(b log a) (b' log a + b a'/a)
                            let log_a = unary(UnaryOp::Log, a.clone());
                            let inner = add(mul(db, log_a.clone()), div(mul(b.clone(), da), a));
                            mul(unary(UnaryOp::Exp, mul(b, log_a)), inner)
                        }
                    },
                }
            }
        }
    }
}

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 1.0)
}

fn fold(value: f64, otherwise: impl FnOnce() -> Expr) -> Expr {
    if value.is_finite() {
        Expr::Const(value)
    } else {
        otherwise()
    }
}

fn unary(op: UnaryOp, a: Expr) -> Expr {
    Expr::Unary(op, Box::new(a))
}

fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    Expr::Binary(op, Box::new(a), Box::new(b))
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Unary(UnaryOp::Neg, inner) => *inner,
        a => unary(UnaryOp::Neg, a),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        _ if is_zero(&a) => b,
        _ if is_zero(&b) => a,
        _ => binary(BinaryOp::Add, a, b),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        _ if is_zero(&b) => a,
        _ if is_zero(&a) => neg(b),
        _ => binary(BinaryOp::Sub, a, b),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_zero(&a) || is_zero(&b) => Expr::Const(0.0),
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ if is_one(&a) => b,
        _ if is_one(&b) => a,
        _ => binary(BinaryOp::Mul, a, b),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) if *y != 0.0 => fold(x / y, || binary(BinaryOp::Div, a.clone(), b.clone())),
        _ if is_zero(&a) && !is_zero(&b) => Expr::Const(0.0),
        _ if is_one(&b) => a,
        _ => binary(BinaryOp::Div, a, b),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_zero(&b) => Expr::Const(1.0),
        _ if is_one(&b) => a,
        (Expr::Const(x), Expr::Const(y)) if *x > 0.0 => fold(x.powf(*y), || binary(BinaryOp::Pow, a.clone(), b.clone())),
        _ => binary(BinaryOp::Pow, a, b),
    }
}
