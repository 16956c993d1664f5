//! Generators and independent reference values shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use tscv::expr::{parse, Env, Expr, Var};
use tscv::{ControlProblem, GridFunction, TimeScale, VariationalProblem};

/// Root of a / sqrt(1 + a^2) + 2 beta (a - 1) = 0 on [0, 1] by bisection.
pub fn alpha_of_beta(beta: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid / (1.0 + mid * mid).sqrt() + 2.0 * beta * (mid - 1.0) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn arc_length(beta: f64, intervals: usize) -> VariationalProblem {
    VariationalProblem::new(
        Arc::new(TimeScale::uniform(0.0, 1.0, intervals).unwrap()),
        parse(&format!("sqrt(1+v^2) + {beta:?}*(z-1)^2")).unwrap(),
        0.0,
    )
    .unwrap()
}

pub fn continuous_control(intervals: usize) -> ControlProblem {
    ControlProblem::new(
        Arc::new(TimeScale::uniform(-1.0, 1.0, intervals).unwrap()),
        parse("u^2").unwrap(),
        parse("u + z*t").unwrap(),
        1.0,
    )
    .unwrap()
}

pub fn slopes(x: &GridFunction) -> Vec<f64> {
    (0..=x.scale().kappa_last()).map(|i| x.delta_derivative(i).unwrap()).collect()
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Strictly increasing points with gaps in [0.1, 2], starting in [-2, 2].
pub fn random_scale(rng: &mut impl Rng, points: usize) -> TimeScale {
    let mut t = rng.gen_range(-2.0..2.0);
    let mut pts = vec![t];
    for _ in 1..points {
        t += rng.gen_range(0.1..2.0);
        pts.push(t);
    }
    TimeScale::explicit(&pts).unwrap()
}

/// A regular random scale: integers, a uniform sampling, or a q-grid.
pub fn random_regular_scale(rng: &mut impl Rng) -> TimeScale {
    match rng.gen_range(0..3) {
        0 => {
            let a = rng.gen_range(-5..5);
            TimeScale::integers(a, a + rng.gen_range(2..30)).unwrap()
        }
        1 => {
            let a = rng.gen_range(-2.0..2.0);
            TimeScale::uniform(a, a + rng.gen_range(0.5..3.0), rng.gen_range(2..60)).unwrap()
        }
        _ => TimeScale::qgrid(rng.gen_range(1.2..3.0), 0, rng.gen_range(2..8), rng.gen_bool(0.5)).unwrap(),
    }
}

fn coef(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo..hi) * 1000.0).round() / 1000.0
}

/// Convex quadratic Lagrangian in (x, v, z), strictly convex in the free values, with
/// t-dependent coefficients.
pub fn random_quadratic_lagrangian(rng: &mut impl Rng) -> String {
    format!(
        "{:?}*(1 + t^2/10)*(v + {:?}*x)^2 + {:?}*x^2 + {:?}*(z - {:?})^2 + {:?}*x*t + {:?}*v + {:?}*z*sin(t)",
        coef(rng, 0.2, 2.0),
        coef(rng, -0.3, 0.3),
        coef(rng, 0.0, 1.0),
        coef(rng, 0.0, 3.0),
        coef(rng, -1.0, 1.0),
        coef(rng, -1.0, 1.0),
        coef(rng, -1.0, 1.0),
        coef(rng, -1.0, 1.0),
    )
}

pub fn random_quadratic_problem(rng: &mut impl Rng, max_points: usize) -> VariationalProblem {
    let n = rng.gen_range(3..=max_points);
    VariationalProblem::new(
        Arc::new(random_scale(rng, n)),
        parse(&random_quadratic_lagrangian(rng)).unwrap(),
        coef(rng, -1.0, 1.0),
    )
    .unwrap()
}

/// Smooth, non-quadratic Lagrangians, defined for every real argument.
pub fn random_smooth_lagrangian(rng: &mut impl Rng) -> String {
    let terms = [
        "sqrt(1+v^2)",
        "exp(-x^2/4)",
        "sin(x)*cos(t)",
        "(z-1)^4/10",
        "x^2*v^2/(1+v^2)",
        "log(2+cos(z))",
        "x*z*t",
        "v^3/(1+v^2)",
    ];
    let picks = rng.gen_range(2..=4);
    (0..picks)
        .map(|_| format!("{:?}*{}", coef(rng, 0.1, 2.0), terms[rng.gen_range(0..terms.len())]))
        .collect::<Vec<_>>()
        .join(" + ")
}

const VARIABLES: [&str; 6] = ["t", "x", "v", "z", "u", "lam"];
const FUNCTIONS: [&str; 5] = ["sqrt", "exp", "log", "sin", "cos"];

/// Random expression text over the six reserved variables.
pub fn random_expression(rng: &mut impl Rng, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.7) {
            VARIABLES[rng.gen_range(0..6)].to_string()
        } else {
            format!("{:?}", coef(rng, 0.1, 3.0))
        };
    }
    let a = random_expression(rng, depth - 1);
    match rng.gen_range(0..10) {
        0 => format!("({a} + {})", random_expression(rng, depth - 1)),
        1 => format!("({a} - {})", random_expression(rng, depth - 1)),
        2 | 3 => format!("({a} * {})", random_expression(rng, depth - 1)),
        4 => format!("({a} / {})", random_expression(rng, depth - 1)),
        5 => format!("({a})^{}", [2, 3, -1][rng.gen_range(0..3)]),
        6 => format!("({a})^({})", random_expression(rng, depth - 1)),
        7 => format!("-({a})"),
        _ => format!("{}({a})", FUNCTIONS[rng.gen_range(0..5)]),
    }
}

/// Every reserved variable drawn from [0.1, 2).
pub fn random_env(rng: &mut impl Rng) -> Env {
    let mut env = Env::new();
    for v in Var::ALL {
        env.set(v, rng.gen_range(0.1..2.0));
    }
    env
}

/// Richardson-extrapolated central difference of `e` in `var`. None near a domain edge or a
/// pole, where two step sizes disagree.
pub fn finite_difference(e: &Expr, env: &Env, var: Var) -> Option<f64> {
    let x = env.get(var);
    let at = |h: f64| e.eval(&env.with(var, x + h)).ok().filter(|v| v.is_finite() && v.abs() < 1e6);
    let central = |h: f64| Some((at(h)? - at(-h)?) / (2.0 * h));
    let richardson = |h: f64| Some((4.0 * central(h / 2.0)? - central(h)?) / 3.0);
    let h = 1e-3 * (1.0 + x.abs());
    let (coarse, fine) = (richardson(h)?, richardson(h / 2.0)?);
    ((coarse - fine).abs() <= 1e-8 * fine.abs().max(1.0)).then_some(fine)
}
