//! BFGS on the inverse Hessian with a halving Armijo line search.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const ARMIJO: f64 = 1e-4;
const CURVATURE: f64 = 0.9;
const MAX_HALVINGS: usize = 60;
/// Relative objective change treated as rounding noise.
const NOISE: f64 = 1e-12;

pub(crate) trait Smooth {
    fn value(&mut self, y: &[f64]) -> Result<f64>;
    /// Gradient together with the stationarity measure tested against the tolerance.
    fn gradient(&mut self, y: &[f64]) -> Result<(Vec<f64>, f64)>;
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Settings {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct Outcome {
    pub y: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub values: Vec<f64>,
}

/// Failures that mean "the trial point is outside the domain", answered by a shorter step.
pub(crate) fn is_domain_failure(e: &Error) -> bool {
    matches!(e, Error::Eval(_) | Error::ImplicitStep { .. } | Error::Consistency { .. })
}

struct Accepted {
    y: DVector<f64>,
    value: f64,
    gradient: DVector<f64>,
    measure: f64,
}

fn line_search(
    obj: &mut impl Smooth,
    y: &DVector<f64>,
    f: f64,
    d: &DVector<f64>,
    slope: f64,
) -> Result<Option<Accepted>> {
    let mut t = 1.0;
    for _ in 0..MAX_HALVINGS {
        let trial = y + d * t;
        let value = match obj.value(trial.as_slice()) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => {
                t *= 0.5;
                continue;
            }
            Err(e) if is_domain_failure(&e) => {
                t *= 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };
        let armijo = value <= f + ARMIJO * t * slope;
        let at_noise_floor = value <= f + NOISE * (1.0 + f.abs());
        if armijo || at_noise_floor {
            let (g, measure) = match obj.gradient(trial.as_slice()) {
                Ok(r) => r,
                Err(e) if is_domain_failure(&e) => {
                    t *= 0.5;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let g = DVector::from_vec(g);
            // approximate Wolfe test: when values are dominated by rounding, decide
            // sufficient decrease from the directional derivative instead
            let dslope = g.dot(d);
            let approx_wolfe = dslope <= (2.0 * ARMIJO - 1.0) * slope && dslope >= CURVATURE * slope;
            if armijo || approx_wolfe {
                return Ok(Some(Accepted {
                    y: trial,
                    value,
                    gradient: g,
                    measure,
                }));
            }
        }
        t *= 0.5;
    }
    Ok(None)
}

pub(crate) fn minimize(obj: &mut impl Smooth, y0: Vec<f64>, settings: &Settings) -> Result<Outcome> {
    let n = y0.len();
    let mut y = DVector::from_vec(y0);
    let mut f = obj.value(y.as_slice())?;
    let (g, mut measure) = obj.gradient(y.as_slice())?;
    let mut g = DVector::from_vec(g);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut values = vec![f];
    let mut iterations = 0;

    while measure >= settings.gradient_tolerance && iterations < settings.max_iterations {
        iterations += 1;
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if slope >= 0.0 || !slope.is_finite() {
            h = DMatrix::identity(n, n);
            fresh = true;
            d = -g.clone();
            slope = g.dot(&d);
        }
        if slope == 0.0 {
            break;
        }
        let Some(step) = line_search(obj, &y, f, &d, slope)? else {
            if fresh {
                break;
            }
            h = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        let s = &step.y - &y;
        let dg = &step.gradient - &g;
        let small_step = s.amax() <= settings.step_tolerance * (1.0 + y.amax());
        y = step.y;
        f = step.value;
        g = step.gradient;
        measure = step.measure;
        values.push(f);

        let sy = s.dot(&dg);
        if sy > 1e-14 * s.norm() * dg.norm() {
            if fresh {
                // Shanno-Phua scaling of the first inverse Hessian
                h = DMatrix::identity(n, n) * (sy / dg.dot(&dg));
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &dg;
            let yhy = dg.dot(&hy);
            h -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            h += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        if small_step && measure >= settings.gradient_tolerance {
            break;
        }
    }

    Ok(Outcome {
        y: y.data.into(),
        value: f,
        iterations,
        converged: measure < settings.gradient_tolerance,
        values,
    })
}
