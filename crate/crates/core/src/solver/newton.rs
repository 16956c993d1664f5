//! Damped Newton iteration on the Euler-Lagrange plus transversality system.

use nalgebra::{DMatrix, DVector};

use crate::conditions::{euler_lagrange_residual, transversality_residual};
use crate::error::{Error, Result};
use crate::problem::VariationalProblem;
use crate::timescale::GridFunction;

use super::bfgs::is_domain_failure;

/// Conditions beyond this estimate are reported as singular.
const MAX_CONDITION: f64 = 1e14;
const MAX_HALVINGS: usize = 40;

pub(crate) struct NewtonOutcome {
    pub x: GridFunction,
    pub iterations: usize,
}

fn residual(p: &VariationalProblem, free: &[f64]) -> Result<DVector<f64>> {
    let mut values = Vec::with_capacity(free.len() + 1);
    values.push(p.alpha());
    values.extend_from_slice(free);
    let x = GridFunction::new(p.scale().clone(), values)?;
    let mut r = euler_lagrange_residual(p, &x)?;
    r.push(transversality_residual(p, &x)?);
    Ok(DVector::from_vec(r))
}

fn jacobian(p: &VariationalProblem, free: &DVector<f64>, step: f64) -> Result<DMatrix<f64>> {
    let m = free.len();
    let mut j = DMatrix::zeros(m, m);
    let mut probe = free.clone();
    for k in 0..m {
        let h = step * (1.0 + free[k].abs());
        probe[k] = free[k] + h;
        let plus = residual(p, probe.as_slice())?;
        probe[k] = free[k] - h;
        let minus = residual(p, probe.as_slice())?;
        probe[k] = free[k];
        j.set_column(k, &((plus - minus) / (2.0 * h)));
    }
    Ok(j)
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max)
}

pub(crate) fn solve(
    p: &VariationalProblem,
    x0: &GridFunction,
    max_iterations: usize,
    tolerance: f64,
    fd_step: f64,
) -> Result<NewtonOutcome> {
    p.check_admissible(x0)?;
    let mut free = DVector::from_column_slice(&x0.values()[1..]);
    let mut r = residual(p, free.as_slice())?;
    let mut iterations = 0;
    loop {
        if r.amax() < tolerance {
            let mut values = vec![p.alpha()];
            values.extend(free.iter());
            return Ok(NewtonOutcome {
                x: GridFunction::new(p.scale().clone(), values)?,
                iterations,
            });
        }
        if iterations >= max_iterations {
            return Err(Error::Divergence {
                iterations,
                residual: r.amax(),
            });
        }
        iterations += 1;

        let j = jacobian(p, &free, fd_step)?;
        let lu = j.clone().lu();
        let condition = lu
            .try_inverse()
            .map_or(f64::INFINITY, |inv| one_norm(&j) * one_norm(&inv));
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularJacobian { condition });
        }
        let delta = lu.solve(&r).ok_or(Error::SingularJacobian { condition })?;

        let norm = r.norm();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = &free - &delta * t;
            match residual(p, trial.as_slice()) {
                Ok(rt) if rt.norm() < norm || rt.amax() < tolerance => {
                    accepted = Some((trial, rt));
                    break;
                }
                Ok(_) => {}
                Err(e) if is_domain_failure(&e) => {}
                Err(e) => return Err(e),
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, rt)) => {
                free = trial;
                r = rt;
            }
            None => {
                return Err(Error::Divergence {
                    iterations,
                    residual: r.amax(),
                })
            }
        }
    }
}
