//! Exact minimization for quadratic problems and refinement grid search otherwise.
//!
//! The quadratic model is assembled from objective values alone (second differences at
//! unit vectors), so the oracle never touches the symbolic partials it is used to check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::Var;
use crate::problem::{ControlProblem, VariationalProblem};
use crate::timescale::GridFunction;

use super::bfgs::{is_domain_failure, Smooth};
use super::control::Reduced;

/// Largest scale accepted by the grid search.
pub const GRID_SEARCH_MAX_POINTS: usize = 8;
/// Final half-width of the grid-search box.
pub const GRID_SEARCH_RESOLUTION: f64 = 1e-6;

pub(crate) enum OracleResult {
    Variational {
        x: Vec<f64>,
        exact: bool,
    },
    Control {
        x: Vec<f64>,
        u: Vec<f64>,
        lam: Option<Vec<f64>>,
        exact: bool,
    },
}

/// Value, gradient and Hessian of a quadratic from its values at 0, +-e_j and e_j + e_k.
fn quadratic_model(m: usize, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let mut y = vec![0.0; m];
    let c = f(&y)?;
    let mut plus = vec![0.0; m];
    let mut b = DVector::zeros(m);
    let mut a = DMatrix::zeros(m, m);
    for j in 0..m {
        y[j] = 1.0;
        plus[j] = f(&y)?;
        y[j] = -1.0;
        let minus = f(&y)?;
        y[j] = 0.0;
        b[j] = 0.5 * (plus[j] - minus);
        a[(j, j)] = plus[j] + minus - 2.0 * c;
    }
    for j in 0..m {
        for k in j + 1..m {
            y[j] = 1.0;
            y[k] = 1.0;
            let v = f(&y)? - plus[j] - plus[k] + c;
            y[j] = 0.0;
            y[k] = 0.0;
            a[(j, k)] = v;
            a[(k, j)] = v;
        }
    }
    Ok((c, b, a))
}

fn with_alpha(alpha: f64, free: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(free.len() + 1);
    x.push(alpha);
    x.extend_from_slice(free);
    x
}

pub(crate) fn variational(p: &VariationalProblem) -> Result<OracleResult> {
    let m = p.scale().len() - 1;
    let objective = |free: &[f64]| -> Result<f64> {
        let x = GridFunction::new(p.scale().clone(), with_alpha(p.alpha(), free))?;
        p.objective_unchecked(&x)
    };
    let quadratic = p.lagrangian().polynomial_degree(&[Var::X, Var::V, Var::Z]).is_some_and(|d| d <= 2);
    if quadratic {
        let (_, b, a) = quadratic_model(m, objective)?;
        let chol = a.clone().cholesky().ok_or_else(|| {
            Error::Unsupported("the quadratic objective is not strictly convex, so it has no unique minimizer".into())
        })?;
        let free = chol.solve(&(-b));
        return Ok(OracleResult::Variational {
            x: with_alpha(p.alpha(), free.as_slice()),
            exact: true,
        });
    }
    check_grid_size(p.scale().len())?;
    let free = grid_search(vec![p.alpha(); m], 4.0 * (1.0 + p.alpha().abs()), objective);
    Ok(OracleResult::Variational {
        x: with_alpha(p.alpha(), &free),
        exact: false,
    })
}

pub(crate) fn control(p: &ControlProblem) -> Result<OracleResult> {
    let vars = [Var::X, Var::U, Var::Z];
    let quadratic = p.running_cost().polynomial_degree(&vars).is_some_and(|d| d <= 2)
        && p.dynamics().polynomial_degree(&vars).is_some_and(|d| d <= 1);
    let scale = p.scale();
    let n = scale.len();
    let kappa = scale.kappa_last();
    if quadratic {
        // w = (x_1 .. x_{n-1}, u_0 .. u_kappa)
        let m = 2 * (n - 1);
        let split = |w: &[f64]| (with_alpha(p.alpha(), &w[..n - 1]), w[n - 1..].to_vec());
        let (_, b, a) = quadratic_model(m, |w| {
            let (x, u) = split(w);
            p.cost(&x, &u)
        })?;
        // affine constraints c_i(w) = x^Delta(t_i) - g(t_i, x^sigma, u^sigma, x(T))
        let constraints = |w: &[f64]| -> Result<DVector<f64>> {
            let (x, u) = split(w);
            let mut c = DVector::zeros(kappa + 1);
            for i in 0..=kappa {
                let env = p.point_env(&x, &u, 0.0, i);
                c[i] = (x[i + 1] - x[i]) / scale.mu_unchecked(i) - p.dynamics().eval(&env)?;
            }
            Ok(c)
        };
        let mut w = vec![0.0; m];
        let c0 = constraints(&w)?;
        let mut jac = DMatrix::zeros(kappa + 1, m);
        for j in 0..m {
            w[j] = 1.0;
            jac.set_column(j, &(constraints(&w)? - &c0));
            w[j] = 0.0;
        }
        let size = m + kappa + 1;
        let mut kkt = DMatrix::zeros(size, size);
        kkt.view_mut((0, 0), (m, m)).copy_from(&a);
        kkt.view_mut((0, m), (m, kappa + 1)).copy_from(&jac.transpose());
        kkt.view_mut((m, 0), (kappa + 1, m)).copy_from(&jac);
        let mut rhs = DVector::zeros(size);
        rhs.rows_mut(0, m).copy_from(&(-b));
        rhs.rows_mut(m, kappa + 1).copy_from(&(-c0));
        let sol = kkt
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularJacobian { condition: f64::INFINITY })?;
        let (x, u) = split(&sol.as_slice()[..m]);
        // the multiplier of x^Delta - g is -mu lam^sigma
        let lam = (0..=kappa).map(|i| -sol[m + i] / scale.mu_unchecked(i)).collect();
        return Ok(OracleResult::Control {
            x,
            u,
            lam: Some(lam),
            exact: true,
        });
    }
    check_grid_size(n)?;
    let mut reduced = Reduced::new(p);
    let u = grid_search(vec![0.0; kappa + 1], 4.0, |u| {
        let s = reduced.scaled(u);
        reduced.value(&s)
    });
    let x = reduced.state(&u)?;
    Ok(OracleResult::Control {
        x,
        u,
        lam: None,
        exact: false,
    })
}

fn check_grid_size(n: usize) -> Result<()> {
    if n > GRID_SEARCH_MAX_POINTS {
        return Err(Error::Unsupported(format!(
            "non-quadratic problems need a scale with at most {GRID_SEARCH_MAX_POINTS} points for the grid search, got {n}"
        )));
    }
    Ok(())
}

/// Coordinate-lattice search that recentres on the best lattice point and halves the box
/// whenever the centre is already best, down to [`GRID_SEARCH_RESOLUTION`].
fn grid_search(mut center: Vec<f64>, mut half_width: f64, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Vec<f64> {
    let m = center.len();
    let per_axis: usize = if m <= 4 { 5 } else { 3 };
    let offsets: Vec<f64> = (0..per_axis)
        .map(|k| -1.0 + 2.0 * k as f64 / (per_axis - 1) as f64)
        .collect();
    let mut eval = |y: &[f64]| match f(y) {
        Ok(v) if v.is_finite() => v,
        Ok(_) => f64::INFINITY,
        Err(e) if is_domain_failure(&e) => f64::INFINITY,
        Err(_) => f64::INFINITY,
    };
    let mut best = eval(&center);
    let total = per_axis.pow(m as u32);
    let mut probe = vec![0.0; m];
    for _ in 0..10_000 {
        if half_width < GRID_SEARCH_RESOLUTION {
            break;
        }
        let mut best_point = None;
        for idx in 0..total {
            let mut rest = idx;
            for (j, slot) in probe.iter_mut().enumerate() {
                *slot = center[j] + half_width * offsets[rest % per_axis];
                rest /= per_axis;
            }
            let v = eval(&probe);
            if v < best {
                best = v;
                best_point = Some(probe.clone());
            }
        }
        match best_point {
            Some(p) => center = p,
            None => half_width *= 0.5,
        }
    }
    center
}
