//! Reduced-space transcription of the control problem.
//!
//! The decision variables are u^sigma at every κ-point. The state follows by forward
//! propagation of x^Delta = g(t, x^sigma, u^sigma, zeta), implicit in x^sigma, and the
//! auxiliary end value zeta is adjusted until x(T) = zeta. The costate is then exact: the
//! costate recurrence is linear in lam^sigma and is swept backward with lam^sigma(rho(T))
//! left symbolic, which the transversality equation then fixes.

use crate::error::{Error, Result};
use crate::expr::Env;
use crate::problem::ControlProblem;

use super::bfgs::Smooth;

const STEP_ITERATIONS: usize = 50;
const STEP_TOLERANCE: f64 = 1e-12;
const CONSISTENCY_ITERATIONS: usize = 50;
const CONSISTENCY_TOLERANCE: f64 = 1e-13;

pub(crate) struct Reduced<'a> {
    p: &'a ControlProblem,
    sqrt_mu: Vec<f64>,
    /// Last consistent end value, reused as the next starting guess.
    zeta: f64,
}

impl<'a> Reduced<'a> {
    pub(crate) fn new(p: &'a ControlProblem) -> Self {
        let scale = p.scale();
        let sqrt_mu = (0..=scale.kappa_last()).map(|i| scale.mu_unchecked(i).sqrt()).collect();
        Self {
            p,
            sqrt_mu,
            zeta: p.alpha(),
        }
    }

    pub(crate) fn dimension(&self) -> usize {
        self.sqrt_mu.len()
    }

    /// Scaled variables s_i = sqrt(mu_i) u_i to controls.
    pub(crate) fn controls(&self, s: &[f64]) -> Vec<f64> {
        s.iter().zip(&self.sqrt_mu).map(|(s, r)| s / r).collect()
    }

    pub(crate) fn scaled(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.sqrt_mu).map(|(u, r)| u * r).collect()
    }

    /// One implicit step x_{i+1} = x_i + mu_i g(t_i, x_{i+1}, u_i, zeta) by Newton's method.
    fn step(&self, i: usize, x_i: f64, u_i: f64, zeta: f64) -> Result<f64> {
        let scale = self.p.scale();
        let t = scale.points()[i];
        let mu = scale.mu_unchecked(i);
        let env = |y: f64| Env::txulz(t, y, u_i, 0.0, zeta);
        let g = self.p.dynamics();
        let mut y = x_i + mu * g.eval(&env(x_i))?;
        for _ in 0..STEP_ITERATIONS {
            let e = env(y);
            let phi = y - x_i - mu * g.eval(&e)?;
            let dphi = 1.0 - mu * self.p.g_x.eval(&e)?;
            if dphi == 0.0 || !dphi.is_finite() {
                break;
            }
            let delta = phi / dphi;
            y -= delta;
            if !y.is_finite() {
                break;
            }
            if delta.abs() <= STEP_TOLERANCE * (1.0 + y.abs()) {
                return Ok(y);
            }
        }
        Err(Error::ImplicitStep { index: i, t })
    }

    fn propagate(&self, u: &[f64], zeta: f64) -> Result<Vec<f64>> {
        let n = self.p.scale().len();
        let mut x = Vec::with_capacity(n);
        x.push(self.p.alpha());
        for (i, &u_i) in u.iter().enumerate() {
            let next = self.step(i, x[i], u_i, zeta)?;
            x.push(next);
        }
        Ok(x)
    }

    /// Forward state with x(T) consistent with the end value seen by the integrands.
    pub(crate) fn state(&mut self, u: &[f64]) -> Result<Vec<f64>> {
        let gap = |x: &[f64], z: f64| x[x.len() - 1] - z;
        let tol = |z: f64| CONSISTENCY_TOLERANCE * (1.0 + z.abs());
        let mut z0 = self.zeta;
        let mut x0 = self.propagate(u, z0)?;
        let mut f0 = gap(&x0, z0);
        if f0.abs() <= tol(z0) {
            self.zeta = z0;
            return Ok(x0);
        }
        // secant on zeta -> x(T; zeta) - zeta, started with a fixed-point step
        let mut z1 = z0 + f0;
        for _ in 0..CONSISTENCY_ITERATIONS {
            let x1 = self.propagate(u, z1)?;
            let f1 = gap(&x1, z1);
            if f1.abs() <= tol(z1) {
                self.zeta = z1;
                return Ok(x1);
            }
            if f1 == f0 {
                return Err(Error::Consistency { gap: f1 });
            }
            let z2 = z1 - f1 * (z1 - z0) / (f1 - f0);
            (z0, f0, x0) = (z1, f1, x1);
            z1 = z2;
        }
        Err(Error::Consistency { gap: gap(&x0, z0) })
    }

    fn env(&self, x: &[f64], u: &[f64], lam: f64, i: usize) -> Env {
        self.p.point_env(x, u, lam, i)
    }

    /// Exact lam^sigma on T^κ for the state `x` driven by `u`.
    pub(crate) fn costate(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let scale = self.p.scale();
        let kappa = scale.kappa_last();
        let mut f_x = vec![0.0; kappa + 1];
        let mut f_z = vec![0.0; kappa + 1];
        let mut g_x = vec![0.0; kappa + 1];
        let mut g_z = vec![0.0; kappa + 1];
        for i in 0..=kappa {
            let e = self.env(x, u, 0.0, i);
            f_x[i] = self.p.f_x.eval(&e)?;
            f_z[i] = self.p.f_z.eval(&e)?;
            g_x[i] = self.p.g_x.eval(&e)?;
            g_z[i] = self.p.g_z.eval(&e)?;
        }
        // lam_i = p_i + q_i lam_kappa from lam_i (1 - mu_i g_x) = lam_{i+1} + mu_i f_x
        let mut p = vec![0.0; kappa + 1];
        let mut q = vec![0.0; kappa + 1];
        q[kappa] = 1.0;
        for i in (0..kappa).rev() {
            let mu = scale.mu_unchecked(i);
            let pivot = 1.0 - mu * g_x[i];
            p[i] = (p[i + 1] + mu * f_x[i]) / pivot;
            q[i] = q[i + 1] / pivot;
        }
        let mu_k = scale.mu_unchecked(kappa);
        let mut lhs = 1.0 - mu_k * g_x[kappa];
        let mut rhs = mu_k * f_x[kappa];
        for i in 0..=kappa {
            let mu = scale.mu_unchecked(i);
            lhs -= mu * q[i] * g_z[i];
            rhs += mu * (f_z[i] + p[i] * g_z[i]);
        }
        let lam_k = rhs / lhs;
        let lam: Vec<f64> = p.iter().zip(&q).map(|(p, q)| p + q * lam_k).collect();
        if lam.iter().any(|v| !v.is_finite()) {
            return Err(Error::Unsupported(
                "the costate recurrence is singular for this trajectory".into(),
            ));
        }
        Ok(lam)
    }

    /// H_u at every κ-point.
    pub(crate) fn stationarity(&self, x: &[f64], u: &[f64], lam: &[f64]) -> Result<Vec<f64>> {
        (0..lam.len())
            .map(|i| Ok(self.p.h_u.eval(&self.env(x, u, lam[i], i))?))
            .collect()
    }
}

impl Smooth for Reduced<'_> {
    fn value(&mut self, s: &[f64]) -> Result<f64> {
        let u = self.controls(s);
        let x = self.state(&u)?;
        self.p.cost(&x, &u)
    }

    fn gradient(&mut self, s: &[f64]) -> Result<(Vec<f64>, f64)> {
        let u = self.controls(s);
        let x = self.state(&u)?;
        let lam = self.costate(&x, &u)?;
        let h_u = self.stationarity(&x, &u, &lam)?;
        // dJ/du_i = mu_i H_u(i), so dJ/ds_i = sqrt(mu_i) H_u(i)
        let grad = h_u.iter().zip(&self.sqrt_mu).map(|(h, r)| h * r).collect();
        let measure = h_u.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        Ok((grad, measure))
    }
}
