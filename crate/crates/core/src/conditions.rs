//! Pointwise residuals of the first-order necessary conditions, and the convexity-based
//! sufficiency check.
//!
//! Residuals are reported on the points where they are finitely computable. The
//! Euler-Lagrange residual needs the delta derivative of t -> f_v(...), which consumes two
//! forward points, so it lives on T^κκ (indices 0 ..= kappa_last - 1). Multiplier grids hold
//! lam^sigma samples and are never read at the final point.

use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::problem::{ControlProblem, VariationalProblem};
use crate::timescale::{delta_integral_of, GridFunction};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HamiltonianResiduals {
    /// x^Delta - H_lam on T^κ.
    pub state: Vec<f64>,
    /// (lam^sigma)^Delta + H_x on T^κκ.
    pub costate: Vec<f64>,
    /// H_u on T^κ.
    pub stationarity: Vec<f64>,
    /// lam^sigma(rho(T)) - int_{rho(T)}^T H_x - int_a^T H_z.
    pub transversality: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    /// f_v^Delta - f_x on T^κκ; empty for control problems.
    pub el_residuals: Vec<f64>,
    pub transversality: f64,
    pub hamiltonian: Option<HamiltonianResiduals>,
    pub sup_norm: f64,
}

fn sup_abs<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    values.into_iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

impl ResidualReport {
    fn variational(el_residuals: Vec<f64>, transversality: f64) -> Self {
        let sup_norm = sup_abs(&el_residuals).max(transversality.abs());
        Self {
            el_residuals,
            transversality,
            hamiltonian: None,
            sup_norm,
        }
    }

    fn control(h: HamiltonianResiduals) -> Self {
        let sup_norm = sup_abs(h.state.iter().chain(&h.costate).chain(&h.stationarity)).max(h.transversality.abs());
        Self {
            el_residuals: Vec::new(),
            transversality: h.transversality,
            hamiltonian: Some(h),
            sup_norm,
        }
    }

    /// Largest residual excluding the state equation.
    pub fn sup_norm_without_state(&self) -> f64 {
        match &self.hamiltonian {
            Some(h) => sup_abs(h.costate.iter().chain(&h.stationarity)).max(h.transversality.abs()),
            None => self.sup_norm,
        }
    }

    pub fn state_sup(&self) -> f64 {
        self.hamiltonian.as_ref().map_or(0.0, |h| sup_abs(&h.state))
    }

    /// Human-readable table, one row per scale point.
    pub fn table(&self, points: &[f64]) -> String {
        let mut out = String::new();
        let cell = |v: Option<&f64>| v.map_or_else(|| format!("{:>14}", "-"), |v| format!("{v:>14.6e}"));
        match &self.hamiltonian {
            None => {
                let _ = writeln!(out, "{:>14} {:>14}", "t", "euler-lagrange");
                for (i, t) in points.iter().enumerate() {
                    let _ = writeln!(out, "{t:>14.6} {}", cell(self.el_residuals.get(i)));
                }
            }
            Some(h) => {
                let _ = writeln!(
                    out,
                    "{:>14} {:>14} {:>14} {:>14}",
                    "t", "state", "costate", "stationarity"
                );
                for (i, t) in points.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{t:>14.6} {} {} {}",
                        cell(h.state.get(i)),
                        cell(h.costate.get(i)),
                        cell(h.stationarity.get(i))
                    );
                }
            }
        }
        let _ = writeln!(out, "transversality: {:.6e}", self.transversality);
        let _ = write!(out, "sup-norm:       {:.6e}", self.sup_norm);
        out
    }
}

/// f_v^Delta(t) - f_x(t) at every t in T^κκ.
pub fn euler_lagrange_residual(p: &VariationalProblem, x: &GridFunction) -> Result<Vec<f64>> {
    p.check_admissible(x)?;
    let partials = p.partials(x)?;
    let scale = p.scale();
    Ok((0..scale.kappa_last())
        .map(|i| (partials[i + 1].f_v - partials[i].f_v) / scale.mu_unchecked(i) - partials[i].f_x)
        .collect())
}

struct EndTerms {
    f_v_last: f64,
    f_x_tail: f64,
    f_z_integral: f64,
}

fn end_terms(p: &VariationalProblem, x: &GridFunction) -> Result<(EndTerms, Vec<f64>)> {
    p.check_admissible(x)?;
    let scale = p.scale();
    let kappa = scale.kappa_last();
    let partials = p.partials(x)?;
    let mut f_x = vec![0.0; scale.len()];
    let mut f_z = vec![0.0; scale.len()];
    for (i, pp) in partials.iter().enumerate() {
        f_x[i] = pp.f_x;
        f_z[i] = pp.f_z;
    }
    let terms = EndTerms {
        f_v_last: partials[kappa].f_v,
        f_x_tail: delta_integral_of(scale, &f_x, kappa, scale.last_index())?,
        f_z_integral: delta_integral_of(scale, &f_z, 0, scale.last_index())?,
    };
    Ok((terms, f_x))
}

/// f_v(rho(T)) + int_{rho(T)}^T f_x + int_a^T f_z, valid on every time scale.
pub fn transversality_residual(p: &VariationalProblem, x: &GridFunction) -> Result<f64> {
    let (e, _) = end_terms(p, x)?;
    Ok(e.f_v_last + e.f_x_tail + e.f_z_integral)
}

/// The regular-scale form: the tail integral replaced by mu(rho(T)) f_x(rho(T)).
pub fn transversality_residual_regular(p: &VariationalProblem, x: &GridFunction) -> Result<f64> {
    if !p.scale().is_regular() {
        return Err(Error::Unsupported("the regular-scale transversality form needs a regular time scale".into()));
    }
    let (e, f_x) = end_terms(p, x)?;
    let kappa = p.scale().kappa_last();
    Ok(e.f_v_last + p.scale().mu_unchecked(kappa) * f_x[kappa] + e.f_z_integral)
}

/// Classical natural boundary condition f_v(T) + int_a^T f_z dt on a uniform sampling.
///
/// Evaluated at t = T with x(T) and the backward difference quotient at T; this is the
/// mesh limit of [`transversality_residual`].
pub fn transversality_residual_classical(p: &VariationalProblem, x: &GridFunction) -> Result<f64> {
    let scale = p.scale();
    if !scale.is_uniform() {
        return Err(Error::Unsupported("the classical transversality form needs a uniform sampling".into()));
    }
    let (e, _) = end_terms(p, x)?;
    let kappa = scale.kappa_last();
    let env = Env::txvz(scale.last(), x.end_value(), x.delta_derivative_unchecked(kappa), x.end_value());
    Ok(p.partial_v().eval(&env)? + e.f_z_integral)
}

/// Integer-grid form: f_x(T-1) + f_{Delta x}(T-1) + sum_{t=a}^{T-1} f_z.
pub fn transversality_residual_discrete(p: &VariationalProblem, x: &GridFunction) -> Result<f64> {
    if !p.scale().is_integer_grid() {
        return Err(Error::Unsupported("the discrete transversality form needs an integer grid".into()));
    }
    let (e, f_x) = end_terms(p, x)?;
    let kappa = p.scale().kappa_last();
    Ok(e.f_v_last + f_x[kappa] + e.f_z_integral)
}

/// Euler-Lagrange residuals and the general transversality residual.
pub fn variational_report(p: &VariationalProblem, x: &GridFunction) -> Result<ResidualReport> {
    Ok(ResidualReport::variational(
        euler_lagrange_residual(p, x)?,
        transversality_residual(p, x)?,
    ))
}

struct HamiltonianSamples {
    h_x: Vec<f64>,
    h_z: Vec<f64>,
    h_u: Vec<f64>,
    g: Vec<f64>,
}

fn sample_hamiltonian(p: &ControlProblem, x: &GridFunction, u: &GridFunction, lam: &GridFunction) -> Result<HamiltonianSamples> {
    p.check_admissible(x)?;
    for grid in [u, lam] {
        if !x.same_scale(grid) {
            return Err(Error::ScaleMismatch);
        }
    }
    let n = p.scale().len();
    let mut s = HamiltonianSamples {
        h_x: vec![0.0; n],
        h_z: vec![0.0; n],
        h_u: vec![0.0; n],
        g: vec![0.0; n],
    };
    for i in 0..=p.scale().kappa_last() {
        let env = p.point_env(x.values(), u.values(), lam.values()[i], i);
        s.h_x[i] = p.h_x.eval(&env)?;
        s.h_z[i] = p.h_z.eval(&env)?;
        s.h_u[i] = p.h_u.eval(&env)?;
        s.g[i] = p.dynamics().eval(&env)?;
    }
    Ok(s)
}

/// State, costate, stationarity and transversality residuals of the Hamiltonian system
/// with H = f + lam^sigma g. `u` holds u^sigma samples and `lam` holds lam^sigma samples.
pub fn hamiltonian_residuals(
    p: &ControlProblem,
    x: &GridFunction,
    u: &GridFunction,
    lam: &GridFunction,
) -> Result<ResidualReport> {
    let s = sample_hamiltonian(p, x, u, lam)?;
    let scale = p.scale();
    let kappa = scale.kappa_last();
    let lv = lam.values();

    let state = (0..=kappa).map(|i| x.delta_derivative_unchecked(i) - s.g[i]).collect();
    let costate = (0..kappa)
        .map(|i| (lv[i + 1] - lv[i]) / scale.mu_unchecked(i) + s.h_x[i])
        .collect();
    let stationarity = s.h_u[..=kappa].to_vec();
    let transversality = lv[kappa]
        - delta_integral_of(scale, &s.h_x, kappa, scale.last_index())?
        - delta_integral_of(scale, &s.h_z, 0, scale.last_index())?;

    Ok(ResidualReport::control(HamiltonianResiduals {
        state,
        costate,
        stationarity,
        transversality,
    }))
}

/// Classical control transversality lam(T) - int_a^T H_z dt on a uniform sampling, with
/// lam(T) approximated by the stored lam^sigma(rho(T)).
pub fn transversality_residual_control_classical(
    p: &ControlProblem,
    x: &GridFunction,
    u: &GridFunction,
    lam: &GridFunction,
) -> Result<f64> {
    let scale = p.scale();
    if !scale.is_uniform() {
        return Err(Error::Unsupported("the classical transversality form needs a uniform sampling".into()));
    }
    let s = sample_hamiltonian(p, x, u, lam)?;
    Ok(lam.values()[scale.kappa_last()] - delta_integral_of(scale, &s.h_z, 0, scale.last_index())?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SufficiencyOptions {
    pub samples: usize,
    /// Half-width of the sampling box for (x, u, z), centred at the origin.
    pub half_width: f64,
    pub seed: u64,
}

impl Default for SufficiencyOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            half_width: 10.0,
            seed: 0,
        }
    }
}

/// Sample point that refutes one of the sufficiency hypotheses.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    /// (x, u, z)
    pub first: [f64; 3],
    pub second: [f64; 3],
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Sufficiency {
    /// f passed joint midpoint-convexity sampling and g is linear in (x, u, z): any
    /// solution of the Hamiltonian system is a global minimizer.
    Sufficient,
    Inconclusive { witness: Witness },
}

impl Sufficiency {
    pub fn is_sufficient(&self) -> bool {
        matches!(self, Sufficiency::Sufficient)
    }
}

impl fmt::Display for Sufficiency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sufficiency::Sufficient => write!(
                f,
                "sufficient (f jointly convex, g linear in (x, u, z): extremals are global minimizers)"
            ),
            Sufficiency::Inconclusive { witness } => write!(
                f,
                "inconclusive ({} at t = {}, (x, u, z) = {:?} / {:?})",
                witness.reason, witness.t, witness.first, witness.second
            ),
        }
    }
}

const CONTROL_VARS: [Var; 3] = [Var::X, Var::U, Var::Z];

fn env3(t: f64, p: [f64; 3]) -> Env {
    Env::txulz(t, p[0], p[1], 0.0, p[2])
}

/// Tests the hypotheses of the convexity/linearity sufficiency theorem.
///
/// g must be linear in (x, u, z): its symbolic second partials vanish at every sample and
/// g(t, 0, 0, 0) = 0 at every point of T^κ. f must pass midpoint convexity on
/// `opts.samples` random pairs drawn from the box. Sampling can refute convexity but only
/// heuristically confirm it.
pub fn sufficiency_check(p: &ControlProblem, opts: &SufficiencyOptions) -> Sufficiency {
    let scale = p.scale();
    let times = &scale.points()[..=scale.kappa_last()];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let w = opts.half_width;
    let draw = |rng: &mut ChaCha8Rng| [rng.gen_range(-w..=w), rng.gen_range(-w..=w), rng.gen_range(-w..=w)];
    let inconclusive = |t: f64, first: [f64; 3], second: [f64; 3], reason: String| Sufficiency::Inconclusive {
        witness: Witness {
            t,
            first,
            second,
            reason,
        },
    };

    let g = p.dynamics();
    for &t in times {
        match g.eval(&env3(t, [0.0; 3])) {
            Ok(c) if c.abs() <= 1e-12 => {}
            Ok(c) => return inconclusive(t, [0.0; 3], [0.0; 3], format!("g has constant term {c}")),
            Err(e) => return inconclusive(t, [0.0; 3], [0.0; 3], format!("g not evaluable: {e}")),
        }
    }
    let second_partials: Vec<(Var, Var, Expr)> = CONTROL_VARS
        .iter()
        .enumerate()
        .flat_map(|(k, &a)| CONTROL_VARS[k..].iter().map(move |&b| (a, b)))
        .map(|(a, b)| (a, b, g.diff(a).diff(b)))
        .collect();
    for s in 0..opts.samples.max(1) {
        let t = times[s % times.len()];
        let point = draw(&mut rng);
        for (a, b, d2) in &second_partials {
            match d2.eval(&env3(t, point)) {
                Ok(v) if v.abs() <= 1e-12 => {}
                Ok(v) => return inconclusive(t, point, point, format!("g is not linear: d2g/d{a}d{b} = {v}")),
                Err(e) => return inconclusive(t, point, point, format!("g not evaluable: {e}")),
            }
        }
    }

    let f = p.running_cost();
    for _ in 0..opts.samples {
        let t = times[rng.gen_range(0..times.len())];
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0];
        let values = (f.eval(&env3(t, a)), f.eval(&env3(t, b)), f.eval(&env3(t, mid)));
        match values {
            (Ok(fa), Ok(fb), Ok(fm)) => {
                let slack = 1e-12 * (1.0 + fa.abs() + fb.abs());
                if fm > 0.5 * (fa + fb) + slack {
                    return inconclusive(t, a, b, format!("f fails midpoint convexity ({fm} > {})", 0.5 * (fa + fb)));
                }
            }
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
                return inconclusive(t, a, b, format!("f not evaluable: {e}"));
            }
        }
    }
    Sufficiency::Sufficient
}
