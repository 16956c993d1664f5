//! The free end-point variational problem and its optimal-control generalisation.
//!
//! Both integrands are evaluated at the sigma-shifted state: on every interval
//! [t_i, t_{i+1}) the Lagrangian sees `x = x(t_{i+1})`, `v = (x(t_{i+1}) - x(t_i)) / mu(t_i)`
//! (or `u = u^sigma(t_i)`) and `z = x(T)`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::timescale::{GridFunction, TimeScale};

/// Tolerance on x(a) = alpha, relative to max(1, |alpha|).
pub const ADMISSIBILITY_TOLERANCE: f64 = 1e-12;

fn check_variables(what: &str, e: &Expr, allowed: &[Var]) -> Result<()> {
    if let Some(bad) = e.variables().into_iter().find(|v| !allowed.contains(v)) {
        let names: Vec<&str> = allowed.iter().map(|v| v.name()).collect();
        return Err(Error::InvalidProblem(format!(
            "{what} uses `{bad}` but may only depend on {}",
            names.join(", ")
        )));
    }
    Ok(())
}

fn check_scale(scale: &TimeScale) -> Result<()> {
    if scale.len() < 3 {
        return Err(Error::InvalidProblem(format!(
            "the time scale needs at least 3 points, got {}",
            scale.len()
        )));
    }
    Ok(())
}

fn check_admissible(scale: &Arc<TimeScale>, alpha: f64, x: &GridFunction) -> Result<()> {
    if !(Arc::ptr_eq(scale, x.scale()) || **scale == **x.scale()) {
        return Err(Error::ScaleMismatch);
    }
    let x0 = x.values()[0];
    if (x0 - alpha).abs() > ADMISSIBILITY_TOLERANCE * alpha.abs().max(1.0) {
        return Err(Error::Inadmissible(format!("x(a) = {x0} but alpha = {alpha}")));
    }
    Ok(())
}

/// Minimize the delta integral of f(t, x^sigma, x^Delta, x(T)) over [a, T] with x(a) = alpha.
#[derive(Clone, Debug)]
pub struct VariationalProblem {
    scale: Arc<TimeScale>,
    f: Expr,
    alpha: f64,
    f_x: Expr,
    f_v: Expr,
    f_z: Expr,
}

/// f and its partials evaluated on one interval.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointPartials {
    pub f_x: f64,
    pub f_v: f64,
    pub f_z: f64,
}

impl VariationalProblem {
    pub fn new(scale: Arc<TimeScale>, f: Expr, alpha: f64) -> Result<Self> {
        check_scale(&scale)?;
        check_variables("the Lagrangian", &f, &[Var::T, Var::X, Var::V, Var::Z])?;
        if !alpha.is_finite() {
            return Err(Error::InvalidProblem(format!("alpha must be finite, got {alpha}")));
        }
        Ok(Self {
            f_x: f.diff(Var::X),
            f_v: f.diff(Var::V),
            f_z: f.diff(Var::Z),
            scale,
            f,
            alpha,
        })
    }

    pub fn scale(&self) -> &Arc<TimeScale> {
        &self.scale
    }

    pub fn lagrangian(&self) -> &Expr {
        &self.f
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn partial_x(&self) -> &Expr {
        &self.f_x
    }

    pub fn partial_v(&self) -> &Expr {
        &self.f_v
    }

    pub fn partial_z(&self) -> &Expr {
        &self.f_z
    }

    pub fn check_admissible(&self, x: &GridFunction) -> Result<()> {
        check_admissible(&self.scale, self.alpha, x)
    }

    /// Arguments (t, x^sigma, x^Delta, x(T)) at κ-point `i`.
    #[inline]
    pub fn point_env(&self, x: &GridFunction, i: usize) -> Env {
        let xs = x.values();
        Env::txvz(
            self.scale.points()[i],
            xs[i + 1],
            x.delta_derivative_unchecked(i),
            x.end_value(),
        )
    }

    pub fn partials_at(&self, x: &GridFunction, i: usize) -> Result<PointPartials> {
        let env = self.point_env(x, i);
        Ok(PointPartials {
            f_x: self.f_x.eval(&env)?,
            f_v: self.f_v.eval(&env)?,
            f_z: self.f_z.eval(&env)?,
        })
    }

    /// Partials at every κ-point (index 0 ..= kappa_last).
    pub fn partials(&self, x: &GridFunction) -> Result<Vec<PointPartials>> {
        (0..=self.scale.kappa_last()).map(|i| self.partials_at(x, i)).collect()
    }

    /// L[x] = sum over [a, T) of mu(t) f(t, x(sigma(t)), x^Delta(t), x(T)).
    pub fn objective(&self, x: &GridFunction) -> Result<f64> {
        self.check_admissible(x)?;
        self.objective_unchecked(x)
    }

    pub(crate) fn objective_unchecked(&self, x: &GridFunction) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..=self.scale.kappa_last() {
            total += self.scale.mu_unchecked(i) * self.f.eval(&self.point_env(x, i))?;
        }
        Ok(total)
    }

    /// Gradient of L with respect to the free values x(t_1), ..., x(T).
    ///
    /// The last coordinate collects the z-slot contribution of every interval, so it equals
    /// the free end-point transversality expression.
    pub fn objective_gradient(&self, x: &GridFunction) -> Result<Vec<f64>> {
        self.check_admissible(x)?;
        let n = self.scale.len();
        let mut grad = vec![0.0; n - 1];
        let mut z_slot = 0.0;
        for i in 0..=self.scale.kappa_last() {
            let mu = self.scale.mu_unchecked(i);
            let p = self.partials_at(x, i)?;
            // x(t_{i+1}) enters through x^sigma and through x^Delta on interval i
            grad[i] += mu * p.f_x + p.f_v;
            if i > 0 {
                grad[i - 1] -= p.f_v;
            }
            z_slot += mu * p.f_z;
        }
        grad[n - 2] += z_slot;
        Ok(grad)
    }

    /// The same problem in control form, x^Delta = u^sigma.
    pub fn to_control(&self) -> ControlProblem {
        ControlProblem::new(self.scale.clone(), self.f.rename(Var::V, Var::U), Expr::Var(Var::U), self.alpha)
            .expect("a valid variational problem has a valid control form")
    }

    pub fn with_scale(&self, scale: Arc<TimeScale>) -> Result<Self> {
        Self::new(scale, self.f.clone(), self.alpha)
    }
}

/// Minimize the delta integral of f(t, x^sigma, u^sigma, x(T)) subject to
/// x^Delta = g(t, x^sigma, u^sigma, x(T)) and x(a) = alpha.
///
/// Control grids store u^sigma samples: the value at t_i is u(sigma(t_i)). The value at the
/// final point is never read.
#[derive(Clone, Debug)]
pub struct ControlProblem {
    scale: Arc<TimeScale>,
    f: Expr,
    g: Expr,
    alpha: f64,
    hamiltonian: Expr,
    pub(crate) h_x: Expr,
    pub(crate) h_u: Expr,
    pub(crate) h_z: Expr,
    pub(crate) f_x: Expr,
    pub(crate) f_z: Expr,
    pub(crate) g_x: Expr,
    pub(crate) g_z: Expr,
}

impl ControlProblem {
    pub fn new(scale: Arc<TimeScale>, f: Expr, g: Expr, alpha: f64) -> Result<Self> {
        check_scale(&scale)?;
        let allowed = [Var::T, Var::X, Var::U, Var::Z];
        check_variables("the running cost", &f, &allowed)?;
        check_variables("the dynamics", &g, &allowed)?;
        if !alpha.is_finite() {
            return Err(Error::InvalidProblem(format!("alpha must be finite, got {alpha}")));
        }
        // H = f + lam^sigma g
        let hamiltonian = Expr::Binary(
            crate::expr::BinaryOp::Add,
            Box::new(f.clone()),
            Box::new(Expr::Binary(
                crate::expr::BinaryOp::Mul,
                Box::new(Expr::Var(Var::Lam)),
                Box::new(g.clone()),
            )),
        );
        Ok(Self {
            h_x: hamiltonian.diff(Var::X),
            h_u: hamiltonian.diff(Var::U),
            h_z: hamiltonian.diff(Var::Z),
            f_x: f.diff(Var::X),
            f_z: f.diff(Var::Z),
            g_x: g.diff(Var::X),
            g_z: g.diff(Var::Z),
            hamiltonian,
            scale,
            f,
            g,
            alpha,
        })
    }

    pub fn scale(&self) -> &Arc<TimeScale> {
        &self.scale
    }

    pub fn running_cost(&self) -> &Expr {
        &self.f
    }

    pub fn dynamics(&self) -> &Expr {
        &self.g
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn hamiltonian(&self) -> &Expr {
        &self.hamiltonian
    }

    pub fn check_admissible(&self, x: &GridFunction) -> Result<()> {
        check_admissible(&self.scale, self.alpha, x)
    }

    /// Default bound on |x^Delta - g|: 1e-8 on discrete scales, relaxed by the largest
    /// graininess when the scale samples a dense interval (first-order consistency).
    pub fn default_dynamics_tolerance(&self) -> f64 {
        if self.scale.has_dense_samples() {
            1e-8 + self.scale.max_mu()
        } else {
            1e-8
        }
    }

    #[inline]
    pub(crate) fn point_env(&self, x: &[f64], u: &[f64], lam: f64, i: usize) -> Env {
        Env::txulz(self.scale.points()[i], x[i + 1], u[i], lam, x[x.len() - 1])
    }

    fn check_grid(&self, g: &GridFunction) -> Result<()> {
        if Arc::ptr_eq(&self.scale, g.scale()) || *self.scale == **g.scale() {
            Ok(())
        } else {
            Err(Error::ScaleMismatch)
        }
    }

    /// x^Delta(t) - g(t, x^sigma, u^sigma, x(T)) at every κ-point.
    pub fn dynamics_residuals(&self, x: &GridFunction, u: &GridFunction) -> Result<Vec<f64>> {
        self.check_grid(x)?;
        self.check_grid(u)?;
        (0..=self.scale.kappa_last())
            .map(|i| {
                let env = self.point_env(x.values(), u.values(), 0.0, i);
                Ok(x.delta_derivative_unchecked(i) - self.g.eval(&env)?)
            })
            .collect()
    }

    pub fn objective_control(&self, x: &GridFunction, u: &GridFunction) -> Result<f64> {
        self.objective_control_with_tolerance(x, u, self.default_dynamics_tolerance())
    }

    pub fn objective_control_with_tolerance(&self, x: &GridFunction, u: &GridFunction, tolerance: f64) -> Result<f64> {
        self.check_admissible(x)?;
        let residuals = self.dynamics_residuals(x, u)?;
        if let Some((index, &residual)) = residuals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        {
            if residual.abs() > tolerance {
                return Err(Error::DynamicsViolation {
                    index,
                    t: self.scale.points()[index],
                    residual,
                    tolerance,
                });
            }
        }
        self.cost(x.values(), u.values())
    }

    /// Delta integral of the running cost, without admissibility checks.
    pub(crate) fn cost(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..=self.scale.kappa_last() {
            total += self.scale.mu_unchecked(i) * self.f.eval(&self.point_env(x, u, 0.0, i))?;
        }
        Ok(total)
    }
}

/// Either problem class, for callers that load problems from text.
#[derive(Clone, Debug)]
pub enum Problem {
    Variational(VariationalProblem),
    Control(ControlProblem),
}

impl Problem {
    pub fn scale(&self) -> &Arc<TimeScale> {
        match self {
            Problem::Variational(p) => p.scale(),
            Problem::Control(p) => p.scale(),
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Problem::Variational(p) => p.alpha(),
            Problem::Control(p) => p.alpha(),
        }
    }

    pub fn as_variational(&self) -> Option<&VariationalProblem> {
        match self {
            Problem::Variational(p) => Some(p),
            Problem::Control(_) => None,
        }
    }

    /// The control form; a variational problem becomes x^Delta = u^sigma.
    pub fn as_control(&self) -> ControlProblem {
        match self {
            Problem::Variational(p) => p.to_control(),
            Problem::Control(p) => p.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Variational,
    Control,
}

/// Expression text with named numeric parameters, instantiated by token-wise substitution.
#[derive(Clone, Debug)]
pub struct ProblemTemplate {
    pub scale: Arc<TimeScale>,
    pub kind: ProblemKind,
    pub f: String,
    pub g: Option<String>,
    pub alpha: f64,
    pub params: Vec<(String, f64)>,
}

/// Checks that `name` can serve as a parameter: an identifier that is neither a reserved
/// variable nor a function name.
pub fn validate_param_name(name: &str) -> Result<()> {
    let mut chars = name.chars();
    let ident = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !ident {
        return Err(Error::InvalidProblem(format!("`{name}` is not a valid parameter name")));
    }
    if Var::from_name(name).is_some() || crate::expr::UnaryOp::from_function_name(name).is_some() {
        return Err(Error::InvalidProblem(format!(
            "parameter `{name}` collides with a reserved variable or function name"
        )));
    }
    Ok(())
}

/// Replaces every identifier token named in `params` by its parenthesized value.
pub fn substitute_params(text: &str, params: &[(String, f64)]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.char_indices().peekable();
    let mut prev_numeric = false;
    while let Some((start, c)) = chars.next() {
        if c.is_ascii_alphabetic() || c == '_' {
            let mut end = start + c.len_utf8();
            while let Some(&(i, d)) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '_' {
                    end = i + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let word = &text[start..end];
            // an exponent marker such as the `e` in `1e5` belongs to the number
            match params.iter().find(|(name, _)| name == word) {
                Some((_, value)) if !prev_numeric => out.push_str(&format!("({value:?})")),
                _ => out.push_str(word),
            }
            prev_numeric = false;
        } else {
            prev_numeric = c.is_ascii_digit() || c == '.';
            out.push(c);
        }
    }
    out
}

impl ProblemTemplate {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Builds the problem with `overrides` replacing the stored parameter values.
    pub fn instantiate(&self, overrides: &[(String, f64)]) -> Result<Problem> {
        let mut params = self.params.clone();
        for (name, value) in overrides {
            match params.iter_mut().find(|(n, _)| n == name) {
                Some(slot) => slot.1 = *value,
                None => return Err(Error::InvalidProblem(format!("unknown parameter `{name}`"))),
            }
        }
        for (name, _) in &params {
            validate_param_name(name)?;
        }
        let f = crate::expr::parse(&substitute_params(&self.f, &params))?;
        match self.kind {
            ProblemKind::Variational => {
                Ok(Problem::Variational(VariationalProblem::new(self.scale.clone(), f, self.alpha)?))
            }
            ProblemKind::Control => {
                let g_text = self
                    .g
                    .as_deref()
                    .ok_or_else(|| Error::InvalidProblem("a control problem needs dynamics `g`".into()))?;
                let g = crate::expr::parse(&substitute_params(g_text, &params))?;
                Ok(Problem::Control(ControlProblem::new(self.scale.clone(), f, g, self.alpha)?))
            }
        }
    }
}

/// sup |h^sigma| + sup |h^Delta| over T^κ for h = x - reference.
pub fn norm1(x: &GridFunction, reference: &GridFunction) -> Result<f64> {
    let h = x.sub(reference)?;
    let kappa = h.scale().kappa_last();
    let mut sup_sigma = 0.0_f64;
    let mut sup_delta = 0.0_f64;
    for i in 0..=kappa {
        sup_sigma = sup_sigma.max(h.values()[i + 1].abs());
        sup_delta = sup_delta.max(h.delta_derivative_unchecked(i).abs());
    }
    Ok(sup_sigma + sup_delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn arc_length(beta: f64, n: usize) -> VariationalProblem {
        let scale = Arc::new(TimeScale::uniform(0.0, 1.0, n).unwrap());
        let f = parse(&format!("sqrt(1+v^2) + {beta}*(z-1)^2")).unwrap();
        VariationalProblem::new(scale, f, 0.0).unwrap()
    }

    fn integer_control() -> ControlProblem {
        let scale = Arc::new(TimeScale::integers(0, 3).unwrap());
        ControlProblem::new(scale, parse("u^2 + t^2*(z-1)^2").unwrap(), parse("u").unwrap(), 0.0).unwrap()
    }

    #[test]
    fn arc_length_objective_on_the_diagonal() {
        let p = arc_length(1.0, 10);
        let x = GridFunction::from_fn(p.scale().clone(), |t| t);
        let l = p.objective(&x).unwrap();
        assert!((l - 2f64.sqrt()).abs() < 1e-14, "{l}");
    }

    #[test]
    fn constant_state_has_zero_energy() {
        let scale = Arc::new(TimeScale::qgrid(3.0, 0, 4, true).unwrap());
        let p = VariationalProblem::new(scale.clone(), parse("v^2").unwrap(), 2.5).unwrap();
        assert_eq!(p.objective(&GridFunction::constant(scale, 2.5)).unwrap(), 0.0);
    }

    #[test]
    fn integer_example_objective() {
        let p = integer_control();
        let c = 5.0 / 16.0;
        let x = GridFunction::from_fn(p.scale().clone(), |t| c * t);
        let u = GridFunction::constant(p.scale().clone(), c);
        assert!((p.objective_control(&x, &u).unwrap() - 0.3125).abs() < 1e-15);

        let vp = VariationalProblem::new(p.scale().clone(), parse("v^2 + t^2*(z-1)^2").unwrap(), 0.0).unwrap();
        assert!((vp.objective(&x).unwrap() - 0.3125).abs() < 1e-15);
    }

    #[test]
    fn continuous_control_example_costs_nothing() {
        let scale = Arc::new(TimeScale::uniform(-1.0, 1.0, 100).unwrap());
        let p = ControlProblem::new(scale.clone(), parse("u^2").unwrap(), parse("u + z*t").unwrap(), 1.0).unwrap();
        let x = GridFunction::from_fn(scale.clone(), |t| 0.5 * t * t + 0.5);
        let u = GridFunction::constant(scale, 0.0);
        assert_eq!(p.objective_control(&x, &u).unwrap(), 0.0);
    }

    #[test]
    fn admissibility_and_dynamics_violations() {
        let p = integer_control();
        let x = GridFunction::from_fn(p.scale().clone(), |t| t + 1.0);
        let u = GridFunction::constant(p.scale().clone(), 1.0);
        assert!(matches!(p.objective_control(&x, &u), Err(Error::Inadmissible(_))));

        let x = GridFunction::from_fn(p.scale().clone(), |t| t * t);
        let err = p.objective_control(&x, &u).unwrap_err();
        // x^Delta = 2t + 1, worst mismatch 4 at t = 2
        assert!(matches!(err, Error::DynamicsViolation { index: 2, residual, .. } if residual == 4.0));

        let other = Arc::new(TimeScale::integers(0, 4).unwrap());
        let x = GridFunction::constant(other, 0.0);
        assert!(matches!(p.check_admissible(&x), Err(Error::ScaleMismatch)));
    }

    #[test]
    fn variable_roles_are_enforced() {
        let scale = Arc::new(TimeScale::integers(0, 3).unwrap());
        assert!(VariationalProblem::new(scale.clone(), parse("u^2").unwrap(), 0.0).is_err());
        assert!(ControlProblem::new(scale.clone(), parse("v^2").unwrap(), parse("u").unwrap(), 0.0).is_err());
        assert!(ControlProblem::new(scale, parse("u^2").unwrap(), parse("lam").unwrap(), 0.0).is_err());
        let short = Arc::new(TimeScale::integers(0, 1).unwrap());
        assert!(VariationalProblem::new(short, parse("v^2").unwrap(), 0.0).is_err());
    }

    #[test]
    fn norm1_examples() {
        let scale = Arc::new(TimeScale::integers(0, 3).unwrap());
        let zero = GridFunction::constant(scale.clone(), 0.0);
        let id = GridFunction::from_fn(scale.clone(), |t| t);
        assert_eq!(norm1(&zero, &zero).unwrap(), 0.0);
        assert_eq!(norm1(&id, &zero).unwrap(), 4.0);
        let twice = id.map(|v| 2.0 * v);
        assert_eq!(norm1(&twice, &zero).unwrap(), 2.0 * norm1(&id, &zero).unwrap());
        let other = GridFunction::constant(Arc::new(TimeScale::integers(0, 4).unwrap()), 0.0);
        assert!(matches!(norm1(&id, &other), Err(Error::ScaleMismatch)));
    }

    #[test]
    fn control_form_matches_variational_objective() {
        let scale = Arc::new(TimeScale::explicit(&[0.0, 0.3, 1.0, 1.2, 2.0]).unwrap());
        let vp = VariationalProblem::new(scale.clone(), parse("x*v + v^2 + sin(t)*(z-0.5)^2").unwrap(), 0.2).unwrap();
        let cp = vp.to_control();
        let x = GridFunction::from_fn(scale.clone(), |t| 0.2 + t * t - 0.3 * t);
        let mut u = vec![0.0; scale.len()];
        for (i, ui) in u.iter_mut().enumerate().take(scale.len() - 1) {
            *ui = x.delta_derivative(i).unwrap();
        }
        let u = GridFunction::new(scale, u).unwrap();
        let a = vp.objective(&x).unwrap();
        let b = cp.objective_control(&x, &u).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn parameter_substitution_is_token_wise() {
        let params = vec![("beta".to_string(), 2.5), ("k".to_string(), -1.0)];
        assert_eq!(
            substitute_params("sqrt(1+v^2) + beta*(z-1)^2", &params),
            "sqrt(1+v^2) + (2.5)*(z-1)^2"
        );
        assert_eq!(substitute_params("k*x + kk + betax", &params), "(-1.0)*x + kk + betax");
        let e = vec![("e".to_string(), 3.0)];
        assert_eq!(substitute_params("1e5*e", &e), "1e5*(3.0)");
        assert!(validate_param_name("lam").is_err());
        assert!(validate_param_name("sqrt").is_err());
        assert!(validate_param_name("2b").is_err());
        assert!(validate_param_name("beta_2").is_ok());
    }

    #[test]
    fn template_instantiation() {
        let template = ProblemTemplate {
            scale: Arc::new(TimeScale::uniform(0.0, 1.0, 10).unwrap()),
            kind: ProblemKind::Variational,
            f: "sqrt(1+v^2) + beta*(z-1)^2".into(),
            g: None,
            alpha: 0.0,
            params: vec![("beta".into(), 1.0)],
        };
        let Problem::Variational(p) = template.instantiate(&[("beta".into(), 15.0)]).unwrap() else {
            panic!("expected a variational problem");
        };
        let env = Env::txvz(0.0, 0.0, 0.0, 0.0);
        assert_eq!(p.lagrangian().eval(&env).unwrap(), 16.0);
        assert!(template.instantiate(&[("gamma".into(), 1.0)]).is_err());

        let control = ProblemTemplate {
            kind: ProblemKind::Control,
            ..template
        };
        assert!(control.instantiate(&[]).is_err());
    }
}
