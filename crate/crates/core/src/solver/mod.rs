//! Direct transcription, Newton on the stationarity system, and the exact test oracle.

mod bfgs;
mod control;
mod newton;
mod oracle;
mod sweep;

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conditions::{
    hamiltonian_residuals, sufficiency_check, variational_report, ResidualReport, Sufficiency, SufficiencyOptions,
};
use crate::error::{Error, Result};
use crate::problem::{ControlProblem, Problem, VariationalProblem};
use crate::timescale::{GridFunction, TimeScale};

use bfgs::{minimize, Outcome, Settings, Smooth};
use control::Reduced;

pub use oracle::{GRID_SEARCH_MAX_POINTS, GRID_SEARCH_RESOLUTION};
pub use sweep::{sweep, SweepRow};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Bound on the sup-norm of the necessary-condition residuals.
    pub gradient_tolerance: f64,
    /// Relative step length below which quasi-Newton iteration stops.
    pub step_tolerance: f64,
    pub finite_difference_step: f64,
    /// Seeds random restarts and the sufficiency sampler.
    pub seed: u64,
    /// Extra quasi-Newton runs when the first does not converge.
    pub restarts: usize,
    pub sufficiency_samples: usize,
    pub sufficiency_half_width: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        let s = SufficiencyOptions::default();
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-9,
            step_tolerance: 1e-12,
            finite_difference_step: 1e-6,
            seed: 0,
            restarts: 2,
            sufficiency_samples: s.samples,
            sufficiency_half_width: s.half_width,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gradient_tolerance", self.gradient_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("finite_difference_step", self.finite_difference_step),
            ("sufficiency_half_width", self.sufficiency_half_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidProblem(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidProblem("max_iterations must be at least 1".into()));
        }
        Ok(())
    }

    pub fn sufficiency(&self) -> SufficiencyOptions {
        SufficiencyOptions {
            samples: self.sufficiency_samples,
            half_width: self.sufficiency_half_width,
            seed: self.seed,
        }
    }

    fn bfgs(&self) -> Settings {
        Settings {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            step_tolerance: self.step_tolerance,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    QuasiNewton,
    Newton,
    ExactQuadratic,
    GridSearch,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub x: GridFunction,
    /// u^sigma samples; the final entry is undefined (NaN).
    pub u: Option<GridFunction>,
    /// lam^sigma samples; the final entry is undefined (NaN).
    pub lam: Option<GridFunction>,
    pub objective_value: f64,
    /// Recomputed from the returned grids.
    pub report: ResidualReport,
    pub verdict: Sufficiency,
    pub converged: bool,
    pub iterations: usize,
    pub method: Method,
    /// Best objective so far after every accepted quasi-Newton step, restarts included.
    pub objective_history: Vec<f64>,
}

#[derive(Serialize)]
struct SolutionRecord<'a> {
    method: Method,
    converged: bool,
    iterations: usize,
    objective: f64,
    slope: f64,
    endpoint: f64,
    t: &'a [f64],
    x: &'a [f64],
    u: Option<&'a [f64]>,
    lambda_sigma: Option<&'a [f64]>,
    report: &'a ResidualReport,
    verdict: &'a Sufficiency,
}

fn csv_cell(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.16e}"),
        _ => String::new(),
    }
}

impl Solution {
    pub fn scale(&self) -> &Arc<TimeScale> {
        self.x.scale()
    }

    /// (x(T) - x(a)) / (T - a).
    pub fn slope(&self) -> f64 {
        let s = self.scale();
        (self.x.end_value() - self.x.values()[0]) / (s.last() - s.first())
    }

    pub fn endpoint(&self) -> f64 {
        self.x.end_value()
    }

    pub fn to_json(&self) -> String {
        let record = SolutionRecord {
            method: self.method,
            converged: self.converged,
            iterations: self.iterations,
            objective: self.objective_value,
            slope: self.slope(),
            endpoint: self.endpoint(),
            t: self.scale().points(),
            x: self.x.values(),
            u: self.u.as_ref().map(|g| g.values()),
            lambda_sigma: self.lam.as_ref().map(|g| g.values()),
            report: &self.report,
            verdict: &self.verdict,
        };
        serde_json::to_string_pretty(&record).expect("solution records always serialize")
    }

    /// CSV with columns t, x, u, lambda_sigma, el_residual. For control problems the last
    /// column carries the costate residual.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        w.write_record(["t", "x", "u", "lambda_sigma", "el_residual"]).map_err(csv_err)?;
        let residuals = match &self.report.hamiltonian {
            Some(h) => &h.costate,
            None => &self.report.el_residuals,
        };
        for (i, t) in self.scale().points().iter().enumerate() {
            let at = |g: &Option<GridFunction>| g.as_ref().map(|g| g.values()[i]);
            w.write_record([
                csv_cell(Some(*t)),
                csv_cell(Some(self.x.values()[i])),
                csv_cell(at(&self.u)),
                csv_cell(at(&self.lam)),
                csv_cell(residuals.get(i).copied()),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Variational objective in the scaled increments s_i = (x_{i+1} - x_i) / sqrt(mu_i), which
/// makes the leading Hessian term f_vv independent of the mesh.
struct Increments<'a> {
    p: &'a VariationalProblem,
    sqrt_mu: Vec<f64>,
}

impl Increments<'_> {
    fn grid(&self, s: &[f64]) -> GridFunction {
        let mut x = Vec::with_capacity(s.len() + 1);
        let mut acc = self.p.alpha();
        x.push(acc);
        for (s, r) in s.iter().zip(&self.sqrt_mu) {
            acc += s * r;
            x.push(acc);
        }
        GridFunction::new(self.p.scale().clone(), x).expect("one value per point")
    }
}

impl Smooth for Increments<'_> {
    fn value(&mut self, s: &[f64]) -> Result<f64> {
        self.p.objective_unchecked(&self.grid(s))
    }

    fn gradient(&mut self, s: &[f64]) -> Result<(Vec<f64>, f64)> {
        let g = self.p.objective_gradient(&self.grid(s))?;
        let m = g.len();
        // interior coordinates are -mu EL, the last one is the transversality expression
        let mut measure = g[m - 1].abs();
        for (k, gk) in g[..m - 1].iter().enumerate() {
            measure = measure.max((gk / self.p.scale().mu_unchecked(k)).abs());
        }
        let mut grad = vec![0.0; m];
        let mut suffix = 0.0;
        for k in (0..m).rev() {
            suffix += g[k];
            grad[k] = self.sqrt_mu[k] * suffix;
        }
        Ok((grad, measure))
    }
}

/// Runs quasi-Newton, then seeded restarts from the best iterate while unconverged.
fn minimize_with_restarts(obj: &mut impl Smooth, y0: Vec<f64>, opts: &SolveOptions) -> Result<Outcome> {
    let settings = opts.bfgs();
    let mut best = minimize(obj, y0, &settings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut history = best.values.clone();
    let mut iterations = best.iterations;
    for restart in 0..opts.restarts {
        if best.converged {
            break;
        }
        let mut start = best.y.clone();
        if restart > 0 {
            for v in &mut start {
                *v += 1e-3 * (1.0 + v.abs()) * rng.gen_range(-1.0..1.0);
            }
        }
        let Ok(run) = minimize(obj, start, &settings) else {
            continue;
        };
        iterations += run.iterations;
        let tie = run.value <= best.value + 1e-12 * (1.0 + best.value.abs());
        if run.value < best.value || (run.converged && tie) {
            let mut floor = *history.last().expect("initial value");
            for v in &run.values[1..] {
                floor = floor.min(*v);
                history.push(floor);
            }
            best = run;
        }
    }
    best.values = history;
    best.iterations = iterations;
    Ok(best)
}

fn variational_solution(
    p: &VariationalProblem,
    x: GridFunction,
    opts: &SolveOptions,
    converged: bool,
    iterations: usize,
    method: Method,
    objective_history: Vec<f64>,
) -> Result<Solution> {
    Ok(Solution {
        objective_value: p.objective(&x)?,
        report: variational_report(p, &x)?,
        verdict: sufficiency_check(&p.to_control(), &opts.sufficiency()),
        x,
        u: None,
        lam: None,
        converged,
        iterations,
        method,
        objective_history,
    })
}

fn padded(scale: &Arc<TimeScale>, mut values: Vec<f64>) -> Result<GridFunction> {
    values.resize(scale.len(), f64::NAN);
    GridFunction::new(scale.clone(), values)
}

#[allow(clippy::too_many_arguments)]
fn control_solution(
    p: &ControlProblem,
    x: Vec<f64>,
    u: Vec<f64>,
    lam: Vec<f64>,
    opts: &SolveOptions,
    converged: bool,
    iterations: usize,
    method: Method,
    objective_history: Vec<f64>,
) -> Result<Solution> {
    let scale = p.scale();
    let x = GridFunction::new(scale.clone(), x)?;
    let u = padded(scale, u)?;
    let lam = padded(scale, lam)?;
    Ok(Solution {
        objective_value: p.cost(x.values(), u.values())?,
        report: hamiltonian_residuals(p, &x, &u, &lam)?,
        verdict: sufficiency_check(p, &opts.sufficiency()),
        x,
        u: Some(u),
        lam: Some(lam),
        converged,
        iterations,
        method,
        objective_history,
    })
}

/// Minimizes the transcribed objective over x at every point but a, starting from x = alpha.
pub fn solve_variational(p: &VariationalProblem, opts: &SolveOptions) -> Result<Solution> {
    opts.validate()?;
    let scale = p.scale();
    let sqrt_mu = (0..=scale.kappa_last()).map(|i| scale.mu_unchecked(i).sqrt()).collect();
    let mut obj = Increments { p, sqrt_mu };
    let out = minimize_with_restarts(&mut obj, vec![0.0; scale.len() - 1], opts)?;
    let x = obj.grid(&out.y);
    variational_solution(p, x, opts, out.converged, out.iterations, Method::QuasiNewton, out.values)
}

/// Minimizes over u^sigma with the state propagated forward and the costate recovered exactly.
pub fn solve_control(p: &ControlProblem, opts: &SolveOptions) -> Result<Solution> {
    opts.validate()?;
    let mut reduced = Reduced::new(p);
    let start = vec![0.0; reduced.dimension()];
    let out = minimize_with_restarts(&mut reduced, start, opts)?;
    let u = reduced.controls(&out.y);
    let x = reduced.state(&u)?;
    let lam = reduced.costate(&x, &u)?;
    control_solution(p, x, u, lam, opts, out.converged, out.iterations, Method::QuasiNewton, out.values)
}

/// Damped Newton on [Euler-Lagrange residuals on T^κκ; transversality] from `x0`.
pub fn solve_stationarity(p: &VariationalProblem, opts: &SolveOptions, x0: &GridFunction) -> Result<Solution> {
    opts.validate()?;
    let out = newton::solve(
        p,
        x0,
        opts.max_iterations,
        opts.gradient_tolerance,
        opts.finite_difference_step,
    )?;
    variational_solution(p, out.x, opts, true, out.iterations, Method::Newton, Vec::new())
}

/// Either problem class, borrowed.
#[derive(Clone, Copy, Debug)]
pub enum ProblemRef<'a> {
    Variational(&'a VariationalProblem),
    Control(&'a ControlProblem),
}

impl<'a> From<&'a VariationalProblem> for ProblemRef<'a> {
    fn from(p: &'a VariationalProblem) -> Self {
        ProblemRef::Variational(p)
    }
}

impl<'a> From<&'a ControlProblem> for ProblemRef<'a> {
    fn from(p: &'a ControlProblem) -> Self {
        ProblemRef::Control(p)
    }
}

impl<'a> From<&'a Problem> for ProblemRef<'a> {
    fn from(p: &'a Problem) -> Self {
        match p {
            Problem::Variational(p) => ProblemRef::Variational(p),
            Problem::Control(p) => ProblemRef::Control(p),
        }
    }
}

/// Test oracle: exact solve of the stationarity (or KKT) system when the integrands are
/// quadratic and the dynamics affine in the unknowns, otherwise a refinement grid search on
/// scales of at most [`GRID_SEARCH_MAX_POINTS`] points.
pub fn brute_force_oracle<'a>(p: impl Into<ProblemRef<'a>>) -> Result<Solution> {
    let opts = SolveOptions::default();
    match p.into() {
        ProblemRef::Variational(p) => {
            let oracle::OracleResult::Variational { x, exact } = oracle::variational(p)? else {
                unreachable!("variational oracle returns a state grid")
            };
            let method = if exact { Method::ExactQuadratic } else { Method::GridSearch };
            let x = GridFunction::new(p.scale().clone(), x)?;
            variational_solution(p, x, &opts, true, 0, method, Vec::new())
        }
        ProblemRef::Control(p) => {
            let oracle::OracleResult::Control { x, u, lam, exact } = oracle::control(p)? else {
                unreachable!("control oracle returns state and control grids")
            };
            let lam = match lam {
                Some(lam) => lam,
                None => Reduced::new(p).costate(&x, &u)?,
            };
            let method = if exact { Method::ExactQuadratic } else { Method::GridSearch };
            control_solution(p, x, u, lam, &opts, true, 0, method, Vec::new())
        }
    }
}

/// Dispatches to [`solve_variational`] or [`solve_control`].
pub fn solve(p: &Problem, opts: &SolveOptions) -> Result<Solution> {
    match p {
        Problem::Variational(p) => solve_variational(p, opts),
        Problem::Control(p) => solve_control(p, opts),
    }
}

/// Exact lam^sigma for a given state and control: the costate recurrence swept backward
/// from the transversality equation. The final entry is undefined (NaN).
pub fn recover_costate(p: &ControlProblem, x: &GridFunction, u: &GridFunction) -> Result<GridFunction> {
    p.check_admissible(x)?;
    if !x.same_scale(u) {
        return Err(Error::ScaleMismatch);
    }
    let lam = Reduced::new(p).costate(x.values(), u.values())?;
    padded(p.scale(), lam)
}
