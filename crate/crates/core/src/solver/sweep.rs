//! One solve per parameter value.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::ProblemTemplate;

use super::{solve, SolveOptions};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub slope: Option<f64>,
    pub endpoint: Option<f64>,
    pub objective: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

/// Solves `template` once per entry of `values`, substituting each for `param`. Failures
/// are recorded in the row and the sweep continues.
pub fn sweep(template: &ProblemTemplate, param: &str, values: &[f64], opts: &SolveOptions) -> Result<Vec<SweepRow>> {
    if template.param(param).is_none() {
        return Err(Error::InvalidProblem(format!("unknown parameter `{param}`")));
    }
    Ok(values
        .iter()
        .map(|&value| {
            let solved = template
                .instantiate(&[(param.to_string(), value)])
                .and_then(|p| solve(&p, opts));
            match solved {
                Ok(s) => SweepRow {
                    value,
                    slope: Some(s.slope()),
                    endpoint: Some(s.endpoint()),
                    objective: Some(s.objective_value),
                    converged: s.converged,
                    error: None,
                },
                Err(e) => SweepRow {
                    value,
                    slope: None,
                    endpoint: None,
                    objective: None,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}
