//! Problem files: `[section]` headers and `key = value` lines.
//!
//! ```text
//! [timescale]
//! kind = uniform        # explicit | integers | uniform | qgrid
//! a = 0
//! b = 1
//! n = 200
//!
//! [problem]
//! type = variational    # or control, which also needs g
//! f = sqrt(1+v^2) + beta*(z-1)^2
//! alpha = 0
//! params = beta=1
//!
//! [solver]
//! gradient_tolerance = 1e-9
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::ParseErrorKind;
use crate::problem::{substitute_params, validate_param_name, Problem, ProblemKind, ProblemTemplate};
use crate::solver::SolveOptions;
use crate::timescale::TimeScale;

const TIMESCALE_KEYS: [&str; 10] = ["kind", "points", "dense", "a", "b", "n", "q", "k_min", "k_max", "include_zero"];
const PROBLEM_KEYS: [&str; 5] = ["type", "f", "g", "alpha", "params"];
const SOLVER_KEYS: [&str; 8] = [
    "max_iterations",
    "gradient_tolerance",
    "step_tolerance",
    "finite_difference_step",
    "seed",
    "restarts",
    "sufficiency_samples",
    "sufficiency_half_width",
];

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Default)]
struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn require(&self, name: &str, key: &str) -> Result<&Entry> {
        self.get(key).ok_or_else(|| Error::ProblemFile {
            line: self.line,
            message: format!("section [{name}] is missing `{key}`"),
        })
    }
}

fn file_error(line: usize, message: impl Into<String>) -> Error {
    Error::ProblemFile {
        line,
        message: message.into(),
    }
}

fn number<T: std::str::FromStr>(e: &Entry, key: &str) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| file_error(e.line, format!("`{key}` expects a number, got `{}`", e.value)))
}

fn boolean(e: &Entry, key: &str) -> Result<bool> {
    match e.value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(file_error(e.line, format!("`{key}` expects true or false, got `{}`", e.value))),
    }
}

fn list<T>(e: &Entry, key: &str, item: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    e.value
        .split(',')
        .map(|s| {
            item(s.trim()).ok_or_else(|| file_error(e.line, format!("`{key}` has a malformed entry `{}`", s.trim())))
        })
        .collect()
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    for q in ['"', '\''] {
        if v.len() >= 2 && v.starts_with(q) && v.ends_with(q) {
            return &v[1..v.len() - 1];
        }
    }
    v
}

/// Strips a `#` or `;` comment that starts a line or follows whitespace.
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if (b == b'#' || b == b';') && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

fn sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut out: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| file_error(line, format!("malformed section header `{content}`")))?
                .trim();
            if !["timescale", "problem", "solver"].contains(&name) {
                return Err(file_error(
                    line,
                    format!("unknown section [{name}]; expected [timescale], [problem] or [solver]"),
                ));
            }
            if out.contains_key(name) {
                return Err(file_error(line, format!("duplicate section [{name}]")));
            }
            out.insert(
                name.to_string(),
                Section {
                    line,
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name.to_string());
            continue;
        }
        let Some(section) = current.as_ref() else {
            return Err(file_error(line, "key outside of any section"));
        };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| file_error(line, format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim();
        let allowed: &[&str] = match section.as_str() {
            "timescale" => &TIMESCALE_KEYS,
            "problem" => &PROBLEM_KEYS,
            _ => &SOLVER_KEYS,
        };
        if !allowed.contains(&key) {
            return Err(file_error(line, format!("unknown key `{key}` in section [{section}]")));
        }
        let entries = &mut out.get_mut(section).expect("section registered").entries;
        if entries.contains_key(key) {
            return Err(file_error(line, format!("duplicate key `{key}` in section [{section}]")));
        }
        entries.insert(
            key.to_string(),
            Entry {
                value: unquote(value).to_string(),
                line,
            },
        );
    }
    Ok(out)
}

fn parse_scale(s: &Section) -> Result<TimeScale> {
    let kind = s.require("timescale", "kind")?;
    let at = |e: &Entry, r: Result<TimeScale>| r.map_err(|err| file_error(e.line, err.to_string()));
    match kind.value.as_str() {
        "explicit" => {
            let points = s.require("timescale", "points")?;
            let values = list(points, "points", |v| v.parse::<f64>().ok())?;
            match s.get("dense") {
                Some(d) => {
                    let mask = list(d, "dense", |v| match v {
                        "1" | "true" => Some(true),
                        "0" | "false" => Some(false),
                        _ => None,
                    })?;
                    at(d, TimeScale::from_parts(&values, &mask))
                }
                None => at(points, TimeScale::explicit(&values)),
            }
        }
        "integers" => {
            let (a, b) = (s.require("timescale", "a")?, s.require("timescale", "b")?);
            at(kind, TimeScale::integers(number(a, "a")?, number(b, "b")?))
        }
        "uniform" => {
            let a = s.require("timescale", "a")?;
            let b = s.require("timescale", "b")?;
            let n = s.require("timescale", "n")?;
            at(kind, TimeScale::uniform(number(a, "a")?, number(b, "b")?, number(n, "n")?))
        }
        "qgrid" => {
            let q = s.require("timescale", "q")?;
            let lo = s.require("timescale", "k_min")?;
            let hi = s.require("timescale", "k_max")?;
            let zero = s.get("include_zero").map(|e| boolean(e, "include_zero")).transpose()?;
            at(
                kind,
                TimeScale::qgrid(number(q, "q")?, number(lo, "k_min")?, number(hi, "k_max")?, zero.unwrap_or(false)),
            )
        }
        other => Err(file_error(
            kind.line,
            format!("unknown time scale kind `{other}`; expected explicit, integers, uniform or qgrid"),
        )),
    }
}

fn parse_params(e: &Entry) -> Result<Vec<(String, f64)>> {
    let mut params: Vec<(String, f64)> = Vec::new();
    for item in e.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| file_error(e.line, format!("parameter `{item}` must look like `name=value`")))?;
        let name = name.trim();
        validate_param_name(name).map_err(|err| file_error(e.line, err.to_string()))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| file_error(e.line, format!("parameter `{name}` has non-numeric value `{}`", value.trim())))?;
        if params.iter().any(|(n, _)| n == name) {
            return Err(file_error(e.line, format!("parameter `{name}` given twice")));
        }
        params.push((name.to_string(), value));
    }
    Ok(params)
}

fn parse_options(s: Option<&Section>) -> Result<SolveOptions> {
    let mut o = SolveOptions::default();
    let Some(s) = s else {
        return Ok(o);
    };
    for (key, e) in &s.entries {
        match key.as_str() {
            "max_iterations" => o.max_iterations = number(e, key)?,
            "gradient_tolerance" => o.gradient_tolerance = number(e, key)?,
            "step_tolerance" => o.step_tolerance = number(e, key)?,
            "finite_difference_step" => o.finite_difference_step = number(e, key)?,
            "seed" => o.seed = number(e, key)?,
            "restarts" => o.restarts = number(e, key)?,
            "sufficiency_samples" => o.sufficiency_samples = number(e, key)?,
            "sufficiency_half_width" => o.sufficiency_half_width = number(e, key)?,
            _ => unreachable!("keys are validated while reading sections"),
        }
    }
    o.validate().map_err(|err| file_error(s.line, err.to_string()))?;
    Ok(o)
}

/// A loaded problem file.
#[derive(Clone, Debug)]
pub struct ProblemFile {
    pub template: ProblemTemplate,
    pub options: SolveOptions,
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        let sections = sections(text)?;
        for required in ["timescale", "problem"] {
            if !sections.contains_key(required) {
                return Err(file_error(0, format!("missing section [{required}]")));
            }
        }
        let scale = Arc::new(parse_scale(&sections["timescale"])?);
        let p = &sections["problem"];
        let kind_entry = p.require("problem", "type")?;
        let kind = match kind_entry.value.as_str() {
            "variational" => ProblemKind::Variational,
            "control" => ProblemKind::Control,
            other => {
                return Err(file_error(
                    kind_entry.line,
                    format!("unknown problem type `{other}`; expected variational or control"),
                ))
            }
        };
        let f = p.require("problem", "f")?;
        let g = p.get("g");
        match (kind, g) {
            (ProblemKind::Control, None) => return Err(file_error(p.line, "a control problem needs `g`")),
            (ProblemKind::Variational, Some(g)) => {
                return Err(file_error(g.line, "`g` only applies to control problems"))
            }
            _ => {}
        }
        let alpha = number(p.require("problem", "alpha")?, "alpha")?;
        let params = p.get("params").map(parse_params).transpose()?.unwrap_or_default();

        // surface expression errors against the line that holds the expression
        for e in [Some(f), g].into_iter().flatten() {
            if let Err(err) = crate::expr::parse(&substitute_params(&e.value, &params)) {
                let message = match &err.kind {
                    ParseErrorKind::UnknownIdentifier(name) => format!(
                        "unknown identifier `{name}`; only t, x, v, z, u, lam and declared params may appear"
                    ),
                    _ => err.to_string(),
                };
                return Err(file_error(e.line, message));
            }
        }

        let template = ProblemTemplate {
            scale,
            kind,
            f: f.value.clone(),
            g: g.map(|e| e.value.clone()),
            alpha,
            params,
        };
        template.instantiate(&[]).map_err(|err| file_error(p.line, err.to_string()))?;
        Ok(Self {
            template,
            options: parse_options(sections.get("solver"))?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn scale(&self) -> &Arc<TimeScale> {
        &self.template.scale
    }

    pub fn problem(&self) -> Result<Problem> {
        self.template.instantiate(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FROM_B: &str = "\
# arc length with an end penalty
[timescale]
kind = uniform
a = 0
b = 1
n = 20

[problem]
type = variational
f = sqrt(1+v^2) + beta*(z-1)^2
alpha = 0
params = beta=1

[solver]
max_iterations = 100
";

    fn line_of(err: Error) -> (usize, String) {
        match err {
            Error::ProblemFile { line, message } => (line, message),
            other => panic!("expected a problem-file error, got {other:?}"),
        }
    }

    #[test]
    fn loads_a_complete_file() {
        let file = ProblemFile::parse(FROM_B).unwrap();
        assert_eq!(file.scale().len(), 21);
        assert_eq!(file.template.param("beta"), Some(1.0));
        assert_eq!(file.options.max_iterations, 100);
        assert!(matches!(file.problem().unwrap(), Problem::Variational(_)));
    }

    #[test]
    fn scale_kinds() {
        let load = |ts: &str| {
            ProblemFile::parse(&format!("[timescale]\n{ts}\n[problem]\ntype = variational\nf = v^2\nalpha = 0\n"))
        };
        assert_eq!(load("kind = integers\na = 0\nb = 3").unwrap().scale().len(), 4);
        let q = load("kind = qgrid\nq = 2\nk_min = 0\nk_max = 2\ninclude_zero = true").unwrap();
        assert_eq!(q.scale().points(), &[0.0, 1.0, 2.0, 4.0]);
        let e = load("kind = explicit\npoints = 0, 0.5, 2").unwrap();
        assert_eq!(e.scale().points(), &[0.0, 0.5, 2.0]);
        let d = load("kind = explicit\npoints = 0, 0.5, 1, 2\ndense = 1, 1, 0, 0").unwrap();
        assert_eq!(d.scale().dense_mask(), &[true, true, false, false]);
        let (line, _) = line_of(load("kind = spiral").unwrap_err());
        assert_eq!(line, 2);
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let bad_section = FROM_B.replace("[solver]", "[solvr]");
        let (line, message) = line_of(ProblemFile::parse(&bad_section).unwrap_err());
        assert_eq!(line, 14);
        assert!(message.contains("solvr"));

        let unknown_key = FROM_B.replace("alpha = 0", "alpah = 0");
        let (line, message) = line_of(ProblemFile::parse(&unknown_key).unwrap_err());
        assert_eq!(line, 11);
        assert!(message.contains("alpah"));

        let stray = FROM_B.replace("params = beta=1", "params = gamma=1");
        let (line, message) = line_of(ProblemFile::parse(&stray).unwrap_err());
        assert_eq!(line, 10);
        assert!(message.contains("beta"));

        let duplicate = format!("{FROM_B}[problem]\n");
        let (line, _) = line_of(ProblemFile::parse(&duplicate).unwrap_err());
        assert_eq!(line, 16);

        let reserved = FROM_B.replace("params = beta=1", "params = lam=1");
        let (line, _) = line_of(ProblemFile::parse(&reserved).unwrap_err());
        assert_eq!(line, 12);

        let missing = "[timescale]\nkind = integers\na = 0\nb = 3\n";
        assert!(ProblemFile::parse(missing).is_err());
    }
}
