//! The `tscv` command line: solve, verify, sweep, integrate and info.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 non-convergence, 3 verification failure.

mod file;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::conditions::{hamiltonian_residuals, variational_report, ResidualReport};
use crate::error::Error;
use crate::expr::{parse, Var};
use crate::problem::Problem;
use crate::solver::{recover_costate, solve, sweep};
use crate::timescale::{delta_integral_of, GridFunction, PointKind};

pub use file::ProblemFile;

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_VERIFICATION_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tscv", version, about = "Free end-point calculus of variations on time scales")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the problem and report the extremal.
    Solve {
        file: PathBuf,
        /// Directory for solution.csv and solution.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the JSON record instead of the summary.
        #[arg(long)]
        json: bool,
    },
    /// Evaluate the necessary conditions on a candidate CSV.
    Verify {
        file: PathBuf,
        candidate: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        /// Extra state-equation allowance per unit of graininess on sampled dense scales.
        #[arg(long, default_value_t = 1.0)]
        mesh_factor: f64,
    },
    /// Solve once per value of a parameter.
    Sweep {
        file: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        values: Vec<f64>,
    },
    /// Delta integral of an expression in t over the whole scale.
    Integrate {
        file: PathBuf,
        #[arg(long)]
        expr: String,
    },
    /// Jump operators, graininess and point classification.
    Info { file: PathBuf },
}

/// Runs the command line on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                EXIT_SUCCESS
            } else {
                let _ = write!(err, "{e}");
                EXIT_USAGE
            };
        }
    };
    let result = match cli.command {
        Command::Solve { file, out: dir, json } => cmd_solve(&file, dir.as_deref(), json, out),
        Command::Verify {
            file,
            candidate,
            tolerance,
            mesh_factor,
        } => cmd_verify(&file, &candidate, tolerance, mesh_factor, out),
        Command::Sweep { file, param, values } => cmd_sweep(&file, &param, &values, out),
        Command::Integrate { file, expr } => cmd_integrate(&file, &expr, out),
        Command::Info { file } => cmd_info(&file, out),
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            let _ = writeln!(err, "error: {}", failure.message);
            failure.code
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

type CmdResult = Result<i32, Failure>;

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Divergence { .. }
            | Error::SingularJacobian { .. }
            | Error::ImplicitStep { .. }
            | Error::Consistency { .. } => EXIT_NOT_CONVERGED,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        usage(e.to_string())
    }
}

fn load(path: &Path) -> Result<ProblemFile, Failure> {
    ProblemFile::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_solve(path: &Path, dir: Option<&Path>, json: bool, out: &mut dyn Write) -> CmdResult {
    let file = load(path)?;
    let s = solve(&file.problem()?, &file.options)?;
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        s.write_csv(fs::File::create(dir.join("solution.csv"))?)?;
        fs::write(dir.join("solution.json"), s.to_json() + "\n")?;
    }
    if json {
        writeln!(out, "{}", s.to_json())?;
    } else {
        writeln!(out, "converged:         {} ({} iterations)", s.converged, s.iterations)?;
        writeln!(out, "objective:         {:.16e}", s.objective_value)?;
        writeln!(out, "x(T):              {:.16e}", s.endpoint())?;
        writeln!(out, "slope:             {:.16e}", s.slope())?;
        writeln!(out, "residual sup-norm: {:.6e}", s.report.sup_norm)?;
        writeln!(out, "sufficiency:       {}", s.verdict)?;
        if let Some(dir) = dir {
            writeln!(out, "wrote {} and {}", dir.join("solution.csv").display(), dir.join("solution.json").display())?;
        }
    }
    Ok(if s.converged { EXIT_SUCCESS } else { EXIT_NOT_CONVERGED })
}

struct Candidate {
    t: Vec<f64>,
    x: Vec<f64>,
    u: Option<Vec<f64>>,
    lam: Option<Vec<f64>>,
}

fn read_candidate(path: &Path) -> Result<Candidate, Failure> {
    let fail = |m: String| usage(format!("{}: {m}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
    let headers = reader.headers().map_err(|e| fail(e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(ti), Some(xi)) = (column("t"), column("x")) else {
        return Err(fail("the candidate needs `t` and `x` columns".into()));
    };
    let (ui, li) = (column("u"), column("lambda_sigma"));
    let mut c = Candidate {
        t: Vec::new(),
        x: Vec::new(),
        u: ui.map(|_| Vec::new()),
        lam: li.map(|_| Vec::new()),
    };
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        let cell = |k: usize| -> Result<f64, Failure> {
            let text = record.get(k).unwrap_or("").trim();
            if text.is_empty() {
                return Ok(f64::NAN);
            }
            text.parse()
                .map_err(|_| fail(format!("row {}: `{text}` is not a number", row + 2)))
        };
        c.t.push(cell(ti)?);
        c.x.push(cell(xi)?);
        if let (Some(k), Some(u)) = (ui, c.u.as_mut()) {
            u.push(cell(k)?);
        }
        if let (Some(k), Some(l)) = (li, c.lam.as_mut()) {
            l.push(cell(k)?);
        }
    }
    Ok(c)
}

fn cmd_verify(path: &Path, candidate: &Path, tolerance: f64, mesh_factor: f64, out: &mut dyn Write) -> CmdResult {
    let file = load(path)?;
    let scale = file.scale().clone();
    let c = read_candidate(candidate)?;
    if c.t.len() != scale.len() {
        return Err(usage(format!(
            "scale mismatch: the candidate has {} rows but the time scale has {} points",
            c.t.len(),
            scale.len()
        )));
    }
    if let Some((t, p)) = c
        .t
        .iter()
        .zip(scale.points())
        .find(|(t, p)| !((*t - *p).abs() <= 1e-9 * (1.0 + p.abs())))
    {
        return Err(usage(format!("scale mismatch: candidate point {t} where the scale has {p}")));
    }
    let kappa = scale.kappa_last();
    fn defined(v: &Option<Vec<f64>>, kappa: usize) -> Option<&Vec<f64>> {
        v.as_ref().filter(|v| v[..=kappa].iter().all(|x| x.is_finite()))
    }
    let x = GridFunction::new(scale.clone(), c.x.clone())?;

    let inadmissible = |e: Error, out: &mut dyn Write| -> CmdResult {
        writeln!(out, "{e}")?;
        writeln!(out, "verdict: FAIL")?;
        Ok(EXIT_VERIFICATION_FAILED)
    };
    let (report, pass) = match file.problem()? {
        Problem::Variational(p) => {
            if let Err(e) = p.check_admissible(&x) {
                return inadmissible(e, out);
            }
            let report = variational_report(&p, &x)?;
            let pass = report.sup_norm < tolerance;
            (report, pass)
        }
        Problem::Control(p) => {
            if let Err(e) = p.check_admissible(&x) {
                return inadmissible(e, out);
            }
            let u = defined(&c.u, kappa)
                .ok_or_else(|| usage("a control candidate needs a `u` column defined on every point but the last"))?;
            let u = GridFunction::new(scale.clone(), u.clone())?;
            let lam = match defined(&c.lam, kappa) {
                Some(l) => GridFunction::new(scale.clone(), l.clone())?,
                None => recover_costate(&p, &x, &u)?,
            };
            let report: ResidualReport = hamiltonian_residuals(&p, &x, &u, &lam)?;
            let allowance = if scale.has_dense_samples() {
                mesh_factor * scale.max_mu()
            } else {
                0.0
            };
            let pass = report.state_sup() < tolerance + allowance && report.sup_norm_without_state() < tolerance;
            if allowance > 0.0 {
                writeln!(out, "state-equation mesh allowance: {allowance:.6e}")?;
            }
            (report, pass)
        }
    };
    writeln!(out, "{}", report.table(scale.points()))?;
    writeln!(out, "verdict: {}", if pass { "PASS" } else { "FAIL" })?;
    Ok(if pass { EXIT_SUCCESS } else { EXIT_VERIFICATION_FAILED })
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

fn cmd_sweep(path: &Path, param: &str, values: &[f64], out: &mut dyn Write) -> CmdResult {
    let file = load(path)?;
    if file.template.param(param).is_none() {
        return Err(usage(format!("`{param}` is not declared in the file's params")));
    }
    let rows = sweep(&file.template, param, values, &file.options)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| usage(e.to_string());
    w.write_record(["value", "slope", "endpoint", "objective", "converged", "error"]).map_err(csv_err)?;
    for r in &rows {
        w.write_record([
            cell(Some(r.value)),
            cell(r.slope),
            cell(r.endpoint),
            cell(r.objective),
            r.converged.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    out.write_all(&w.into_inner().map_err(|e| usage(e.to_string()))?)?;
    Ok(if rows.iter().all(|r| r.converged) { EXIT_SUCCESS } else { EXIT_NOT_CONVERGED })
}

fn cmd_integrate(path: &Path, text: &str, out: &mut dyn Write) -> CmdResult {
    let file = load(path)?;
    let e = parse(text).map_err(|e| usage(format!("--expr: {e}")))?;
    if let Some(v) = e.variables().into_iter().find(|v| *v != Var::T) {
        return Err(usage(format!("--expr may only depend on t, found `{v}`")));
    }
    let scale = file.scale();
    let mut values = vec![0.0; scale.len()];
    for i in 0..=scale.kappa_last() {
        values[i] = e.eval(&crate::expr::Env::new().with(Var::T, scale.points()[i])).map_err(Error::from)?;
    }
    writeln!(out, "{}", delta_integral_of(scale, &values, 0, scale.last_index())?)?;
    Ok(EXIT_SUCCESS)
}

fn cmd_info(path: &Path, out: &mut dyn Write) -> CmdResult {
    let file = load(path)?;
    let s = file.scale();
    writeln!(out, "{:>14} {:>14} {:>14} {:>14}  kind", "t", "sigma", "rho", "mu")?;
    for i in 0..s.len() {
        let kind = match s.kind(i)? {
            PointKind::RightScattered => "right-scattered",
            PointKind::RightDenseSample => "right-dense sample",
        };
        writeln!(
            out,
            "{:>14} {:>14} {:>14} {:>14}  {kind}",
            s.points()[i],
            s.points()[s.sigma(i)?],
            s.points()[s.rho(i)?],
            s.mu(i)?
        )?;
    }
    writeln!(out, "points: {}", s.len())?;
    writeln!(out, "regular: {}", s.is_regular())?;
    Ok(EXIT_SUCCESS)
}
