use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

fn tscv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tscv")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn column(csv_text: &str, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let k = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|row| row.unwrap()[k].to_string()).collect()
}

#[test]
fn solve_integer_control_problem() {
    let dir = tempfile::tempdir().unwrap();
    let o = tscv(&["solve", path(&problem("control_integers.toml")), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    let x: Vec<f64> = column(&text, "x").iter().map(|v| v.parse().unwrap()).collect();
    for (got, want) in x.iter().zip([0.0, 0.3125, 0.625, 0.9375]) {
        assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("solution.json")).unwrap()).unwrap();
    assert!((json["objective"].as_f64().unwrap() - 0.3125).abs() <= 1e-10);
    assert!(stdout(&o).contains("sufficient"));
}

#[test]
fn solve_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = tscv(&["solve", path(&problem("arc_length_penalty.toml")), "--out", path(d.path())]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["solution.csv", "solution.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
}

#[test]
fn json_flag_prints_the_record() {
    let o = tscv(&["solve", path(&problem("control_qscale.toml")), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let x = json["x"].as_array().unwrap();
    assert!((x[3].as_f64().unwrap() - 36.0 / 37.0).abs() < 1e-9);
}

#[test]
fn malformed_file_names_the_section() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    fs::write(&file, "[timescale]\nkind = \"integers\"\na = 0\nb = 3\n\n[problme]\nf = \"v^2\"\n").unwrap();
    let o = tscv(&["solve", path(&file)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("problme"), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 6"), "{}", stderr(&o));

    let missing = tscv(&["solve", path(&dir.path().join("nope.toml"))]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(tscv(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tscv(&["--help"]).status.code(), Some(0));
}

fn write_candidate(dir: &Path, rows: &[(f64, f64)], with_u: bool) -> PathBuf {
    let file = dir.join("candidate.csv");
    let mut text = if with_u { "t,x,u\n".to_string() } else { "t,x\n".to_string() };
    for (t, x) in rows {
        text += &if with_u { format!("{t:?},{x:?},0\n") } else { format!("{t:?},{x:?}\n") };
    }
    fs::write(&file, text).unwrap();
    file
}

fn continuous_points() -> Vec<f64> {
    (0..=200).map(|i| -1.0 + 2.0 * i as f64 / 200.0).collect()
}

#[test]
fn verify_continuous_extremal() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<(f64, f64)> = continuous_points().iter().map(|&t| (t, (t * t + 1.0) / 2.0)).collect();
    let cand = write_candidate(dir.path(), &rows, true);
    let o = tscv(&["verify", path(&problem("control_continuous.toml")), path(&cand)]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn verify_rejects_a_non_extremal() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<(f64, f64)> = continuous_points().iter().map(|&t| (t, t)).collect();
    let cand = write_candidate(dir.path(), &rows, true);
    let o = tscv(&["verify", path(&problem("control_continuous.toml")), path(&cand)]);
    assert_eq!(o.status.code(), Some(3), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn verify_rejects_a_wrong_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<(f64, f64)> = continuous_points()[..150].iter().map(|&t| (t, t)).collect();
    let cand = write_candidate(dir.path(), &rows, true);
    let o = tscv(&["verify", path(&problem("control_continuous.toml")), path(&cand)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stderr(&o).is_empty());
}

#[test]
fn solve_then_verify_round_trip() {
    for name in ["control_integers.toml", "control_qscale.toml", "arc_length_penalty.toml", "control_continuous.toml"] {
        let dir = tempfile::tempdir().unwrap();
        let o = tscv(&["solve", path(&problem(name)), "--out", path(dir.path())]);
        assert_eq!(o.status.code(), Some(0));
        let v = tscv(&["verify", path(&problem(name)), path(&dir.path().join("solution.csv"))]);
        assert_eq!(v.status.code(), Some(0), "{name}: {}{}", stdout(&v), stderr(&v));
    }
}

#[test]
fn sweep_over_beta() {
    let o = tscv(&["sweep", path(&problem("arc_length_penalty.toml")), "--param", "beta", "--values", "1,2,15"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let slopes: Vec<f64> = column(&stdout(&o), "slope").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(slopes.len(), 3);
    assert!(slopes.windows(2).all(|w| w[1] > w[0]), "{slopes:?}");

    let o = tscv(&["sweep", path(&problem("arc_length_penalty.toml")), "--param", "beta", "--values", "10000"]);
    let slope: f64 = column(&stdout(&o), "slope")[0].parse().unwrap();
    assert!((0.999..=1.0).contains(&slope), "{slope}");

    let o = tscv(&["sweep", path(&problem("arc_length_penalty.toml")), "--param", "gamma", "--values", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gamma"));
}

#[test]
fn integrate_polynomials() {
    let run = |name: &str, e: &str| -> f64 {
        let o = tscv(&["integrate", path(&problem(name)), "--expr", e]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        stdout(&o).trim().parse().unwrap()
    };
    // 0 + 1 + 2 on the integers 0..3
    assert_eq!(run("control_integers.toml", "t"), 3.0);
    // delta antiderivative of 2t + 1 on the integers is t^2
    assert_eq!(run("control_integers.toml", "2*t + 1"), 9.0);
    assert_eq!(run("control_integers.toml", "0"), 0.0);
    // 1*2*0 + 1*2*1 + 2*2*4 on {0, 1, 2, 4}
    assert_eq!(run("control_qscale.toml", "2*t^2"), 18.0);
    let o = tscv(&["integrate", path(&problem("control_integers.toml")), "--expr", "x + t"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn info_lists_graininess() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("explicit.toml");
    fs::write(
        &file,
        "[timescale]\nkind = \"explicit\"\npoints = \"0, 0.5, 2\"\n\n[problem]\ntype = \"variational\"\nf = \"v^2\"\nalpha = 0\n",
    )
    .unwrap();
    let o = tscv(&["info", path(&file)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mu: Vec<f64> = text
        .lines()
        .skip(1)
        .take(3)
        .map(|l| l.split_whitespace().nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(mu, vec![0.5, 1.5, 0.0]);
    assert!(text.contains("points: 3"));
}
