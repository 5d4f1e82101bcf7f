use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const HEIS1: &str = r#"{"m":2,"n":1,"B":[[0,1,-1,0]],"epsilon":1.0}"#;
const SQUARE: &str = r#""domain":{"lo":[-1,-1],"hi":[1,1]}"#;

fn carnot(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carnot"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Self { dir: TempDir::new().unwrap() };
        f.write("heis1.json", HEIS1);
        f.write("linear.json", &format!(r#"{{"kind":"expr",{SQUARE},"expr":"x2"}}"#));
        f.write("one.json", &format!(r#"{{"kind":"expr",{SQUARE},"expr":"1"}}"#));
        f.write("mixed.json", &format!(r#"{{"kind":"expr",{SQUARE},"expr":"0.2*x2^2 + 0.1*y"}}"#));
        f
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn write(&self, name: &str, body: &str) -> PathBuf {
        let p = self.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        carnot(self.path(), args)
    }
}

#[test]
fn group_validate_prints_dimensions() {
    let f = Fixture::new();
    let o = f.run(&["group", "validate", "heis1.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    for line in ["m = 2", "n = 1", "q = 4"] {
        assert!(text.lines().any(|l| l == line), "{text}");
    }
    let o = f.run(&["group", "validate", "free_step2(3)", "--json"]);
    let v = json(&o);
    assert_eq!((v["m"].as_u64(), v["n"].as_u64(), v["q"].as_u64()), (Some(3), Some(3), Some(9)));
}

#[test]
fn group_validation_errors_exit_one() {
    let f = Fixture::new();
    f.write("no_n.json", r#"{"m":2,"B":[[0,1,-1,0]],"epsilon":1.0}"#);
    let o = f.run(&["group", "validate", "no_n.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("`n`"), "{}", stderr(&o));

    f.write("no_b.json", r#"{"m":2,"n":1,"epsilon":null}"#);
    let o = f.run(&["group", "info", "no_b.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("`B`"), "{}", stderr(&o));

    f.write("dep.json", r#"{"m":2,"n":2,"B":[[0,1,-1,0],[0,2,-2,0]],"epsilon":1.0}"#);
    let o = f.run(&["group", "validate", "dep.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("linearly dependent"), "{}", stderr(&o));

    f.write("skew.json", r#"{"m":2,"n":1,"B":[[0,1,1,0]],"epsilon":1.0}"#);
    assert_eq!(code(&f.run(&["group", "validate", "skew.json"])), 1);
    assert_eq!(code(&f.run(&["group", "validate", "missing.json"])), 1);
}

#[test]
fn null_epsilon_calibrates() {
    let f = Fixture::new();
    f.write("cal.json", r#"{"m":2,"n":1,"B":[[0,1,-1,0]],"epsilon":null}"#);
    let v = json(&f.run(&["group", "info", "cal.json", "--json"]));
    let eps = v["epsilon"].as_f64().unwrap();
    assert!(eps > 0.0 && eps <= 1.0);
    assert_eq!(v["seed"].as_u64(), Some(0));
}

#[test]
fn gradient_matches_hand_formula() {
    let f = Fixture::new();
    let o = f.run(&["gradient", "--group", "heis1.json", "--phi", "mixed.json", "--at", "-0.3,0.2", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    // phi = 0.2 x2^2 + 0.1 y; D phi = phi_x2 + phi * b21 * phi_y with b21 = -1
    let (x2, y) = (-0.3f64, 0.2f64);
    let phi = 0.2 * x2 * x2 + 0.1 * y;
    let want = 0.4 * x2 - phi * 0.1;
    let got = v["gradient"][0].as_f64().unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");

    let o = f.run(&["gradient", "--phi", "mixed.json", "--at", "0.3"]);
    assert_eq!(code(&o), 1);
    let o = f.run(&["gradient", "--phi", "mixed.json", "--at", "2,0"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn broadstar_linear_with_unit_w() {
    let f = Fixture::new();
    let o = f.run(&["broadstar", "--phi", "linear.json", "--w", "one.json", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&o)["residual"].as_f64().unwrap();
    assert!(r <= 1e-8, "{r}");

    // w = 0 is wrong for phi = x2: the residual equals the length of the half window
    f.write("zero.json", &format!(r#"{{"kind":"expr",{SQUARE},"expr":"0"}}"#));
    let o = f.run(&["broadstar", "--phi", "linear.json", "--w", "zero.json", "--T", "0.4", "--json"]);
    let r = json(&o)["residual"].as_f64().unwrap();
    assert!((r - 0.4).abs() < 1e-9, "{r}");
}

#[test]
fn residual_vanishes_for_true_derivative() {
    let f = Fixture::new();
    // phi = y in H^1: D phi = phi_x2 + phi * b21 * phi_y = -y
    f.write("vert.json", &format!(r#"{{"kind":"expr",{SQUARE},"expr":"y"}}"#));
    f.write("w.json", &format!(r#"{{"kind":"expr",{SQUARE},"expr":["-y"]}}"#));
    let o = f.run(&["residual", "--phi", "vert.json", "--w", "w.json", "--zeta", "0.1,-0.1,0.6", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let good = json(&o)["max_abs"].as_f64().unwrap();
    let o = f.run(&["residual", "--phi", "vert.json", "--w", "one.json", "--zeta", "0.1,-0.1,0.6", "--json"]);
    let bad = json(&o)["max_abs"].as_f64().unwrap();
    assert!(good < 1e-6 && bad > 1e-2, "{good} {bad}");

    let o = f.run(&["residual", "--phi", "vert.json", "--w", "w.json", "--zeta", "0.8,0,0.5"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("zeta"), "{}", stderr(&o));
}

#[test]
fn w_component_count_is_checked() {
    let f = Fixture::new();
    f.write("two.json", &format!(r#"{{"kind":"expr",{SQUARE},"expr":["1","2"]}}"#));
    let o = f.run(&["broadstar", "--phi", "linear.json", "--w", "two.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("w_2"), "{}", stderr(&o));
}

#[test]
fn characteristics_csv_layout() {
    let f = Fixture::new();
    let o = f.run(&[
        "characteristics", "--group", "heis1.json", "--phi", "linear.json", "--j", "2", "--from", "-0.5,0", "--T", "1",
        "--steps", "100", "--out", "curve.csv",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(f.path().join("curve.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,gamma1,phi"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 101);
    // phi = x2: gamma' = -phi = -(x2_0 + t), gamma(t) = 0.5 t - t^2 / 2
    for r in &rows {
        let t = r[0];
        assert!((r[1] - (0.5 * t - 0.5 * t * t)).abs() < 1e-12);
        assert!((r[2] - (-0.5 + t)).abs() < 1e-12);
    }
    assert!((rows[100][0] - 1.0).abs() < 1e-12);
}

#[test]
fn characteristics_leaving_domain_is_numerical() {
    let f = Fixture::new();
    let o = f.run(&[
        "characteristics", "--phi", "linear.json", "--from", "0,0", "--T", "3", "--steps", "60", "--out", "cut.csv",
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("left the domain"), "{}", stderr(&o));
    let text = fs::read_to_string(f.path().join("cut.csv")).unwrap();
    let last_t: f64 = text.lines().last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(last_t <= 1.0 && last_t > 0.9, "{last_t}");
}

#[test]
fn area_of_linear_graph() {
    let f = Fixture::new();
    let o = f.run(&["area", "--phi", "linear.json", "--grid", "16", "--out", "area.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(f.path().join("area.json")).unwrap()).unwrap();
    // |D phi| = 1 everywhere, so the integrand is sqrt(2) over a box of volume 4
    let a = v["area_integral"].as_f64().unwrap();
    assert!((a - 4.0 * 2f64.sqrt()).abs() < 1e-12, "{a}");
    assert!(v["estimated_order"].is_null());
    assert_eq!(v["grid"].as_u64(), Some(16));
}

#[test]
fn grid_function_from_csv() {
    let f = Fixture::new();
    // x2 sampled on a 3 x 3 node grid, last axis (y) fastest
    f.write("x2.csv", "-1,-1,-1\n0,0,0\n1,1,1\n");
    f.write(
        "grid.json",
        &format!(r#"{{"kind":"grid",{SQUARE},"grid":{{"shape":[3,3],"values":"x2.csv"}}}}"#),
    );
    let o = f.run(&["area", "--phi", "grid.json", "--grid", "16", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = json(&o)["area_integral"].as_f64().unwrap();
    assert!((a - 4.0 * 2f64.sqrt()).abs() < 1e-6, "{a}");

    f.write("short.csv", "1,2,3\n");
    f.write(
        "short.json",
        &format!(r#"{{"kind":"grid",{SQUARE},"grid":{{"shape":[3,3],"values":"short.csv"}}}}"#),
    );
    assert_eq!(code(&f.run(&["area", "--phi", "short.json"])), 1);
}

#[test]
fn domain_dimension_is_checked() {
    let f = Fixture::new();
    f.write("flat.json", r#"{"kind":"expr","domain":{"lo":[-1],"hi":[1]},"expr":"0"}"#);
    let o = f.run(&["area", "--phi", "flat.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("x2, y"), "{}", stderr(&o));
    f.write("nokind.json", &format!(r#"{{{SQUARE},"expr":"0"}}"#));
    let o = f.run(&["area", "--phi", "nokind.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("kind"), "{}", stderr(&o));
}

#[test]
fn lipschitz_echoes_seed() {
    let f = Fixture::new();
    let o = f.run(&["lipschitz", "--phi", "linear.json", "--pairs", "500", "--seed", "7", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["seed"].as_u64(), Some(7));
    // for phi = x2 every ratio |Delta phi| / ||Delta|| is at most 1 and grid pairs along x2 reach it
    let c = v["constant"].as_f64().unwrap();
    assert!((c - 1.0).abs() < 1e-12, "{c}");
}

#[test]
fn mollify_report_and_underflow() {
    let f = Fixture::new();
    let o = f.run(&["mollify", "--phi", "mixed.json", "--alphas", "0.2,0.1", "--c", "0.25", "--grid", "3", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["seed"].as_u64(), Some(0));
    let o = f.run(&["mollify", "--phi", "mixed.json", "--alphas", "0.2", "--grid", "3", "--kernel-points", "2"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("phi_alpha"), "{}", stderr(&o));
}

#[test]
fn cone_sweep_and_bad_k() {
    let f = Fixture::new();
    let o = f.run(&["cone", "--phi", "linear.json", "--k", "1", "--samples", "500", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["violations"].as_u64(), Some(0));
    assert!(v["checked"].as_u64().unwrap() > 0);
    let o = f.run(&["cone", "--phi", "linear.json", "--k", "1.5"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn reports_are_deterministic_across_threads() {
    let f = Fixture::new();
    let args = |t: &'static str, out: &'static str| {
        vec!["cone", "--phi", "mixed.json", "--k", "0.8", "--samples", "800", "--seed", "3", "--threads", t, "--out", out]
    };
    assert_eq!(code(&f.run(&args("1", "a.json"))), 0);
    assert_eq!(code(&f.run(&args("4", "b.json"))), 0);
    let a = fs::read(f.path().join("a.json")).unwrap();
    let b = fs::read(f.path().join("b.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn inputs_are_not_modified() {
    let f = Fixture::new();
    let before = fs::read(f.path().join("mixed.json")).unwrap();
    f.run(&["area", "--phi", "mixed.json", "--grid", "8", "--out", "r.json"]);
    assert_eq!(before, fs::read(f.path().join("mixed.json")).unwrap());
}

#[test]
fn empty_suite_passes() {
    let f = Fixture::new();
    f.write("empty.json", r#"{"scenarios":[]}"#);
    let o = f.run(&["suite", "empty.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 1);
    let o = f.run(&["suite", "empty.json", "--json"]);
    let v = json(&o);
    assert_eq!(v["scenarios"].as_array().unwrap().len(), 0);
}

#[test]
fn suite_flags_failing_rows() {
    let f = Fixture::new();
    f.write(
        "suite.json",
        r#"{"scenarios":[
          {"name":"q","command":"group validate","group":"heis1.json","expect":[{"pointer":"/q","equals":4}]},
          {"name":"area","command":"area","phi":"linear.json","params":{"grid":8},"output":"area_out.json",
           "expect":[{"pointer":"/area_integral","min":5.656,"max":5.657}]},
          {"name":"impossible","command":"broadstar","phi":"linear.json","params":{"w":"one.json"},
           "expect":[{"pointer":"/residual","max":-1}]},
          {"name":"cut","command":"characteristics","phi":"linear.json",
           "params":{"from":"0,0","T":3,"steps":60},"expect_exit":2}
        ]}"#,
    );
    let o = f.run(&["suite", "suite.json", "--out", "summary.json"]);
    assert_eq!(code(&o), 3, "{}", stdout(&o));
    let text = stdout(&o);
    let status: Vec<(&str, &str)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let cols: Vec<&str> = l.split_whitespace().collect();
            let st = cols.iter().find(|c| **c == "PASS" || **c == "FAIL").copied().unwrap();
            (cols[0], st)
        })
        .collect();
    assert_eq!(status, vec![("q", "PASS"), ("area", "PASS"), ("impossible", "FAIL"), ("cut", "PASS")]);
    assert!(f.path().join("area_out.json").exists());
    let summary: Value = serde_json::from_str(&fs::read_to_string(f.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"].as_u64(), Some(3));
    assert_eq!(summary["failed"].as_u64(), Some(1));

    // same config and seed, same bytes
    let first = fs::read(f.path().join("summary.json")).unwrap();
    f.run(&["suite", "suite.json", "--out", "summary.json", "--threads", "2"]);
    assert_eq!(first, fs::read(f.path().join("summary.json")).unwrap());
}

#[test]
fn suite_reports_bad_params() {
    let f = Fixture::new();
    f.write(
        "bad.json",
        r#"{"scenarios":[{"name":"typo","command":"area","phi":"linear.json","params":{"gird":8}}]}"#,
    );
    let o = f.run(&["suite", "bad.json", "--json"]);
    assert_eq!(code(&o), 3);
    let v = json(&o);
    assert_eq!(v["scenarios"][0]["status"], "FAIL");
    assert_eq!(v["scenarios"][0]["exit_code"].as_u64(), Some(1));
}
