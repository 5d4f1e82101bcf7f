//! Scenario lists with declared expectations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Parser;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::{pretty, run_command, write_atomic, Cli, Command};

/// Exit code of a suite with at least one failing row.
pub const SUITE_FAILED: i32 = 3;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    #[serde(default)]
    scenarios: Vec<Scenario>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Scenario {
    name: String,
    /// Subcommand, e.g. "area" or "group validate".
    command: String,
    group: Option<String>,
    phi: Option<PathBuf>,
    /// Flag name (without dashes) to scalar.
    #[serde(default)]
    params: BTreeMap<String, Value>,
    output: Option<PathBuf>,
    #[serde(default)]
    expect: Vec<Expectation>,
    #[serde(default)]
    expect_exit: i32,
}

/// A check on one report field, addressed by JSON pointer (e.g. "/rows/0/ratio").
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Expectation {
    pointer: String,
    min: Option<f64>,
    max: Option<f64>,
    equals: Option<Value>,
    #[serde(default)]
    tol: f64,
}

impl Expectation {
    fn check(&self, report: &Value) -> Option<String> {
        let Some(v) = report.pointer(&self.pointer) else {
            return Some(format!("{} missing", self.pointer));
        };
        if let Some(want) = &self.equals {
            let same = match (v.as_f64(), want.as_f64()) {
                (Some(a), Some(b)) => (a - b).abs() <= self.tol,
                _ => v == want,
            };
            if !same {
                return Some(format!("{} = {v}, expected {want}", self.pointer));
            }
        }
        if self.min.is_some() || self.max.is_some() {
            let Some(x) = v.as_f64() else {
                return Some(format!("{} = {v} is not a number", self.pointer));
            };
            if let Some(lo) = self.min.filter(|&lo| !(x >= lo)) {
                return Some(format!("{} = {v} < {lo}", self.pointer));
            }
            if let Some(hi) = self.max.filter(|&hi| !(x <= hi)) {
                return Some(format!("{} = {v} > {hi}", self.pointer));
            }
        }
        None
    }
}

/// Paths in a config are relative to the config file; group names that are not files pass through.
fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

fn scalar(key: &str, v: &Value) -> CliResult<Option<String>> {
    match v {
        Value::Bool(true) => Ok(None),
        Value::Number(x) => Ok(Some(x.to_string())),
        Value::String(s) => Ok(Some(s.clone())),
        other => Err(CliError::Usage(format!("param `{key}` must be a scalar, got {other}"))),
    }
}

impl Scenario {
    fn argv(&self, dir: &Path, seed: u64) -> CliResult<Vec<String>> {
        let mut argv: Vec<String> = vec!["carnot".into()];
        argv.extend(self.command.split_whitespace().map(String::from));
        let group = self.group.as_ref().map(|g| {
            let p = resolve(dir, Path::new(g));
            if p.exists() {
                p.to_string_lossy().into_owned()
            } else {
                g.clone()
            }
        });
        if argv.get(1).map(String::as_str) == Some("group") {
            let g = group.ok_or_else(|| CliError::Usage(format!("scenario `{}` needs a group", self.name)))?;
            argv.push(g);
        } else if let Some(g) = group {
            argv.extend(["--group".into(), g]);
        }
        if let Some(phi) = &self.phi {
            argv.extend(["--phi".into(), resolve(dir, phi).to_string_lossy().into_owned()]);
        }
        argv.extend(["--seed".into(), seed.to_string()]);
        for (key, v) in &self.params {
            if key == "seed" {
                // handled through the explicit seed above
                continue;
            }
            if v == &Value::Bool(false) {
                continue;
            }
            let flag = if key == "T" { "--T".to_string() } else { format!("--{}", key.replace('_', "-")) };
            argv.push(flag);
            if let Some(mut s) = scalar(key, v)? {
                if key == "w" {
                    s = resolve(dir, Path::new(&s)).to_string_lossy().into_owned();
                }
                argv.push(s);
            }
        }
        Ok(argv)
    }

    fn seed(&self, default: u64) -> CliResult<u64> {
        match self.params.get("seed") {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .ok_or_else(|| CliError::Usage(format!("scenario `{}`: seed must be a non-negative integer", self.name))),
        }
    }
}

struct Row {
    name: String,
    command: String,
    exit_code: i32,
    failures: Vec<String>,
    report: Value,
}

impl Row {
    fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn run_scenario(sc: &Scenario, dir: &Path, default_seed: u64) -> Row {
    let mut row = Row {
        name: sc.name.clone(),
        command: sc.command.clone(),
        exit_code: 0,
        failures: Vec::new(),
        report: Value::Null,
    };
    let parsed = sc
        .seed(default_seed)
        .and_then(|seed| sc.argv(dir, seed))
        .and_then(|argv| Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string().trim().to_string())));
    let cli = match parsed {
        Ok(cli) => cli,
        Err(e) => {
            row.exit_code = e.exit_code();
            row.failures.push(e.to_string());
            return row;
        }
    };
    if matches!(cli.command, Command::Suite { .. }) {
        row.exit_code = 1;
        row.failures.push("suites cannot be nested".into());
        return row;
    }
    let run = run_command(&cli.command, cli.seed);
    let outcome = match run.result {
        Ok(o) => Some(o),
        Err(e) => {
            row.exit_code = e.exit_code();
            if row.exit_code != sc.expect_exit {
                row.failures.push(e.to_string());
            }
            row.report = json!({ "error": e.to_string() });
            run.partial
        }
    };
    if row.exit_code != sc.expect_exit && row.failures.is_empty() {
        row.failures.push(format!("exit {}, expected {}", row.exit_code, sc.expect_exit));
    }
    if let Some(o) = outcome {
        if let Some(path) = &sc.output {
            let body = o.csv.clone().unwrap_or_else(|| pretty(&o.report));
            if let Err(e) = write_atomic(&resolve(dir, path), &body) {
                row.failures.push(e.to_string());
            }
        }
        if row.exit_code == 0 {
            row.failures.extend(sc.expect.iter().filter_map(|x| x.check(&o.report)));
            row.report = o.report;
        }
    }
    row
}

fn table(rows: &[Row]) -> String {
    let header = ["scenario", "command", "status", "detail"];
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                r.command.clone(),
                if r.passed() { "PASS" } else { "FAIL" }.to_string(),
                r.failures.join("; "),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for c in &cells {
        for (w, s) in width.iter_mut().zip(c) {
            *w = (*w).max(s.chars().count());
        }
    }
    let line = |c: [&str; 4]| -> String {
        let mut s = String::new();
        for (i, (cell, w)) in c.iter().zip(width).enumerate() {
            if i == 3 {
                s.push_str(cell);
            } else {
                s.push_str(&format!("{cell:<w$}  "));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    for c in &cells {
        out.push_str(&line([&c[0], &c[1], &c[2], &c[3]]));
    }
    out
}

fn summary(rows: &[Row], seed: u64) -> Value {
    let passed = rows.iter().filter(|r| r.passed()).count();
    json!({
        "seed": seed,
        "passed": passed,
        "failed": rows.len() - passed,
        "scenarios": rows.iter().map(|r| json!({
            "name": r.name,
            "command": r.command,
            "status": if r.passed() { "PASS" } else { "FAIL" },
            "exit_code": r.exit_code,
            "failures": r.failures,
            "report": r.report,
        })).collect::<Vec<_>>(),
    })
}

fn load(config: &Path) -> CliResult<SuiteFile> {
    let text = std::fs::read_to_string(config).map_err(|e| CliError::file(config, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::file(config, e))
}

/// Prints the table (or JSON), writes the summary to `--out`, returns the exit code.
pub fn run_suite(config: &Path, cli: &Cli) -> i32 {
    let file = match load(config) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let dir = config.parent().unwrap_or(Path::new("."));
    let rows: Vec<Row> = file.scenarios.par_iter().map(|sc| run_scenario(sc, dir, cli.seed)).collect();
    let report = summary(&rows, cli.seed);
    if let Some(path) = &cli.out {
        if let Err(e) = write_atomic(path, &pretty(&report)) {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    }
    if cli.json {
        print!("{}", pretty(&report));
    } else {
        print!("{}", table(&rows));
    }
    if rows.iter().all(Row::passed) {
        0
    } else {
        SUITE_FAILED
    }
}
