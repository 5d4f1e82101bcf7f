//! Group and function files.

use std::fs;
use std::path::{Path, PathBuf};

use carnot_core::graph::{coordinate_names, SampledGrid};
use carnot_core::{DomainBox, GraphFunction, Group, StandardGroup};
use serde::Deserialize;

use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupFile {
    pub m: usize,
    pub n: usize,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    /// `null` asks for calibration.
    pub epsilon: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub shape: Vec<usize>,
    /// CSV file, relative to the JSON file; values are read row by row, last axis fastest.
    pub values: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FunctionFile {
    Expr {
        domain: DomainSpec,
        expr: OneOrMany<String>,
    },
    Grid {
        domain: DomainSpec,
        grid: OneOrMany<GridSpec>,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::file(path, e))
}

/// A group file, or a built-in name such as `heisenberg(1)`, `free_step2(3)`, `h_type(2)`.
pub fn load_group(spec: &str, seed: u64) -> CliResult<Group> {
    let path = Path::new(spec);
    if !path.exists() {
        if let Ok(which) = spec.parse::<StandardGroup>() {
            return Group::standard(which).context("built-in group");
        }
        return Err(CliError::file(path, "no such file, and not a built-in group name"));
    }
    let file: GroupFile = read_json(path)?;
    let g = Group::new(file.m, file.n, file.b, Some(file.epsilon.unwrap_or(1.0))).context("group definition")?;
    if file.epsilon.is_some() {
        return Ok(g);
    }
    let eps = g.calibrate_epsilon(10_000, seed).context("epsilon calibration")?;
    g.with_epsilon(eps).context("epsilon calibration")
}

fn read_csv_values(path: &Path) -> CliResult<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::file(path, e))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::file(path, e))?;
        for field in record.iter().filter(|f| !f.is_empty()) {
            let v: f64 = field
                .parse()
                .map_err(|_| CliError::file(path, format!("`{field}` is not a number")))?;
            out.push(v);
        }
    }
    Ok(out)
}

/// Loads every component of a function file over the base space of `g`.
pub fn load_functions(g: &Group, path: &Path) -> CliResult<Vec<GraphFunction>> {
    let file: FunctionFile = read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let (m, n) = (g.m(), g.n());
    let domain = |d: DomainSpec| -> CliResult<DomainBox> {
        let dom = DomainBox::new(d.lo, d.hi).context("function domain")?;
        if dom.dim() != m + n - 1 {
            return Err(CliError::file(
                path,
                format!(
                    "domain has dimension {}, the base space has {} coordinates ({})",
                    dom.dim(),
                    m + n - 1,
                    coordinate_names(m, n).join(", ")
                ),
            ));
        }
        Ok(dom)
    };
    match file {
        FunctionFile::Expr { domain: d, expr } => {
            let dom = domain(d)?;
            expr.into_vec()
                .iter()
                .map(|src| GraphFunction::expr(src, m, n, dom.clone()).context("function expression"))
                .collect()
        }
        FunctionFile::Grid { domain: d, grid } => {
            let dom = domain(d)?;
            grid.into_vec()
                .into_iter()
                .map(|spec| {
                    let values = read_csv_values(&dir.join(&spec.values))?;
                    let sampled = SampledGrid::new(spec.shape, values).context("sampled grid")?;
                    GraphFunction::grid(dom.clone(), sampled).context("sampled grid")
                })
                .collect()
        }
    }
}

/// The single graph function phi.
pub fn load_phi(g: &Group, path: &Path) -> CliResult<GraphFunction> {
    let mut all = load_functions(g, path)?;
    if all.len() != 1 {
        return Err(CliError::file(path, format!("expected one function, found {}", all.len())));
    }
    Ok(all.remove(0))
}

/// The components (w_2, ..., w_m).
pub fn load_w(g: &Group, path: &Path) -> CliResult<Vec<GraphFunction>> {
    let all = load_functions(g, path)?;
    if all.len() != g.m() - 1 {
        return Err(CliError::file(
            path,
            format!("w needs {} components (w_2..w_{}), found {}", g.m() - 1, g.m(), all.len()),
        ));
    }
    Ok(all)
}

/// Comma-separated floats.
pub fn parse_list(what: &str, s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{what}: `{}` is not a number", t.trim())))
        })
        .collect()
}
