//! One function per subcommand. Each returns a JSON report; the caller decides where it goes.

use std::path::PathBuf;

use carnot_core::area::area_report;
use carnot_core::calculus::{distributional_residual, intrinsic_gradient, TestFunction};
use carnot_core::characteristics::{broadstar_residual, integrate_characteristic, integrate_characteristic_symmetric, CharacteristicCurve};
use carnot_core::cone::{beta_for_k, check_cone_containment};
use carnot_core::graph::{coordinate_names, estimate_intrinsic_lipschitz, PairSampling};
use carnot_core::mollify::approximation_report;
use carnot_core::quadrature::QuadratureGrid;
use carnot_core::{DomainBox, GraphFunction, Group};
use clap::Args;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult, Context};
use crate::input::{load_group, load_phi, load_w, parse_list};

/// What a subcommand produced.
pub struct Outcome {
    pub report: Value,
    /// Curve samples for `characteristics`.
    pub csv: Option<String>,
}

impl From<Value> for Outcome {
    fn from(report: Value) -> Self {
        Self { report, csv: None }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PhiInput {
    /// Group file, or a built-in name such as heisenberg(1)
    #[arg(long, default_value = "heisenberg(1)")]
    pub group: String,
    /// Function file for phi
    #[arg(long)]
    pub phi: PathBuf,
}

impl PhiInput {
    fn load(&self, seed: u64) -> CliResult<(Group, GraphFunction)> {
        let g = load_group(&self.group, seed)?;
        let phi = load_phi(&g, &self.phi)?;
        Ok((g, phi))
    }
}

fn to_value(v: impl serde::Serialize) -> Value {
    serde_json::to_value(v).expect("reports serialise")
}

fn with_seed(mut report: Value, seed: u64) -> Value {
    if let Value::Object(map) = &mut report {
        map.insert("seed".into(), json!(seed));
    }
    report
}

fn base_point(what: &str, s: &str, dim: usize) -> CliResult<Vec<f64>> {
    let a = parse_list(what, s)?;
    if a.len() != dim {
        return Err(CliError::Usage(format!("{what}: expected {dim} coordinates, got {}", a.len())));
    }
    Ok(a)
}

pub fn group_validate(spec: &str, seed: u64) -> CliResult<Outcome> {
    let g = load_group(spec, seed)?;
    Ok(json!({
        "m": g.m(),
        "n": g.n(),
        "q": g.homogeneous_dimension(),
        "epsilon": g.epsilon(),
        "seed": seed,
    })
    .into())
}

pub fn group_info(spec: &str, seed: u64) -> CliResult<Outcome> {
    let g = load_group(spec, seed)?;
    let matrices: Vec<Vec<Vec<f64>>> = (0..g.n())
        .map(|s| g.matrix(s).chunks(g.m()).map(|r| r.to_vec()).collect())
        .collect();
    Ok(json!({
        "m": g.m(),
        "n": g.n(),
        "q": g.homogeneous_dimension(),
        "epsilon": g.epsilon(),
        "b_max": g.b_max(),
        "norm_equivalence_c1": g.norm_equivalence_c1(),
        "base_coordinates": coordinate_names(g.m(), g.n()),
        "B": matrices,
        "seed": seed,
    })
    .into())
}

#[derive(Debug, Clone, Args)]
pub struct GradientArgs {
    #[command(flatten)]
    pub input: PhiInput,
    /// Base point "x2,...,xm,y1,...,yn"
    #[arg(long, allow_hyphen_values = true)]
    pub at: String,
    /// Finite-difference step; analytic partials are used when omitted and available
    #[arg(long)]
    pub h: Option<f64>,
}

pub fn gradient(args: &GradientArgs, seed: u64) -> CliResult<Outcome> {
    let (g, phi) = args.input.load(seed)?;
    let a = base_point("--at", &args.at, phi.dim())?;
    let value = phi.value_checked(&a).context("phi")?;
    let grad = intrinsic_gradient(&g, &phi, &a, args.h).context("intrinsic gradient D^phi phi")?;
    Ok(json!({ "at": a, "phi": value, "gradient": grad, "seed": seed }).into())
}

#[derive(Debug, Clone, Args)]
pub struct ResidualArgs {
    #[command(flatten)]
    pub input: PhiInput,
    /// Function file with the components w_2..w_m
    #[arg(long)]
    pub w: PathBuf,
    /// Test function "c_1,...,c_d,radius"
    #[arg(long, allow_hyphen_values = true)]
    pub zeta: String,
    /// Quadrature nodes per axis over the support of zeta
    #[arg(long)]
    pub grid: Option<usize>,
}

fn default_grid(dim: usize) -> usize {
    // about 2^20 nodes in total
    ((1u64 << 20) as f64).powf(1.0 / dim as f64).floor().max(4.0) as usize
}

pub fn residual(args: &ResidualArgs, seed: u64) -> CliResult<Outcome> {
    let (g, phi) = args.input.load(seed)?;
    let w = load_w(&g, &args.w)?;
    let mut v = parse_list("--zeta", &args.zeta)?;
    if v.len() != phi.dim() + 1 {
        return Err(CliError::Usage(format!("--zeta: expected {} centre coordinates and a radius", phi.dim())));
    }
    let radius = v.pop().unwrap();
    let zeta = TestFunction::inside(phi.domain(), v.clone(), radius).context("test function zeta")?;
    let support = DomainBox::new(v.iter().map(|c| c - radius).collect(), v.iter().map(|c| c + radius).collect())
        .context("test function zeta")?;
    let k = args.grid.unwrap_or_else(|| default_grid(phi.dim()));
    let grid = QuadratureGrid::uniform(support, k);
    let wf = |a: &[f64]| w.iter().map(|f| f.value(a)).collect::<Vec<f64>>();
    let r = distributional_residual(&g, &phi, &wf, &zeta, &grid).context("distributional residual")?;
    let max_abs = r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(json!({ "residual": r, "max_abs": max_abs, "grid": k, "seed": seed }).into())
}

#[derive(Debug, Clone, Args)]
pub struct LipschitzArgs {
    #[command(flatten)]
    pub input: PhiInput,
    /// Random pairs; the node grid is capped at the same number of pairs
    #[arg(long, default_value_t = 10_000)]
    pub pairs: usize,
}

pub fn lipschitz(args: &LipschitzArgs, seed: u64) -> CliResult<Outcome> {
    let (g, phi) = args.input.load(seed)?;
    let sampling = PairSampling {
        max_grid_pairs: args.pairs,
        random_pairs: args.pairs,
        seed,
    };
    let est = estimate_intrinsic_lipschitz(&g, &phi, &sampling).context("intrinsic Lipschitz constant")?;
    Ok(json!({
        "constant": est.constant,
        "pairs_used": est.pairs_used,
        "pairs_skipped": est.pairs_skipped,
        "argmax": est.argmax,
        "seed": seed,
    })
    .into())
}

#[derive(Debug, Clone, Args)]
pub struct CharacteristicsArgs {
    #[command(flatten)]
    pub input: PhiInput,
    /// Direction index, 2..=m
    #[arg(long, default_value_t = 2)]
    pub j: usize,
    /// Starting base point "x2,...,xm,y1,...,yn"
    #[arg(long, allow_hyphen_values = true)]
    pub from: String,
    /// Final time (may be negative)
    #[arg(long = "T", allow_negative_numbers = true)]
    pub t: f64,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
}

pub fn curve_csv(curve: &CharacteristicCurve) -> String {
    let n = curve.gamma.first().map_or(0, Vec::len);
    let mut out = String::from("t");
    for s in 1..=n {
        out.push_str(&format!(",gamma{s}"));
    }
    out.push_str(",phi\n");
    for ((t, y), f) in curve.t_grid.iter().zip(&curve.gamma).zip(&curve.phi_along) {
        out.push_str(&t.to_string());
        for v in y {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push(',');
        out.push_str(&f.to_string());
        out.push('\n');
    }
    out
}

fn curve_summary(curve: &CharacteristicCurve, exit_time: Option<f64>, seed: u64) -> Value {
    json!({
        "j": curve.j,
        "start": curve.start,
        "samples": curve.len(),
        "step": curve.step,
        "error_estimate": curve.error_estimate,
        "final_gamma": curve.gamma.last(),
        "exit_time": exit_time,
        "seed": seed,
    })
}

/// On `LeftDomain` the truncated curve is still returned next to the error.
pub fn characteristics(args: &CharacteristicsArgs, seed: u64) -> (CliResult<Outcome>, Option<Outcome>) {
    let loaded = args
        .input
        .load(seed)
        .and_then(|(g, phi)| Ok((base_point("--from", &args.from, phi.dim())?, g, phi)));
    let (a0, g, phi) = match loaded {
        Ok(v) => v,
        Err(e) => return (Err(e), None),
    };
    match integrate_characteristic(&g, &phi, args.j, &a0, args.t, args.steps) {
        Ok(curve) => (
            Ok(Outcome {
                report: curve_summary(&curve, None, seed),
                csv: Some(curve_csv(&curve)),
            }),
            None,
        ),
        Err(carnot_core::Error::LeftDomain { exit_time, partial }) => {
            let partial_outcome = Outcome {
                report: curve_summary(&partial, Some(exit_time), seed),
                csv: Some(curve_csv(&partial)),
            };
            let err = Err(carnot_core::Error::LeftDomain { exit_time, partial }).context("characteristic curve");
            (err, Some(partial_outcome))
        }
        Err(e) => (Err(e).context("characteristic curve"), None),
    }
}

#[derive(Debug, Clone, Args)]
pub struct BroadstarArgs {
    #[command(flatten)]
    pub input: PhiInput,
    /// Function file with the components w_2..w_m
    #[arg(long)]
    pub w: PathBuf,
    /// Single direction to check; all of 2..=m when omitted
    #[arg(long)]
    pub j: Option<usize>,
    /// Base point the curves pass through; the domain centre when omitted
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<String>,
    /// Half window [-T, T]; a quarter of the shortest domain side when omitted
    #[arg(long = "T", allow_negative_numbers = true)]
    pub t: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
}

pub fn broadstar(args: &BroadstarArgs, seed: u64) -> CliResult<Outcome> {
    let (g, phi) = args.input.load(seed)?;
    let w = load_w(&g, &args.w)?;
    let dom = phi.domain();
    let a0 = match &args.from {
        Some(s) => base_point("--from", s, phi.dim())?,
        None => dom.lo.iter().zip(&dom.hi).map(|(l, h)| 0.5 * (l + h)).collect(),
    };
    let shortest = dom.lo.iter().zip(&dom.hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
    let t_half = args.t.unwrap_or(0.25 * shortest);
    let dirs: Vec<usize> = match args.j {
        Some(j) => vec![j],
        None => (2..=g.m()).collect(),
    };
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for j in dirs {
        let curve = integrate_characteristic_symmetric(&g, &phi, j, &a0, t_half, args.steps)
            .context(&format!("characteristic of D^phi_{j}"))?;
        let wj = w.get(j.wrapping_sub(2)).ok_or_else(|| CliError::Usage(format!("no component w_{j}")))?;
        let r = broadstar_residual(&curve, &phi, &|a| wj.value(a));
        worst = worst.max(r);
        rows.push(json!({ "j": j, "residual": r, "error_estimate": curve.error_estimate }));
    }
    Ok(json!({
        "from": a0,
        "t_half": t_half,
        "steps": args.steps,
        "directions": rows,
        "residual": worst,
        "seed": seed,
    })
    .into())
}

#[derive(Debug, Clone, Args)]
pub struct AreaArgs {
    #[command(flatten)]
    pub input: PhiInput,
    /// Midpoint nodes per axis
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
}

pub fn area(args: &AreaArgs, seed: u64) -> CliResult<Outcome> {
    let (g, phi) = args.input.load(seed)?;
    let r = area_report(&g, &phi, args.grid).context("area integral of the intrinsic graph")?;
    Ok(with_seed(to_value(r), seed).into())
}

#[derive(Debug, Clone, Args)]
pub struct MollifyArgs {
    #[command(flatten)]
    pub input: PhiInput,
    #[arg(long, default_value = "0.2,0.1,0.05")]
    pub alphas: String,
    /// Level c in (0, 1) of the mollified indicator
    #[arg(long, default_value_t = 0.5)]
    pub c: f64,
    /// Base-space nodes per axis where phi_alpha is extracted
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
    /// Kernel quadrature points per axis
    #[arg(long, default_value_t = 16)]
    pub kernel_points: usize,
}

pub fn mollify(args: &MollifyArgs, seed: u64) -> CliResult<Outcome> {
    let (g, phi) = args.input.load(seed)?;
    let alphas = parse_list("--alphas", &args.alphas)?;
    let r = approximation_report(&g, &phi, &alphas, args.c, args.grid, args.kernel_points)
        .context("mollified approximation phi_alpha")?;
    Ok(with_seed(to_value(r), seed).into())
}

#[derive(Debug, Clone, Args)]
pub struct ConeArgs {
    #[command(flatten)]
    pub input: PhiInput,
    /// Angle parameter k in (0, 1]
    #[arg(long)]
    pub k: f64,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Use this opening instead of the one derived from k
    #[arg(long)]
    pub beta: Option<f64>,
}

pub fn cone(args: &ConeArgs, seed: u64) -> CliResult<Outcome> {
    let (g, phi) = args.input.load(seed)?;
    let b = if g.m() == 2 && g.n() == 1 { g.b(0, 0, 1) } else { g.b_max() };
    let param = beta_for_k(args.k, g.epsilon(), b).context("cone opening beta(k)")?;
    let beta = args.beta.unwrap_or(param.beta);
    let r = check_cone_containment(&g, &phi, beta, args.samples, seed).context("cone containment")?;
    let mut report = to_value(r);
    if let Value::Object(map) = &mut report {
        map.insert("k".into(), json!(args.k));
        map.insert("h".into(), json!(param.h));
        map.insert("beta_from_k".into(), json!(param.beta));
    }
    Ok(report.into())
}
