//! Characteristic lines of D^phi_j, broad* checks and Lipschitz bounds along them.

use crate::calculus::vertical_coefficients;
use crate::error::{Error, Result};
use crate::graph::{conjugated_increment, linspace, cartesian, GraphFunction};
use crate::group::Group;
use crate::quadrature::cumulative_simpson;

/// A sampled integral curve t -> (x_j0 + t, xhat_j, gamma(t)) of D^phi_j.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicCurve {
    /// Direction index, 2..=m.
    pub j: usize,
    /// Base point at t = 0.
    pub start: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// Vertical state gamma(t) in R^n per time.
    pub gamma: Vec<Vec<f64>>,
    pub phi_along: Vec<f64>,
    pub step: f64,
    /// Index of t = 0 in `t_grid`.
    pub origin: usize,
    /// Max state discrepancy against the step-halved rerun.
    pub error_estimate: f64,
}

impl CharacteristicCurve {
    pub fn len(&self) -> usize {
        self.t_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_grid.is_empty()
    }

    /// Full base coordinates at sample `i`.
    pub fn point(&self, i: usize) -> Vec<f64> {
        let mut a = self.start.clone();
        let h = a.len() - self.gamma[i].len();
        a[self.j - 2] += self.t_grid[i];
        a[h..].copy_from_slice(&self.gamma[i]);
        a
    }
}

fn state_point(start: &[f64], j: usize, t: f64, y: &[f64]) -> Vec<f64> {
    let mut a = start.to_vec();
    let h = a.len() - y.len();
    a[j - 2] += t;
    a[h..].copy_from_slice(y);
    a
}

fn rhs(g: &Group, phi: &GraphFunction, j: usize, start: &[f64], t: f64, y: &[f64]) -> Vec<f64> {
    let a = state_point(start, j, t, y);
    vertical_coefficients(g, j, phi.value(&a), &a)
}

struct Run {
    t: Vec<f64>,
    y: Vec<Vec<f64>>,
    exit: Option<f64>,
}

fn rk4(g: &Group, phi: &GraphFunction, j: usize, start: &[f64], t_end: f64, steps: usize) -> Result<Run> {
    let n = g.n();
    let h = t_end / steps as f64;
    let m1 = start.len() - n;
    let mut y = start[m1..].to_vec();
    let mut ts = vec![0.0];
    let mut ys = vec![y.clone()];
    for k in 0..steps {
        let t = k as f64 * h;
        let axpy = |y: &[f64], d: &[f64], c: f64| -> Vec<f64> { y.iter().zip(d).map(|(a, b)| a + c * b).collect() };
        let k1 = rhs(g, phi, j, start, t, &y);
        let k2 = rhs(g, phi, j, start, t + 0.5 * h, &axpy(&y, &k1, 0.5 * h));
        let k3 = rhs(g, phi, j, start, t + 0.5 * h, &axpy(&y, &k2, 0.5 * h));
        let k4 = rhs(g, phi, j, start, t + h, &axpy(&y, &k3, h));
        for s in 0..n {
            y[s] += h / 6.0 * (k1[s] + 2.0 * k2[s] + 2.0 * k3[s] + k4[s]);
        }
        let t_next = (k + 1) as f64 * h;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: t_next });
        }
        if !phi.domain().contains(&state_point(start, j, t_next, &y)) {
            return Ok(Run {
                t: ts,
                y: ys,
                exit: Some(t_next),
            });
        }
        ts.push(t_next);
        ys.push(y.clone());
    }
    Ok(Run { t: ts, y: ys, exit: None })
}

fn check_args(g: &Group, phi: &GraphFunction, j: usize, a0: &[f64], steps: usize) -> Result<()> {
    if j < 2 || j > g.m() {
        return Err(Error::InvalidInput(format!("direction j = {j} must lie in 2..={}", g.m())));
    }
    if steps < 8 {
        return Err(Error::InvalidInput(format!("steps = {steps} must be at least 8")));
    }
    if a0.len() != g.m() + g.n() - 1 {
        return Err(Error::DimensionMismatch {
            expected: g.m() + g.n() - 1,
            found: a0.len(),
        });
    }
    phi.value_checked(a0)?;
    Ok(())
}

fn assemble(phi: &GraphFunction, j: usize, a0: &[f64], t: Vec<f64>, gamma: Vec<Vec<f64>>, origin: usize, step: f64, err: f64) -> CharacteristicCurve {
    let phi_along = t
        .iter()
        .zip(&gamma)
        .map(|(&ti, y)| phi.value(&state_point(a0, j, ti, y)))
        .collect();
    CharacteristicCurve {
        j,
        start: a0.to_vec(),
        t_grid: t,
        gamma,
        phi_along,
        step,
        origin,
        error_estimate: err,
    }
}

fn discrepancy(coarse: &Run, fine: &Run) -> f64 {
    coarse
        .y
        .iter()
        .enumerate()
        .filter(|(i, _)| 2 * i < fine.y.len())
        .map(|(i, y)| {
            y.iter()
                .zip(&fine.y[2 * i])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Fixed-step RK4 from t = 0 to `t_end` (either sign) with a step-halved rerun as error estimate.
///
/// Leaving the domain yields `Error::LeftDomain` carrying the truncated curve.
pub fn integrate_characteristic(
    g: &Group,
    phi: &GraphFunction,
    j: usize,
    a0: &[f64],
    t_end: f64,
    steps: usize,
) -> Result<CharacteristicCurve> {
    check_args(g, phi, j, a0, steps)?;
    if t_end == 0.0 || !t_end.is_finite() {
        return Err(Error::InvalidInput("integration window must be non-zero".into()));
    }
    let coarse = rk4(g, phi, j, a0, t_end, steps)?;
    let fine = rk4(g, phi, j, a0, t_end, 2 * steps)?;
    let err = discrepancy(&coarse, &fine);
    let exit = coarse.exit.or(fine.exit.map(|_| *coarse.t.last().unwrap()));
    let curve = assemble(phi, j, a0, coarse.t, coarse.y, 0, (t_end / steps as f64).abs(), err);
    match exit {
        Some(exit_time) => Err(Error::LeftDomain {
            exit_time,
            partial: Box::new(curve),
        }),
        None => Ok(curve),
    }
}

/// Curve on [-T, T] built from a backward and a forward run, `steps` each.
pub fn integrate_characteristic_symmetric(
    g: &Group,
    phi: &GraphFunction,
    j: usize,
    a0: &[f64],
    t_half: f64,
    steps: usize,
) -> Result<CharacteristicCurve> {
    let fwd = integrate_characteristic(g, phi, j, a0, t_half.abs(), steps)?;
    let bwd = integrate_characteristic(g, phi, j, a0, -t_half.abs(), steps)?;
    let mut t: Vec<f64> = bwd.t_grid.iter().rev().copied().collect();
    let mut gamma: Vec<Vec<f64>> = bwd.gamma.iter().rev().cloned().collect();
    t.extend_from_slice(&fwd.t_grid[1..]);
    gamma.extend_from_slice(&fwd.gamma[1..]);
    let err = fwd.error_estimate.max(bwd.error_estimate);
    Ok(assemble(phi, j, a0, t, gamma, steps, fwd.step, err))
}

/// `int_0^{t_i} f` along the curve for every sample, via Simpson sums outward from the origin.
pub fn integral_from_origin(curve: &CharacteristicCurve, f: &[f64]) -> Vec<f64> {
    let o = curve.origin;
    let h = curve.step;
    let mut out = vec![0.0; f.len()];
    let fwd = cumulative_simpson(&f[o..], h);
    out[o..].copy_from_slice(&fwd);
    let rev: Vec<f64> = f[..=o].iter().rev().copied().collect();
    let bwd = cumulative_simpson(&rev, h);
    for (k, v) in bwd.iter().enumerate() {
        out[o - k] = -v;
    }
    out
}

/// max_t |phi(gamma(t)) - phi(gamma(0)) - int_0^t w_j(gamma(r)) dr|.
pub fn broadstar_residual(curve: &CharacteristicCurve, phi: &GraphFunction, w_j: &dyn Fn(&[f64]) -> f64) -> f64 {
    let pts: Vec<Vec<f64>> = (0..curve.len()).map(|i| curve.point(i)).collect();
    let vals: Vec<f64> = pts.iter().map(|a| phi.value(a)).collect();
    let w: Vec<f64> = pts.iter().map(|a| w_j(a)).collect();
    let integral = integral_from_origin(curve, &w);
    let base = vals[curve.origin];
    vals.iter()
        .zip(&integral)
        .map(|(v, i)| (v - base - i).abs())
        .fold(0.0, f64::max)
}

/// f_s(phi) = 1/2 (b^(s)_j1 phi^2 + phi sum_{l>=2} b^(s)_jl x_l) at base point `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxValues(pub Vec<f64>);

pub fn flux_values(g: &Group, j: usize, phi_a: f64, a: &[f64]) -> FluxValues {
    let m = g.m();
    FluxValues(
        (0..g.n())
            .map(|s| {
                let lin: f64 = (2..=m).map(|l| g.b(s, j - 1, l - 1) * a[l - 2]).sum();
                0.5 * (g.b(s, j - 1, 0) * phi_a * phi_a + phi_a * lin)
            })
            .collect(),
    )
}

/// Sup of |phi(gamma(t2)) - phi(gamma(t1))| / |t2 - t1| over all sample pairs.
pub fn measured_lipschitz(curve: &CharacteristicCurve, values: &[f64]) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..values.len() {
        for k in i + 1..values.len() {
            let dt = (curve.t_grid[k] - curve.t_grid[i]).abs();
            if dt > 0.0 {
                best = best.max((values[k] - values[i]).abs() / dt);
            }
        }
    }
    best
}

/// Measured constant and the characteristic-line bound.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CurveLipschitz {
    pub measured: f64,
    pub bound: f64,
    /// Sampled sup of |w_j| over the curve's bounding box, before inflation.
    pub w_sup: f64,
    pub holder_constant: f64,
    /// True when the bound is the sum-over-s extension (n != 2).
    pub extrapolated: bool,
}

/// Sampled sup of |f| over the bounding box of the curve (plus the curve samples).
pub fn sup_over_curve_box(curve: &CharacteristicCurve, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let pts: Vec<Vec<f64>> = (0..curve.len()).map(|i| curve.point(i)).collect();
    let dim = curve.start.len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in &pts {
        for k in 0..dim {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let varying = (0..dim).filter(|&k| hi[k] > lo[k]).count().max(1);
    let per_axis = ((4096f64).powf(1.0 / varying as f64).floor() as usize).max(3);
    let axes: Vec<Vec<f64>> = (0..dim)
        .map(|k| if hi[k] > lo[k] { linspace(lo[k], hi[k], per_axis) } else { vec![lo[k]] })
        .collect();
    cartesian(&axes)
        .iter()
        .chain(&pts)
        .map(|a| f(a).abs())
        .fold(0.0, f64::max)
}

/// Compares the measured Lipschitz constant of phi along the curve with
/// 1.05 ||w_j||_inf + (1 + sqrt 2)/2 C_h^2 sum_s |b^(s)_j1|.
pub fn lipschitz_along_curve(
    g: &Group,
    curve: &CharacteristicCurve,
    phi: &GraphFunction,
    w_j: &dyn Fn(&[f64]) -> f64,
    holder_constant: f64,
) -> CurveLipschitz {
    let values: Vec<f64> = (0..curve.len()).map(|i| phi.value(&curve.point(i))).collect();
    let measured = measured_lipschitz(curve, &values);
    let w_sup = sup_over_curve_box(curve, w_j);
    let bsum: f64 = (0..g.n()).map(|s| g.b(s, curve.j - 1, 0).abs()).sum();
    let bound = 1.05 * w_sup + (1.0 + 2f64.sqrt()) / 2.0 * holder_constant * holder_constant * bsum;
    CurveLipschitz {
        measured,
        bound,
        w_sup,
        holder_constant,
        extrapolated: g.n() != 2,
    }
}

/// The constant chain C1 = M2 ||h||_inf for a unit-speed line (||h||_inf = 1).
pub fn characteristic_speed_constant(g: &Group, c_l: f64) -> f64 {
    let (m, n) = (g.m() as f64, g.n() as f64);
    let c1 = g.norm_equivalence_c1();
    let bm = g.b_max();
    let m1 = c1 * (m - 1.0) * (2.0 + c_l * bm * n * n);
    2.0 * (m1 + 8.0 * c1 * c1 * n * n * (m - 1.0) * bm * c_l + (2.0 * bm).sqrt() * c1 * n * (m - 1.0))
}

/// Outcome of comparing phi along a curve with the intrinsic Lipschitz constant.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IntrinsicCurveCheck {
    /// Measured Lipschitz constant of t -> phi(gamma(t)).
    pub measured: f64,
    /// Sup of quasi-distance(gamma(t), gamma(t1)) / |t - t1|.
    pub quasi_slope: f64,
    /// C1 from the constant chain.
    pub c1: f64,
    /// C_L * C1.
    pub bound: f64,
    pub holds: bool,
}

/// Checks quasi-distance <= C1 |t - t1| and Lip(phi o gamma) <= C_L C1 on up to 201 curve samples.
pub fn phi_along_curve_lipschitz_vs_intrinsic(
    g: &Group,
    curve: &CharacteristicCurve,
    phi: &GraphFunction,
    c_l: f64,
) -> IntrinsicCurveCheck {
    let stride = (curve.len() / 200).max(1);
    let idx: Vec<usize> = (0..curve.len()).step_by(stride).collect();
    let pts: Vec<Vec<f64>> = idx.iter().map(|&i| curve.point(i)).collect();
    let vals: Vec<f64> = pts.iter().map(|a| phi.value(a)).collect();
    let mut measured: f64 = 0.0;
    let mut quasi_slope: f64 = 0.0;
    for a in 0..idx.len() {
        for b in 0..idx.len() {
            if a == b {
                continue;
            }
            let dt = (curve.t_grid[idx[a]] - curve.t_grid[idx[b]]).abs();
            let d = g.norm(&conjugated_increment(g, vals[a], &pts[a], &pts[b]));
            quasi_slope = quasi_slope.max(d / dt);
            measured = measured.max((vals[a] - vals[b]).abs() / dt);
        }
    }
    let c1 = characteristic_speed_constant(g, c_l);
    let bound = c_l * c1;
    IntrinsicCurveCheck {
        measured,
        quasi_slope,
        c1,
        bound,
        holds: quasi_slope <= c1 && measured <= bound,
    }
}
