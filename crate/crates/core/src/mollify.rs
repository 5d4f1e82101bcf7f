//! Group mollification of the subgraph indicator and level-set extraction of
//! the smooth approximations phi_alpha.

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::intrinsic_gradient;
use crate::error::{Error, Result};
use crate::graph::{inclusion, linspace, GraphFunction};
use crate::group::{euclid as euclid_norm, Group, Point};
use crate::quadrature::{cumulative_simpson, QuadratureGrid};

/// Smallest accepted number of quadrature points per axis.
pub const MIN_POINTS_PER_AXIS: usize = 4;
pub const DEFAULT_POINTS_PER_AXIS: usize = 16;

/// exp(1 - 1/(1 - s)) on [0, 1), zero beyond; peak 1 at s = 0.
fn bump(s: f64) -> f64 {
    if s < 1.0 {
        (1.0 - 1.0 / (1.0 - s)).exp()
    } else {
        0.0
    }
}

/// Surface area of the unit sphere in R^k.
fn sphere_area(k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI * sphere_area(k - 2) / (k - 2) as f64,
    }
}

/// `int_{R^k} bump(|v|^2) dv`, by composite Simpson in the radius.
fn radial_integral(k: usize) -> f64 {
    let n = 20_000;
    let h = 1.0 / n as f64;
    let f: Vec<f64> = (0..=n)
        .map(|i| {
            let r = i as f64 * h;
            bump(r * r) * r.powi(k as i32 - 1)
        })
        .collect();
    sphere_area(k) * cumulative_simpson(&f, h)[n]
}

/// A column of kernel cells sharing every coordinate but r1.
#[derive(Debug, Clone)]
struct Column {
    /// (r_2..r_m) followed by the vertical coordinates.
    rest: Vec<f64>,
    /// Renormalized cell weights along r1.
    weights: Vec<f64>,
}

/// rho_alpha(p) = alpha^{-(m+2n)} rho(delta_{1/alpha} p) / Z with
/// rho(x, y) = bump(|x|^2) bump(eps^4 |y|^2), supported in the unit homogeneous ball.
#[derive(Debug, Clone)]
pub struct MollifierKernel {
    pub alpha: f64,
    pub per_axis: usize,
    /// Z = int rho over R^{m+n}.
    pub normalizer: f64,
    /// Midpoint mass of rho_alpha before renormalization; should be 1 up to quadrature error.
    pub discrete_mass: f64,
    epsilon: f64,
    m: usize,
    n: usize,
    r1_edges: Vec<f64>,
    columns: Vec<Column>,
}

impl MollifierKernel {
    pub fn new(g: &Group, alpha: f64, per_axis: usize) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!("alpha = {alpha} must be positive")));
        }
        if per_axis < MIN_POINTS_PER_AXIS {
            return Err(Error::QuadratureUnderflow {
                count: per_axis,
                min: MIN_POINTS_PER_AXIS,
            });
        }
        let (m, n, eps) = (g.m(), g.n(), g.epsilon());
        let normalizer = radial_integral(m) * radial_integral(n) * eps.powi(-2 * n as i32);
        let xr = alpha;
        let yr = alpha * alpha / (eps * eps);
        let hx = 2.0 * xr / per_axis as f64;
        let hy = 2.0 * yr / per_axis as f64;
        let mids = |r: f64, h: f64| -> Vec<f64> { (0..per_axis).map(|i| -r + (i as f64 + 0.5) * h).collect() };
        let (mx, my) = (mids(xr, hx), mids(yr, hy));
        let scale = alpha.powi(-((m + 2 * n) as i32)) / normalizer;
        let cell = hx.powi(m as i32) * hy.powi(n as i32);

        let rest_dim = m - 1 + n;
        let count = per_axis.pow(rest_dim as u32);
        let mut columns = Vec::new();
        let mut total = 0.0;
        for idx in 0..count {
            let mut rest = vec![0.0; rest_dim];
            let mut k = idx;
            for d in (0..rest_dim).rev() {
                let i = k % per_axis;
                k /= per_axis;
                rest[d] = if d < m - 1 { mx[i] } else { my[i] };
            }
            let xs: f64 = rest[..m - 1].iter().map(|v| v * v).sum();
            let ys: f64 = rest[m - 1..].iter().map(|v| v * v).sum();
            let weights: Vec<f64> = mx
                .iter()
                .map(|r1| {
                    let sx = (xs + r1 * r1) / (alpha * alpha);
                    let sy = eps.powi(4) * ys / alpha.powi(4);
                    scale * bump(sx) * bump(sy) * cell
                })
                .collect();
            let s: f64 = weights.iter().sum();
            if s > 0.0 {
                total += s;
                columns.push(Column { rest, weights });
            }
        }
        if columns.is_empty() || total <= 0.0 {
            return Err(Error::QuadratureUnderflow {
                count: 0,
                min: MIN_POINTS_PER_AXIS,
            });
        }
        for c in &mut columns {
            for w in &mut c.weights {
                *w /= total;
            }
        }
        Ok(Self {
            alpha,
            per_axis,
            normalizer,
            discrete_mass: total,
            epsilon: eps,
            m,
            n,
            r1_edges: linspace(-xr, xr, per_axis + 1),
            columns,
        })
    }

    /// rho_alpha at p (normalized by Z, not by the discrete mass).
    pub fn density(&self, p: &Point) -> f64 {
        let a = self.alpha;
        let sx = p.x.iter().map(|v| v * v).sum::<f64>() / (a * a);
        let sy = self.epsilon.powi(4) * p.y.iter().map(|v| v * v).sum::<f64>() / a.powi(4);
        a.powi(-((self.m + 2 * self.n) as i32)) * bump(sx) * bump(sy) / self.normalizer
    }

    /// Number of kernel cells with positive weight.
    pub fn support_cells(&self) -> usize {
        self.columns.iter().map(|c| c.weights.iter().filter(|w| **w > 0.0).count()).sum()
    }
}

/// f_alpha(p) = int rho_alpha(r) chi_E(r^{-1} p) dr.
///
/// Each r1-column of the kernel grid is cut where the graph crosses it, using
/// linear interpolation of t(q) - phi(a(q)) between cell edges.
pub fn mollified_indicator(g: &Group, phi: &GraphFunction, kernel: &MollifierKernel, p: &Point) -> f64 {
    let (m, n) = (g.m(), g.n());
    let mut rx = vec![0.0; m];
    let mut qx = vec![0.0; m];
    let mut a = vec![0.0; m - 1 + n];
    let mut gvals = vec![0.0; kernel.r1_edges.len()];
    let mut total = 0.0;
    for col in &kernel.columns {
        rx[1..].copy_from_slice(&col.rest[..m - 1]);
        let ry = &col.rest[m - 1..];
        for (e, &r1) in kernel.r1_edges.iter().enumerate() {
            rx[0] = r1;
            for l in 0..m {
                qx[l] = p.x[l] - rx[l];
            }
            let t = qx[0];
            a[..m - 1].copy_from_slice(&qx[1..]);
            for s in 0..n {
                let qy = p.y[s] - ry[s] - 0.5 * g.bilinear(s, &rx, &p.x);
                a[m - 1 + s] = qy - 0.5 * t * g.apply_row(s, 0, &qx);
            }
            gvals[e] = t - phi.value(&a);
        }
        for (i, w) in col.weights.iter().enumerate() {
            let (g0, g1) = (gvals[i], gvals[i + 1]);
            let frac = match (g0 < 0.0, g1 < 0.0) {
                (true, true) => 1.0,
                (false, false) => 0.0,
                (true, false) => g0 / (g0 - g1),
                (false, true) => g1 / (g1 - g0),
            };
            total += w * frac;
        }
    }
    total.clamp(0.0, 1.0)
}

/// Step for frame-directional differences of f_alpha.
pub fn gradient_step(kernel: &MollifierKernel) -> f64 {
    1e-2 * kernel.alpha
}

/// (X_1 f_alpha, ..., X_m f_alpha) at p by central differences along p . (+-h e_j).
pub fn horizontal_gradient_mollified(g: &Group, phi: &GraphFunction, kernel: &MollifierKernel, p: &Point) -> Vec<f64> {
    let h = gradient_step(kernel);
    (0..g.m())
        .map(|j| {
            let mut e = Point::zero(g.m(), g.n());
            e.x[j] = h;
            let plus = mollified_indicator(g, phi, kernel, &g.mul(p, &e));
            e.x[j] = -h;
            let minus = mollified_indicator(g, phi, kernel, &g.mul(p, &e));
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Level c and bracket [-2M-1, 2M+1] for the section t -> f_alpha(i(a) . t e1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSetExtraction {
    pub c_level: f64,
    pub bound: f64,
    pub tol: f64,
}

impl LevelSetExtraction {
    /// `bound` is M >= sup |phi|.
    pub fn new(c_level: f64, bound: f64) -> Result<Self> {
        if !(c_level > 0.0 && c_level < 1.0) {
            return Err(Error::InvalidInput(format!("level c = {c_level} must lie in (0, 1)")));
        }
        if !(bound >= 0.0) || !bound.is_finite() {
            return Err(Error::InvalidInput(format!("bound M = {bound} must be finite and >= 0")));
        }
        Ok(Self {
            c_level,
            bound,
            tol: 1e-3 * (4.0 * bound + 2.0),
        })
    }

    pub fn for_function(phi: &GraphFunction, c_level: f64) -> Result<Self> {
        Self::new(c_level, phi.sup_abs(33))
    }

    pub fn bracket(&self) -> (f64, f64) {
        (-2.0 * self.bound - 1.0, 2.0 * self.bound + 1.0)
    }
}

/// Point i(a) . (t e1).
pub fn section_point(g: &Group, a: &[f64], t: f64) -> Point {
    g.mul(&inclusion(g, a), &Point::on_v(t, g.m(), g.n()))
}

/// Root t_a of f_alpha(i(a) . t e1) = c by bisection; defines phi_alpha(a).
pub fn level_set_phi_alpha(
    g: &Group,
    phi: &GraphFunction,
    kernel: &MollifierKernel,
    ext: &LevelSetExtraction,
    a: &[f64],
) -> Result<f64> {
    phi.value_checked(a)?;
    let f = |t: f64| mollified_indicator(g, phi, kernel, &section_point(g, a, t));
    let c = ext.c_level;
    let (mut lo, mut hi) = ext.bracket();
    let (f_lo, f_hi) = (f(lo), f(hi));
    if !(f_lo >= c && f_hi <= c) {
        return Err(Error::BracketFailure {
            level: c,
            t_lo: lo,
            t_hi: hi,
            f_lo,
            f_hi,
        });
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..80 {
        mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm - c).abs() <= 1e-3 && hi - lo <= ext.tol {
            break;
        }
        if fm > c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// -(X_j f_alpha / X_1 f_alpha)_{j>=2} at the level point over a.
pub fn phi_alpha_gradient(g: &Group, phi: &GraphFunction, kernel: &MollifierKernel, a: &[f64], t_a: f64) -> Result<Vec<f64>> {
    let xf = horizontal_gradient_mollified(g, phi, kernel, &section_point(g, a, t_a));
    if !(xf[0] < 0.0) {
        return Err(Error::DegenerateHorizontalGradient { value: xf[0] });
    }
    Ok(xf[1..].iter().map(|v| -v / xf[0]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproximationRow {
    pub alpha: f64,
    pub sup_error: f64,
    pub ratio: f64,
    pub sup_gradient: f64,
    pub discrete_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproximationReport {
    pub c_level: f64,
    pub grid: usize,
    pub kernel_points_per_axis: usize,
    pub bound_m: f64,
    pub tol: f64,
    /// Sampled sup of |D^phi phi| on the same grid.
    pub w_sup: f64,
    pub rows: Vec<ApproximationRow>,
    /// Error/alpha ratios vary by less than a factor 2 (or every error is below 2 tol).
    pub rate_pass: bool,
    /// Gradient sup within 10% of w_sup.
    pub gradient_pass: bool,
    pub pass: bool,
}

/// Runs the pipeline on a `grid`^dim node grid of the domain for every alpha.
pub fn approximation_report(
    g: &Group,
    phi: &GraphFunction,
    alphas: &[f64],
    c_level: f64,
    grid: usize,
    kernel_points: usize,
) -> Result<ApproximationReport> {
    if alphas.is_empty() {
        return Err(Error::InvalidInput("alpha list is empty".into()));
    }
    let ext = LevelSetExtraction::for_function(phi, c_level)?;
    let nodes = phi.domain().node_grid(&vec![grid.max(2); phi.dim()]);
    let w_sup = nodes
        .par_iter()
        .map(|a| intrinsic_gradient(g, phi, a, None).map(|w| euclid_norm(&w)))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let kernel = MollifierKernel::new(g, alpha, kernel_points)?;
        let per_node: Vec<(f64, f64)> = nodes
            .par_iter()
            .map(|a| {
                let t = level_set_phi_alpha(g, phi, &kernel, &ext, a)?;
                let grad = phi_alpha_gradient(g, phi, &kernel, a, t)?;
                Ok(((t - phi.value(a)).abs(), euclid_norm(&grad)))
            })
            .collect::<Result<_>>()?;
        let sup_error = per_node.iter().map(|r| r.0).fold(0.0, f64::max);
        let sup_gradient = per_node.iter().map(|r| r.1).fold(0.0, f64::max);
        rows.push(ApproximationRow {
            alpha,
            sup_error,
            ratio: sup_error / alpha,
            sup_gradient,
            discrete_mass: kernel.discrete_mass,
        });
    }
    let (rmin, rmax) = rows
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.ratio), hi.max(r.ratio)));
    let rate_pass = rows.iter().all(|r| r.sup_error <= 2.0 * ext.tol) || (rmin > 0.0 && rmax < 2.0 * rmin);
    let gradient_pass = rows.iter().all(|r| r.sup_gradient <= 1.10 * w_sup + 1e-12);
    Ok(ApproximationReport {
        c_level,
        grid,
        kernel_points_per_axis: kernel_points,
        bound_m: ext.bound,
        tol: ext.tol,
        w_sup,
        rows,
        rate_pass,
        gradient_pass,
        pass: rate_pass && gradient_pass,
    })
}

/// int_O int |grad_G f_alpha|(i(a) . t e1) dt da over a band around the level set.
///
/// The band is widened until f_alpha is within 1e-9 of 1 and 0 at its ends;
/// `t_points` (odd) Simpson nodes cover it.
pub fn mollified_gradient_mass(
    g: &Group,
    phi: &GraphFunction,
    kernel: &MollifierKernel,
    base: &QuadratureGrid,
    t_points: usize,
) -> Result<f64> {
    let t_points = (t_points.max(9)) | 1;
    let ext = LevelSetExtraction::for_function(phi, 0.5)?;
    let bands: Vec<f64> = (0..base.len())
        .into_par_iter()
        .map(|i| {
            let a = base.point(i);
            let tc = level_set_phi_alpha(g, phi, kernel, &ext, &a)?;
            let f = |t: f64| mollified_indicator(g, phi, kernel, &section_point(g, &a, t));
            let widen = |sign: f64, target: f64| -> Result<f64> {
                let mut d = kernel.alpha;
                for _ in 0..60 {
                    if (f(tc + sign * d) - target).abs() <= 1e-9 {
                        return Ok(tc + sign * d);
                    }
                    d *= 1.5;
                }
                Err(Error::BracketFailure {
                    level: target,
                    t_lo: tc - d,
                    t_hi: tc + d,
                    f_lo: f(tc - d),
                    f_hi: f(tc + d),
                })
            };
            let (lo, hi) = (widen(-1.0, 1.0)?, widen(1.0, 0.0)?);
            let ts = linspace(lo, hi, t_points);
            let vals: Vec<f64> = ts
                .iter()
                .map(|&t| euclid_norm(&horizontal_gradient_mollified(g, phi, kernel, &section_point(g, &a, t))))
                .collect();
            Ok(cumulative_simpson(&vals, ts[1] - ts[0])[t_points - 1])
        })
        .collect::<Result<_>>()?;
    Ok(bands.iter().sum::<f64>() * base.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DomainBox;
    use crate::group::StandardGroup;

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((sphere_area(4) - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn kernel_mass_near_one() {
        for g in [StandardGroup::Heisenberg(1), StandardGroup::FreeStep2(3)] {
            let g = Group::standard(g).unwrap();
            let pts = if g.m() + g.n() > 3 { 10 } else { 16 };
            let k = MollifierKernel::new(&g, 0.1, pts).unwrap();
            assert!((k.discrete_mass - 1.0).abs() < 1e-3, "{}", k.discrete_mass);
        }
    }

    #[test]
    fn underflow() {
        let g = Group::standard(StandardGroup::Heisenberg(1)).unwrap();
        assert!(matches!(MollifierKernel::new(&g, 0.1, 3), Err(Error::QuadratureUnderflow { .. })));
    }

    #[test]
    fn flat_graph_half_and_extremes() {
        let g = Group::standard(StandardGroup::Heisenberg(1)).unwrap();
        let phi = GraphFunction::constant(DomainBox::cube(2, -1.0, 1.0), 0.0);
        let k = MollifierKernel::new(&g, 0.2, 16).unwrap();
        let f0 = mollified_indicator(&g, &phi, &k, &Point::zero(2, 1));
        assert!((f0 - 0.5).abs() < 1e-12);
        assert!((mollified_indicator(&g, &phi, &k, &section_point(&g, &[0.3, 0.1], -0.5)) - 1.0).abs() < 1e-12);
        assert_eq!(mollified_indicator(&g, &phi, &k, &section_point(&g, &[0.3, 0.1], 0.5)), 0.0);
    }
}
