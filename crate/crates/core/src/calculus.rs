//! Intrinsic derivatives D^phi_j, gradients of defining functions, and weak-form residuals.

use crate::error::{Error, Result};
use crate::graph::{DomainBox, GraphFunction};
use crate::group::{Group, Point};
use crate::quadrature::QuadratureGrid;

/// Default finite-difference step at `a`.
pub fn default_step(a: &[f64]) -> f64 {
    1e-5 * (1.0 + crate::group::euclid(a))
}

fn check_j(g: &Group, j: usize) -> Result<()> {
    if j < 2 || j > g.m() {
        return Err(Error::InvalidInput(format!("direction j = {j} must lie in 2..={}", g.m())));
    }
    Ok(())
}

/// Vertical coefficients c_s(a) = phi(a) b^(s)_j1 + 1/2 sum_{i>=2} x_i b^(s)_ji of D^phi_j.
pub fn vertical_coefficients(g: &Group, j: usize, phi_a: f64, a: &[f64]) -> Vec<f64> {
    let m = g.m();
    (0..g.n())
        .map(|s| {
            let lin: f64 = (2..=m).map(|i| a[i - 2] * g.b(s, j - 1, i - 1)).sum();
            phi_a * g.b(s, j - 1, 0) + 0.5 * lin
        })
        .collect()
}

/// D^phi_j phi(a) for 2 <= j <= m; analytic partials are used when phi has them and `h` is `None`.
pub fn intrinsic_derivative(g: &Group, phi: &GraphFunction, j: usize, a: &[f64], h: Option<f64>) -> Result<f64> {
    check_j(g, j)?;
    let phi_a = phi.value_checked(a)?;
    if h.is_none() && phi.has_partials() {
        let m = g.m();
        let c = vertical_coefficients(g, j, phi_a, a);
        let mut v = phi.partial(j - 2, a).unwrap();
        for (s, cs) in c.iter().enumerate() {
            v += cs * phi.partial(m - 1 + s, a).unwrap();
        }
        return Ok(v);
    }
    intrinsic_derivative_fd(g, phi, j, a, h.unwrap_or_else(|| default_step(a)))
}

/// Central difference of phi along the frozen direction e_j + sum_s c_s(a) e_{y_s}.
pub fn intrinsic_derivative_fd(g: &Group, phi: &GraphFunction, j: usize, a: &[f64], h: f64) -> Result<f64> {
    check_j(g, j)?;
    let phi_a = phi.value_checked(a)?;
    let m = g.m();
    let c = vertical_coefficients(g, j, phi_a, a);
    let mut dir = vec![0.0; a.len()];
    dir[j - 2] = 1.0;
    for (s, cs) in c.iter().enumerate() {
        dir[m - 1 + s] = *cs;
    }
    let plus: Vec<f64> = a.iter().zip(&dir).map(|(v, d)| v + h * d).collect();
    let minus: Vec<f64> = a.iter().zip(&dir).map(|(v, d)| v - h * d).collect();
    if !phi.domain().contains(&plus) || !phi.domain().contains(&minus) {
        return Err(Error::StepTooLarge { h });
    }
    Ok((phi.value(&plus) - phi.value(&minus)) / (2.0 * h))
}

/// `(D^phi_2 phi, ..., D^phi_m phi)(a)`.
pub fn intrinsic_gradient(g: &Group, phi: &GraphFunction, a: &[f64], h: Option<f64>) -> Result<Vec<f64>> {
    (2..=g.m()).map(|j| intrinsic_derivative(g, phi, j, a, h)).collect()
}

/// `(X_1 f, ..., X_m f)` at p from the coordinate gradient of f.
pub fn horizontal_gradient(g: &Group, grad_f: &[f64], p: &Point) -> Vec<f64> {
    let frame = g.frame(p);
    frame[..g.m()]
        .iter()
        .map(|row| row.iter().zip(grad_f).map(|(c, d)| c * d).sum())
        .collect()
}

/// `-(X_2 f / X_1 f, ..., X_m f / X_1 f)` at a point p of the level set.
pub fn gradient_from_defining_function(g: &Group, grad_f: &dyn Fn(&Point) -> Vec<f64>, p: &Point) -> Result<Vec<f64>> {
    let df = grad_f(p);
    if df.len() != g.m() + g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.m() + g.n(),
            found: df.len(),
        });
    }
    let xf = horizontal_gradient(g, &df, p);
    if xf[0].abs() <= 1e-12 {
        return Err(Error::DegenerateHorizontalGradient { value: xf[0] });
    }
    Ok(xf[1..].iter().map(|v| -v / xf[0]).collect())
}

/// Bump exp(1 - 1/(1 - |u|^2)), u = (a - center)/radius, with peak 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl TestFunction {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput(format!("radius {radius} must be positive")));
        }
        Ok(Self { center, radius })
    }

    /// Same as `new`, also requiring the support to sit strictly inside `domain`.
    pub fn inside(domain: &DomainBox, center: Vec<f64>, radius: f64) -> Result<Self> {
        let z = Self::new(center, radius)?;
        let strict = z
            .center
            .iter()
            .zip(domain.lo.iter().zip(&domain.hi))
            .all(|(&c, (&l, &h))| c - radius > l && c + radius < h);
        if z.center.len() != domain.dim() || !strict {
            return Err(Error::SupportNotCovered);
        }
        Ok(z)
    }

    fn s(&self, a: &[f64]) -> f64 {
        a.iter()
            .zip(&self.center)
            .map(|(v, c)| ((v - c) / self.radius).powi(2))
            .sum()
    }

    pub fn value(&self, a: &[f64]) -> f64 {
        let s = self.s(a);
        if s >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s)).exp()
        }
    }

    pub fn gradient(&self, a: &[f64]) -> Vec<f64> {
        let s = self.s(a);
        if s >= 1.0 {
            return vec![0.0; a.len()];
        }
        let z = (1.0 - 1.0 / (1.0 - s)).exp();
        let ds = -z / ((1.0 - s) * (1.0 - s));
        a.iter()
            .zip(&self.center)
            .map(|(v, c)| ds * 2.0 * (v - c) / (self.radius * self.radius))
            .collect()
    }
}

/// For each j = 2..m: int phi X_j zeta + 1/2 phi^2 sum_s b^(s)_j1 Y_s zeta + int w_j zeta.
///
/// `w(a)` returns `(w_2, ..., w_m)`. Vanishes (up to quadrature) iff D^phi phi = w weakly near zeta.
pub fn distributional_residual(
    g: &Group,
    phi: &GraphFunction,
    w: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    zeta: &TestFunction,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    if zeta.center.len() != grid.domain.dim() || !grid.domain.contains_ball(&zeta.center, zeta.radius) {
        return Err(Error::SupportNotCovered);
    }
    let (m, n) = (g.m(), g.n());
    Ok(grid.integrate_vec(m - 1, |a| {
        let z = zeta.value(a);
        if z == 0.0 {
            return vec![0.0; m - 1];
        }
        let dz = zeta.gradient(a);
        let f = phi.value(a);
        let wv = w(a);
        (2..=m)
            .map(|j| {
                let mut xz = dz[j - 2];
                let mut flux = 0.0;
                for s in 0..n {
                    let lin: f64 = (2..=m).map(|l| g.b(s, j - 1, l - 1) * a[l - 2]).sum();
                    xz += 0.5 * lin * dz[m - 1 + s];
                    flux += g.b(s, j - 1, 0) * dz[m - 1 + s];
                }
                f * xz + 0.5 * f * f * flux + wv[j - 2] * z
            })
            .collect()
    }))
}
