//! Unit normal of the subgraph and the area-formula integral.
//!
//! The group constants relating this integral to the perimeter measure are
//! not known numerically, so every value here is the integral itself.

use serde::Serialize;

use crate::calculus::intrinsic_gradient;
use crate::error::{Error, Result};
use crate::graph::{split_coords, GraphFunction};
use crate::group::{Group, Point};
use crate::quadrature::{richardson_order, QuadratureGrid};

/// `(-1, w) / sqrt(1 + |w|^2)`.
pub fn unit_normal(w: &[f64]) -> Vec<f64> {
    let s = (1.0 + w.iter().map(|v| v * v).sum::<f64>()).sqrt();
    std::iter::once(-1.0 / s).chain(w.iter().map(|v| v / s)).collect()
}

/// Midpoint quadrature of `sqrt(1 + |w|^2)` over the grid.
pub fn area_integral(w: &(dyn Fn(&[f64]) -> Vec<f64> + Sync), grid: &QuadratureGrid) -> f64 {
    grid.integrate(|a| (1.0 + w(a).iter().map(|v| v * v).sum::<f64>()).sqrt())
}

/// Area integral with w taken from the intrinsic gradient of `phi`.
pub fn area_integral_of(g: &Group, phi: &GraphFunction, grid: &QuadratureGrid) -> Result<f64> {
    // Surface the first failing point instead of silently integrating NaN.
    if let Some(a) = grid.points().next() {
        intrinsic_gradient(g, phi, &a, None)?;
    }
    let w = |a: &[f64]| intrinsic_gradient(g, phi, a, None).unwrap_or_else(|_| vec![f64::NAN; g.m() - 1]);
    let v = area_integral(&w, grid);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteState { t: f64::NAN })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaReport {
    pub area_integral: f64,
    pub grid: usize,
    /// Observed order from grids k/4, k/2, k; None when the integrand is constant.
    pub estimated_order: Option<f64>,
}

pub fn area_report(g: &Group, phi: &GraphFunction, per_axis: usize) -> Result<AreaReport> {
    if per_axis == 0 {
        return Err(Error::InvalidInput("grid must be positive".into()));
    }
    let at = |k: usize| area_integral_of(g, phi, &QuadratureGrid::uniform(phi.domain().clone(), k));
    let fine = at(per_axis)?;
    let estimated_order = if per_axis >= 8 && per_axis % 4 == 0 {
        let (c, mid) = (at(per_axis / 4)?, at(per_axis / 2)?);
        let r = richardson_order(c, mid, fine);
        let scale = fine.abs().max(1.0);
        ((c - mid).abs() > 1e-13 * scale && (mid - fine).abs() > 1e-14 * scale && r.is_finite()).then_some(r)
    } else {
        None
    };
    Ok(AreaReport {
        area_integral: fine,
        grid: per_axis,
        estimated_order,
    })
}

/// 1 when p lies strictly below the graph, 0 otherwise.
pub fn subgraph_indicator(g: &Group, phi: &GraphFunction, p: &Point) -> Result<u8> {
    let (a, t) = split_coords(g, p);
    let v = phi.value_checked(&a)?;
    Ok(u8::from(t < v))
}

/// A point with its subgraph membership.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphSample {
    pub point: Point,
    pub inside: bool,
}

impl SubgraphSample {
    pub fn classify(g: &Group, phi: &GraphFunction, p: Point) -> Result<Self> {
        let inside = subgraph_indicator(g, phi, &p)? == 1;
        Ok(Self { point: p, inside })
    }
}
