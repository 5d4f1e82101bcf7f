//! Cone openings beta(k), the eta construction, and cone-containment sweeps for subgraphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::area::subgraph_indicator;
use crate::error::{Error, Result};
use crate::graph::{graph_point, split_coords, GraphFunction};
use crate::group::{euclid, Group, Point};

/// Tolerance of the exact re-verification of a constructed eta.
pub const ETA_TOL: f64 = 1e-12;

/// k, h = sqrt(k^2/(2-k^2)) and the opening beta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeParameter {
    pub k: f64,
    pub h: f64,
    pub beta: f64,
}

fn check_k(k: f64) -> Result<()> {
    if k > 0.0 && k <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidK(k))
    }
}

/// Largest beta with beta (beta/eps^2 - b/2) <= 3 b h / 8 and, for k < 1, beta^2 <= k^2/(2 - 2k^2).
pub fn beta_for_k(k: f64, epsilon: f64, b12: f64) -> Result<ConeParameter> {
    check_k(k)?;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    let b = b12.abs();
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidInput(format!("b12 = {b12} must be non-zero")));
    }
    let h = (k * k / (2.0 - k * k)).sqrt();
    let e2 = epsilon * epsilon;
    let root = e2 * (b / 2.0 + (b * b / 4.0 + 3.0 * b * h / (2.0 * e2)).sqrt()) / 2.0;
    let second = if k < 1.0 { k / (2.0 - 2.0 * k * k).sqrt() } else { f64::INFINITY };
    Ok(ConeParameter {
        k,
        h,
        beta: root.min(second),
    })
}

/// Both angle conditions and `<B eta, z> = y` in the plane, with phi_z(eta) = b (eta2 z1 - eta1 z2).
fn verify_planar(z: [f64; 2], y: f64, b: f64, k: f64, eta: [f64; 2]) -> bool {
    let c = (1.0 - k * k).max(0.0).sqrt();
    let cone = |v: [f64; 2]| v[0] <= -c * euclid(&v) + ETA_TOL;
    let lhs = b * (eta[1] * z[0] - eta[0] * z[1]);
    cone(eta) && cone([z[0] - eta[0], z[1] - eta[1]]) && (lhs - y).abs() <= ETA_TOL * y.abs().max(1.0)
}

/// Points on the segment between the two far vertices of R_z(h) where phi_z = y.
fn parallelogram_eta(z: [f64; 2], y: f64, b: f64, h: f64) -> Option<[f64; 2]> {
    let [z1, z2] = z;
    let v1 = [(z2 + h * z1) / (2.0 * h), (z2 + h * z1) / 2.0];
    let v2 = [(h * z1 - z2) / (2.0 * h), (z2 - h * z1) / 2.0];
    // phi_z(v1) = -phi_z(v2); a negative b swaps the roles automatically.
    let top = b * (h * h * z1 * z1 - z2 * z2) / (2.0 * h);
    if top == 0.0 || !top.is_finite() {
        return None;
    }
    let lambda = (y + top) / (2.0 * top);
    if !(-1e-12..=1.0 + 1e-12).contains(&lambda) {
        return None;
    }
    let lambda = lambda.clamp(0.0, 1.0);
    let mut eta = [v2[0] + lambda * (v1[0] - v2[0]), v2[1] + lambda * (v1[1] - v2[1])];
    // Land exactly on the identity: solve for the second coordinate when z1 != 0.
    if z1 != 0.0 {
        eta[1] = (y / b + eta[0] * z2) / z1;
    }
    Some(eta)
}

/// Planar solve without the cone precondition; tries R_z(h), then the exact admissible set.
fn solve_planar(z: [f64; 2], y: f64, b: f64, k: f64, h: f64) -> Result<[f64; 2]> {
    if y == 0.0 {
        return Ok([0.0, 0.0]);
    }
    if b == 0.0 {
        return Err(Error::NoAdmissibleEta);
    }
    if let Some(eta) = parallelogram_eta(z, y, b, h).filter(|e| verify_planar(z, y, b, k, *e)) {
        return Ok(eta);
    }
    let fallback = if k >= 1.0 {
        // Both conditions reduce to z1 <= eta1 <= 0.
        (z[0] != 0.0).then(|| {
            let e1 = z[0] / 2.0;
            [e1, (y / b + e1 * z[1]) / z[0]]
        })
    } else {
        parallelogram_eta(z, y, b, k / (1.0 - k * k).sqrt())
    };
    fallback
        .filter(|e| verify_planar(z, y, b, k, *e))
        .ok_or(Error::NoAdmissibleEta)
}

/// m = 2, n = 1, nu = e1: eta with b12 (eta2 z1 - eta1 z2) = y and both angle conditions,
/// for p = (z, y) in the cone max(|z2|, eps |y - b z1 z2 / 2|^(1/2)) <= -beta z1.
pub fn construct_eta_m2n1(g: &Group, p: &Point, k: f64) -> Result<[f64; 2]> {
    if g.m() != 2 || g.n() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: g.m(),
        });
    }
    check_k(k)?;
    let z = [p.x[0], p.x[1]];
    let y = p.y[0];
    if z == [0.0, 0.0] {
        return Err(Error::DegenerateZ);
    }
    let b = g.b(0, 0, 1);
    let param = beta_for_k(k, g.epsilon(), b)?;
    let wpart = z[1].abs().max(g.epsilon() * (y - 0.5 * b * z[0] * z[1]).abs().sqrt());
    if wpart > -param.beta * z[0] {
        return Err(Error::PointOutsideCone { beta: param.beta });
    }
    solve_planar(z, y, b, k, param.h)
}

/// General step-2 case: one eta_s per vertical layer with <B^(s) eta_s, z> = y_s and
/// <eta_s, nu> <= -sqrt(1-k^2)|eta_s|, <z - eta_s, nu> <= -sqrt(1-k^2)|z - eta_s|.
///
/// Each layer is first solved in the plane spanned by nu and the part of z orthogonal
/// to nu (or B^(s) nu when z is parallel to nu). When that plane carries no admissible
/// eta, eta_s = z/2 + w with w orthogonal to nu and minimal is tried.
pub fn construct_eta(g: &Group, p: &Point, nu: &[f64], k: f64, beta: f64) -> Result<Vec<Vec<f64>>> {
    let m = g.m();
    check_k(k)?;
    if nu.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: nu.len(),
        });
    }
    let nn = euclid(nu);
    if !(nn > 0.0) {
        return Err(Error::InvalidInput("nu must be non-zero".into()));
    }
    let nu: Vec<f64> = nu.iter().map(|v| v / nn).collect();
    let z = &p.x;
    let zn = euclid(z);
    if zn == 0.0 {
        return Err(Error::DegenerateZ);
    }
    let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(a, b)| a * b).sum() };
    let za = dot(z, &nu);
    let xi = za.abs() / zn;
    if za >= 0.0 || xi < 1.0 / (1.0 + beta * beta).sqrt() {
        return Err(Error::PointOutsideCone { beta });
    }
    let h = (k * k / (2.0 - k * k)).sqrt();
    let perp: Vec<f64> = z.iter().zip(&nu).map(|(a, b)| a - za * b).collect();
    let pn = euclid(&perp);
    let layer_ok = |s: usize, eta: &[f64]| verify_eta_layer(g, s, p, &nu, k, eta);
    (0..g.n())
        .map(|s| {
            let y = p.y[s];
            let u: Option<Vec<f64>> = if pn > 1e-14 * zn {
                Some(perp.iter().map(|v| v / pn).collect())
            } else {
                let bn: Vec<f64> = (0..m).map(|j| g.apply_row(s, j, &nu)).collect();
                let l = euclid(&bn);
                (l > 0.0).then(|| bn.iter().map(|v| v / l).collect())
            };
            if let Some(u) = u {
                let bu: Vec<f64> = (0..m).map(|j| g.apply_row(s, j, &u)).collect();
                let b_eff = dot(&nu, &bu);
                if let Ok(e) = solve_planar([za, dot(z, &u)], y, b_eff, k, h) {
                    let eta: Vec<f64> = nu.iter().zip(&u).map(|(a, b)| e[0] * a + e[1] * b).collect();
                    if layer_ok(s, &eta) {
                        return Ok(eta);
                    }
                }
            }
            // <B eta, z> = <eta, v> with v = -B z, and <z, v> = 0.
            let v: Vec<f64> = (0..m).map(|j| -g.apply_row(s, j, z)).collect();
            let va = dot(&v, &nu);
            let vp: Vec<f64> = v.iter().zip(&nu).map(|(a, b)| a - va * b).collect();
            let vn2 = dot(&vp, &vp);
            if vn2 == 0.0 {
                return if y == 0.0 {
                    Ok(z.iter().map(|c| c / 2.0).collect())
                } else {
                    Err(Error::NoAdmissibleEta)
                };
            }
            let eta: Vec<f64> = z.iter().zip(&vp).map(|(a, b)| a / 2.0 + y * b / vn2).collect();
            if layer_ok(s, &eta) {
                Ok(eta)
            } else {
                Err(Error::NoAdmissibleEta)
            }
        })
        .collect()
}

fn verify_eta_layer(g: &Group, s: usize, p: &Point, nu: &[f64], k: f64, eta: &[f64]) -> bool {
    let c = (1.0 - k * k).max(0.0).sqrt();
    let nn = euclid(nu);
    let dot = |v: &[f64]| v.iter().zip(nu).map(|(a, b)| a * b).sum::<f64>() / nn;
    let rest: Vec<f64> = p.x.iter().zip(eta).map(|(a, b)| a - b).collect();
    let lhs = g.bilinear(s, eta, &p.x);
    dot(eta) <= -c * euclid(eta) + ETA_TOL
        && dot(&rest) <= -c * euclid(&rest) + ETA_TOL
        && (lhs - p.y[s]).abs() <= ETA_TOL * p.y[s].abs().max(1.0)
}

/// Re-checks the identity and both angle conditions for each eta_s.
pub fn verify_eta(g: &Group, p: &Point, nu: &[f64], k: f64, etas: &[Vec<f64>]) -> bool {
    etas.len() == g.n() && etas.iter().enumerate().all(|(s, eta)| verify_eta_layer(g, s, p, nu, k, eta))
}

/// Rejection-samples a point of the m2n1 cone of opening beta with |z| <= radius.
pub fn sample_cone_point_m2n1(g: &Group, beta: f64, radius: f64, rng: &mut impl Rng) -> Point {
    let b = g.b(0, 0, 1);
    let eps = g.epsilon();
    loop {
        let z1 = -rng.gen_range(0.0..radius);
        let z2 = rng.gen_range(-radius..radius);
        let ymax = (beta * radius / eps).powi(2) + 0.5 * (b * radius * radius).abs();
        let y = rng.gen_range(-ymax..ymax);
        let wpart = z2.abs().max(eps * (y - 0.5 * b * z1 * z2).abs().sqrt());
        if z1 < 0.0 && wpart <= -beta * z1 {
            return Point::new(vec![z1, z2], vec![y]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeReport {
    pub beta: f64,
    pub samples: usize,
    pub checked: usize,
    /// Cone points whose base coordinates left the domain.
    pub skipped: usize,
    /// Lower-cone points outside the subgraph.
    pub lower_violations: usize,
    /// Upper-cone points inside the subgraph.
    pub upper_violations: usize,
    pub violations: usize,
    pub seed: u64,
}

fn random_ball(rng: &mut impl Rng, dim: usize, radius: f64) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    while euclid(&v) == 0.0 || euclid(&v) > 1.0 {
        v = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    }
    v.iter().map(|c| c * radius).collect()
}

/// For random graph points P = Phi(a) and q = P . w . (-+s e1) with ||w|| < beta s,
/// checks that the lower cone lies in the subgraph and the upper cone outside it.
pub fn check_cone_containment(g: &Group, phi: &GraphFunction, beta: f64, samples: usize, seed: u64) -> Result<ConeReport> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidInput(format!("beta = {beta} must be positive")));
    }
    let (m, n) = (g.m(), g.n());
    let dom = phi.domain();
    let s_max = 0.5 * dom.lo.iter().zip(&dom.hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Draw everything up front so the sweep is deterministic under any thread count.
    let draws: Vec<(Vec<f64>, f64, Vec<f64>, Vec<f64>)> = (0..samples)
        .map(|_| {
            let a = dom.sample(&mut rng);
            let s = rng.gen_range(0.0..1.0f64).max(1e-6) * s_max;
            let xhat = random_ball(&mut rng, m - 1, beta * s);
            let yhat = random_ball(&mut rng, n, (beta * s / g.epsilon()).powi(2));
            (a, s, xhat, yhat)
        })
        .collect();
    let outcomes: Vec<[Option<bool>; 2]> = draws
        .par_iter()
        .map(|(a, s, xhat, yhat)| {
            let p = graph_point(g, phi, a);
            let mut wx = vec![0.0];
            wx.extend_from_slice(xhat);
            let w = Point::new(wx, yhat.clone());
            let pw = g.mul(&p, &w);
            [-1.0, 1.0].map(|sign| {
                let q = g.mul(&pw, &Point::on_v(sign * s, m, n));
                let (base, _) = split_coords(g, &q);
                if !dom.contains(&base) {
                    return None;
                }
                let inside = subgraph_indicator(g, phi, &q).ok()? == 1;
                Some(if sign < 0.0 { inside } else { !inside })
            })
        })
        .collect();
    let count = |i: usize, ok: bool| outcomes.iter().filter(|o| o[i] == Some(ok)).count();
    let lower_violations = count(0, false);
    let upper_violations = count(1, false);
    let checked = count(0, true) + count(1, true) + lower_violations + upper_violations;
    Ok(ConeReport {
        beta,
        samples,
        checked,
        skipped: 2 * samples - checked,
        lower_violations,
        upper_violations,
        violations: lower_violations + upper_violations,
        seed,
    })
}
