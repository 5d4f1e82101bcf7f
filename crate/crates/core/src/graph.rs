//! The splitting G = W . V with V the x1-axis, intrinsic graphs over W, and cones.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::group::{euclid, Group, Point};

/// Relative slack used when testing domain membership.
const DOMAIN_SLACK: f64 = 1e-12;

/// A point of W written in coordinates `(x_2..x_m, y_1..y_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasePoint {
    pub xhat: Vec<f64>,
    pub y: Vec<f64>,
}

impl BasePoint {
    pub fn from_coords(a: &[f64], m: usize) -> Self {
        Self {
            xhat: a[..m - 1].to_vec(),
            y: a[m - 1..].to_vec(),
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        self.xhat.iter().chain(&self.y).copied().collect()
    }
}

/// Axis-aligned box in R^{m+n-1}.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidInput("domain needs finite lo < hi on every axis".into()));
        }
        Ok(Self { lo, hi })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.dim()
            && a.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&v, (&l, &h))| {
                let slack = DOMAIN_SLACK * (1.0 + (h - l).abs());
                v >= l - slack && v <= h + slack
            })
    }

    /// Whether the box `[c - r, c + r]` lies inside, with margin.
    pub fn contains_ball(&self, c: &[f64], r: f64) -> bool {
        c.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&l, &h))| v - r >= l - DOMAIN_SLACK && v + r <= h + DOMAIN_SLACK)
    }

    /// Nodes of a uniform grid with `k` points per axis, endpoints included.
    pub fn node_grid(&self, per_axis: &[usize]) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = per_axis
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&k, (&l, &h))| linspace(l, h, k))
            .collect();
        cartesian(&axes)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| rng.gen_range(l..=h))
            .collect()
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect()
}

/// All tuples of the axis values, last axis fastest.
pub(crate) fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = axes.iter().map(Vec::len).product();
    (0..total)
        .map(|mut idx| {
            let mut pt = vec![0.0; axes.len()];
            for d in (0..axes.len()).rev() {
                let k = axes[d].len();
                pt[d] = axes[d][idx % k];
                idx /= k;
            }
            pt
        })
        .collect()
}

/// Values on a uniform node grid over a box, interpolated multilinearly.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGrid {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl SampledGrid {
    /// Row-major values (last axis fastest); every axis needs at least 2 nodes.
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&k| k < 2) {
            return Err(Error::InvalidInput("grid axes need at least 2 nodes".into()));
        }
        let total: usize = shape.iter().product();
        if total != values.len() {
            return Err(Error::DimensionMismatch {
                expected: total,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("grid values must be finite".into()));
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Multilinear interpolation; points outside the box are clamped to it.
    fn interpolate(&self, domain: &DomainBox, a: &[f64]) -> f64 {
        let d = self.shape.len();
        let mut base = 0usize;
        let mut stride = vec![0usize; d];
        let mut acc = 1usize;
        for k in (0..d).rev() {
            stride[k] = acc;
            acc *= self.shape[k];
        }
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let cells = (self.shape[k] - 1) as f64;
            let u = ((a[k] - domain.lo[k]) / (domain.hi[k] - domain.lo[k]) * cells).clamp(0.0, cells);
            let i = (u.floor() as usize).min(self.shape[k] - 2);
            frac[k] = u - i as f64;
            base += i * stride[k];
        }
        let mut total = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = base;
            for k in 0..d {
                if corner >> k & 1 == 1 {
                    w *= frac[k];
                    idx += stride[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                total += w * self.values[idx];
            }
        }
        total
    }
}

type DynFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Expression { expr: Expr, partials: Option<Vec<Expr>> },
    Grid(SampledGrid),
    Closure(DynFn),
}

/// A scalar function phi on a box of W.
#[derive(Clone)]
pub struct GraphFunction {
    domain: DomainBox,
    kind: Kind,
}

impl std::fmt::Debug for GraphFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.kind {
            Kind::Expression { expr, .. } => format!("expr {expr}"),
            Kind::Grid(g) => format!("grid {:?}", g.shape),
            Kind::Closure(_) => "closure".to_string(),
        };
        f.debug_struct("GraphFunction")
            .field("domain", &self.domain)
            .field("kind", &kind)
            .finish()
    }
}

/// Coordinate names `x2..xm, y1..yn` (plus `y` when n = 1).
pub fn coordinate_names(m: usize, n: usize) -> Vec<String> {
    let mut names: Vec<String> = (2..=m).map(|j| format!("x{j}")).collect();
    names.extend((1..=n).map(|s| format!("y{s}")));
    names
}

impl GraphFunction {
    /// Parses an expression in the coordinates of `coordinate_names(m, n)`; partials are derived symbolically.
    pub fn expr(src: &str, m: usize, n: usize, domain: DomainBox) -> Result<Self> {
        let dim = m + n - 1;
        if domain.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: domain.dim(),
            });
        }
        let mut names = coordinate_names(m, n);
        let expr = if n == 1 {
            // `y` is accepted as an alias of `y1`.
            names.push("y".into());
            let raw = Expr::parse(src, &names)?;
            remap_alias(raw, dim, dim - 1)
        } else {
            Expr::parse(src, &names)?
        };
        let partials = (0..dim).map(|i| expr.diff(i)).collect();
        Ok(Self {
            domain,
            kind: Kind::Expression {
                expr,
                partials: Some(partials),
            },
        })
    }

    pub fn grid(domain: DomainBox, grid: SampledGrid) -> Result<Self> {
        if grid.shape.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: grid.shape.len(),
            });
        }
        Ok(Self {
            domain,
            kind: Kind::Grid(grid),
        })
    }

    /// Samples `f` on a node grid and keeps the multilinear interpolant.
    pub fn sampled(domain: DomainBox, shape: Vec<usize>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = domain.node_grid(&shape).iter().map(|a| f(a)).collect();
        Self::grid(domain, SampledGrid::new(shape, values)?)
    }

    pub fn from_fn(domain: DomainBox, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            domain,
            kind: Kind::Closure(Arc::new(f)),
        }
    }

    pub fn constant(domain: DomainBox, value: f64) -> Self {
        Self {
            domain,
            kind: Kind::Expression {
                expr: Expr::Const(value),
                partials: None,
            },
        }
        .with_zero_partials()
    }

    fn with_zero_partials(mut self) -> Self {
        if let Kind::Expression { partials, .. } = &mut self.kind {
            *partials = Some(vec![Expr::Const(0.0); self.domain.dim()]);
        }
        self
    }

    /// Drops analytic partials so that derivative code falls back to finite differences.
    pub fn without_partials(mut self) -> Self {
        if let Kind::Expression { partials, .. } = &mut self.kind {
            *partials = None;
        }
        self
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.kind, Kind::Grid(_))
    }

    /// Value anywhere: expressions and closures are evaluated directly, grids clamp to the box.
    #[inline]
    pub fn value(&self, a: &[f64]) -> f64 {
        match &self.kind {
            Kind::Expression { expr, .. } => expr.eval(a),
            Kind::Grid(g) => g.interpolate(&self.domain, a),
            Kind::Closure(f) => f(a),
        }
    }

    /// Value with a domain check.
    pub fn value_checked(&self, a: &[f64]) -> Result<f64> {
        if !self.domain.contains(a) {
            return Err(Error::OutOfDomain { point: a.to_vec() });
        }
        Ok(self.value(a))
    }

    pub fn has_partials(&self) -> bool {
        matches!(&self.kind, Kind::Expression { partials: Some(_), .. })
    }

    /// Analytic partial in coordinate `i` of `(x_2..x_m, y_1..y_n)`, when available.
    pub fn partial(&self, i: usize, a: &[f64]) -> Option<f64> {
        match &self.kind {
            Kind::Expression {
                partials: Some(p), ..
            } => Some(p[i].eval(a)),
            _ => None,
        }
    }

    /// Sampled sup of |phi| over a node grid of the domain.
    pub fn sup_abs(&self, per_axis: usize) -> f64 {
        let shape = vec![per_axis.max(2); self.dim()];
        match &self.kind {
            Kind::Grid(g) => g.values.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
            _ => self
                .domain
                .node_grid(&shape)
                .iter()
                .fold(0.0, |m: f64, a| m.max(self.value(a).abs())),
        }
    }
}

fn remap_alias(e: Expr, alias: usize, target: usize) -> Expr {
    let r = |b: Box<Expr>| Box::new(remap_alias(*b, alias, target));
    match e {
        Expr::Var(i) if i == alias => Expr::Var(target),
        Expr::Neg(a) => Expr::Neg(r(a)),
        Expr::Add(a, b) => Expr::Add(r(a), r(b)),
        Expr::Sub(a, b) => Expr::Sub(r(a), r(b)),
        Expr::Mul(a, b) => Expr::Mul(r(a), r(b)),
        Expr::Div(a, b) => Expr::Div(r(a), r(b)),
        Expr::Pow(a, b) => Expr::Pow(r(a), r(b)),
        Expr::Call(f, a) => Expr::Call(f, r(a)),
        other => other,
    }
}

/// `i(a) = (0, xhat, y)`.
pub fn inclusion(g: &Group, a: &[f64]) -> Point {
    let m = g.m();
    let mut x = Vec::with_capacity(m);
    x.push(0.0);
    x.extend_from_slice(&a[..m - 1]);
    Point::new(x, a[m - 1..].to_vec())
}

/// Base coordinates of a point of W (its first coordinate is ignored).
pub fn base_coords(p_w: &Point) -> Vec<f64> {
    p_w.x[1..].iter().chain(&p_w.y).copied().collect()
}

/// `p = p_W . (t e1)`; returns `(p_W, t)`.
pub fn project_splitting(g: &Group, p: &Point) -> (Point, f64) {
    let t = p.x[0];
    let mut x = p.x.clone();
    x[0] = 0.0;
    let y = (0..g.n())
        .map(|s| p.y[s] - 0.5 * t * g.apply_row(s, 0, &p.x))
        .collect();
    (Point::new(x, y), t)
}

/// Base coordinates and graph coordinate of `p`.
pub fn split_coords(g: &Group, p: &Point) -> (Vec<f64>, f64) {
    let (w, t) = project_splitting(g, p);
    (base_coords(&w), t)
}

/// `Phi(a) = i(a) . (phi(a) e1)`, without a domain check.
pub fn graph_point(g: &Group, phi: &GraphFunction, a: &[f64]) -> Point {
    let t = phi.value(a);
    g.mul(&inclusion(g, a), &Point::on_v(t, g.m(), g.n()))
}

pub fn graph_map(g: &Group, phi: &GraphFunction, a: &[f64]) -> Result<Point> {
    check_base(g, phi, a)?;
    phi.value_checked(a)?;
    Ok(graph_point(g, phi, a))
}

fn check_base(g: &Group, phi: &GraphFunction, a: &[f64]) -> Result<()> {
    let dim = g.m() + g.n() - 1;
    if a.len() != dim || phi.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: if a.len() != dim { a.len() } else { phi.dim() },
        });
    }
    Ok(())
}

/// Evaluator for phi_q, whose graph is `q . graph(phi)`.
#[derive(Debug, Clone)]
pub struct TranslatedGraph {
    group: Group,
    phi: GraphFunction,
    q_inv: Point,
}

pub fn translate_graph_function(g: &Group, phi: &GraphFunction, q: &Point) -> TranslatedGraph {
    TranslatedGraph {
        group: g.clone(),
        phi: phi.clone(),
        q_inv: g.inverse(q),
    }
}

impl TranslatedGraph {
    /// `phi_q(a) = -x1(q^{-1} i(a)) + phi(P_W(q^{-1} i(a)))`.
    pub fn value(&self, a: &[f64]) -> Result<f64> {
        let g = &self.group;
        let u = g.mul(&self.q_inv, &inclusion(g, a));
        let (b, t) = split_coords(g, &u);
        let v = self.phi.value_checked(&b)?;
        Ok(v - t)
    }
}

/// Intrinsic cone `{p : ||P_W(v^{-1} p)|| <= beta ||P_V(v^{-1} p)||}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    pub vertex: Point,
    pub beta: f64,
}

impl Cone {
    pub fn new(vertex: Point, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::InvalidInput(format!("cone opening {beta} must be >= 0")));
        }
        Ok(Self { vertex, beta })
    }
}

pub fn cone_membership(g: &Group, cone: &Cone, p: &Point) -> bool {
    let d = g.mul(&g.inverse(&cone.vertex), p);
    let (w, t) = project_splitting(g, &d);
    g.norm(&w) <= cone.beta * t.abs()
}

/// `phi^(a)^{-1} i(a)^{-1} i(b) phi^(a)` as a group element.
pub fn conjugated_increment(g: &Group, phi_a: f64, a: &[f64], b: &[f64]) -> Point {
    let (m, n) = (g.m(), g.n());
    let c = Point::on_v(phi_a, m, n);
    let step = g.mul(&g.inverse(&inclusion(g, a)), &inclusion(g, b));
    g.mul(&g.mul(&g.inverse(&c), &step), &c)
}

/// `||phi^(i(a))^{-1} i(a)^{-1} i(b) phi^(i(a))||`.
pub fn graph_quasidistance(g: &Group, phi: &GraphFunction, a: &[f64], b: &[f64]) -> Result<f64> {
    check_base(g, phi, a)?;
    let phi_a = phi.value_checked(a)?;
    phi.value_checked(b)?;
    Ok(g.norm(&conjugated_increment(g, phi_a, a, b)))
}

/// Coordinate form sigma_phi(b, a) = sum_s |y_s - y'_s + phi(b) sum_l (x_l - x'_l) b_1l - 1/2 <B x', x>|^(1/2),
/// with `a = (x, y)` and `b = (x', y')`.
pub fn sigma_phi(g: &Group, phi: &GraphFunction, b: &[f64], a: &[f64]) -> Result<f64> {
    check_base(g, phi, a)?;
    let phi_b = phi.value_checked(b)?;
    phi.value_checked(a)?;
    let pa = inclusion(g, a);
    let pb = inclusion(g, b);
    let m = g.m();
    Ok((0..g.n())
        .map(|s| {
            let lin: f64 = (1..m).map(|l| (pa.x[l] - pb.x[l]) * g.b(s, 0, l)).sum();
            (pa.y[s] - pb.y[s] + phi_b * lin - 0.5 * g.bilinear(s, &pb.x, &pa.x))
                .abs()
                .sqrt()
        })
        .sum())
}

/// How pairs are drawn for the Lipschitz estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSampling {
    /// All pairs of the largest uniform grid with at most this many pairs.
    pub max_grid_pairs: usize,
    /// Additional uniformly random pairs.
    pub random_pairs: usize,
    pub seed: u64,
}

impl Default for PairSampling {
    fn default() -> Self {
        Self {
            max_grid_pairs: 10_000,
            random_pairs: 10_000,
            seed: 0,
        }
    }
}

impl PairSampling {
    /// Points per axis of the grid stage for a domain of dimension `dim`.
    pub fn grid_per_axis(&self, dim: usize) -> usize {
        let mut k = 2usize;
        loop {
            let pts = (k + 1).pow(dim as u32);
            if pts * (pts - 1) / 2 > self.max_grid_pairs {
                return k;
            }
            k += 1;
        }
    }
}

/// Result of `estimate_intrinsic_lipschitz`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate {
    /// Sup of |phi(b) - phi(a)| / quasi-distance over the sample; a lower bound for C_L.
    pub constant: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
    pub argmax: Option<(Vec<f64>, Vec<f64>)>,
}

pub fn estimate_intrinsic_lipschitz(
    g: &Group,
    phi: &GraphFunction,
    sampling: &PairSampling,
) -> Result<LipschitzEstimate> {
    let dim = phi.dim();
    check_base(g, phi, &vec![0.0; dim])?;
    let k = sampling.grid_per_axis(dim);
    let nodes = phi.domain().node_grid(&vec![k; dim]);
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            pairs.push((nodes[i].clone(), nodes[j].clone()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    for _ in 0..sampling.random_pairs {
        let a = phi.domain().sample(&mut rng);
        let b = phi.domain().sample(&mut rng);
        pairs.push((a, b));
    }
    lipschitz_over_pairs(g, phi, &pairs)
}

/// Sup of the Lipschitz ratio over explicit pairs (both orders are tried).
pub fn lipschitz_over_pairs(
    g: &Group,
    phi: &GraphFunction,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<LipschitzEstimate> {
    let results: Vec<Option<(f64, usize)>> = pairs
        .par_iter()
        .enumerate()
        .map(|(idx, (a, b))| {
            let fa = phi.value(a);
            let fb = phi.value(b);
            let mut best: Option<f64> = None;
            for (p, q, fp) in [(a, b, fa), (b, a, fb)] {
                let d = g.norm(&conjugated_increment(g, fp, p, q));
                if d >= 1e-14 {
                    let r = (fb - fa).abs() / d;
                    best = Some(best.map_or(r, |v: f64| v.max(r)));
                }
            }
            best.map(|r| (r, idx))
        })
        .collect();
    let used = results.iter().flatten().count();
    if used == 0 {
        return Err(Error::DegenerateSample);
    }
    let (constant, idx) = results
        .iter()
        .flatten()
        .fold((f64::NEG_INFINITY, 0), |acc, &(r, i)| if r > acc.0 { (r, i) } else { acc });
    Ok(LipschitzEstimate {
        constant,
        pairs_used: used,
        pairs_skipped: pairs.len() - used,
        argmax: Some(pairs[idx].clone()),
    })
}

/// Sup of |phi(x, y') - phi(x, y)| / |y' - y|^(1/2) over grid pairs with 0 < |y' - y| < r, for each r.
///
/// `shape` gives nodes per axis of a grid over the domain; `None` marks radii with no pairs.
pub fn vertical_holder_modulus(
    phi: &GraphFunction,
    n: usize,
    r_list: &[f64],
    shape: &[usize],
) -> Vec<Option<f64>> {
    let dim = phi.dim();
    let hcount = dim - n;
    let axes: Vec<Vec<f64>> = shape
        .iter()
        .zip(phi.domain().lo.iter().zip(&phi.domain().hi))
        .map(|(&k, (&l, &h))| linspace(l, h, k))
        .collect();
    let xs = cartesian(&axes[..hcount]);
    let ys = cartesian(&axes[hcount..]);
    let r_max = r_list.iter().copied().fold(0.0, f64::max);
    let per_x: Vec<Vec<Option<f64>>> = xs
        .par_iter()
        .map(|x| {
            let vals: Vec<f64> = ys
                .iter()
                .map(|y| {
                    let a: Vec<f64> = x.iter().chain(y).copied().collect();
                    phi.value(&a)
                })
                .collect();
            let mut best = vec![None; r_list.len()];
            for i in 0..ys.len() {
                for j in i + 1..ys.len() {
                    let dy: Vec<f64> = ys[i].iter().zip(&ys[j]).map(|(a, b)| a - b).collect();
                    let dist = euclid(&dy);
                    if dist <= 0.0 || dist >= r_max {
                        continue;
                    }
                    let ratio = (vals[i] - vals[j]).abs() / dist.sqrt();
                    for (slot, &r) in best.iter_mut().zip(r_list) {
                        if dist < r {
                            *slot = Some(slot.map_or(ratio, |v: f64| v.max(ratio)));
                        }
                    }
                }
            }
            best
        })
        .collect();
    (0..r_list.len())
        .map(|k| {
            per_x
                .iter()
                .filter_map(|b| b[k])
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        })
        .collect()
}
