//! Step-2 Carnot groups on R^{m+n}.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Singular values below this (relative to the largest) count as rank loss.
pub const INDEPENDENCE_TOL: f64 = 1e-10;

/// A point `(x, y)` with horizontal layer `x` (length m) and vertical layer `y` (length n).
#[derive(Debug, Clone, PartialEq)]
pub struct Point<T = f64> {
    pub x: Vec<T>,
    pub y: Vec<T>,
}

impl<T: Float> Point<T> {
    pub fn new(x: Vec<T>, y: Vec<T>) -> Self {
        Self { x, y }
    }

    pub fn zero(m: usize, n: usize) -> Self {
        Self {
            x: vec![T::zero(); m],
            y: vec![T::zero(); n],
        }
    }

    /// Splits a flat coordinate slice `(x_1..x_m, y_1..y_n)`.
    pub fn from_coords(coords: &[T], m: usize) -> Self {
        Self {
            x: coords[..m].to_vec(),
            y: coords[m..].to_vec(),
        }
    }

    pub fn coords(&self) -> Vec<T> {
        self.x.iter().chain(self.y.iter()).copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }

    /// `(t, 0, ..., 0)`, the element of the horizontal line V.
    pub fn on_v(t: T, m: usize, n: usize) -> Self {
        let mut p = Self::zero(m, n);
        p.x[0] = t;
        p
    }
}

/// Euclidean length of a slice.
pub fn euclid<T: Float>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &a| acc + a * a).sqrt()
}

/// Step-2 Carnot group data: dimensions, structure matrices and norm parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStructure<T = f64> {
    m: usize,
    n: usize,
    /// n row-major m x m matrices, concatenated.
    b: Vec<T>,
    epsilon: T,
}

/// The f64 group used by every downstream module.
pub type Group = GroupStructure<f64>;
pub type GroupF32 = GroupStructure<f32>;

/// Built-in group families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StandardGroup {
    /// H^k: m = 2k, n = 1.
    Heisenberg(usize),
    /// Free step-2 group on m generators.
    FreeStep2(usize),
    /// H-type group built from quaternion left multiplications; id in 1..=3 is n.
    HType(usize),
}

impl fmt::Display for StandardGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StandardGroup::Heisenberg(k) => write!(f, "heisenberg({k})"),
            StandardGroup::FreeStep2(m) => write!(f, "free_step2({m})"),
            StandardGroup::HType(id) => write!(f, "h_type({id})"),
        }
    }
}

impl FromStr for StandardGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownName(s.to_string());
        let s_trim = s.trim();
        let open = s_trim.find('(').ok_or_else(unknown)?;
        if !s_trim.ends_with(')') {
            return Err(unknown());
        }
        let name = &s_trim[..open];
        let arg: usize = s_trim[open + 1..s_trim.len() - 1]
            .trim()
            .parse()
            .map_err(|_| unknown())?;
        match name {
            "heisenberg" if arg >= 1 => Ok(StandardGroup::Heisenberg(arg)),
            "free_step2" if arg >= 2 => Ok(StandardGroup::FreeStep2(arg)),
            "h_type" if (1..=3).contains(&arg) => Ok(StandardGroup::HType(arg)),
            _ => Err(unknown()),
        }
    }
}

// Left multiplication by i, j, k on quaternions (a, b, c, d).
const QUATERNION_UNITS: [[f64; 16]; 3] = [
    [
        0., -1., 0., 0., //
        1., 0., 0., 0., //
        0., 0., 0., -1., //
        0., 0., 1., 0.,
    ],
    [
        0., 0., -1., 0., //
        0., 0., 0., 1., //
        1., 0., 0., 0., //
        0., -1., 0., 0.,
    ],
    [
        0., 0., 0., -1., //
        0., 0., -1., 0., //
        0., 1., 0., 0., //
        1., 0., 0., 0.,
    ],
];

impl StandardGroup {
    /// Structure matrices as `(m, row-major matrices)`.
    pub fn matrices(&self) -> (usize, Vec<Vec<f64>>) {
        match *self {
            StandardGroup::Heisenberg(k) => {
                let m = 2 * k;
                let mut b = vec![0.0; m * m];
                for i in 0..k {
                    b[i * m + k + i] = 1.0;
                    b[(k + i) * m + i] = -1.0;
                }
                (m, vec![b])
            }
            StandardGroup::FreeStep2(m) => {
                let mut mats = Vec::new();
                for h in 0..m {
                    for l in h + 1..m {
                        let mut b = vec![0.0; m * m];
                        b[l * m + h] = -1.0;
                        b[h * m + l] = 1.0;
                        mats.push(b);
                    }
                }
                (m, mats)
            }
            StandardGroup::HType(n) => (4, QUATERNION_UNITS[..n].iter().map(|b| b.to_vec()).collect()),
        }
    }
}

impl<T: Float> GroupStructure<T> {
    /// Validates the data. `epsilon = None` calibrates with seed 0 and 10^4 samples.
    pub fn new(m: usize, n: usize, matrices: Vec<Vec<T>>, epsilon: Option<T>) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(format!("m = {m} must be at least 2")));
        }
        if n < 1 {
            return Err(Error::InvalidInput("n must be at least 1".into()));
        }
        let too_many = n > m * (m - 1) / 2;
        if matrices.len() != n {
            if too_many {
                return Err(Error::TooManyVerticalDirections { m, n });
            }
            return Err(Error::DimensionMismatch {
                expected: n,
                found: matrices.len(),
            });
        }
        if let Some(bad) = matrices.iter().find(|b| b.len() != m * m) {
            return Err(Error::DimensionMismatch {
                expected: m * m,
                found: bad.len(),
            });
        }
        for (s, b) in matrices.iter().enumerate() {
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("B^({}) has non-finite entries", s + 1)));
            }
            for j in 0..m {
                for l in 0..m {
                    if b[j * m + l] != -b[l * m + j] {
                        return Err(Error::NotSkewSymmetric { index: s + 1 });
                    }
                }
            }
        }
        let stacked = DMatrix::from_fn(n, m * m, |s, k| matrices[s][k].to_f64().unwrap_or(f64::NAN));
        let sv = stacked.singular_values();
        let largest = sv.max();
        let smallest = sv.min();
        if !(largest > 0.0) || smallest <= INDEPENDENCE_TOL * largest.max(1.0) {
            return Err(Error::LinearlyDependentMatrices { smallest });
        }
        // Independent skew matrices already force this; kept as a guard.
        if too_many {
            return Err(Error::TooManyVerticalDirections { m, n });
        }
        let mut g = Self {
            m,
            n,
            b: matrices.into_iter().flatten().collect(),
            epsilon: T::one(),
        };
        match epsilon {
            Some(eps) => {
                check_epsilon(eps)?;
                g.epsilon = eps;
            }
            None => g.epsilon = g.calibrate_epsilon(10_000, 0)?,
        }
        Ok(g)
    }

    /// A built-in family member with calibrated epsilon.
    pub fn standard(which: StandardGroup) -> Result<Self> {
        match which {
            StandardGroup::Heisenberg(0) | StandardGroup::FreeStep2(0 | 1) => {
                return Err(Error::UnknownName(which.to_string()))
            }
            StandardGroup::HType(id) if !(1..=3).contains(&id) => {
                return Err(Error::UnknownName(which.to_string()))
            }
            _ => {}
        }
        let (m, mats) = which.matrices();
        let n = mats.len();
        let mats = mats
            .into_iter()
            .map(|b| b.into_iter().map(|v| T::from(v).unwrap()).collect())
            .collect();
        Self::new(m, n, mats, None)
    }

    pub fn with_epsilon(&self, epsilon: T) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self {
            epsilon,
            ..self.clone()
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// Homogeneous dimension q = m + 2n.
    pub fn homogeneous_dimension(&self) -> usize {
        self.m + 2 * self.n
    }

    /// Entry b^(s)_{jl}, all indices 0-based.
    #[inline]
    pub fn b(&self, s: usize, j: usize, l: usize) -> T {
        self.b[s * self.m * self.m + j * self.m + l]
    }

    /// Row-major B^(s), 0-based s.
    pub fn matrix(&self, s: usize) -> &[T] {
        &self.b[s * self.m * self.m..(s + 1) * self.m * self.m]
    }

    /// Largest entry over all structure matrices.
    pub fn b_max(&self) -> T {
        self.b.iter().fold(T::zero(), |acc, &v| acc.max(v))
    }

    /// `<B^(s) u, v>`.
    #[inline]
    pub fn bilinear(&self, s: usize, u: &[T], v: &[T]) -> T {
        let m = self.m;
        let b = self.matrix(s);
        let mut acc = T::zero();
        for j in 0..m {
            let mut row = T::zero();
            for l in 0..m {
                row = row + b[j * m + l] * u[l];
            }
            acc = acc + row * v[j];
        }
        acc
    }

    /// `(B^(s) u)_j`.
    #[inline]
    pub fn apply_row(&self, s: usize, j: usize, u: &[T]) -> T {
        let m = self.m;
        let row = &self.b[s * m * m + j * m..s * m * m + (j + 1) * m];
        row.iter().zip(u).fold(T::zero(), |acc, (&b, &x)| acc + b * x)
    }

    fn check_point(&self, p: &Point<T>) -> Result<()> {
        if p.x.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                found: p.x.len(),
            });
        }
        if p.y.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: p.y.len(),
            });
        }
        Ok(())
    }

    /// Group product with dimension checks.
    pub fn multiply(&self, p: &Point<T>, q: &Point<T>) -> Result<Point<T>> {
        self.check_point(p)?;
        self.check_point(q)?;
        Ok(self.mul(p, q))
    }

    /// Group product; shapes must already match.
    pub fn mul(&self, p: &Point<T>, q: &Point<T>) -> Point<T> {
        debug_assert!(p.x.len() == self.m && q.x.len() == self.m);
        let half = T::from(0.5).unwrap();
        let x = p.x.iter().zip(&q.x).map(|(&a, &b)| a + b).collect();
        let y = (0..self.n)
            .map(|s| p.y[s] + q.y[s] + half * self.bilinear(s, &p.x, &q.x))
            .collect();
        Point { x, y }
    }

    pub fn inverse(&self, p: &Point<T>) -> Point<T> {
        Point {
            x: p.x.iter().map(|&v| -v).collect(),
            y: p.y.iter().map(|&v| -v).collect(),
        }
    }

    pub fn dilate(&self, lambda: T, p: &Point<T>) -> Result<Point<T>> {
        if !(lambda > T::zero()) {
            return Err(Error::NonPositiveLambda(lambda.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Point {
            x: p.x.iter().map(|&v| lambda * v).collect(),
            y: p.y.iter().map(|&v| lambda * lambda * v).collect(),
        })
    }

    /// `max{|x|, eps |y|^(1/2)}`.
    pub fn norm(&self, p: &Point<T>) -> T {
        euclid(&p.x).max(self.epsilon * euclid(&p.y).sqrt())
    }

    /// `||p^{-1} q||`.
    pub fn distance(&self, p: &Point<T>, q: &Point<T>) -> T {
        self.norm(&self.mul(&self.inverse(p), q))
    }

    /// Sharp constant c1 with c1^{-1}(|x| + |y|^(1/2)) <= ||p|| <= c1(|x| + |y|^(1/2)).
    pub fn norm_equivalence_c1(&self) -> T {
        T::one() + T::one() / self.epsilon
    }

    /// Rows are X_1..X_m, Y_1..Y_n expressed in the coordinate basis at p.
    pub fn frame(&self, p: &Point<T>) -> Vec<Vec<T>> {
        let (m, n) = (self.m, self.n);
        let half = T::from(0.5).unwrap();
        let mut rows = vec![vec![T::zero(); m + n]; m + n];
        for j in 0..m {
            rows[j][j] = T::one();
            for s in 0..n {
                rows[j][m + s] = half * self.apply_row(s, j, &p.x);
            }
        }
        for s in 0..n {
            rows[m + s][m + s] = T::one();
        }
        rows
    }

    /// Number of sampled pairs violating `||pq|| <= ||p|| + ||q||` in the unit ball.
    pub fn triangle_violations(&self, sample_count: usize, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps2 = self.epsilon * self.epsilon;
        let slack = T::from(1e-12).unwrap();
        (0..sample_count)
            .filter(|_| {
                let p = unit_ball_point(&mut rng, self.m, self.n, eps2);
                let q = unit_ball_point(&mut rng, self.m, self.n, eps2);
                let lhs = self.norm(&self.mul(&p, &q));
                let rhs = self.norm(&p) + self.norm(&q);
                lhs > rhs * (T::one() + slack)
            })
            .count()
    }

    /// Largest eps in {j/64} whose sampled triangle inequality holds.
    pub fn calibrate_epsilon(&self, sample_count: usize, seed: u64) -> Result<T> {
        if sample_count == 0 {
            return Err(Error::InvalidInput("sample_count must be positive".into()));
        }
        for j in (1..=64).rev() {
            let eps = T::from(j as f64 / 64.0).unwrap();
            let trial = Self {
                epsilon: eps,
                ..self.clone()
            };
            if trial.triangle_violations(sample_count, seed) == 0 {
                return Ok(eps);
            }
        }
        Err(Error::CalibrationFailed)
    }
}

fn check_epsilon<T: Float>(eps: T) -> Result<()> {
    if eps > T::zero() && eps <= T::one() {
        Ok(())
    } else {
        Err(Error::EpsilonOutOfRange(eps.to_f64().unwrap_or(f64::NAN)))
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = euclid(&v);
        if r > 1e-3 && r <= 1.0 {
            return v.into_iter().map(|a| a / r).collect();
        }
    }
}

/// Point with |x| <= 1 and eps |y|^(1/2) <= 1; layer radii uniform.
fn unit_ball_point<T: Float>(rng: &mut ChaCha8Rng, m: usize, n: usize, eps2: T) -> Point<T> {
    let rx: f64 = rng.gen_range(0.0..=1.0);
    let ry: f64 = rng.gen_range(0.0..=1.0);
    let dx = unit_direction(rng, m);
    let dy = unit_direction(rng, n);
    Point {
        x: dx.iter().map(|&d| T::from(d * rx).unwrap()).collect(),
        y: dy.iter().map(|&d| T::from(d * ry).unwrap() / eps2).collect(),
    }
}

/// A random point with coordinates uniform in `[-scale, scale]`.
pub fn random_point(rng: &mut impl Rng, m: usize, n: usize, scale: f64) -> Point<f64> {
    Point {
        x: (0..m).map(|_| rng.gen_range(-scale..=scale)).collect(),
        y: (0..n).map(|_| rng.gen_range(-scale..=scale)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h1() -> GroupStructure<f64> {
        GroupStructure::new(2, 1, vec![vec![0., 1., -1., 0.]], Some(1.0)).unwrap()
    }

    #[test]
    fn rejects_bad_data() {
        let sym = GroupStructure::new(2, 1, vec![vec![0., 1., 1., 0.]], Some(1.0));
        assert!(matches!(sym, Err(Error::NotSkewSymmetric { index: 1 })));
        let dep = GroupStructure::new(2, 2, vec![vec![0., 1., -1., 0.], vec![0., 2., -2., 0.]], Some(1.0));
        assert!(matches!(dep, Err(Error::LinearlyDependentMatrices { .. })));
        let short = GroupStructure::new(2, 2, vec![vec![0., 1., -1., 0.]], Some(1.0));
        assert!(matches!(short, Err(Error::TooManyVerticalDirections { .. })));
        let dep3 = GroupStructure::new(
            3,
            2,
            vec![
                vec![0., 1., 0., -1., 0., 0., 0., 0., 0.],
                vec![0., -2., 0., 2., 0., 0., 0., 0., 0.],
            ],
            Some(1.0),
        );
        assert!(matches!(dep3, Err(Error::LinearlyDependentMatrices { .. })));
        let eps = GroupStructure::new(2, 1, vec![vec![0., 1., -1., 0.]], Some(1.5));
        assert!(matches!(eps, Err(Error::EpsilonOutOfRange(_))));
    }

    #[test]
    fn product_examples() {
        let g = h1();
        let p = Point::new(vec![1., 0.], vec![0.]);
        let q = Point::new(vec![0., 1.], vec![0.]);
        assert_eq!(g.mul(&p, &q), Point::new(vec![1., 1.], vec![-0.5]));
        let bad = Point::new(vec![0.], vec![0.]);
        assert!(matches!(g.multiply(&p, &bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn frame_in_h1() {
        let g = h1();
        let f = g.frame(&Point::new(vec![3., 5.], vec![7.]));
        assert_eq!(f[0], vec![1., 0., 2.5]);
        assert_eq!(f[1], vec![0., 1., -1.5]);
        assert_eq!(f[2], vec![0., 0., 1.]);
    }

    #[test]
    fn names_parse() {
        assert_eq!("heisenberg(2)".parse::<StandardGroup>().unwrap(), StandardGroup::Heisenberg(2));
        assert!(matches!("spin(3)".parse::<StandardGroup>(), Err(Error::UnknownName(_))));
        assert!(matches!("h_type(7)".parse::<StandardGroup>(), Err(Error::UnknownName(_))));
    }

    #[test]
    fn generic_f32_group() {
        let g = GroupStructure::<f32>::standard(StandardGroup::Heisenberg(1)).unwrap();
        let p = Point::new(vec![1.0f32, 2.0], vec![3.0]);
        let e = g.mul(&p, &g.inverse(&p));
        assert!(e.coords().iter().all(|v| *v == 0.0));
    }
}
