//! Uniform tensor-product midpoint grids and 1-D Simpson sums.

use rayon::prelude::*;

use crate::graph::DomainBox;

/// Midpoint rule on a uniform tensor grid over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub domain: DomainBox,
    pub per_axis: Vec<usize>,
}

impl QuadratureGrid {
    pub fn new(domain: DomainBox, per_axis: Vec<usize>) -> Self {
        assert_eq!(domain.dim(), per_axis.len());
        assert!(per_axis.iter().all(|&k| k > 0));
        Self { domain, per_axis }
    }

    pub fn uniform(domain: DomainBox, k: usize) -> Self {
        let d = domain.dim();
        Self::new(domain, vec![k; d])
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.per_axis
            .iter()
            .zip(self.domain.lo.iter().zip(&self.domain.hi))
            .map(|(&k, (&l, &h))| (h - l) / k as f64)
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn len(&self) -> usize {
        self.per_axis.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Midpoint of cell number `idx` (last axis fastest).
    pub fn point(&self, mut idx: usize) -> Vec<f64> {
        let h = self.spacing();
        let d = self.per_axis.len();
        let mut pt = vec![0.0; d];
        for k in (0..d).rev() {
            let i = idx % self.per_axis[k];
            idx /= self.per_axis[k];
            pt[k] = self.domain.lo[k] + (i as f64 + 0.5) * h[k];
        }
        pt
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Midpoint sum of `f`; rows are summed in parallel, then in order, so the result is reproducible.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
        let row = *self.per_axis.last().unwrap();
        let rows = self.len() / row;
        let partial: Vec<f64> = (0..rows)
            .into_par_iter()
            .map(|r| (0..row).map(|i| f(&self.point(r * row + i))).sum())
            .collect();
        partial.iter().sum::<f64>() * self.cell_volume()
    }

    /// Like `integrate` for a vector-valued integrand of length `len`.
    pub fn integrate_vec(&self, len: usize, f: impl Fn(&[f64]) -> Vec<f64> + Sync) -> Vec<f64> {
        let row = *self.per_axis.last().unwrap();
        let rows = self.len() / row;
        let partial: Vec<Vec<f64>> = (0..rows)
            .into_par_iter()
            .map(|r| {
                let mut acc = vec![0.0; len];
                for i in 0..row {
                    for (a, v) in acc.iter_mut().zip(f(&self.point(r * row + i))) {
                        *a += v;
                    }
                }
                acc
            })
            .collect();
        let vol = self.cell_volume();
        let mut total = vec![0.0; len];
        for p in partial {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        total.into_iter().map(|v| v * vol).collect()
    }
}

/// `F[i] ~ int_{t_0}^{t_i} f` for uniform samples with spacing `h` (fourth order).
pub fn cumulative_simpson(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (f[0] + f[1]);
        return out;
    }
    for i in 1..n {
        out[i] = if i % 2 == 0 {
            out[i - 2] + h / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i])
        } else if i == 1 {
            h / 12.0 * (5.0 * f[0] + 8.0 * f[1] - f[2])
        } else {
            // Simpson up to i-3, then the 3/8 rule on the last three intervals.
            out[i - 3] + 3.0 * h / 8.0 * (f[i - 3] + 3.0 * f[i - 2] + 3.0 * f[i - 1] + f[i])
        };
    }
    out
}

/// Observed convergence order from three successive halvings: log2(|e1 - e2| / |e2 - e3|).
pub fn richardson_order(coarse: f64, mid: f64, fine: f64) -> f64 {
    ((coarse - mid).abs() / (mid - fine).abs()).log2()
}
