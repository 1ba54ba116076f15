//! Scalar final-value problems `x' = F(t, x)` on `[a, b]`, `x(b) = x_b`,
//! solved by monotone iteration inside a band.
//!
//! With `M(t)` an upper one-sided slope of `F` over the band, `G = F - M x`
//! is nonincreasing in `x` and each sweep integrates the linear problem
//! `x' = M x + G(t, x_old)` backward from `b` with the trapezoid rule.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremal {
    Least,
    Greatest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FvpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FvpOptions {
    fn default() -> Self {
        FvpOptions { tol: 1e-8, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FvpSolution {
    /// Values at the nodes of `[a, b]`.
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub change: f64,
}

/// `rhs(i, x)` is `F(t_i, x)` at node `i` of `[a, b]`.
pub struct ScalarFvp<'a, F> {
    pub grid: &'a Arc<Grid>,
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub final_value: f64,
    pub rhs: F,
    /// When false the slope estimate is skipped (`M = 0`).
    pub x_dependent: bool,
}

const SLOPE_SAMPLES: usize = 16;

impl<'a, F> ScalarFvp<'a, F>
where
    F: Fn(usize, f64) -> Result<f64> + Sync,
{
    pub fn new(grid: &'a Arc<Grid>, lower: &'a [f64], upper: &'a [f64], final_value: f64, rhs: F) -> Result<Self> {
        let n = grid.n_sub();
        if lower.len() < n + 1 || upper.len() < n + 1 {
            return Err(Error::GridMismatch);
        }
        if let Some(i) = (0..=n).find(|&i| lower[i] > upper[i] + crate::grid::ORDER_TOL) {
            return Err(Error::NotOrdered { t: grid.node(i), lower: lower[i], upper: upper[i] });
        }
        Ok(ScalarFvp { grid, lower, upper, final_value, rhs, x_dependent: true })
    }

    pub fn independent_of_x(mut self) -> Self {
        self.x_dependent = false;
        self
    }

    fn n(&self) -> usize {
        self.grid.n_sub()
    }

    /// Per-node slopes `M_i` with `F(x') - F(x) <= M_i (x' - x)` on sampled
    /// points of the band, refined once at the midpoints.
    pub fn slopes(&self) -> Result<Vec<f64>> {
        if !self.x_dependent {
            return Ok(vec![0.0; self.n() + 1]);
        }
        let h = self.grid.spacing();
        (0..=self.n())
            .into_par_iter()
            .map(|i| {
                let (lo, hi) = (self.lower[i], self.upper[i]);
                if hi <= lo {
                    return Ok(0.0);
                }
                let m = 2 * SLOPE_SAMPLES;
                let xs: Vec<f64> = (0..=m).map(|k| lo + (hi - lo) * k as f64 / m as f64).collect();
                let fs = xs.iter().map(|&x| (self.rhs)(i, x)).collect::<Result<Vec<_>>>()?;
                let coarse = (0..SLOPE_SAMPLES)
                    .map(|k| (fs[2 * k + 2] - fs[2 * k]) / (xs[2 * k + 2] - xs[2 * k]))
                    .fold(f64::NEG_INFINITY, f64::max);
                let fine = (0..m).map(|k| (fs[k + 1] - fs[k]) / (xs[k + 1] - xs[k])).fold(f64::NEG_INFINITY, f64::max);
                let slope = coarse.max(fine);
                if !slope.is_finite() {
                    return Err(Error::NotMonotone { t: self.grid.node(i), detail: "slope is not finite".into() });
                }
                if slope.abs() * h >= 2.0 {
                    return Err(Error::NotMonotone {
                        t: self.grid.node(i),
                        detail: format!("one-sided slope {slope} too large for step {h}"),
                    });
                }
                Ok(slope)
            })
            .collect()
    }

    fn eval_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        (0..=self.n()).into_par_iter().map(|i| (self.rhs)(i, x[i])).collect()
    }

    /// `max_i |(x_{i+1} - x_i)/h - (F_i + F_{i+1})/2|` and `|x_N - x_b|`.
    pub fn residual(&self, x: &[f64]) -> Result<f64> {
        if x.len() < self.n() + 1 {
            return Err(Error::GridMismatch);
        }
        let f = self.eval_all(x)?;
        let h = self.grid.spacing();
        let inner = (0..self.n())
            .map(|i| ((x[i + 1] - x[i]) / h - 0.5 * (f[i] + f[i + 1])).abs())
            .fold(0.0, f64::max);
        Ok(inner.max((x[self.n()] - self.final_value).abs()))
    }

    fn sweep(&self, m: &[f64], x_old: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let h = self.grid.spacing();
        let f = self.eval_all(x_old)?;
        let g: Vec<f64> = (0..=n).map(|i| f[i] - m[i] * x_old[i]).collect();
        let mut x = vec![0.0; n + 1];
        x[n] = self.final_value;
        for i in (0..n).rev() {
            x[i] = (x[i + 1] * (1.0 - 0.5 * h * m[i + 1]) - 0.5 * h * (g[i] + g[i + 1])) / (1.0 + 0.5 * h * m[i]);
        }
        Ok(x)
    }

    fn clamp(&self, x: &mut [f64], tol: f64) -> Result<()> {
        for (i, v) in x.iter_mut().enumerate() {
            let excess = (self.lower[i] - *v).max(*v - self.upper[i]);
            if excess > tol + 1e-10 {
                return Err(Error::BandEscape { t: self.grid.node(i), excess });
            }
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
        Ok(())
    }

    /// Least (from the lower edge) or greatest (from the upper edge) solution in the band.
    pub fn solve_extremal(&self, which: Extremal, opts: FvpOptions) -> Result<FvpSolution> {
        let n = self.n();
        let m = self.slopes()?;
        let mut x: Vec<f64> = match which {
            Extremal::Least => self.lower[..=n].to_vec(),
            Extremal::Greatest => self.upper[..=n].to_vec(),
        };
        let mut change = f64::INFINITY;
        for it in 1..=opts.max_iter {
            let mut next = self.sweep(&m, &x)?;
            self.clamp(&mut next, opts.tol)?;
            change = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            x = next;
            if change < opts.tol / 10.0 {
                let residual = self.residual(&x)?;
                if residual < opts.tol {
                    return Ok(FvpSolution { values: x, iterations: it, residual, change });
                }
            }
        }
        Err(Error::NonConvergence { iterations: opts.max_iter, change })
    }
}
