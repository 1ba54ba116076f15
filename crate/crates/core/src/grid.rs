//! Sampled functions on a uniform grid over `[a, b + r]`.
//!
//! The grid always contains `b` as a node; `[a, b]` is split into `n_sub`
//! equal cells and the tail `[b, b + r]` uses the same spacing (the last tail
//! cell is shortened when `r` is not a multiple of the spacing).

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Env, Expr};

/// Order comparisons accept this much rounding.
pub const ORDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    r: f64,
    n_sub: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl Grid {
    pub fn new(a: f64, b: f64, r: f64, n_sub: usize) -> Result<Arc<Grid>> {
        let bad = |m: &str| Error::InvalidField { field: "grid".into(), message: m.into() };
        if !(a.is_finite() && b.is_finite() && r.is_finite()) {
            return Err(bad("interval endpoints must be finite"));
        }
        if a >= b {
            return Err(bad("need a < b"));
        }
        if r < 0.0 {
            return Err(bad("need r >= 0"));
        }
        if n_sub == 0 {
            return Err(bad("need at least one subinterval"));
        }
        let h = (b - a) / n_sub as f64;
        let mut nodes: Vec<f64> = (0..=n_sub).map(|i| a + h * i as f64).collect();
        nodes[n_sub] = b;
        if r > 0.0 {
            let m = ((r / h) - 1e-9).ceil().max(1.0) as usize;
            for j in 1..=m {
                nodes.push((b + h * j as f64).min(b + r));
            }
            *nodes.last_mut().expect("tail node") = b + r;
        }
        Ok(Arc::new(Grid { a, b, r, n_sub, h, nodes }))
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn end(&self) -> f64 {
        self.b + self.r
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Number of cells on `[a, b]`; also the node index of `b`.
    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn b_index(&self) -> usize {
        self.n_sub
    }

    /// Nodes of `[b, b + r]`, including `b`.
    pub fn tail_range(&self) -> std::ops::Range<usize> {
        self.n_sub..self.nodes.len()
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other)
            || (self.a == other.a && self.b == other.b && self.r == other.r && self.n_sub == other.n_sub)
    }

    /// Cell index `i` and weight `w` with `t = (1-w) t_i + w t_{i+1}`.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let lo = self.a;
        let hi = self.end();
        let slack = ORDER_TOL * (1.0 + lo.abs().max(hi.abs()));
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(Error::Domain { value: t, lo, hi });
        }
        let t = t.clamp(lo, hi);
        if self.nodes.len() == 1 {
            return Ok((0, 0.0));
        }
        let last = self.nodes.len() - 2;
        let mut i = (((t - self.a) / self.h).floor().max(0.0) as usize).min(last);
        while i > 0 && self.nodes[i] > t {
            i -= 1;
        }
        while i < last && self.nodes[i + 1] <= t {
            i += 1;
        }
        let (t0, t1) = (self.nodes[i], self.nodes[i + 1]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        Ok((i, w))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Eval(format!("non-finite value at t = {}", grid.node(i))));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&t| f(t)).collect();
        Self::from_values(grid, values)
    }

    pub fn try_from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        let values = grid.nodes().iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
        Self::from_values(grid, values)
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Result<Self> {
        let n = grid.len();
        Self::from_values(grid, vec![c; n])
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Linear interpolation; exact at nodes.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let (i, w) = self.grid.locate(t)?;
        if w == 0.0 {
            return Ok(self.values[i]);
        }
        if w == 1.0 {
            return Ok(self.values[i + 1]);
        }
        Ok((1.0 - w) * self.values[i] + w * self.values[i + 1])
    }

    fn check_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        let values = self.grid.nodes().iter().zip(&self.values).map(|(&t, &v)| f(t, v)).collect();
        GridFunction::from_values(self.grid.clone(), values)
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        GridFunction::from_values(self.grid.clone(), values)
    }

    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        self.check_grid(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// Nodewise `self <= other` up to [`ORDER_TOL`].
    pub fn leq(&self, other: &GridFunction) -> Result<bool> {
        self.check_grid(other)?;
        Ok(self.values.iter().zip(&other.values).all(|(a, b)| *a <= *b + ORDER_TOL))
    }

    /// `t -> self(tau(t))` on `[a, b]`; tail nodes are copied unchanged.
    pub fn compose_advance(&self, tau: &AdvanceMap) -> Result<GridFunction> {
        let taus = tau.sample(&self.grid)?;
        self.compose_sampled(&taus)
    }

    /// Composition with advance values already sampled at the nodes of `[a, b]`.
    pub fn compose_sampled(&self, taus: &[f64]) -> Result<GridFunction> {
        let n = self.grid.n_sub();
        if taus.len() != n + 1 {
            return Err(Error::GridMismatch);
        }
        let mut values = self.values.clone();
        for (i, &s) in taus.iter().enumerate() {
            values[i] = self.eval(s)?;
        }
        GridFunction::from_values(self.grid.clone(), values)
    }

    pub fn clamp_to_band(&self, band: &Band) -> Result<GridFunction> {
        self.check_grid(&band.lower)?;
        let values = self
            .values
            .iter()
            .zip(band.lower.values.iter().zip(&band.upper.values))
            .map(|(&x, (&lo, &hi))| x.max(lo).min(hi))
            .collect();
        GridFunction::from_values(self.grid.clone(), values)
    }

    /// Composite trapezoid integral over `[a, b]`.
    pub fn integral_ab(&self) -> f64 {
        trapezoid(&self.values[..=self.grid.n_sub()], self.grid.spacing())
    }

    /// `I[i] = integral from t_i to b`, trapezoid, for nodes of `[a, b]`.
    pub fn integral_to_b(&self) -> Vec<f64> {
        cumulative_to_end(&self.values[..=self.grid.n_sub()], self.grid.spacing())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Writes `t,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_columns(out, &["t", "value"], &[self])
    }
}

/// Writes a `t` column followed by one column per function.
pub fn write_columns<W: Write>(out: W, headers: &[&str], cols: &[&GridFunction]) -> Result<()> {
    let Some(first) = cols.first() else {
        return Ok(());
    };
    if cols.iter().any(|c| !c.grid.same_as(&first.grid)) {
        return Err(Error::GridMismatch);
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(headers)?;
    for (i, t) in first.grid.nodes().iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(cols.iter().map(|c| c.values[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    h * (0.5 * (values[0] + values[values.len() - 1]) + inner)
}

/// `out[i] = trapezoid integral of values[i..]`.
pub fn cumulative_to_end(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    for i in (0..n.saturating_sub(1)).rev() {
        out[i] = out[i + 1] + 0.5 * h * (values[i] + values[i + 1]);
    }
    out
}

/// The functional interval `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    lower: GridFunction,
    upper: GridFunction,
}

impl Band {
    pub fn new(lower: GridFunction, upper: GridFunction) -> Result<Self> {
        lower.check_grid(&upper)?;
        for (i, (&lo, &hi)) in lower.values.iter().zip(&upper.values).enumerate() {
            if lo > hi + ORDER_TOL {
                return Err(Error::NotOrdered { t: lower.grid.node(i), lower: lo, upper: hi });
            }
        }
        Ok(Band { lower, upper })
    }

    pub fn lower(&self) -> &GridFunction {
        &self.lower
    }

    pub fn upper(&self) -> &GridFunction {
        &self.upper
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.lower.grid()
    }

    /// Largest amount by which `x` leaves the band, with the node.
    pub fn excess(&self, x: &GridFunction) -> Result<(f64, usize)> {
        x.check_grid(&self.lower)?;
        let mut worst = (0.0, 0);
        for i in 0..x.values.len() {
            let e = (self.lower.values[i] - x.values[i]).max(x.values[i] - self.upper.values[i]);
            if e > worst.0 {
                worst = (e, i);
            }
        }
        Ok(worst)
    }
}

/// An advanced argument `tau(t) >= t` mapping `[a, b]` into `[a, b + r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvanceMap {
    expr: Expr,
}

impl AdvanceMap {
    pub fn new(expr: Expr) -> Self {
        AdvanceMap { expr }
    }

    pub fn parse(src: &str) -> Result<Self> {
        Ok(Self::new(Expr::parse(src)?))
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.expr.eval(&Env::at_t(t))
    }

    /// `tau` at the nodes of `[a, b]`, validated and clamped into `[a, b + r]`.
    pub fn sample(&self, grid: &Grid) -> Result<Vec<f64>> {
        (0..=grid.n_sub())
            .map(|i| {
                let t = grid.node(i);
                self.checked(t, grid)
            })
            .collect()
    }

    /// `tau(t)` for one point of `[a, b]`, validated against `grid`'s domain.
    pub fn checked(&self, t: f64, grid: &Grid) -> Result<f64> {
        let v = self.eval(t);
        let slack = ORDER_TOL * (1.0 + grid.end().abs());
        if !v.is_finite() || v < t - ORDER_TOL || v < grid.a() - slack || v > grid.end() + slack {
            return Err(Error::AdvanceOutOfRange { t, value: v });
        }
        Ok(v.clamp(grid.a(), grid.end()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn unit_grid(n: usize) -> Arc<Grid> {
        Grid::new(0.0, 1.0, 0.0, n).unwrap()
    }

    #[test]
    fn grid_contains_b_and_tail() {
        let g = Grid::new(0.0, std::f64::consts::PI / 8.0, 3.0 * std::f64::consts::PI / 8.0, 64).unwrap();
        assert_eq!(g.node(g.b_index()), std::f64::consts::PI / 8.0);
        assert_eq!(g.len(), 64 * 4 + 1);
        assert_eq!(*g.nodes().last().unwrap(), std::f64::consts::PI / 8.0 + 3.0 * std::f64::consts::PI / 8.0);
        let g = Grid::new(0.0, 1.0, 0.25, 8).unwrap();
        assert_eq!(g.len(), 8 + 1 + 2);
        let g = Grid::new(0.0, 1.0, 0.3, 4).unwrap();
        assert_eq!(*g.nodes().last().unwrap(), 1.3);
        assert!(Grid::new(1.0, 0.0, 0.0, 4).is_err());
        assert!(Grid::new(0.0, 1.0, -1.0, 4).is_err());
    }

    #[test]
    fn sup_distance_examples() {
        let g = unit_grid(10);
        let x = GridFunction::from_fn(g.clone(), |t| t).unwrap();
        let y = GridFunction::from_fn(g.clone(), |t| -t).unwrap();
        assert_eq!(x.sup_distance(&x).unwrap(), 0.0);
        assert_eq!(x.sup_distance(&y).unwrap(), 2.0);
        let one = GridFunction::constant(g.clone(), 1.0).unwrap();
        let zero = GridFunction::constant(g, 0.0).unwrap();
        assert_eq!(one.sup_distance(&zero).unwrap(), 1.0);
        let other = GridFunction::constant(unit_grid(11), 0.0).unwrap();
        assert_eq!(one.sup_distance(&other), Err(Error::GridMismatch));
    }

    #[test]
    fn order_examples() {
        let g = Grid::new(0.0, std::f64::consts::PI / 8.0, 3.0 * std::f64::consts::PI / 8.0, 128).unwrap();
        let alpha = GridFunction::from_fn(g.clone(), |t| t - FRAC_PI_2).unwrap();
        let beta = GridFunction::from_fn(g.clone(), |t| FRAC_PI_2 - t).unwrap();
        assert!(alpha.leq(&alpha).unwrap());
        assert!(alpha.leq(&beta).unwrap());
        let one = GridFunction::constant(g.clone(), 1.0).unwrap();
        let zero = GridFunction::constant(g, 0.0).unwrap();
        assert!(!one.leq(&zero).unwrap());
    }

    #[test]
    fn compose_examples() {
        let g = Grid::new(0.0, std::f64::consts::PI / 8.0, 3.0 * std::f64::consts::PI / 8.0, 256).unwrap();
        let x = GridFunction::from_fn(g.clone(), |t| t).unwrap();
        let id = x.compose_advance(&AdvanceMap::parse("t").unwrap()).unwrap();
        assert_eq!(id, x);
        let four = x.compose_advance(&AdvanceMap::parse("4*t").unwrap()).unwrap();
        for i in 0..=g.n_sub() {
            assert!((four.value(i) - 4.0 * g.node(i)).abs() < 1e-14);
        }
        for i in g.tail_range().skip(1) {
            assert_eq!(four.value(i), x.value(i));
        }
        let c = GridFunction::from_fn(g.clone(), |t| (t * 3.0).sin()).unwrap();
        let at_b = c.compose_advance(&AdvanceMap::parse("pi/8").unwrap()).unwrap();
        for i in 0..=g.n_sub() {
            assert_eq!(at_b.value(i), c.value(g.b_index()));
        }
        let bad = x.compose_advance(&AdvanceMap::parse("t - 1").unwrap());
        assert!(matches!(bad, Err(Error::AdvanceOutOfRange { .. })));
        let far = x.compose_advance(&AdvanceMap::parse("t + 10").unwrap());
        assert!(matches!(far, Err(Error::AdvanceOutOfRange { .. })));
    }

    #[test]
    fn clamp_examples() {
        let g = unit_grid(8);
        let lo = GridFunction::constant(g.clone(), -1.0).unwrap();
        let hi = GridFunction::constant(g.clone(), 1.0).unwrap();
        let band = Band::new(lo.clone(), hi.clone()).unwrap();
        let inside = GridFunction::from_fn(g.clone(), |t| t - 0.5).unwrap();
        assert_eq!(inside.clamp_to_band(&band).unwrap(), inside);
        let big = GridFunction::constant(g.clone(), 1e300).unwrap();
        assert_eq!(big.clamp_to_band(&band).unwrap(), hi);
        let below = lo.map(|_, v| v - 1.0).unwrap();
        assert_eq!(below.clamp_to_band(&band).unwrap(), lo);
        assert!(matches!(Band::new(hi, lo), Err(Error::NotOrdered { .. })));
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let g = unit_grid(4);
        let x = GridFunction::from_fn(g, |t| 2.0 * t).unwrap();
        let mut buf = Vec::new();
        x.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,value");
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[5], "1,2");
    }

    #[test]
    fn trapezoid_helpers() {
        let g = unit_grid(100);
        let x = GridFunction::from_fn(g, |t| 3.0 * t + 1.0).unwrap();
        assert!((x.integral_ab() - 2.5).abs() < 1e-14);
        let tail = x.integral_to_b();
        assert!((tail[0] - 2.5).abs() < 1e-14);
        assert_eq!(tail[100], 0.0);
        assert!((tail[50] - (2.5 - (0.375 + 0.5))).abs() < 1e-13);
    }
}
