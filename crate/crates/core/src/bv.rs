//! Exact variation calculus for piecewise-defined functions of one variable.
//!
//! A [`PiecewiseFunction`] is a list of breakpoints `y_0 < ... < y_m`, one
//! expression per open cell `(y_{i-1}, y_i)` and an explicit value at every
//! breakpoint. The breakpoint value either comes from the cell on its left
//! (right-closed cells), the cell on its right (left-closed cells) or is a
//! stored number, so jump functions with any closure convention are exact.
//!
//! Cells are split at the interior extrema of their expression (64 samples
//! per cell, then golden-section refinement to 1e-12), after which the total
//! variation is a finite sum of endpoint differences and jump magnitudes.

use crate::error::{Error, Result};
use crate::expr::{BinOp, Env, Expr, Var};

const EXTREMUM_SAMPLES: usize = 64;
const EXTREMUM_TOL: f64 = 1e-12;

/// How the value at a breakpoint is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeRule {
    /// Limit of the cell expression on the left.
    Left,
    /// Limit of the cell expression on the right.
    Right,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseFunction {
    var: Var,
    env: Env,
    breakpoints: Vec<f64>,
    pieces: Vec<Expr>,
    rules: Vec<NodeRule>,
    node_values: Vec<f64>,
    extrema: Vec<Vec<f64>>,
}

/// Finite, strictly increasing list of points.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    points: Vec<f64>,
}

impl Partition {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidField {
                field: "partition".into(),
                message: "needs at least two points".into(),
            });
        }
        if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidField {
                field: "partition".into(),
                message: "points must be finite and strictly increasing".into(),
            });
        }
        Ok(Partition { points })
    }

    /// `n` equal subintervals of `[c, d]`.
    pub fn uniform(c: f64, d: f64, n: usize) -> Result<Self> {
        let n = n.max(1);
        let mut pts: Vec<f64> = (0..=n).map(|i| c + (d - c) * i as f64 / n as f64).collect();
        pts[n] = d;
        Partition::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn lo(&self) -> f64 {
        self.points[0]
    }

    pub fn hi(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Union with another partition of the same interval.
    pub fn refine_with(&self, other: &Partition) -> Partition {
        let mut pts: Vec<f64> = self.points.iter().chain(other.points.iter()).copied().collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        Partition { points: pts }
    }
}

/// Monotone sub-cell used while building a decomposition.
struct Sub {
    cell: usize,
    l: f64,
    /// running variation just right of `l`
    start: f64,
    p_l: f64,
    rising: bool,
}

/// `g` nondecreasing, `h` nonincreasing, `g + h = f`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionPair {
    pub g: PiecewiseFunction,
    pub h: PiecewiseFunction,
    pub base_point: f64,
}

impl PiecewiseFunction {
    /// General constructor: `rules[i]` gives the value at `breakpoints[i]`.
    pub fn new(var: Var, breakpoints: Vec<f64>, pieces: Vec<Expr>, rules: Vec<NodeRule>) -> Result<Self> {
        Self::with_env(var, Env::default(), breakpoints, pieces, rules)
    }

    pub fn with_env(
        var: Var,
        env: Env,
        breakpoints: Vec<f64>,
        pieces: Vec<Expr>,
        rules: Vec<NodeRule>,
    ) -> Result<Self> {
        let invalid = |message: &str| Error::InvalidField { field: "piecewise".into(), message: message.into() };
        let m = pieces.len();
        if m == 0 {
            return Err(invalid("at least one cell is required"));
        }
        if breakpoints.len() != m + 1 || rules.len() != m + 1 {
            return Err(invalid("need one more breakpoint (and node rule) than cells"));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("breakpoints must be finite and strictly increasing"));
        }
        if matches!(rules[0], NodeRule::Left) || matches!(rules[m], NodeRule::Right) {
            return Err(invalid("domain endpoints cannot take a value from outside the domain"));
        }
        let mut f = PiecewiseFunction {
            var,
            env,
            breakpoints,
            pieces,
            rules,
            node_values: Vec::new(),
            extrema: Vec::new(),
        };
        f.resolve()?;
        Ok(f)
    }

    /// Cells `(y_{i-1}, y_i]` with the value at `y_0` given separately.
    pub fn right_closed(var: Var, breakpoints: Vec<f64>, pieces: Vec<Expr>, value_at_lo: f64) -> Result<Self> {
        let mut rules = vec![NodeRule::Value(value_at_lo)];
        rules.extend((1..breakpoints.len()).map(|_| NodeRule::Left));
        Self::new(var, breakpoints, pieces, rules)
    }

    /// A single expression on `[lo, hi]`.
    pub fn single(var: Var, expr: Expr, lo: f64, hi: f64) -> Result<Self> {
        Self::new(var, vec![lo, hi], vec![expr], vec![NodeRule::Right, NodeRule::Left])
    }

    pub fn constant(var: Var, value: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::single(var, Expr::Num(value), lo, hi)
    }

    /// Same function with the non-argument variables rebound.
    pub fn bind(&self, env: Env) -> Result<Self> {
        let mut f = self.clone();
        f.env = env;
        f.resolve()?;
        Ok(f)
    }

    fn resolve(&mut self) -> Result<()> {
        self.node_values = (0..self.breakpoints.len())
            .map(|i| self.rule_value(i, &self.env))
            .collect::<Result<_>>()?;
        self.extrema = (0..self.pieces.len()).map(|i| self.find_extrema(i)).collect();
        Ok(())
    }

    fn rule_value(&self, i: usize, env: &Env) -> Result<f64> {
        let y = self.breakpoints[i];
        let v = match &self.rules[i] {
            NodeRule::Left => self.pieces[i - 1].eval(&env.with(self.var, y)),
            NodeRule::Right => self.pieces[i].eval(&env.with(self.var, y)),
            NodeRule::Value(v) => *v,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Eval(format!("breakpoint value at {y} is not finite")))
        }
    }

    pub fn var(&self) -> Var {
        self.var
    }

    pub fn env(&self) -> Env {
        self.env
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], self.breakpoints[self.breakpoints.len() - 1])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Expr] {
        &self.pieces
    }

    pub fn rules(&self) -> &[NodeRule] {
        &self.rules
    }

    pub fn node_values(&self) -> &[f64] {
        &self.node_values
    }

    /// True when any piece references `var` (other than the argument).
    pub fn depends_on(&self, var: Var) -> bool {
        var != self.var && self.pieces.iter().any(|p| p.depends_on(var))
    }

    fn check_domain(&self, y: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if y >= lo && y <= hi {
            Ok(())
        } else {
            Err(Error::Domain { value: y, lo, hi })
        }
    }

    fn piece_at(&self, cell: usize, y: f64) -> f64 {
        self.pieces[cell].eval(&self.env.with(self.var, y))
    }

    fn finite(y: f64, v: f64) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Eval(format!("non-finite value at {y}")))
        }
    }

    /// Locates `y`: `Ok(i)` for breakpoint `i`, `Err(c)` for open cell `c`.
    fn locate(&self, y: f64) -> std::result::Result<usize, usize> {
        match self.breakpoints.binary_search_by(|b| b.total_cmp(&y)) {
            Ok(i) => Ok(i),
            Err(i) => Err(i - 1),
        }
    }

    pub fn eval(&self, y: f64) -> Result<f64> {
        self.check_domain(y)?;
        match self.locate(y) {
            Ok(i) => Ok(self.node_values[i]),
            Err(c) => Self::finite(y, self.piece_at(c, y)),
        }
    }

    /// Evaluation with per-call bindings for the non-argument variables.
    pub fn eval_with(&self, y: f64, env: &Env) -> Result<f64> {
        self.check_domain(y)?;
        match self.locate(y) {
            Ok(i) => self.rule_value(i, env),
            Err(c) => Self::finite(y, self.pieces[c].eval(&env.with(self.var, y))),
        }
    }

    pub fn left_limit(&self, y: f64) -> Result<f64> {
        self.check_domain(y)?;
        let cell = match self.locate(y) {
            Ok(0) => return Ok(self.node_values[0]),
            Ok(i) => i - 1,
            Err(c) => c,
        };
        Self::finite(y, self.piece_at(cell, y))
    }

    pub fn right_limit(&self, y: f64) -> Result<f64> {
        self.check_domain(y)?;
        let m = self.pieces.len();
        let cell = match self.locate(y) {
            Ok(i) if i == m => return Ok(self.node_values[m]),
            Ok(i) => i,
            Err(c) => c,
        };
        Self::finite(y, self.piece_at(cell, y))
    }

    fn find_extrema(&self, cell: usize) -> Vec<f64> {
        let lo = self.breakpoints[cell];
        let hi = self.breakpoints[cell + 1];
        let n = EXTREMUM_SAMPLES;
        let ys: Vec<f64> = (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect();
        let vals: Vec<f64> = ys.iter().map(|&y| self.piece_at(cell, y)).collect();

        let mut out = Vec::new();
        // (index where the last nonzero step ended, its sign)
        let mut last: Option<(usize, f64)> = None;
        for j in 1..n {
            let (a, b) = (vals[j - 1], vals[j]);
            if !a.is_finite() || !b.is_finite() {
                last = None;
                continue;
            }
            let d = b - a;
            if d.abs() <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
                continue;
            }
            let sign = d.signum();
            if let Some((j0, s0)) = last {
                if s0 != sign {
                    let bracket_lo = ys[j0.saturating_sub(1)];
                    let bracket_hi = ys[j];
                    let e = self.golden(cell, bracket_lo, bracket_hi, s0 > 0.0);
                    if e > lo && e < hi {
                        out.push(e);
                    }
                }
            }
            last = Some((j, sign));
        }
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() <= EXTREMUM_TOL);
        out
    }

    fn golden(&self, cell: usize, mut lo: f64, mut hi: f64, maximize: bool) -> f64 {
        let score = |y: f64| {
            let v = self.piece_at(cell, y);
            if maximize { v } else { -v }
        };
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = hi - ratio * (hi - lo);
        let mut d = lo + ratio * (hi - lo);
        let (mut fc, mut fd) = (score(c), score(d));
        while hi - lo > EXTREMUM_TOL * (1.0 + lo.abs().max(hi.abs())) {
            if fc >= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - ratio * (hi - lo);
                fc = score(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + ratio * (hi - lo);
                fd = score(d);
            }
        }
        0.5 * (lo + hi)
    }

    /// Values at the points where the function can change direction, in order
    /// from `c` to `d`. The variation on `[c, d]` is the sum of absolute
    /// differences of this sequence.
    fn key_values(&self, c: f64, d: f64) -> Result<Vec<f64>> {
        self.check_domain(c)?;
        self.check_domain(d)?;
        let mut vals = vec![self.eval(c)?];
        if c == d {
            return Ok(vals);
        }
        for cell in 0..self.pieces.len() {
            let (lo, hi) = (self.breakpoints[cell], self.breakpoints[cell + 1]);
            if hi <= c || lo >= d {
                continue;
            }
            let l = lo.max(c);
            let r = hi.min(d);
            vals.push(Self::finite(l, self.piece_at(cell, l))?);
            for &e in self.extrema[cell].iter().filter(|&&e| e > l && e < r) {
                vals.push(Self::finite(e, self.piece_at(cell, e))?);
            }
            vals.push(Self::finite(r, self.piece_at(cell, r))?);
            if r == hi {
                vals.push(self.node_values[cell + 1]);
            }
        }
        Ok(vals)
    }

    /// `sum |f(x_i) - f(x_{i-1})|` over the partition.
    pub fn variation(&self, p: &Partition) -> Result<f64> {
        self.check_domain(p.lo())?;
        self.check_domain(p.hi())?;
        let vals = p.points().iter().map(|&y| self.eval(y)).collect::<Result<Vec<_>>>()?;
        Ok(vals.windows(2).map(|w| (w[1] - w[0]).abs()).sum())
    }

    /// Total variation on `[c, d]`.
    pub fn total_variation(&self, c: f64, d: f64) -> Result<f64> {
        if c > d {
            return Err(Error::InvalidField {
                field: "interval".into(),
                message: format!("expected c <= d, got [{c}, {d}]"),
            });
        }
        let vals = self.key_values(c, d)?;
        Ok(vals.windows(2).map(|w| (w[1] - w[0]).abs()).sum())
    }

    /// `V(f, P_k)` for `k = 1..=depth`, `P_k` the uniform partition of `[c, d]`
    /// into `2^k` cells.
    pub fn variation_profile(&self, c: f64, d: f64, depth: u32) -> Result<Vec<f64>> {
        if depth == 0 || depth > 30 {
            return Err(Error::InvalidField { field: "depth".into(), message: "must be in 1..=30".into() });
        }
        self.check_domain(c)?;
        self.check_domain(d)?;
        let finest = 1usize << depth;
        let vals = (0..=finest)
            .map(|i| {
                let y = if i == finest { d } else { c + (d - c) * i as f64 / finest as f64 };
                self.eval(y)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((1..=depth)
            .map(|k| {
                let stride = 1usize << (depth - k);
                vals.iter()
                    .step_by(stride)
                    .collect::<Vec<_>>()
                    .windows(2)
                    .map(|w| (w[1] - w[0]).abs())
                    .sum()
            })
            .collect())
    }

    /// `y -> V_A^y(f)` as an exact piecewise function.
    ///
    /// A base point at or below the domain counts from the left end of the
    /// domain. An interior base point gives `V_lo^y - V_lo^A`, which is
    /// negative to the left of `A` but still nondecreasing.
    pub fn running_variation(&self, base: f64) -> Result<PiecewiseFunction> {
        Ok(self.build_decomposition(base)?.g)
    }

    pub fn jordan_decompose(&self, base: f64) -> Result<DecompositionPair> {
        self.build_decomposition(base)
    }

    fn build_decomposition(&self, base: f64) -> Result<DecompositionPair> {
        let (lo, hi) = self.domain();
        if base > hi || !base.is_finite() {
            return Err(Error::Domain { value: base, lo, hi });
        }

        let mut breaks = vec![lo];
        let mut g_nodes = vec![0.0];
        let mut f_nodes = vec![self.node_values[0]];
        let mut subs = Vec::new();
        let mut acc = 0.0;

        for cell in 0..self.pieces.len() {
            let (c_lo, c_hi) = (self.breakpoints[cell], self.breakpoints[cell + 1]);
            let mut pts = vec![c_lo];
            pts.extend(self.extrema[cell].iter().copied());
            pts.push(c_hi);

            let right_of_lo = Self::finite(c_lo, self.piece_at(cell, c_lo))?;
            acc += (right_of_lo - self.node_values[cell]).abs();
            for (k, w) in pts.windows(2).enumerate() {
                let (l, r) = (w[0], w[1]);
                let p_l = Self::finite(l, self.piece_at(cell, l))?;
                let p_r = Self::finite(r, self.piece_at(cell, r))?;
                subs.push(Sub { cell, l, start: acc, p_l, rising: p_r >= p_l });
                acc += (p_r - p_l).abs();
                if k + 2 < pts.len() {
                    // interior extremum: continuous point
                    breaks.push(r);
                    g_nodes.push(acc);
                    f_nodes.push(p_r);
                }
            }
            let left_of_hi = Self::finite(c_hi, self.piece_at(cell, c_hi))?;
            acc += (left_of_hi - self.node_values[cell + 1]).abs();
            breaks.push(c_hi);
            g_nodes.push(acc);
            f_nodes.push(self.node_values[cell + 1]);
        }

        let shift = if base <= lo { 0.0 } else { self.running_at(&breaks, &g_nodes, &subs, base)? };

        let mut g_pieces = Vec::with_capacity(subs.len());
        let mut h_pieces = Vec::with_capacity(subs.len());
        for s in &subs {
            let p = self.pieces[s.cell].clone();
            let c0 = s.start - shift;
            if s.rising {
                // g = c0 + (p - p_l), h = p_l - c0
                g_pieces.push(Expr::bin(BinOp::Add, p, Expr::Num(c0 - s.p_l)));
                h_pieces.push(Expr::Num(s.p_l - c0));
            } else {
                // g = c0 - (p - p_l), h = 2p - (c0 + p_l)
                g_pieces.push(Expr::bin(BinOp::Sub, Expr::Num(c0 + s.p_l), p.clone()));
                h_pieces.push(Expr::bin(
                    BinOp::Sub,
                    Expr::bin(BinOp::Mul, Expr::Num(2.0), p),
                    Expr::Num(c0 + s.p_l),
                ));
            }
        }
        let g_rules: Vec<NodeRule> = g_nodes.iter().map(|v| NodeRule::Value(v - shift)).collect();
        let h_rules: Vec<NodeRule> =
            g_nodes.iter().zip(&f_nodes).map(|(g, f)| NodeRule::Value(f - (g - shift))).collect();

        let g = PiecewiseFunction::with_env(self.var, self.env, breaks.clone(), g_pieces, g_rules)?;
        let h = PiecewiseFunction::with_env(self.var, self.env, breaks, h_pieces, h_rules)?;
        Ok(DecompositionPair { g, h, base_point: base })
    }

    fn running_at(
        &self,
        breaks: &[f64],
        g_nodes: &[f64],
        subs: &[Sub],
        y: f64,
    ) -> Result<f64> {
        if let Ok(i) = breaks.binary_search_by(|b| b.total_cmp(&y)) {
            return Ok(g_nodes[i]);
        }
        let s = &subs[subs.partition_point(|s| s.l < y) - 1];
        let p = Self::finite(y, self.piece_at(s.cell, y))?;
        Ok(s.start + (p - s.p_l).abs())
    }
}

impl DecompositionPair {
    pub fn eval(&self, y: f64) -> Result<(f64, f64)> {
        Ok((self.g.eval(y)?, self.h.eval(y)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    /// The advanced-problem nonlinearity on [-2, 2]:
    /// `[-2,-1)`: -3/10 - y/10, `[-1,1]`: y/10, `(1,2]`: 3/10 - y/10.
    fn jump_nonlinearity() -> PiecewiseFunction {
        PiecewiseFunction::new(
            Var::Y,
            vec![-2.0, -1.0, 1.0, 2.0],
            vec![e("-3/10 - y/10"), e("y/10"), e("3/10 - y/10")],
            vec![NodeRule::Right, NodeRule::Right, NodeRule::Left, NodeRule::Left],
        )
        .unwrap()
    }

    #[test]
    fn variation_on_partitions() {
        let id = PiecewiseFunction::single(Var::Y, e("y"), 0.0, 2.0).unwrap();
        let p = Partition::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(id.variation(&p).unwrap(), 2.0);

        let f = jump_nonlinearity();
        let p = Partition::new(vec![-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        assert!((f.variation(&p).unwrap() - 0.2).abs() < 1e-15);

        let c = PiecewiseFunction::constant(Var::Y, 3.0, -1.0, 1.0).unwrap();
        assert_eq!(c.variation(&Partition::uniform(-1.0, 1.0, 7).unwrap()).unwrap(), 0.0);

        let outside = Partition::new(vec![-3.0, 0.0]).unwrap();
        assert!(matches!(f.variation(&outside), Err(Error::Domain { .. })));
    }

    #[test]
    fn breakpoint_values_follow_closure() {
        let f = jump_nonlinearity();
        assert!((f.eval(-1.0).unwrap() + 0.1).abs() < 1e-15);
        assert!((f.eval(1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((f.right_limit(1.0).unwrap() - 0.2).abs() < 1e-15);
        assert!((f.left_limit(-1.0).unwrap() + 0.2).abs() < 1e-15);
        assert!((f.eval(-2.0).unwrap() + 0.1).abs() < 1e-15);
    }

    #[test]
    fn total_variation_values() {
        let f = jump_nonlinearity();
        assert!((f.total_variation(-2.0, 2.0).unwrap() - 0.6).abs() < 1e-12);
        let z = PiecewiseFunction::constant(Var::Y, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(z.total_variation(0.0, 1.0).unwrap(), 0.0);
        let mono = PiecewiseFunction::single(Var::Y, e("exp(y)"), 0.0, 1.0).unwrap();
        let tv = mono.total_variation(0.2, 0.9).unwrap();
        assert!((tv - (0.9f64.exp() - 0.2f64.exp())).abs() < 1e-14);
    }

    #[test]
    fn smooth_piece_is_split_at_extrema() {
        let s = PiecewiseFunction::single(Var::Y, e("sin(y)"), 0.0, 2.0 * std::f64::consts::PI).unwrap();
        assert!((s.total_variation(0.0, 2.0 * std::f64::consts::PI).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn running_variation_matches_branches() {
        let f = jump_nonlinearity();
        let g = f.running_variation(-2.0).unwrap();
        for y in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert!((g.eval(y).unwrap() - (y / 10.0 + 0.3)).abs() < 1e-12, "y={y}");
        }
        for y in [1.2, 1.5, 2.0] {
            assert!((g.eval(y).unwrap() - (y / 10.0 + 0.4)).abs() < 1e-12, "y={y}");
        }
        assert_eq!(g.eval(-2.0).unwrap(), 0.0);

        let inc = PiecewiseFunction::single(Var::Y, e("y*y"), 1.0, 3.0).unwrap();
        let g = inc.running_variation(1.0).unwrap();
        for y in [1.0, 1.5, 2.9] {
            assert!((g.eval(y).unwrap() - (y * y - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn base_point_below_domain_counts_from_domain_start() {
        let f = jump_nonlinearity();
        let g0 = f.running_variation(-2.0).unwrap();
        let g1 = f.running_variation(-7.5).unwrap();
        for y in [-2.0, -1.0, 0.5, 2.0] {
            assert_eq!(g0.eval(y).unwrap(), g1.eval(y).unwrap());
        }
        assert!(matches!(f.running_variation(2.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn interior_base_point_shifts_values() {
        let f = jump_nonlinearity();
        let g = f.running_variation(0.0).unwrap();
        assert!(g.eval(0.0).unwrap().abs() < 1e-15);
        assert!((g.eval(-2.0).unwrap() + 0.3).abs() < 1e-12);
    }

    #[test]
    fn decomposition_of_decreasing_line() {
        let f = PiecewiseFunction::single(Var::Y, e("-y"), 0.0, 1.0).unwrap();
        let pair = f.jordan_decompose(0.0).unwrap();
        for y in [0.0, 0.25, 0.6, 1.0] {
            let (g, h) = pair.eval(y).unwrap();
            assert!((g - y).abs() < 1e-15);
            assert!((h + 2.0 * y).abs() < 1e-15);
        }
    }

    #[test]
    fn nondecreasing_function_has_constant_h() {
        let f = PiecewiseFunction::right_closed(Var::Y, vec![0.0, 1.0, 2.0], vec![e("y"), e("y + 1")], 0.0).unwrap();
        let pair = f.jordan_decompose(0.0).unwrap();
        for y in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let (_, h) = pair.eval(y).unwrap();
            assert!(h.abs() < 1e-15, "h({y}) = {h}");
        }
    }

    #[test]
    fn upward_jump_is_absorbed_by_g() {
        // f = y on [0,1], y + 2 on (1,2]
        let f = PiecewiseFunction::right_closed(Var::Y, vec![0.0, 1.0, 2.0], vec![e("y"), e("y + 2")], 0.0).unwrap();
        let pair = f.jordan_decompose(0.0).unwrap();
        let jump_g = pair.g.right_limit(1.0).unwrap() - pair.g.left_limit(1.0).unwrap();
        let jump_h = pair.h.right_limit(1.0).unwrap() - pair.h.left_limit(1.0).unwrap();
        assert!((jump_g - 2.0).abs() < 1e-15);
        assert!(jump_h.abs() < 1e-15);
    }

    #[test]
    fn profile_of_oscillating_function_keeps_growing() {
        let f = PiecewiseFunction::new(
            Var::T,
            vec![0.0, 1.0],
            vec![e("t*cos(pi/(2*t))")],
            vec![NodeRule::Value(0.0), NodeRule::Left],
        )
        .unwrap();
        let prof = f.variation_profile(0.0, 1.0, 12).unwrap();
        assert!(prof.windows(2).all(|w| w[1] > w[0]));
        assert!(prof[11] - prof[5] > 0.5);
    }

    #[test]
    fn profile_of_monotone_function_is_flat() {
        let f = PiecewiseFunction::single(Var::Y, e("3*y - 1"), 0.0, 1.0).unwrap();
        let prof = f.variation_profile(0.0, 1.0, 8).unwrap();
        assert!(prof.iter().all(|v| (v - 3.0).abs() < 1e-14));
    }

    #[test]
    fn bad_construction_is_rejected() {
        assert!(PiecewiseFunction::new(Var::Y, vec![0.0, 0.0], vec![e("y")], vec![NodeRule::Right, NodeRule::Left]).is_err());
        assert!(PiecewiseFunction::new(Var::Y, vec![0.0, 1.0], vec![e("y")], vec![NodeRule::Left, NodeRule::Left]).is_err());
        assert!(Partition::new(vec![1.0]).is_err());
        assert!(Partition::new(vec![1.0, 0.5]).is_err());
    }
}
