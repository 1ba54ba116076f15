#![allow(dead_code)]

use quasisol_core::bv::{NodeRule, PiecewiseFunction};
use quasisol_core::expr::{BinOp, Expr, Var};
use rand::Rng;

/// A piecewise-linear function with jumps, kept alongside its coefficients.
pub struct RandomPl {
    pub breakpoints: Vec<f64>,
    /// `(intercept, slope)` per cell
    pub lines: Vec<(f64, f64)>,
    pub node_values: Vec<f64>,
    pub f: PiecewiseFunction,
}

impl RandomPl {
    pub fn line(&self, cell: usize, y: f64) -> f64 {
        self.lines[cell].0 + self.lines[cell].1 * y
    }

    /// Sum of slopes times lengths plus both sides of every jump.
    pub fn exact_variation(&self) -> f64 {
        let m = self.lines.len();
        let mut v = 0.0;
        for c in 0..m {
            let (l, r) = (self.breakpoints[c], self.breakpoints[c + 1]);
            v += self.lines[c].1.abs() * (r - l);
            v += (self.line(c, l) - self.node_values[c]).abs();
            v += (self.node_values[c + 1] - self.line(c, r)).abs();
        }
        v
    }
}

pub fn random_pl(rng: &mut impl Rng) -> RandomPl {
    let m = rng.gen_range(1..=6);
    let lo = rng.gen_range(-3.0..0.0);
    let mut breakpoints = vec![lo];
    for _ in 0..m {
        let last = *breakpoints.last().unwrap();
        breakpoints.push(last + rng.gen_range(0.1..1.5));
    }
    let lines: Vec<(f64, f64)> = (0..m).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0))).collect();
    let pieces = lines
        .iter()
        .map(|&(c0, c1)| Expr::bin(BinOp::Add, Expr::num(c0), Expr::bin(BinOp::Mul, Expr::num(c1), Expr::var(Var::Y))))
        .collect();
    let mut rules = Vec::new();
    let mut node_values = Vec::new();
    for i in 0..=m {
        let y = breakpoints[i];
        let choice = if i == 0 {
            [1, 2][rng.gen_range(0..2)]
        } else if i == m {
            [0, 2][rng.gen_range(0..2)]
        } else {
            rng.gen_range(0..3)
        };
        let (rule, v) = match choice {
            0 => (NodeRule::Left, lines[i - 1].0 + lines[i - 1].1 * y),
            1 => (NodeRule::Right, lines[i].0 + lines[i].1 * y),
            _ => {
                let v = rng.gen_range(-1.5..1.5);
                (NodeRule::Value(v), v)
            }
        };
        rules.push(rule);
        node_values.push(v);
    }
    let f = PiecewiseFunction::new(Var::Y, breakpoints.clone(), pieces, rules).unwrap();
    RandomPl { breakpoints, lines, node_values, f }
}

/// Sorted sample points covering every breakpoint and random interior points.
pub fn sample_points(rng: &mut impl Rng, pl: &RandomPl, n: usize) -> Vec<f64> {
    let (lo, hi) = (pl.breakpoints[0], *pl.breakpoints.last().unwrap());
    let mut pts: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    pts.extend(&pl.breakpoints);
    pts.sort_by(f64::total_cmp);
    pts
}
