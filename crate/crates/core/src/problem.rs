//! The advanced final-value problem
//!
//! ```text
//! x'(t) = g(t, x(t), x(tau(t))) + h(t, x(t), x(tau(t)))   on [a, b]
//! x(t)  = phi(t)                                          on [b, b + r]
//! ```
//!
//! with `g` nondecreasing and `h` nonincreasing in the last argument, and the
//! numerical checks of the hypotheses under which the coupled iteration
//! converges to the unique solution between a coupled lower solution `alpha`
//! and upper solution `beta`.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bv::{DecompositionPair, PiecewiseFunction};
use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::grid::{cumulative_to_end, AdvanceMap, Band, Grid, GridFunction, ORDER_TOL};

/// A function of `t`, either a formula or samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeFunction {
    Expr(Expr),
    Samples(GridFunction),
}

impl TimeFunction {
    pub fn parse(src: &str) -> Result<Self> {
        Ok(TimeFunction::Expr(Expr::parse(src)?))
    }

    pub fn constant(c: f64) -> Self {
        TimeFunction::Expr(Expr::Num(c))
    }

    /// Formulas with a removable singularity at `t` (such as `u sin(1/u)` at
    /// `u = 0`) take the average of the finite values next to it.
    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            TimeFunction::Samples(g) => g.eval(t),
            TimeFunction::Expr(e) => {
                let v = e.eval(&Env::at_t(t));
                if v.is_finite() {
                    return Ok(v);
                }
                let d = 1e-12 * (1.0 + t.abs());
                let side: Vec<f64> =
                    [t - d, t + d].iter().map(|&s| e.eval(&Env::at_t(s))).filter(|v| v.is_finite()).collect();
                if side.is_empty() {
                    Err(Error::Eval(format!("`{e}` is not finite near t = {t}")))
                } else {
                    Ok(side.iter().sum::<f64>() / side.len() as f64)
                }
            }
        }
    }

    pub fn sample(&self, grid: &Arc<Grid>) -> Result<GridFunction> {
        GridFunction::try_from_fn(grid.clone(), |t| self.eval(t))
    }
}

/// A function of `(t, x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum YFunction {
    Expr(Expr),
    Piecewise(PiecewiseFunction),
}

impl YFunction {
    pub fn eval(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        let env = Env::new(t, x, y);
        let v = match self {
            YFunction::Expr(e) => e.eval(&env),
            YFunction::Piecewise(p) => p.eval_with(y, &env)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Eval(format!("non-finite right-hand side at t = {t}, x = {x}, y = {y}")))
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            YFunction::Expr(e) => e.depends_on(var),
            YFunction::Piecewise(p) => p.var() == var || p.depends_on(var),
        }
    }

    pub fn zero() -> Self {
        YFunction::Expr(Expr::Num(0.0))
    }
}

/// The right-hand side, either already split into monotone parts or given as
/// a whole and split by running variation in `y`.
#[derive(Debug, Clone, PartialEq)]
pub enum RhsDecomposition {
    Split { g: YFunction, h: YFunction },
    Whole { f: PiecewiseFunction, base_point: f64, cached: Option<DecompositionPair> },
}

impl RhsDecomposition {
    pub fn split(g: YFunction, h: YFunction) -> Self {
        RhsDecomposition::Split { g, h }
    }

    /// `f` must be a function of `y` on its window; pieces may also use `t`, `x`.
    pub fn whole(f: PiecewiseFunction, base_point: f64) -> Result<Self> {
        if f.var() != Var::Y {
            return Err(Error::InvalidField { field: "rhs.f".into(), message: "must be a function of y".into() });
        }
        let cached = if f.depends_on(Var::T) || f.depends_on(Var::X) {
            None
        } else {
            Some(f.jordan_decompose(base_point)?)
        };
        Ok(RhsDecomposition::Whole { f, base_point, cached })
    }

    fn pair_at(f: &PiecewiseFunction, base: f64, t: f64, x: f64) -> Result<DecompositionPair> {
        f.bind(Env::new(t, x, 0.0))?.jordan_decompose(base)
    }

    pub fn g(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        match self {
            RhsDecomposition::Split { g, .. } => g.eval(t, x, y),
            RhsDecomposition::Whole { cached: Some(p), .. } => p.g.eval(y),
            RhsDecomposition::Whole { f, base_point, cached: None } => {
                Self::pair_at(f, *base_point, t, x)?.g.eval(y)
            }
        }
    }

    pub fn h(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        match self {
            RhsDecomposition::Split { h, .. } => h.eval(t, x, y),
            RhsDecomposition::Whole { cached: Some(p), .. } => p.h.eval(y),
            RhsDecomposition::Whole { f, base_point, cached: None } => {
                Self::pair_at(f, *base_point, t, x)?.h.eval(y)
            }
        }
    }

    /// `g(t, x, y_up) + h(t, x, y_down)`.
    pub fn coupled(&self, t: f64, x: f64, y_up: f64, y_down: f64) -> Result<f64> {
        match self {
            RhsDecomposition::Whole { f, base_point, cached: None } => {
                let p = Self::pair_at(f, *base_point, t, x)?;
                Ok(p.g.eval(y_up)? + p.h.eval(y_down)?)
            }
            _ => Ok(self.g(t, x, y_up)? + self.h(t, x, y_down)?),
        }
    }

    /// The undecomposed right-hand side `f = g + h`.
    pub fn f(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        match self {
            RhsDecomposition::Whole { f, .. } => f.eval_with(y, &Env::new(t, x, y)),
            RhsDecomposition::Split { g, h } => Ok(g.eval(t, x, y)? + h.eval(t, x, y)?),
        }
    }

    pub fn depends_on_x(&self) -> bool {
        match self {
            RhsDecomposition::Split { g, h } => g.depends_on(Var::X) || h.depends_on(Var::X),
            RhsDecomposition::Whole { f, .. } => f.depends_on(Var::X),
        }
    }
}

/// User-supplied H4 coefficients and the window stated for the H4 check.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct H4Input {
    pub constants: Option<[TimeFunction; 4]>,
    pub window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub tau: AdvanceMap,
    pub phi: TimeFunction,
    pub rhs: RhsDecomposition,
    pub alpha: TimeFunction,
    pub beta: TimeFunction,
    pub window_j: (f64, f64),
    pub h4: H4Input,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    pub grid: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub psi_samples: usize,
    pub h4_samples: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { grid: 4096, tol: 1e-8, max_iter: 200, seed: 0, psi_samples: 9, h4_samples: 12 }
    }
}

/// The problem sampled on a grid.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: Arc<Grid>,
    pub band: Band,
    /// `tau` at the nodes of `[a, b]`.
    pub taus: Vec<f64>,
    /// `phi` at the tail nodes, starting with `b`.
    pub phi_tail: Vec<f64>,
}

impl Discretization {
    pub fn alpha(&self) -> &GridFunction {
        self.band.lower()
    }

    pub fn beta(&self) -> &GridFunction {
        self.band.upper()
    }

    pub fn phi_b(&self) -> f64 {
        self.phi_tail[0]
    }

    /// Values on `[a, b]` followed by `phi` on the tail.
    pub fn extend_by_phi(&self, mut on_ab: Vec<f64>) -> Result<GridFunction> {
        on_ab.truncate(self.grid.n_sub());
        on_ab.extend_from_slice(&self.phi_tail);
        GridFunction::from_values(self.grid.clone(), on_ab)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi <= lo {
        return vec![lo];
    }
    (0..n).map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 }).collect()
}

impl ProblemSpec {
    pub fn grid(&self, n_sub: usize) -> Result<Arc<Grid>> {
        Grid::new(self.a, self.b, self.r, n_sub)
    }

    /// Samples the band, the advance and the final data.
    pub fn discretize(&self, n_sub: usize) -> Result<Discretization> {
        let grid = self.grid(n_sub)?;
        let alpha = self.alpha.sample(&grid)?;
        let beta = self.beta.sample(&grid)?;
        let band = Band::new(alpha, beta)?;
        let taus = self.tau.sample(&grid)?;
        let phi_tail = grid.tail_range().map(|i| self.phi.eval(grid.node(i))).collect::<Result<Vec<_>>>()?;
        Ok(Discretization { grid, band, taus, phi_tail })
    }

    fn check_in_j(&self, band: &Band) -> Result<(f64, f64)> {
        let lo = band.lower().min_max().0;
        let hi = band.upper().min_max().1;
        let (jl, jh) = self.window_j;
        if lo < jl - ORDER_TOL || hi > jh + ORDER_TOL {
            return Err(Error::WindowViolation { lo, hi, window_lo: jl, window_hi: jh });
        }
        Ok((lo, hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerUpperReport {
    pub lower_ok: bool,
    pub upper_ok: bool,
    /// Smallest `alpha' - (g(alpha, beta(tau)) + h(alpha, alpha(tau)))` over midpoints.
    pub lower_slack: f64,
    pub lower_worst_t: f64,
    /// Smallest `g(beta, alpha(tau)) + h(beta, beta(tau)) - beta'` over midpoints.
    pub upper_slack: f64,
    pub upper_worst_t: f64,
    /// Smallest `phi - alpha` on the tail.
    pub tail_lower_slack: f64,
    /// Smallest `beta - phi` on the tail.
    pub tail_upper_slack: f64,
    pub midpoints: usize,
    /// `[min alpha, max beta]`
    pub range: (f64, f64),
}

/// Coupled lower/upper solution inequalities at the midpoints of `[a, b]`
/// (finite-difference derivatives) and the final inequalities on the tail.
pub fn check_lower_upper(spec: &ProblemSpec, n_sub: usize) -> Result<LowerUpperReport> {
    let disc = spec.discretize(n_sub)?;
    let range = spec.check_in_j(&disc.band)?;
    let grid = &disc.grid;
    let h = grid.spacing();
    let (alpha, beta) = (disc.alpha(), disc.beta());

    let per_mid: Vec<(f64, bool, f64, bool, f64)> = (0..grid.n_sub())
        .into_par_iter()
        .map(|i| -> Result<_> {
            let tm = 0.5 * (grid.node(i) + grid.node(i + 1));
            let d_alpha = (alpha.value(i + 1) - alpha.value(i)) / h;
            let d_beta = (beta.value(i + 1) - beta.value(i)) / h;
            let a_m = spec.alpha.eval(tm)?;
            let b_m = spec.beta.eval(tm)?;
            let s = spec.tau.checked(tm, grid)?;
            let (a_s, b_s) = (spec.alpha.eval(s)?, spec.beta.eval(s)?);
            let lower = d_alpha - spec.rhs.coupled(tm, a_m, b_s, a_s)?;
            let upper = spec.rhs.coupled(tm, b_m, a_s, b_s)? - d_beta;
            Ok((
                tm,
                lower >= -1e-8 * (1.0 + d_alpha.abs()),
                lower,
                upper >= -1e-8 * (1.0 + d_beta.abs()),
                upper,
            ))
        })
        .collect::<Result<_>>()?;

    let mut rep = LowerUpperReport {
        lower_ok: true,
        upper_ok: true,
        lower_slack: f64::INFINITY,
        lower_worst_t: spec.a,
        upper_slack: f64::INFINITY,
        upper_worst_t: spec.a,
        tail_lower_slack: f64::INFINITY,
        tail_upper_slack: f64::INFINITY,
        midpoints: per_mid.len(),
        range,
    };
    for (tm, lok, lres, uok, ures) in per_mid {
        rep.lower_ok &= lok;
        rep.upper_ok &= uok;
        if lres < rep.lower_slack {
            rep.lower_slack = lres;
            rep.lower_worst_t = tm;
        }
        if ures < rep.upper_slack {
            rep.upper_slack = ures;
            rep.upper_worst_t = tm;
        }
    }
    for (j, i) in grid.tail_range().enumerate() {
        let phi = disc.phi_tail[j];
        rep.tail_lower_slack = rep.tail_lower_slack.min(phi - alpha.value(i));
        rep.tail_upper_slack = rep.tail_upper_slack.min(beta.value(i) - phi);
    }
    rep.lower_ok &= rep.tail_lower_slack >= -ORDER_TOL;
    rep.upper_ok &= rep.tail_upper_slack >= -ORDER_TOL;
    Ok(rep)
}

/// Bound `psi(t) >= |g(t, x, y1) + h(t, x, y2)|` over the band, sampled on a
/// `samples^3` lattice per node and inflated by 5%. Zero on the tail.
pub fn compute_psi(spec: &ProblemSpec, n_sub: usize, samples: usize) -> Result<GridFunction> {
    let disc = spec.discretize(n_sub)?;
    compute_psi_on(spec, &disc, samples)
}

pub fn compute_psi_on(spec: &ProblemSpec, disc: &Discretization, samples: usize) -> Result<GridFunction> {
    let samples = samples.max(2);
    let grid = &disc.grid;
    let on_ab: Vec<f64> = (0..=grid.n_sub())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let t = grid.node(i);
            let s = disc.taus[i];
            let ys = linspace(spec.alpha.eval(s)?, spec.beta.eval(s)?, samples);
            let mut best: f64 = 0.0;
            for x in linspace(disc.alpha().value(i), disc.beta().value(i), samples) {
                let (mut gmin, mut gmax, mut hmin, mut hmax) =
                    (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
                for &y in &ys {
                    let g = spec.rhs.g(t, x, y)?;
                    let h = spec.rhs.h(t, x, y)?;
                    gmin = gmin.min(g);
                    gmax = gmax.max(g);
                    hmin = hmin.min(h);
                    hmax = hmax.max(h);
                }
                // extremes of g(y1) + h(y2) over independent y1, y2
                best = best.max((gmax + hmax).abs()).max((gmin + hmin).abs());
            }
            Ok(1.05 * best)
        })
        .collect::<Result<_>>()?;
    let mut values = on_ab;
    values.resize(grid.len(), 0.0);
    GridFunction::from_values(grid.clone(), values)
}

/// `W(t) = [min phi - int_t^b psi, max phi + int_t^b psi]` at the nodes of `[a, b]`.
pub fn y_window(disc: &Discretization, psi: &GridFunction) -> Vec<(f64, f64)> {
    let (lo, hi) = disc.phi_tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let n = disc.grid.n_sub();
    let tail = cumulative_to_end(&psi.values()[..=n], disc.grid.spacing());
    tail.iter().map(|i| (lo - i, hi + i)).collect()
}

/// Whether `W(t)` stays inside `window` at every node of `[a, b]`.
pub fn verify_window(disc: &Discretization, psi: &GridFunction, window: (f64, f64)) -> bool {
    y_window(disc, psi)
        .iter()
        .all(|&(lo, hi)| lo >= window.0 - ORDER_TOL && hi <= window.1 + ORDER_TOL)
}

#[derive(Debug, Clone, PartialEq)]
pub struct H4Report {
    pub k1: GridFunction,
    pub k2: GridFunction,
    pub l1: GridFunction,
    pub l2: GridFunction,
    /// Whether the coefficients came from the problem rather than estimation.
    pub supplied: bool,
    pub checked_quadruples: usize,
}

impl H4Report {
    pub fn k(&self) -> Result<GridFunction> {
        self.k1.zip_with(&self.k2, |a, b| a + b)
    }

    pub fn l(&self) -> Result<GridFunction> {
        self.l1.zip_with(&self.l2, |a, b| a + b)
    }
}

/// Per-node tables of `g` and `h` on `x`-samples times `y`-samples.
struct NodeTables {
    xs: Vec<f64>,
    ys: Vec<f64>,
    g: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

#[derive(Clone, Copy)]
struct NodeConstants {
    k1: f64,
    k2: f64,
    l1: f64,
    l2: f64,
}

fn node_tables(spec: &ProblemSpec, t: f64, x_lo: f64, x_hi: f64, window: (f64, f64), samples: usize) -> Result<NodeTables> {
    let xs = linspace(x_lo, x_hi, samples);
    let ys = linspace(window.0, window.1, samples);
    let mut g = Vec::with_capacity(xs.len());
    let mut h = Vec::with_capacity(xs.len());
    for &x in &xs {
        g.push(ys.iter().map(|&y| spec.rhs.g(t, x, y)).collect::<Result<Vec<_>>>()?);
        h.push(ys.iter().map(|&y| spec.rhs.h(t, x, y)).collect::<Result<Vec<_>>>()?);
    }
    Ok(NodeTables { xs, ys, g, h })
}

fn estimate_node(tab: &NodeTables) -> NodeConstants {
    let (nx, ny) = (tab.xs.len(), tab.ys.len());
    let mut k1 = f64::INFINITY;
    let mut k2 = f64::INFINITY;
    let mut l1: f64 = 0.0;
    let mut l2: f64 = 0.0;
    for j in 0..ny {
        for i1 in 0..nx {
            for i2 in i1 + 1..nx {
                let dx = tab.xs[i2] - tab.xs[i1];
                k1 = k1.min((tab.g[i2][j] - tab.g[i1][j]) / dx);
                k2 = k2.min((tab.h[i2][j] - tab.h[i1][j]) / dx);
            }
        }
    }
    for i in 0..nx {
        for j1 in 0..ny {
            for j2 in j1 + 1..ny {
                let dy = tab.ys[j2] - tab.ys[j1];
                l1 = l1.max((tab.g[i][j2] - tab.g[i][j1]) / dy);
                l2 = l2.max(-(tab.h[i][j2] - tab.h[i][j1]) / dy);
            }
        }
    }
    if nx < 2 {
        k1 = 0.0;
        k2 = 0.0;
    }
    NodeConstants { k1, k2, l1, l2 }
}

/// Checks both H4 inequalities on every sampled quadruple; returns the count.
fn verify_node(t: f64, tab: &NodeTables, c: NodeConstants) -> Result<usize> {
    let (nx, ny) = (tab.xs.len(), tab.ys.len());
    let mut count = 0;
    for i1 in 0..nx {
        for i2 in i1..nx {
            let dx = tab.xs[i2] - tab.xs[i1];
            for j1 in 0..ny {
                for j2 in j1..ny {
                    let dy = tab.ys[j2] - tab.ys[j1];
                    let lhs_g = tab.g[i2][j1] - tab.g[i1][j2];
                    let rhs_g = c.k1 * dx - c.l1 * dy;
                    let lhs_h = tab.h[i2][j2] - tab.h[i1][j1];
                    let rhs_h = c.k2 * dx - c.l2 * dy;
                    let slack = |a: f64, b: f64| 1e-10 * (1.0 + a.abs() + b.abs());
                    if lhs_g < rhs_g - slack(lhs_g, rhs_g) {
                        return Err(Error::H4Violation(format!(
                            "g at t = {t}: x = {}, x' = {}, y = {}, y' = {}: {lhs_g} < {rhs_g}",
                            tab.xs[i1], tab.xs[i2], tab.ys[j1], tab.ys[j2]
                        )));
                    }
                    if lhs_h < rhs_h - slack(lhs_h, rhs_h) {
                        return Err(Error::H4Violation(format!(
                            "h at t = {t}: x = {}, x' = {}, y = {}, y' = {}: {lhs_h} < {rhs_h}",
                            tab.xs[i1], tab.xs[i2], tab.ys[j1], tab.ys[j2]
                        )));
                    }
                    count += 2;
                }
            }
        }
    }
    Ok(count)
}

/// Verifies the H4 one-sided bounds on sampled quadruples with
/// `alpha(t) <= x <= x' <= beta(t)` and `y <= y'` in the window `W(t)`
/// (clipped to `J`). Uses the problem's coefficients when present, otherwise
/// estimates the tightest constants from difference quotients.
pub fn estimate_h4(spec: &ProblemSpec, disc: &Discretization, psi: &GridFunction, samples: usize) -> Result<H4Report> {
    let samples = samples.max(2);
    let grid = &disc.grid;
    let n = grid.n_sub();
    let windows: Vec<(f64, f64)> = y_window(disc, psi)
        .into_iter()
        .map(|(lo, hi)| (lo.max(spec.window_j.0), hi.min(spec.window_j.1)))
        .collect();

    let tables: Vec<NodeTables> = (0..=n)
        .into_par_iter()
        .map(|i| node_tables(spec, grid.node(i), disc.alpha().value(i), disc.beta().value(i), windows[i], samples))
        .collect::<Result<_>>()?;

    let supplied = spec.h4.constants.is_some();
    let per_node: Vec<NodeConstants> = match &spec.h4.constants {
        Some([k1, k2, l1, l2]) => (0..=n)
            .map(|i| {
                let t = grid.node(i);
                let c = NodeConstants { k1: k1.eval(t)?, k2: k2.eval(t)?, l1: l1.eval(t)?, l2: l2.eval(t)? };
                if c.l1 < 0.0 || c.l2 < 0.0 {
                    return Err(Error::Precondition(format!("L1, L2 must be nonnegative (t = {t})")));
                }
                Ok(c)
            })
            .collect::<Result<_>>()?,
        None => {
            let est: Vec<NodeConstants> = tables.par_iter().map(estimate_node).collect();
            // constants in t
            let c = est.iter().fold(
                NodeConstants { k1: f64::INFINITY, k2: f64::INFINITY, l1: 0.0, l2: 0.0 },
                |acc, c| NodeConstants {
                    k1: acc.k1.min(c.k1),
                    k2: acc.k2.min(c.k2),
                    l1: acc.l1.max(c.l1),
                    l2: acc.l2.max(c.l2),
                },
            );
            vec![c; n + 1]
        }
    };

    let counts: Vec<usize> = tables
        .par_iter()
        .enumerate()
        .map(|(i, tab)| verify_node(grid.node(i), tab, per_node[i]))
        .collect::<Result<_>>()?;

    let column = |f: fn(&NodeConstants) -> f64| -> Result<GridFunction> {
        let mut v: Vec<f64> = per_node.iter().map(f).collect();
        v.resize(grid.len(), 0.0);
        GridFunction::from_values(grid.clone(), v)
    };
    Ok(H4Report {
        k1: column(|c| c.k1)?,
        k2: column(|c| c.k2)?,
        l1: column(|c| c.l1)?,
        l2: column(|c| c.l2)?,
        supplied,
        checked_quadruples: counts.iter().sum(),
    })
}

/// `int_a^b (max(-K, 0) + L) dt` by the composite trapezoid rule, and whether it is `< 1`.
pub fn check_contraction(k: &GridFunction, l: &GridFunction) -> Result<(f64, bool)> {
    if !k.grid().same_as(l.grid()) {
        return Err(Error::GridMismatch);
    }
    let n = k.grid().n_sub();
    if let Some(i) = (0..=n).find(|&i| l.value(i) < 0.0) {
        return Err(Error::Precondition(format!("L is negative at t = {}", k.grid().node(i))));
    }
    let integrand: Vec<f64> = (0..=n).map(|i| (-k.value(i)).max(0.0) + l.value(i)).collect();
    let value = crate::grid::trapezoid(&integrand, k.grid().spacing());
    Ok((value, value < 1.0))
}

/// Random audit that `g` is nondecreasing and `h` nonincreasing in `y` on `J`.
/// Returns a witness description on failure.
pub fn audit_monotonicity(spec: &ProblemSpec, draws: usize, seed: u64) -> Result<Option<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (jl, jh) = spec.window_j;
    for _ in 0..draws {
        let t = rng.gen_range(spec.a..=spec.b);
        let (lo, hi) = (spec.alpha.eval(t)?, spec.beta.eval(t)?);
        let x = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let mut y1 = rng.gen_range(jl..=jh);
        let mut y2 = rng.gen_range(jl..=jh);
        if y1 > y2 {
            std::mem::swap(&mut y1, &mut y2);
        }
        let (g1, g2) = (spec.rhs.g(t, x, y1)?, spec.rhs.g(t, x, y2)?);
        if g1 > g2 + 1e-10 {
            return Ok(Some(format!("g decreases at t = {t}, x = {x}: g({y1}) = {g1} > g({y2}) = {g2}")));
        }
        let (h1, h2) = (spec.rhs.h(t, x, y1)?, spec.rhs.h(t, x, y2)?);
        if h1 < h2 - 1e-10 {
            return Ok(Some(format!("h increases at t = {t}, x = {x}: h({y1}) = {h1} < h({y2}) = {h2}")));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub lower_upper: LowerUpperReport,
    pub monotonicity_witness: Option<String>,
    pub psi: GridFunction,
    pub psi_max: f64,
    pub window: Vec<(f64, f64)>,
    pub window_ok: Option<bool>,
    pub h4: std::result::Result<H4Report, String>,
    pub contraction_value: Option<f64>,
    pub contraction_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisSummary {
    pub all_ok: bool,
    pub first_failure: Option<String>,
    pub lower_upper: LowerUpperReport,
    pub h1_ok: bool,
    pub psi_max: f64,
    pub window_ok: Option<bool>,
    pub window_min: f64,
    pub window_max: f64,
    pub h4_ok: bool,
    pub h4_supplied: bool,
    pub h4_message: Option<String>,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub contraction_value: Option<f64>,
    pub contraction_ok: bool,
}

impl HypothesisReport {
    /// Name of the first failing hypothesis, in checking order.
    pub fn first_failure(&self) -> Option<String> {
        let lu = &self.lower_upper;
        if !lu.lower_ok {
            return Some("lower solution inequalities".into());
        }
        if !lu.upper_ok {
            return Some("upper solution inequalities".into());
        }
        if self.monotonicity_witness.is_some() {
            return Some("H1 (monotone decomposition)".into());
        }
        if self.window_ok == Some(false) {
            return Some("H4 window".into());
        }
        if let Err(m) = &self.h4 {
            return Some(format!("H4 ({m})"));
        }
        if !self.contraction_ok {
            return Some("contraction integral".into());
        }
        None
    }

    pub fn all_ok(&self) -> bool {
        self.first_failure().is_none()
    }

    pub fn k(&self) -> Option<GridFunction> {
        self.h4.as_ref().ok().and_then(|r| r.k().ok())
    }

    pub fn l(&self) -> Option<GridFunction> {
        self.h4.as_ref().ok().and_then(|r| r.l().ok())
    }

    pub fn summary(&self) -> HypothesisSummary {
        let max_of = |g: &GridFunction| g.min_max().1;
        let min_of = |g: &GridFunction| g.min_max().0;
        let h4 = self.h4.as_ref().ok();
        HypothesisSummary {
            all_ok: self.all_ok(),
            first_failure: self.first_failure(),
            lower_upper: self.lower_upper.clone(),
            h1_ok: self.monotonicity_witness.is_none(),
            psi_max: self.psi_max,
            window_ok: self.window_ok,
            window_min: self.window.iter().map(|w| w.0).fold(f64::INFINITY, f64::min),
            window_max: self.window.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max),
            h4_ok: self.h4.is_ok(),
            h4_supplied: h4.map(|r| r.supplied).unwrap_or(false),
            h4_message: self.h4.as_ref().err().cloned(),
            k1: h4.map(|r| min_of(&r.k1)),
            k2: h4.map(|r| min_of(&r.k2)),
            l1: h4.map(|r| max_of(&r.l1)),
            l2: h4.map(|r| max_of(&r.l2)),
            contraction_value: self.contraction_value,
            contraction_ok: self.contraction_ok,
        }
    }

    pub fn render_text(&self) -> String {
        let s = self.summary();
        let lu = &s.lower_upper;
        let flag = |ok: bool| if ok { "pass" } else { "FAIL" };
        let mut out = String::new();
        let _ = writeln!(out, "hypothesis report");
        let _ = writeln!(out, "  range [min alpha, max beta] = [{:.6}, {:.6}]", lu.range.0, lu.range.1);
        let _ = writeln!(
            out,
            "  lower solution: {} (min slack {:.3e} at t = {:.6}, tail slack {:.3e}, {} midpoints)",
            flag(lu.lower_ok),
            lu.lower_slack,
            lu.lower_worst_t,
            lu.tail_lower_slack,
            lu.midpoints
        );
        let _ = writeln!(
            out,
            "  upper solution: {} (min slack {:.3e} at t = {:.6}, tail slack {:.3e})",
            flag(lu.upper_ok),
            lu.upper_slack,
            lu.upper_worst_t,
            lu.tail_upper_slack
        );
        let _ = writeln!(out, "  H1 monotone decomposition: {}", flag(s.h1_ok));
        if let Some(w) = &self.monotonicity_witness {
            let _ = writeln!(out, "    witness: {w}");
        }
        let _ = writeln!(out, "  H3 bound: sup psi = {:.6}", s.psi_max);
        let _ = writeln!(out, "  window W(t) spans [{:.6}, {:.6}]", s.window_min, s.window_max);
        if let Some(ok) = s.window_ok {
            let _ = writeln!(out, "  stated H4 window contains W(t): {}", flag(ok));
        }
        match (&self.h4, s.k1, s.k2, s.l1, s.l2) {
            (Ok(r), Some(k1), Some(k2), Some(l1), Some(l2)) => {
                let _ = writeln!(
                    out,
                    "  H4: pass ({}; K1 = {k1}, K2 = {k2}, L1 = {l1}, L2 = {l2}; {} sampled inequalities)",
                    if r.supplied { "supplied" } else { "estimated" },
                    r.checked_quadruples
                );
            }
            (Err(m), ..) => {
                let _ = writeln!(out, "  H4: FAIL ({m})");
            }
            _ => {}
        }
        match s.contraction_value {
            Some(v) => {
                let _ = writeln!(out, "  contraction integral = {v:.10} ({})", flag(s.contraction_ok));
            }
            None => {
                let _ = writeln!(out, "  contraction integral: not available");
            }
        }
        let _ = writeln!(
            out,
            "  overall: {}",
            match &s.first_failure {
                None => "pass".to_string(),
                Some(f) => format!("FAIL ({f})"),
            }
        );
        out
    }
}

/// Runs every check. Errors only for hard failures (band not ordered, band
/// outside `J`, evaluation failures); soft failures are recorded in the report.
pub fn check_hypotheses(spec: &ProblemSpec, opts: &SolveOptions) -> Result<HypothesisReport> {
    let lower_upper = check_lower_upper(spec, opts.grid)?;
    let disc = spec.discretize(opts.grid)?;
    let monotonicity_witness = audit_monotonicity(spec, 10_000, opts.seed)?;
    let psi = compute_psi_on(spec, &disc, opts.psi_samples)?;
    let psi_max = psi.min_max().1;
    let window = y_window(&disc, &psi);
    let window_ok = spec.h4.window.map(|w| verify_window(&disc, &psi, w));
    let h4 = match estimate_h4(spec, &disc, &psi, opts.h4_samples) {
        Ok(r) => Ok(r),
        Err(e @ (Error::H4Violation(_) | Error::Precondition(_))) => Err(e.to_string()),
        Err(e) => return Err(e),
    };
    let (contraction_value, contraction_ok) = match &h4 {
        Ok(r) => match check_contraction(&r.k()?, &r.l()?) {
            Ok((v, ok)) => (Some(v), ok),
            Err(_) => (None, false),
        },
        Err(_) => (None, false),
    };
    Ok(HypothesisReport {
        lower_upper,
        monotonicity_witness,
        psi,
        psi_max,
        window,
        window_ok,
        h4,
        contraction_value,
        contraction_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    fn zero_problem() -> ProblemSpec {
        ProblemSpec {
            a: 0.0,
            b: 1.0,
            r: 0.5,
            tau: AdvanceMap::parse("t + 0.5").unwrap(),
            phi: TimeFunction::constant(0.0),
            rhs: RhsDecomposition::split(YFunction::zero(), YFunction::zero()),
            alpha: TimeFunction::constant(0.0),
            beta: TimeFunction::constant(0.0),
            window_j: (-1.0, 1.0),
            h4: H4Input::default(),
        }
    }

    #[test]
    fn zero_problem_passes_with_zero_residuals() {
        let rep = check_lower_upper(&zero_problem(), 64).unwrap();
        assert!(rep.lower_ok && rep.upper_ok);
        assert_eq!(rep.lower_slack, 0.0);
        assert_eq!(rep.upper_slack, 0.0);
        let psi = compute_psi(&zero_problem(), 64, 5).unwrap();
        assert!(psi.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unordered_band_is_rejected() {
        let mut p = zero_problem();
        p.alpha = TimeFunction::constant(1.0);
        assert!(matches!(check_lower_upper(&p, 16), Err(Error::NotOrdered { .. })));
    }

    #[test]
    fn band_outside_j_is_rejected() {
        let mut p = zero_problem();
        p.beta = TimeFunction::constant(3.0);
        assert!(matches!(check_lower_upper(&p, 16), Err(Error::WindowViolation { .. })));
    }

    #[test]
    fn paper_case_one_slack() {
        let spec = builtin::paper_problem().unwrap();
        let n = 4096;
        let rep = check_lower_upper(&spec, n).unwrap();
        assert!(rep.lower_ok && rep.upper_ok, "{rep:?}");
        // In the band where pi/2 - 4t lies in (1, 2], the lower inequality reads
        // 1 >= 3(pi/2 - 4t)/10 - 1/10.
        let grid = spec.grid(n).unwrap();
        let i = 100;
        let tm = 0.5 * (grid.node(i) + grid.node(i + 1));
        let beta4 = std::f64::consts::FRAC_PI_2 - 4.0 * tm;
        assert!(beta4 > 1.0 && beta4 <= 2.0);
        let rhs = spec.rhs.coupled(tm, spec.alpha.eval(tm).unwrap(), beta4, -beta4).unwrap();
        assert!((rhs - (0.3 * beta4 - 0.1)).abs() < 1e-12);
        assert!(1.0 - rhs > 0.0);
    }

    #[test]
    fn contraction_examples() {
        let g = Grid::new(0.0, std::f64::consts::PI / 8.0, 0.0, 256).unwrap();
        let k = GridFunction::constant(g.clone(), 0.0).unwrap();
        let l = GridFunction::constant(g.clone(), 0.1).unwrap();
        let (v, ok) = check_contraction(&k, &l).unwrap();
        assert!((v - std::f64::consts::PI / 80.0).abs() < 1e-15 && ok);
        let (v, ok) = check_contraction(&k, &k).unwrap();
        assert!(v == 0.0 && ok);

        let g1 = Grid::new(0.0, 1.0, 0.0, 10).unwrap();
        let k = GridFunction::constant(g1.clone(), -2.0).unwrap();
        let z = GridFunction::constant(g1.clone(), 0.0).unwrap();
        let (v, ok) = check_contraction(&k, &z).unwrap();
        assert!((v - 2.0).abs() < 1e-14 && !ok);
        let neg = GridFunction::constant(g1, -0.1).unwrap();
        assert!(matches!(check_contraction(&z, &neg), Err(Error::Precondition(_))));
    }

    #[test]
    fn window_examples() {
        let spec = zero_problem();
        let disc = spec.discretize(32).unwrap();
        let psi = GridFunction::constant(disc.grid.clone(), 0.0).unwrap();
        assert!(verify_window(&disc, &psi, (0.0, 0.0)));
        let psi10 = GridFunction::constant(disc.grid.clone(), 10.0).unwrap();
        assert!(!verify_window(&disc, &psi10, (-1.0, 1.0)));
    }

    #[test]
    fn h4_estimates_exact_slopes() {
        let mut p = zero_problem();
        p.rhs = RhsDecomposition::split(YFunction::Expr(Expr::parse("x").unwrap()), YFunction::zero());
        p.alpha = TimeFunction::constant(-0.5);
        p.beta = TimeFunction::constant(0.5);
        let disc = p.discretize(16).unwrap();
        let psi = compute_psi_on(&p, &disc, 5).unwrap();
        let rep = estimate_h4(&p, &disc, &psi, 6).unwrap();
        assert!((rep.k1.value(0) - 1.0).abs() < 1e-12);
        assert_eq!(rep.l1.value(0), 0.0);

        p.rhs = RhsDecomposition::split(YFunction::Expr(Expr::parse("y/10").unwrap()), YFunction::zero());
        let psi = compute_psi_on(&p, &disc, 5).unwrap();
        let rep = estimate_h4(&p, &disc, &psi, 6).unwrap();
        assert!((rep.l1.value(3) - 0.1).abs() < 1e-12);
        assert!(rep.k1.value(3).abs() < 1e-12);
    }

    #[test]
    fn supplied_h4_violation_has_witness() {
        let mut p = zero_problem();
        p.rhs = RhsDecomposition::split(YFunction::Expr(Expr::parse("y").unwrap()), YFunction::zero());
        p.alpha = TimeFunction::constant(-0.5);
        p.beta = TimeFunction::constant(0.5);
        p.h4.constants = Some([
            TimeFunction::constant(0.0),
            TimeFunction::constant(0.0),
            TimeFunction::constant(0.1),
            TimeFunction::constant(0.0),
        ]);
        let disc = p.discretize(16).unwrap();
        let psi = compute_psi_on(&p, &disc, 5).unwrap();
        match estimate_h4(&p, &disc, &psi, 6) {
            Err(Error::H4Violation(w)) => assert!(w.contains("g at t")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn removable_singularity_is_filled() {
        let phi = TimeFunction::parse("(t - 1)*sin(1/(t - 1))").unwrap();
        assert!(phi.eval(1.0).unwrap().abs() < 1e-8);
    }
}
