//! Coupled monotone iteration for the extremal quasisolutions, the discrete
//! maximum principle, and an independent method-of-steps solver.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fvp::{Extremal, FvpOptions, ScalarFvp};
use crate::grid::{cumulative_to_end, GridFunction};
use crate::problem::{check_contraction, compute_psi_on, Discretization, ProblemSpec};

const SANDWICH_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub gap: f64,
    pub change_v: f64,
    pub change_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    /// `(v_n, w_n)` for `n = 0, 1, ...`, starting from `(alpha, beta)`.
    pub iterates: Vec<(GridFunction, GridFunction)>,
    pub stats: Vec<IterationStats>,
}

impl IterationTrace {
    pub fn gaps(&self) -> Vec<f64> {
        self.stats.iter().map(|s| s.gap).collect()
    }

    /// Rows `iteration,node,v,w`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "node", "v", "w"])?;
        for (n, (v, u)) in self.iterates.iter().enumerate() {
            for i in 0..v.values().len() {
                w.write_record(&[n.to_string(), i.to_string(), v.value(i).to_string(), u.value(i).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `v_n <= v_{n+1} <= w_{n+1} <= w_n` at every step, within the slack.
    pub fn sandwich_holds(&self) -> bool {
        self.iterates.windows(2).all(|p| sandwich_violation(&p[0], &p[1]).is_none())
            && self.iterates.iter().all(|(v, w)| v.values().iter().zip(w.values()).all(|(a, b)| *a <= b + SANDWICH_SLACK))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasisolutionPair {
    pub lower: GridFunction,
    pub upper: GridFunction,
    pub is_solution: bool,
    pub iterations: usize,
    pub gap: f64,
}

fn sandwich_violation(prev: &(GridFunction, GridFunction), next: &(GridFunction, GridFunction)) -> Option<(usize, String)> {
    let (v0, w0) = prev;
    let (v1, w1) = next;
    for i in 0..v0.values().len() {
        let (a, b, c, d) = (v0.value(i), v1.value(i), w1.value(i), w0.value(i));
        if a > b + SANDWICH_SLACK {
            return Some((i, format!("v decreased: {a} -> {b}")));
        }
        if b > c + SANDWICH_SLACK {
            return Some((i, format!("v above w: {b} > {c}")));
        }
        if c > d + SANDWICH_SLACK {
            return Some((i, format!("w increased: {d} -> {c}")));
        }
    }
    None
}

/// One application of the coupled operator:
/// `v' = least solution of x' = g(t, x, w(tau)) + h(t, x, v(tau))`,
/// `w' = greatest solution of x' = g(t, x, v(tau)) + h(t, x, w(tau))`,
/// both extended by `phi` on the tail.
pub fn coupled_step(
    spec: &ProblemSpec,
    disc: &Discretization,
    v: &GridFunction,
    w: &GridFunction,
    opts: FvpOptions,
) -> Result<(GridFunction, GridFunction)> {
    let grid = &disc.grid;
    let v_tau = v.compose_sampled(&disc.taus)?;
    let w_tau = w.compose_sampled(&disc.taus)?;
    let x_dep = spec.rhs.depends_on_x();
    let (lo, hi) = (disc.alpha().values(), disc.beta().values());
    let solve = |up: &GridFunction, down: &GridFunction, which: Extremal| -> Result<GridFunction> {
        let rhs = |i: usize, x: f64| spec.rhs.coupled(grid.node(i), x, up.value(i), down.value(i));
        let mut p = ScalarFvp::new(grid, lo, hi, disc.phi_b(), rhs)?;
        if !x_dep {
            p = p.independent_of_x();
        }
        let s = p.solve_extremal(which, opts)?;
        disc.extend_by_phi(s.values)
    };
    let (nv, nw) = rayon::join(
        || solve(&w_tau, &v_tau, Extremal::Least),
        || solve(&v_tau, &w_tau, Extremal::Greatest),
    );
    Ok((nv?, nw?))
}

/// Iterates from `(alpha, beta)` until the gap closes (a solution) or both
/// iterates stall (a pair of quasisolutions).
pub fn iterate_coupled(
    spec: &ProblemSpec,
    disc: &Discretization,
    tol: f64,
    max_iter: usize,
) -> Result<(QuasisolutionPair, IterationTrace)> {
    let fvp_opts = FvpOptions { tol, max_iter: 200 };
    let start = (disc.extend_by_phi(disc.alpha().values().to_vec())?, disc.extend_by_phi(disc.beta().values().to_vec())?);
    let mut trace = IterationTrace { iterates: vec![start], stats: Vec::new() };
    for it in 1..=max_iter {
        let (v, w) = trace.iterates.last().expect("nonempty").clone();
        let next = coupled_step(spec, disc, &v, &w, fvp_opts)?;
        if let Some((i, detail)) = sandwich_violation(&(v.clone(), w.clone()), &next) {
            return Err(Error::MonotoneBreak { iteration: it, t: disc.grid.node(i), detail });
        }
        let gap = next.0.sup_distance(&next.1)?;
        let change_v = next.0.sup_distance(&v)?;
        let change_w = next.1.sup_distance(&w)?;
        trace.stats.push(IterationStats { iteration: it, gap, change_v, change_w });
        let stalled = change_v < tol / 10.0 && change_w < tol / 10.0;
        let (lower, upper) = next.clone();
        trace.iterates.push(next);
        if gap < tol || stalled {
            let pair = QuasisolutionPair { lower, upper, is_solution: gap < tol, iterations: it, gap };
            return Ok((pair, trace));
        }
    }
    let change = trace.stats.last().map(|s| s.change_v.max(s.change_w)).unwrap_or(f64::INFINITY);
    Err(Error::NonConvergence { iterations: max_iter, change })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasisolutionResidual {
    /// `max |x_* - phi(b) + int_t^b (g(x_*, x^*(tau)) + h(x_*, x_*(tau)))|` at the nodes.
    pub lower: f64,
    /// The mirrored line for `x^*`.
    pub upper: f64,
    pub tail_exact: bool,
    pub ordered: bool,
    pub in_band: bool,
}

impl QuasisolutionResidual {
    pub fn within(&self, tol: f64) -> bool {
        self.lower <= tol && self.upper <= tol && self.tail_exact && self.ordered && self.in_band
    }
}

/// Integral-form residuals of the quasisolution system (trapezoid quadrature).
pub fn check_quasisolution(spec: &ProblemSpec, disc: &Discretization, lower: &GridFunction, upper: &GridFunction) -> Result<QuasisolutionResidual> {
    let grid = &disc.grid;
    let n = grid.n_sub();
    let lo_tau = lower.compose_sampled(&disc.taus)?;
    let up_tau = upper.compose_sampled(&disc.taus)?;
    let line = |x: &GridFunction, up: &GridFunction, down: &GridFunction| -> Result<f64> {
        let f = (0..=n)
            .map(|i| spec.rhs.coupled(grid.node(i), x.value(i), up.value(i), down.value(i)))
            .collect::<Result<Vec<_>>>()?;
        let tail = cumulative_to_end(&f, grid.spacing());
        Ok((0..=n).map(|i| (x.value(i) - disc.phi_b() + tail[i]).abs()).fold(0.0, f64::max))
    };
    let tail_exact = grid
        .tail_range()
        .enumerate()
        .all(|(j, i)| lower.value(i) == disc.phi_tail[j] && upper.value(i) == disc.phi_tail[j]);
    let in_band = (0..=n).all(|i| {
        lower.value(i) >= disc.alpha().value(i) - 1e-8 && upper.value(i) <= disc.beta().value(i) + 1e-8
    });
    Ok(QuasisolutionResidual {
        lower: line(lower, &up_tau, &lo_tau)?,
        upper: line(upper, &lo_tau, &up_tau)?,
        tail_exact,
        ordered: lower.leq(upper)?,
        in_band,
    })
}

/// `sum_i h |(x_{i+1} - x_i)/h - (f_i + f_{i+1})/2|` with `f = f(t, x, x(tau))`.
pub fn forward_residual(spec: &ProblemSpec, disc: &Discretization, x: &GridFunction) -> Result<f64> {
    let grid = &disc.grid;
    let n = grid.n_sub();
    let h = grid.spacing();
    let xt = x.compose_sampled(&disc.taus)?;
    let f = (0..=n).map(|i| spec.rhs.f(grid.node(i), x.value(i), xt.value(i))).collect::<Result<Vec<_>>>()?;
    Ok((0..n).map(|i| h * ((x.value(i + 1) - x.value(i)) / h - 0.5 * (f[i] + f[i + 1])).abs()).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxPrincipleOutcome {
    pub holds: bool,
    pub max_p: f64,
    pub witness_node: Option<usize>,
}

/// Discrete form of the maximum principle: under the contraction condition,
/// `p = 0` on the tail and `p' >= K p - L p(tau)` (trapezoid form, within
/// `tol`), the result reports whether `p <= tol` everywhere.
pub fn max_principle_check(
    k: &GridFunction,
    l: &GridFunction,
    taus: &[f64],
    p: &GridFunction,
    tol: f64,
) -> Result<MaxPrincipleOutcome> {
    let grid = p.grid();
    if !grid.same_as(k.grid()) || !grid.same_as(l.grid()) {
        return Err(Error::GridMismatch);
    }
    let (value, ok) = check_contraction(k, l)?;
    if !ok {
        return Err(Error::Precondition(format!("contraction integral {value} >= 1")));
    }
    if let Some(i) = grid.tail_range().find(|&i| p.value(i).abs() > tol) {
        return Err(Error::Precondition(format!("p does not vanish on the tail (t = {})", grid.node(i))));
    }
    let pt = p.compose_sampled(taus)?;
    let h = grid.spacing();
    let q = |i: usize| k.value(i) * p.value(i) - l.value(i) * pt.value(i);
    for i in 0..grid.n_sub() {
        let dp = (p.value(i + 1) - p.value(i)) / h;
        if dp < 0.5 * (q(i) + q(i + 1)) - tol {
            return Err(Error::Precondition(format!("differential inequality fails at t = {}", grid.node(i))));
        }
    }
    let (idx, max_p) = p
        .values()
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let holds = max_p <= tol;
    Ok(MaxPrincipleOutcome { holds, max_p, witness_node: if holds { None } else { Some(idx) } })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub x: GridFunction,
    /// `b = t_0 > t_1 > ...`, each `t_{k+1} = inf { t : tau(t) >= t_k }`.
    pub levels: Vec<f64>,
    /// Bound on the error from closing `[a, t_last]` with one Euler step.
    pub closing_bound: f64,
}

const MAX_LEVELS: usize = 10_000;

/// Dense backward samples `(t, x, x')`, kept in decreasing `t`.
struct Known<'a> {
    spec: &'a ProblemSpec,
    b: f64,
    pts: Vec<(f64, f64, f64)>,
}

impl Known<'_> {
    fn at(&self, s: f64) -> Result<f64> {
        if s >= self.b {
            return self.spec.phi.eval(s);
        }
        let last = self.pts.last().expect("samples present below b");
        let s = s.max(last.0);
        // first index with t <= s
        let j = self.pts.partition_point(|p| p.0 > s);
        if j == 0 {
            return Ok(self.pts[0].1);
        }
        let (t1, x1, d1) = self.pts[j - 1];
        let (t0, x0, d0) = self.pts[j.min(self.pts.len() - 1)];
        let len = t1 - t0;
        if len <= 0.0 {
            return Ok(x0);
        }
        let u = (s - t0) / len;
        let (u2, u3) = (u * u, u * u * u);
        Ok((2.0 * u3 - 3.0 * u2 + 1.0) * x0
            + (u3 - 2.0 * u2 + u) * len * d0
            + (-2.0 * u3 + 3.0 * u2) * x1
            + (u3 - u2) * len * d1)
    }
}

/// Method of steps for an expansive advance: each level `[t_{k+1}, t_k]`
/// only reads values already computed on `[t_k, b + r]`.
pub fn steps_oracle(spec: &ProblemSpec, disc: &Discretization) -> Result<OracleSolution> {
    let grid = &disc.grid;
    let (a, b, n, h) = (grid.a(), grid.b(), grid.n_sub(), grid.spacing());
    let taus = &disc.taus;
    if taus.windows(2).any(|w| w[1] < w[0] - 1e-12) {
        return Err(Error::NotApplicable("tau is not nondecreasing".into()));
    }
    if let Some(i) = (1..n).find(|&i| taus[i] <= grid.node(i)) {
        return Err(Error::NotApplicable(format!("tau(t) = t at t = {}", grid.node(i))));
    }
    let tau = |t: f64| spec.tau.eval(t);
    let rhs = |known: &Known, s: f64, x: f64| -> Result<f64> { spec.rhs.f(s, x, known.at(tau(s))?) };

    let mut known = Known { spec, b, pts: Vec::new() };
    let x_b = disc.phi_b();
    known.pts.push((b, x_b, 0.0));
    known.pts[0].2 = rhs(&known, b, x_b)?;
    let mut levels = vec![b];
    let mut closing_bound = 0.0;
    loop {
        let tk = *levels.last().expect("nonempty");
        if levels.len() > MAX_LEVELS {
            return Err(Error::NotApplicable(format!("more than {MAX_LEVELS} levels")));
        }
        let next = if tau(a) >= tk {
            a
        } else {
            let (mut lo, mut hi) = (a, tk);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if tau(mid) >= tk {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        if next >= tk {
            return Err(Error::NotApplicable(format!("no progress below t = {tk}")));
        }
        if next - a < h && next > a {
            // close [a, tk] by one Euler step
            let (t0, x0, d0) = *known.pts.last().expect("nonempty");
            let x_a = x0 - (t0 - a) * d0;
            let da = rhs(&known, a, x_a).unwrap_or(d0);
            known.pts.push((a, x_a, da));
            let psi = compute_psi_on(spec, disc, 9)?;
            closing_bound = psi.min_max().1 * (t0 - a);
            levels.push(a);
            break;
        }
        let len = tk - next;
        let steps = ((len / (h / 2.0).min(len / 64.0)).ceil() as usize).max(1);
        let dt = len / steps as f64;
        for k in 0..steps {
            let (s, x, _) = *known.pts.last().expect("nonempty");
            let s1 = if k + 1 == steps { next } else { tk - (k + 1) as f64 * dt };
            let d = s - s1;
            let k1 = rhs(&known, s, x)?;
            let k2 = rhs(&known, s - d / 2.0, x - d / 2.0 * k1)?;
            let k3 = rhs(&known, s - d / 2.0, x - d / 2.0 * k2)?;
            let k4 = rhs(&known, s1, x - d * k3)?;
            let x1 = x - d / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            let d1 = rhs(&known, s1, x1)?;
            known.pts.push((s1, x1, d1));
        }
        levels.push(next);
        if next <= a {
            break;
        }
    }
    let x_lo = known.pts.last().map(|p| p.0).unwrap_or(a);
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..=n {
        let t = grid.node(i);
        let v = if t >= x_lo { known.at(t)? } else { known.pts.last().expect("nonempty").1 };
        values.push(v);
    }
    values[n] = x_b;
    Ok(OracleSolution { x: disc.extend_by_phi(values)?, levels, closing_bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AdvanceMap, Grid};
    use crate::problem::{H4Input, RhsDecomposition, TimeFunction, YFunction};
    use crate::expr::Expr;

    fn constant_advance() -> ProblemSpec {
        ProblemSpec {
            a: 0.0,
            b: 1.0,
            r: 0.5,
            tau: AdvanceMap::parse("1").unwrap(),
            phi: TimeFunction::constant(1.0),
            rhs: RhsDecomposition::split(YFunction::zero(), YFunction::Expr(Expr::parse("-y").unwrap())),
            alpha: TimeFunction::constant(0.0),
            beta: TimeFunction::constant(3.0),
            window_j: (-5.0, 5.0),
            h4: H4Input::default(),
        }
    }

    #[test]
    fn constant_advance_gives_two_minus_t() {
        let spec = constant_advance();
        let disc = spec.discretize(256).unwrap();
        let (pair, trace) = iterate_coupled(&spec, &disc, 1e-8, 50).unwrap();
        assert!(pair.is_solution);
        assert!(trace.sandwich_holds());
        for i in 0..=256 {
            assert!((pair.lower.value(i) - (2.0 - disc.grid.node(i))).abs() < 1e-12);
        }
        let res = check_quasisolution(&spec, &disc, &pair.lower, &pair.upper).unwrap();
        assert!(res.within(1e-12), "{res:?}");
    }

    #[test]
    fn zero_rhs_constant_after_one_iteration() {
        let mut spec = constant_advance();
        spec.rhs = RhsDecomposition::split(YFunction::zero(), YFunction::zero());
        spec.phi = TimeFunction::constant(0.5);
        let disc = spec.discretize(64).unwrap();
        let (pair, _) = iterate_coupled(&spec, &disc, 1e-8, 10).unwrap();
        assert_eq!(pair.iterations, 1);
        assert!(pair.lower.values().iter().all(|&v| v == 0.5));
        assert!(pair.upper.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn alpha_is_not_a_quasisolution() {
        let spec = constant_advance();
        let disc = spec.discretize(64).unwrap();
        let a = disc.extend_by_phi(disc.alpha().values().to_vec()).unwrap();
        let res = check_quasisolution(&spec, &disc, &a, &a).unwrap();
        assert!(res.lower > 0.5);
    }

    #[test]
    fn max_principle_simple_cases() {
        let g = Grid::new(0.0, 1.0, 0.5, 100).unwrap();
        let taus = vec![1.0; 101];
        let zero = GridFunction::constant(g.clone(), 0.0).unwrap();
        assert!(max_principle_check(&zero, &zero, &taus, &zero, 1e-8).unwrap().holds);
        let p = GridFunction::from_fn(g.clone(), |t| if t <= 1.0 { -(1.0 - t) } else { 0.0 }).unwrap();
        assert!(max_principle_check(&zero, &zero, &taus, &p, 1e-8).unwrap().holds);
        let big = GridFunction::constant(g.clone(), 2.0).unwrap();
        assert!(matches!(max_principle_check(&zero, &big, &taus, &zero, 1e-8), Err(Error::Precondition(_))));
        let pos = GridFunction::from_fn(g, |t| if t <= 1.0 { 1.0 - t } else { 0.0 }).unwrap();
        assert!(matches!(max_principle_check(&zero, &zero, &taus, &pos, 1e-8), Err(Error::Precondition(_))));
    }

    #[test]
    fn oracle_on_constant_and_identity_advance() {
        let spec = constant_advance();
        let disc = spec.discretize(128).unwrap();
        let o = steps_oracle(&spec, &disc).unwrap();
        assert_eq!(o.levels, vec![1.0, 0.0]);
        for i in 0..=128 {
            assert!((o.x.value(i) - (2.0 - disc.grid.node(i))).abs() < 1e-12);
        }
        let mut id = constant_advance();
        id.tau = AdvanceMap::parse("t").unwrap();
        let disc = id.discretize(16).unwrap();
        assert!(matches!(steps_oracle(&id, &disc), Err(Error::NotApplicable(_))));
    }
}
