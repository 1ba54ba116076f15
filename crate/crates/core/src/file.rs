//! JSON problem files.
//!
//! ```json
//! {
//!   "interval": { "a": 0, "b": "pi/8", "r": "3*pi/8" },
//!   "tau": "4*t",
//!   "phi": "(1/2)*(t - pi/2)*sin(1/(t - pi/2))",
//!   "alpha": "t - pi/2",
//!   "beta": "pi/2 - t",
//!   "J": [-2, 2],
//!   "rhs": { "f": { "cells": [ { "cell": "[-2, 2]", "expr": "y/10" } ] }, "base_point": -2 },
//!   "h4": { "K1": "0", "K2": "0", "L1": "1/10", "L2": "0", "window": [-1, 1] },
//!   "options": { "grid": 4096, "tol": 1e-8 }
//! }
//! ```
//!
//! Scalars are numbers or constant expressions. A piecewise function is an
//! ordered list of cells written as intervals with `[`/`(` brackets; every
//! breakpoint must be closed by exactly one cell, a degenerate cell `[c, c]`,
//! or (for the right end) by `closing`.

use serde::{Deserialize, Serialize};

use crate::bv::{NodeRule, PiecewiseFunction};
use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::grid::AdvanceMap;
use crate::problem::{H4Input, ProblemSpec, RhsDecomposition, SolveOptions, TimeFunction, YFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Num(f64),
    Expr(String),
}

impl Scalar {
    pub fn value(&self, field: &str) -> Result<f64> {
        match self {
            Scalar::Num(v) if v.is_finite() => Ok(*v),
            Scalar::Num(_) => Err(invalid(field, "not finite")),
            Scalar::Expr(s) => Expr::parse(s)
                .and_then(|e| e.eval_const())
                .map_err(|e| invalid(field, &e.to_string())),
        }
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Num(v)
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Expr(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalSpec {
    pub a: Scalar,
    pub b: Scalar,
    pub r: Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub cell: String,
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var: Option<String>,
    pub cells: Vec<CellSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closing: Option<Scalar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FnSpec {
    Expr(String),
    Piecewise(PiecewiseSpec),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<FnSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<FnSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<FnSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_point: Option<Scalar>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_window: Option<[Scalar; 2]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct H4Spec {
    #[serde(rename = "K1", default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<String>,
    #[serde(rename = "K2", default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<String>,
    #[serde(rename = "L1", default, skip_serializing_if = "Option::is_none")]
    pub l1: Option<String>,
    #[serde(rename = "L2", default, skip_serializing_if = "Option::is_none")]
    pub l2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[Scalar; 2]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h4_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub interval: IntervalSpec,
    pub tau: String,
    pub phi: String,
    pub alpha: String,
    pub beta: String,
    #[serde(rename = "J")]
    pub j: [Scalar; 2],
    pub rhs: RhsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h4: Option<H4Spec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<OptionsSpec>,
}

fn invalid(field: &str, message: &str) -> Error {
    Error::InvalidField { field: field.to_string(), message: message.to_string() }
}

/// Parses and checks the variables an expression may use.
fn parse_expr(field: &str, src: &str, allowed: &[Var]) -> Result<Expr> {
    let e = Expr::parse(src).map_err(|e| invalid(field, &e.to_string()))?;
    if let Some(v) = e.free_vars().into_iter().find(|v| !allowed.contains(v)) {
        return Err(invalid(field, &format!("unknown identifier `{}` here", v.name())));
    }
    Ok(e)
}

/// `"[lo, hi)"` into `(lo_closed, lo, hi, hi_closed)`.
fn parse_cell(field: &str, s: &str) -> Result<(bool, f64, f64, bool)> {
    let s = s.trim();
    let bad = || invalid(field, &format!("expected an interval like \"[lo, hi)\", got {s:?}"));
    let lo_closed = match s.chars().next() {
        Some('[') => true,
        Some('(') => false,
        _ => return Err(bad()),
    };
    let hi_closed = match s.chars().last() {
        Some(']') => true,
        Some(')') => false,
        _ => return Err(bad()),
    };
    let inner = &s[1..s.len() - 1];
    let (l, h) = inner.split_once(',').ok_or_else(bad)?;
    let lo = Scalar::Expr(l.trim().to_string()).value(field)?;
    let hi = Scalar::Expr(h.trim().to_string()).value(field)?;
    if lo > hi || (lo == hi && !(lo_closed && hi_closed)) {
        return Err(invalid(field, &format!("empty interval {s:?}")));
    }
    Ok((lo_closed, lo, hi, hi_closed))
}

fn claim(field: &str, breakpoints: &[f64], rules: &mut [Option<NodeRule>], i: usize, rule: NodeRule) -> Result<()> {
    if rules[i].is_some() {
        return Err(invalid(field, &format!("breakpoint {} is closed twice", breakpoints[i])));
    }
    rules[i] = Some(rule);
    Ok(())
}

impl PiecewiseSpec {
    pub fn to_function(&self, field: &str) -> Result<PiecewiseFunction> {
        let var = match self.var.as_deref() {
            None | Some("y") => Var::Y,
            Some("t") => Var::T,
            Some("x") => Var::X,
            Some(other) => return Err(invalid(field, &format!("unknown variable `{other}`"))),
        };
        let mut breakpoints: Vec<f64> = Vec::new();
        let mut pieces = Vec::new();
        let mut rules: Vec<Option<NodeRule>> = Vec::new();
        for (k, c) in self.cells.iter().enumerate() {
            let cf = format!("{field}.cells[{k}]");
            let (lc, lo, hi, hc) = parse_cell(&cf, &c.cell)?;
            let expr = parse_expr(&format!("{cf}.expr"), &c.expr, &[Var::T, Var::X, Var::Y])?;
            match breakpoints.last() {
                None => {
                    breakpoints.push(lo);
                    rules.push(None);
                }
                Some(&last) if last != lo => {
                    return Err(invalid(&cf, &format!("cell starts at {lo}, previous cell ends at {last}")));
                }
                _ => {}
            }
            let i = breakpoints.len() - 1;
            if lo == hi {
                let v = expr.eval_const().map_err(|e| invalid(&cf, &e.to_string()))?;
                claim(field, &breakpoints, &mut rules, i, NodeRule::Value(v))?;
                continue;
            }
            breakpoints.push(hi);
            rules.push(None);
            pieces.push(expr);
            if lc {
                claim(field, &breakpoints, &mut rules, i, NodeRule::Right)?;
            }
            if hc {
                claim(field, &breakpoints, &mut rules, i + 1, NodeRule::Left)?;
            }
        }
        if pieces.is_empty() {
            return Err(invalid(field, "needs at least one nondegenerate cell"));
        }
        let last = rules.len() - 1;
        if let Some(c) = &self.closing {
            let v = c.value(&format!("{field}.closing"))?;
            claim(field, &breakpoints, &mut rules, last, NodeRule::Value(v))?;
        }
        let rules = rules
            .into_iter()
            .zip(&breakpoints)
            .map(|(r, b)| r.ok_or_else(|| invalid(field, &format!("no cell contains the breakpoint {b}"))))
            .collect::<Result<Vec<_>>>()?;
        PiecewiseFunction::new(var, breakpoints, pieces, rules)
    }
}

impl FnSpec {
    fn to_y_function(&self, field: &str) -> Result<YFunction> {
        match self {
            FnSpec::Expr(s) => Ok(YFunction::Expr(parse_expr(field, s, &[Var::T, Var::X, Var::Y])?)),
            FnSpec::Piecewise(p) => Ok(YFunction::Piecewise(p.to_function(field)?)),
        }
    }
}

fn pair(field: &str, p: &[Scalar; 2]) -> Result<(f64, f64)> {
    let lo = p[0].value(&format!("{field}[0]"))?;
    let hi = p[1].value(&format!("{field}[1]"))?;
    if lo > hi {
        return Err(invalid(field, "lower end exceeds upper end"));
    }
    Ok((lo, hi))
}

fn time_fn(field: &str, src: &str) -> Result<TimeFunction> {
    Ok(TimeFunction::Expr(parse_expr(field, src, &[Var::T])?))
}

/// Parses a problem file; JSON syntax errors and missing fields carry line and column.
pub fn parse_problem(text: &str) -> Result<ProblemFile> {
    serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        let message = match message.rfind(" at line ") {
            Some(i) => message[..i].to_string(),
            None => message,
        };
        Error::Parse { line: e.line(), column: e.column(), message }
    })
}

impl ProblemFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    pub fn options(&self) -> Result<SolveOptions> {
        let mut o = SolveOptions::default();
        let Some(s) = &self.options else { return Ok(o) };
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(invalid(&format!("options.{name}"), "must be positive"))
            } else {
                Ok(v)
            }
        };
        if let Some(v) = s.grid {
            o.grid = positive("grid", v)?;
        }
        if let Some(v) = s.tol {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid("options.tol", "must be positive"));
            }
            o.tol = v;
        }
        if let Some(v) = s.max_iter {
            o.max_iter = positive("max_iter", v)?;
        }
        if let Some(v) = s.seed {
            o.seed = v;
        }
        if let Some(v) = s.psi_samples {
            o.psi_samples = positive("psi_samples", v)?;
        }
        if let Some(v) = s.h4_samples {
            o.h4_samples = positive("h4_samples", v)?;
        }
        Ok(o)
    }

    /// The right-hand side `f` as a function of `y` when the file gives it whole.
    pub fn whole_f(&self) -> Result<Option<(PiecewiseFunction, f64)>> {
        let Some(f) = &self.rhs.f else { return Ok(None) };
        let j = pair("J", &self.j)?;
        let func = match f {
            FnSpec::Piecewise(p) => p.to_function("rhs.f")?,
            FnSpec::Expr(s) => {
                let (lo, hi) = match &self.rhs.y_window {
                    Some(w) => pair("rhs.y_window", w)?,
                    None => j,
                };
                PiecewiseFunction::single(Var::Y, parse_expr("rhs.f", s, &[Var::T, Var::X, Var::Y])?, lo, hi)?
            }
        };
        let base = match &self.rhs.base_point {
            Some(b) => b.value("rhs.base_point")?,
            None => func.domain().0,
        };
        Ok(Some((func, base)))
    }

    pub fn to_spec(&self) -> Result<ProblemSpec> {
        let a = self.interval.a.value("interval.a")?;
        let b = self.interval.b.value("interval.b")?;
        let r = self.interval.r.value("interval.r")?;
        if !(a < b) {
            return Err(invalid("interval", "need a < b"));
        }
        if r < 0.0 {
            return Err(invalid("interval.r", "must be nonnegative"));
        }
        let rhs = match (&self.rhs.g, &self.rhs.h, self.whole_f()?) {
            (Some(g), Some(h), None) => RhsDecomposition::split(g.to_y_function("rhs.g")?, h.to_y_function("rhs.h")?),
            (None, None, Some((f, base))) => RhsDecomposition::whole(f, base)?,
            (None, None, None) => return Err(Error::MissingField("rhs.f (or rhs.g and rhs.h)".into())),
            (Some(_), None, None) => return Err(Error::MissingField("rhs.h".into())),
            (None, Some(_), None) => return Err(Error::MissingField("rhs.g".into())),
            _ => return Err(invalid("rhs", "give either f or both g and h")),
        };
        let h4 = match &self.h4 {
            None => H4Input::default(),
            Some(s) => {
                let constants = match (&s.k1, &s.k2, &s.l1, &s.l2) {
                    (None, None, None, None) => None,
                    (Some(k1), Some(k2), Some(l1), Some(l2)) => Some([
                        time_fn("h4.K1", k1)?,
                        time_fn("h4.K2", k2)?,
                        time_fn("h4.L1", l1)?,
                        time_fn("h4.L2", l2)?,
                    ]),
                    _ => return Err(invalid("h4", "give all of K1, K2, L1, L2 or none")),
                };
                let window = s.window.as_ref().map(|w| pair("h4.window", w)).transpose()?;
                H4Input { constants, window }
            }
        };
        Ok(ProblemSpec {
            a,
            b,
            r,
            tau: AdvanceMap::new(parse_expr("tau", &self.tau, &[Var::T])?),
            phi: time_fn("phi", &self.phi)?,
            rhs,
            alpha: time_fn("alpha", &self.alpha)?,
            beta: time_fn("beta", &self.beta)?,
            window_j: pair("J", &self.j)?,
            h4,
        })
    }
}
