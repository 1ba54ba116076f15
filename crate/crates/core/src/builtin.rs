//! The worked example: `x'(t) = f(x(4t))` on `[0, pi/8]` with final data on `[pi/8, pi/2]`.

use crate::error::Result;
use crate::file::{CellSpec, FnSpec, H4Spec, IntervalSpec, OptionsSpec, PiecewiseSpec, ProblemFile, RhsSpec, Scalar};
use crate::problem::ProblemSpec;

fn cell(cell: &str, expr: &str) -> CellSpec {
    CellSpec { cell: cell.into(), expr: expr.into() }
}

/// The odd sawtooth `f` restricted to `[-2, 2]`.
pub fn paper_f() -> PiecewiseSpec {
    PiecewiseSpec {
        var: None,
        cells: vec![
            cell("[-2, -1)", "-3/10 - y/10"),
            cell("[-1, 1]", "y/10"),
            cell("(1, 2]", "3/10 - y/10"),
        ],
        closing: None,
    }
}

pub fn paper_file() -> ProblemFile {
    ProblemFile {
        interval: IntervalSpec { a: Scalar::Num(0.0), b: "pi/8".into(), r: "3*pi/8".into() },
        tau: "4*t".into(),
        phi: "(1/2)*(t - pi/2)*sin(1/(t - pi/2))".into(),
        alpha: "t - pi/2".into(),
        beta: "pi/2 - t".into(),
        j: [Scalar::Num(-2.0), Scalar::Num(2.0)],
        rhs: RhsSpec {
            f: Some(FnSpec::Piecewise(paper_f())),
            base_point: Some(Scalar::Num(-2.0)),
            ..RhsSpec::default()
        },
        h4: Some(H4Spec {
            k1: Some("0".into()),
            k2: Some("0".into()),
            l1: Some("1/10".into()),
            l2: Some("0".into()),
            window: Some([Scalar::Num(-1.0), Scalar::Num(1.0)]),
        }),
        options: Some(OptionsSpec { grid: Some(4096), tol: Some(1e-8), max_iter: Some(50), ..OptionsSpec::default() }),
    }
}

pub fn paper_problem() -> Result<ProblemSpec> {
    paper_file().to_spec()
}
