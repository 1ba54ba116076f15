mod common;

use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;
use quasisol_core::builtin;
use quasisol_core::bv::Partition;
use quasisol_core::coupled::{coupled_step, max_principle_check};
use quasisol_core::expr::{BinOp, Env, Expr, Func, Var};
use quasisol_core::fvp::{Extremal, FvpOptions, ScalarFvp};
use quasisol_core::grid::{Band, Grid, GridFunction};
use quasisol_core::lattice::{random_mixed_monotone, FiniteLattice};
use quasisol_core::problem::compute_psi_on;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-100.0f64..100.0).prop_map(Expr::Num),
        (0u32..20).prop_map(|k| Expr::Num(k as f64)),
        Just(Expr::Pi),
        prop_oneof![Just(Var::T), Just(Var::X), Just(Var::Y)].prop_map(Expr::Var),
    ];
    leaf.prop_recursive(5, 48, 2, |inner| {
        let op = prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div)];
        let func = prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Exp), Just(Func::Abs), Just(Func::Sqrt)];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (func, inner.clone()).prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
            (op, inner.clone(), inner).prop_map(|(op, l, r)| Expr::bin(op, l, r)),
        ]
    })
}

fn same_value(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a == b
}

fn paper_disc(n: usize) -> (quasisol_core::problem::ProblemSpec, quasisol_core::problem::Discretization) {
    let spec = builtin::paper_problem().unwrap();
    let disc = spec.discretize(n).unwrap();
    (spec, disc)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn printed_expressions_reparse(e in arb_expr(), t in -3.0f64..3.0, x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let once = Expr::parse(&e.to_string()).unwrap();
        let twice = Expr::parse(&once.to_string()).unwrap();
        prop_assert_eq!(&once, &twice);
        let env = Env::new(t, x, y);
        prop_assert!(same_value(e.eval(&env), once.eval(&env)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn jordan_pair_is_monotone_and_exact(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pl = common::random_pl(&mut rng);
        let (lo, hi) = pl.f.domain();
        let base = rng.gen_range(lo..=hi);
        let pair = pl.f.jordan_decompose(base).unwrap();
        let pts = common::sample_points(&mut rng, &pl, 30);
        let mut prev: Option<(f64, f64)> = None;
        for &y in &pts {
            let (g, h) = pair.eval(y).unwrap();
            prop_assert!((g + h - pl.f.eval(y).unwrap()).abs() <= 1e-12);
            if let Some((pg, ph)) = prev {
                prop_assert!(g >= pg - 1e-12);
                prop_assert!(h <= ph + 1e-12);
            }
            prev = Some((g, h));
        }
        let (g_base, _) = pair.eval(base).unwrap();
        prop_assert!(g_base.abs() <= 1e-12);
    }

    #[test]
    fn variation_grows_under_refinement(seed in any::<u64>(), n in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pl = common::random_pl(&mut rng);
        let (lo, hi) = pl.f.domain();
        let p = Partition::new(common::sample_points(&mut rng, &pl, 10)).unwrap();
        let q = Partition::uniform(lo, hi, n).unwrap();
        let refined = p.refine_with(&q);
        let vp = pl.f.variation(&p).unwrap();
        let vr = pl.f.variation(&refined).unwrap();
        let tv = pl.f.total_variation(lo, hi).unwrap();
        prop_assert!(vp <= vr + 1e-12);
        prop_assert!(vr <= tv + 1e-12);
        prop_assert!((tv - pl.exact_variation()).abs() <= 1e-12);
    }

    #[test]
    fn affine_data_interpolates_exactly(c0 in -5.0f64..5.0, c1 in -5.0f64..5.0, n in 1usize..200, s in 0.0f64..1.0) {
        let g = Grid::new(-1.0, 1.0, 0.5, n).unwrap();
        let f = GridFunction::from_fn(g.clone(), |t| c0 + c1 * t).unwrap();
        let t = -1.0 + 2.5 * s;
        prop_assert!((f.eval(t).unwrap() - (c0 + c1 * t)).abs() <= 1e-12);
        for (i, &node) in g.nodes().iter().enumerate() {
            prop_assert_eq!(f.eval(node).unwrap(), f.value(i));
        }
    }

    #[test]
    fn clamping_is_idempotent(seed in any::<u64>(), n in 1usize..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Grid::new(0.0, 1.0, 0.25, n).unwrap();
        let lo: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-2.0..0.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|&l| l + rng.gen_range(0.0..2.0)).collect();
        let x: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let band = Band::new(
            GridFunction::from_values(g.clone(), lo).unwrap(),
            GridFunction::from_values(g.clone(), hi).unwrap(),
        ).unwrap();
        let x = GridFunction::from_values(g, x).unwrap();
        let once = x.clamp_to_band(&band).unwrap();
        prop_assert_eq!(&once.clamp_to_band(&band).unwrap(), &once);
        prop_assert!(band.lower().leq(&once).unwrap() && once.leq(band.upper()).unwrap());
        prop_assert_eq!(band.excess(&once).unwrap().0, 0.0);
    }

    #[test]
    fn order_is_reflexive_and_transitive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Grid::new(0.0, 1.0, 0.0, 16).unwrap();
        let a: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|&v| v + rng.gen_range(0.0..1.0)).collect();
        let c: Vec<f64> = b.iter().map(|&v| v + rng.gen_range(0.0..1.0)).collect();
        let [a, b, c] = [a, b, c].map(|v| GridFunction::from_values(g.clone(), v).unwrap());
        prop_assert!(a.leq(&a).unwrap());
        prop_assert!(a.leq(&b).unwrap() && b.leq(&c).unwrap() && a.leq(&c).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn extremal_solutions_are_ordered(k in 0.0f64..2.0, amp in 0.0f64..1.0, w in 0.5f64..8.0, xb in -1.0f64..1.0) {
        let g = Grid::new(0.0, 1.0, 0.0, 256).unwrap();
        let (lo, hi) = (vec![-50.0; 257], vec![50.0; 257]);
        let rhs = |i: usize, x: f64| Ok(-k * x + amp * (w * g.node(i)).sin() + 0.3 * (x).sin());
        let p = ScalarFvp::new(&g, &lo, &hi, xb, rhs).unwrap();
        let least = p.solve_extremal(Extremal::Least, FvpOptions::default()).unwrap();
        let greatest = p.solve_extremal(Extremal::Greatest, FvpOptions::default()).unwrap();
        for (a, b) in least.values.iter().zip(&greatest.values) {
            prop_assert!(*a <= *b + 1e-8);
        }
    }

    #[test]
    fn larger_rhs_gives_smaller_solution(k in -1.0f64..2.0, d0 in 0.0f64..1.0, d1 in 0.0f64..1.0, xb in -1.0f64..1.0) {
        let g = Grid::new(0.0, 1.0, 0.0, 256).unwrap();
        let (lo, hi) = (vec![-50.0; 257], vec![50.0; 257]);
        let f1 = |_: usize, x: f64| Ok(-k * x);
        let f2 = |i: usize, x: f64| Ok(-k * x + d0 + d1 * g.node(i));
        let s1 = ScalarFvp::new(&g, &lo, &hi, xb, f1).unwrap().solve_extremal(Extremal::Least, FvpOptions::default()).unwrap();
        let s2 = ScalarFvp::new(&g, &lo, &hi, xb, f2).unwrap().solve_extremal(Extremal::Least, FvpOptions::default()).unwrap();
        for (a, b) in s1.values.iter().zip(&s2.values) {
            prop_assert!(*b <= *a + 1e-8);
        }
    }

    #[test]
    fn psi_dominates_the_coupled_rhs(seed in any::<u64>()) {
        let (spec, disc) = paper_disc(256);
        let psi = compute_psi_on(&spec, &disc, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let i = rng.gen_range(0..=256);
            let t = disc.grid.node(i);
            let s = disc.taus[i];
            let x = rng.gen_range(disc.alpha().value(i)..=disc.beta().value(i));
            let (ylo, yhi) = (s - FRAC_PI_2, FRAC_PI_2 - s);
            let y1 = rng.gen_range(ylo..=yhi);
            let y2 = rng.gen_range(ylo..=yhi);
            let v = spec.rhs.coupled(t, x, y1, y2).unwrap();
            prop_assert!(v.abs() <= psi.value(i) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn coupled_operator_is_mixed_monotone(theta in 0.0f64..0.5, w in 0.5f64..10.0) {
        let (spec, disc) = paper_disc(512);
        let opts = FvpOptions::default();
        let alpha = disc.extend_by_phi(disc.alpha().values().to_vec()).unwrap();
        let beta = disc.extend_by_phi(disc.beta().values().to_vec()).unwrap();
        let n = disc.grid.n_sub();
        let mut raised = alpha.values().to_vec();
        for i in 0..=n {
            let t = disc.grid.node(i);
            raised[i] += theta * (beta.value(i) - alpha.value(i)) * (w * t).sin().abs();
        }
        let raised = disc.extend_by_phi(raised[..=n].to_vec()).unwrap();
        let (v1, w1) = coupled_step(&spec, &disc, &alpha, &beta, opts).unwrap();
        let (v2, w2) = coupled_step(&spec, &disc, &raised, &beta, opts).unwrap();
        prop_assert!(v1.leq(&v2).unwrap());
        prop_assert!(w2.leq(&w1).unwrap());
        for i in disc.grid.tail_range() {
            let phi = disc.phi_tail[i - n];
            prop_assert_eq!(v2.value(i), phi);
            prop_assert_eq!(w2.value(i), phi);
        }
    }

    #[test]
    fn lattice_iteration_reaches_least_pair(seed in any::<u64>(), d in 0.0f64..0.6) {
        let lat = FiniteLattice::full(vec![4, 3]).unwrap();
        let op = random_mixed_monotone(seed, &lat, d);
        prop_assert!(op.audit().is_none());
        let rep = op.verify_characterization();
        prop_assert!(rep.holds, "{:?}", rep.witness);
        let (limit, _) = op.iterate_theorem21().unwrap();
        prop_assert_eq!(op.characterization_minimum().unwrap(), limit);
        prop_assert!(op.enumerate_coupled_fixed_points().contains(&limit));
    }

    #[test]
    fn maximum_principle_on_random_data(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 256;
        let g = Grid::new(0.0, 1.0, 0.5, n).unwrap();
        let k0 = rng.gen_range(-0.4..0.4);
        let l0 = rng.gen_range(0.0..0.4);
        let k = GridFunction::constant(g.clone(), k0).unwrap();
        let l = GridFunction::constant(g.clone(), l0).unwrap();
        let h = g.spacing();
        let s: Vec<f64> = (0..=n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut p = vec![0.0; g.len()];
        for i in (0..n).rev() {
            p[i] = (p[i + 1] * (1.0 - 0.5 * h * k0) - 0.5 * h * (s[i] + s[i + 1])) / (1.0 + 0.5 * h * k0);
        }
        let p = GridFunction::from_values(g.clone(), p).unwrap();
        let out = max_principle_check(&k, &l, &vec![1.0; n + 1], &p, 1e-8).unwrap();
        prop_assert!(out.holds);
    }
}

#[test]
fn lattice_order_laws() {
    let lat = FiniteLattice::full(vec![3, 4, 2]).unwrap();
    for i in 0..lat.len() {
        assert!(lat.leq(lat.bottom(), i) && lat.leq(i, lat.top()));
        for j in 0..lat.len() {
            let (m, jn) = (lat.meet(i, j), lat.join(i, j));
            assert!(lat.leq(m, i) && lat.leq(m, j) && lat.leq(i, jn) && lat.leq(j, jn));
            assert!(lat.meet(i, jn) == i && lat.join(i, m) == i);
            assert!(lat.leq(i, j) == (m == i));
            if lat.leq(i, j) {
                assert!(i <= j);
            }
        }
    }
}

