mod common;

use common::{families, lsv, model};
use glocal::maps::{adler_constant, inverse_branch, make_family, Family, Interval};
use proptest::prelude::*;

#[test]
fn lsv_alpha_one_branches() {
    let m = lsv(1.0);
    for x in [0.0, 0.1, 0.3, 0.5] {
        assert!((m.branches[0].eval(x) - x * (1.0 + 2.0 * x)).abs() < 1e-15);
    }
    for x in [0.5, 0.6, 0.99, 1.0] {
        assert!((m.branches[1].eval(x) - (2.0 * x - 1.0)).abs() < 1e-15);
    }
}

#[test]
fn farey_branches() {
    let m = model(Family::Farey);
    for x in [0.0, 0.2, 0.4, 0.5] {
        assert!((m.branches[0].eval(x) - x / (1.0 - x)).abs() < 1e-15);
    }
    for x in [0.5, 0.6, 0.9, 1.0] {
        assert!((m.branches[1].eval(x) - (1.0 - x) / x).abs() < 1e-15);
    }
}

#[test]
fn two_sided_meets_at_one_half() {
    let m = model(Family::TwoSided { alpha: 0.5, b: 4.0 });
    assert_eq!(m.branches[0].eval(0.5), 1.0);
    assert_eq!(m.branches[1].eval(0.5), 0.0);
}

#[test]
fn inverse_branch_examples() {
    let m = lsv(1.0);
    assert!((inverse_branch(&m.branches[0], 1.0).unwrap() - 0.5).abs() < 1e-15);
    let root = (-1.0 + 5f64.sqrt()) / 4.0;
    assert!((inverse_branch(&m.branches[0], 0.5).unwrap() - root).abs() < 1e-15);
    assert!((inverse_branch(&lsv(0.5).branches[0], 1.0).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn adler_constants() {
    assert!((adler_constant(&lsv(1.0), 1e-9) - 4.0).abs() < 1e-12);
    assert!((adler_constant(&model(Family::Farey), 1e-9) - 2.0).abs() < 1e-12);
    assert_eq!(adler_constant(&model(Family::QbranchLinear { cuts: vec![0.5] }), 1e-9), 0.0);
}

#[test]
fn branches_tile_the_domain_and_map_into_it() {
    for f in families() {
        let m = model(f.clone());
        let dom = m.domain();
        assert_eq!(m.branches[0].domain.lo, 0.0, "{f:?}");
        assert!(m.branches.last().unwrap().domain.hi >= dom.hi, "{f:?}");
        for w in m.branches.windows(2) {
            assert_eq!(w[0].domain.hi, w[1].domain.lo, "{f:?}");
        }
        for k in 0..=10_000 {
            let x = dom.hi * k as f64 / 10_000.0;
            let v = m.eval(x);
            assert!(v >= -1e-12 && v <= dom.hi + 1e-12, "{f:?}: f({x}) = {v} leaves X");
        }
        for b in &m.branches {
            // Strict monotonicity on a grid.
            let sign = if b.eval(b.domain.hi) > b.eval(b.domain.lo) { 1.0 } else { -1.0 };
            let mut prev = b.eval(b.domain.lo);
            for k in 1..=1000 {
                let x = b.domain.lo + b.domain.len() * k as f64 / 1000.0;
                let v = b.eval(x);
                assert!(sign * (v - prev) > 0.0, "{f:?}: not monotone at {x}");
                prev = v;
            }
        }
    }
}

#[test]
fn uniform_branches_expand_and_neutral_branches_match_their_asymptotics() {
    use glocal::maps::BranchKind;
    for f in families() {
        let m = model(f.clone());
        for b in &m.branches {
            match b.kind {
                BranchKind::Uniform { rho } => {
                    // Farey's second branch has |f'(1)| = 1.
                    assert!(rho >= 1.0, "{f:?}");
                    for k in 0..=200 {
                        let x = b.domain.lo + b.domain.len() * k as f64 / 200.0;
                        assert!(b.deriv(x).abs() >= rho * (1.0 - 1e-12), "{f:?} at {x}");
                    }
                }
                BranchKind::Neutral { xi, alpha, b: coef, .. } => {
                    let p = 1.0 + 1.0 / alpha;
                    for u in [1e-3f64, 1e-4, 1e-5, 1e-6] {
                        // Skip scales below double resolution at ξ.
                        if coef * u.powf(p) < 1e-10 * xi.max(1e-3) {
                            continue;
                        }
                        let x = if xi == 0.0 { u } else { xi - u };
                        let s = (x - xi).signum();
                        let ratio = (b.eval(x) - x) / (s * coef * u.powf(p));
                        let dratio = (b.deriv(x) - 1.0) / (coef * p * u.powf(p - 1.0));
                        assert!((ratio - 1.0).abs() < 0.02, "{f:?}: ratio {ratio}");
                        assert!((dratio - 1.0).abs() < 0.02, "{f:?}: dratio {dratio}");
                    }
                }
            }
        }
    }
}

#[test]
fn lsv2_neutral_branch_reaches_eta() {
    let m = model(Family::Lsv2 { alpha: 0.6, b: 3.0, eta: 0.9, correction: None });
    let f0 = &m.branches[0];
    assert!((f0.eval(f0.domain.hi) - 0.9).abs() < 1e-12);
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(make_family(Family::Lsv { alpha: 1.5 }).is_err());
    assert!(make_family(Family::Lsv { alpha: 0.0 }).is_err());
    assert!(make_family(Family::QbranchLinear { cuts: vec![0.7, 0.3] }).is_err());
}

fn branch_strategy() -> impl Strategy<Value = (usize, usize, f64)> {
    (0..families().len(), 0..8usize, 0.0..1.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn inverse_round_trip((fi, bi, t) in branch_strategy()) {
        let m = model(families()[fi].clone());
        let b = &m.branches[bi % m.branches.len()];
        let r = b.range();
        let y = r.lo + t * r.len();
        let x = inverse_branch(b, y).unwrap();
        prop_assert!(b.domain.contains(x));
        let err = (b.eval(x) - y).abs();
        prop_assert!(err <= 1e-13 * y.abs().max(1e-300) || err <= 1e-15, "y = {y}, f(x) = {}", b.eval(x));
    }

    #[test]
    fn derivative_matches_central_differences((fi, bi, t) in branch_strategy()) {
        let m = model(families()[fi].clone());
        let b = &m.branches[bi % m.branches.len()];
        let h = 1e-6;
        let Interval { lo, hi } = b.domain;
        let x = lo + 1e-3 + t * (hi - lo - 2e-3);
        let fd = (b.eval(x + h) - b.eval(x - h)) / (2.0 * h);
        prop_assert!((fd / b.deriv(x) - 1.0).abs() <= 1e-6, "x = {x}: {fd} vs {}", b.deriv(x));
    }

    #[test]
    fn bounded_distortion((fi, bi, s, t) in (0..families().len(), 0..8usize, 0.0..1.0f64, 0.0..1.0f64)) {
        let m = model(families()[fi].clone());
        let big_m = adler_constant(&m, 1e-9);
        let b = &m.branches[bi % m.branches.len()];
        let Interval { lo, hi } = b.domain;
        let (x, y) = (lo + s * (hi - lo), lo + t * (hi - lo));
        let lhs = (1.0 / b.deriv(x) - 1.0 / b.deriv(y)).abs();
        prop_assert!(lhs <= big_m * (2.0 * big_m).exp() * (x - y).abs() + 1e-15);
    }
}
