mod common;

use common::{scheme, scheme_and_density};
use glocal::density::ulam_induced;
use glocal::maps::Family;
use glocal::transfer::{build_operator, correlation, krickeberg_profile, CellKind, OperatorGrid, OperatorOptions};

/// Operator for `f` with trap depth `depth` on 2048 Ulam cells.
fn operator(f: Family, depth: usize, subcells: usize) -> OperatorGrid {
    let (mut s, d) = scheme_and_density(f, depth + 1, 2048);
    s.ensure_depth(depth + 1).unwrap();
    let opts = OperatorOptions { depth, subcells, entry_depth: 1000, max_leak: 0.01 };
    build_operator(&s, &d, opts).unwrap()
}

/// Column `j` of the operator matrix.
fn column(op: &OperatorGrid, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; op.len()];
    e[j] = 1.0;
    let mut out = vec![0.0; op.len()];
    op.matrix.matvec(&e, &mut out);
    out
}

#[test]
fn trap_columns_are_shifts() {
    let op = operator(Family::Lsv { alpha: 0.75 }, 3000, 3);
    for n in [2, 10, 999, 3000] {
        for i in 0..3 {
            let col = column(&op, op.trap_index(0, n, i));
            let nonzero: Vec<(usize, f64)> = col.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect();
            assert_eq!(nonzero, vec![(op.trap_index(0, n - 1, i), 1.0)]);
        }
    }
}

#[test]
fn matrix_preserves_mu_and_columns_are_stochastic() {
    let op = operator(Family::Lsv { alpha: 0.75 }, 5000, 2);
    let mu = op.masses();
    let mut image = vec![0.0; op.len()];
    op.matrix.matvec(&mu, &mut image);
    for (i, c) in op.cells.iter().enumerate() {
        // The deepest cells are fed from beyond the grid.
        if matches!(c.kind, CellKind::Trap { n, .. } if n == op.options.depth) || c.mu < 1e-14 {
            continue;
        }
        assert!((image[i] / c.mu - 1.0).abs() < 1e-4, "cell {i} {:?}: {} vs {}", c.kind, image[i], c.mu);
    }
    let sums = op.matrix.col_sums();
    for (c, s) in op.cells.iter().zip(&sums) {
        if c.truncated {
            assert_eq!(*s, 0.0);
        } else if c.mu > 0.0 {
            assert!((s - 1.0).abs() < 1e-6);
        }
    }
    let truncated: f64 = op.cells.iter().filter(|c| c.truncated).map(|c| c.mu).sum();
    assert!((truncated / op.mu_y - op.leak).abs() < 1e-15);
    assert!(op.leak > 0.0 && op.leak < 0.01);
}

#[test]
fn constant_observable_loses_only_the_truncated_mass() {
    let op = operator(Family::Lsv { alpha: 0.75 }, 5000, 1);
    let c = correlation(&op, &vec![1.0; op.len()], 50).unwrap();
    assert!((c.c[0] - op.mu_y).abs() < 1e-12);
    assert!((c.c[1] - op.mu_y * (1.0 - op.leak)).abs() < 1e-9);
    for n in 0..=50 {
        assert!((c.c[n] + c.absorbed[n] - op.mu_y).abs() < 1e-12);
        if n > 0 {
            assert!(c.c[n] <= c.c[n - 1] + 1e-15);
        }
    }
}

#[test]
fn linear_family_mixes_to_the_finite_measure_limit() {
    // μ normalised by μ(Y) = 1 is 2·Leb on [0, 1]; L^n 1_Y → μ(Y)/μ(X) = ½.
    let mut s = scheme(Family::QbranchLinear { cuts: vec![0.5] }, 200);
    s.ensure_depth(200).unwrap();
    let d = ulam_induced(&s, 1000, 100).unwrap();
    let op = build_operator(&s, &d, OperatorOptions { depth: 150, subcells: 1, entry_depth: 100, max_leak: 1e-3 }).unwrap();
    let p = krickeberg_profile(&op, 60, &[60]);
    assert!((p.k_hat[60] - 0.5).abs() < 1e-6, "{}", p.k_hat[60]);
    assert!(p.spread[60] < 1e-6);
}

#[test]
fn krickeberg_profile_starts_flat_and_settles() {
    let op = operator(Family::Lsv { alpha: 0.75 }, 20_000, 1);
    let p = krickeberg_profile(&op, 2000, &[0, 2000]);
    assert_eq!(p.a[0], 1.0);
    assert!((p.k_hat[0] - 1.0).abs() < 1e-12);
    assert!(p.spread[0] < 1e-9);
    assert_eq!(p.snapshots.len(), 2);
    assert!(p.snapshots[0].1.iter().zip(&op.cells).all(|(v, c)| c.mu == 0.0 || (v - 1.0).abs() < 1e-9));
    assert!(p.spread[2000] < 0.05, "spread {}", p.spread[2000]);
    assert!((p.k_hat[2000] / p.k_hat[1000] - 1.0).abs() < 0.03);
    assert!(p.spread[2000] < p.spread[200]);
}

#[test]
fn invalid_operator_options_are_rejected() {
    let (mut s, d) = scheme_and_density(Family::Lsv { alpha: 0.5 }, 2001, 1024);
    s.ensure_depth(2001).unwrap();
    let base = OperatorOptions { depth: 2000, subcells: 1, entry_depth: 100, max_leak: 0.1 };
    assert!(build_operator(&s, &d, OperatorOptions { depth: 1, ..base }).is_err());
    assert!(build_operator(&s, &d, OperatorOptions { subcells: 0, ..base }).is_err());
    // lsv(½) keeps about 1% of μ(Y) beyond depth 2000.
    assert!(build_operator(&s, &d, OperatorOptions { max_leak: 1e-4, ..base }).is_err());
}
