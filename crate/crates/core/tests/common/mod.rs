//! Shared constructors for the integration tests.
#![allow(dead_code)]

use glocal::density::{ulam_induced, DensityEstimate};
use glocal::inducing::{build_scheme, InducingScheme};
use glocal::maps::{make_family, Family, MapModel};

pub fn model(f: Family) -> MapModel {
    make_family(f).expect("valid family")
}

pub fn lsv(alpha: f64) -> MapModel {
    model(Family::Lsv { alpha })
}

/// Scheme with cells enumerated to `depth`.
pub fn scheme(f: Family, depth: usize) -> InducingScheme {
    let mut s = build_scheme(model(f)).expect("scheme");
    s.ensure_depth(depth).expect("depth");
    s
}

/// Scheme plus Ulam density with `m` cells and return-time cap 2000.
pub fn scheme_and_density(f: Family, depth: usize, m: usize) -> (InducingScheme, DensityEstimate) {
    let s = scheme(f, depth.max(2001));
    let d = ulam_induced(&s, m, 2000).expect("density");
    (s, d)
}

/// Representative families: every built-in family with typical parameters.
pub fn families() -> Vec<Family> {
    vec![
        Family::Lsv { alpha: 0.5 },
        Family::Lsv { alpha: 1.0 },
        Family::Lsv2 { alpha: 0.6, b: 3.0, eta: 0.9, correction: None },
        Family::Qbranch { alpha: 0.5, b: 4.0, eta: 1.0, q: 2, cuts: None },
        Family::QbranchLinear { cuts: vec![0.3, 0.7] },
        Family::PmMod1 { alpha: 0.5, b: 2.5 },
        Family::Farey,
        Family::TwoSided { alpha: 0.5, b: 4.0 },
        Family::ThalerD { alpha: 0.7, cuts: vec![0.4] },
    ]
}
