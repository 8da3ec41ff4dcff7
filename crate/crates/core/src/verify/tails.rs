//! Return-time tails: the plateau of `n^α·μ_Y(τ ≥ n)` per fixed point and
//! the identities tying cell measures together.

use serde::Serialize;

use crate::density::CellMeasures;
use crate::inducing::InducingScheme;
use crate::report::{CheckResult, Table};

/// Tolerances of the tail check.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TailOptions {
    /// Relative plateau oscillation `(max − min)/mean` on `[N/2, N]`.
    pub oscillation: f64,
    /// Relative mismatch of `Σ_p γ̂_p` and the direct fit.
    pub additivity: f64,
    /// Absolute tolerance of `μ(Y) = μ(Y₁) + μ(X₁)`.
    pub identity: f64,
}

impl Default for TailOptions {
    fn default() -> Self {
        TailOptions { oscillation: 0.03, additivity: 0.01, identity: 1e-4 }
    }
}

/// Plateau statistics of one tail sequence over a window.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Plateau {
    pub gamma: f64,
    pub oscillation: f64,
    /// Exponent from a log-log least-squares fit over the window.
    pub alpha_fit: f64,
    /// `false` when the tail vanishes or decays faster than any power.
    pub polynomial: bool,
}

/// Fits `n^α·t_n` on `n ∈ [lo, hi]`; `tail(n)` returns `t_n`.
pub fn plateau(alpha: f64, lo: usize, hi: usize, tail: impl Fn(usize) -> f64) -> Plateau {
    let (mut sum, mut min, mut max) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    let mut positive = true;
    for n in lo..=hi {
        let t = tail(n);
        let v = (n as f64).powf(alpha) * t;
        sum += v;
        min = min.min(v);
        max = max.max(v);
        if t > 0.0 {
            let (x, y) = ((n as f64).ln(), t.ln());
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        } else {
            positive = false;
        }
    }
    let k = (hi - lo + 1) as f64;
    let gamma = sum / k;
    let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    let alpha_fit = if positive { -slope } else { f64::INFINITY };
    Plateau {
        gamma,
        oscillation: if gamma > 0.0 { (max - min) / gamma } else { f64::INFINITY },
        alpha_fit,
        polynomial: positive && alpha_fit < 3.0 * alpha + 1.0,
    }
}

/// Indices written to tables: a geometric sweep plus a uniform sweep of the window.
fn table_indices(lo: usize, n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut x = 2.0_f64;
    while (x as usize) < lo {
        out.push(x as usize);
        x = (x * 1.05).max(x + 1.0);
    }
    let step = ((n - lo) / 200).max(1);
    out.extend((lo..=n).step_by(step));
    if out.last() != Some(&n) {
        out.push(n);
    }
    out.dedup();
    out
}

/// Checks the tail law of `μ_Y(τ ≥ n)` per fixed point on `[N/2, N]`
/// (`N` at most the depth of `measures`).
pub fn check_eq_y(scheme: &InducingScheme, measures: &CellMeasures, depth: usize, opts: &TailOptions) -> CheckResult {
    let mut res = CheckResult::new("eqY");
    let n = depth.min(measures.depth);
    let lo = (n / 2).max(2);
    res.metric("depth", n as f64);
    let probe = scheme.alpha().unwrap_or(1.0);
    res.metric("alpha", probe);

    let mut gamma_sum = 0.0;
    let mut polynomial = true;
    for p in 0..scheme.points.len() {
        let alpha = scheme.points[p].alpha.unwrap_or(probe);
        // μ_Y(τ ≥ n) from p is μ(X_{n−1,p}).
        let tail = |k: usize| measures.point_x(scheme, p, k - 1);
        let fit = plateau(alpha, lo, n, tail);
        let mut t = Table::new(format!("tail_p{p}"), &["n", "tail", "scaled"]);
        for k in table_indices(lo, n) {
            let v = tail(k);
            t.push(vec![k as f64, v, (k as f64).powf(alpha) * v]);
        }
        res.tables.push(t);
        res.metric(format!("gamma_p{p}"), fit.gamma);
        res.metric(format!("oscillation_p{p}"), fit.oscillation);
        res.metric(format!("alpha_fit_p{p}"), fit.alpha_fit);
        gamma_sum += fit.gamma;
        polynomial &= fit.polynomial;
        if fit.polynomial {
            res.require(
                fit.oscillation < opts.oscillation,
                format!("plateau oscillation at point {p} is {:.3e} (tolerance {:.1e})", fit.oscillation, opts.oscillation),
            );
        }
    }
    res.metric("gamma_sum", gamma_sum);
    if !polynomial {
        res.require(false, "non-polynomial tail: n^alpha * tail_n does not settle on a positive plateau");
    }

    // Direct fit from the cells Y_{j,r}: suffix sums plus the remainders.
    let top = measures.depth;
    let mut direct = vec![0.0; top + 3];
    direct[top + 2] = measures.remainder.iter().sum();
    for k in (2..=top + 1).rev() {
        direct[k] = direct[k + 1] + measures.feeder_y.iter().map(|v| v[k]).sum::<f64>();
    }
    let fit = plateau(probe, lo, n, |k| direct[k]);
    res.metric("gamma_direct", fit.gamma);
    if polynomial {
        let additivity = (fit.gamma / gamma_sum - 1.0).abs();
        res.metric("additivity", additivity);
        res.require(additivity < opts.additivity, format!("additivity mismatch {additivity:.3e}"));
    }

    // μ(X_{n,p}) from the interval formula against the cell sums.
    let mut cross: f64 = 0.0;
    for k in 1..=n {
        let interval: f64 = measures.arm_x.iter().map(|v| v[k]).sum();
        if interval > 0.0 {
            cross = cross.max((direct[k + 1] / interval - 1.0).abs());
        }
    }
    res.metric("cross_sum", cross);

    let identity = (measures.mu_y - measures.mu_y1 - measures.mu_x1()).abs();
    res.metric("mu_y", measures.mu_y);
    res.metric("mu_y1", measures.mu_y1);
    res.metric("mu_x1", measures.mu_x1());
    res.metric("measure_identity", identity);
    res.require(identity < opts.identity, format!("mu(Y) - mu(Y1) - mu(X1) = {identity:.3e}"));
    res
}
