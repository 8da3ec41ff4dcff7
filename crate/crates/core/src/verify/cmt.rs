//! Renewal-type sums `Σ_{j=1}^n a_{n−j}^{-1} j^{−α}` and their weighted
//! variants.

use crate::transfer::normalizer;

/// `Σ_{j=1}^n a_{n−j}^{-1}·j^{−α}`.
pub fn cmt_sum(alpha: f64, n: usize) -> f64 {
    cmt_weighted(alpha, n, |_| 1.0)
}

/// `Σ_{j=1}^n a_{n−j}^{-1}·j^{−α}·δ(j)`.
pub fn cmt_weighted(alpha: f64, n: usize, delta: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    // Smallest terms first.
    for j in (1..=n).rev() {
        acc += (j as f64).powf(-alpha) * delta(j) / normalizer(Some(alpha), n - j);
    }
    acc
}

/// Limit `π/sin(απ)` for `α < 1`, and 1 for `α = 1`.
pub fn cmt_limit(alpha: f64) -> f64 {
    if alpha >= 1.0 {
        1.0
    } else {
        std::f64::consts::PI / (alpha * std::f64::consts::PI).sin()
    }
}

/// Default weight `δ(j) = 1/log(2 + j)`.
pub fn log_weight(j: usize) -> f64 {
    1.0 / (2.0 + j as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sum_by_hand() {
        // n = 3, α = ½: a_2 = √2, a_1 = 1, a_0 = 1.
        let want = 1.0 / 2f64.sqrt() + 1.0 / 2f64.sqrt() + 1.0 / 3f64.sqrt();
        assert!((cmt_sum(0.5, 3) - want).abs() < 1e-15);
    }

    #[test]
    fn limits() {
        assert!((cmt_limit(0.5) - std::f64::consts::PI).abs() < 1e-15);
        assert!((cmt_limit(0.75) - std::f64::consts::PI * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(cmt_limit(1.0), 1.0);
    }
}
