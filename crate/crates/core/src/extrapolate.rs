//! Tail estimates for sequences converging like `C / p²`.

use serde::{Deserialize, Serialize};

/// Limit estimate with an uncertainty taken as the distance to the last term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub limit: f64,
    pub uncertainty: f64,
}

/// Two-point Richardson step assuming `v(p) = v∞ + C/p²`.
pub fn richardson_two_point(p1: f64, v1: f64, p2: f64, v2: f64) -> Option<TailEstimate> {
    if !(p1 > 0.0 && p2 > p1) {
        return None;
    }
    let (a, b) = (p1 * p1, p2 * p2);
    let limit = (b * v2 - a * v1) / (b - a);
    Some(TailEstimate { limit, uncertainty: (v2 - limit).abs() })
}

/// Fits `v(p) = v∞ + C/(p+a)²` exactly through the last three points.
///
/// The offset `a` is found by bisection on the ratio of successive
/// differences. Returns `None` when the data are not consistent with a
/// monotone inverse-square tail (for instance when already converged).
pub fn inverse_square_fit(ps: &[f64], vs: &[f64]) -> Option<(TailEstimate, f64)> {
    let n = ps.len();
    if n < 3 || vs.len() != n {
        return None;
    }
    let (p1, p2, p3) = (ps[n - 3], ps[n - 2], ps[n - 1]);
    let (v1, v2, v3) = (vs[n - 3], vs[n - 2], vs[n - 1]);
    if !(p1 < p2 && p2 < p3) {
        return None;
    }
    let d12 = v1 - v2;
    let d23 = v2 - v3;
    if d23 == 0.0 || d12 == 0.0 || d12.signum() != d23.signum() {
        return None;
    }
    let target = d12 / d23;
    let f = |p: f64, a: f64| 1.0 / ((p + a) * (p + a));
    let model = |a: f64| (f(p1, a) - f(p2, a)) / (f(p2, a) - f(p3, a));
    // The model ratio decreases from +∞ (a → -p1) to (p2-p1)/(p3-p2) (a → ∞).
    let mut lo = -p1 + 1e-9 * (1.0 + p1.abs());
    let mut hi = 1e6;
    if !(model(hi) < target && model(lo) > target) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if model(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    let c = d12 / (f(p1, a) - f(p2, a));
    let limit = v3 - c * f(p3, a);
    Some((TailEstimate { limit, uncertainty: (v3 - limit).abs() }, a))
}
