//! Bessel functions of the first kind for integer order.

use std::f64::consts::PI;

/// `J_n(x)` for integer order `n`.
///
/// Uses Bessel's integral `J_n(x) = (1/2π) ∫_0^{2π} cos(nτ - x sin τ) dτ`
/// with the trapezoidal rule. The integrand is smooth and periodic, so the
/// rule converges geometrically once the node count exceeds `|x| + n` by a
/// margin; the aliasing error is bounded by `|J_{K-n}(x)| + |J_{K+n}(x)|`.
pub fn bessel_j(order: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    let n = order as f64;
    let nodes = 2 * ((x.abs().ceil() as usize) + order as usize + 40);
    let step = 2.0 * PI / nodes as f64;
    let sum: f64 = (0..nodes)
        .map(|k| {
            let tau = k as f64 * step;
            (n * tau - x * tau.sin()).cos()
        })
        .sum();
    sum / nodes as f64
}
