//! Golden-section references for the scalar prox maps.
//!
//! Comparing objective values directly locates a minimizer only to about
//! the square root of machine precision; these searches compare through a
//! factored difference `f(a) - f(b)` instead, which keeps its sign correct
//! down to rounding in the arguments.

const RATIO: f64 = 0.618_033_988_749_894_8;

/// Minimizes a unimodal function on `[a, b]` given `diff(x, y) = f(x) - f(y)`.
pub fn golden_section_by_difference(diff: impl Fn(f64, f64) -> f64, mut a: f64, mut b: f64, iterations: usize) -> f64 {
    for _ in 0..iterations {
        let c = b - RATIO * (b - a);
        let d = a + RATIO * (b - a);
        if diff(c, d) < 0.0 {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Minimizer of `½ t⁻¹ (d - x)² + σ₀ |d| + ½ k (η + |d|)²` by search.
pub fn prox_iso_reference(x: f64, t: f64, sigma0: f64, k: f64, eta_prev: f64) -> f64 {
    let diff = |a: f64, b: f64| {
        let (pa, pb) = (a.abs(), b.abs());
        0.5 / t * (a - b) * (a + b - 2.0 * x) + sigma0 * (pa - pb) + 0.5 * k * (pa - pb) * (2.0 * eta_prev + pa + pb)
    };
    golden_section_by_difference(diff, x.min(0.0), x.max(0.0), 200)
}

/// Minimizer of `½ t⁻¹ (d - x)² + σ₀ |d|` by search.
pub fn prox_kin_reference(x: f64, t: f64, sigma0: f64) -> f64 {
    prox_iso_reference(x, t, sigma0, 0.0, 0.0)
}
