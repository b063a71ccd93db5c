//! Scalar numeric helpers shared by the classifier and selection code.
//!
//! Everything here is exact-math-first: each routine has a slow oracle in
//! the test module (log-space Simpson quadrature, series identities) and
//! the fast path must agree with it to near machine precision.

use statrs::function::erf::erfc;

/// ln(2*pi)/2, the log normalizer of a unit Gaussian.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Stable ln(e^a + e^b). Handles -inf inputs (empty contributions).
pub fn logsumexp2(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// ln h(x) where h(x) = integral of exp(-u^2/2) for u in (-inf, x].
///
/// h(x) = sqrt(2*pi) * Phi(x). The direct erfc route underflows once
/// x < -37 or so; far in the left tail we switch to the standard
/// asymptotic expansion of the Gaussian tail integral, whose truncation
/// error at the switch point is below 1e-12 relative.
pub fn log_h(x: f64) -> f64 {
    if x > -30.0 {
        // h(x) = sqrt(2*pi)/2 * erfc(-x/sqrt(2))
        HALF_LN_2PI + (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        // h(x) ~ exp(-x^2/2)/(-x) * (1 - 1/x^2 + 3/x^4 - 15/x^6 + 105/x^8)
        let x2 = x * x;
        let series = -1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2)
            + 105.0 / (x2 * x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() + series.ln_1p()
    }
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample median (average of middle pair for even lengths).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Half-width of a normal-approximation 95% confidence interval for the mean.
pub fn ci95_half_width(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    1.96 * (var / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Oracle for log_h: log-space Simpson quadrature of exp(-u^2/2).
    /// Substituting u = x + t turns the tail integral into
    /// exp(-x^2/2) * int_{t<=0} exp(-x t - t^2/2) dt, which stays
    /// representable for any x.
    fn log_h_oracle(x: f64) -> f64 {
        // Integrand g(t) = exp(-x t - t^2/2) on t in [-w, 0].
        let w = if x < -1.0 { -60.0 / x } else { 60.0 };
        let n = 400_000; // even
        let step = w / n as f64;
        let g = |t: f64| (-x * t - 0.5 * t * t).exp();
        let mut acc = g(-w) + g(0.0);
        for i in 1..n {
            let t = -w + i as f64 * step;
            acc += if i % 2 == 1 { 4.0 * g(t) } else { 2.0 * g(t) };
        }
        -0.5 * x * x + (acc * step / 3.0).ln()
    }

    #[test]
    fn log_h_matches_quadrature_oracle() {
        for &x in &[-45.0, -35.0, -30.5, -29.5, -8.0, -3.0, -1.0, 0.0, 0.5, 2.0, 6.0] {
            let got = log_h(x);
            let want = log_h_oracle(x);
            assert!(
                (got - want).abs() <= 1e-9 * want.abs().max(1.0),
                "x={x}: got {got}, oracle {want}"
            );
        }
    }

    #[test]
    fn log_h_at_zero_is_half_gaussian_mass() {
        // h(0) = sqrt(2*pi)/2
        let want = (0.5 * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((log_h(0.0) - want).abs() < 1e-14);
    }

    #[test]
    fn log_h_complement_sums_to_full_mass() {
        let full = (2.0 * std::f64::consts::PI).sqrt();
        for &x in &[0.0, 0.3, 1.0, 2.5, 5.0] {
            let s = log_h(x).exp() + log_h(-x).exp();
            assert!((s - full).abs() < 1e-12, "x={x}: {s}");
        }
    }

    #[test]
    fn log_h_is_monotone_across_branch_switch() {
        let mut prev = f64::NEG_INFINITY;
        let mut x = -40.0;
        while x < 8.0 {
            let v = log_h(x);
            assert!(v > prev, "log_h not increasing at x={x}");
            prev = v;
            x += 0.25;
        }
    }

    #[test]
    fn logsumexp2_basics() {
        let v = logsumexp2(1000.0, 1000.0);
        assert!((v - (1000.0 + std::f64::consts::LN_2)).abs() < 1e-12);
        assert_eq!(logsumexp2(f64::NEG_INFINITY, 3.0), 3.0);
        assert_eq!(
            logsumexp2(f64::NEG_INFINITY, f64::NEG_INFINITY),
            f64::NEG_INFINITY
        );
        // Against direct evaluation at benign magnitudes.
        let d = logsumexp2(0.3, -1.2) - (0.3f64.exp() + (-1.2f64).exp()).ln();
        assert!(d.abs() < 1e-14);
    }

    #[test]
    fn summary_stats() {
        let xs = [1.0, 2.0, 3.0, 10.0];
        assert!((mean(&xs) - 4.0).abs() < 1e-15);
        assert!((median(&xs) - 2.5).abs() < 1e-15);
        let odd = [5.0, 1.0, 9.0];
        assert!((median(&odd) - 5.0).abs() < 1e-15);
        assert!(ci95_half_width(&xs) > 0.0);
    }
}
