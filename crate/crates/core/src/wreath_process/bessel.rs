//! Modified Bessel function of the first kind, order zero.

use std::f64::consts::PI;

/// Exponentially scaled `I0(x)·e^{-x}` for `x >= 0`.
///
/// Up to `x = 1000` this is the trapezoid rule applied to
/// `(1/π)∫₀^π e^{x(cos t − 1)} dt`; the integrand is smooth and periodic so
/// the rule converges geometrically once the node count exceeds a few `√x`.
/// Beyond that the standard asymptotic series is used.
pub fn i0e(x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 {
        return 1.0;
    }
    if x > 1000.0 {
        return i0e_asymptotic(x);
    }
    let n = 16 + (6.0 * x.sqrt()).ceil() as usize;
    let h = PI / n as f64;
    let mut sum = 0.5 * (1.0 + (-2.0 * x).exp());
    for k in 1..n {
        let t = k as f64 * h;
        // cos t − 1 = −2 sin²(t/2), without cancellation near t = 0
        let s = (0.5 * t).sin();
        sum += (-2.0 * x * s * s).exp();
    }
    sum / n as f64
}

fn i0e_asymptotic(x: f64) -> f64 {
    // Σ ((2k−1)!!)² / (k! (8x)^k)
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..12 {
        let odd = (2 * k - 1) as f64;
        term *= odd * odd / (k as f64 * 8.0 * x);
        sum += term;
    }
    sum / (2.0 * PI * x).sqrt()
}

pub fn bessel_i0(x: f64) -> f64 {
    i0e(x) * x.abs().exp()
}

/// `ln I0(x)`, finite for every finite `x`.
pub fn log_i0(x: f64) -> f64 {
    i0e(x).ln() + x.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(x: f64) -> f64 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for m in 1..200 {
            term *= q / (m as f64 * m as f64);
            sum += term;
            if term < sum * 1e-18 {
                break;
            }
        }
        sum
    }

    #[test]
    fn known_values() {
        assert_eq!(bessel_i0(0.0), 1.0);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(5.0) / 27.239_871_823_604_44 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_power_series() {
        for i in 0..=500 {
            let x = i as f64 * 0.1;
            let rel = (bessel_i0(x) / series(x) - 1.0).abs();
            assert!(rel < 1e-10, "x = {x}: rel {rel}");
        }
    }

    #[test]
    fn branches_agree_at_switch() {
        let a = i0e(1000.0);
        let b = i0e_asymptotic(1000.0);
        assert!((a / b - 1.0).abs() < 1e-12);
        assert!(log_i0(5000.0).is_finite());
    }
}
