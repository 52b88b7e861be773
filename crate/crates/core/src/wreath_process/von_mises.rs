//! Von Mises distribution on the circle with mean 0.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::bessel::i0e;

/// Concentrations above this are sampled from the wrapped normal limit.
pub const WRAPPED_NORMAL_KAPPA: f64 = 700.0;

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Draws one angle in `(-π, π]` with density proportional to `e^{κ cos θ}`.
///
/// Uses the Best–Fisher rejection scheme.
pub fn sample<R: Rng + ?Sized>(kappa: f64, rng: &mut R) -> f64 {
    if kappa < 1e-8 {
        return wrap_angle(PI * (2.0 * rng.random::<f64>() - 1.0));
    }
    if kappa > WRAPPED_NORMAL_KAPPA {
        let z: f64 = StandardNormal.sample(rng);
        return wrap_angle(z / kappa.sqrt());
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let theta = f.clamp(-1.0, 1.0).acos();
            let u3: f64 = rng.random();
            return if u3 < 0.5 { -theta } else { theta };
        }
    }
}

/// `ln` of the density `e^{κ cos θ} / (2π I0(κ))`.
pub fn log_density(theta: f64, kappa: f64) -> f64 {
    let s = (0.5 * theta).sin();
    -2.0 * kappa * s * s - (2.0 * PI).ln() - i0e(kappa).ln()
}
