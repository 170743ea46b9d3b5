//! Standard normal density, distribution function and inverse Mills ratio.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Below this point the inverse Mills ratio is evaluated from the
/// continued fraction for the Mills ratio instead of `pdf / cdf`.
const MILLS_TAIL: f64 = -6.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn std_normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

fn ln_std_normal_pdf(t: f64) -> f64 {
    -0.5 * t * t - LN_SQRT_2PI
}

/// `Φ(t)` via the complementary error function, which keeps full relative
/// precision in the lower tail.
pub fn std_normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t * FRAC_1_SQRT_2)
}

/// `ln Φ(t)`, finite for every finite `t`.
pub fn ln_std_normal_cdf(t: f64) -> f64 {
    if t < MILLS_TAIL {
        ln_std_normal_pdf(t) - inverse_mills(t).ln()
    } else if t > 0.0 {
        (-0.5 * libm::erfc(t * FRAC_1_SQRT_2)).ln_1p()
    } else {
        std_normal_cdf(t).ln()
    }
}

/// Mills ratio `(1 - Φ(x)) / φ(x)` for `x > 0` by Laplace's continued fraction
/// `1/(x + 1/(x + 2/(x + 3/(x + ...))))`, evaluated with the modified Lentz method.
fn mills_ratio_cf(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..1000 {
        let a = n as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// Inverse Mills ratio `λ(t) = φ(t) / Φ(t)`.
///
/// Positive and strictly decreasing; behaves like `-t` as `t → -∞` and like
/// `φ(t)` as `t → ∞`.
pub fn inverse_mills(t: f64) -> f64 {
    if t < MILLS_TAIL {
        1.0 / mills_ratio_cf(-t)
    } else {
        std_normal_pdf(t) / std_normal_cdf(t)
    }
}
