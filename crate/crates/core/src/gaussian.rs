//! Standard-normal primitives and the conditional-probability martingale.
//!
//! `Φ` is evaluated through `erfc`, which is accurate to a few ulps over the
//! whole real line, so the cdf meets a 1e-12 absolute error budget without a
//! bespoke rational approximation. The quantile uses Wichura's AS241 rational
//! approximation polished by a Newton step on `Φ`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Smallest value `Φ` ever returns.
pub const CDF_FLOOR: f64 = f64::MIN_POSITIVE;
/// Largest value `Φ` ever returns: the double just below 1.
pub const CDF_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

pub fn std_normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// `Φ(z)`, clamped to `[CDF_FLOOR, CDF_CEIL]` so interior states never map
/// onto the endpoints of `(0, 1)`.
pub fn std_normal_cdf(z: f64) -> f64 {
    (0.5 * libm::erfc(-z * FRAC_1_SQRT_2)).clamp(CDF_FLOOR, CDF_CEIL)
}

/// `1 - Φ(z)` without cancellation in the upper tail.
pub fn std_normal_sf(z: f64) -> f64 {
    std_normal_cdf(-z)
}

/// `Φ⁻¹(q)` for `q ∈ (0, 1)`.
pub fn std_normal_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain("q", q, "probability must lie in (0, 1)"));
    }
    Ok(quantile_unchecked(q))
}

/// Quantile without the domain check. `q` must lie in `(0, 1)`.
pub(crate) fn quantile_unchecked(q: f64) -> f64 {
    // Work in the lower tail, where `Φ` carries full relative precision;
    // `1 - q` is exact for `q >= 0.5`.
    if q > 0.5 {
        return -lower_quantile(1.0 - q);
    }
    lower_quantile(q)
}

fn lower_quantile(q: f64) -> f64 {
    let z = as241(q);
    if q == 0.5 {
        return 0.0;
    }
    let density = std_normal_pdf(z);
    if density <= 0.0 {
        return z;
    }
    // One Newton step on Φ(z) = q; AS241 is already good to ~1e-16
    // relative, so a single step suffices.
    let err = 0.5 * libm::erfc(-z * FRAC_1_SQRT_2) - q;
    z - err / density
}

#[allow(clippy::excessive_precision)]
fn as241(u: f64) -> f64 {
    const SPLIT1: f64 = 0.425;
    const SPLIT2: f64 = 5.0;
    const CONST1: f64 = 0.180625;
    const CONST2: f64 = 1.6;

    const A: [f64; 8] = [
        3.3871328727963666080E0,
        1.3314166789178437745E+2,
        1.9715909503065514427E+3,
        1.3731693765509461125E+4,
        4.5921953931549871457E+4,
        6.7265770927008700853E+4,
        3.3430575583588128105E+4,
        2.5090809287301226727E+3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.2313330701600911252E+1,
        6.8718700749205790830E+2,
        5.3941960214247511077E+3,
        2.1213794301586595867E+4,
        3.9307895800092710610E+4,
        2.8729085735721942674E+4,
        5.2264952788528545610E+3,
    ];
    const C: [f64; 8] = [
        1.42343711074968357734E0,
        4.63033784615654529590E0,
        5.76949722146069140550E0,
        3.64784832476320460504E0,
        1.27045825245236838258E0,
        2.41780725177450611770E-1,
        2.27238449892691845833E-2,
        7.74545014278341407640E-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.05319162663775882187E0,
        1.67638483018380384940E0,
        6.89767334985100004550E-1,
        1.48103976427480074590E-1,
        1.51986665636164571966E-2,
        5.47593808499534494600E-4,
        1.05075007164441684324E-9,
    ];
    const E: [f64; 8] = [
        6.65790464350110377720E0,
        5.46378491116411436990E0,
        1.78482653991729133580E0,
        2.96560571828504891230E-1,
        2.65321895265761230930E-2,
        1.24266094738807843860E-3,
        2.71155556874348757815E-5,
        2.01033439929228813265E-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.99832206555887937690E-1,
        1.36929880922735805310E-1,
        1.48753612908506148525E-2,
        7.86869131145613259100E-4,
        1.84631831751005468180E-5,
        1.42151175831644588870E-7,
        2.04426310338993978564E-15,
    ];

    fn ratio(num: &[f64; 8], den: &[f64; 8], r: f64) -> f64 {
        let n = num.iter().rev().fold(0.0, |acc, &c| acc * r + c);
        let d = den.iter().rev().fold(0.0, |acc, &c| acc * r + c);
        n / d
    }

    let q = u - 0.5;
    if q.abs() <= SPLIT1 {
        return q * ratio(&A, &B, CONST1 - q * q);
    }
    let tail = if q < 0.0 { u } else { 1.0 - u };
    let r = (-tail.ln()).sqrt();
    let z = if r <= SPLIT2 {
        ratio(&C, &D, r - CONST2)
    } else {
        ratio(&E, &F, r - SPLIT2)
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}

/// The diffusion weight `h(y) = exp(-[Φ⁻¹(y)]²) / (4π)` of the g-equation.
///
/// `h` vanishes faster than any power at both ends of `(0, 1)`, which is what
/// makes the boundary-value problem singular.
pub fn h(y: f64) -> Result<f64> {
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::domain("y", y, "level must lie in (0, 1)"));
    }
    Ok(h_unchecked(y))
}

pub(crate) fn h_unchecked(y: f64) -> f64 {
    // Symmetric in y <-> 1 - y; evaluate from the nearer endpoint so the
    // quantile never sees a rounded 1 - tiny.
    let z = lower_quantile(y.min(1.0 - y));
    (-z * z).exp() / (4.0 * PI)
}

/// `M_t = P(W_T < c | W_t = w) = Φ((c - w)/√(T - t))` for `0 <= t < T`.
pub fn martingale_level(t: f64, w: f64, horizon: f64, threshold: f64) -> Result<f64> {
    if !(t >= 0.0 && t < horizon) {
        return Err(Error::domain(
            "t",
            t,
            "time must satisfy 0 <= t < T; the terminal level is 1{W_T < c}",
        ));
    }
    Ok(std_normal_cdf((threshold - w) / (horizon - t).sqrt()))
}
