//! Special functions: Gamma, log-Gamma, the Gauss hypergeometric function on
//! the negative half-line, and Wendel's Gamma-ratio bound.

use std::f64::consts::PI;

use serde::Serialize;

use crate::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Largest argument for which Γ is finite in double precision.
const GAMMA_MAX_ARG: f64 = 171.624;

const SERIES_TOL: f64 = 1e-14;
const SERIES_MAX_TERMS: usize = 1_000_000;
const CONNECTION_SWITCH: f64 = 0.9;

// Lanczos sum A(x) for x >= 0.5, with the argument already shifted by one.
fn lanczos_sum(xm1: f64) -> f64 {
    let mut acc = LANCZOS[0];
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (xm1 + k as f64);
    }
    acc
}

fn gamma_lanczos(x: f64) -> f64 {
    let xm1 = x - 1.0;
    let t = xm1 + LANCZOS_G + 0.5;
    // split the power so large arguments do not overflow early
    let half = t.powf(0.5 * (xm1 + 0.5));
    (2.0 * PI).sqrt() * half * (half * (-t).exp()) * lanczos_sum(xm1)
}

/// Euler's Gamma function for positive arguments.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain { function: "gamma", value: x });
    }
    Ok(gamma_positive(x))
}

fn gamma_positive(x: f64) -> f64 {
    if x >= GAMMA_MAX_ARG {
        f64::INFINITY
    } else if x < 0.5 {
        gamma_lanczos(x + 1.0) / x
    } else {
        gamma_lanczos(x)
    }
}

/// Γ(x) on the whole real line away from the poles (reflection for x < 0).
pub fn gamma_real(x: f64) -> Result<f64> {
    if x > 0.0 {
        return Ok(gamma_positive(x));
    }
    if x == x.round() {
        return Err(Error::Domain { function: "gamma", value: x });
    }
    let s = sin_pi(x);
    Ok(PI / (s * gamma_positive(1.0 - x)))
}

/// 1/Γ(x), an entire function: returns 0 at the non-positive integers.
pub fn rgamma(x: f64) -> f64 {
    if x > 0.0 {
        if x >= GAMMA_MAX_ARG {
            return (-ln_gamma_positive(x)).exp();
        }
        return 1.0 / gamma_positive(x);
    }
    if x == x.round() {
        return 0.0;
    }
    sin_pi(x) * gamma_positive(1.0 - x) / PI
}

// sin(pi x) with exact zeros at the integers
fn sin_pi(x: f64) -> f64 {
    let r = x - 2.0 * (x / 2.0).floor();
    if r == 0.0 || r == 1.0 {
        return 0.0;
    }
    (PI * r).sin()
}

/// ln Γ(x) for positive arguments.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain { function: "ln_gamma", value: x });
    }
    Ok(ln_gamma_positive(x))
}

fn ln_gamma_positive(x: f64) -> f64 {
    if x < 0.5 {
        return ln_gamma_positive(x + 1.0) - x.ln();
    }
    if x < 20.0 {
        return gamma_lanczos(x).ln();
    }
    let xm1 = x - 1.0;
    let t = xm1 + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (xm1 + 0.5) * t.ln() - t + lanczos_sum(xm1).ln()
}

/// ln(Γ(x)/Γ(y)) for positive x, y, without forming either Gamma value.
pub fn ln_gamma_ratio(x: f64, y: f64) -> Result<f64> {
    Ok(ln_gamma(x)? - ln_gamma(y)?)
}

/// Γ(x)/Γ(x+s) together with Wendel's upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaRatio {
    pub x: f64,
    pub s: f64,
    pub value: f64,
    pub upper: f64,
}

impl GammaRatio {
    pub fn holds(&self) -> bool {
        self.value <= self.upper
    }
}

/// Wendel's bound Γ(x)/Γ(x+s) ≤ x^{-s}(1+s)^{1-s}, valid for x ≥ 1 and 0 < s < 1.
pub fn wendel_bound(x: f64, s: f64) -> Result<GammaRatio> {
    if !(x >= 1.0) || !x.is_finite() {
        return Err(Error::Domain { function: "wendel_bound", value: x });
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain { function: "wendel_bound", value: s });
    }
    let value = ln_gamma_ratio(x, x + s)?.exp();
    let upper = x.powf(-s) * (1.0 + s).powf(1.0 - s);
    Ok(GammaRatio { x, s, value, upper })
}

/// Gauss hypergeometric function F(a, b; c; z) for z ≤ 0 and c > 0.
///
/// The Pfaff transformation maps z to w = z/(z-1) in [0, 1). The series in w is
/// summed directly for w ≤ 0.9; above that the linear transformation to 1-w is
/// used unless c-a-b is too close to an integer.
pub fn gauss_2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if !(z <= 0.0) {
        return Err(Error::Domain { function: "gauss_2f1", value: z });
    }
    if !(c > 0.0) {
        return Err(Error::Domain { function: "gauss_2f1", value: c });
    }
    if z == 0.0 || a == 0.0 || b == 0.0 {
        return Ok(1.0);
    }
    let w = z / (z - 1.0);
    let one_minus_w = 1.0 / (1.0 - z);
    let prefactor = one_minus_w.powf(a);
    Ok(prefactor * hyp2f1_unit(a, c - b, c, w, one_minus_w)?)
}

/// F(a, b; c; w) for w in [0, 1); `one_minus_w` must equal 1 - w computed
/// without cancellation by the caller.
pub(crate) fn hyp2f1_unit(a: f64, b: f64, c: f64, w: f64, one_minus_w: f64) -> Result<f64> {
    if w <= CONNECTION_SWITCH || a == 0.0 || b == 0.0 {
        return hyp2f1_series(a, b, c, w);
    }
    let d = c - a - b;
    if (d - d.round()).abs() < 1e-4 || is_nonpositive_integer(1.0 - d) || is_nonpositive_integer(d + 1.0) {
        return hyp2f1_series(a, b, c, w);
    }
    let gc = gamma_real(c)?;
    let a1 = gc * gamma_real(d)? * rgamma(c - a) * rgamma(c - b);
    let a2 = gc * gamma_real(-d)? * rgamma(a) * rgamma(b);
    let f1 = if a1 == 0.0 { 0.0 } else { hyp2f1_series(a, b, 1.0 - d, one_minus_w)? };
    let f2 = if a2 == 0.0 { 0.0 } else { hyp2f1_series(c - a, c - b, d + 1.0, one_minus_w)? };
    Ok(a1 * f1 + a2 * one_minus_w.powf(d) * f2)
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// Direct power series of F(a, b; c; w) for 0 ≤ w < 1 with a relative residual
/// stopping rule that accounts for the geometric tail.
pub(crate) fn hyp2f1_series(a: f64, b: f64, c: f64, w: f64) -> Result<f64> {
    if w == 0.0 {
        return Ok(1.0);
    }
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 0..SERIES_MAX_TERMS {
        let kf = k as f64;
        let ratio = (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * w;
        term *= ratio;
        sum += term;
        if term == 0.0 {
            return Ok(sum);
        }
        let r = ratio.abs();
        if r < 1.0 {
            let tail = term.abs() * r / (1.0 - r);
            if tail <= SERIES_TOL * sum.abs() && term.abs() <= SERIES_TOL * sum.abs() {
                return Ok(sum);
            }
        }
        if !sum.is_finite() {
            break;
        }
    }
    Err(Error::NonConvergence {
        what: "hypergeometric series",
        residual: term.abs() / sum.abs().max(f64::MIN_POSITIVE),
    })
}

/// Error function (thin wrapper over the libm port).
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}
