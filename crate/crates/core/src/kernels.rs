//! Volterra kernels of the fractional Brownian sheet, its covariance, and the
//! variance of the sum of two sheets driven by the same Brownian sheet.
//!
//! The one-dimensional kernel is
//!
//! ```text
//! K^H(t,s) = c_H (t-s)^{H-1/2} F(H-1/2, 1/2-H; H+1/2; 1-t/s) / Γ(H+1/2),   0 < s < t,
//! ```
//!
//! with `c_H = V_H^{-1/2}`, `V_H = Γ(2-2H) cos(πH) / (πH(1-2H))`. The constant
//! makes `∫_0^t K^H(t,s)^2 ds = t^{2H}`, matching the covariance used here.
//! The hypergeometric factor is evaluated after the Pfaff map as
//! `(t/s)^{1/2-H} F(H-1/2, 2H; H+1/2; (t-s)/t)`.

use serde::Serialize;

use crate::quad::graded_gauss;
use crate::specfun::{gamma, hyp2f1_unit, rgamma};
use crate::{Error, Result};

/// Hurst indices `(α, β) ∈ (0, 1/2]^2` of one fractional Brownian sheet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HurstPair {
    pub alpha: f64,
    pub beta: f64,
}

impl HurstPair {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for v in [alpha, beta] {
            if !(v > 0.0 && v <= 0.5) {
                return Err(Error::InvalidParameter(format!("Hurst index {v} outside (0, 1/2]")));
            }
        }
        Ok(Self { alpha, beta })
    }

    pub fn sheet() -> Self {
        Self { alpha: 0.5, beta: 0.5 }
    }

    /// `1/2 - α`.
    pub fn a(&self) -> f64 {
        0.5 - self.alpha
    }

    /// `1/2 - β`.
    pub fn b(&self) -> f64 {
        0.5 - self.beta
    }

    pub fn is_sheet(&self) -> bool {
        self.alpha == 0.5 && self.beta == 0.5
    }

    /// Strict componentwise order `self ≺ other`.
    pub fn precedes(&self, other: &HurstPair) -> bool {
        self.alpha < other.alpha && self.beta < other.beta
    }
}

/// Two Hurst pairs with `lo ≺ hi` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HurstOrdering {
    pub lo: HurstPair,
    pub hi: HurstPair,
}

impl HurstOrdering {
    pub fn new(lo: HurstPair, hi: HurstPair) -> Result<Self> {
        if !lo.precedes(&hi) {
            return Err(Error::Ordering(format!(
                "need lo ≺ hi componentwise, got lo = ({}, {}), hi = ({}, {})",
                lo.alpha, lo.beta, hi.alpha, hi.beta
            )));
        }
        Ok(Self { lo, hi })
    }
}

/// Normalising constant `c_H` of the kernel.
pub fn kernel_norm(h: f64) -> f64 {
    let d = 1.0 - 2.0 * h;
    if d == 0.0 {
        return 1.0;
    }
    // cos(πH)/(1-2H) = sin(πd/2)/d
    let ratio = (std::f64::consts::FRAC_PI_2 * d).sin() / d;
    let v = gamma(2.0 - 2.0 * h).unwrap_or(f64::NAN) * ratio / (std::f64::consts::PI * h);
    v.powf(-0.5)
}

/// Precomputed constants of `K^H` for repeated evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Kernel1d {
    h: f64,
    scale: f64,
}

impl Kernel1d {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h <= 0.5) {
            return Err(Error::InvalidParameter(format!("Hurst index {h} outside (0, 1/2]")));
        }
        Ok(Self { h, scale: kernel_norm(h) * rgamma(h + 0.5) })
    }

    pub fn hurst(&self) -> f64 {
        self.h
    }

    /// `K^H(t, s)` given `s` and the gap `t - s`, both positive.
    ///
    /// Passing the gap separately keeps the value accurate when `s` is close to `t`.
    pub fn eval_gap(&self, t: f64, s: f64, gap: f64) -> Result<f64> {
        if self.h == 0.5 {
            return Ok(1.0);
        }
        let h = self.h;
        let w = gap / t;
        let f = hyp2f1_unit(h - 0.5, 2.0 * h, h + 0.5, w, s / t)?;
        Ok(self.scale * gap.powf(h - 0.5) * (t / s).powf(0.5 - h) * f)
    }

    pub fn eval(&self, t: f64, s: f64) -> Result<f64> {
        if !(s > 0.0 && s < t) {
            return Err(Error::Domain { function: "kernel_1d", value: s });
        }
        self.eval_gap(t, s, t - s)
    }
}

/// `K^H(t, s)` for `0 < s < t`; the first argument is the later time.
pub fn kernel_1d(h: f64, t: f64, s: f64) -> Result<f64> {
    Kernel1d::new(h)?.eval(t, s)
}

/// `K^{α,β}(z, ζ) = K^α(s, s') K^β(t, t')` for `ζ = (s', t') ≺ z = (s, t)`.
pub fn kernel_2d(hp: &HurstPair, z: (f64, f64), zeta: (f64, f64)) -> Result<f64> {
    Ok(kernel_1d(hp.alpha, z.0, zeta.0)? * kernel_1d(hp.beta, z.1, zeta.1)?)
}

/// Covariance `R^{α,β}(z, z')` of the fractional Brownian sheet.
pub fn covariance(hp: &HurstPair, z: (f64, f64), z2: (f64, f64)) -> f64 {
    let axis = |x: f64, y: f64, e: f64| x.powf(e) + y.powf(e) - (x - y).abs().powf(e);
    0.25 * axis(z.0, z2.0, 2.0 * hp.alpha) * axis(z.1, z2.1, 2.0 * hp.beta)
}

const GRADED_ORDER: usize = 8;

fn cells_for(quad_n: usize) -> usize {
    (quad_n / (2 * GRADED_ORDER)).max(4)
}

/// `∫_0^{min(t1,t2)} K^{h1}(t1, u) K^{h2}(t2, u) du` on a graded mesh with
/// about `quad_n` nodes.
pub fn kernel_cross_integral(h1: f64, h2: f64, t1: f64, t2: f64, quad_n: usize) -> Result<f64> {
    let k1 = Kernel1d::new(h1)?;
    let k2 = Kernel1d::new(h2)?;
    let m = t1.min(t2);
    if m <= 0.0 {
        return Ok(0.0);
    }
    let mut err = None;
    let v = graded_gauss(0.0, m, cells_for(quad_n), GRADED_ORDER, |_, u, db| {
        let g1 = (t1 - m) + db;
        let g2 = (t2 - m) + db;
        match (k1.eval_gap(t1, u, g1), k2.eval_gap(t2, u, g2)) {
            (Ok(a), Ok(b)) => a * b,
            (Err(e), _) | (_, Err(e)) => {
                err = Some(e);
                0.0
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// `∫_{[0, z∧z']} K^{α,β}(z, ζ) K^{α,β}(z', ζ) dζ` by quadrature.
pub fn covariance_by_quadrature(hp: &HurstPair, z: (f64, f64), z2: (f64, f64), quad_n: usize) -> Result<f64> {
    let s = kernel_cross_integral(hp.alpha, hp.alpha, z.0, z2.0, quad_n)?;
    let t = kernel_cross_integral(hp.beta, hp.beta, z.1, z2.1, quad_n)?;
    Ok(s * t)
}

// σ² from the six one-dimensional integrals
fn mixed_variance_once(lo: &HurstPair, hi: &HurstPair, z: (f64, f64), quad_n: usize) -> Result<f64> {
    let (s, t) = z;
    let ss = kernel_cross_integral(lo.alpha, lo.alpha, s, s, quad_n)?;
    let sx = kernel_cross_integral(lo.alpha, hi.alpha, s, s, quad_n)?;
    let sh = kernel_cross_integral(hi.alpha, hi.alpha, s, s, quad_n)?;
    let tt = kernel_cross_integral(lo.beta, lo.beta, t, t, quad_n)?;
    let tx = kernel_cross_integral(lo.beta, hi.beta, t, t, quad_n)?;
    let th = kernel_cross_integral(hi.beta, hi.beta, t, t, quad_n)?;
    Ok(ss * tt + 2.0 * sx * tx + sh * th)
}

/// `∫_{[0,z]} (K^{lo}(z,ζ) + K^{hi}(z,ζ))^2 dζ` without checking the ordering.
///
/// Fails when doubling `quad_n` moves the value by more than 0.5%.
pub fn mixed_variance(lo: &HurstPair, hi: &HurstPair, z: (f64, f64), quad_n: usize) -> Result<f64> {
    if z.0 <= 0.0 || z.1 <= 0.0 {
        return Ok(0.0);
    }
    let v1 = mixed_variance_once(lo, hi, z, quad_n)?;
    let v2 = mixed_variance_once(lo, hi, z, 2 * quad_n)?;
    let rel = (v2 - v1).abs() / v2.abs().max(f64::MIN_POSITIVE);
    if rel > 5e-3 {
        return Err(Error::NonConvergence { what: "mixed variance quadrature", residual: rel });
    }
    Ok(v2)
}

/// Variance `σ²(z)` of `B^{lo}_z + B^{hi}_z` for an ordered pair.
pub fn sigma2(ord: &HurstOrdering, z: (f64, f64), quad_n: usize) -> Result<f64> {
    mixed_variance(&ord.lo, &ord.hi, z, quad_n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sheet_kernel_is_one() {
        assert_eq!(kernel_1d(0.5, 1.0, 0.3).unwrap(), 1.0);
        assert!(kernel_1d(0.3, 1.0, 1.0).is_err());
        assert!(kernel_1d(0.3, 1.0, 0.0).is_err());
    }

    #[test]
    fn covariance_examples() {
        let hp = HurstPair::new(0.3, 0.3).unwrap();
        assert!((covariance(&hp, (1.0, 1.0), (1.0, 1.0)) - 1.0).abs() < 1e-15);
        assert!((covariance(&hp, (0.5, 0.5), (1.0, 1.0)) - 0.25).abs() < 1e-15);
        assert_eq!(covariance(&hp, (0.0, 0.7), (1.0, 1.0)), 0.0);
    }

    #[test]
    fn ordering_is_strict() {
        let a = HurstPair::new(0.3, 0.3).unwrap();
        assert!(HurstOrdering::new(a, a).is_err());
        assert!(HurstPair::new(0.6, 0.3).is_err());
    }
}
