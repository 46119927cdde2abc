//! Sample means with standard errors and the (weighted) two-sample
//! Kolmogorov-Smirnov test.

use serde::Serialize;

use crate::{Error, Result};

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    /// `|mean - target| / se`, infinite when `se = 0` and the mean is off target.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else if self.se > 0.0 {
            d / self.se
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, target: f64, k: f64) -> bool {
        self.z_score(target) <= k
    }
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    if n == 0 {
        return MeanSe { mean: f64::NAN, se: f64::NAN, n };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanSe { mean, se: f64::INFINITY, n };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    MeanSe { mean, se: (var / n as f64).sqrt(), n }
}

/// Sample variance with its standard error, from the fourth central moment.
pub fn variance_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    if n < 4 {
        return MeanSe { mean: f64::NAN, se: f64::NAN, n };
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
    let var = m2 * nf / (nf - 1.0);
    MeanSe { mean: var, se: ((m4 - m2 * m2) / nf).max(0.0).sqrt(), n }
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut acc = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        acc += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

/// Outcome of a two-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub n_eff_a: f64,
    pub n_eff_b: f64,
    pub p_value: f64,
}

impl KsResult {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level
    }
}

fn ecdf_parts(xs: &[f64], ws: Option<&[f64]>) -> Result<(Vec<(f64, f64)>, f64)> {
    if let Some(w) = ws {
        if w.len() != xs.len() {
            return Err(Error::Shape { expected: xs.len(), got: w.len() });
        }
    }
    let mut pts: Vec<(f64, f64)> = xs.iter().enumerate().map(|(i, &x)| (x, ws.map_or(1.0, |w| w[i]))).collect();
    if pts.iter().any(|(x, w)| !x.is_finite() || !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParameter("samples and weights must be finite, weights non-negative".into()));
    }
    let total: f64 = pts.iter().map(|p| p.1).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("sample has zero total weight".into()));
    }
    let sum_sq: f64 = pts.iter().map(|p| p.1 * p.1).sum();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok((pts, total * total / sum_sq))
}

/// Two-sample KS test. Weighted samples use the effective size
/// `(Σw)² / Σw²`; unweighted samples pass `None`.
pub fn ks_two_sample(a: &[f64], wa: Option<&[f64]>, b: &[f64], wb: Option<&[f64]>) -> Result<KsResult> {
    let (pa, na) = ecdf_parts(a, wa)?;
    let (pb, nb) = ecdf_parts(b, wb)?;
    let ta: f64 = pa.iter().map(|p| p.1).sum();
    let tb: f64 = pb.iter().map(|p| p.1).sum();
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut d = 0.0f64;
    while i < pa.len() || j < pb.len() {
        let x = match (pa.get(i), pb.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => break,
        };
        while i < pa.len() && pa[i].0 == x {
            fa += pa[i].1 / ta;
            i += 1;
        }
        while j < pb.len() && pb[j].0 == x {
            fb += pb[j].1 / tb;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    let ne = na * nb / (na + nb);
    let sq = ne.sqrt();
    let p_value = kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d);
    Ok(KsResult { statistic: d, n_eff_a: na, n_eff_b: nb, p_value })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_se() {
        let m = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn identical_samples_have_zero_statistic() {
        let x = [0.1, 0.5, 0.2, 0.9];
        let r = ks_two_sample(&x, None, &x, None).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // P(K > 1.36) = 0.04948...
        assert!((kolmogorov_sf(1.36) - 0.049_485_876_755_377_91).abs() < 1e-12);
    }
}
