//! Quadrature rules: Gauss-Legendre on finite intervals, tanh-sinh for
//! integrands with endpoint singularities, and graded composite rules.

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use crate::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integral of `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c + r * x);
        }
        acc * r
    }
}

// P_n(x) and P_n'(x) by the three-term recurrence
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared rules of small orders, built once.
pub fn gauss_legendre(n: usize) -> &'static GaussLegendre {
    static CACHE: [OnceLock<GaussLegendre>; 33] = [const { OnceLock::new() }; 33];
    assert!((1..=32).contains(&n), "cached Gauss-Legendre orders are 1..=32");
    CACHE[n].get_or_init(|| GaussLegendre::new(n))
}

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Double-exponential quadrature for integrands singular at the endpoints.
///
/// The integrand receives `(x, x - a, b - x)`; the two distances are computed
/// from the substitution directly, so they stay accurate near the endpoints.
#[derive(Debug, Clone, Copy)]
pub struct TanhSinh {
    pub rel_tol: f64,
    pub max_level: usize,
}

impl Default for TanhSinh {
    fn default() -> Self {
        Self { rel_tol: 1e-12, max_level: 9 }
    }
}

const TS_TMAX: f64 = 6.5;

impl TanhSinh {
    pub fn new(rel_tol: f64) -> Self {
        Self { rel_tol, ..Self::default() }
    }

    pub fn integrate<F>(&self, a: f64, b: f64, mut f: F) -> Result<Estimate>
    where
        F: FnMut(f64, f64, f64) -> f64,
    {
        if b == a {
            return Ok(Estimate { value: 0.0, error: 0.0 });
        }
        let half = 0.5 * (b - a);
        let mut eval = |t: f64| -> f64 {
            let u = FRAC_PI_2 * t.sinh();
            let cu = u.cosh();
            let w = half * FRAC_PI_2 * t.cosh() / (cu * cu);
            if w == 0.0 || !w.is_finite() {
                return 0.0;
            }
            let da = 2.0 * half / (1.0 + (-2.0 * u).exp());
            let db = 2.0 * half / (1.0 + (2.0 * u).exp());
            if da <= 0.0 || db <= 0.0 {
                return 0.0;
            }
            let x = if t <= 0.0 { a + da } else { b - db };
            w * f(x, da, db)
        };

        let mut step = 1.0;
        let kmax = (TS_TMAX / step) as i64;
        let mut sum = eval(0.0);
        for k in 1..=kmax {
            let t = k as f64 * step;
            sum += eval(t) + eval(-t);
        }
        let mut prev = sum * step;
        let mut err = f64::INFINITY;
        for level in 1..=self.max_level {
            step *= 0.5;
            let kmax = (TS_TMAX / step) as i64;
            let mut k = 1;
            while k <= kmax {
                let t = k as f64 * step;
                sum += eval(t) + eval(-t);
                k += 2;
            }
            let cur = sum * step;
            err = (cur - prev).abs();
            if level >= 3 && err <= self.rel_tol * cur.abs() {
                return Ok(Estimate { value: cur, error: err });
            }
            if !cur.is_finite() {
                break;
            }
            prev = cur;
        }
        if err <= 1e3 * self.rel_tol * prev.abs() {
            return Ok(Estimate { value: prev, error: err });
        }
        Err(Error::NonConvergence { what: "tanh-sinh quadrature", residual: err / prev.abs().max(f64::MIN_POSITIVE) })
    }
}

/// Composite Gauss-Legendre over a graded mesh. The integrand receives
/// `(x, x - a, b - x)` like [`TanhSinh::integrate`].
pub fn graded_gauss<F>(a: f64, b: f64, cells_per_side: usize, order: usize, mut f: F) -> f64
where
    F: FnMut(f64, f64, f64) -> f64,
{
    let mid = 0.5 * (a + b);
    let half = mid - a;
    let rule = gauss_legendre(order);
    let ratio = 0.2f64;
    let mut acc = 0.0;
    // distances from the nearer endpoint: [d_{k+1}, d_k] with d_0 = half
    let mut outer = half;
    for k in 0..cells_per_side {
        let inner = if k + 1 == cells_per_side { 0.0 } else { outer * ratio };
        let c = 0.5 * (outer + inner);
        let r = 0.5 * (outer - inner);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let d = c + r * x;
            acc += w * r * f(a + d, d, (b - a) - d);
            acc += w * r * f(b - d, (b - a) - d, d);
        }
        outer = inner;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_polynomials() {
        let rule = GaussLegendre::new(8);
        let v = rule.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn tanh_sinh_endpoint_singularity() {
        // ∫_0^1 x^{-0.9} dx = 10
        let est = TanhSinh::default().integrate(0.0, 1.0, |_, da, _| da.powf(-0.9)).unwrap();
        assert!((est.value - 10.0).abs() < 1e-9, "{}", est.value);
        // ∫_0^1 x^{-0.5}(1-x)^{-0.5} dx = π
        let est = TanhSinh::default().integrate(0.0, 1.0, |_, da, db| (da * db).powf(-0.5)).unwrap();
        assert!((est.value - std::f64::consts::PI).abs() < 1e-11);
    }

    #[test]
    fn graded_rule_singular_both_ends() {
        // each graded cell sees the singularity at 1/4 of its length: error ~ 2.6^{-2 order}
        let v = graded_gauss(0.0, 1.0, 40, 8, |_, da, db| (da * db).powf(-0.5));
        assert!((v - std::f64::consts::PI).abs() < 1e-6, "{v}");
        let v = graded_gauss(0.0, 1.0, 40, 16, |_, da, db| (da * db).powf(-0.5));
        assert!((v - std::f64::consts::PI).abs() < 1e-12, "{v}");
    }
}
