//! Constant sequences controlling the Neumann series of the drift pair, their
//! asymptotics, and randomized checks of the Riemann-Liouville difference
//! estimates.
//!
//! Exponents follow the drift-pair notation: `(a, b)` belong to the rougher
//! sheet and `(a', b')` to the smoother one, with `a > a'`, `b > b'`. All
//! constant sequences are stored in log form where they can under- or overflow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::fraccalc::{rl_integral_at, Field2D, FracOrder, Grid2D};
use crate::girsanov::{neumann_terms, DriftSpec};
use crate::kernels::HurstOrdering;
use crate::quad::{graded_gauss, TanhSinh};
use crate::report::Check;
use crate::simulate::{derive_seed, run_paths, McConfig, NoisePair};
use crate::specfun::{gamma, ln_gamma, ln_gamma_ratio};
use crate::{Error, Result};

/// The four exponents and the quantities derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentPack {
    pub a: f64,
    pub b: f64,
    pub ap: f64,
    pub bp: f64,
}

impl ExponentPack {
    pub fn new(a: f64, b: f64, ap: f64, bp: f64) -> Result<Self> {
        for v in [a, b, ap, bp] {
            if !(0.0..0.5).contains(&v) {
                return Err(Error::InvalidParameter(format!("exponent {v} outside [0, 1/2)")));
            }
        }
        if !(a > ap && b > bp) {
            return Err(Error::InvalidParameter(format!(
                "need a > a' and b > b', got (a, b, a', b') = ({a}, {b}, {ap}, {bp})"
            )));
        }
        Ok(Self { a, b, ap, bp })
    }

    /// Exponents of an ordered pair: `(a, b)` from `lo`, `(a', b')` from `hi`.
    pub fn from_ordering(ord: &HurstOrdering) -> Result<Self> {
        Self::new(ord.lo.a(), ord.lo.b(), ord.hi.a(), ord.hi.b())
    }

    /// `α_n = (n+1)a - n a' + 1`.
    pub fn alpha_n(&self, n: usize) -> f64 {
        self.gamma_n(n) + 1.0
    }

    pub fn beta_n(&self, n: usize) -> f64 {
        self.gamma_tilde_n(n) + 1.0
    }

    /// `γ(n) = (n+1)a - n a'`.
    pub fn gamma_n(&self, n: usize) -> f64 {
        let nf = n as f64;
        (nf + 1.0) * self.a - nf * self.ap
    }

    pub fn gamma_tilde_n(&self, n: usize) -> f64 {
        let nf = n as f64;
        (nf + 1.0) * self.b - nf * self.bp
    }

    /// `γ = a - a' + b - b'`.
    pub fn gamma(&self) -> f64 {
        self.a - self.ap + self.b - self.bp
    }

    pub fn p(&self) -> f64 {
        (1.0 - self.ap).min(1.0 - self.bp)
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma().min(self.a + self.b + self.p())
    }

    pub fn eta(&self) -> f64 {
        self.p().min(self.gamma())
    }
}

/// `c1, c2, c3` and the two singular integrals `d5, d6`, each computed twice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub d5: f64,
    pub d6: f64,
    /// `d5`, `d6` on a fixed graded mesh, for cross-checking.
    pub d5_fixed: f64,
    pub d6_fixed: f64,
}

// ln(x) for x in (0, 1) given x and 1 - x
fn ln_unit(x: f64, one_minus: f64) -> f64 {
    if x < 0.5 {
        x.ln()
    } else {
        (-one_minus).ln_1p()
    }
}

// ∫_0^1 (1 - v^e)(1-v)^{-e'-1} dv, the regular part of the singular integral
fn d_remainder_integrand(e: f64, ep: f64, x: f64, y: f64) -> f64 {
    // (1 - v^e)/(1 - v) stays finite as v -> 1
    (-(e * ln_unit(x, y)).exp_m1() / y) * y.powf(-ep)
}

// ∫_0^1 ((1-v)^e + |1 - v^e|) / (1-v)^{e'+1} dv. The (1-v)^{e-e'-1} part is
// done in closed form since it is barely integrable when e - e' is small.
fn d_constant_adaptive(e: f64, ep: f64) -> Result<f64> {
    let est = TanhSinh::new(1e-12).integrate(0.0, 1.0, |_, x, y| d_remainder_integrand(e, ep, x, y))?;
    Ok(1.0 / (e - ep) + est.value)
}

// Same integral with the remainder on a fixed graded Gauss mesh.
fn d_constant_fixed(e: f64, ep: f64) -> f64 {
    1.0 / (e - ep) + graded_gauss(0.0, 1.0, 40, 16, |_, x, y| d_remainder_integrand(e, ep, x, y))
}

pub fn compute_constants(exp: &ExponentPack) -> Result<Constants> {
    let g = gamma(1.0 - exp.ap)? * gamma(1.0 - exp.bp)?;
    Ok(Constants {
        c1: exp.ap / g,
        c2: exp.bp / g,
        c3: exp.ap * exp.bp / g,
        d5: d_constant_adaptive(exp.b, exp.bp)?,
        d6: d_constant_adaptive(exp.a, exp.ap)?,
        d5_fixed: d_constant_fixed(exp.b, exp.bp),
        d6_fixed: d_constant_fixed(exp.a, exp.ap),
    })
}

// ∫_0^1 |1 - u^{e'-e}| (1-u)^{-e'-1} u^{(n+2)e - n e'} du
fn d_term(e: f64, ep: f64, n: usize) -> Result<f64> {
    let nf = n as f64;
    let power = (nf + 2.0) * e - nf * ep;
    let est = TanhSinh::new(1e-12).integrate(0.0, 1.0, |_, x, y| {
        let lnu = ln_unit(x, y);
        let num = ((ep - e) * lnu).exp_m1();
        (num / y) * y.powf(-ep) * (power * lnu).exp()
    })?;
    Ok(est.value)
}

/// `(d1[n], d2[n])`, with the absolute value taken inside the numerator.
pub fn d_sequence(exp: &ExponentPack, n: usize) -> Result<(f64, f64)> {
    Ok((d_term(exp.a, exp.ap, n)?, d_term(exp.b, exp.bp, n)?))
}

/// `Γ(x)/Γ(x+s)` products of the four kappa families at step `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kappas {
    pub kappa: f64,
    pub kappa_t: f64,
    pub kappa_p: f64,
    pub kappa_tp: f64,
}

pub fn kappas(exp: &ExponentPack, n: usize) -> Result<Kappas> {
    let (an, bn) = (exp.alpha_n(n), exp.beta_n(n));
    let (a, b, ap, bp) = (exp.a, exp.b, exp.ap, exp.bp);
    let pair = |x: f64, y: f64, sx: f64, sy: f64, dx: f64, dy: f64| -> Result<f64> {
        Ok((ln_gamma_ratio(x, x + sx)? + ln_gamma_ratio(y, y + sy)? + dx + dy).exp())
    };
    Ok(Kappas {
        kappa: pair(an, bn, a, b, 0.0, 0.0)?,
        kappa_t: pair(an, bn, a - ap, b - bp, 0.0, 0.0)?,
        kappa_p: pair(an + a, bn + b, a - ap, b - bp, 0.0, 0.0)?,
        kappa_tp: (ln_gamma_ratio(an + a - ap, an + 2.0 * a - ap)? + ln_gamma_ratio(bn + b - bp, bn + 2.0 * b - bp)?)
            .exp(),
    })
}

/// Recursion state for `C_n` and `C*_n` and every sequence feeding them.
#[derive(Debug, Clone, Serialize)]
pub struct BoundSequences {
    pub exponents: ExponentPack,
    pub constants: Constants,
    pub bsup: f64,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub kappa: Vec<f64>,
    pub kappa_t: Vec<f64>,
    pub kappa_p: Vec<f64>,
    pub kappa_tp: Vec<f64>,
    pub r: Vec<f64>,
    pub m: Vec<f64>,
    pub l: Vec<f64>,
    pub ln_c: Vec<f64>,
    pub ln_cstar: Vec<f64>,
    pub ln_g: Vec<f64>,
}

fn log_add(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return y;
    }
    if y == f64::NEG_INFINITY {
        return x;
    }
    let hi = x.max(y);
    hi + (-(x - y).abs()).exp().ln_1p()
}

/// `c*_0 = Γ(a)Γ(b) / (4 Γ(2a)Γ(2b))` per unit of `‖b‖_∞`.
pub fn cstar0_factor(a: f64, b: f64) -> Result<f64> {
    Ok(0.25 * (ln_gamma(a)? - ln_gamma(2.0 * a)? + ln_gamma(b)? - ln_gamma(2.0 * b)?).exp())
}

/// Fill every sequence for `n = 0..=n_max`.
pub fn run_recursions(exp: &ExponentPack, bsup: f64, n_max: usize) -> Result<BoundSequences> {
    if !(bsup >= 0.0) || !bsup.is_finite() {
        return Err(Error::InvalidParameter(format!("drift bound {bsup} must be finite and non-negative")));
    }
    let constants = compute_constants(exp)?;
    let Constants { c1, c2, c3, d5, d6, .. } = constants;
    let (a, b) = (exp.a, exp.b);
    let tail_den = a * b * gamma(a)? * gamma(b)?;
    let len = n_max + 1;
    let mut seq = BoundSequences {
        exponents: *exp,
        constants,
        bsup,
        d1: Vec::with_capacity(len),
        d2: Vec::with_capacity(len),
        kappa: Vec::with_capacity(len),
        kappa_t: Vec::with_capacity(len),
        kappa_p: Vec::with_capacity(len),
        kappa_tp: Vec::with_capacity(len),
        r: Vec::with_capacity(len),
        m: Vec::with_capacity(len),
        l: Vec::with_capacity(len),
        ln_c: Vec::with_capacity(len),
        ln_cstar: Vec::with_capacity(len),
        ln_g: Vec::with_capacity(len),
    };
    let ln_b = bsup.ln();
    seq.ln_c.push(ln_b);
    seq.ln_cstar.push(ln_b + cstar0_factor(a, b)?.ln());
    for n in 0..len {
        let (d1, d2) = d_sequence(exp, n)?;
        let k = kappas(exp, n)?;
        let extra = c3 * (d5 * d1 + d6 * d2) / tail_den;
        let r = (1.0 + c3 * d1 * d2) * k.kappa_t + (c1 * d1 + c2 * d2) * k.kappa + extra;
        let m = k.kappa_p + k.kappa_tp * (c1 * d1 + c2 * d2 + c3 * d1 * d2);
        let l = extra;
        let ln_c = seq.ln_c[n];
        let ln_cs = seq.ln_cstar[n];
        seq.ln_g.push(l.ln() + ln_c);
        if n < n_max {
            seq.ln_c.push(r.ln() + ln_c);
            seq.ln_cstar.push(log_add(m.ln() + ln_cs, l.ln() + ln_c));
        }
        seq.d1.push(d1);
        seq.d2.push(d2);
        seq.kappa.push(k.kappa);
        seq.kappa_t.push(k.kappa_t);
        seq.kappa_p.push(k.kappa_p);
        seq.kappa_tp.push(k.kappa_tp);
        seq.r.push(r);
        seq.m.push(m);
        seq.l.push(l);
    }
    Ok(seq)
}

impl BoundSequences {
    pub fn n_max(&self) -> usize {
        self.ln_c.len() - 1
    }

    pub fn c(&self, n: usize) -> f64 {
        self.ln_c[n].exp()
    }

    pub fn cstar(&self, n: usize) -> f64 {
        self.ln_cstar[n].exp()
    }

    pub fn g(&self, n: usize) -> f64 {
        self.ln_g[n].exp()
    }

    /// Steps `n` where `κ_n` exceeds its Wendel bound.
    pub fn wendel_violations(&self) -> Vec<usize> {
        let e = &self.exponents;
        let lead = (1.0 + e.a).powf(1.0 - e.a) * (1.0 + e.b).powf(1.0 - e.b);
        (0..self.kappa.len())
            .filter(|&n| {
                let bound = lead * e.alpha_n(n).powf(-e.a) * e.beta_n(n).powf(-e.b);
                self.kappa[n] > bound * (1.0 + 1e-12)
            })
            .collect()
    }

    /// `ln(C*_k T^{kγ})`.
    fn ln_weighted_cstar(&self, k: usize, t: f64) -> f64 {
        self.ln_cstar[k] + k as f64 * self.exponents.gamma() * t.ln()
    }

    /// `Σ_{k=n+1}^{n_max} C*_k T^{kγ}`.
    pub fn cstar_tail(&self, n: usize, t: f64) -> f64 {
        let mut acc = f64::NEG_INFINITY;
        for k in n + 1..=self.n_max() {
            acc = log_add(acc, self.ln_weighted_cstar(k, t));
        }
        acc.exp()
    }

    /// Smallest `n` whose tail falls below `tol`.
    pub fn tail_index(&self, t: f64, tol: f64) -> Option<usize> {
        let nm = self.n_max();
        let mut tails = vec![f64::NEG_INFINITY; nm + 1];
        for k in (0..nm).rev() {
            tails[k] = log_add(tails[k + 1], self.ln_weighted_cstar(k + 1, t));
        }
        (0..nm).find(|&n| tails[n].exp() < tol)
    }
}

/// Depth used when checking recursions and choosing truncations.
pub const RECURSION_DEPTH: usize = 400;

/// Truncation depth whose `C*` tail at horizon `t` is below `tol`.
pub fn default_truncation(exp: &ExponentPack, bsup: f64, t: f64, tol: f64) -> Result<usize> {
    let seq = run_recursions(exp, bsup.max(f64::MIN_POSITIVE), RECURSION_DEPTH)?;
    seq.tail_index(t, tol).map(|n| n.max(1)).ok_or(Error::Truncation {
        depth: RECURSION_DEPTH,
        bound: seq.cstar_tail(0, t),
        tol,
    })
}

/// Log-spaced distinct integers in `[lo, hi]`.
pub fn log_spaced(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    let (l, h) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> =
        (0..count).map(|k| (l + (h - l) * k as f64 / (count - 1) as f64).exp().round() as usize).collect();
    out.dedup();
    out
}

/// No-growth surrogate for an `O(1)` claim: the maximum over the last third
/// of the samples is at most 1.5 times the maximum over the first third.
pub fn bounded_trend(values: &[f64]) -> (bool, f64) {
    let k = values.len() / 3;
    if k == 0 {
        return (true, 0.0);
    }
    let first = values[..k].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let last = values[values.len() - k..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ratio = if first > 0.0 {
        last / first
    } else if last > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    (ratio <= 1.5 && values.iter().all(|v| v.is_finite()), ratio)
}

fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0).unwrap_or(0.0)
}

/// Growth constant `B = max_k r_k (k+1)^η`, so that `C_n (n!)^η / B^n ≤ C_0`.
pub fn fitted_growth(seq: &BoundSequences, n_hi: usize) -> f64 {
    let eta = seq.exponents.eta();
    (0..n_hi.min(seq.r.len())).map(|k| seq.r[k] * ((k + 1) as f64).powf(eta)).fold(0.0, f64::max)
}

/// Bounded-trend checks of every asymptotic claim over `n ∈ [lo, hi]`.
pub fn asymptotic_checks(seq: &BoundSequences, lo: usize, hi: usize) -> Vec<Check> {
    let e = seq.exponents;
    let ns = log_spaced(lo, hi.min(seq.n_max()), 24);
    let growth = fitted_growth(seq, hi);
    let ln_growth = growth.ln();
    let mut checks = Vec::new();
    let mut push = |name: &str, f: &dyn Fn(usize) -> f64| {
        let vals: Vec<f64> = ns.iter().map(|&n| f(n)).collect();
        let (ok, ratio) = bounded_trend(&vals);
        checks.push(Check::new(name, ok, ratio / 1.5, format!("last/first third max ratio {ratio:.4}")));
    };
    let nf = |n: usize| n as f64;
    push("d1 n^(1-a')", &|n| seq.d1[n] * nf(n).powf(1.0 - e.ap));
    push("d2 n^(1-b')", &|n| seq.d2[n] * nf(n).powf(1.0 - e.bp));
    push("r n^eta", &|n| seq.r[n] * nf(n).powf(e.eta()));
    push("m n^gamma0", &|n| seq.m[n] * nf(n).powf(e.gamma0()));
    push("l n^p", &|n| seq.l[n] * nf(n).powf(e.p()));
    push("kappa n^(a+b)", &|n| seq.kappa[n] * nf(n).powf(e.a + e.b));
    push("kappa~ n^gamma", &|n| seq.kappa_t[n] * nf(n).powf(e.gamma()));
    push("kappa' n^gamma", &|n| seq.kappa_p[n] * nf(n).powf(e.gamma()));
    push("kappa~' n^(a+b)", &|n| seq.kappa_tp[n] * nf(n).powf(e.a + e.b));
    let scaled = |ln_x: f64, n: usize| (ln_x + e.eta() * ln_factorial(n) - nf(n) * ln_growth).exp();
    push("C (n!)^eta / B^n", &|n| scaled(seq.ln_c[n], n));
    push("C* (n!)^eta / B^n", &|n| scaled(seq.ln_cstar[n], n));
    checks
}

/// Nodewise check of one Neumann term against its bound.
#[derive(Debug, Clone, Serialize)]
pub struct TermCheck {
    pub n: usize,
    pub f_ratio: f64,
    pub j_ratio: f64,
    pub f_violations: usize,
    pub j_violations: usize,
    pub worst_f_node: (usize, usize),
    pub worst_j_node: (usize, usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct NeumannReport {
    pub exponents: ExponentPack,
    pub bsup: f64,
    pub slack: f64,
    pub terms: Vec<TermCheck>,
    pub checks: Vec<Check>,
}

/// Compare `|f_n|` and `J^n` with `C_n` and `C*_n` times `s^{γ(n)} t^{γ~(n)}`
/// on every interior node, for `n ≤ n_max ≤ 4`.
pub fn verify_neumann_bounds(
    ord: &HurstOrdering,
    noise: &NoisePair,
    b: &DriftSpec,
    x0: f64,
    n_max: usize,
    slack: f64,
) -> Result<NeumannReport> {
    if n_max > 4 {
        return Err(Error::InvalidParameter(format!("Neumann bound verification supports n ≤ 4, got {n_max}")));
    }
    let exp = ExponentPack::from_ordering(ord)?;
    let path = noise.sum().map(|v| v + x0);
    let b_field = b.sample(&path);
    let bsup = b_field.sup_norm();
    let seq = run_recursions(&exp, bsup, n_max.max(1))?;
    let terms = neumann_terms(&b_field, ord, n_max)?;
    let grid = noise.grid;
    let mut out = Vec::new();
    let mut checks = Vec::new();
    for term in &terms {
        let n = term.n;
        let (gs, gt) = (exp.gamma_n(n), exp.gamma_tilde_n(n));
        let mut tc = TermCheck {
            n,
            f_ratio: 0.0,
            j_ratio: 0.0,
            f_violations: 0,
            j_violations: 0,
            worst_f_node: (0, 0),
            worst_j_node: (0, 0),
        };
        for i in 1..grid.n() {
            for j in 1..grid.n() {
                let shape = grid.node(i).powf(gs) * grid.node(j).powf(gt);
                let fb = seq.c(n) * shape;
                let jb = seq.cstar(n) * shape;
                let fr = ratio(term.f.at(i, j).abs(), fb);
                let jr = ratio(term.j.at(i, j), jb);
                if fr > tc.f_ratio {
                    tc.f_ratio = fr;
                    tc.worst_f_node = (i, j);
                }
                if jr > tc.j_ratio {
                    tc.j_ratio = jr;
                    tc.worst_j_node = (i, j);
                }
                tc.f_violations += (fr > slack) as usize;
                tc.j_violations += (jr > slack) as usize;
            }
        }
        checks.push(Check::new(
            format!("|f_{n}| <= C_{n} s^g t^g~"),
            tc.f_violations == 0,
            tc.f_ratio / slack,
            format!("max ratio {:.4} at node {:?}", tc.f_ratio, tc.worst_f_node),
        ));
        checks.push(Check::new(
            format!("J^{n} <= C*_{n} s^g t^g~"),
            tc.j_violations == 0,
            tc.j_ratio / slack,
            format!("max ratio {:.4} at node {:?}", tc.j_ratio, tc.worst_j_node),
        ));
        out.push(tc);
    }
    Ok(NeumannReport { exponents: exp, bsup, slack, terms: out, checks })
}

fn ratio(value: f64, bound: f64) -> f64 {
    if value <= 1e-14 * bound.max(1e-300) || value == 0.0 {
        0.0
    } else if bound > 0.0 {
        value / bound
    } else {
        f64::INFINITY
    }
}

/// Outcome of the randomized difference-estimate trials.
#[derive(Debug, Clone, Serialize)]
pub struct RlDifferenceReport {
    pub order: FracOrder,
    pub trials: usize,
    pub slack: f64,
    pub a1_violations: usize,
    pub rf1_violations: usize,
    pub rf2_violations: usize,
    pub a1_worst: f64,
    pub rf1_worst: f64,
    pub rf2_worst: f64,
    /// Largest ratio `|Δ| / bound` for `f ≡ M`, over all trials.
    pub constant_worst: f64,
    /// Ratio of the largest possible increment to the displayed one-sided
    /// bound, attained by a sign pattern aligned with the kernel difference.
    pub rf1_adversarial: f64,
    pub rf2_adversarial: f64,
    pub checks: Vec<Check>,
}

// |(x1-u)^{α-1} - (x2-u)^{α-1}| integrated, plus the new strip: the largest
// one-dimensional increment of I^α g over |g| ≤ 1, divided by the one-sided
// bound |x1-x2|^α + |x1^α - x2^α| (both scaled by 1/α).
fn adversarial_ratio(order: f64, x1: f64, x2: f64) -> f64 {
    let d = (x1 - x2).powf(order);
    let e = x1.powf(order) - x2.powf(order);
    (2.0 * d - e) / (d + e)
}

fn random_field<R: Rng>(grid: Grid2D, m: f64, smooth: bool, rng: &mut R) -> Field2D {
    let raw = if smooth {
        let modes: Vec<[f64; 5]> = (0..4)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.0..8.0),
                    rng.random_range(0.0..6.3),
                    rng.random_range(0.0..8.0),
                    rng.random_range(0.0..6.3),
                ]
            })
            .collect();
        Field2D::from_fn(grid, |s, t| {
            modes.iter().map(|c| c[0] * (c[1] * s + c[2]).cos() * (c[3] * t + c[4]).cos()).sum()
        })
    } else {
        Field2D::from_fn(grid, |_, _| rng.random_range(-1.0..1.0))
    };
    let top = raw.sup_norm();
    if top == 0.0 {
        return Field2D::constant(grid, m);
    }
    raw.map(|v| v * m / top)
}

/// Randomized trials of the two-parameter difference estimate and its two
/// one-sided corollaries, for fields bounded by a random `M ∈ [0.1, 10]` on
/// `[0,T]^2` with a random `T ∈ [0.5, 2]`.
///
/// Fractional integrals are computed exactly for the bilinear interpolant of
/// the field, so the declared slack only absorbs rounding.
pub fn check_rl_difference_estimate(
    ord: FracOrder,
    trials: usize,
    seed: u64,
    grid_n: usize,
) -> Result<RlDifferenceReport> {
    let ord = FracOrder::new(ord.alpha, ord.beta)?;
    let (al, be) = (ord.alpha, ord.beta);
    if !(al > 0.0 && al < 1.0 && be > 0.0 && be < 1.0) {
        return Err(Error::InvalidParameter("difference estimate needs orders strictly inside (0, 1)".into()));
    }
    let lead = 1.0 / (al * be * gamma(al)? * gamma(be)?);
    let slack = 1.0 + 1e-9;
    let mc = McConfig::new(trials, seed);
    let rows: Vec<Result<[f64; 4]>> = run_paths(&mc, |k, s| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s, 0xA1));
        let t_max = rng.random_range(0.5..2.0);
        let grid = Grid2D::new(t_max, grid_n)?;
        let m = rng.random_range(0.1..10.0);
        let f = random_field(grid, m, k % 2 == 1, &mut rng);
        let mut pick = |hi: f64| {
            let u: f64 = rng.random_range(0.0..hi);
            let w: f64 = rng.random_range(0.0..hi);
            if rng.random_bool(0.1) {
                (u.max(w), u.max(w))
            } else {
                (u.max(w), u.min(w).max(1e-9))
            }
        };
        let (x1, x2) = pick(t_max);
        let (y1, y2) = pick(t_max);
        let s_term = (x1.powf(al) - x2.powf(al)).abs()
            + (x1 - x2).powf(al)
            + (y1.powf(be) - y2.powf(be)).abs()
            + (y1 - y2).powf(be);
        let a1_bound = 2.0 * m * (t_max.powf(al) + t_max.powf(be)) * lead * s_term;
        let delta = (rl_integral_at(&f, ord, x1, y1) - rl_integral_at(&f, ord, x2, y2)).abs();
        // one-sided forms: (u, t) vs (u, v) and (s, v) vs (u, v)
        let (u, s_full) = (x2, t_max);
        let (v, t_full) = (y2, t_max);
        let rf1 = (rl_integral_at(&f, ord, u, t_full) - rl_integral_at(&f, ord, u, v)).abs();
        let rf1_bound = m * u.powf(al) * lead * ((t_full - v).powf(be) + (t_full.powf(be) - v.powf(be)).abs());
        let rf2 = (rl_integral_at(&f, ord, s_full, v) - rl_integral_at(&f, ord, u, v)).abs();
        let rf2_bound = m * v.powf(be) * lead * ((s_full - u).powf(al) + (s_full.powf(al) - u.powf(al)).abs());
        let gc = (gamma(al + 1.0)? * gamma(be + 1.0)?).recip();
        let const_delta = m * gc * (x1.powf(al) * y1.powf(be) - x2.powf(al) * y2.powf(be)).abs();
        Ok([ratio(delta, a1_bound), ratio(rf1, rf1_bound), ratio(rf2, rf2_bound), ratio(const_delta, a1_bound)])
    });
    let mut worst = [0.0f64; 4];
    let mut viol = [0usize; 3];
    for row in rows {
        let r = row?;
        for k in 0..4 {
            worst[k] = worst[k].max(r[k]);
        }
        for k in 0..3 {
            viol[k] += (r[k] > slack) as usize;
        }
    }
    let rf1_adversarial = adversarial_ratio(be, 1.0, 0.9);
    let rf2_adversarial = adversarial_ratio(al, 1.0, 0.9);
    let checks = vec![
        Check::new("difference estimate", viol[0] == 0, worst[0], format!("{} violations in {trials} trials", viol[0])),
        Check::new(
            "one-sided estimate in t",
            viol[1] == 0,
            worst[1],
            format!("{} violations in {trials} trials", viol[1]),
        ),
        Check::new(
            "one-sided estimate in s",
            viol[2] == 0,
            worst[2],
            format!("{} violations in {trials} trials", viol[2]),
        ),
        Check::new("constant field below bound", worst[3] < 1.0, worst[3], "largest |Δ|/bound for f ≡ M".to_string()),
        Check::reported(
            "one-sided estimate in t, aligned sign pattern",
            rf1_adversarial,
            "ratio of the largest increment to the displayed bound at t = 1, v = 0.9".to_string(),
        ),
        Check::reported(
            "one-sided estimate in s, aligned sign pattern",
            rf2_adversarial,
            "ratio of the largest increment to the displayed bound at s = 1, u = 0.9".to_string(),
        ),
    ];
    Ok(RlDifferenceReport {
        order: ord,
        trials,
        slack,
        a1_violations: viol[0],
        rf1_violations: viol[1],
        rf2_violations: viol[2],
        a1_worst: worst[0],
        rf1_worst: worst[1],
        rf2_worst: worst[2],
        constant_worst: worst[3],
        rf1_adversarial,
        rf2_adversarial,
        checks,
    })
}
