//! Operators between drifts and Brownian shifts, the drift pairs `(u, v)`
//! that split a drift across the two sheets, and Radon-Nikodym densities.
//!
//! The operators `𝒦^{α,β}` and their inverses are written for the
//! unnormalised kernel, as products of power weights and fractional
//! integrals. The simulated sheets use the kernel scaled by `c_α c_β`
//! (see [`crate::kernels::kernel_norm`]); [`operator_scale`] gives that factor.
//!
//! With `a = 1/2 - α` and `b = 1/2 - β` for the rougher sheet and `a'`, `b'`
//! for the smoother one:
//!
//! * if the smoother sheet is the Brownian sheet itself, `v` solves
//!   `(I + I^{a,b})(s^a t^b v) = s^a t^b b` and `ψ = u = b - v`;
//! * otherwise `u` is a Neumann series in
//!   `𝒯 = D^{a',b'} s^{a'-a} t^{b'-b} I^{a,b} s^{a-a'} t^{b-b'}`, and `v`
//!   applies one more power of `𝒯` to the same truncated series.

use std::fmt;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::Serialize;

use crate::bounds::{default_truncation, run_recursions, ExponentPack, RECURSION_DEPTH};
use crate::fraccalc::{chain_operator, roughness_check, Field2D, FracOrder, Grid2D, RoughnessReport, Step, TensorOp};
use crate::kernels::{kernel_norm, HurstOrdering, HurstPair};
use crate::simulate::{NoisePair, NoiseSampler, VolterraOperator};
use crate::specfun::ln_gamma;
use crate::{Error, Result};

pub type DriftFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// A drift `b(s, t, x)` with the structural facts the constructions rely on.
#[derive(Clone)]
pub struct DriftSpec {
    pub name: String,
    eval: DriftFn,
    /// `sup |b|`, when finite.
    pub bound_m: Option<f64>,
    /// `c` in `|b(z, x)| ≤ c(1 + |x|)`.
    pub growth_c: Option<f64>,
    /// Nondecreasing in `x`.
    pub monotone: bool,
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSpec")
            .field("name", &self.name)
            .field("bound_m", &self.bound_m)
            .field("growth_c", &self.growth_c)
            .field("monotone", &self.monotone)
            .finish()
    }
}

impl DriftSpec {
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.into(), eval: Arc::new(f), bound_m: None, growth_c: None, monotone: false }
    }

    pub fn with_bound(mut self, m: f64) -> Self {
        self.bound_m = Some(m);
        self
    }

    pub fn with_growth(mut self, c: f64) -> Self {
        self.growth_c = Some(c);
        self
    }

    pub fn with_monotone(mut self, monotone: bool) -> Self {
        self.monotone = monotone;
        self
    }

    pub fn eval(&self, s: f64, t: f64, x: f64) -> f64 {
        (self.eval)(s, t, x)
    }

    /// `b(s, t, X(s, t))` on every node.
    pub fn sample(&self, path: &Field2D) -> Field2D {
        path.map_nodes(|s, t, x| self.eval(s, t, x))
    }

    /// Check the declared bound and growth constant on sampled values.
    pub fn check_declared(&self, path: &Field2D) -> Result<()> {
        for ((i, j), &x) in path.values().indexed_iter() {
            let g = path.grid();
            let v = self.eval(g.node(i), g.node(j), x);
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("drift {} is not finite at x = {x}", self.name)));
            }
            if let Some(m) = self.bound_m {
                if v.abs() > m * (1.0 + 1e-12) {
                    return Err(Error::InvalidParameter(format!(
                        "drift {} exceeds its bound {m} at x = {x}",
                        self.name
                    )));
                }
            }
            if let Some(c) = self.growth_c {
                if v.abs() > c * (1.0 + x.abs()) * (1.0 + 1e-12) {
                    return Err(Error::InvalidParameter(format!("drift {} exceeds growth {c} at x = {x}", self.name)));
                }
            }
        }
        Ok(())
    }

    pub fn zero() -> Self {
        Self::new("zero", |_, _, _| 0.0).with_bound(0.0).with_growth(0.0).with_monotone(true)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant:{c}"), move |_, _, _| c)
            .with_bound(c.abs())
            .with_growth(c.abs())
            .with_monotone(true)
    }

    pub fn cos() -> Self {
        Self::new("cos", |_, _, x| x.cos()).with_bound(1.0).with_growth(1.0)
    }

    pub fn sin() -> Self {
        Self::new("sin", |_, _, x| x.sin()).with_bound(1.0).with_growth(1.0)
    }

    /// `atan(x) + shift`: bounded and nondecreasing.
    pub fn arctan(shift: f64) -> Self {
        let m = std::f64::consts::FRAC_PI_2 + shift.abs();
        Self::new(format!("arctan:{shift}"), move |_, _, x| x.atan() + shift)
            .with_bound(m)
            .with_growth(m)
            .with_monotone(true)
    }

    /// `c x`: unbounded, linear growth.
    pub fn linear(c: f64) -> Self {
        Self::new(format!("linear:{c}"), move |_, _, x| c * x).with_growth(c.abs()).with_monotone(c >= 0.0)
    }

    /// Parse `zero`, `cos`, `sin`, `constant:C`, `arctan[:SHIFT]`, `linear:C`.
    pub fn from_name(spec: &str) -> Result<Self> {
        let (head, arg) = match spec.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (spec.trim(), None),
        };
        let num = |default: Option<f64>| -> Result<f64> {
            match arg {
                Some(a) => a
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::InvalidParameter(format!("bad drift argument '{a}'"))),
                None => default.ok_or_else(|| Error::InvalidParameter(format!("drift '{head}' needs an argument"))),
            }
        };
        match head {
            "zero" => Ok(Self::zero()),
            "cos" => Ok(Self::cos()),
            "sin" => Ok(Self::sin()),
            "constant" => Ok(Self::constant(num(None)?)),
            "arctan" => Ok(Self::arctan(num(Some(0.0))?)),
            "linear" => Ok(Self::linear(num(None)?)),
            _ => Err(Error::InvalidParameter(format!("unknown drift '{spec}'"))),
        }
    }
}

/// `c_α c_β`: the kernel of the simulated sheet is this multiple of the
/// kernel behind [`k_forward`].
pub fn operator_scale(hp: &HurstPair) -> f64 {
    kernel_norm(hp.alpha) * kernel_norm(hp.beta)
}

fn half_orders(hp: &HurstPair) -> Result<FracOrder> {
    FracOrder::new(hp.a(), hp.b())
}

/// `(𝒦h)(s,t) = I^{2α,2β}( s^{1/2-α} t^{1/2-β} I^{1/2-α,1/2-β}( s^{α-1/2} t^{β-1/2} h ) )`.
pub fn k_forward(h: &Field2D, hp: &HurstPair) -> Result<Field2D> {
    let half = half_orders(hp)?;
    let op = chain_operator(
        &h.grid(),
        &[
            Step::Weight { p: -half.alpha, q: -half.beta },
            Step::Integral(half),
            Step::Weight { p: half.alpha, q: half.beta },
            Step::Integral(FracOrder::new(2.0 * hp.alpha, 2.0 * hp.beta)?),
        ],
    )?;
    Ok(op.apply(h))
}

fn smooth_inverse_op(grid: &Grid2D, a: f64, b: f64) -> Result<TensorOp> {
    chain_operator(
        grid,
        &[Step::Weight { p: a, q: b }, Step::Integral(FracOrder::new(a, b)?), Step::Weight { p: -a, q: -b }],
    )
}

/// `ψ = s^{α-1/2} t^{β-1/2} I^{1/2-α,1/2-β}( s^{1/2-α} t^{1/2-β} u )`, the
/// inverse applied to `∫_{[0,·]} u`. Axis values are the limit 0.
pub fn k_inverse_smooth(u: &Field2D, hp: &HurstPair) -> Result<Field2D> {
    Ok(smooth_inverse_op(&u.grid(), hp.a(), hp.b())?.apply(u))
}

/// `s^{1/2-α} t^{1/2-β} D^{1/2-α,1/2-β}( s^{α-1/2} t^{β-1/2} D^{2α,2β} h )`,
/// with the regularity diagnostic of the outer derivative's input.
pub fn k_inverse_general(h: &Field2D, hp: &HurstPair) -> Result<(Field2D, RoughnessReport)> {
    let half = half_orders(hp)?;
    let full = FracOrder::new(2.0 * hp.alpha, 2.0 * hp.beta)?;
    let report = roughness_check(h, full)?;
    let op = chain_operator(
        &h.grid(),
        &[
            Step::Derivative(full),
            Step::Weight { p: -half.alpha, q: -half.beta },
            Step::Derivative(half),
            Step::Weight { p: half.alpha, q: half.beta },
        ],
    )?;
    Ok((op.apply(h), report))
}

/// Which construction produced a [`DriftPair`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PairCase {
    /// The smoother sheet is the Brownian sheet.
    A,
    /// Both sheets are fractional.
    B,
}

/// The split `b = u + v` and the common shift `ψ`.
#[derive(Debug, Clone)]
pub struct DriftPair {
    pub case: PairCase,
    pub b: Field2D,
    pub u: Field2D,
    pub v: Field2D,
    /// Shift computed from `u` through the rougher sheet's inverse.
    pub psi: Field2D,
    /// The same shift computed from `v` through the smoother sheet's inverse.
    pub psi_dual: Field2D,
    pub truncation_n: usize,
    /// A priori bound on the first omitted series term at `(T, T)`.
    pub residual: f64,
    /// `sup |u + v - b|` on the grid.
    pub defect: f64,
}

impl DriftPair {
    /// Relative interior L² distance between the two shifts.
    pub fn psi_gap(&self) -> f64 {
        self.psi.rel_l2_interior(&self.psi_dual)
    }
}

// x s^{-a} t^{-b} off the axes, 0 on them
fn unweight(f: &Field2D, a: f64, b: f64) -> Field2D {
    f.map_nodes(|s, t, v| if s == 0.0 || t == 0.0 { 0.0 } else { v * s.powf(-a) * t.powf(-b) })
}

fn power(f: &Field2D, a: f64, b: f64) -> Field2D {
    f.map_nodes(|s, t, v| {
        let ws = if a == 0.0 { 1.0 } else { s.powf(a) };
        let wt = if b == 0.0 { 1.0 } else { t.powf(b) };
        v * ws * wt
    })
}

// Case (a) tail bound: ‖b‖ T^{n(a+b)} / (Γ(na)Γ(nb)) at n = N + 1.
fn case_a_residual(a: f64, b: f64, n: usize, t_max: f64, bsup: f64) -> f64 {
    let nf = n as f64;
    let ln = nf * (a + b) * t_max.ln() - ln_gamma(nf * a).unwrap_or(0.0) - ln_gamma(nf * b).unwrap_or(0.0);
    bsup * ln.exp()
}

/// Default tolerance for the case (a) series.
pub const CASE_A_TOL: f64 = 1e-10;
/// Default tolerance for the `C*` tail that fixes the case (b) depth.
pub const CASE_B_TOL: f64 = 1e-6;
/// The case (b) depth is also raised until the omitted term bound is below
/// this multiple of `sup|b|`, so that `u + v = b` holds to round-off.
pub const CASE_B_DEFECT_TOL: f64 = 1e-10;
const MAX_TERMS: usize = 400;
const DIVERGENCE_SLACK: f64 = 2.0;

enum Ops {
    A { first: TensorOp, step: TensorOp, dual: TensorOp },
    B { first: TensorOp, step: TensorOp, psi: TensorOp, dual: TensorOp, j: TensorOp, ln_c: Vec<f64> },
}

/// Operators of one drift-pair construction, built once per grid and ordering.
pub struct PairBuilder {
    pub grid: Grid2D,
    pub ord: HurstOrdering,
    pub case: PairCase,
    pub truncation_n: usize,
    exp: (f64, f64, f64, f64),
    ops: Ops,
}

impl fmt::Debug for PairBuilder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PairBuilder")
            .field("grid", &self.grid)
            .field("ord", &self.ord)
            .field("case", &self.case)
            .field("truncation_n", &self.truncation_n)
            .finish()
    }
}

impl PairBuilder {
    /// Case (a) when `hi` is the Brownian sheet, case (b) otherwise.
    ///
    /// `n_terms = None` picks the depth from `bsup`: the case (a) tail below
    /// [`CASE_A_TOL`], or the case (b) `C*` tail below [`CASE_B_TOL`] together
    /// with [`CASE_B_DEFECT_TOL`].
    pub fn new(grid: Grid2D, ord: HurstOrdering, bsup: f64, n_terms: Option<usize>) -> Result<Self> {
        if ord.hi.is_sheet() {
            Self::case_a(grid, ord.lo, bsup, n_terms)
        } else {
            Self::case_b(grid, ord, bsup, n_terms)
        }
    }

    pub fn case_a(grid: Grid2D, rough: HurstPair, bsup: f64, n_terms: Option<usize>) -> Result<Self> {
        let ord = HurstOrdering::new(rough, HurstPair::sheet())?;
        let (a, b) = (rough.a(), rough.b());
        let t_max = grid.t_max();
        let n = match n_terms {
            Some(n) if n >= 1 => n,
            Some(_) => return Err(Error::InvalidParameter("truncation depth must be at least 1".into())),
            None => (1..MAX_TERMS)
                .find(|&n| case_a_residual(a, b, n + 1, t_max, bsup.max(1e-300)) < CASE_A_TOL)
                .ok_or(Error::Truncation {
                    depth: MAX_TERMS,
                    bound: case_a_residual(a, b, MAX_TERMS, t_max, bsup),
                    tol: CASE_A_TOL,
                })?,
        };
        let ord_ab = FracOrder::new(a, b)?;
        let first = chain_operator(&grid, &[Step::Weight { p: a, q: b }, Step::Integral(ord_ab)])?;
        let step = chain_operator(&grid, &[Step::Integral(ord_ab)])?;
        let dual = smooth_inverse_op(&grid, a, b)?;
        Ok(Self {
            grid,
            ord,
            case: PairCase::A,
            truncation_n: n,
            exp: (a, b, 0.0, 0.0),
            ops: Ops::A { first, step, dual },
        })
    }

    pub fn case_b(grid: Grid2D, ord: HurstOrdering, bsup: f64, n_terms: Option<usize>) -> Result<Self> {
        if ord.lo.alpha == ord.hi.alpha || ord.lo.beta == ord.hi.beta {
            return Err(Error::Ordering("drift pairs need strictly ordered Hurst indices".into()));
        }
        let pack = ExponentPack::from_ordering(&ord)?;
        let t_max = grid.t_max();
        let n = match n_terms {
            Some(n) if n >= 1 => n,
            Some(_) => return Err(Error::InvalidParameter("truncation depth must be at least 1".into())),
            None => {
                let n0 = default_truncation(&pack, bsup.max(1e-300), t_max, CASE_B_TOL)?;
                let seq = run_recursions(&pack, 1.0, RECURSION_DEPTH)?;
                let omitted =
                    |n: usize| (seq.ln_c[n + 1] + (pack.gamma_n(n + 1) + pack.gamma_tilde_n(n + 1)) * t_max.ln()).exp();
                (n0..RECURSION_DEPTH).find(|&n| omitted(n) < CASE_B_DEFECT_TOL).ok_or(Error::Truncation {
                    depth: RECURSION_DEPTH,
                    bound: omitted(RECURSION_DEPTH - 1),
                    tol: CASE_B_DEFECT_TOL,
                })?
            }
        };
        let (a, b, ap, bp) = (pack.a, pack.b, pack.ap, pack.bp);
        let lo_ord = FracOrder::new(a, b)?;
        let hi_ord = FracOrder::new(ap, bp)?;
        let first = chain_operator(
            &grid,
            &[
                Step::Weight { p: a, q: b },
                Step::Integral(lo_ord),
                Step::Weight { p: ap - a, q: bp - b },
                Step::Derivative(hi_ord),
            ],
        )?;
        let step = chain_operator(
            &grid,
            &[
                Step::Weight { p: a - ap, q: b - bp },
                Step::Integral(lo_ord),
                Step::Weight { p: ap - a, q: bp - b },
                Step::Derivative(hi_ord),
            ],
        )?;
        let psi = smooth_inverse_op(&grid, a, b)?;
        let dual = smooth_inverse_op(&grid, ap, bp)?;
        let j = chain_operator(
            &grid,
            &[Step::Weight { p: a - ap, q: b - bp }, Step::Integral(lo_ord), Step::Weight { p: -a, q: -b }],
        )?;
        let seq = run_recursions(&pack, 1.0, n + 1)?;
        Ok(Self {
            grid,
            ord,
            case: PairCase::B,
            truncation_n: n,
            exp: (a, b, ap, bp),
            ops: Ops::B { first, step, psi, dual, j, ln_c: seq.ln_c },
        })
    }

    /// Build the pair for the sampled drift `b(·, X·)`.
    pub fn build(&self, b: &Field2D) -> Result<DriftPair> {
        if b.grid() != self.grid {
            return Err(Error::Shape { expected: self.grid.n(), got: b.grid().n() });
        }
        if !b.is_finite() {
            return Err(Error::InvalidParameter("sampled drift is not finite".into()));
        }
        let n = self.truncation_n;
        let bsup = b.sup_norm();
        let t_max = self.grid.t_max();
        let (a, bb, ap, bp) = self.exp;
        match &self.ops {
            Ops::A { first, step, dual } => {
                let mut q = first.apply(b);
                let mut acc = &q * -1.0;
                for k in 2..=n {
                    q = step.apply(&q);
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    acc = &acc + &(&q * sign);
                }
                let v = b + &unweight(&acc, a, bb);
                let u = b - &v;
                let psi_dual = dual.apply(&v);
                let defect = (&(&u + &v) - b).sup_norm();
                Ok(DriftPair {
                    case: PairCase::A,
                    b: b.clone(),
                    psi: u.clone(),
                    u,
                    v,
                    psi_dual,
                    truncation_n: n,
                    residual: case_a_residual(a, bb, n + 1, t_max, bsup),
                    defect,
                })
            }
            Ops::B { first, step, psi, dual, ln_c, .. } => {
                let ys = self.series(b, first, step, ln_c, n + 1)?;
                let mut su = Field2D::zeros(self.grid);
                let mut sv = Field2D::zeros(self.grid);
                for (k, y) in ys.iter().enumerate() {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    if (1..=n).contains(&k) {
                        su = &su + &(y * sign);
                    }
                    if k >= 1 {
                        // v collects (-1)^{k-1} y_k for k = 1..=N+1
                        sv = &sv + &(y * -sign);
                    }
                }
                let u = b + &unweight(&su, ap, bp);
                let v = unweight(&sv, ap, bp);
                let defect = (&(&u + &v) - b).sup_norm();
                let pack = ExponentPack::new(a, bb, ap, bp)?;
                let m = n + 1;
                let residual = bsup * (ln_c[m] + (pack.gamma_n(m) + pack.gamma_tilde_n(m)) * t_max.ln()).exp();
                Ok(DriftPair {
                    case: PairCase::B,
                    b: b.clone(),
                    psi: psi.apply(&u),
                    psi_dual: dual.apply(&v),
                    u,
                    v,
                    truncation_n: n,
                    residual,
                    defect,
                })
            }
        }
    }

    // y_0 = s^{a'} t^{b'} b and y_k = 𝒯^k y_0 for k ≤ last, checking
    // sup |f_k| with f_k = s^{a-a'} t^{b-b'} y_k against the recursion bound at
    // the corner. A pointwise check is useless for large k: near the axes the
    // bound is below rounding and the first cell dominates.
    fn series(
        &self,
        b: &Field2D,
        first: &TensorOp,
        step: &TensorOp,
        ln_c: &[f64],
        last: usize,
    ) -> Result<Vec<Field2D>> {
        let (a, bb, ap, bp) = self.exp;
        let pack = ExponentPack::new(a, bb, ap, bp)?;
        let bsup = b.sup_norm();
        let mut ys = Vec::with_capacity(last + 1);
        ys.push(power(b, ap, bp));
        ys.push(first.apply(b));
        for _ in 2..=last {
            let next = step.apply(ys.last().expect("non-empty"));
            ys.push(next);
        }
        let t_max = self.grid.t_max();
        for (k, y) in ys.iter().enumerate().skip(1) {
            if k >= ln_c.len() {
                break;
            }
            let f = power(y, a - ap, bb - bp).sup_norm();
            let bound = bsup * (ln_c[k] + (pack.gamma_n(k) + pack.gamma_tilde_n(k)) * t_max.ln()).exp();
            if f > DIVERGENCE_SLACK * bound + 1e-12 * bsup {
                return Err(Error::SeriesDivergence { term: k, ratio: f / bound.max(f64::MIN_POSITIVE) });
            }
        }
        Ok(ys)
    }

    /// `f_n` and `J^n` for `n = 0..=n_max` (case (b) only).
    pub fn neumann_terms(&self, b: &Field2D, n_max: usize) -> Result<Vec<NeumannTerm>> {
        let Ops::B { first, step, j, .. } = &self.ops else {
            return Err(Error::InvalidParameter("Neumann terms exist only when both sheets are fractional".into()));
        };
        let (a, bb, ap, bp) = self.exp;
        let mut y = power(b, ap, bp);
        let mut out = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            if n == 1 {
                y = first.apply(b);
            } else if n > 1 {
                y = step.apply(&y);
            }
            out.push(NeumannTerm { n, f: power(&y, a - ap, bb - bp), j: j.apply(&y).map(f64::abs) });
        }
        Ok(out)
    }
}

/// One term of the case (b) series: `f_n` and `J^n = s^{-a} t^{-b} |I^{a,b} f_n|`.
#[derive(Debug, Clone)]
pub struct NeumannTerm {
    pub n: usize,
    pub f: Field2D,
    pub j: Field2D,
}

/// Case (b) Neumann terms of a sampled drift.
pub fn neumann_terms(b: &Field2D, ord: &HurstOrdering, n_max: usize) -> Result<Vec<NeumannTerm>> {
    PairBuilder::case_b(b.grid(), *ord, b.sup_norm(), Some(n_max.max(1)))?.neumann_terms(b, n_max)
}

/// Sample `b` on `X = x0 + B_lo + B_hi`.
pub fn sampled_drift(b: &DriftSpec, noise: &NoisePair, x0: f64) -> Field2D {
    b.sample(&noise.sum().map(|v| v + x0))
}

fn drift_bound(b: &DriftSpec, sampled: &Field2D) -> f64 {
    b.bound_m.unwrap_or_else(|| sampled.sup_norm())
}

/// Case (a): the smoother sheet is the Brownian sheet and `rough` drives the other.
pub fn build_drift_pair_case_a(
    b: &DriftSpec,
    rough: HurstPair,
    noise: &NoisePair,
    x0: f64,
    n_terms: Option<usize>,
) -> Result<DriftPair> {
    let field = sampled_drift(b, noise, x0);
    PairBuilder::case_a(noise.grid, rough, drift_bound(b, &field), n_terms)?.build(&field)
}

/// Case (b): both sheets fractional, `lo ≺ hi`.
pub fn build_drift_pair_case_b(
    b: &DriftSpec,
    lo: HurstPair,
    hi: HurstPair,
    noise: &NoisePair,
    x0: f64,
    n_terms: Option<usize>,
) -> Result<DriftPair> {
    let ord = HurstOrdering::new(lo, hi)?;
    let field = sampled_drift(b, noise, x0);
    PairBuilder::case_b(noise.grid, ord, drift_bound(b, &field), n_terms)?.build(&field)
}

/// Pick the case from the ordering and build the pair.
pub fn build_drift_pair(
    b: &DriftSpec,
    ord: &HurstOrdering,
    noise: &NoisePair,
    x0: f64,
    n_terms: Option<usize>,
) -> Result<DriftPair> {
    let field = sampled_drift(b, noise, x0);
    PairBuilder::new(noise.grid, *ord, drift_bound(b, &field), n_terms)?.build(&field)
}

/// A density value with its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Density {
    pub l: f64,
    pub log_l: f64,
}

impl Density {
    fn from_log(log_l: f64) -> Self {
        Self { l: log_l.exp(), log_l }
    }
}

/// `L_T = exp(Σ ψ dW - ½ Σ ψ² h²)` with `ψ` read at each cell's lower-left node.
pub fn density_lt(psi: &Field2D, dw: &Array2<f64>) -> Result<Density> {
    let g = psi.grid();
    let c = g.cells();
    if dw.dim() != (c, c) {
        return Err(Error::Shape { expected: c, got: dw.nrows() });
    }
    let area = g.h() * g.h();
    let mut log_l = 0.0;
    for i in 0..c {
        for j in 0..c {
            let p = psi.at(i, j);
            if !p.is_finite() {
                return Err(Error::InvalidParameter(format!("shift not finite at node ({i}, {j})")));
            }
            log_l += p * dw[[i, j]] - 0.5 * p * p * area;
        }
    }
    Ok(Density::from_log(log_l))
}

/// Density of a per-cell shift `ψ` (shape `cells x cells`).
pub fn density_cells(psi: &Array2<f64>, dw: &Array2<f64>, h: f64) -> Result<Density> {
    if psi.dim() != dw.dim() {
        return Err(Error::Shape { expected: dw.nrows(), got: psi.nrows() });
    }
    let area = h * h;
    let log_l = psi.iter().zip(dw).map(|(&p, &w)| p * w - 0.5 * p * p * area).sum();
    Ok(Density::from_log(log_l))
}

/// `Σ_{k<i, l<j} b(s_k, t_l) h²`: the lower-left rule for `∫_{[0,z]} b`.
pub fn lower_left_integral(b: &Field2D) -> Field2D {
    let g = b.grid();
    let n = g.n();
    let area = g.h() * g.h();
    let mut out = Array2::zeros((n, n));
    for i in 1..n {
        for j in 1..n {
            out[[i, j]] = b.at(i - 1, j - 1) * area + out[[i - 1, j]] + out[[i, j - 1]] - out[[i - 1, j - 1]];
        }
    }
    Field2D::from_array(g, out).expect("square array")
}

/// Trapezoid rule for `∫_{[0,z]} u` on every node.
pub fn cumulative_trapezoid(u: &Field2D) -> Field2D {
    let g = u.grid();
    let n = g.n();
    let area = g.h() * g.h();
    let mut out = Array2::zeros((n, n));
    for i in 1..n {
        for j in 1..n {
            let cell = 0.25 * (u.at(i - 1, j - 1) + u.at(i, j - 1) + u.at(i - 1, j) + u.at(i, j)) * area;
            out[[i, j]] = cell + out[[i - 1, j]] + out[[i, j - 1]] - out[[i - 1, j - 1]];
        }
    }
    Field2D::from_array(g, out).expect("square array")
}

// Rows 1.. of a kernel matrix: lower triangular, (n-1) x (n-1).
fn square(k: &Array2<f64>) -> ArrayView2<'_, f64> {
    k.slice(s![1.., ..])
}

fn solve_lower(l: &Array2<f64>, rhs: &Array1<f64>) -> Result<Array1<f64>> {
    let n = rhs.len();
    let mut x = Array1::zeros(n);
    for i in 0..n {
        let d = l[[i, i]];
        if d == 0.0 || !d.is_finite() {
            return Err(Error::NonConvergence { what: "triangular solve", residual: f64::INFINITY });
        }
        let mut acc = rhs[i];
        for k in 0..i {
            acc -= l[[i, k]] * x[k];
        }
        x[i] = acc / d;
    }
    Ok(x)
}

/// Per-cell shift `ψ` with `K^α ψ (K^β)^T h² = U` on nodes `1..n`, so that
/// `B - U` is the same Volterra transform of `dW - ψ h²`.
pub fn single_kernel_shift(op: &VolterraOperator, target: &Field2D) -> Result<Array2<f64>> {
    let a = square(&op.s).to_owned();
    let bt = square(&op.t).to_owned();
    let h2 = target.grid().h().powi(2);
    let rhs = target.values().slice(s![1.., 1..]).mapv(|v| v / h2);
    let c = rhs.nrows();
    // Y = A^{-1} R, then ψ^T = B^{-1} Y^T
    let mut y = Array2::zeros((c, c));
    for j in 0..c {
        y.column_mut(j).assign(&solve_lower(&a, &rhs.column(j).to_owned())?);
    }
    let mut psi = Array2::zeros((c, c));
    for i in 0..c {
        psi.row_mut(i).assign(&solve_lower(&bt, &y.row(i).to_owned())?);
    }
    Ok(psi)
}

/// Per-cell shift `ψ` with `K_lo ψ K_lo^T + K_hi ψ K_hi^T = D / h²` on nodes
/// `1..n`, solved row by row in `O(n³)`.
///
/// When `D` is the lower-left drift integral along `x0 + B_lo + B_hi`, cell
/// `(i, j)` of `ψ` only depends on increments strictly below and to the left,
/// so the discrete Girsanov theorem holds exactly.
pub fn pair_shift(sampler: &NoiseSampler, target: &Field2D) -> Result<Array2<f64>> {
    let a = square(&sampler.lo.s).to_owned();
    let b = square(&sampler.lo.t).to_owned();
    let c = square(&sampler.hi.s).to_owned();
    let d = square(&sampler.hi.t).to_owned();
    let h2 = target.grid().h().powi(2);
    let rhs = target.values().slice(s![1.., 1..]).mapv(|v| v / h2);
    let m = rhs.nrows();
    let mut psi = Array2::zeros((m, m));
    let mut p = Array2::<f64>::zeros((m, m));
    let mut q = Array2::<f64>::zeros((m, m));
    for r in 0..m {
        let mut row = rhs.row(r).to_owned();
        for k in 0..r {
            row.scaled_add(-a[[r, k]], &p.row(k));
            row.scaled_add(-c[[r, k]], &q.row(k));
        }
        let lhs = &b * a[[r, r]] + &d * c[[r, r]];
        let x = solve_lower(&lhs, &row)?;
        p.row_mut(r).assign(&b.dot(&x));
        q.row_mut(r).assign(&d.dot(&x));
        psi.row_mut(r).assign(&x);
    }
    Ok(psi)
}

/// Density that turns `X = x0 + B_lo + B_hi` into the lower-left Picard
/// solution with drift `b`.
pub fn discrete_girsanov_density(sampler: &NoiseSampler, noise: &NoisePair, b: &DriftSpec, x0: f64) -> Result<Density> {
    let field = sampled_drift(b, noise, x0);
    let target = lower_left_integral(&field);
    let psi = pair_shift(sampler, &target)?;
    density_cells(&psi, &noise.dw, noise.grid.h())
}

/// Fit of `sup|ψ| ≤ c (1 + ‖B_lo + B_hi‖_∞)` on a first batch of paths,
/// checked on the rest.
#[derive(Debug, Clone, Serialize)]
pub struct NovikovFit {
    pub c: f64,
    pub fitted_on: usize,
    pub checked_on: usize,
    /// Largest ratio `sup|ψ| / (c (1 + ‖B‖))` on the held-out paths.
    pub worst_ratio: f64,
    pub holds: bool,
}

/// `pairs` holds `(sup|ψ|, ‖B_lo + B_hi‖_∞)` per path. The constant is the
/// largest ratio on the first `fit` paths; the rest must stay within `slack`.
pub fn novikov_fit(pairs: &[(f64, f64)], fit: usize, slack: f64) -> Result<NovikovFit> {
    if fit == 0 || fit >= pairs.len() {
        return Err(Error::InvalidParameter(format!("need 0 < fit < {} paths", pairs.len())));
    }
    let ratio = |&(p, b): &(f64, f64)| p / (1.0 + b);
    let c = pairs[..fit].iter().map(ratio).fold(0.0, f64::max);
    let worst = pairs[fit..].iter().map(|x| ratio(x) / c.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    Ok(NovikovFit { c, fitted_on: fit, checked_on: pairs.len() - fit, worst_ratio: worst, holds: worst <= slack })
}
