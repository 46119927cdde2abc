//! Two-parameter left-sided Riemann-Liouville integrals and derivatives on a
//! uniform grid of `[0,T]^2`.
//!
//! Every operator here is a tensor product of one-dimensional operators, so a
//! grid operator is stored as two `n x n` matrices `(A, B)` acting as
//! `F -> A F B^T`. Chains of weights, integrals and derivatives are composed
//! once and then applied to as many fields as needed.
//!
//! * Integrals use product trapezoid weights: the kernel `(x-u)^{α-1}` is
//!   integrated exactly against the hat functions of the piecewise-linear
//!   interpolant. A power weight in front of an integral is folded into the
//!   same moments (computed by quadrature), so `I^α(s^p f)` stays accurate when
//!   `s^p` is unbounded at the axis.
//! * Derivatives use the Weil form. The pointwise part `f(x) x^{-α}/Γ(1-α)` is
//!   exact; the Marchaud part is integrated exactly for the linear interpolant
//!   and then corrected with four starting weights on the nodes next to the
//!   axis, so that powers `x^α` and `x^{1+α}` are also differentiated exactly.
//! * Axis values of integrals are 0. Derivatives and negative power weights
//!   are singular at the axis; their axis values are linear extrapolations
//!   from the first two interior nodes and are excluded from all norms.
//!   Inside a chain, a stage whose output is known to vanish at the axis
//!   gets the exact axis value 0 instead.

use std::ops::{Add, Mul, Sub};

use ndarray::{Array1, Array2, Zip};
use serde::Serialize;

use crate::quad::{gauss_legendre, TanhSinh};
use crate::specfun::{gamma, rgamma};
use crate::{Error, Result};

/// Uniform grid on `[0,T]^2` with `n` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid2D {
    t_max: f64,
    n: usize,
}

impl Grid2D {
    pub fn new(t_max: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::GridTooSmall { min: 2, got: n });
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {t_max}")));
        }
        Ok(Self { t_max, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn h(&self) -> f64 {
        self.t_max / (self.n - 1) as f64
    }

    /// Coordinate of node `i`; the last node is exactly `T`.
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.t_max
        } else {
            i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Number of cells per axis.
    pub fn cells(&self) -> usize {
        self.n - 1
    }

    /// Trapezoid weights for integrating nodal values over `[0,T]`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.n).map(|i| if i == 0 || i + 1 == self.n { 0.5 * h } else { h }).collect()
    }
}

/// Real samples on the nodes of a [`Grid2D`], indexed `(i, j)` for `(s_i, t_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    grid: Grid2D,
    values: Array2<f64>,
}

impl Field2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, values: Array2::zeros((grid.n, grid.n)) }
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        Self { grid, values: Array2::from_elem((grid.n, grid.n), c) }
    }

    pub fn from_fn<F: FnMut(f64, f64) -> f64>(grid: Grid2D, mut f: F) -> Self {
        let nodes = grid.nodes();
        let values = Array2::from_shape_fn((grid.n, grid.n), |(i, j)| f(nodes[i], nodes[j]));
        Self { grid, values }
    }

    pub fn from_array(grid: Grid2D, values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != grid.n || c != grid.n {
            return Err(Error::Shape { expected: grid.n, got: if r != grid.n { r } else { c } });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn map<F: FnMut(f64) -> f64>(&self, f: F) -> Self {
        Self { grid: self.grid, values: self.values.mapv(f) }
    }

    /// Apply `f(s, t, value)` nodewise.
    pub fn map_nodes<F: FnMut(f64, f64, f64) -> f64>(&self, mut f: F) -> Self {
        let nodes = self.grid.nodes();
        let mut values = self.values.clone();
        for ((i, j), v) in values.indexed_iter_mut() {
            *v = f(nodes[i], nodes[j], *v);
        }
        Self { grid: self.grid, values }
    }

    /// Discrete L² norm over interior nodes `i, j ≥ 1`.
    pub fn interior_l2(&self) -> f64 {
        let h = self.grid.h();
        let s: f64 = self.values.slice(ndarray::s![1.., 1..]).iter().map(|v| v * v).sum();
        (s * h * h).sqrt()
    }

    /// Relative interior L² distance `‖self - reference‖ / ‖reference‖`.
    pub fn rel_l2_interior(&self, reference: &Field2D) -> f64 {
        let diff = self - reference;
        let denom = reference.interior_l2();
        if denom == 0.0 {
            diff.interior_l2()
        } else {
            diff.interior_l2() / denom
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn interior_sup(&self) -> f64 {
        self.values.slice(ndarray::s![1.., 1..]).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Add for &Field2D {
    type Output = Field2D;
    fn add(self, rhs: &Field2D) -> Field2D {
        assert_eq!(self.grid, rhs.grid, "fields live on different grids");
        Field2D { grid: self.grid, values: &self.values + &rhs.values }
    }
}

impl Sub for &Field2D {
    type Output = Field2D;
    fn sub(self, rhs: &Field2D) -> Field2D {
        assert_eq!(self.grid, rhs.grid, "fields live on different grids");
        Field2D { grid: self.grid, values: &self.values - &rhs.values }
    }
}

impl Mul<f64> for &Field2D {
    type Output = Field2D;
    fn mul(self, rhs: f64) -> Field2D {
        Field2D { grid: self.grid, values: &self.values * rhs }
    }
}

/// Orders `(α, β)` of a two-parameter operator.
///
/// Components lie in `[0, 1]`: 0 is the identity and 1 the ordinary
/// integral or derivative, both of which occur in the kernel operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FracOrder {
    pub alpha: f64,
    pub beta: f64,
}

impl FracOrder {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for v in [alpha, beta] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("fractional order {v} outside [0,1]")));
            }
        }
        Ok(Self { alpha, beta })
    }
}

/// A linear operator on nodal values along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisOp {
    m: Array2<f64>,
}

const QUAD_ORDER: usize = 10;

// below this distance to 0 or 1 the starting-weight correction is skipped
const CORRECTION_GAP: f64 = 0.05;

impl AxisOp {
    pub fn identity(n: usize) -> Self {
        Self { m: Array2::eye(n) }
    }

    pub fn from_matrix(m: Array2<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        Self { m }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.m
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    /// `next ∘ self`: apply `self` first.
    pub fn then(&self, next: &AxisOp) -> AxisOp {
        AxisOp { m: next.m.dot(&self.m) }
    }

    pub fn apply(&self, v: &Array1<f64>) -> Array1<f64> {
        self.m.dot(v)
    }

    /// Multiplication by `x^p`; for `p < 0` the axis row extrapolates linearly.
    pub fn power_weight(grid: &Grid2D, p: f64) -> Self {
        let n = grid.n;
        let mut m = Array2::zeros((n, n));
        for i in 1..n {
            m[[i, i]] = grid.node(i).powf(p);
        }
        if p == 0.0 {
            m[[0, 0]] = 1.0;
        } else if p < 0.0 {
            extrapolate_axis_row(&mut m);
        }
        Self { m }
    }

    /// `I^α` by product trapezoid weights; order 0 is the identity.
    pub fn integral(grid: &Grid2D, order: f64) -> Self {
        let n = grid.n;
        if order == 0.0 {
            return Self::identity(n);
        }
        let mut m = Array2::zeros((n, n));
        for i in 1..n {
            let w = integral_weights_at(grid, order, grid.node(i));
            m.row_mut(i).assign(&Array1::from(w));
        }
        Self { m }
    }

    /// `I^α(x^p ·)` with the weight folded into the hat moments.
    pub fn weighted_integral(grid: &Grid2D, order: f64, p: f64) -> Result<Self> {
        if p == 0.0 {
            return Ok(Self::integral(grid, order));
        }
        if order == 0.0 {
            return Ok(Self::power_weight(grid, p));
        }
        if p <= -1.0 {
            return Err(Error::InvalidParameter(format!("power weight exponent {p} must exceed -1")));
        }
        let n = grid.n;
        let h = grid.h();
        let scale = h.powf(order + p) * rgamma(order);
        let rule = gauss_legendre(QUAD_ORDER);
        let ts = TanhSinh::new(1e-13);
        let mut m = Array2::zeros((n, n));
        for i in 1..n {
            let fi = i as f64;
            for k in 0..i {
                let kf = k as f64;
                let (w_lo, w_hi) = if k == 0 || k + 1 == i {
                    // ξ in [k, k+1]; singular at ξ = 0 (k = 0) and/or ξ = i (k = i-1)
                    let lo = ts.integrate(kf, kf + 1.0, |_, da, db| {
                        let xi = kf + da;
                        let gap = fi - kf - 1.0 + db;
                        gap.powf(order - 1.0) * xi.powf(p) * db
                    })?;
                    let hi = ts.integrate(kf, kf + 1.0, |_, da, db| {
                        let xi = kf + da;
                        let gap = fi - kf - 1.0 + db;
                        gap.powf(order - 1.0) * xi.powf(p) * da
                    })?;
                    (lo.value, hi.value)
                } else {
                    let c = kf + 0.5;
                    let mut lo = 0.0;
                    let mut hi = 0.0;
                    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                        let xi = c + 0.5 * x;
                        let g = 0.5 * w * (fi - xi).powf(order - 1.0) * xi.powf(p);
                        lo += g * (kf + 1.0 - xi);
                        hi += g * (xi - kf);
                    }
                    (lo, hi)
                };
                m[[i, k]] += scale * w_lo;
                m[[i, k + 1]] += scale * w_hi;
            }
        }
        Ok(Self { m })
    }

    /// Weil-form `D^α`, split into its pointwise and Marchaud parts.
    pub fn derivative_parts(grid: &Grid2D, order: f64) -> (AxisOp, AxisOp) {
        let n = grid.n;
        if order == 0.0 {
            return (Self::identity(n), Self { m: Array2::zeros((n, n)) });
        }
        if order == 1.0 {
            let mut q = Array2::zeros((n, n));
            let h = grid.h();
            for i in 1..n {
                q[[i, i]] = 1.0 / h;
                q[[i, i - 1]] = -1.0 / h;
            }
            extrapolate_axis_row(&mut q);
            return (Self { m: Array2::zeros((n, n)) }, Self { m: q });
        }
        let a = order;
        let g = rgamma(1.0 - a);
        let mut p = Array2::zeros((n, n));
        let mut q = Array2::zeros((n, n));
        for i in 1..n {
            let fi = i as f64;
            p[[i, i]] = g * fi.powf(-a);
            // last cell: (f_i - f_{i-1}) ∫ (i-u)^{-a} du
            let last = a * g / (1.0 - a);
            q[[i, i]] += last;
            q[[i, i - 1]] -= last;
            for k in 0..i.saturating_sub(1) {
                let d0 = fi - k as f64;
                let d1 = d0 - 1.0;
                let m0 = (d1.powf(-a) - d0.powf(-a)) / a;
                let m1 = (d0.powf(1.0 - a) - d1.powf(1.0 - a)) / (1.0 - a);
                let phi_hi = d0 * m0 - m1;
                let phi_lo = m0 - phi_hi;
                q[[i, i]] += a * g * m0;
                q[[i, k]] -= a * g * phi_lo;
                q[[i, k + 1]] -= a * g * phi_hi;
            }
        }
        if n >= 4 && a >= CORRECTION_GAP && a <= 1.0 - CORRECTION_GAP {
            add_starting_weights(&p, &mut q, a);
        }
        let scale = grid.h().powf(-a);
        p.mapv_inplace(|v| v * scale);
        q.mapv_inplace(|v| v * scale);
        extrapolate_axis_row(&mut p);
        extrapolate_axis_row(&mut q);
        (Self { m: p }, Self { m: q })
    }

    /// Weil-form `D^α`; order 0 is the identity and order 1 the backward difference.
    pub fn derivative(grid: &Grid2D, order: f64) -> Self {
        let (p, q) = Self::derivative_parts(grid, order);
        Self { m: p.m + q.m }
    }
}

// Row 0 := 2 row 1 - row 2 (linear extrapolation to the axis).
fn extrapolate_axis_row(m: &mut Array2<f64>) {
    let n = m.nrows();
    if n < 3 {
        let r1 = m.row(1).to_owned();
        m.row_mut(0).assign(&r1);
        return;
    }
    let r = &m.row(1) * 2.0 - &m.row(2);
    m.row_mut(0).assign(&r);
}

// Starting weights on nodes 0..3 making each row exact for x^a and x^{1+a}
// while keeping it exact for 1 and x. Works in units h = 1.
fn add_starting_weights(p: &Array2<f64>, q: &mut Array2<f64>, a: f64) {
    let n = p.nrows();
    let exps = [0.0, 1.0, a, 1.0 + a];
    let mut vand = [[0.0; 4]; 4];
    for (r, &e) in exps.iter().enumerate() {
        for j in 0..4 {
            vand[r][j] = if j == 0 {
                if e == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (j as f64).powf(e)
            };
        }
    }
    let inv = invert4(vand);
    let samples: Vec<Vec<f64>> = exps
        .iter()
        .map(|&e| {
            (0..n)
                .map(|j| {
                    if j == 0 {
                        if e == 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        (j as f64).powf(e)
                    }
                })
                .collect()
        })
        .collect();
    let coef: Vec<f64> = exps.iter().map(|&e| gamma_ratio_exact(e, a)).collect();
    for i in 1..n {
        let fi = i as f64;
        let mut resid = [0.0; 4];
        for r in 0..4 {
            let mut approx = 0.0;
            for k in 0..=i {
                approx += (p[[i, k]] + q[[i, k]]) * samples[r][k];
            }
            let exact = coef[r] * fi.powf(exps[r] - a);
            resid[r] = exact - approx;
        }
        for j in 0..4 {
            let mut c = 0.0;
            for r in 0..4 {
                c += inv[j][r] * resid[r];
            }
            q[[i, j]] += c;
        }
    }
}

// Γ(e+1)/Γ(e+1-a): D^a x^e = coef · x^{e-a}
fn gamma_ratio_exact(e: f64, a: f64) -> f64 {
    gamma(e + 1.0).unwrap_or(f64::NAN) * rgamma(e + 1.0 - a)
}

fn invert4(m: [[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut a = m;
    let mut inv = [[0.0; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..4 {
        let piv = (col..4).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for j in 0..4 {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..4 {
            if r != col {
                let f = a[r][col];
                for j in 0..4 {
                    a[r][j] -= f * a[col][j];
                    inv[r][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

/// Product trapezoid weights of `I^α` at an arbitrary abscissa `x ∈ [0, T]`.
///
/// Returns one weight per node; the interpolant is piecewise linear on the grid
/// and the partial cell containing `x` is integrated up to `x`.
pub fn integral_weights_at(grid: &Grid2D, order: f64, x: f64) -> Vec<f64> {
    let n = grid.n;
    let h = grid.h();
    let mut w = vec![0.0; n];
    if order == 0.0 {
        // point evaluation of the interpolant
        let k = ((x / h).floor() as usize).min(n - 2);
        let theta = x / h - k as f64;
        w[k] = 1.0 - theta;
        w[k + 1] = theta;
        return w;
    }
    if x <= 0.0 {
        return w;
    }
    let xi = x / h;
    let a = order;
    for k in 0..n - 1 {
        let kf = k as f64;
        if kf >= xi {
            break;
        }
        let d0 = xi - kf;
        let d1 = (xi - kf - 1.0).max(0.0);
        let m0 = (d0.powf(a) - d1.powf(a)) / a;
        let m1 = (d0.powf(a + 1.0) - d1.powf(a + 1.0)) / (a + 1.0);
        let hi = d0 * m0 - m1;
        w[k] += m0 - hi;
        w[k + 1] += hi;
    }
    let scale = h.powf(a) * rgamma(a);
    for v in &mut w {
        *v *= scale;
    }
    w
}

/// `I^{α,β} f` evaluated at an arbitrary point `(x, y)` of the grid square.
pub fn rl_integral_at(f: &Field2D, ord: FracOrder, x: f64, y: f64) -> f64 {
    let g = f.grid;
    let ws = Array1::from(integral_weights_at(&g, ord.alpha, x));
    let wt = Array1::from(integral_weights_at(&g, ord.beta, y));
    ws.dot(&f.values.dot(&wt))
}

/// Tensor product of two axis operators acting as `F -> A F B^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorOp {
    pub s: AxisOp,
    pub t: AxisOp,
}

impl TensorOp {
    pub fn identity(n: usize) -> Self {
        Self { s: AxisOp::identity(n), t: AxisOp::identity(n) }
    }

    pub fn apply(&self, f: &Field2D) -> Field2D {
        let tmp = self.s.m.dot(&f.values);
        let values = tmp.dot(&self.t.m.t());
        Field2D { grid: f.grid, values }
    }

    pub fn then(&self, next: &TensorOp) -> TensorOp {
        TensorOp { s: self.s.then(&next.s), t: self.t.then(&next.t) }
    }
}

/// One stage of a weighted operator chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    /// Multiplication by `s^p t^q`.
    Weight {
        p: f64,
        q: f64,
    },
    Integral(FracOrder),
    Derivative(FracOrder),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum AxisStep {
    Weight(f64),
    Integral(f64),
    Derivative(f64),
}

// `lead` tracks the power of x that the output behaves like near the axis,
// assuming a bounded input. When it is positive the exact axis value is 0 and
// the extrapolated axis row of a negative weight or a derivative is replaced.
fn axis_chain(grid: &Grid2D, steps: &[AxisStep]) -> Result<AxisOp> {
    let mut op = AxisOp::identity(grid.n);
    let mut pending = 0.0;
    let mut lead = 0.0;
    for step in steps {
        match *step {
            AxisStep::Weight(p) => pending += p,
            AxisStep::Integral(a) => {
                let m = AxisOp::weighted_integral(grid, a, pending)?;
                op = op.then(&m);
                lead += pending + a;
                pending = 0.0;
            }
            AxisStep::Derivative(a) => {
                if pending != 0.0 {
                    op = op.then(&weight_with_lead(grid, pending, lead + pending));
                    lead += pending;
                    pending = 0.0;
                }
                let mut d = AxisOp::derivative(grid, a);
                lead -= a;
                if lead > 0.0 && a > 0.0 {
                    d.m.row_mut(0).fill(0.0);
                }
                op = op.then(&d);
            }
        }
    }
    if pending != 0.0 {
        op = op.then(&weight_with_lead(grid, pending, lead + pending));
    }
    Ok(op)
}

fn weight_with_lead(grid: &Grid2D, p: f64, lead: f64) -> AxisOp {
    let mut w = AxisOp::power_weight(grid, p);
    if p < 0.0 && lead > 0.0 {
        w.m.row_mut(0).fill(0.0);
    }
    w
}

fn validate_step(step: &Step) -> Result<()> {
    match step {
        Step::Weight { p, q } => {
            if !(*p > -1.0 && *q > -1.0) || !p.is_finite() || !q.is_finite() {
                return Err(Error::InvalidParameter(format!("power weight ({p}, {q}) must have exponents > -1")));
            }
            Ok(())
        }
        Step::Integral(o) | Step::Derivative(o) => FracOrder::new(o.alpha, o.beta).map(|_| ()),
    }
}

/// Compose a chain into a single tensor operator; steps apply left to right.
pub fn chain_operator(grid: &Grid2D, steps: &[Step]) -> Result<TensorOp> {
    let mut s_steps = Vec::with_capacity(steps.len());
    let mut t_steps = Vec::with_capacity(steps.len());
    for step in steps {
        validate_step(step)?;
        match *step {
            Step::Weight { p, q } => {
                s_steps.push(AxisStep::Weight(p));
                t_steps.push(AxisStep::Weight(q));
            }
            Step::Integral(o) => {
                s_steps.push(AxisStep::Integral(o.alpha));
                t_steps.push(AxisStep::Integral(o.beta));
            }
            Step::Derivative(o) => {
                s_steps.push(AxisStep::Derivative(o.alpha));
                t_steps.push(AxisStep::Derivative(o.beta));
            }
        }
    }
    Ok(TensorOp { s: axis_chain(grid, &s_steps)?, t: axis_chain(grid, &t_steps)? })
}

/// Apply a chain of power weights, integrals and derivatives to `f`.
pub fn weighted_chain(f: &Field2D, steps: &[Step]) -> Result<Field2D> {
    if steps.is_empty() {
        return Ok(f.clone());
    }
    Ok(chain_operator(&f.grid, steps)?.apply(f))
}

/// `I^{α,β} f` on the grid. Axis values are exactly 0.
pub fn rl_integral(f: &Field2D, ord: FracOrder) -> Result<Field2D> {
    FracOrder::new(ord.alpha, ord.beta)?;
    let op = TensorOp { s: AxisOp::integral(&f.grid, ord.alpha), t: AxisOp::integral(&f.grid, ord.beta) };
    Ok(op.apply(f))
}

/// `D^{α,β} f` on the grid via the Weil representation.
pub fn rl_derivative(f: &Field2D, ord: FracOrder) -> Result<Field2D> {
    FracOrder::new(ord.alpha, ord.beta)?;
    let op = TensorOp { s: AxisOp::derivative(&f.grid, ord.alpha), t: AxisOp::derivative(&f.grid, ord.beta) };
    Ok(op.apply(f))
}

/// The four terms of the Weil representation of `D^{α,β} f`.
#[derive(Debug, Clone)]
pub struct WeilTerms {
    /// `f(s,t) s^{-α} t^{-β} / (Γ(1-α)Γ(1-β))`.
    pub pointwise: Field2D,
    /// Marchaud integral in `s` of `f(s,t) - f(u,t)`, weighted by `t^{-β}`.
    pub marchaud_s: Field2D,
    /// Marchaud integral in `t` of `f(s,t) - f(s,v)`, weighted by `s^{-α}`.
    pub marchaud_t: Field2D,
    /// Double Marchaud integral of the rectangular increment.
    pub marchaud_st: Field2D,
}

impl WeilTerms {
    pub fn sum(&self) -> Field2D {
        &(&(&self.pointwise + &self.marchaud_s) + &self.marchaud_t) + &self.marchaud_st
    }
}

pub fn weil_terms(f: &Field2D, ord: FracOrder) -> Result<WeilTerms> {
    FracOrder::new(ord.alpha, ord.beta)?;
    let (ps, qs) = AxisOp::derivative_parts(&f.grid, ord.alpha);
    let (pt, qt) = AxisOp::derivative_parts(&f.grid, ord.beta);
    let term = |a: &AxisOp, b: &AxisOp| TensorOp { s: a.clone(), t: b.clone() }.apply(f);
    Ok(WeilTerms {
        pointwise: term(&ps, &pt),
        marchaud_s: term(&qs, &pt),
        marchaud_t: term(&ps, &qt),
        marchaud_st: term(&qs, &qt),
    })
}

/// Regularity diagnostic for the Marchaud integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoughnessReport {
    /// Relative interior L² change of the derivative between step `2h` and `h`.
    pub cauchy_residual: f64,
    /// Hölder exponents estimated from the two finest increments, per axis.
    pub holder_s: f64,
    pub holder_t: f64,
    /// Set when the residual is large or the estimated regularity does not
    /// exceed the derivative order.
    pub rough: bool,
}

const ROUGH_RESIDUAL: f64 = 0.25;

/// Cauchy-residual test of the Weil derivative: compares the result on the
/// grid with the result on the every-other-node subgrid.
pub fn roughness_check(f: &Field2D, ord: FracOrder) -> Result<RoughnessReport> {
    let g = f.grid;
    let holder_s = holder_estimate(&f.values);
    let holder_t = holder_estimate(&f.values.t().to_owned());
    let mut residual = 0.0;
    if g.n >= 9 && g.n % 2 == 1 {
        let coarse_grid = Grid2D::new(g.t_max, (g.n + 1) / 2)?;
        let coarse_vals = f.values.slice(ndarray::s![..;2, ..;2]).to_owned();
        let coarse = Field2D::from_array(coarse_grid, coarse_vals)?;
        let fine_d = rl_derivative(f, ord)?;
        let coarse_d = rl_derivative(&coarse, ord)?;
        let fine_sub = Field2D::from_array(coarse_grid, fine_d.values.slice(ndarray::s![..;2, ..;2]).to_owned())?;
        residual = coarse_d.rel_l2_interior(&fine_sub);
    }
    let rough = residual > ROUGH_RESIDUAL
        || (holder_s.is_finite() && holder_s <= ord.alpha && ord.alpha > 0.0)
        || (holder_t.is_finite() && holder_t <= ord.beta && ord.beta > 0.0);
    Ok(RoughnessReport { cauchy_residual: residual, holder_s, holder_t, rough })
}

// Median of log2(|f_i - f_{i-2}| / |f_i - f_{i-1}|) along the first index.
fn holder_estimate(v: &Array2<f64>) -> f64 {
    let (n, m) = v.dim();
    let mut est = Vec::new();
    for i in 2..n {
        for j in 1..m {
            let d1 = (v[[i, j]] - v[[i - 1, j]]).abs();
            let d2 = (v[[i, j]] - v[[i - 2, j]]).abs();
            if d1 > 0.0 && d2 > 0.0 {
                est.push((d2 / d1).log2());
            }
        }
    }
    if est.is_empty() {
        return f64::INFINITY;
    }
    est.sort_by(f64::total_cmp);
    est[est.len() / 2]
}

/// Weil derivative together with its regularity diagnostic.
pub fn rl_derivative_checked(f: &Field2D, ord: FracOrder) -> Result<(Field2D, RoughnessReport)> {
    let d = rl_derivative(f, ord)?;
    let report = roughness_check(f, ord)?;
    Ok((d, report))
}

/// Pointwise product of two fields on the same grid.
pub fn hadamard(a: &Field2D, b: &Field2D) -> Field2D {
    assert_eq!(a.grid, b.grid, "fields live on different grids");
    let mut values = a.values.clone();
    Zip::from(&mut values).and(&b.values).for_each(|x, &y| *x *= y);
    Field2D { grid: a.grid, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_basics() {
        let g = Grid2D::new(2.0, 5).unwrap();
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.node(4), 2.0);
        assert!(Grid2D::new(1.0, 1).is_err());
    }

    #[test]
    fn integral_of_one_matches_power_rule() {
        let g = Grid2D::new(1.0, 9).unwrap();
        let f = Field2D::constant(g, 1.0);
        let out = rl_integral(&f, FracOrder::new(0.5, 0.5).unwrap()).unwrap();
        assert!((out.at(8, 8) - 4.0 / std::f64::consts::PI).abs() < 1e-13);
        assert_eq!(out.at(0, 5), 0.0);
    }

    #[test]
    fn derivative_of_constant() {
        let g = Grid2D::new(1.0, 17).unwrap();
        let f = Field2D::constant(g, 2.0);
        let d = rl_derivative(&f, FracOrder::new(0.3, 0.4).unwrap()).unwrap();
        let expect = 2.0 * rgamma(0.7) * rgamma(0.6) * 0.5f64.powf(-0.3) * 0.25f64.powf(-0.4);
        assert!((d.at(8, 4) - expect).abs() < 1e-11 * expect);
    }

    #[test]
    fn weighted_integral_reduces_to_plain() {
        let g = Grid2D::new(1.0, 7).unwrap();
        let a = AxisOp::integral(&g, 0.4);
        let b = AxisOp::weighted_integral(&g, 0.4, 0.0).unwrap();
        assert_eq!(a, b);
    }
}
