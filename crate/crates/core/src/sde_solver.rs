//! Picard solution of `X_z = x0 + ∫_{[0,z]} b(ζ, X_ζ) dζ + B^{lo}_z + B^{hi}_z`
//! on the grid, with comparison and uniqueness runs, occupation-time
//! estimates, and a law-level check against the Girsanov construction.
//!
//! The default drift rule reads `b` at the lower-left node of each cell, so
//! `X` at a node only depends on strictly earlier nodes and Picard iteration
//! terminates after at most `2n` sweeps. The fourth-order rule is for
//! smooth deterministic checks.

use ndarray::Array2;
use serde::Serialize;

use crate::bounds::bounded_trend;
use crate::fraccalc::{Field2D, Grid2D};
use crate::girsanov::{discrete_girsanov_density, lower_left_integral, DriftSpec};
use crate::kernels::{kernel_cross_integral, HurstOrdering};
use crate::simulate::{run_paths, McConfig, NoisePair, NoiseSampler};
use crate::specfun::erf;
use crate::stats::{ks_two_sample, mean_se, KsResult, MeanSe};
use crate::{Error, Result};

/// How `∫_{[0,z]} b` is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftRule {
    /// `b` at the lower-left node of each cell times the cell area.
    LowerLeft,
    /// Tensor product of a fourth-order cumulative rule.
    HighOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub rule: DriftRule,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200, rule: DriftRule::LowerLeft }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: Field2D,
    pub iterations: usize,
    /// Sup-norm change of the last sweep.
    pub residual: f64,
    pub converged: bool,
    pub history: Vec<f64>,
}

/// Weights of the cumulative rule: row `i` integrates nodal values over `[0, x_i]`.
pub fn cumulative_weights(grid: &Grid2D, rule: DriftRule) -> Array2<f64> {
    let n = grid.n();
    let h = grid.h();
    let mut q = Array2::zeros((n, n));
    for i in 1..n {
        match rule {
            DriftRule::LowerLeft => {
                for k in 0..i {
                    q[[i, k]] = h;
                }
            }
            DriftRule::HighOrder => match i {
                1 if n < 4 => {
                    q[[1, 0]] = 0.5 * h;
                    q[[1, 1]] = 0.5 * h;
                }
                1 => {
                    for (k, c) in [9.0, 19.0, -5.0, 1.0].iter().enumerate() {
                        q[[1, k]] = c * h / 24.0;
                    }
                }
                2 => {
                    q[[2, 0]] = h / 3.0;
                    q[[2, 1]] = 4.0 * h / 3.0;
                    q[[2, 2]] = h / 3.0;
                }
                _ => {
                    let w = h / 24.0;
                    for (k, c) in [9.0, 19.0, -5.0, 1.0].iter().enumerate() {
                        q[[i, k]] += c * w;
                    }
                    for cell in 1..i - 1 {
                        for (k, c) in [-1.0, 13.0, 13.0, -1.0].iter().enumerate() {
                            q[[i, cell - 1 + k]] += c * w;
                        }
                    }
                    for (k, c) in [1.0, -5.0, 19.0, 9.0].iter().enumerate() {
                        q[[i, i - 3 + k]] += c * w;
                    }
                }
            },
        }
    }
    q
}

fn drift_integral(b: &Field2D, rule: DriftRule, q: &Array2<f64>) -> Field2D {
    match rule {
        DriftRule::LowerLeft => lower_left_integral(b),
        DriftRule::HighOrder => Field2D::from_array(b.grid(), q.dot(b.values()).dot(&q.t())).expect("square array"),
    }
}

/// Picard iteration from the initial iterate `start`, without failing on
/// non-convergence.
pub fn picard_iterate(
    b: &DriftSpec,
    noise: &NoisePair,
    x0: f64,
    start: &Field2D,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    if b.growth_c.is_none() && b.bound_m.is_none() {
        return Err(Error::InvalidParameter(format!(
            "drift {} declares neither a bound nor a growth constant",
            b.name
        )));
    }
    if start.grid() != noise.grid {
        return Err(Error::Shape { expected: noise.grid.n(), got: start.grid().n() });
    }
    let base = noise.sum().map(|v| v + x0);
    let q = cumulative_weights(&noise.grid, opts.rule);
    let mut x = start.clone();
    let mut history = Vec::new();
    for it in 1..=opts.max_iter {
        let next = &base + &drift_integral(&b.sample(&x), opts.rule, &q);
        let change = (&next - &x).sup_norm();
        x = next;
        history.push(change);
        if !change.is_finite() {
            return Err(Error::NonConvergence { what: "Picard iteration", residual: change });
        }
        if change <= opts.tol {
            return Ok(SolveResult { x, iterations: it, residual: change, converged: true, history });
        }
    }
    let residual = history.last().copied().unwrap_or(f64::INFINITY);
    Ok(SolveResult { x, iterations: opts.max_iter, residual, converged: false, history })
}

/// Solve from `X⁰ = x0`; fails when the tolerance is not reached.
pub fn solve_picard(b: &DriftSpec, noise: &NoisePair, x0: f64, opts: &SolveOptions) -> Result<SolveResult> {
    let start = Field2D::constant(noise.grid, x0);
    let res = picard_iterate(b, noise, x0, &start, opts)?;
    if !res.converged {
        return Err(Error::NonConvergence { what: "Picard iteration", residual: res.residual });
    }
    Ok(res)
}

/// `(|x0| + ‖B_lo‖ + ‖B_hi‖ + cT²) e^{cT²}` for a drift with growth constant `c`.
pub fn a_priori_bound(b: &DriftSpec, noise: &NoisePair, x0: f64) -> Option<f64> {
    let c = b.growth_c?;
    let t2 = noise.grid.t_max().powi(2);
    Some((x0.abs() + noise.b_lo.sup_norm() + noise.b_hi.sup_norm() + c * t2) * (c * t2).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub violations: usize,
    /// Largest `X1 - X2` over the nodes (non-positive when ordered).
    pub max_excess: f64,
}

/// Solve with `b1 ≤ b2` on the same noise and count nodes with `X1 > X2`.
pub fn comparison_test(
    b1: &DriftSpec,
    b2: &DriftSpec,
    noise: &NoisePair,
    x0: f64,
    opts: &SolveOptions,
) -> Result<ComparisonReport> {
    if !b1.monotone || !b2.monotone {
        return Err(Error::InvalidParameter("comparison needs drifts nondecreasing in x".into()));
    }
    let x1 = solve_picard(b1, noise, x0, opts)?;
    let x2 = solve_picard(b2, noise, x0, opts)?;
    let g = noise.grid;
    for field in [&x1.x, &x2.x] {
        for ((i, j), &x) in field.values().indexed_iter() {
            let (s, t) = (g.node(i), g.node(j));
            if b1.eval(s, t, x) > b2.eval(s, t, x) {
                return Err(Error::InvalidParameter(format!("drifts not ordered at ({s}, {t}, {x})")));
            }
        }
    }
    let diff = &x1.x - &x2.x;
    let violations = diff.values().iter().filter(|&&d| d > 0.0).count();
    let max_excess = diff.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ComparisonReport { violations, max_excess })
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub distance: f64,
    pub tol: f64,
    pub holds: bool,
}

/// Solve from `X⁰ = x0` and from `X⁰ = x0 + B_lo + B_hi`; the fixed points
/// must agree within `2 tol`.
pub fn uniqueness_surrogate(
    b: &DriftSpec,
    noise: &NoisePair,
    x0: f64,
    opts: &SolveOptions,
) -> Result<UniquenessReport> {
    let a = solve_picard(b, noise, x0, opts)?;
    let start = noise.sum().map(|v| v + x0);
    let other = picard_iterate(b, noise, x0, &start, opts)?;
    if !other.converged {
        return Err(Error::NonConvergence { what: "Picard iteration", residual: other.residual });
    }
    let distance = (&a.x - &other.x).sup_norm();
    Ok(UniquenessReport { distance, tol: opts.tol, holds: distance <= 2.0 * opts.tol })
}

fn trapezoid_area(grid: &Grid2D) -> Array2<f64> {
    let w = grid.trapezoid_weights();
    Array2::from_shape_fn((grid.n(), grid.n()), |(i, j)| w[i] * w[j])
}

/// Occupation estimate for `g = 1{|y - x0| ≤ r}` on `[0,T]^2`.
#[derive(Debug, Clone, Serialize)]
pub struct KrylovEstimate {
    pub radius: f64,
    pub rho: f64,
    /// `E ∫ g(ζ, X_ζ) dζ`.
    pub lhs: MeanSe,
    /// `(∫∫ g^ρ dy dζ)^{1/ρ} = (2 r T²)^{1/ρ}`.
    pub rhs: f64,
    pub ratio: f64,
}

/// Monte Carlo occupation estimate for every radius, sharing the paths.
pub fn krylov_estimate(
    b: &DriftSpec,
    sampler: &NoiseSampler,
    x0: f64,
    radii: &[f64],
    rho: f64,
    mc: &McConfig,
) -> Result<Vec<KrylovEstimate>> {
    if b.bound_m.is_none() {
        return Err(Error::InvalidParameter("occupation estimates need a bounded drift".into()));
    }
    let lo = sampler.ordering().lo;
    if !(rho > 1.0 + lo.alpha.max(lo.beta)) {
        return Err(Error::InvalidParameter(format!("rho = {rho} must exceed 1 + max(α, β) of the rougher sheet")));
    }
    let grid = sampler.grid;
    let area = trapezoid_area(&grid);
    let opts = SolveOptions::default();
    let rows: Vec<Result<Vec<f64>>> = run_paths(mc, |_, seed| {
        let noise = sampler.sample(seed);
        let sol = solve_picard(b, &noise, x0, &opts)?;
        Ok(radii
            .iter()
            .map(|&r| {
                sol.x.values().iter().zip(area.iter()).map(|(&x, &w)| if (x - x0).abs() <= r { w } else { 0.0 }).sum()
            })
            .collect())
    });
    let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_>>()?;
    let t2 = grid.t_max().powi(2);
    let mut out = Vec::with_capacity(radii.len());
    for (k, &r) in radii.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|row| row[k]).collect();
        let lhs = mean_se(&vals);
        if lhs.mean > 0.0 && lhs.se > 0.1 * lhs.mean {
            return Err(Error::McVariance { value: lhs.mean, se: lhs.se });
        }
        let rhs = if r > 0.0 { (2.0 * r * t2).powf(1.0 / rho) } else { 0.0 };
        let ratio = if rhs > 0.0 { lhs.mean / rhs } else { 0.0 };
        out.push(KrylovEstimate { radius: r, rho, lhs, rhs, ratio });
    }
    Ok(out)
}

/// `∫ P(|B_lo + B_hi| ≤ r) dz` from the Gaussian marginals, with the
/// trapezoid weights used by [`krylov_estimate`].
pub fn krylov_zero_drift_oracle(ord: &HurstOrdering, grid: &Grid2D, radius: f64, quad_n: usize) -> Result<f64> {
    let n = grid.n();
    let axis = |h1: f64, h2: f64| -> Result<Vec<f64>> {
        (0..n).map(|i| kernel_cross_integral(h1, h2, grid.node(i), grid.node(i), quad_n)).collect()
    };
    let (lo, hi) = (ord.lo, ord.hi);
    let ss = axis(lo.alpha, lo.alpha)?;
    let sx = axis(lo.alpha, hi.alpha)?;
    let sh = axis(hi.alpha, hi.alpha)?;
    let tt = axis(lo.beta, lo.beta)?;
    let tx = axis(lo.beta, hi.beta)?;
    let th = axis(hi.beta, hi.beta)?;
    let area = trapezoid_area(grid);
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let var = ss[i] * tt[j] + 2.0 * sx[i] * tx[j] + sh[i] * th[j];
            let p = if var <= 0.0 { 1.0 } else { erf(radius / (2.0 * var).sqrt()) };
            acc += area[[i, j]] * p;
        }
    }
    Ok(acc)
}

/// Ratios `lhs/rhs` over shrinking radii pass the no-growth test.
pub fn krylov_ratio_bounded(estimates: &[KrylovEstimate]) -> (bool, f64) {
    let ratios: Vec<f64> = estimates.iter().map(|e| e.ratio).collect();
    bounded_trend(&ratios)
}

/// Law of `X_{(T,T)}` from Picard solves against reweighted free paths.
#[derive(Debug, Clone, Serialize)]
pub struct LawComparison {
    pub ks: KsResult,
    pub mean_weight: MeanSe,
    pub picard_mean: MeanSe,
}

/// Picard solutions on one set of paths against `x0 + B_lo + B_hi` on an
/// independent set, reweighted by the discrete Girsanov density.
pub fn girsanov_law_test(b: &DriftSpec, sampler: &NoiseSampler, x0: f64, mc: &McConfig) -> Result<LawComparison> {
    let opts = SolveOptions::default();
    let last = sampler.grid.n() - 1;
    let solved: Vec<Result<f64>> = run_paths(mc, |_, seed| {
        let noise = sampler.sample(seed);
        Ok(solve_picard(b, &noise, x0, &opts)?.x.at(last, last))
    });
    let solved: Vec<f64> = solved.into_iter().collect::<Result<_>>()?;
    let free_mc = McConfig { master_seed: mc.master_seed ^ 0x5EED_F00D_CAFE_u64, ..*mc };
    let weighted: Vec<Result<(f64, f64)>> = run_paths(&free_mc, |_, seed| {
        let noise = sampler.sample(seed);
        let d = discrete_girsanov_density(sampler, &noise, b, x0)?;
        Ok((x0 + noise.b_lo.at(last, last) + noise.b_hi.at(last, last), d.l))
    });
    let weighted: Vec<(f64, f64)> = weighted.into_iter().collect::<Result<_>>()?;
    let xs: Vec<f64> = weighted.iter().map(|p| p.0).collect();
    let ws: Vec<f64> = weighted.iter().map(|p| p.1).collect();
    let ks = ks_two_sample(&solved, None, &xs, Some(&ws))?;
    Ok(LawComparison { ks, mean_weight: mean_se(&ws), picard_mean: mean_se(&solved) })
}
