//! Brownian sheet increments and the pair of fractional Brownian sheets built
//! from one draw of them, plus deterministic Monte Carlo orchestration.
//!
//! A sheet with Hurst pair `(α, β)` is the discrete Volterra transform
//! `B = K^α dW (K^β)^T`, where `K^H` holds one kernel value per (node, cell).
//! Cells away from the singular edges take the cell average of the kernel;
//! the cell touching the edge `ζ → z` and the cell at the axis take the
//! root-mean-square value `(h^{-1} ∫ K^2)^{1/2}`, which keeps the marginal
//! variances exact.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::fraccalc::{Field2D, Grid2D};
use crate::kernels::{HurstOrdering, HurstPair, Kernel1d};
use crate::quad::{gauss_legendre, TanhSinh};
use crate::{Error, Result};

/// Kernel values per (node, cell) along one axis: an `n x (n-1)` matrix.
pub fn kernel_matrix(grid: &Grid2D, h: f64) -> Result<Array2<f64>> {
    let n = grid.n();
    let cells = grid.cells();
    let mut m = Array2::zeros((n, cells));
    let k = Kernel1d::new(h)?;
    if h == 0.5 {
        for i in 1..n {
            for c in 0..i {
                m[[i, c]] = 1.0;
            }
        }
        return Ok(m);
    }
    let step = grid.h();
    let rule = gauss_legendre(8);
    let ts = TanhSinh::new(1e-11);
    for i in 1..n {
        let t = grid.node(i);
        for c in 0..i {
            let lo = grid.node(c);
            let hi = grid.node(c + 1);
            let value = if c == 0 || c + 1 == i {
                let beyond = t - hi;
                let est = ts.integrate(lo, hi, |_, da, db| {
                    let u = lo + da;
                    let gap = beyond + db;
                    k.eval_gap(t, u, gap).map(|v| v * v).unwrap_or(f64::NAN)
                })?;
                (est.value / step).sqrt()
            } else {
                let mut err = None;
                let v = rule.integrate(lo, hi, |u| match k.eval_gap(t, u, t - u) {
                    Ok(v) => v,
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                });
                if let Some(e) = err {
                    return Err(e);
                }
                v / step
            };
            if !value.is_finite() {
                return Err(Error::NonConvergence { what: "kernel cell integral", residual: f64::NAN });
            }
            m[[i, c]] = value;
        }
    }
    Ok(m)
}

/// Discrete Volterra transform for one Hurst pair on one grid.
#[derive(Debug, Clone)]
pub struct VolterraOperator {
    pub hp: HurstPair,
    pub s: Array2<f64>,
    pub t: Array2<f64>,
}

impl VolterraOperator {
    pub fn new(grid: &Grid2D, hp: HurstPair) -> Result<Self> {
        let s = kernel_matrix(grid, hp.alpha)?;
        let t = if hp.beta == hp.alpha { s.clone() } else { kernel_matrix(grid, hp.beta)? };
        Ok(Self { hp, s, t })
    }

    /// `K^α · cells · (K^β)^T`: maps a cell field to a nodal field.
    pub fn apply(&self, cells: &Array2<f64>) -> Array2<f64> {
        self.s.dot(cells).dot(&self.t.t())
    }
}

/// I.i.d. `N(0, h^2)` increments, one per cell, from a single seed.
pub fn sample_sheet_increments(grid: &Grid2D, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = grid.cells();
    let h = grid.h();
    Array2::from_shape_simple_fn((c, c), || {
        let z: f64 = rng.sample(StandardNormal);
        z * h
    })
}

/// Nodal Brownian sheet `W(s_i, t_j)` from its cell increments.
pub fn cumulative_sheet(grid: &Grid2D, dw: &Array2<f64>) -> Field2D {
    let n = grid.n();
    let mut w = Array2::zeros((n, n));
    for i in 1..n {
        for j in 1..n {
            w[[i, j]] = dw[[i - 1, j - 1]] + w[[i - 1, j]] + w[[i, j - 1]] - w[[i - 1, j - 1]];
        }
    }
    Field2D::from_array(*grid, w).expect("square array")
}

/// Fractional Brownian sheet with Hurst pair `hp` driven by the increments `dw`.
pub fn volterra_transform(grid: &Grid2D, dw: &Array2<f64>, hp: HurstPair) -> Result<Field2D> {
    let c = grid.cells();
    if dw.dim() != (c, c) {
        return Err(Error::Shape { expected: c, got: dw.nrows() });
    }
    let op = VolterraOperator::new(grid, hp)?;
    Field2D::from_array(*grid, op.apply(dw))
}

/// One draw of the Brownian sheet and the two fractional sheets it drives.
#[derive(Debug, Clone)]
pub struct NoisePair {
    pub grid: Grid2D,
    pub dw: Array2<f64>,
    pub w: Field2D,
    pub b_lo: Field2D,
    pub b_hi: Field2D,
    pub seed: u64,
}

impl NoisePair {
    /// `B_lo + B_hi`.
    pub fn sum(&self) -> Field2D {
        &self.b_lo + &self.b_hi
    }

    /// Restriction to every `factor`-th node. Sheet values are subsampled and
    /// cell increments summed over blocks, so refinement studies can share
    /// one fine draw.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let cells = self.grid.cells();
        if factor == 0 || cells % factor != 0 {
            return Err(Error::InvalidParameter(format!("factor {factor} does not divide {cells} cells")));
        }
        let grid = Grid2D::new(self.grid.t_max(), cells / factor + 1)?;
        let c = grid.cells();
        let dw = Array2::from_shape_fn((c, c), |(i, j)| {
            self.dw.slice(ndarray::s![i * factor..(i + 1) * factor, j * factor..(j + 1) * factor]).sum()
        });
        let sub = |f: &Field2D| {
            let v = f.values().slice(ndarray::s![..;factor, ..;factor]).to_owned();
            Field2D::from_array(grid, v).expect("square array")
        };
        Ok(Self { grid, dw, w: sub(&self.w), b_lo: sub(&self.b_lo), b_hi: sub(&self.b_hi), seed: self.seed })
    }

    /// A noise pair that is identically zero, for deterministic runs.
    pub fn zero(grid: Grid2D) -> Self {
        let c = grid.cells();
        Self {
            grid,
            dw: Array2::zeros((c, c)),
            w: Field2D::zeros(grid),
            b_lo: Field2D::zeros(grid),
            b_hi: Field2D::zeros(grid),
            seed: 0,
        }
    }
}

/// Kernel matrices for an ordered pair, built once and reused across paths.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    pub grid: Grid2D,
    pub lo: VolterraOperator,
    pub hi: VolterraOperator,
}

impl NoiseSampler {
    pub fn new(grid: Grid2D, ord: HurstOrdering) -> Result<Self> {
        Ok(Self { grid, lo: VolterraOperator::new(&grid, ord.lo)?, hi: VolterraOperator::new(&grid, ord.hi)? })
    }

    pub fn ordering(&self) -> HurstOrdering {
        HurstOrdering { lo: self.lo.hp, hi: self.hi.hp }
    }

    pub fn sample(&self, seed: u64) -> NoisePair {
        let dw = sample_sheet_increments(&self.grid, seed);
        self.from_increments(dw, seed)
    }

    pub fn from_increments(&self, dw: Array2<f64>, seed: u64) -> NoisePair {
        let b_lo = Field2D::from_array(self.grid, self.lo.apply(&dw)).expect("square array");
        let b_hi = Field2D::from_array(self.grid, self.hi.apply(&dw)).expect("square array");
        let w = cumulative_sheet(&self.grid, &dw);
        NoisePair { grid: self.grid, dw, w, b_lo, b_hi, seed }
    }
}

/// Draw a correlated pair `(B_lo, B_hi)` from one sheet.
pub fn sample_noise_pair(lo: HurstPair, hi: HurstPair, grid: Grid2D, seed: u64) -> Result<NoisePair> {
    let ord = HurstOrdering::new(lo, hi)?;
    Ok(NoiseSampler::new(grid, ord)?.sample(seed))
}

/// Monte Carlo run size and seeding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub paths: usize,
    pub master_seed: u64,
    pub workers: usize,
}

impl McConfig {
    pub fn new(paths: usize, master_seed: u64) -> Self {
        Self { paths, master_seed, workers: default_workers() }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }
}

/// Worker count from `FRACSHEET_THREADS`, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var("FRACSHEET_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of path `k` under `master`; a pure function of both.
pub fn derive_seed(master: u64, k: u64) -> u64 {
    splitmix64(splitmix64(master) ^ k.wrapping_mul(0xD134_2543_DE82_EF95))
}

/// Run `f(k, seed_k)` for every path and return results in path order.
///
/// Paths run on `mc.workers` threads; the output does not depend on the
/// worker count.
pub fn run_paths<T, F>(mc: &McConfig, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync + Send,
{
    let job = || (0..mc.paths).into_par_iter().map(|k| f(k, derive_seed(mc.master_seed, k as u64))).collect();
    match rayon::ThreadPoolBuilder::new().num_threads(mc.workers.max(1)).build() {
        Ok(pool) => pool.install(job),
        Err(_) => (0..mc.paths).map(|k| f(k, derive_seed(mc.master_seed, k as u64))).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sheet_transform_is_cumulative_sum() {
        let g = Grid2D::new(1.0, 6).unwrap();
        let dw = sample_sheet_increments(&g, 3);
        let b = volterra_transform(&g, &dw, HurstPair::sheet()).unwrap();
        let w = cumulative_sheet(&g, &dw);
        assert!((&b - &w).sup_norm() < 1e-14);
    }

    #[test]
    fn seeds_are_reproducible() {
        let g = Grid2D::new(1.0, 5).unwrap();
        assert_eq!(sample_sheet_increments(&g, 9), sample_sheet_increments(&g, 9));
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
    }
}
