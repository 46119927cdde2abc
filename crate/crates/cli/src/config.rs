//! Run configuration: a flat `key = value` file with flag overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fracsheet::bounds::ExponentPack;
use fracsheet::fraccalc::{FracOrder, Grid2D};
use fracsheet::girsanov::DriftSpec;
use fracsheet::kernels::{HurstOrdering, HurstPair};

use crate::CliError;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub t_max: f64,
    pub grid: usize,
    pub lo: HurstPair,
    pub hi: HurstPair,
    pub drift: String,
    pub x0: f64,
    pub paths: usize,
    /// Paths written to `paths.csv`; the summary uses all of them.
    pub csv_paths: usize,
    pub seed: u64,
    pub truncation: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub out: PathBuf,
    pub exponents: ExponentPack,
    pub depth: usize,
    pub trials: usize,
    pub rl_order: FracOrder,
    pub rho: f64,
    pub series_grid: usize,
    pub comparison_seeds: usize,
    pub uniqueness_seeds: usize,
}

const KEYS: &[&str] = &[
    "T",
    "grid",
    "lo_alpha",
    "lo_beta",
    "hi_alpha",
    "hi_beta",
    "drift",
    "x0",
    "paths",
    "csv_paths",
    "seed",
    "truncation",
    "tol",
    "max_iter",
    "out",
    "a",
    "b",
    "a_prime",
    "b_prime",
    "depth",
    "trials",
    "rl_alpha",
    "rl_beta",
    "rho",
    "series_grid",
    "comparison_seeds",
    "uniqueness_seeds",
];

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| CliError::Config(format!("line {}: expected key = value", no + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn read_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_pairs(&text)
}

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T, CliError> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v.parse::<T>().map_err(|_| CliError::Config(format!("{key}: cannot parse '{v}'"))),
    }
}

fn finite(key: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{key} must be finite")))
    }
}

impl RunConfig {
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, CliError> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(CliError::Config(format!("unknown key '{k}'")));
        }
        let v = |e: fracsheet::Error| CliError::Config(e.to_string());
        let t_max = finite("T", get(map, "T", 1.0)?)?;
        let grid = get(map, "grid", 33usize)?;
        Grid2D::new(t_max, grid).map_err(v)?;
        let lo = HurstPair::new(get(map, "lo_alpha", 0.3)?, get(map, "lo_beta", 0.3)?).map_err(v)?;
        let hi = HurstPair::new(get(map, "hi_alpha", 0.4)?, get(map, "hi_beta", 0.4)?).map_err(v)?;
        HurstOrdering::new(lo, hi).map_err(v)?;
        let drift: String = get(map, "drift", "cos".to_string())?;
        DriftSpec::from_name(&drift).map_err(v)?;
        let truncation = match map.get("truncation") {
            None => None,
            Some(s) if s == "auto" => None,
            Some(_) => Some(get(map, "truncation", 1usize)?),
        };
        if truncation == Some(0) {
            return Err(CliError::Config("truncation must be at least 1".into()));
        }
        let tol = finite("tol", get(map, "tol", 1e-10)?)?;
        if !(tol > 0.0) {
            return Err(CliError::Config("tol must be positive".into()));
        }
        let exponents = ExponentPack::new(
            get(map, "a", 0.3)?,
            get(map, "b", 0.3)?,
            get(map, "a_prime", 0.2)?,
            get(map, "b_prime", 0.2)?,
        )
        .map_err(v)?;
        let rl_order = FracOrder::new(get(map, "rl_alpha", 0.3)?, get(map, "rl_beta", 0.4)?).map_err(v)?;
        if !(rl_order.alpha > 0.0 && rl_order.alpha < 1.0 && rl_order.beta > 0.0 && rl_order.beta < 1.0) {
            return Err(CliError::Config("rl_alpha and rl_beta must lie in (0, 1)".into()));
        }
        let series_grid = get(map, "series_grid", 129usize)?;
        Grid2D::new(t_max, series_grid).map_err(v)?;
        Ok(Self {
            t_max,
            grid,
            lo,
            hi,
            drift,
            x0: finite("x0", get(map, "x0", 0.0)?)?,
            paths: get(map, "paths", 1000)?,
            csv_paths: get(map, "csv_paths", 10)?,
            seed: get(map, "seed", 42)?,
            truncation,
            tol,
            max_iter: get(map, "max_iter", 200)?,
            out: PathBuf::from(get(map, "out", "out".to_string())?),
            exponents,
            depth: get(map, "depth", 200)?,
            trials: get(map, "trials", 10_000)?,
            rl_order,
            rho: finite("rho", get(map, "rho", 2.0)?)?,
            series_grid,
            comparison_seeds: get(map, "comparison_seeds", 100)?,
            uniqueness_seeds: get(map, "uniqueness_seeds", 50)?,
        })
    }

    pub fn grid(&self) -> Grid2D {
        Grid2D::new(self.t_max, self.grid).expect("validated grid")
    }

    pub fn ordering(&self) -> HurstOrdering {
        HurstOrdering::new(self.lo, self.hi).expect("validated ordering")
    }

    pub fn drift_spec(&self) -> DriftSpec {
        DriftSpec::from_name(&self.drift).expect("validated drift")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines() {
        let m = parse_pairs("# run\n\ngrid = 17 # small\nseed=3\n").unwrap();
        assert_eq!(m["grid"], "17");
        assert_eq!(m["seed"], "3");
        assert!(parse_pairs("grid 17").is_err());
    }

    #[test]
    fn ordering_is_validated() {
        let mut m = BTreeMap::new();
        m.insert("hi_alpha".to_string(), "0.3".to_string());
        let err = RunConfig::from_map(&m).unwrap_err();
        assert!(err.to_string().contains('≺'));
    }
}
