//! The four subcommands. Each writes its files under `out` and returns the
//! checks it ran.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use fracsheet::bounds::{
    asymptotic_checks, check_rl_difference_estimate, run_recursions, verify_neumann_bounds, RECURSION_DEPTH,
};
use fracsheet::fraccalc::{Field2D, Grid2D};
use fracsheet::girsanov::{density_lt, novikov_fit, sampled_drift, DriftSpec, PairBuilder};
use fracsheet::kernels::{covariance, sigma2, HurstOrdering, HurstPair};
use fracsheet::report::{all_passed, Check};
use fracsheet::sde_solver::{
    a_priori_bound, comparison_test, girsanov_law_test, krylov_estimate, krylov_ratio_bounded,
    krylov_zero_drift_oracle, solve_picard, uniqueness_surrogate, DriftRule, SolveOptions,
};
use fracsheet::simulate::{derive_seed, run_paths, McConfig, NoisePair, NoiseSampler};
use fracsheet::stats::mean_se;

use crate::config::RunConfig;
use crate::CliError;

pub struct Outcome {
    pub checks: Vec<Check>,
    pub lines: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_file(dir, name, &text)
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn config_json(cfg: &RunConfig) -> Value {
    json!({
        "T": cfg.t_max,
        "grid": cfg.grid,
        "lo": [cfg.lo.alpha, cfg.lo.beta],
        "hi": [cfg.hi.alpha, cfg.hi.beta],
        "drift": cfg.drift,
        "x0": cfg.x0,
        "paths": cfg.paths,
        "seed": cfg.seed,
    })
}

fn status(checks: &[Check]) -> &'static str {
    if all_passed(checks) {
        "pass"
    } else {
        "fail"
    }
}

fn mc(cfg: &RunConfig, paths: usize, salt: u64) -> McConfig {
    McConfig::new(paths, derive_seed(cfg.seed, salt))
}

// Probe pairs as fractions of T.
const PROBES: [((f64, f64), (f64, f64)); 5] = [
    ((1.0, 1.0), (1.0, 1.0)),
    ((0.5, 0.5), (1.0, 1.0)),
    ((0.25, 0.75), (0.75, 0.25)),
    ((0.5, 1.0), (1.0, 0.5)),
    ((0.75, 0.75), (0.25, 0.5)),
];

fn node_of(grid: &Grid2D, frac: f64) -> usize {
    (frac * (grid.n() - 1) as f64).round() as usize
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.grid();
    let ord = cfg.ordering();
    let sampler = NoiseSampler::new(grid, ord)?;
    let probes: Vec<((usize, usize), (usize, usize))> = PROBES
        .iter()
        .map(|&((a, b), (c, d))| ((node_of(&grid, a), node_of(&grid, b)), (node_of(&grid, c), node_of(&grid, d))))
        .collect();
    let sum_nodes = [(node_of(&grid, 1.0), node_of(&grid, 1.0)), (node_of(&grid, 0.5), node_of(&grid, 0.5))];
    let csv_paths = cfg.csv_paths.min(cfg.paths);
    let rows = run_paths(&mc(cfg, cfg.paths, 1), |k, seed| {
        let noise = sampler.sample(seed);
        let prod = |f: &Field2D| -> Vec<f64> { probes.iter().map(|&(p, q)| f.at(p.0, p.1) * f.at(q.0, q.1)).collect() };
        let sum = noise.sum();
        let sq: Vec<f64> = sum_nodes.iter().map(|&(i, j)| sum.at(i, j).powi(2)).collect();
        let keep = if k < csv_paths { Some(noise.clone()) } else { None };
        (prod(&noise.b_lo), prod(&noise.b_hi), sq, keep)
    });

    let mut csv = String::from("path_id,i,j,s,t,W,B_lo,B_hi\n");
    for (k, row) in rows.iter().enumerate() {
        if let Some(noise) = &row.3 {
            append_paths(&mut csv, k, noise);
        }
    }
    write_file(&cfg.out, "paths.csv", &csv)?;

    let mut table = Vec::new();
    let mut checks = Vec::new();
    for (label, hp, pick) in [("lo", ord.lo, 0usize), ("hi", ord.hi, 1usize)] {
        for (p, &(z, z2)) in probes.iter().enumerate() {
            let vals: Vec<f64> = rows.iter().map(|r| if pick == 0 { r.0[p] } else { r.1[p] }).collect();
            let emp = mean_se(&vals);
            let zc = (grid.node(z.0), grid.node(z.1));
            let zc2 = (grid.node(z2.0), grid.node(z2.1));
            let exact = covariance(&hp, zc, zc2);
            let score = emp.z_score(exact);
            let ok = cfg.paths < 2 || score <= 3.0;
            table.push(json!({
                "sheet": label, "z": [zc.0, zc.1], "z2": [zc2.0, zc2.1],
                "analytic": exact, "empirical": emp.mean, "se": emp.se, "z_score": score,
            }));
            checks.push(Check::new(
                format!("covariance {label} ({:.4},{:.4})-({:.4},{:.4})", zc.0, zc.1, zc2.0, zc2.1),
                ok,
                score / 3.0,
                format!("empirical {:.6} vs {:.6}", emp.mean, exact),
            ));
        }
    }
    let mut sums = Vec::new();
    for (q, &(i, j)) in sum_nodes.iter().enumerate() {
        let z = (grid.node(i), grid.node(j));
        let exact = sigma2(&ord, z, 256)?;
        let vals: Vec<f64> = rows.iter().map(|r| r.2[q]).collect();
        let emp = mean_se(&vals);
        let score = emp.z_score(exact);
        sums.push(json!({ "z": [z.0, z.1], "sigma2": exact, "empirical": emp.mean, "se": emp.se, "z_score": score }));
        checks.push(Check::new(
            format!("sum variance ({:.4},{:.4})", z.0, z.1),
            cfg.paths < 2 || score <= 3.0,
            score / 3.0,
            format!("empirical {:.6} vs {:.6}", emp.mean, exact),
        ));
    }
    let summary = json!({
        "config": config_json(cfg),
        "csv_paths": csv_paths,
        "covariance": table,
        "sum_variance": sums,
        "checks": checks,
        "status": status(&checks),
    });
    write_json(&cfg.out, "summary.json", &summary)?;
    let lines = vec![format!("simulate: {} paths, covariance check {}", cfg.paths, status(&checks))];
    Ok(Outcome { checks, lines })
}

fn append_paths(csv: &mut String, k: usize, noise: &NoisePair) {
    let g = noise.grid;
    for i in 0..g.n() {
        for j in 0..g.n() {
            let _ = writeln!(
                csv,
                "{k},{i},{j},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                g.node(i),
                g.node(j),
                noise.w.at(i, j),
                noise.b_lo.at(i, j),
                noise.b_hi.at(i, j)
            );
        }
    }
}

pub fn cmd_girsanov_check(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.grid();
    let ord = cfg.ordering();
    let drift = cfg.drift_spec();
    let sampler = NoiseSampler::new(grid, ord)?;
    let first = sampler.sample(derive_seed(cfg.seed, 2));
    let first_b = sampled_drift(&drift, &first, cfg.x0);
    let bsup = drift.bound_m.unwrap_or_else(|| 2.0 * first_b.sup_norm());
    let builder = PairBuilder::new(grid, ord, bsup, cfg.truncation)?;
    let pair = builder.build(&first_b)?;
    let gap = pair.psi_gap();

    let rows: Vec<fracsheet::Result<(f64, f64, f64)>> = run_paths(&mc(cfg, cfg.paths, 3), |_, seed| {
        let noise = sampler.sample(seed);
        let p = builder.build(&sampled_drift(&drift, &noise, cfg.x0))?;
        let d = density_lt(&p.psi, &noise.dw)?;
        Ok((d.l, p.psi.sup_norm(), noise.sum().sup_norm()))
    });
    let rows: Vec<(f64, f64, f64)> = rows.into_iter().collect::<fracsheet::Result<_>>()?;
    let ls: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let el = mean_se(&ls);
    let z = el.z_score(1.0);

    let mut checks = vec![
        Check::new("E[L_T] = 1", cfg.paths < 2 || z <= 3.0, z / 3.0, format!("mean {:.6} ± {:.6}", el.mean, el.se)),
        Check::new("u + v = b", pair.defect <= 1e-8, pair.defect / 1e-8, format!("sup defect {:.3e}", pair.defect)),
        Check::new("psi consistency", gap <= 0.10, gap / 0.10, format!("relative L2 gap {gap:.4} at n = {}", grid.n())),
    ];
    let mut novikov = Value::Null;
    if rows.len() >= 4 {
        let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.1, r.2)).collect();
        // fit on all but the last (at most) 100 paths, then check those
        let checked = (rows.len() / 2).min(100);
        let fit = novikov_fit(&pairs, rows.len() - checked, 1.1)?;
        checks.push(Check::new(
            "Novikov surrogate",
            fit.holds,
            fit.worst_ratio / 1.1,
            format!("c = {:.4}, held-out ratio {:.4}", fit.c, fit.worst_ratio),
        ));
        novikov = serde_json::to_value(&fit).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let report = json!({
        "config": config_json(cfg),
        "case": pair.case,
        "truncation_n": pair.truncation_n,
        "residual": pair.residual,
        "defect": pair.defect,
        "psi_gap": gap,
        "expected_density": { "mean": el.mean, "se": el.se, "z_score": z },
        "novikov": novikov,
        "checks": checks,
        "status": status(&checks),
    });
    write_json(&cfg.out, "girsanov.json", &report)?;
    let lines = vec![format!(
        "girsanov-check: case {:?}, N = {}, E[L_T] = {:.5} ± {:.5}, psi gap {:.4}",
        pair.case, pair.truncation_n, el.mean, el.se, gap
    )];
    Ok(Outcome { checks, lines })
}

pub fn cmd_bounds(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let exp = cfg.exponents;
    let depth = cfg.depth;
    let seq = run_recursions(&exp, 1.0, depth)?;
    let mut checks = Vec::new();
    let c = &seq.constants;
    let quad_gap = (c.d5 - c.d5_fixed).abs().max((c.d6 - c.d6_fixed).abs());
    checks.push(Check::new(
        "d5, d6 two quadratures agree",
        quad_gap <= 1e-6,
        quad_gap / 1e-6,
        format!("{quad_gap:.2e}"),
    ));
    let wendel = seq.wendel_violations();
    checks.push(Check::new("Wendel bound on kappa", wendel.is_empty(), 0.0, format!("{} violations", wendel.len())));
    let positive = seq
        .kappa
        .iter()
        .chain(&seq.kappa_t)
        .chain(&seq.kappa_p)
        .chain(&seq.kappa_tp)
        .all(|k| k.is_finite() && *k > 0.0);
    checks.push(Check::new("kappa family positive and finite", positive, 0.0, format!("n ≤ {depth}")));

    let mut tail = Value::Null;
    if depth >= 10 {
        checks.extend(asymptotic_checks(&seq, 10, depth.min(200)));
        let long = run_recursions(&exp, 1.0, RECURSION_DEPTH)?;
        let idx = long.tail_index(cfg.t_max, 1e-6);
        checks.push(Check::new(
            "C* tail below 1e-6",
            idx.is_some_and(|n| n <= 200),
            idx.map_or(f64::INFINITY, |n| n as f64 / 200.0),
            format!("first n = {idx:?}"),
        ));
        tail = json!(idx);
    }

    let lo = HurstPair::new(0.5 - exp.a, 0.5 - exp.b)?;
    let hi = HurstPair::new(0.5 - exp.ap, 0.5 - exp.bp)?;
    let ord = HurstOrdering::new(lo, hi)?;
    let grid = cfg.grid();
    let n_terms = depth.min(3);
    let mut neumann = Vec::new();
    let noisy = NoiseSampler::new(grid, ord)?.sample(derive_seed(cfg.seed, 4));
    for (label, noise, drift) in [
        ("b = 1, no noise", NoisePair::zero(grid), DriftSpec::constant(1.0)),
        ("configured drift", noisy, cfg.drift_spec()),
    ] {
        let rep = verify_neumann_bounds(&ord, &noise, &drift, cfg.x0, n_terms, 1.1)?;
        for ch in &rep.checks {
            checks.push(Check { name: format!("{} [{label}]", ch.name), ..ch.clone() });
        }
        neumann.push(json!({ "case": label, "bsup": rep.bsup, "terms": rep.terms }));
    }

    let mut rl = Value::Null;
    if depth >= 1 && cfg.trials > 0 {
        let rep = check_rl_difference_estimate(cfg.rl_order, cfg.trials, derive_seed(cfg.seed, 5), 65)?;
        checks.extend(rep.checks.iter().cloned());
        rl = serde_json::to_value(&rep).map_err(|e| CliError::Io(e.to_string()))?;
    }

    let report = json!({
        "exponents": exp,
        "constants": seq.constants,
        "depth": depth,
        "sequences": {
            "d1": seq.d1, "d2": seq.d2, "r": seq.r, "m": seq.m, "l": seq.l,
            "ln_c": seq.ln_c, "ln_cstar": seq.ln_cstar,
        },
        "c0": seq.c(0),
        "cstar0": seq.cstar(0),
        "tail_index": tail,
        "neumann": neumann,
        "rl_difference": rl,
        "checks": checks,
        "status": status(&checks),
    });
    write_json(&cfg.out, "bounds.json", &report)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    let mut lines = vec![format!("bounds: {} checks, {} failed", checks.len(), failed.len())];
    lines.extend(failed.iter().map(|n| format!("  failed: {n}")));
    Ok(Outcome { checks, lines })
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.grid();
    let ord = cfg.ordering();
    let drift = cfg.drift_spec();
    let sampler = NoiseSampler::new(grid, ord)?;
    let opts = SolveOptions { tol: cfg.tol, max_iter: cfg.max_iter, rule: DriftRule::LowerLeft };
    let noise = sampler.sample(derive_seed(cfg.seed, 6));
    let sol = solve_picard(&drift, &noise, cfg.x0, &opts)?;

    let mut csv = String::from("i,j,s,t,X,B_lo,B_hi\n");
    for i in 0..grid.n() {
        for j in 0..grid.n() {
            let _ = writeln!(
                csv,
                "{i},{j},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                grid.node(i),
                grid.node(j),
                sol.x.at(i, j),
                noise.b_lo.at(i, j),
                noise.b_hi.at(i, j)
            );
        }
    }
    write_file(&cfg.out, "solution.csv", &csv)?;

    let mut checks = Vec::new();
    let n = grid.n();
    let axis_ok = (0..n).all(|k| sol.x.at(0, k) == cfg.x0 && sol.x.at(k, 0) == cfg.x0);
    checks.push(Check::new("axis values equal x0", axis_ok, 0.0, String::new()));
    if let Some(bound) = a_priori_bound(&drift, &noise, cfg.x0) {
        let sup = sol.x.sup_norm();
        checks.push(Check::new(
            "a priori bound",
            sup <= bound,
            sup / bound,
            format!("sup |X| = {sup:.4}, bound {bound:.4}"),
        ));
    }

    // noiseless linear drift against Σ (c s t)^k / (k!)^2
    let sg = Grid2D::new(cfg.t_max, cfg.series_grid)?;
    let lin = solve_picard(
        &DriftSpec::linear(1.0),
        &NoisePair::zero(sg),
        1.0,
        &SolveOptions { tol: 1e-13, max_iter: cfg.max_iter, rule: DriftRule::HighOrder },
    )?;
    let mut series_err = 0.0f64;
    for i in 0..sg.n() {
        for j in 0..sg.n() {
            series_err = series_err.max((lin.x.at(i, j) - exp_series(sg.node(i) * sg.node(j))).abs());
        }
    }
    checks.push(Check::new(
        "linear drift series",
        series_err <= 1e-8,
        series_err / 1e-8,
        format!("max error {series_err:.3e}"),
    ));

    let lower = DriftSpec::arctan(-2.0);
    let upper = DriftSpec::arctan(2.0);
    let cmp: Vec<fracsheet::Result<usize>> = run_paths(&mc(cfg, cfg.comparison_seeds, 7), |_, seed| {
        Ok(comparison_test(&lower, &upper, &sampler.sample(seed), cfg.x0, &opts)?.violations)
    });
    let violations: usize = cmp.into_iter().collect::<fracsheet::Result<Vec<_>>>()?.iter().sum();
    checks.push(Check::new(
        "comparison arctan-2 <= arctan+2",
        violations == 0,
        violations as f64,
        format!("{violations} violations over {} seeds", cfg.comparison_seeds),
    ));

    let uniq: Vec<fracsheet::Result<f64>> = run_paths(&mc(cfg, cfg.uniqueness_seeds, 8), |_, seed| {
        Ok(uniqueness_surrogate(&drift, &sampler.sample(seed), cfg.x0, &opts)?.distance)
    });
    let worst = uniq.into_iter().collect::<fracsheet::Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    checks.push(Check::new(
        "pathwise uniqueness surrogate",
        worst <= 2.0 * cfg.tol,
        worst / (2.0 * cfg.tol),
        format!("largest distance {worst:.3e} over {} seeds", cfg.uniqueness_seeds),
    ));

    let mut krylov = Value::Null;
    let mut law = Value::Null;
    if cfg.paths >= 2 {
        let radii: Vec<f64> = (0..6).map(|k| 0.5f64.powi(k)).collect();
        let zero = DriftSpec::zero();
        let free = krylov_estimate(&zero, &sampler, cfg.x0, &radii, cfg.rho, &mc(cfg, cfg.paths, 9))?;
        let oracle = krylov_zero_drift_oracle(&ord, &grid, radii[0], 256)?;
        let score = free[0].lhs.z_score(oracle);
        checks.push(Check::new(
            "occupation vs Gaussian oracle",
            score <= 3.0,
            score / 3.0,
            format!("MC {:.5} ± {:.5}, oracle {oracle:.5}", free[0].lhs.mean, free[0].lhs.se),
        ));
        let family = if drift.bound_m.is_some() {
            krylov_estimate(&drift, &sampler, cfg.x0, &radii, cfg.rho, &mc(cfg, cfg.paths, 10))?
        } else {
            free.clone()
        };
        let (ok, growth) = krylov_ratio_bounded(&family);
        checks.push(Check::new(
            "occupation ratio bounded",
            ok,
            growth / 1.5,
            format!("last/first third ratio {growth:.4}"),
        ));
        krylov = json!({ "zero_drift": free, "oracle": oracle, "drift": family });

        if drift.bound_m.is_some() {
            let cmp = girsanov_law_test(&drift, &sampler, cfg.x0, &mc(cfg, cfg.paths, 11))?;
            checks.push(Check::new(
                "KS: Picard vs reweighted law",
                cmp.ks.passes(0.01),
                0.01 / cmp.ks.p_value.max(f64::MIN_POSITIVE),
                format!("D = {:.5}, p = {:.4}", cmp.ks.statistic, cmp.ks.p_value),
            ));
            law = serde_json::to_value(&cmp).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }

    let report = json!({
        "config": config_json(cfg),
        "iterations": sol.iterations,
        "residual": sol.residual,
        "converged": sol.converged,
        "x_at_corner": sol.x.at(n - 1, n - 1),
        "linear_series_error": series_err,
        "comparison_violations": violations,
        "uniqueness_distance": worst,
        "krylov": krylov,
        "law_test": law,
        "checks": checks,
        "status": status(&checks),
    });
    write_json(&cfg.out, "solve.json", &report)?;
    let lines =
        vec![format!("solve: {} Picard sweeps, {} checks, status {}", sol.iterations, checks.len(), status(&checks))];
    Ok(Outcome { checks, lines })
}

fn exp_series(z: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= z / (k * k) as f64;
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}
