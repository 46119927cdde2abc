use fracsheet::fraccalc::{Field2D, Grid2D};
use fracsheet::girsanov::DriftSpec;
use fracsheet::kernels::{HurstOrdering, HurstPair};
use fracsheet::sde_solver::{
    a_priori_bound, comparison_test, krylov_estimate, krylov_ratio_bounded, krylov_zero_drift_oracle, solve_picard,
    uniqueness_surrogate, DriftRule, SolveOptions,
};
use fracsheet::simulate::{McConfig, NoisePair, NoiseSampler};
use proptest::prelude::*;

fn ordering() -> HurstOrdering {
    let hp = |x: f64| HurstPair::new(x, x).unwrap();
    HurstOrdering::new(hp(0.3), hp(0.4)).unwrap()
}

fn noise(n: usize, seed: u64) -> NoisePair {
    NoiseSampler::new(Grid2D::new(1.0, n).unwrap(), ordering()).unwrap().sample(seed)
}

#[test]
fn zero_drift_is_the_noise() {
    let nz = noise(17, 1);
    let r = solve_picard(&DriftSpec::zero(), &nz, 0.7, &SolveOptions::default()).unwrap();
    // the first sweep lands on the fixed point, the second confirms it
    assert_eq!(r.iterations, 2);
    let expect = nz.sum().map(|v| v + 0.7);
    assert!((&r.x - &expect).sup_norm() < 1e-15);
}

#[test]
fn unit_drift_without_noise() {
    let g = Grid2D::new(2.0, 17).unwrap();
    let r = solve_picard(&DriftSpec::constant(1.0), &NoisePair::zero(g), 0.5, &SolveOptions::default()).unwrap();
    assert!((&r.x - &Field2D::from_fn(g, |s, t| 0.5 + s * t)).sup_norm() < 1e-13);
}

fn exp_series(z: f64) -> f64 {
    // Σ z^k / (k!)²
    let (mut term, mut acc) = (1.0, 1.0);
    for k in 1..60 {
        term *= z / (k as f64 * k as f64);
        acc += term;
    }
    acc
}

#[test]
fn linear_drift_series() {
    let g = Grid2D::new(1.0, 129).unwrap();
    let opts = SolveOptions { tol: 1e-13, rule: DriftRule::HighOrder, ..Default::default() };
    let r = solve_picard(&DriftSpec::linear(1.0), &NoisePair::zero(g), 1.0, &opts).unwrap();
    let exact = Field2D::from_fn(g, |s, t| exp_series(s * t));
    assert!((&r.x - &exact).sup_norm() <= 1e-8);
}

#[test]
fn comparison_examples() {
    let nz = noise(17, 2);
    let opts = SolveOptions::default();
    let same = comparison_test(&DriftSpec::arctan(0.0), &DriftSpec::arctan(0.0), &nz, 0.0, &opts).unwrap();
    assert_eq!((same.violations, same.max_excess), (0, 0.0));

    let m = 1.5;
    let lo = solve_picard(&DriftSpec::constant(-m), &nz, 0.0, &opts).unwrap();
    let hi = solve_picard(&DriftSpec::constant(m), &nz, 0.0, &opts).unwrap();
    let gap = Field2D::from_fn(nz.grid, |s, t| 2.0 * m * s * t);
    assert!((&(&hi.x - &lo.x) - &gap).sup_norm() < 1e-13);

    for seed in 0..10 {
        let rep =
            comparison_test(&DriftSpec::arctan(-2.0), &DriftSpec::arctan(2.0), &noise(17, seed), 0.0, &opts).unwrap();
        assert_eq!(rep.violations, 0);
    }
    assert!(comparison_test(&DriftSpec::cos(), &DriftSpec::arctan(2.0), &nz, 0.0, &opts).is_err());
}

#[test]
fn fixed_point_is_unique() {
    let opts = SolveOptions::default();
    for seed in 0..5 {
        for b in [DriftSpec::cos(), DriftSpec::sin(), DriftSpec::arctan(0.5)] {
            assert!(uniqueness_surrogate(&b, &noise(17, seed), 0.3, &opts).unwrap().holds);
        }
    }
}

#[test]
fn solutions_respect_a_priori_bound() {
    let opts = SolveOptions::default();
    for seed in 0..5 {
        let nz = noise(17, seed);
        for b in [DriftSpec::cos(), DriftSpec::linear(0.8), DriftSpec::constant(-2.0)] {
            let x = solve_picard(&b, &nz, 1.0, &opts).unwrap().x;
            assert!(x.sup_norm() <= a_priori_bound(&b, &nz, 1.0).unwrap());
        }
    }
    assert!(solve_picard(&DriftSpec::new("raw", |_, _, x| x), &noise(9, 0), 0.0, &opts).is_err());
}

#[test]
fn occupation_matches_gaussian_oracle() {
    let g = Grid2D::new(1.0, 17).unwrap();
    let ord = ordering();
    let sampler = NoiseSampler::new(g, ord).unwrap();
    let radii = [0.5, 0.25, 0.125];
    let est = krylov_estimate(&DriftSpec::zero(), &sampler, 0.0, &radii, 1.5, &McConfig::new(2000, 4)).unwrap();
    for e in &est {
        let oracle = krylov_zero_drift_oracle(&ord, &g, e.radius, 256).unwrap();
        assert!(e.lhs.within(oracle, 3.0), "r = {}", e.radius);
    }
    let drifted = krylov_estimate(&DriftSpec::cos(), &sampler, 0.0, &radii, 1.5, &McConfig::new(2000, 4)).unwrap();
    assert!(krylov_ratio_bounded(&drifted).0);
    assert!(krylov_estimate(&DriftSpec::zero(), &sampler, 0.0, &radii, 1.2, &McConfig::new(10, 4)).is_err());
    assert!(krylov_estimate(&DriftSpec::linear(1.0), &sampler, 0.0, &radii, 1.5, &McConfig::new(10, 4)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn comparison_holds_for_ordered_constants(c1 in -3.0f64..3.0, d in 0.0f64..3.0, seed in any::<u64>()) {
        let nz = noise(9, seed);
        let rep = comparison_test(&DriftSpec::constant(c1), &DriftSpec::constant(c1 + d), &nz, 0.0, &SolveOptions::default()).unwrap();
        prop_assert_eq!(rep.violations, 0);
    }
}
