use fracsheet::fraccalc::{Field2D, Grid2D};
use fracsheet::girsanov::{
    build_drift_pair, density_lt, k_forward, k_inverse_general, k_inverse_smooth, lower_left_integral, pair_shift,
    sampled_drift, single_kernel_shift, DriftSpec, PairBuilder, PairCase,
};
use fracsheet::kernels::{HurstOrdering, HurstPair};
use fracsheet::simulate::{run_paths, McConfig, NoiseSampler};
use fracsheet::specfun::gamma;
use fracsheet::stats::{mean_se, variance_se};
use ndarray::Array2;
use proptest::prelude::*;

fn hp(a: f64, b: f64) -> HurstPair {
    HurstPair::new(a, b).unwrap()
}

fn grid(n: usize) -> Grid2D {
    Grid2D::new(1.0, n).unwrap()
}

fn case_b_ordering() -> HurstOrdering {
    HurstOrdering::new(hp(0.3, 0.3), hp(0.4, 0.4)).unwrap()
}

#[test]
fn forward_operator_of_the_sheet() {
    let g = grid(33);
    let out = k_forward(&Field2D::constant(g, 1.0), &HurstPair::sheet()).unwrap();
    assert!((&out - &Field2D::from_fn(g, |s, t| s * t)).sup_norm() < 1e-12);
}

#[test]
fn forward_operator_reference() {
    // Γ(α+3/2) Γ(5/2-α) / Γ(5/2+α) per axis at α = 0.3, squared
    let exact = 0.374_681_706_453_314_65;
    let g = grid(129);
    let out = k_forward(&Field2D::from_fn(g, |s, t| s * t), &hp(0.3, 0.3)).unwrap();
    assert!((out.at(128, 128) - exact).abs() / exact < 0.01);
}

#[test]
fn forward_then_inverse() {
    let g = grid(257);
    let p = hp(0.3, 0.35);
    let h = Field2D::from_fn(g, |s, t| (1.0 + s * s) * (t + 0.5).sin());
    let (back, report) = k_inverse_general(&k_forward(&h, &p).unwrap(), &p).unwrap();
    assert!(back.rel_l2_interior(&h) <= 0.05);
    assert!(!report.rough);
}

#[test]
fn smooth_inverse_examples() {
    let g = grid(65);
    let u = Field2D::from_fn(g, |s, t| (s - t).cos());
    assert_eq!(k_inverse_smooth(&u, &HurstPair::sheet()).unwrap(), u);
    assert_eq!(k_inverse_smooth(&Field2D::zeros(g), &hp(0.3, 0.2)).unwrap().sup_norm(), 0.0);

    // Γ(a)Γ(b) / (4 Γ(2a) Γ(2b)) s^a t^b with a = b = 0.2
    let c = 1.070_876_688_809_800_9;
    let g = grid(129);
    let psi = k_inverse_smooth(&Field2D::constant(g, 1.0), &hp(0.3, 0.3)).unwrap();
    let exact = Field2D::from_fn(g, |s, t| c * (s * t).powf(0.2));
    assert!(psi.rel_l2_interior(&exact) < 0.01);
}

#[test]
fn general_inverse_agrees_with_smooth() {
    let g = grid(257);
    let p = hp(0.3, 0.35);
    let u = Field2D::from_fn(g, |s, t| (1.0 + s) * (1.0 + t));
    let h = Field2D::from_fn(g, |s, t| (s + s * s / 2.0) * (t + t * t / 2.0));
    let (general, _) = k_inverse_general(&h, &p).unwrap();
    assert!(general.rel_l2_interior(&k_inverse_smooth(&u, &p).unwrap()) <= 0.05);
}

fn sheet_inverse_error(n: usize) -> f64 {
    let g = grid(n);
    let h = Field2D::from_fn(g, |s, t| s * s * t * t * t);
    let (d, _) = k_inverse_general(&h, &HurstPair::sheet()).unwrap();
    d.rel_l2_interior(&Field2D::from_fn(g, |s, t| 6.0 * s * t * t))
}

#[test]
fn general_inverse_of_the_sheet_is_mixed_derivative() {
    let errs: Vec<f64> = [33, 65, 129].iter().map(|&n| sheet_inverse_error(n)).collect();
    assert!(errs[2] < 0.02 && errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn case_a_zero_drift() {
    let g = grid(17);
    let pair = PairBuilder::case_a(g, hp(0.3, 0.3), 0.0, Some(5)).unwrap().build(&Field2D::zeros(g)).unwrap();
    for f in [&pair.u, &pair.v, &pair.psi, &pair.psi_dual] {
        assert_eq!(f.sup_norm(), 0.0);
    }
}

#[test]
fn case_a_unit_drift() {
    // Σ_n (-1)^n Γ(1+a)^2 / Γ(1+(n+1)a)^2 at a = 0.2, summed in extended precision
    let exact = 0.470_897_680_063_636_1;
    let g = grid(129);
    let builder = PairBuilder::case_a(g, hp(0.3, 0.3), 1.0, None).unwrap();
    let pair = builder.build(&Field2D::constant(g, 1.0)).unwrap();
    assert_eq!(pair.case, PairCase::A);
    assert!((pair.v.at(128, 128) - exact).abs() / exact < 0.01);
    assert!(pair.defect < 1e-12);

    // |v| ≤ sup|b| (1 + Σ_{n≥1} s^{na} t^{nb} / (Γ(na)Γ(nb)))
    let a = 0.2;
    for i in 1..129 {
        for j in 1..129 {
            let x = (g.node(i) * g.node(j)).powf(a);
            let bound: f64 = 1.0 + (1..200).map(|n| x.powi(n) / gamma(n as f64 * a).unwrap().powi(2)).sum::<f64>();
            assert!(pair.v.at(i, j).abs() <= bound);
        }
    }
}

#[test]
fn case_b_pair_identity_and_terms() {
    let g = grid(65);
    let ord = case_b_ordering();
    let noise = NoiseSampler::new(g, ord).unwrap().sample(12);
    let pair = build_drift_pair(&DriftSpec::cos(), &ord, &noise, 0.3, None).unwrap();
    assert_eq!(pair.case, PairCase::B);
    assert!(pair.defect <= 1e-8);
    assert!(pair.psi_gap() < 0.1);

    let zero = build_drift_pair(&DriftSpec::zero(), &ord, &noise, 0.0, Some(4)).unwrap();
    for f in [&zero.u, &zero.v, &zero.psi, &zero.psi_dual] {
        assert_eq!(f.sup_norm(), 0.0);
    }
}

#[test]
fn psi_gap_shrinks_under_refinement() {
    let ord = case_b_ordering();
    let gaps: Vec<f64> = [33, 65, 129]
        .iter()
        .map(|&n| {
            let g = grid(n);
            let b = Field2D::from_fn(g, |s, t| (3.0 * s - t).cos());
            PairBuilder::new(g, ord, 1.0, None).unwrap().build(&b).unwrap().psi_gap()
        })
        .collect();
    assert!(gaps[2] <= 0.1 && gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}

#[test]
fn zero_shift_has_unit_density() {
    let g = grid(9);
    let dw = Array2::from_elem((8, 8), 0.7);
    let d = density_lt(&Field2D::zeros(g), &dw).unwrap();
    assert_eq!((d.l, d.log_l), (1.0, 0.0));
}

#[test]
fn constant_shift_lognormal_moments() {
    let c = 0.5;
    let g = grid(9);
    let sampler = NoiseSampler::new(g, case_b_ordering()).unwrap();
    let psi = Field2D::constant(g, c);
    let ls = run_paths(&McConfig::new(40_000, 31), |_, seed| density_lt(&psi, &sampler.sample(seed).dw).unwrap().l);
    assert!(mean_se(&ls).within(1.0, 3.0));
    // e^{c² T²} - 1
    assert!(variance_se(&ls).within(0.284_025_416_687_741_5, 3.0));
}

#[test]
fn case_a_density_has_unit_mean() {
    let g = grid(17);
    let ord = HurstOrdering::new(hp(0.3, 0.3), HurstPair::sheet()).unwrap();
    let sampler = NoiseSampler::new(g, ord).unwrap();
    let builder = PairBuilder::new(g, ord, 1.0, None).unwrap();
    let drift = DriftSpec::cos();
    let ls = run_paths(&McConfig::new(10_000, 32), |_, seed| {
        let noise = sampler.sample(seed);
        let pair = builder.build(&sampled_drift(&drift, &noise, 0.0)).unwrap();
        density_lt(&pair.psi, &noise.dw).unwrap().l
    });
    assert!(mean_se(&ls).within(1.0, 3.0));
}

#[test]
fn shifted_sheet_representation() {
    // B - U is the Volterra transform of dW - ψ h²
    let g = grid(17);
    let sampler = NoiseSampler::new(g, case_b_ordering()).unwrap();
    let noise = sampler.sample(5);
    let u = Field2D::from_fn(g, |s, t| (s + t).sin());
    let target = lower_left_integral(&u);
    let psi = single_kernel_shift(&sampler.lo, &target).unwrap();
    let h2 = g.h() * g.h();
    let shifted = Field2D::from_array(g, sampler.lo.apply(&(&noise.dw - &(&psi * h2)))).unwrap();
    assert!((&shifted - &(&noise.b_lo - &target)).sup_norm() < 1e-10);
}

#[test]
fn pair_shift_reproduces_target() {
    let g = grid(17);
    let sampler = NoiseSampler::new(g, case_b_ordering()).unwrap();
    let target = lower_left_integral(&Field2D::from_fn(g, |s, t| 1.0 + s * t.cos()));
    let psi = pair_shift(&sampler, &target).unwrap();
    let cells = &psi * (g.h() * g.h());
    let rebuilt = Field2D::from_array(g, &sampler.lo.apply(&cells) + &sampler.hi.apply(&cells)).unwrap();
    assert!((&rebuilt - &target).sup_norm() < 1e-10 * target.sup_norm());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pair_shift_is_predictable(i in 1usize..16, j in 1usize..16, bump in -2.0f64..2.0) {
        let g = grid(17);
        let sampler = NoiseSampler::new(g, case_b_ordering()).unwrap();
        let base = Field2D::from_fn(g, |s, t| (s - 2.0 * t).cos());
        let mut moved = base.clone();
        moved.values_mut()[[i, j]] += bump;
        let p0 = pair_shift(&sampler, &base).unwrap();
        let p1 = pair_shift(&sampler, &moved).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                if r + 1 < i || c + 1 < j {
                    prop_assert_eq!(p0[[r, c]], p1[[r, c]]);
                }
            }
        }
    }

    #[test]
    fn pair_identity_for_random_constants(c in -3.0f64..3.0) {
        let g = grid(17);
        let pair = PairBuilder::new(g, case_b_ordering(), c.abs(), None).unwrap().build(&Field2D::constant(g, c)).unwrap();
        prop_assert!(pair.defect <= 1e-8 * (1.0 + c.abs()));
    }
}
