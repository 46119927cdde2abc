use fracsheet::stats::{kolmogorov_sf, ks_two_sample, mean_se, variance_se};

#[test]
fn mean_and_variance_of_known_samples() {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    let m = mean_se(&xs);
    assert_eq!(m.mean, 3.0);
    assert!((m.se - (2.5f64 / 5.0).sqrt()).abs() < 1e-15);
    assert!(m.within(3.0, 0.0));
    assert!((variance_se(&xs).mean - 2.5).abs() < 1e-15);
    assert!(mean_se(&[]).mean.is_nan());
}

#[test]
fn z_score_edge_cases() {
    let flat = mean_se(&[2.0, 2.0, 2.0]);
    assert_eq!(flat.z_score(2.0), 0.0);
    assert_eq!(flat.z_score(2.1), f64::INFINITY);
}

#[test]
fn kolmogorov_tail() {
    // reference values of the Kolmogorov distribution
    assert!((kolmogorov_sf(1.0) - 0.269_999_671_677_354_52).abs() < 1e-12);
    assert!((kolmogorov_sf(1.36) - 0.049_485_876_755_377_91).abs() < 1e-10);
    assert_eq!(kolmogorov_sf(0.0), 1.0);
}

#[test]
fn ks_detects_shift_and_accepts_equal_laws() {
    let a: Vec<f64> = (0..500).map(|k| (k as f64 + 0.5) / 500.0).collect();
    let b: Vec<f64> = (0..400).map(|k| (k as f64 + 0.25) / 400.0).collect();
    assert!(ks_two_sample(&a, None, &b, None).unwrap().passes(0.05));
    let shifted: Vec<f64> = b.iter().map(|x| x + 0.2).collect();
    assert!(!ks_two_sample(&a, None, &shifted, None).unwrap().passes(0.01));
}

#[test]
fn ks_weights_reshape_the_law() {
    // weights 2x on [0, 1] turn uniform into the triangular law of max(U, V)
    let n = 2000;
    let u: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect();
    let w: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
    let tri: Vec<f64> = u.iter().map(|p| p.sqrt()).collect();
    let r = ks_two_sample(&tri, None, &u, Some(&w)).unwrap();
    assert!(r.statistic < 0.01);
    assert!(r.n_eff_b < n as f64);
    assert!(ks_two_sample(&u, Some(&w[..3]), &u, None).is_err());
    assert!(ks_two_sample(&u, Some(&vec![0.0; n]), &u, None).is_err());
}
