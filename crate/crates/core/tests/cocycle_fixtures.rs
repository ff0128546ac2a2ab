use almred::cocycle::{almost_mathieu, classify, cond_test, lyapunov, subcritical_witness, Alpha, Classification};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[test]
fn supercritical_plateau() {
    let c = almost_mathieu(2.0, 0.0, Alpha::real(GOLDEN));
    let l = lyapunov(&c, 0.0, 10_000);
    assert!((l - 2f64.ln()).abs() < 0.02, "L = {l}");
    // Above the plateau L(ε) = ln λ + 2πε.
    let l1 = lyapunov(&c, 0.03, 10_000);
    assert!((l1 - l - std::f64::consts::TAU * 0.03).abs() < 0.02, "L(0.03) = {l1}");
}

#[test]
fn subcritical_profile_is_flat_and_convex() {
    let c = almost_mathieu(0.5, 0.0, Alpha::real(GOLDEN));
    let grid = [0.0, 0.01, 0.02, 0.03, 0.04, 0.05];
    let r = classify(&c, &grid, 4000);
    assert_eq!(r.classification, Classification::Subcritical, "{r:?}");
    for w in r.profile.windows(3) {
        assert!(w[0].1 - 2.0 * w[1].1 + w[2].1 > -2e-3, "{:?}", r.profile);
    }
    assert!(r.profile.iter().all(|(_, l)| *l >= r.l0 - 2e-3));
}

#[test]
fn cond_fixture_at_34_over_55() {
    let c = almost_mathieu(0.5, 0.0, Alpha::rational(34, 55));
    let prof = cond_test(&c, 0.05).unwrap();
    // Regression fixture from the first run.
    assert!((prof.delta1 - 0.035632).abs() < 1e-5, "delta1 = {}", prof.delta1);
}

#[test]
fn subcritical_witness_fixture() {
    let c = almost_mathieu(0.5, 0.0, Alpha::real(GOLDEN));
    let n = subcritical_witness(&c, 0.05, 0.05, 2000);
    assert_eq!(n, Some(29));
}
