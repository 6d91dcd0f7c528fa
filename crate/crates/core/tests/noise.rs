use drdp::dp_noise::audit::{
    audit_ratio, ks_statistic, laplace_cdf, linear_edges, symmetric_release,
};
use drdp::dp_noise::{
    adjust_reading, compute_scale, protect_reading, sample_laplace, LaplaceNoise, PrivacyParams,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Composite Simpson rule; the reference moments below never touch the sampler.
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = if n.is_multiple_of(2) { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + h * i as f64);
    }
    sum * h / 3.0
}

fn laplace_density(x: f64, scale: f64) -> f64 {
    (-(x.abs()) / scale).exp() / (2.0 * scale)
}

#[test]
fn quadrature_moments_match_closed_forms() {
    for b in [0.5, 1.0, 7.0, 100.0] {
        // folded density is 2 f(x) on x >= 0
        let folded_mean = simpson(|x| x * 2.0 * laplace_density(x, b), 0.0, 60.0 * b, 200_000);
        let variance = simpson(
            |x| x * x * laplace_density(x, b),
            -60.0 * b,
            60.0 * b,
            400_000,
        );
        assert!((folded_mean - b).abs() / b < 1e-9, "b={b}: {folded_mean}");
        assert!(
            (variance - 2.0 * b * b).abs() / (2.0 * b * b) < 1e-9,
            "b={b}: {variance}"
        );
    }
}

#[test]
fn empirical_moments_match_quadrature() {
    let b = 7.0;
    let folded_mean = simpson(|x| x * 2.0 * laplace_density(x, b), 0.0, 60.0 * b, 200_000);
    let variance = simpson(
        |x| x * x * laplace_density(x, b),
        -60.0 * b,
        60.0 * b,
        400_000,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| sample_laplace(0.0, b, &mut rng).raw)
        .collect();
    let n = draws.len() as f64;
    let mag_mean = draws.iter().map(|d| d.abs()).sum::<f64>() / n;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);

    assert!(
        (mag_mean - folded_mean).abs() / folded_mean < 0.03,
        "{mag_mean}"
    );
    assert!((var - variance).abs() / variance < 0.05, "{var}");
}

#[test]
fn ks_against_analytic_cdf() {
    for (mu, b) in [(0.0, 1.0), (3.0, 0.25), (0.0, 100.0)] {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| sample_laplace(mu, b, &mut rng).raw)
            .collect();
        let d = ks_statistic(&draws, |x| laplace_cdf(x, mu, b));
        assert!(d < 0.01, "mu={mu} b={b}: D={d}");
    }
}

#[test]
fn ks_detects_wrong_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| sample_laplace(0.0, 1.3, &mut rng).raw)
        .collect();
    assert!(ks_statistic(&draws, |x| laplace_cdf(x, 0.0, 1.0)) > 0.01);
}

#[test]
fn protect_adds_scale_on_average() {
    let params = PrivacyParams::centered(0.01, 1.0).unwrap();
    let mut noise = LaplaceNoise::new(ChaCha8Rng::seed_from_u64(5));
    let n = 10_000;
    let added: f64 = (0..n)
        .map(|_| protect_reading(1000.0, &params, &mut noise).unwrap() - 1000.0)
        .sum::<f64>()
        / n as f64;
    assert!((added - 100.0).abs() / 100.0 < 0.05, "{added}");
}

#[test]
fn protect_then_adjust_cancels_on_average() {
    // 432 slots x 10 meters; readings well above the noise scale so clamping is rare
    let params = PrivacyParams::centered(0.01, 1.0).unwrap();
    let mut meter = LaplaceNoise::new(ChaCha8Rng::seed_from_u64(1));
    let mut grid = LaplaceNoise::new(ChaCha8Rng::seed_from_u64(2));
    let mut truth = 0.0;
    let mut billed = 0.0;
    for k in 0..4320 {
        let i_v = 800.0 + (k % 144) as f64 * 5.0;
        let p_v = protect_reading(i_v, &params, &mut meter).unwrap();
        let b_r = adjust_reading(p_v, &params, &mut grid).unwrap();
        assert!(p_v >= i_v && b_r <= p_v);
        truth += i_v;
        billed += b_r;
    }
    let mean_i = truth / 4320.0;
    let mean_diff = (billed - truth) / 4320.0;
    assert!(mean_diff.abs() <= 0.02 * mean_i, "{mean_diff} vs {mean_i}");
}

fn ratio_audit(epsilon: f64, scale: f64, seed: u64) -> drdp::dp_noise::audit::RatioAudit {
    let params = PrivacyParams::centered(epsilon, 1.0).unwrap();
    let b = params.scale();
    let release_params = PrivacyParams::new(epsilon, 0.0, scale * epsilon).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = linear_edges(-4.0 * b, 1.0 + 4.0 * b, 16);
    audit_ratio(
        |x| symmetric_release(x, &release_params, &mut rng),
        0.0,
        1.0,
        epsilon,
        &edges,
        200_000,
        4.5,
    )
}

#[test]
fn symmetric_mechanism_respects_ratio_bound() {
    for eps in [0.5, 1.0] {
        let audit = ratio_audit(eps, 1.0 / eps, 17);
        assert!(audit.passed(), "eps={eps}: {audit:?}");
        assert!(audit.max_log_ratio <= eps + 0.1);
    }
}

#[test]
fn ratio_audit_catches_undersized_noise() {
    for eps in [0.5, 1.0] {
        let audit = ratio_audit(eps, 0.25 / eps, 17);
        assert!(
            !audit.passed(),
            "eps={eps} with a quarter of the scale should fail"
        );
    }
}

proptest! {
    #[test]
    fn scale_law(delta_f in 1e-6f64..1e6, epsilon in 1e-4f64..1e3) {
        let s = compute_scale(delta_f, epsilon).unwrap();
        prop_assert!((s * epsilon - delta_f).abs() <= 4.0 * f64::EPSILON * delta_f);
    }

    #[test]
    fn folded_noise_never_lowers_reports(i_v in 0.0f64..1e5, eps in 0.01f64..5.0, seed in any::<u64>()) {
        let params = PrivacyParams::centered(eps, 1.0).unwrap();
        let mut noise = LaplaceNoise::new(ChaCha8Rng::seed_from_u64(seed));
        for _ in 0..20 {
            let p_v = protect_reading(i_v, &params, &mut noise).unwrap();
            prop_assert!(p_v >= i_v);
            let b_r = adjust_reading(p_v, &params, &mut noise).unwrap();
            prop_assert!(b_r <= p_v && b_r >= 0.0);
        }
    }

    #[test]
    fn magnitude_is_abs_of_raw(mu in -50.0f64..50.0, scale in 0.01f64..100.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sample_laplace(mu, scale, &mut rng);
        prop_assert!(s.raw.is_finite());
        prop_assert_eq!(s.magnitude, s.raw.abs());
    }
}
