use nibm_core::ensemble::*;
use nibm_core::graph::{ProblemConfig, Rounding, TransitionMatrix};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn matrix(rows: &[&[&str]]) -> TransitionMatrix {
    TransitionMatrix::parse(&rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect::<Vec<_>>()).unwrap()
}

fn fixture(n: usize) -> EnsembleSpec<f64> {
    let cfg = ProblemConfig::new(vec![1.0, -1.0], vec![1.0, -1.0], 0.5, 0.05).unwrap();
    EnsembleSpec::new(cfg, &matrix(&[&["1/3", "0"], &["1/3", "1/3"]]), n, Rounding::LargestRemainder).unwrap()
}

fn single(a: f64, b: f64, t: f64, temperature: f64, n: usize) -> EnsembleSpec<f64> {
    let cfg = ProblemConfig::new(vec![a], vec![b], t, temperature).unwrap();
    EnsembleSpec::new(cfg, &matrix(&[&["1"]]), n, Rounding::Strict).unwrap()
}

#[test]
fn one_path_rejection_marginal_is_the_bridge_gaussian() {
    let spec = single(0.3, -0.2, 0.5, 1.0, 1);
    let (bundles, stats) = sample_paths(&spec, 256, 11, 10_000, SamplerMode::Rejection { max_rejects: 0 }).unwrap();
    assert_eq!((stats.accepted, stats.rejected), (10_000, 0));
    let xs: Vec<f64> = bundles.iter().map(|b| b.positions[0][128]).collect();
    let law = Normal::new(0.05, 0.5).unwrap();
    let (_, p) = kolmogorov_smirnov(&xs, |x| law.cdf(x));
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn distant_bridges_are_almost_never_rejected() {
    let cfg = ProblemConfig::new(vec![5.0, -5.0], vec![5.0, -5.0], 0.5, 0.05).unwrap();
    let m = matrix(&[&["2/5", "0"], &["1/5", "2/5"]]);
    let spec = EnsembleSpec::new(cfg, &m, 2, Rounding::LargestRemainder).unwrap();
    assert_eq!(spec.path_edges(), vec![(0, 0), (1, 1)]);
    let (_, stats) = sample_paths(&spec, 64, 3, 500, SamplerMode::Rejection { max_rejects: 10 }).unwrap();
    assert_eq!(stats.rejected, 0);
}

#[test]
fn confluent_rejection_exhausts_a_small_budget() {
    let spec = single(0.0, 0.0, 0.5, 1.0, 4);
    let err = sample_paths(&spec, 256, 1, 4, SamplerMode::Rejection { max_rejects: 20 }).unwrap_err();
    assert!(matches!(err, EnsembleError::RejectionBudgetExhausted { .. }));
}

#[test]
fn exact_sampler_is_ordered_and_reproducible() {
    let spec = fixture(6);
    let (a, stats) = sample_paths(&spec, 6, 42, 12, SamplerMode::Exact).unwrap();
    let (b, _) = sample_paths(&spec, 6, 42, 5, SamplerMode::Exact).unwrap();
    assert_eq!(stats.accepted, 12);
    assert_eq!(&a[..5], &b[..]);
    for bundle in &a {
        assert_eq!(bundle.positions.len(), 6);
        assert_eq!(bundle.slice(0), vec![1.0, 1.0, -1.0, -1.0, -1.0, -1.0]);
        assert_eq!(bundle.slice(6), vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0]);
        for j in 1..6 {
            let s = bundle.slice(j);
            assert!(s.windows(2).all(|w| w[0] > w[1]));
        }
        assert_eq!(bundle.rows().len(), 6 * 7);
    }
}

#[test]
fn kernel_reproduces_itself() {
    let ke = fixture(6).kernel(BasisMode::Hermite).unwrap();
    let nodes = nibm_core::quadrature::composite_gauss_legendre(-1.8, 1.8, 200, 10);
    for (x, y) in [(1.05, 0.98), (0.02, -0.95), (-1.1, -1.0)] {
        let s: f64 = nodes.0.iter().zip(&nodes.1).map(|(&s, &w)| w * ke.kernel(x, s) * ke.kernel(s, y)).sum();
        assert!((s - ke.kernel(x, y)).abs() < 1e-8, "{x} {y}: {s} vs {}", ke.kernel(x, y));
    }
}

#[test]
fn diagonal_is_nonnegative() {
    let ke = fixture(16).kernel(BasisMode::Hermite).unwrap();
    for i in 0..=2000 {
        let x = -2.0 + 4.0 * i as f64 / 2000.0;
        assert!(ke.kernel_diagonal(x) >= -1e-9);
    }
}

#[test]
fn hermite_and_monomial_modes_agree_on_the_fixture() {
    let spec = fixture(6);
    let h = spec.kernel(BasisMode::Hermite).unwrap();
    let m = spec.kernel(BasisMode::Monomial).unwrap();
    for x in [-1.1, -0.9, 0.0, 0.1, 0.95, 1.2] {
        assert!((h.mean_density(x) - m.mean_density(x)).abs() < 1e-7);
    }
}

#[test]
fn monomial_gram_is_rejected_when_ill_conditioned() {
    let err = fixture(24).kernel(BasisMode::Monomial).unwrap_err();
    assert!(matches!(err, EnsembleError::IllConditioned { .. }));
    assert!(fixture(24).kernel(BasisMode::Hermite).is_ok());
}

#[test]
fn path_cap_enforced() {
    let err = single(0.0, 0.0, 0.5, 1.0, 65).kernel(BasisMode::Hermite).unwrap_err();
    assert_eq!(err, EnsembleError::TooLarge { n: 65, cap: 64 });
}

#[test]
fn brute_force_pair_repels_and_budget_is_enforced() {
    let spec = single(0.0, 0.0, 0.5, 1.0, 2);
    let oracle = BruteForceOracle::new(&spec, 20, 10).unwrap();
    assert_eq!(oracle.marginal(&[0.37, 0.37]), 0.0);
    let ke = spec.kernel(BasisMode::Hermite).unwrap();
    for (x, y) in [(0.2, -0.5), (0.9, 0.1)] {
        let det = ke.kernel(x, x) * ke.kernel(y, y) - ke.kernel(x, y) * ke.kernel(y, x);
        assert!((oracle.marginal(&[x, y]) - det / 2.0).abs() < 1e-10);
    }
    let err = BruteForceOracle::new(&single(0.0, 0.0, 0.5, 1.0, 4), 20, 10).unwrap_err();
    assert!(matches!(err, EnsembleError::QuadratureBudgetExhausted { n: 4, .. }));
}

#[test]
fn band_check_flags_a_wrong_density() {
    let spec = single(0.0, 0.0, 0.5, 1.0, 1);
    let (bundles, _) = sample_paths(&spec, 2, 5, 4000, SamplerMode::Exact).unwrap();
    let xs: Vec<f64> = bundles.iter().map(|b| b.positions[0][1]).collect();
    let ke = spec.kernel(BasisMode::Hermite).unwrap();
    let good = histogram_band_check(&xs, -1.5, 1.5, 30, |x| ke.mean_density(x));
    let bad = histogram_band_check(&xs, -1.5, 1.5, 30, |x| ke.mean_density(x / 1.3) / 1.3);
    assert!(good.fraction() >= 0.9, "{}", good.fraction());
    assert!(bad.fraction() < 0.6, "{}", bad.fraction());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trace_and_biorthogonality(a in -2.0f64..2.0, b in -2.0f64..2.0, t in 0.1f64..0.9, temp in 0.2f64..2.0, n in 1usize..12) {
        let ke = single(a, b, t, temp, n).kernel(BasisMode::Hermite).unwrap();
        prop_assert!((ke.trace(1e-11) - n as f64).abs() < 1e-8);
        prop_assert!(ke.biorthogonality_defect(60, 12) < 1e-8);
    }

    #[test]
    fn two_group_trace(shift in 0.5f64..2.0, temp in 0.05f64..1.0, t in 0.2f64..0.8) {
        let cfg = ProblemConfig::new(vec![shift, -shift], vec![shift, -shift], t, temp).unwrap();
        let spec = EnsembleSpec::new(cfg, &matrix(&[&["1/3", "0"], &["1/3", "1/3"]]), 9, Rounding::Strict).unwrap();
        let ke = spec.kernel(BasisMode::Hermite).unwrap();
        prop_assert!((ke.trace(1e-11) - 9.0).abs() < 1e-7);
        prop_assert!(ke.biorthogonality_defect(60, 12) < 1e-8);
    }
}
