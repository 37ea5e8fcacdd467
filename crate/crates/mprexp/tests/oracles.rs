//! Monte-Carlo estimates against closed forms and ODE values.

use mprexp::montecarlo::{self, ce_from_log_wealth, estimate_ce, simulate, Leg, SimConfig};
use mprexp_core::expansion::{self, log_utility_value};
use mprexp_core::models::{bs_exact_value, BaseSolution, BsModel, KoModel, MarketState, Model, Strategy};
use mprexp_core::stats::McEstimate;
use mprexp_core::utility::certainty_equivalent;
use mprexp_core::UtilitySpec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

fn sim(n_paths: usize, dt: f64, seed: u64) -> SimConfig {
    SimConfig { n_paths, dt, ..SimConfig::desk(seed) }
}

fn bs(lambda: f64, lambda_prime: f64, horizon: f64, p: f64) -> BaseSolution {
    let m = BsModel::new(lambda, lambda_prime, horizon).unwrap();
    BaseSolution::new(Model::BlackScholes(m), UtilitySpec::new(p).unwrap(), 10).unwrap()
}

fn ko(lambda0: f64) -> BaseSolution {
    let m = KoModel::new(0.0404, 0.117, 0.04395, lambda0, 10.0).unwrap();
    BaseSolution::new(Model::KimOmberg(m), UtilitySpec::new(-1.0).unwrap(), 10_000).unwrap()
}

fn runner(cases: u32) -> TestRunner {
    let cfg = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

/// Merton certainty equivalent `exp(lambda^2 T / 2(1 - p))` of the constant
/// fraction `lambda / (1 - p)`.
fn merton_ce(lambda: f64, horizon: f64, p: f64) -> f64 {
    (0.5 * lambda * lambda * horizon / (1.0 - p)).exp()
}

#[test]
fn merton_oracle_within_three_standard_errors() {
    let strat = (0.05f64..0.6, 0.5f64..2.0, -3.0f64..-0.2, 0u64..1000);
    runner(6)
        .run(&strat, |(lambda, horizon, p, seed)| {
            let horizon = (horizon * 10.0).round() / 10.0;
            let sol = bs(lambda, 1.0, horizon, p);
            let est = estimate_ce(&sol, 0.0, Strategy::Base, &sim(100_000, 0.05, seed)).unwrap();
            let exact = merton_ce(lambda, horizon, p);
            let closed = bs_exact_value(&BsModel::new(lambda, 1.0, horizon).unwrap(), sol.utility(), 0.0).0;
            prop_assert!((certainty_equivalent(closed, sol.utility()).unwrap() - exact).abs() < 1e-12);
            prop_assert!((est.value - exact).abs() <= 3.0 * est.stderr, "{est:?} vs {exact}");
            Ok(())
        })
        .unwrap();
}

#[test]
fn log_utility_oracle_within_three_standard_errors() {
    // the log-optimal fraction is lambda^(eps) itself
    let cases: [(BaseSolution, f64, f64); 3] =
        [(bs(0.3, 1.0, 1.0, -1.0), 0.2, 0.02), (bs(0.2, -0.5, 2.0, -1.0), -0.1, 0.02), (ko(0.5), -0.05, 0.01)];
    for (sol, eps, dt) in &cases {
        let eps = *eps;
        let ctrl = move |s: &MarketState| s.lambda + eps * s.lambda_prime;
        let stats = simulate(sol, &[Leg::new(eps, &ctrl)], &[], &sim(100_000, *dt, 11)).unwrap();
        let est = McEstimate::from_samples(&stats.log_wealth(0), 11).unwrap();
        let exact = log_utility_value(sol.model(), eps, 1.0, None).unwrap();
        assert!(est.covers(exact, 3.0), "{}: {est:?} vs {exact}", sol.model().name());
    }
}

#[test]
fn zero_strategy_has_unit_certainty_equivalent() {
    for sol in [bs(0.3, 1.0, 1.0, -2.0), ko(0.1)] {
        let est = estimate_ce(&sol, -0.05, Strategy::Zero, &sim(1000, 0.1, 3)).unwrap();
        assert_eq!((est.value, est.ci95_lo, est.ci95_hi, est.stderr), (1.0, 1.0, 1.0, 0.0));
    }
}

#[test]
fn delta0_estimate_covers_zero_without_market_price_of_risk() {
    for seed in [1, 2, 3] {
        let f = montecarlo::estimate_ptilde_functionals(&bs(0.0, 1.0, 1.0, -1.0), &sim(20_000, 0.05, seed)).unwrap();
        assert!(f.delta0.covers(0.0, 3.0), "{:?}", f.delta0);
        assert!(f.phi_mean.covers(0.0, 3.0) && f.phi_mean.mean == 0.0);
    }
}

#[test]
fn black_scholes_first_order_identity() {
    let strat = (-2.0f64..2.0, -2.0f64..2.0, 0.1f64..20.0, -5.0f64..-0.01);
    runner(64)
        .run(&strat, |(lambda, lambda_prime, horizon, p)| {
            let sol = bs(lambda, lambda_prime, horizon, p);
            let spec = sol.utility();
            let lhs = spec.p() * expansion::delta0(&sol).unwrap();
            let rhs = spec.q() * lambda * lambda_prime * horizon;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
            Ok(())
        })
        .unwrap();
}

#[test]
fn tilted_functionals_match_ode_coefficients() {
    let sol = ko(0.5);
    let f = montecarlo::estimate_ptilde_functionals(&sol, &sim(20_000, 0.01, 5)).unwrap();
    let d0 = expansion::delta0(&sol).unwrap();
    let d00 = expansion::delta00(&sol).unwrap();
    assert!(f.delta0.covers(d0, 3.0), "{:?} vs {d0}", f.delta0);
    assert!(f.phi_mean.covers(d0, 3.0), "{:?} vs {d0}", f.phi_mean);
    assert!(f.delta00.covers(d00, 3.0), "{:?} vs {d00}", f.delta00);
    // Phi minus its martingale part is nearly constant
    let var_phi = {
        let m = f.phi_mean.mean;
        f.phi.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / f.phi.len() as f64
    };
    assert!(f.representation_residual.mean < 1e-3 * var_phi, "{:?} vs {var_phi}", f.representation_residual);
}

#[test]
fn lower_bound_at_zero_perturbation_covers_base_value() {
    let sol = ko(0.1);
    let (rows, _) = montecarlo::bounds(&sol, &[0.0], &sim(20_000, 0.01, 9)).unwrap();
    let exact = certainty_equivalent(sol.u0(), sol.utility()).unwrap();
    let r = rows[0];
    assert!(
        r.lower.ci95_lo - 3.0 * r.lower.stderr <= exact && exact <= r.lower.ci95_hi + 3.0 * r.lower.stderr,
        "{r:?}"
    );
    assert_eq!(r.base.value, r.lower.value);
    assert!(r.lower.value <= r.upper.value + 3.0 * (r.lower.stderr + r.upper.stderr));
}

#[test]
fn bound_ordering_holds_across_models() {
    use mprexp_core::models::EaModel;
    let ea = EaModel::new(5.0, 0.0169, -0.1, 0.1744, 0.05, 10.0).unwrap();
    let ea = BaseSolution::new(Model::ExtendedAffine(ea), UtilitySpec::new(-1.0).unwrap(), 2000).unwrap();
    let cases =
        [(bs(0.3, 1.0, 1.0, -1.0), vec![-0.1, 0.1], 0.05), (ko(0.5), vec![-0.05], 0.02), (ea, vec![0.01], 0.01)];
    for (sol, eps, dt) in &cases {
        let (rows, _) = montecarlo::bounds(sol, eps, &sim(5_000, *dt, 4)).unwrap();
        for r in rows {
            assert!(r.lower.value <= r.upper.value + 3.0 * (r.lower.stderr + r.upper.stderr), "{r:?}");
        }
    }
}

#[test]
fn certainty_equivalent_interval_maps_utility_interval() {
    let spec = UtilitySpec::new(-1.0).unwrap();
    let logs: Vec<f64> = (0..200).map(|i| 0.1 * ((i * 37 % 101) as f64 / 101.0 - 0.5)).collect();
    let e = ce_from_log_wealth(&logs, 2.0, spec, 0).unwrap();
    assert_eq!(e.ci95_lo, certainty_equivalent(e.raw.ci95_lo, spec).unwrap());
    assert_eq!(e.ci95_hi, certainty_equivalent(e.raw.ci95_hi, spec).unwrap());
    assert!(e.ci95_lo < e.value && e.value < e.ci95_hi);
}
