use mprexp_core::expansion::{self, ExpansionCoefficients};
use mprexp_core::models::{BaseSolution, EaModel, KoModel, Model};
use mprexp_core::riccati::{self, FactorParams, KoCoefficients};
use mprexp_core::UtilitySpec;
use proptest::prelude::*;

/// Solution of `dy/dtau = -A y^2 + 2 B y - Q`, `y(0) = 0`, for `A Q < 0`.
fn riccati_tanh(a: f64, b: f64, q: f64, tau: f64) -> f64 {
    let s = (b * b - a * q).sqrt();
    b / a + s / a * (s * tau + (-b / s).atanh()).tanh()
}

fn table1(lambda0: f64) -> KoModel {
    KoModel::new(0.0404, 0.117, 0.04395, lambda0, 10.0).unwrap()
}

#[test]
fn rk4_converges_at_fourth_order() {
    let spec = UtilitySpec::new(-1.0).unwrap();
    let fp = FactorParams { kappa: 0.8, theta: 0.1, beta: 0.3, gamma: 0.5, horizon: 5.0 };
    let k = KoCoefficients::new(&fp, spec);
    let exact = riccati_tanh(k.alpha2, k.alpha4, spec.q(), fp.horizon);
    let err = |n| (riccati::ko_value_odes(&fp, spec, n).unwrap().initial("c").unwrap() - exact).abs();
    let ratio = err(80) / err(160);
    assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn coupled_correction_system_keeps_fourth_order() {
    // Richardson ratio of successive refinements of C1(0)
    let spec = UtilitySpec::new(-1.0).unwrap();
    let m = KoModel::new(0.5, 0.2, 0.4, 0.3, 4.0).unwrap();
    let c1 = |n| {
        let s = BaseSolution::new(Model::KimOmberg(m), spec, n).unwrap();
        s.correction_grid().unwrap().initial("C1").unwrap()
    };
    let (a, b, c) = (c1(20), c1(40), c1(80));
    let ratio = (a - b) / (b - c);
    assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn refinement_changes_values_by_less_than_1e8() {
    let spec = UtilitySpec::new(-1.0).unwrap();
    for l0 in [0.1, 0.5] {
        let a = BaseSolution::new(Model::KimOmberg(table1(l0)), spec, 10_000).unwrap();
        let b = BaseSolution::new(Model::KimOmberg(table1(l0)), spec, 20_000).unwrap();
        assert!((a.u0() - b.u0()).abs() < 1e-8);
        let (ca, cb) = (ExpansionCoefficients::new(&a).unwrap(), ExpansionCoefficients::new(&b).unwrap());
        assert!((ca.delta0 - cb.delta0).abs() < 1e-8);
        assert!((ca.delta00.unwrap() - cb.delta00.unwrap()).abs() < 1e-8);
    }
}

#[test]
fn c6_matches_integrating_factor() {
    // -C6' = -(2 kappa + gamma^2 c) C6 - 1  gives
    // C6(0) = -int_0^T exp(-int_0^s (2 kappa + gamma^2 c(r)) dr) ds
    let spec = UtilitySpec::new(-1.0).unwrap();
    let m = table1(0.1);
    let n = 10_000;
    let s = BaseSolution::new(Model::KimOmberg(m), spec, n).unwrap();
    let c = s.value_grid().unwrap().series("c").unwrap();
    let h = m.horizon / n as f64;
    let rate = |k: usize| 2.0 * m.kappa + m.gamma * m.gamma * c[k];
    let mut cum = 0.0;
    let mut weights = vec![1.0];
    for k in 1..=n {
        cum += 0.5 * h * (rate(k - 1) + rate(k));
        weights.push((-cum).exp());
    }
    let oracle = -riccati::integrate_samples(&weights, h);
    let got = s.correction_grid().unwrap().initial("C6").unwrap();
    assert!((got - oracle).abs() < 1e-6 * oracle.abs(), "{got} vs {oracle}");
}

#[test]
fn two_delta0_routes_agree_on_table_parameters() {
    let spec = UtilitySpec::new(-1.0).unwrap();
    for l0 in [0.1, 0.5] {
        let s = BaseSolution::new(Model::KimOmberg(table1(l0)), spec, 10_000).unwrap();
        let a = expansion::delta0(&s).unwrap();
        let b = expansion::delta0_via_moments(&s).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ko_c_matches_tanh_oracle(
        kappa in 0.01f64..3.0,
        beta in -0.5f64..0.5,
        gamma in 0.0f64..0.6,
        p in -5.0f64..-0.2,
        horizon in 0.5f64..12.0,
    ) {
        let spec = UtilitySpec::new(p).unwrap();
        let fp = FactorParams { kappa, theta: 0.1, beta, gamma, horizon };
        let k = KoCoefficients::new(&fp, spec);
        prop_assume!(k.alpha2 > 1e-6);
        let grid = riccati::ko_value_odes(&fp, spec, 2000).unwrap();
        for i in [0usize, 500, 1000, 1999] {
            let tau = horizon - grid.time(i);
            let want = riccati_tanh(k.alpha2, k.alpha4, spec.q(), tau);
            prop_assert!((grid.column(2)[i] - want).abs() <= 1e-8 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn ea_b_matches_tanh_oracle(
        kappa in 0.5f64..8.0,
        beta in -0.3f64..0.3,
        gamma in 0.01f64..0.3,
        p in -5.0f64..-0.2,
    ) {
        let spec = UtilitySpec::new(p).unwrap();
        let theta = (beta * beta + gamma * gamma) / kappa;
        let m = EaModel::new(kappa, theta, beta, gamma, 0.02, 10.0).unwrap();
        let fp = m.factor_params();
        let k = KoCoefficients::new(&fp, spec);
        let grid = riccati::ea_value_odes(&fp, spec, 4000).unwrap();
        let want = riccati_tanh(0.5 * k.alpha2, 0.5 * k.alpha4, 0.5 * spec.q(), fp.horizon);
        prop_assert!((grid.initial("b").unwrap() - want).abs() <= 1e-8 * (1.0 + want.abs()));
    }

    #[test]
    fn order_zero_is_base_value_for_all_eps(eps in -0.5f64..0.5, l0 in -0.5f64..0.8) {
        let spec = UtilitySpec::new(-1.0).unwrap();
        let s = BaseSolution::new(Model::KimOmberg(table1(l0)), spec, 200).unwrap();
        let c = ExpansionCoefficients::new(&s).unwrap();
        prop_assert_eq!(c.approx(eps, 0).unwrap(), (c.u0, c.v0));
        let (u, v) = c.approx(0.0, 2).unwrap();
        prop_assert_eq!((u, v), (c.u0, c.v0));
    }
}
