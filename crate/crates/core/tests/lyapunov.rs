use fpk_core::lyapunov::{
    bound_case_i, bound_case_ii, exponential_growth_constants, gronwall_envelope, moment_envelope_power,
    power_growth_constants, solve_eta, time_weighted_exponential_envelope, EtaProfile, GrowthFunction, RateFunctions,
};
use fpk_core::quadrature::Tolerance;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eta_matches_power_closed_form(c in 0.1f64..10.0, sigma in 0.3f64..3.0, delta in 0.1f64..0.9, lt in -12f64..0.0) {
        let t = lt.exp();
        let g = GrowthFunction::power(c, sigma).unwrap();
        let exact = (c * sigma * delta * t).powf(1.0 / (delta * sigma));
        prop_assume!(exact > 1e-300);
        prop_assert!(rel(solve_eta(&g, delta, t).unwrap(), exact) < 1e-8);
    }

    #[test]
    fn eta_increases_with_time(c in 0.1f64..10.0, sigma in 1.2f64..3.0, delta in 0.1f64..0.9, lt in -6f64..0.0) {
        let profile = EtaProfile::new(GrowthFunction::log_power(c, sigma).unwrap(), delta).unwrap();
        let (t1, t2) = (lt.exp(), 1.5 * lt.exp());
        prop_assert!(profile.solve(t1).unwrap().ln_eta < profile.solve(t2).unwrap().ln_eta);
    }

    #[test]
    fn gronwall_with_linear_forcing(a in 0.0f64..5.0, b in 0.05f64..3.0, t in 0.01f64..3.0, m in 0.0f64..10.0) {
        // K(s) = a s, H = b: Q(t) = a (e^{bt} - 1 - bt) / b².
        let rates = RateFunctions::new(move |s| a * s, move |_| b);
        let exact = a * ((b * t).exp() - 1.0 - b * t) / (b * b) + (b * t).exp() * m;
        prop_assume!(exact > 1e-6);
        let got = gronwall_envelope(&rates, t, m, Tolerance::relative(1e-12)).unwrap();
        prop_assert!(rel(got, exact) < 1e-9, "{got} vs {exact}");
    }

    #[test]
    fn case_i_dominates_gronwall_with_equal_rates(c in 0.0f64..4.0, t in 0.01f64..3.0, m in 0.0f64..10.0) {
        let g = gronwall_envelope(&RateFunctions::constant(c, c), t, m, Tolerance::default()).unwrap();
        prop_assert!(g <= bound_case_i(c, t, m).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn power_growth_constants_dominate(r in 2.0f64..5.0, k in 2.5f64..6.0, c1 in 0.0f64..20.0, c2 in 0.1f64..20.0) {
        // ρ^{r-2}(C1 - C2 ρ^k) <= C - c ρ^{r+k-2} for all ρ >= 0.
        let g = power_growth_constants(r, k, c1, c2).unwrap();
        for i in 0..400 {
            let rho = 0.01 * i as f64 * (1.0 + c1 / c2).powf(1.0 / k);
            let lhs = rho.powf(r - 2.0) * (c1 - c2 * rho.powf(k));
            let rhs = g.additive - g.rate * rho.powf(r + k - 2.0);
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()), "ρ = {rho}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn exponential_growth_constants_dominate(
        alpha in 0.05f64..1.0, r in 2.1f64..4.0, dk in 0.1f64..3.0, c1 in 0.0f64..10.0, c2 in 0.1f64..10.0,
    ) {
        // With W = e^{αρ^r} >= 2: W (C1 - C2 ρ^k) <= C - c W (ln W)^{k/r}.
        let k = r + dk;
        let g = exponential_growth_constants(alpha, r, k, c1, c2).unwrap();
        let start = (2f64.ln() / alpha).powf(1.0 / r);
        for i in 0..400 {
            let rho = start + 0.01 * i as f64 * (1.0 + 2.0 * c1 / c2).powf(1.0 / k);
            let w_ln = alpha * rho.powf(r);
            prop_assume!(w_ln < 600.0);
            let w = w_ln.exp();
            let lhs = w * (c1 - c2 * rho.powf(k));
            let rhs = g.additive - g.rate * w * w_ln.powf(k / r);
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()), "ρ = {rho}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn power_envelope_matches_closed_form(c in 0.2f64..10.0, delta in 0.2f64..0.8, lt in -8f64..1.0) {
        // r = 2, k = 4: G(z) = C z, η = (Cδt)^{1/δ}, and the bound is
        // 1/((1-δ)η^δ) + (C/η) ∫η.
        let t = lt.exp();
        let eta = |s: f64| (c * delta * s).powf(1.0 / delta);
        let integral = (c * delta).powf(1.0 / delta) * t.powf(1.0 / delta + 1.0) / (1.0 / delta + 1.0);
        let exact = 1.0 / ((1.0 - delta) * eta(t).powf(delta)) + c * integral / eta(t);
        let got = moment_envelope_power(2.0, 4.0, c, delta, t).unwrap();
        prop_assert!(rel(got.value, exact) < 1e-8, "{} vs {exact}", got.value);
        let profile = EtaProfile::new(GrowthFunction::power(c, 1.0).unwrap(), delta).unwrap();
        prop_assert!(rel(bound_case_ii(&profile, c, t).unwrap(), exact) < 1e-8);
    }

    #[test]
    fn time_weighted_envelope_majorizes_its_value(c3 in 0.1f64..5.0, alpha in 0.05f64..0.5, beta in 2.0f64..4.0, lt in -5f64..0.0) {
        let e = time_weighted_exponential_envelope(3.0, 4.0, alpha, beta, c3, lt.exp()).unwrap();
        prop_assert!(e.ln_value <= e.ln_envelope * (1.0 + 1e-12) + 1e-12);
        prop_assert!(rel(e.spatial_rate, alpha * e.c4) < 1e-12);
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(power_growth_constants(1.5, 4.0, 1.0, 1.0).is_err());
    assert!(power_growth_constants(2.0, 2.0, 1.0, 1.0).is_err());
    assert!(exponential_growth_constants(0.1, 2.0, 4.0, 1.0, 1.0).is_err());
    assert!(exponential_growth_constants(0.1, 3.0, 3.0, 1.0, 1.0).is_err());
    assert!(time_weighted_exponential_envelope(3.0, 4.0, 0.1, 1.5, 1.0, 0.5).is_err());
    assert!(bound_case_i(-1.0, 1.0, 0.0).is_err());
    assert!(gronwall_envelope(&RateFunctions::constant(1.0, -1.0), 1.0, 0.0, Tolerance::default()).is_err());
}
