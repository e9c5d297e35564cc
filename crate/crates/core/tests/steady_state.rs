use emech_core::dynamics::{build_drift_diffusion, stability_check, steady_state, symplectic_eigenvalues, DynamicsError};
use emech_core::model::{CavityMode, MechanicalMode, SystemConfig, ThermalEnvironment, ToneCoupling, ToneRole};
use proptest::prelude::*;

fn cooling_config<T: emech_core::Real>(g: f64) -> SystemConfig<T> {
    let c = |x: f64| nalgebra::convert::<f64, T>(x);
    let cavity = CavityMode::new(c(5.343e9), c(200e3), c(30e3));
    let m = MechanicalMode::new("m1", c(764e3), c(1.0), c(7.2));
    SystemConfig::new(cavity, ThermalEnvironment::at_temperature(c(0.02)).with_occupation("m1", c(550.0)))
        .with_tone(ToneCoupling::red_with_coupling(&cavity, &m, c(0.0), c(g), ToneRole::Pump))
        .with_mode(m)
}

fn rate_formula(g: f64) -> f64 {
    550.0 * 1.0 / (1.0 + 4.0 * g * g / 200e3)
}

#[test]
fn resonant_red_tone_cools_to_rate_formula() {
    let v = steady_state(&cooling_config::<f64>(343.0)).unwrap();
    let n = v.occupation(1).unwrap();
    let expected = rate_formula(343.0);
    assert!((expected - 164.0).abs() < 1.0);
    assert!((n - expected).abs() / expected < 0.05, "n = {n}, formula {expected}");
}

#[test]
fn single_precision_steady_state_tracks_double() {
    let n64 = steady_state(&cooling_config::<f64>(343.0)).unwrap().occupation(1).unwrap();
    match steady_state(&cooling_config::<f32>(343.0)) {
        Ok(v) => {
            let n32 = v.occupation(1).unwrap() as f64;
            assert!((n32 - n64).abs() / n64 < 1e-2, "{n32} vs {n64}");
        }
        // the residual check may refuse the single-precision solve; it must say so
        Err(e) => assert!(matches!(e, DynamicsError::IllConditioned { .. }), "{e}"),
    }
}

#[test]
fn occupation_is_continuous_in_coupling() {
    let mut prev = steady_state(&cooling_config::<f64>(0.0)).unwrap().occupation(1).unwrap();
    assert!((prev - 550.0).abs() < 1e-6 * 550.0);
    for k in 1..=40 {
        let g = 25.0 * k as f64;
        let n = steady_state(&cooling_config::<f64>(g)).unwrap().occupation(1).unwrap();
        assert!(n < prev && (prev - n) / prev < 0.2, "jump at G = {g}");
        prev = n;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn stable_steady_states_are_physical(
        g1 in 0.0f64..30e3,
        g2 in 0.0f64..30e3,
        d1 in -300e3f64..300e3,
        d2 in -300e3f64..300e3,
        blue in 0.0f64..1.0,
        n1 in 0.0f64..1000.0,
        n2 in 0.0f64..1000.0,
    ) {
        let cavity = CavityMode::new(5e9, 200e3, 60e3);
        let m1 = MechanicalMode::new("m1", 764e3, 1.0, 7.2);
        let m2 = MechanicalMode::new("m2", 2.46e6, 3.0, 1.0);
        let second = if blue > 0.5 {
            ToneCoupling::blue_with_coupling(&cavity, &m2, d2, g2 * 0.05, ToneRole::Drive)
        } else {
            ToneCoupling::red_with_coupling(&cavity, &m2, d2, g2, ToneRole::Drive)
        };
        let cfg = SystemConfig::new(cavity, ThermalEnvironment::at_temperature(0.02).with_occupation("m1", n1).with_occupation("m2", n2))
            .with_tone(ToneCoupling::red_with_coupling(&cavity, &m1, d1, g1, ToneRole::Pump))
            .with_tone(second)
            .with_mode(m1)
            .with_mode(m2);
        let (a, _) = build_drift_diffusion(&cfg).unwrap();
        prop_assume!(stability_check(&a).stable);
        let v = steady_state(&cfg).unwrap();
        let nus = symplectic_eigenvalues(v.matrix()).unwrap();
        prop_assert!(nus[0] >= 0.5 - 1e-9);
    }
}
