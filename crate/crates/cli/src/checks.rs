//! Desk-scale acceptance checks. Each returns a [`CheckOutcome`] with the
//! measured figure, the pinned tolerance and the wall-clock time against its
//! budget; `passed` requires both.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use emech_core::dynamics::{
    build_drift_diffusion, stability_check, steady_state, symplectic_eigenvalues, two_mode_squeezed_vacuum,
    CovarianceState,
};
use emech_core::estimation::{
    calibrate_temperature, emit_model, fit_emit, fit_lorentzian_psd, fit_ringdown, fit_sqrt_power,
    g_single_from_slope, lorentzian_peak, DataSeries, EmitParams, EmitSetup, FitControls, TemperaturePoint,
};
use emech_core::metrics::{
    cooperativity, coupling_for_quantum_cooperativity, coupling_table, quantum_cooperativity,
};
use emech_core::model::{
    dbm_to_watts, thermal_occupation, CavityMode, MechanicalMode, OccupationModel, SystemConfig,
    ThermalEnvironment, ToneCoupling, ToneDrive, ToneRole,
};
use emech_core::response::{
    anticrossing_map, linspace, ltp_reference_spectrum, s11_single_tone, AnticrossingSetup, FanoBackground,
    LtpControls, MultiToneModel,
};
use emech_core::SystemConfigF64;

pub const TABLE_S1_RTOL: f64 = 0.01;
pub const PHONON_COOPERATIVITY: f64 = 6400.0;
pub const ANTICROSSING_SPLITTING_HZ: f64 = 74.6;
pub const ANTICROSSING_RTOL: f64 = 0.10;
pub const DARK_MODE_RATIO: f64 = 2.0;
pub const MAP_POINTS: usize = 201;
pub const SPLITTING_RTOL: f64 = 0.05;
pub const CROSS_SOLVER_ATOL: f64 = 1e-3;
pub const CROSS_SOLVER_CONFIGS: usize = 50;
pub const COOLING_TARGET: f64 = 164.0;
pub const COOLING_RTOL: f64 = 0.05;
pub const TMSV_TARGET: f64 = 2.0;
pub const TMSV_ATOL: f64 = 1e-9;
pub const PHYSICALITY_SLACK: f64 = 1e-9;
pub const PHYSICALITY_CONFIGS: usize = 100;
pub const ROUND_TRIP_RTOL: f64 = 1e-6;
pub const EMIT_NOISE: f64 = 0.003;
pub const COVERAGE_REPETITIONS: u64 = 100;
pub const COVERAGE_SIGMAS: f64 = 3.0;
pub const COVERAGE_MIN: f64 = 0.95;
pub const G_SINGLE_RTOL: f64 = 0.01;
pub const CALTEMP_GAIN_RTOL: f64 = 1e-12;
pub const CALTEMP_BASE_RTOL: f64 = 0.02;
pub const C_QUANT_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub measured: String,
    pub tolerance: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<22} {} | {} | {:.3} s of {} s",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.tolerance,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

struct Verdict {
    ok: bool,
    measured: String,
    tolerance: String,
}

fn timed(id: usize, name: &'static str, budget_s: u64, f: impl FnOnce() -> Result<Verdict, String>) -> CheckOutcome {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(budget_s);
    let (ok, measured, tolerance) = match result {
        Ok(v) => (v.ok, v.measured, v.tolerance),
        Err(e) => (false, format!("error: {e}"), String::new()),
    };
    CheckOutcome { id, name, passed: ok && elapsed <= budget, measured, tolerance, elapsed, budget }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Runs every check in order, calling `report` after each.
pub fn run_all(mut report: impl FnMut(&CheckOutcome)) -> Vec<CheckOutcome> {
    let checks: [fn() -> CheckOutcome; 11] = [
        table_s1,
        phonon_cooperativity,
        anticrossing,
        emit_to_splitting,
        cross_solver,
        cooling,
        entanglement,
        fit_round_trips,
        sqrt_power_chain,
        thermal_calibration,
        quantum_cooperativity_inverse,
    ];
    checks
        .iter()
        .map(|c| {
            let o = c();
            report(&o);
            o
        })
        .collect()
}

pub fn table_s1() -> CheckOutcome {
    timed(1, "table_s1", 1, || {
        let rows = coupling_table();
        let worst = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
        Ok(Verdict {
            ok: rows.len() == 6 && worst <= TABLE_S1_RTOL,
            measured: format!("{} rows, worst relative error {worst:.3e}", rows.len()),
            tolerance: format!("<= {TABLE_S1_RTOL}"),
        })
    })
}

pub fn phonon_cooperativity() -> CheckOutcome {
    timed(2, "phonon_cooperativity", 1, || {
        let c = cooperativity(40.0, 1.0, 1.0);
        Ok(Verdict { ok: c == PHONON_COOPERATIVITY, measured: format!("C = {c}"), tolerance: "== 6400".into() })
    })
}

/// Pump plus two far-detuned drives on a 5.343 GHz cavity.
pub fn anticrossing_config(g2: f64) -> SystemConfigF64 {
    let cavity = CavityMode::new(5.343e9, 200e3, 30e3);
    let m1 = MechanicalMode::new("m1", 764e3, 1.0, 7.2);
    let m2 = MechanicalMode::new("m2", 2460e3, 1.0, 1.04);
    SystemConfig::new(cavity, ThermalEnvironment::at_temperature(0.02))
        .with_tone(ToneCoupling::red_with_coupling(&cavity, &m1, 0.0, 0.6e3, ToneRole::Pump))
        .with_tone(ToneCoupling::red_with_coupling(&cavity, &m1, 1200e3, 12e3, ToneRole::Drive))
        .with_tone(ToneCoupling::red_with_coupling(&cavity, &m2, 1200e3, g2, ToneRole::Drive))
        .with_mode(m1)
        .with_mode(m2)
}

/// Two strongest transparency features of a map row.
fn feature_pair(probe: &[f64], row: &[f64], features: &[f64]) -> Option<(f64, f64)> {
    let at = |x: f64| {
        let j = probe.partition_point(|&p| p < x).min(row.len() - 1);
        row[j]
    };
    let mut f: Vec<f64> = features.to_vec();
    f.sort_by(|a, b| at(*b).total_cmp(&at(*a)));
    match f.as_slice() {
        [a, b, ..] => Some((a.min(*b), a.max(*b))),
        _ => None,
    }
}

pub fn anticrossing() -> CheckOutcome {
    timed(3, "anticrossing", 30, || {
        let cfg = anticrossing_config(3.7e3);
        let bg = FanoBackground::none();
        let base = AnticrossingSetup::from_config(&cfg, &bg).map_err(err)?;
        let eta = base.eta();
        let at_zero = base.with_dressed_drive_offset(0.0).map_err(err)?;
        let [lo, hi] = at_zero.hybrid_modes();
        let mid = 0.5 * (lo.center + hi.center);
        let drive = linspace(-6.0 * eta, 6.0 * eta, MAP_POINTS);
        let probe = linspace(mid - 4.0 * eta, mid + 4.0 * eta, MAP_POINTS);
        let map = anticrossing_map(&cfg, &bg, &drive, &probe).map_err(err)?;
        let mut best: Option<(f64, f64)> = None;
        for i in 0..map.rows() {
            if let Some((a, b)) = feature_pair(&map.probe, map.row(i), &map.features(i)) {
                if best.is_none_or(|(s, _)| b - a < s) {
                    best = Some((b - a, map.drive_offset[i]));
                }
            }
        }
        let (sep, x_min) = best.ok_or("no row shows two features")?;
        let (narrow, broad) = (lo.linewidth.min(hi.linewidth), lo.linewidth.max(hi.linewidth));
        let ratio = broad / narrow;
        let step = drive[1] - drive[0];
        let ok = rel(sep, ANTICROSSING_SPLITTING_HZ) <= ANTICROSSING_RTOL
            && x_min.abs() <= step + 0.1 * eta
            && ratio >= DARK_MODE_RATIO;
        Ok(Verdict {
            ok,
            measured: format!(
                "min separation {sep:.2} Hz at offset {x_min:.2} Hz (2 eta = {:.2} Hz), linewidths {narrow:.2}/{broad:.2} Hz",
                2.0 * eta
            ),
            tolerance: format!(
                "{ANTICROSSING_SPLITTING_HZ} Hz +- {:.0}%, |offset| <= {:.2} Hz, ratio >= {DARK_MODE_RATIO}",
                ANTICROSSING_RTOL * 100.0,
                step + 0.1 * eta
            ),
        })
    })
}

/// Interior local extrema of `y` refined by a parabola through the
/// neighbours; `sign = 1` for maxima, `-1` for minima.
fn extrema(x: &[f64], y: &[f64], sign: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 1..y.len() - 1 {
        let (a, b, c) = (sign * y[i - 1], sign * y[i], sign * y[i + 1]);
        if b > a && b >= c {
            let curv = a - 2.0 * b + c;
            let shift = if curv < 0.0 { 0.5 * (a - c) / curv } else { 0.0 };
            out.push((x[i] + shift * (x[i + 1] - x[i]), y[i]));
        }
    }
    out
}

pub fn emit_to_splitting() -> CheckOutcome {
    timed(4, "emit_to_splitting", 10, || {
        let kappa = 200e3;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bg = FanoBackground::none();
        let (mut single_ok, mut worst_split, mut cases) = (true, 0.0f64, 0);
        for _ in 0..24 {
            let cavity = CavityMode::new(5.343e9, kappa, kappa * rng.random_range(0.05..0.45));
            let mech = MechanicalMode::new("m1", 764e3, rng.random_range(0.5..5.0), 7.2);
            // G well below kappa: one transparency window at the two-photon offset
            let g = kappa * 10f64.powf(rng.random_range(-3.0..-1.3));
            let w = mech.gamma_m + 4.0 * g * g / kappa;
            let x = linspace(-6.0 * w, 6.0 * w, 4001);
            let y: Vec<f64> = x.iter().map(|&d| s11_single_tone(d, &cavity, &mech, g, 0.0, &bg).norm_sqr()).collect();
            let peaks = extrema(&x, &y, 1.0);
            single_ok &= peaks.len() == 1 && peaks[0].0.abs() < 0.01 * w;
            // G at or above 2 kappa: normal-mode splitting
            let g = kappa * rng.random_range(2.0..10.0);
            let x = linspace(-1.6 * g, 1.6 * g, 32001);
            let y: Vec<f64> = x.iter().map(|&d| s11_single_tone(d, &cavity, &mech, g, 0.0, &bg).norm_sqr()).collect();
            let mut dips = extrema(&x, &y, -1.0);
            dips.sort_by(|a, b| a.1.total_cmp(&b.1));
            let e = match dips.as_slice() {
                [a, b, ..] => rel((a.0 - b.0).abs(), 2.0 * g),
                _ => f64::INFINITY,
            };
            worst_split = worst_split.max(e);
            cases += 1;
        }
        Ok(Verdict {
            ok: single_ok && worst_split <= SPLITTING_RTOL,
            measured: format!(
                "{cases} weak cases single window: {single_ok}; worst strong-coupling splitting error {worst_split:.3e}"
            ),
            tolerance: format!("one window; |split - 2G| / 2G <= {SPLITTING_RTOL}"),
        })
    })
}

/// Random stable configuration with one tone per mode, in units where
/// `kappa = 1 Hz`.
fn random_distinct_config(rng: &mut ChaCha8Rng) -> SystemConfigF64 {
    loop {
        let cavity = CavityMode::new(50.0, 1.0, rng.random_range(0.1..0.9));
        let n = rng.random_range(1..=3);
        let mut cfg = SystemConfig::new(cavity, ThermalEnvironment::at_temperature(1.0));
        for k in 0..n {
            let mode = MechanicalMode::new(
                format!("m{}", k + 1),
                6.0 + 4.0 * k as f64 + rng.random_range(0.0..1.0),
                rng.random_range(0.1..0.3),
                0.1,
            );
            let detuning = rng.random_range(-0.5..0.5);
            let role = if k == 0 { ToneRole::Pump } else { ToneRole::Drive };
            let tone = if rng.random_bool(0.7) {
                ToneCoupling::red_with_coupling(&cavity, &mode, detuning, rng.random_range(0.05..0.4), role)
            } else {
                ToneCoupling::blue_with_coupling(&cavity, &mode, detuning, rng.random_range(0.02..0.15), role)
            };
            cfg = cfg.with_tone(tone).with_mode(mode);
        }
        if let Ok((a, _)) = build_drift_diffusion(&cfg) {
            if stability_check(&a).stable {
                return cfg;
            }
        }
    }
}

pub fn cross_solver() -> CheckOutcome {
    timed(5, "cross_solver", 300, || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bg = FanoBackground::none();
        let axis = linspace(-1.5, 1.5, 13);
        let mut worst = 0.0f64;
        for _ in 0..CROSS_SOLVER_CONFIGS {
            let cfg = random_distinct_config(&mut rng);
            let model = MultiToneModel::new(&cfg, &bg).map_err(err)?;
            let reference = ltp_reference_spectrum(&cfg, &bg, axis.clone(), &LtpControls::default()).map_err(err)?;
            let emech_core::response::SpectrumValues::Complex(values) = reference.values() else {
                return Err("reference returned a real trace".into());
            };
            for (&d, s) in axis.iter().zip(values) {
                worst = worst.max((model.s11(d) - s).norm());
            }
        }
        Ok(Verdict {
            ok: worst < CROSS_SOLVER_ATOL,
            measured: format!("{CROSS_SOLVER_CONFIGS} configs x {} points, max |diff| {worst:.3e}", axis.len()),
            tolerance: format!("< {CROSS_SOLVER_ATOL:e}"),
        })
    })
}

pub fn cooling_config(g: f64) -> SystemConfigF64 {
    let cavity = CavityMode::new(5.343e9, 200e3, 30e3);
    let m = MechanicalMode::new("m1", 764e3, 1.0, 7.2);
    SystemConfig::new(cavity, ThermalEnvironment::at_temperature(0.02).with_occupation("m1", 550.0))
        .with_tone(ToneCoupling::red_with_coupling(&cavity, &m, 0.0, g, ToneRole::Pump))
        .with_mode(m)
}

pub fn cooling() -> CheckOutcome {
    timed(6, "cooling", 1, || {
        let n = steady_state(&cooling_config(343.0)).map_err(err)?.occupation(1).map_err(err)?;
        let formula = 550.0 / (1.0 + 4.0 * 343.0 * 343.0 / 200e3);
        Ok(Verdict {
            ok: rel(n, COOLING_TARGET) <= COOLING_RTOL && rel(n, formula) <= COOLING_RTOL,
            measured: format!("n = {n:.3} (rate formula {formula:.3})"),
            tolerance: format!("{COOLING_TARGET} +- {:.0}%", COOLING_RTOL * 100.0),
        })
    })
}

fn random_two_mode_config(rng: &mut ChaCha8Rng) -> SystemConfigF64 {
    let cavity = CavityMode::new(5e9, 200e3, 60e3);
    let m1 = MechanicalMode::new("m1", 764e3, 1.0, 7.2);
    let m2 = MechanicalMode::new("m2", 2.46e6, 3.0, 1.0);
    let env = ThermalEnvironment::at_temperature(0.02)
        .with_occupation("m1", rng.random_range(0.0..1000.0))
        .with_occupation("m2", rng.random_range(0.0..1000.0));
    let second = if rng.random_bool(0.5) {
        ToneCoupling::blue_with_coupling(&cavity, &m2, rng.random_range(-300e3..300e3), rng.random_range(0.0..1.5e3), ToneRole::Drive)
    } else {
        ToneCoupling::red_with_coupling(&cavity, &m2, rng.random_range(-300e3..300e3), rng.random_range(0.0..30e3), ToneRole::Drive)
    };
    SystemConfig::new(cavity, env)
        .with_tone(ToneCoupling::red_with_coupling(
            &cavity,
            &m1,
            rng.random_range(-300e3..300e3),
            rng.random_range(0.0..30e3),
            ToneRole::Pump,
        ))
        .with_tone(second)
        .with_mode(m1)
        .with_mode(m2)
}

pub fn entanglement() -> CheckOutcome {
    timed(7, "entanglement", 30, || {
        let tmsv = CovarianceState::new(two_mode_squeezed_vacuum(1.0f64)).map_err(err)?;
        let e_n = tmsv.log_negativity(0, 1).map_err(err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut stable, mut drawn, mut nu_min) = (0, 0, f64::INFINITY);
        while stable < PHYSICALITY_CONFIGS {
            let cfg = random_two_mode_config(&mut rng);
            drawn += 1;
            let (a, _) = build_drift_diffusion(&cfg).map_err(err)?;
            if !stability_check(&a).stable {
                continue;
            }
            let v = steady_state(&cfg).map_err(err)?;
            nu_min = nu_min.min(symplectic_eigenvalues(v.matrix()).map_err(err)?[0]);
            stable += 1;
        }
        Ok(Verdict {
            ok: (e_n - TMSV_TARGET).abs() <= TMSV_ATOL && nu_min >= 0.5 - PHYSICALITY_SLACK,
            measured: format!(
                "E_N(r=1) = {e_n:.12}; min symplectic eigenvalue {nu_min:.6} over {stable} stable of {drawn} drawn"
            ),
            tolerance: format!("|E_N - 2| <= {TMSV_ATOL:e}; nu >= 1/2 - {PHYSICALITY_SLACK:e}"),
        })
    })
}

const NU_C: f64 = 5.343e9;

fn emit_truth() -> (EmitSetup<f64>, EmitParams<f64>) {
    (
        EmitSetup { window_center: NU_C + 1.5e3, gamma_m: 1.0, fano: true },
        EmitParams { a1: 0.05, theta1: 0.4, kappa: 200e3, xi: 0.15, nu_c: NU_C, coupling: 20e3 },
    )
}

fn emit_data(setup: &EmitSetup<f64>, p: &EmitParams<f64>, sigma: f64, seed: u64) -> Result<DataSeries<f64>, String> {
    let x = linspace(NU_C - 300e3, NU_C + 300e3, 801);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).map_err(err)?;
    let y = x
        .iter()
        .map(|&f| emit_model(f, setup, p) + if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 })
        .collect();
    DataSeries::new(x, y, None).map_err(err)
}

/// Worst relative parameter error of the five noise-free round trips.
fn noise_free_errors() -> Result<Vec<(&'static str, f64)>, String> {
    let controls = FitControls::default();
    let mut out = Vec::new();

    let (setup, p) = emit_truth();
    let f = fit_emit(&emit_data(&setup, &p, 0.0, 0)?, &setup, None, &controls).map_err(err)?.params;
    let e = [
        rel(f.kappa, p.kappa),
        rel(f.xi, p.xi),
        (f.nu_c - p.nu_c).abs() / p.kappa,
        rel(f.coupling, p.coupling),
        rel(f.a1, p.a1),
        rel(f.theta1, p.theta1),
    ];
    out.push(("emit", e.into_iter().fold(0.0, f64::max)));

    let (c, w, a, o): (f64, f64, f64, f64) = (764e3, 30.0, 2.0, 0.01);
    let x = linspace(c - 300.0, c + 300.0, 601);
    let y = x.iter().map(|&f| lorentzian_peak(f, c, w, a, o)).collect();
    let f = fit_lorentzian_psd(&DataSeries::new(x, y, None).map_err(err)?, &controls).map_err(err)?;
    let e = [(f.center - c).abs() / w, rel(f.fwhm, w), rel(f.area, a), rel(f.offset, o)];
    out.push(("lorentzian", e.into_iter().fold(0.0, f64::max)));

    let (gm, a0) = (1.3, 2.0);
    let t = linspace(0.0, 2.0, 200);
    let y = t.iter().map(|&s| a0 * (-std::f64::consts::PI * gm * s).exp()).collect();
    let f = fit_ringdown(&DataSeries::new(t, y, None).map_err(err)?, &controls).map_err(err)?;
    out.push(("ringdown", rel(f.gamma_m, gm).max(rel(f.amplitude0, a0))));

    let slope: f64 = 3.3e5;
    let pw: Vec<f64> = linspace(1e-9, 1e-7, 40);
    let y = pw.iter().map(|&q| slope * q.sqrt()).collect();
    let f = fit_sqrt_power(&DataSeries::new(pw, y, None).map_err(err)?, 0.05, &controls).map_err(err)?;
    out.push(("sqrtpower", rel(f.slope, slope)));

    let (points, gain, _) = caltemp_points(OccupationModel::Exact, 0.0)?;
    let c = calibrate_temperature(&points, (0.1, 0.4), 764e3, OccupationModel::Exact).map_err(err)?;
    out.push(("caltemp", rel(c.gain, gain)));
    Ok(out)
}

fn noisy_emit_coverage() -> Result<[(f64, &'static str); 4], String> {
    let (setup, p) = emit_truth();
    let names = ["kappa", "xi", "nu_c", "g1"];
    let truth = [p.kappa, p.xi, p.nu_c, p.coupling];
    let mut hits = [0u32; 4];
    for seed in 0..COVERAGE_REPETITIONS {
        let Ok(f) = fit_emit(&emit_data(&setup, &p, EMIT_NOISE, seed)?, &setup, None, &FitControls::default()) else {
            continue;
        };
        for k in 0..4 {
            let (v, s) = (f.fit.get(names[k]).unwrap_or(f64::NAN), f.fit.sigma(names[k]).unwrap_or(f64::NAN));
            if (v - truth[k]).abs() <= COVERAGE_SIGMAS * s {
                hits[k] += 1;
            }
        }
    }
    let n = COVERAGE_REPETITIONS as f64;
    Ok([0, 1, 2, 3].map(|k| (hits[k] as f64 / n, names[k])))
}

pub fn fit_round_trips() -> CheckOutcome {
    timed(8, "fit_round_trips", 300, || {
        let errors = noise_free_errors()?;
        let coverage = noisy_emit_coverage()?;
        let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
        let min_cov = coverage.iter().map(|c| c.0).fold(1.0, f64::min);
        let errs: Vec<String> = errors.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
        let covs: Vec<String> = coverage.iter().map(|(c, n)| format!("{n} {:.0}%", c * 100.0)).collect();
        Ok(Verdict {
            ok: worst <= ROUND_TRIP_RTOL && min_cov >= COVERAGE_MIN,
            measured: format!("noise-free [{}]; 3-sigma coverage [{}]", errs.join(", "), covs.join(", ")),
            tolerance: format!("<= {ROUND_TRIP_RTOL:e} relative; coverage >= {:.0}%", COVERAGE_MIN * 100.0),
        })
    })
}

pub fn sqrt_power_chain() -> CheckOutcome {
    timed(9, "sqrt_power_chain", 1, || {
        let g0 = 7.2;
        let cavity = CavityMode::new(5.343e9, 200e3, 30e3);
        let m = MechanicalMode::new("m1", 764e3, 1.0, g0);
        let nu = cavity.nu_c - m.nu_m;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = Normal::new(0.0, 0.005).map_err(err)?;
        let (mut p, mut g) = (Vec::new(), Vec::new());
        let mut photons_per_power = 0.0;
        for dbm in linspace(-70.0, -40.0, 31) {
            let watts = dbm_to_watts(dbm);
            let cfg = SystemConfig::new(cavity, ThermalEnvironment::at_temperature(0.02))
                .with_tone(ToneCoupling::new(nu, ToneDrive::Power(watts), "m1", ToneRole::Pump))
                .with_mode(m.clone());
            let tone = cfg.resolve_tone(0).map_err(err)?;
            photons_per_power = tone.photon_number / watts;
            p.push(watts);
            g.push(tone.coupling * (1.0 + noise.sample(&mut rng)));
        }
        let fit = fit_sqrt_power(&DataSeries::new(p, g, None).map_err(err)?, 0.05, &FitControls::default())
            .map_err(err)?;
        let recovered = g_single_from_slope(fit.slope, photons_per_power);
        Ok(Verdict {
            ok: rel(recovered, g0) <= G_SINGLE_RTOL && !fit.poor_fit,
            measured: format!("g0 = {recovered:.4} Hz (injected {g0}), relative rms {:.2e}", fit.relative_rms),
            tolerance: format!("within {:.0}%", G_SINGLE_RTOL * 100.0),
        })
    })
}

/// Areas for a mode whose occupation stops following the bath below a floor.
/// Returns the points, the gain and the injected base occupation.
fn caltemp_points(model: OccupationModel, floor: f64) -> Result<(Vec<TemperaturePoint<f64>>, f64, f64), String> {
    let gain = 2.5e-3;
    let temps = [0.01, 0.03, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4];
    let points = temps
        .iter()
        .map(|&t| {
            let n: f64 = thermal_occupation(764e3, t, model).map_err(err)?;
            Ok(TemperaturePoint { temperature: t, area: gain * n.max(floor) })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let base = thermal_occupation::<f64>(764e3, temps[0], model).map_err(err)?.max(floor);
    Ok((points, gain, base))
}

pub fn thermal_calibration() -> CheckOutcome {
    timed(10, "thermal_calibration", 1, || {
        let (points, gain, base) = caltemp_points(OccupationModel::Exact, 600.0)?;
        let exact = calibrate_temperature(&points, (0.1, 0.4), 764e3, OccupationModel::Exact).map_err(err)?;
        // same data, anchored with the high-temperature (linear) occupation
        let linear = calibrate_temperature(&points, (0.1, 0.4), 764e3, OccupationModel::Linear).map_err(err)?;
        let (eg, eb, lb) = (rel(exact.gain, gain), rel(exact.base_occupation, base), rel(linear.base_occupation, base));
        Ok(Verdict {
            ok: eg <= CALTEMP_GAIN_RTOL && eb <= CALTEMP_BASE_RTOL && lb <= CALTEMP_BASE_RTOL,
            measured: format!(
                "gain error {eg:.1e}; base {:.2} / linear-anchor {:.2} (injected {base})",
                exact.base_occupation, linear.base_occupation
            ),
            tolerance: format!("gain <= {CALTEMP_GAIN_RTOL:e}; base within {:.0}%", CALTEMP_BASE_RTOL * 100.0),
        })
    })
}

pub fn quantum_cooperativity_inverse() -> CheckOutcome {
    timed(11, "c_quant_inverse", 1, || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut kappas = vec![1e3, 60e3, 200e3, 1e6];
        kappas.extend((0..100).map(|_| 10f64.powf(rng.random_range(2.0..7.0))));
        let mut worst = 0.0f64;
        for &k in &kappas {
            let g = coupling_for_quantum_cooperativity(1750.0, 1.0, k, 550.0).map_err(err)?;
            worst = worst.max(rel(quantum_cooperativity(g, 1.0, k, 550.0), 1750.0));
        }
        let g60 = coupling_for_quantum_cooperativity(1750.0, 1.0, 60e3, 550.0).map_err(err)?;
        Ok(Verdict {
            ok: worst <= C_QUANT_RTOL,
            measured: format!("{} kappas, worst relative error {worst:.1e}; G(60 kHz) = {g60:.1} Hz", kappas.len()),
            tolerance: format!("<= {C_QUANT_RTOL:e}"),
        })
    })
}
