use nalgebra::DMatrix;

use super::lsq::{least_squares, FitControls, FitResult, ParamSpec};
use super::{DataSeries, FitError};
use crate::model::{CavityMode, MechanicalMode};
use crate::response::{s11_single_tone, FanoBackground};
use crate::scalar::{cplx, lit, Real};

/// Known quantities of an EMIT measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitSetup<T> {
    /// Absolute probe frequency of the transparency window, `nu_pump + nu_m`, Hz.
    pub window_center: T,
    /// Intrinsic mechanical linewidth, held fixed, Hz.
    pub gamma_m: T,
    /// Fit the stray path `a1 e^{i theta1}`; when false it is forced to zero.
    pub fano: bool,
}

/// Parameters of the EMIT reflectance model. Frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitParams<T> {
    pub a1: T,
    pub theta1: T,
    pub kappa: T,
    /// `kappa_ext / kappa`.
    pub xi: T,
    pub nu_c: T,
    pub coupling: T,
}

/// `|S11|^2` at absolute probe frequency `x` with `a0 = 1`.
pub fn emit_model<T: Real>(x: T, setup: &EmitSetup<T>, p: &EmitParams<T>) -> T {
    reflectance(x - setup.window_center, p.a1 * p.theta1.cos(), p.a1 * p.theta1.sin(), p.kappa, p.xi, p.nu_c - setup.window_center, p.coupling, setup.gamma_m)
}

/// Reflectance with the probe axis and the cavity measured from the window.
#[allow(clippy::too_many_arguments)]
fn reflectance<T: Real>(x: T, u: T, v: T, kappa: T, xi: T, dc: T, g: T, gamma: T) -> T {
    let cavity = CavityMode::new(dc, kappa, xi * kappa);
    let mech = MechanicalMode::new("", T::zero(), gamma, T::zero());
    let s = s11_single_tone(x - dc, &cavity, &mech, g, -dc, &FanoBackground::none()) + cplx(u, v);
    s.norm_sqr()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmitFit<T: Real> {
    pub params: EmitParams<T>,
    /// Names `a1, theta1, kappa, xi, nu_c, g1, gamma_m`.
    pub fit: FitResult<T>,
}

const NAMES: [&str; 7] = ["a1", "theta1", "kappa", "xi", "nu_c", "g1", "gamma_m"];

/// Initial guess from the data shape: `nu_c` at the dip minimum (lowest
/// frequency on ties), `kappa` from the outer half-depth points of the dip, `xi` from the dip depth
/// (undercoupled branch), and `G1` and the stray path from a coarse scan of
/// the cost.
pub fn emit_initial_guess<T: Real>(data: &DataSeries<T>, setup: &EmitSetup<T>) -> Result<EmitParams<T>, FitError<T>> {
    Ok(emit_starts(data, setup)?[0])
}

/// Candidate starting points, best initial cost first.
fn emit_starts<T: Real>(data: &DataSeries<T>, setup: &EmitSetup<T>) -> Result<Vec<EmitParams<T>>, FitError<T>> {
    let n = data.len();
    if n < 16 {
        return Err(FitError::InvalidData(format!("EMIT fit needs at least 16 points, got {n}")));
    }
    let (x, y) = (&data.x, &data.y);
    let mut imin = 0;
    for i in 1..n {
        if y[i] < y[imin] {
            imin = i;
        }
    }
    let edge = (n / 20).max(2);
    let mut ends: Vec<T> = y[..edge].iter().chain(&y[n - edge..]).copied().collect();
    ends.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let baseline = ends[ends.len() / 2];
    let half = (baseline + y[imin]) * lit(0.5);
    // outermost half-depth crossings, so a window inside the dip is ignored
    let below: Vec<usize> = (0..n).filter(|&i| y[i] < half).collect();
    let (first, last) = match (below.first(), below.last()) {
        (Some(&f), Some(&l)) if f > 0 && l < n - 1 => (f, l),
        _ => return Err(FitError::InvalidData("no resolvable dip in the reflectance".into())),
    };
    let interp = |i: usize, j: usize| x[i] + (x[j] - x[i]) * (half - y[i]) / (y[j] - y[i]);
    let kappa = interp(last, last + 1) - interp(first - 1, first);
    if x[n - 1] - x[0] < kappa * lit(3.0) {
        return Err(FitError::InvalidData("data must span at least three linewidths around the dip".into()));
    }
    let depth = (y[imin] / baseline).max(T::zero()).sqrt();
    let xi = ((T::one() - depth) * lit(0.5)).max(lit(0.01)).min(lit(0.99));
    let base = EmitParams { a1: T::zero(), theta1: T::zero(), kappa, xi, nu_c: x[imin], coupling: T::zero() };

    // stray-path starts consistent with the far-off level |1 + a1 e^{i theta1}|^2 = baseline
    let mut starts = vec![(T::zero(), T::zero())];
    if setup.fano {
        for k in 0..8 {
            let theta = T::pi() * lit(k as f64 / 4.0 - 0.75);
            let c = theta.cos();
            let disc = c * c + baseline - T::one();
            if disc >= T::zero() {
                let a = -c + disc.sqrt();
                if a > lit(1e-3) && a < T::one() {
                    starts.push((a, theta));
                }
            }
        }
    }
    let sse = |p: &EmitParams<T>| {
        x.iter().zip(y).fold(T::zero(), |acc, (&xi, &yi)| {
            let r = yi - emit_model(xi, setup, p);
            acc + r * r
        })
    };
    let mut out: Vec<(T, EmitParams<T>)> = starts
        .into_iter()
        .map(|(a1, theta1)| {
            let mut p = EmitParams { a1, theta1, ..base };
            let mut best = (sse(&p), T::zero());
            for k in 0..=90 {
                p.coupling = kappa * lit::<T>(10f64.powf(-4.0 + 4.5 * k as f64 / 90.0));
                let c = sse(&p);
                if c < best.0 {
                    best = (c, p.coupling);
                }
            }
            p.coupling = best.1;
            (best.0, p)
        })
        .collect();
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    Ok(out.into_iter().map(|(_, p)| p).collect())
}

/// Fits `|S11|^2` versus absolute probe frequency with the single-tone EMIT
/// model. `a0` is fixed to 1 (normalize the data to the off-resonant
/// baseline first) and `gamma_m` to `setup.gamma_m`. Without `init` the
/// three best heuristic starts are refined and the lowest residual wins.
pub fn fit_emit<T: Real>(
    data: &DataSeries<T>,
    setup: &EmitSetup<T>,
    init: Option<EmitParams<T>>,
    controls: &FitControls,
) -> Result<EmitFit<T>, FitError<T>> {
    let starts = match init {
        Some(p) => vec![p],
        None => emit_starts(data, setup)?.into_iter().take(3).collect(),
    };
    let mut best: Option<Result<EmitFit<T>, FitError<T>>> = None;
    for start in starts {
        let attempt = fit_emit_from(data, setup, start, controls);
        let norm = |r: &Result<EmitFit<T>, FitError<T>>| match r {
            Ok(f) => Some(f.fit.residual_norm),
            Err(_) => None,
        };
        best = match (best, norm(&attempt)) {
            (None, _) => Some(attempt),
            (Some(b), Some(n)) if norm(&b).is_none_or(|m| n < m) => Some(attempt),
            (b, _) => b,
        };
    }
    best.expect("at least one start")
}

fn fit_emit_from<T: Real>(
    data: &DataSeries<T>,
    setup: &EmitSetup<T>,
    init: EmitParams<T>,
    controls: &FitControls,
) -> Result<EmitFit<T>, FitError<T>> {
    if !(init.kappa > T::zero()) {
        return Err(FitError::InvalidInit("kappa must be positive".into()));
    }
    let local = data.shifted(setup.window_center);
    let k = init.kappa;
    let span = data.x[data.len() - 1] - data.x[0];
    let (u, v) = if setup.fano { (init.a1 * init.theta1.cos(), init.a1 * init.theta1.sin()) } else { (T::zero(), T::zero()) };
    let specs = [
        ParamSpec::free("u", u).bounded(-T::one(), T::one()).with_scale(lit(0.1)).fixed(!setup.fano),
        ParamSpec::free("v", v).bounded(-T::one(), T::one()).with_scale(lit(0.1)).fixed(!setup.fano),
        ParamSpec::free("kappa", k).bounded(k * lit(1e-2), k * lit(1e2)).with_scale(k),
        ParamSpec::free("xi", init.xi.max(lit(1e-6)).min(T::one())).bounded(lit(1e-6), T::one()).with_scale(lit(0.1)),
        ParamSpec::free("dc", init.nu_c - setup.window_center)
            .bounded(data.x[0] - span - setup.window_center, data.x[data.len() - 1] + span - setup.window_center)
            .with_scale(k * lit(0.01)),
        ParamSpec::free("g1", init.coupling.max(T::zero())).bounded(T::zero(), k * lit(1e2)).with_scale(k * lit(0.01)),
        ParamSpec::fixed_at("gamma_m", setup.gamma_m),
    ];
    let model = |x: T, p: &[T]| reflectance(x, p[0], p[1], p[2], p[3], p[4], p[5], p[6]);
    let wrap = |r: FitResult<T>| to_physical(r, setup.window_center);
    match least_squares(model, &local, &specs, controls) {
        Ok(r) => Ok(wrap(r)),
        Err(FitError::MaxIterations { best }) => Err(FitError::MaxIterations { best: Box::new(wrap(*best).fit) }),
        Err(FitError::SingularJacobian { parameter, best }) => {
            Err(FitError::SingularJacobian { parameter, best: Box::new(wrap(*best).fit) })
        }
        Err(e) => Err(e),
    }
}

/// Maps `(u, v, kappa, xi, dc, g1, gamma)` to `(a1, theta1, kappa, xi, nu_c, g1, gamma)`
/// and propagates the covariance through the Jacobian of that map.
fn to_physical<T: Real>(r: FitResult<T>, window_center: T) -> EmitFit<T> {
    let p = &r.params;
    let (u, v) = (p[0], p[1]);
    let a1 = (u * u + v * v).sqrt();
    let theta1 = if a1 > T::zero() { v.atan2(u) } else { T::zero() };
    let mut jac = DMatrix::identity(7, 7);
    if a1 > T::zero() {
        jac[(0, 0)] = u / a1;
        jac[(0, 1)] = v / a1;
        jac[(1, 0)] = -v / (a1 * a1);
        jac[(1, 1)] = u / (a1 * a1);
    }
    let cov = &jac * &r.covariance * jac.transpose();
    let params = EmitParams { a1, theta1, kappa: p[2], xi: p[3], nu_c: p[4] + window_center, coupling: p[5] };
    let fit = FitResult {
        names: NAMES.iter().map(|s| s.to_string()).collect(),
        params: vec![a1, theta1, p[2], p[3], params.nu_c, p[5], p[6]],
        covariance: (&cov + cov.transpose()) * lit::<T>(0.5),
        ..r
    };
    EmitFit { params, fit }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::linspace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const NU_C: f64 = 5.343e9;

    fn setup() -> EmitSetup<f64> {
        // pump on the red sideband, 1.5 kHz below the optimal point
        EmitSetup { window_center: NU_C + 1.5e3, gamma_m: 1.0, fano: true }
    }

    fn truth() -> EmitParams<f64> {
        EmitParams { a1: 0.05, theta1: 0.4, kappa: 200e3, xi: 0.15, nu_c: NU_C, coupling: 20e3 }
    }

    fn synth(p: &EmitParams<f64>, s: &EmitSetup<f64>, sigma: f64, seed: u64) -> DataSeries<f64> {
        let x = linspace(NU_C - 300e3, NU_C + 300e3, 801);
        let noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = x.iter().map(|&f| emit_model(f, s, p) + if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 }).collect();
        DataSeries::new(x, y, None).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn uncoupled_model_is_bare_dip() {
        let p = EmitParams { a1: 0.0, theta1: 0.0, kappa: 200e3, xi: 0.15, nu_c: NU_C, coupling: 0.0 };
        assert!((emit_model(NU_C, &setup(), &p) - 0.49).abs() < 1e-12);
    }

    #[test]
    fn heuristics_land_near_truth() {
        let g = emit_initial_guess(&synth(&truth(), &setup(), 0.0, 0), &setup()).unwrap();
        assert!(rel(g.kappa, 200e3) < 0.2, "{g:?}");
        assert!((g.nu_c - NU_C).abs() < 20e3, "{g:?}");
        assert!(rel(g.coupling, 20e3) < 0.5, "{g:?}");
    }

    #[test]
    fn noise_free_round_trip() {
        let t = truth();
        let fit = fit_emit(&synth(&t, &setup(), 0.0, 0), &setup(), None, &FitControls::default()).unwrap();
        let p = fit.params;
        for (a, b) in [(p.a1, t.a1), (p.theta1, t.theta1), (p.kappa, t.kappa), (p.xi, t.xi), (p.nu_c, t.nu_c), (p.coupling, t.coupling)] {
            assert!(rel(a, b) < 1e-6, "{a} vs {b}");
        }
        assert_eq!(fit.fit.get("gamma_m"), Some(1.0));
    }

    #[test]
    fn zero_coupling_is_consistent_with_zero() {
        let t = EmitParams { coupling: 0.0, ..truth() };
        let fit = fit_emit(&synth(&t, &setup(), 0.003, 7), &setup(), None, &FitControls::default()).unwrap();
        let (g, s) = (fit.fit.get("g1").unwrap(), fit.fit.sigma("g1").unwrap());
        assert!(g <= 2.0 * s + 1e-9, "G1 = {g} +- {s}");
    }

    #[test]
    fn fano_term_is_needed_for_unbiased_kappa() {
        let t = EmitParams { a1: 0.2, theta1: 1.0, ..truth() };
        let data = synth(&t, &setup(), 0.0, 0);
        let with = fit_emit(&data, &setup(), None, &FitControls::default()).unwrap();
        assert!(rel(with.params.kappa, t.kappa) < 0.01);
        // the symmetric model assumes data normalized to the off-resonant level
        let level = (data.y[0] + data.y[data.len() - 1]) / 2.0;
        let normalized = DataSeries::new(data.x.clone(), data.y.iter().map(|v| v / level).collect(), None).unwrap();
        let plain = EmitSetup { fano: false, ..setup() };
        let without = match fit_emit(&normalized, &plain, None, &FitControls::default()) {
            Ok(f) => f.params,
            Err(e) => panic!("{e}: {:?}", e.best().map(|b| &b.params)),
        };
        assert!(rel(without.kappa, t.kappa) > 0.05, "kappa {}", without.kappa);
    }

    #[test]
    fn covariance_matches_scatter() {
        // empirical spread over repeated noisy fits within a factor two of the reported sigma
        let (t, s) = (truth(), setup());
        let n = 200;
        let mut kappas = Vec::with_capacity(n);
        let mut gs = Vec::with_capacity(n);
        let mut sig = (0.0, 0.0);
        for seed in 0..n as u64 {
            let fit = fit_emit(&synth(&t, &s, 0.003, seed + 100), &s, Some(t), &FitControls::default()).unwrap();
            kappas.push(fit.params.kappa);
            gs.push(fit.params.coupling);
            sig.0 += fit.fit.sigma("kappa").unwrap() / n as f64;
            sig.1 += fit.fit.sigma("g1").unwrap() / n as f64;
        }
        let sd = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        for (emp, rep) in [(sd(&kappas), sig.0), (sd(&gs), sig.1)] {
            assert!(emp < 2.0 * rep && emp > 0.5 * rep, "empirical {emp} vs reported {rep}");
        }
    }
}
