//! Command execution. Every command builds a [`Table`]; rendering and
//! writing are shared.

use std::path::Path;

use emech_core::dynamics::{steady_state, symplectic_eigenvalues, DynamicsError};
use emech_core::estimation::{
    calibrate_temperature, fit_emit, fit_lorentzian_psd, fit_ringdown, fit_sqrt_power, g_single_from_slope,
    FitControls, TemperaturePoint,
};
use emech_core::metrics::{
    cooperativity, coupling_table, quantum_cooperativity, quantum_diffusion_rate, is_strongly_coupled,
    single_phonon_temperature,
};
use emech_core::model::{Sideband, ToneDrive, ToneRole};
use emech_core::response::{
    anticrossing_map, AnticrossingSetup, MultiToneModel, ResponseError, ThermalSideband,
};
use emech_core::{FitResultF64, SystemConfigF64};

use crate::checks;
use crate::config::{load_config, sha256_hex, LoadedConfig};
use crate::error::CliError;
use crate::output::{read_series, render_csv, render_json, write_artifact, Cell, Provenance, Table};
use crate::spec::{Command, FitCommand, Format, GridSpec, ScenarioSpec, SweepArgs};
use crate::synth::{synthesize, Truth};

/// A finished table plus an error to report after it has been written.
#[derive(Debug)]
pub struct Outcome {
    pub table: Table,
    pub deferred: Option<CliError>,
}

impl From<Table> for Outcome {
    fn from(table: Table) -> Self {
        Self { table, deferred: None }
    }
}

/// Runs `spec`, writes its artifact and returns the process exit code.
/// Failures print a one-line JSON record on standard error.
pub fn run_scenario(spec: &ScenarioSpec) -> i32 {
    match try_run(spec) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.record());
            e.exit_code()
        }
    }
}

fn try_run(spec: &ScenarioSpec) -> Result<(), CliError> {
    let cfg = spec.config.as_deref().map(load_config).transpose()?;
    let outcome = execute(spec, cfg.as_ref())?;
    let prov = Provenance {
        command: spec.command_name(),
        config_sha256: cfg.as_ref().map(|c| c.sha256.clone()),
        seed: spec.seed,
    };
    let bytes = match spec.format {
        Format::Csv => render_csv(&outcome.table, &prov)?,
        Format::Json => render_json(&outcome.table, &prov)?,
    };
    write_artifact(&bytes, spec.out.as_deref())?;
    outcome.deferred.map_or(Ok(()), Err)
}

pub fn execute(spec: &ScenarioSpec, cfg: Option<&LoadedConfig>) -> Result<Outcome, CliError> {
    let need = || cfg.ok_or_else(|| CliError::Config(format!("`{}` needs --config", spec.command_name())));
    let grids = &spec.grids;
    Ok(match &spec.command {
        Command::Validate => validate(need()?)?.into(),
        Command::Spectrum => spectrum(need()?, grids)?.into(),
        Command::Map => map(need()?, grids)?.into(),
        Command::Psd => psd(need()?, grids)?.into(),
        Command::Cool(args) => cool(need()?, grids, args)?.into(),
        Command::Entangle(args) => entangle(need()?, grids, args)?.into(),
        Command::Metrics { table_s1: true } => table_s1().into(),
        Command::Metrics { table_s1: false } => metrics(need()?)?.into(),
        Command::Synth { model, truth, sigma } => {
            let bytes = std::fs::read(truth).map_err(|e| CliError::Io(format!("{}: {e}", truth.display())))?;
            let truth = Truth::parse(*model, &bytes)?;
            let grid = single_grid(grids, None)?;
            synth(&truth, &grid, *sigma, spec.seed, &sha256_hex(&bytes))?.into()
        }
        Command::Fit { model } => fit(model)?.into(),
        Command::Selftest => selftest(),
    })
}

fn solver(e: impl std::fmt::Display) -> CliError {
    CliError::Solver(e.to_string())
}

fn response_error(e: ResponseError) -> CliError {
    match e {
        ResponseError::Model(m) => CliError::Config(m.to_string()),
        other => solver(other),
    }
}

fn dynamics_error(e: DynamicsError) -> CliError {
    match e {
        DynamicsError::Model(m) => CliError::Config(m.to_string()),
        other => solver(other),
    }
}

fn single_grid(grids: &[GridSpec], default: Option<GridSpec>) -> Result<Vec<f64>, CliError> {
    match (grids, default) {
        ([g], _) => Ok(g.axis()),
        ([], Some(g)) => Ok(g.axis()),
        ([], None) => Err(CliError::Config("this command needs --grid start:stop:points".into())),
        _ => Err(CliError::Config(format!("this command takes one --grid, got {}", grids.len()))),
    }
}

fn default_grid(center: f64, half_span: f64, points: usize) -> Result<GridSpec, CliError> {
    GridSpec::new(center - half_span, center + half_span, points).map_err(CliError::Config)
}

fn validate(cfg: &LoadedConfig) -> Result<Table, CliError> {
    let sys = &cfg.system;
    let mut t = Table::new(&[
        "tone",
        "target",
        "role",
        "sideband",
        "nu_drive_hz",
        "detuning_hz",
        "two_photon_offset_hz",
        "photon_number",
        "coupling_hz",
    ]);
    t.meta("valid", true);
    t.meta("modes", sys.modes.len());
    for r in sys.resolve_tones().map_err(|e| CliError::Config(e.to_string()))? {
        t.push(vec![
            r.index.into(),
            sys.modes[r.mode_index].id.clone().into(),
            role_name(r.role).into(),
            sideband_name(r.sideband).into(),
            sys.tones[r.index].nu_drive.into(),
            r.detuning.into(),
            r.two_photon_offset.into(),
            r.photon_number.into(),
            r.coupling.into(),
        ]);
    }
    Ok(t)
}

fn role_name(r: ToneRole) -> &'static str {
    match r {
        ToneRole::Pump => "pump",
        ToneRole::Drive => "drive",
    }
}

fn sideband_name(s: Sideband) -> &'static str {
    match s {
        Sideband::Red => "red",
        Sideband::Blue => "blue",
    }
}

fn spectrum(cfg: &LoadedConfig, grids: &[GridSpec]) -> Result<Table, CliError> {
    let (sys, bg) = (&cfg.system, &cfg.background);
    let axis = single_grid(grids, Some(default_grid(0.0, 3.0 * sys.cavity.kappa_total, 1201)?))?;
    let (solver_name, values): (&str, Vec<_>) = match MultiToneModel::new(sys, bg) {
        Ok(m) => ("multi_tone", axis.iter().map(|&d| m.s11(d)).collect()),
        Err(ResponseError::SharedMode { .. }) => {
            let setup = AnticrossingSetup::from_config(sys, bg).map_err(response_error)?;
            ("hierarchical", axis.iter().map(|&d| setup.s11(d)).collect())
        }
        Err(e) => return Err(response_error(e)),
    };
    let mut t = Table::new(&["delta_hz", "re_s11", "im_s11", "reflectance"]);
    t.meta("solver", solver_name);
    for (d, s) in axis.iter().zip(values) {
        t.push(vec![(*d).into(), s.re.into(), s.im.into(), s.norm_sqr().into()]);
    }
    Ok(t)
}

fn map(cfg: &LoadedConfig, grids: &[GridSpec]) -> Result<Table, CliError> {
    let (sys, bg) = (&cfg.system, &cfg.background);
    let base = AnticrossingSetup::from_config(sys, bg).map_err(response_error)?;
    let eta = base.eta().abs().max(sys.modes.iter().map(|m| m.gamma_m).fold(1.0, f64::max));
    let [lo, hi] = base.with_dressed_drive_offset(0.0).map_err(response_error)?.hybrid_modes();
    let mid = 0.5 * (lo.center + hi.center);
    let drive_default = default_grid(0.0, 5.0 * eta, 201)?;
    let probe_default = default_grid(mid, 5.0 * eta, 201)?;
    let (drive, probe) = match grids {
        [] => (drive_default.axis(), probe_default.axis()),
        [d] => (d.axis(), probe_default.axis()),
        [d, p] => (d.axis(), p.axis()),
        _ => return Err(CliError::Config(format!("`map` takes at most two --grid axes, got {}", grids.len()))),
    };
    let m = anticrossing_map(sys, bg, &drive, &probe).map_err(response_error)?;
    let mut t = Table::new(&["drive_offset_hz", "probe_hz", "reflectance"]);
    t.meta("eta_hz", base.eta());
    t.meta("rows", m.rows());
    t.meta("cols", m.cols());
    for (i, &x) in m.drive_offset.iter().enumerate() {
        for (j, &p) in m.probe.iter().enumerate() {
            t.push(vec![x.into(), p.into(), m.get(i, j).into()]);
        }
    }
    Ok(t)
}

fn psd(cfg: &LoadedConfig, grids: &[GridSpec]) -> Result<Table, CliError> {
    let model = ThermalSideband::from_config(&cfg.system).map_err(response_error)?;
    let axis = single_grid(grids, Some(default_grid(model.center, 10.0 * model.linewidth, 401)?))?;
    let mut t = Table::new(&["offset_hz", "psd_per_hz"]);
    t.meta("center_hz", model.center);
    t.meta("linewidth_hz", model.linewidth);
    t.meta("occupation", model.occupation);
    for f in axis {
        t.push(vec![f.into(), model.psd(f).into()]);
    }
    Ok(t)
}

fn mode_names(sys: &SystemConfigF64) -> Vec<String> {
    std::iter::once("cavity".to_string()).chain(sys.modes.iter().map(|m| m.id.clone())).collect()
}

/// Copy of `sys` with tone `index` retuned to coupling `g` (Hz).
fn with_coupling(sys: &SystemConfigF64, index: usize, g: f64) -> Result<SystemConfigF64, CliError> {
    let tone = sys
        .tones
        .get(index)
        .ok_or_else(|| CliError::Config(format!("--tone {index}: config has {} tones", sys.tones.len())))?;
    let g0 = sys.mode(&tone.target_mode).map_err(|e| CliError::Config(e.to_string()))?.g_single;
    if !(g0 > 0.0) {
        return Err(CliError::Config(format!("tone {index} targets a mode with g0_hz = 0")));
    }
    let mut out = sys.clone();
    out.tones[index].drive = ToneDrive::PhotonNumber((g / g0).powi(2));
    Ok(out)
}

fn sweep_rows(
    cfg: &LoadedConfig,
    grids: &[GridSpec],
    args: &SweepArgs,
    width: usize,
    row: impl Fn(&SystemConfigF64) -> Result<Vec<Cell>, DynamicsError>,
) -> Result<Vec<Vec<Cell>>, CliError> {
    let axis = single_grid(grids, None)?;
    let mut rows = Vec::with_capacity(axis.len());
    for g in axis {
        let sys = with_coupling(&cfg.system, args.tone, g)?;
        let mut r = vec![Cell::Num(g)];
        match row(&sys) {
            Ok(vals) => {
                r.push(true.into());
                r.extend(vals);
            }
            Err(DynamicsError::Instability { .. }) => {
                r.push(false.into());
                r.extend(std::iter::repeat_n(Cell::Num(f64::NAN), width));
            }
            Err(e) => return Err(dynamics_error(e)),
        }
        rows.push(r);
    }
    Ok(rows)
}

fn cool(cfg: &LoadedConfig, grids: &[GridSpec], args: &SweepArgs) -> Result<Table, CliError> {
    let sys = &cfg.system;
    let names = mode_names(sys);
    if grids.is_empty() {
        let v = steady_state(sys).map_err(dynamics_error)?;
        let baths = sys.bath_occupations().map_err(|e| CliError::Config(e.to_string()))?;
        let mut t = Table::new(&["mode", "frequency_hz", "n_th", "occupation"]);
        for (k, name) in names.iter().enumerate() {
            let (nu, n_th) = if k == 0 { (sys.cavity.nu_c, 0.0) } else { (sys.modes[k - 1].nu_m, baths[k - 1]) };
            t.push(vec![name.clone().into(), nu.into(), n_th.into(), v.occupation(k).map_err(dynamics_error)?.into()]);
        }
        return Ok(t);
    }
    let columns = ["coupling_hz".to_string(), "stable".to_string()]
        .into_iter()
        .chain(names.iter().map(|n| format!("n_{n}")))
        .collect();
    let mut t = Table { columns, ..Table::default() };
    t.meta("tone", args.tone);
    t.rows = sweep_rows(cfg, grids, args, names.len(), |s| {
        let v = steady_state(s)?;
        (0..names.len()).map(|k| v.occupation(k).map(Cell::Num)).collect()
    })?;
    Ok(t)
}

fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

fn entangle(cfg: &LoadedConfig, grids: &[GridSpec], args: &SweepArgs) -> Result<Table, CliError> {
    let sys = &cfg.system;
    let names = mode_names(sys);
    let pairs = pairs(names.len());
    let eval = |s: &SystemConfigF64| -> Result<(f64, Vec<f64>), DynamicsError> {
        let v = steady_state(s)?;
        let nu = symplectic_eigenvalues(v.matrix())?;
        let en = pairs.iter().map(|&(i, j)| v.log_negativity(i, j)).collect::<Result<_, _>>()?;
        Ok((nu[0], en))
    };
    if grids.is_empty() {
        let (nu_min, en) = eval(sys).map_err(dynamics_error)?;
        let mut t = Table::new(&["mode_a", "mode_b", "log_negativity"]);
        t.meta("min_symplectic_eigenvalue", nu_min);
        for (&(i, j), e) in pairs.iter().zip(en) {
            t.push(vec![names[i].clone().into(), names[j].clone().into(), e.into()]);
        }
        return Ok(t);
    }
    let columns = ["coupling_hz", "stable", "min_symplectic_eigenvalue"]
        .iter()
        .map(|s| s.to_string())
        .chain(pairs.iter().map(|&(i, j)| format!("log_negativity_{}_{}", names[i], names[j])))
        .collect();
    let mut t = Table { columns, ..Table::default() };
    t.meta("tone", args.tone);
    t.rows = sweep_rows(cfg, grids, args, pairs.len() + 1, |s| {
        let (nu_min, en) = eval(s)?;
        Ok(std::iter::once(nu_min).chain(en).map(Cell::Num).collect())
    })?;
    Ok(t)
}

fn table_s1() -> Table {
    let rows = coupling_table();
    let mut t = Table::new(&[
        "row",
        "g1_hz",
        "g2_hz",
        "delta1_hz",
        "eta_calc_hz",
        "eta_table_hz",
        "eta_measured_hz",
        "relative_error",
    ]);
    let worst = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    t.meta("max_relative_error", worst);
    for r in rows {
        t.push(vec![
            r.row.into(),
            r.g1_hz.into(),
            r.g2_hz.into(),
            r.delta1_hz.into(),
            r.eta_calc_hz.into(),
            r.eta_table_hz.into(),
            r.eta_measured_hz.into(),
            r.relative_error.into(),
        ]);
    }
    t
}

fn metrics(cfg: &LoadedConfig) -> Result<Table, CliError> {
    let sys = &cfg.system;
    let baths = sys.bath_occupations().map_err(|e| CliError::Config(e.to_string()))?;
    let kappa = sys.cavity.kappa_total;
    let mut t = Table::new(&[
        "tone",
        "target",
        "sideband",
        "coupling_hz",
        "detuning_hz",
        "n_th",
        "cooperativity",
        "quantum_cooperativity",
        "quantum_diffusion_rate_hz",
        "strong_coupling",
        "single_phonon_temperature_k",
    ]);
    if let Ok(setup) = AnticrossingSetup::from_config(sys, &cfg.background) {
        let eta = setup.eta();
        t.meta("eta_hz", eta);
        t.meta("phonon_cooperativity", cooperativity(eta, setup.gamma1, setup.gamma2));
    }
    for r in sys.resolve_tones().map_err(|e| CliError::Config(e.to_string()))? {
        let mode = &sys.modes[r.mode_index];
        let n_th = baths[r.mode_index];
        let rate = quantum_diffusion_rate(n_th, mode.gamma_m);
        let c_quant = if n_th > 0.0 { Some(quantum_cooperativity(r.coupling, mode.gamma_m, kappa, n_th)) } else { None };
        t.push(vec![
            r.index.into(),
            mode.id.clone().into(),
            sideband_name(r.sideband).into(),
            r.coupling.into(),
            r.detuning.into(),
            n_th.into(),
            cooperativity(r.coupling, mode.gamma_m, kappa).into(),
            c_quant.into(),
            rate.into(),
            is_strongly_coupled(r.coupling, kappa, rate).into(),
            single_phonon_temperature(mode.nu_m).into(),
        ]);
    }
    Ok(t)
}

fn synth(truth: &Truth, x: &[f64], sigma: f64, seed: u64, truth_sha: &str) -> Result<Table, CliError> {
    let y = synthesize(truth, x, sigma, seed)?;
    let (xn, yn) = truth.columns();
    let mut t = Table::new(&if sigma > 0.0 { vec![xn, yn, "y_sigma"] } else { vec![xn, yn] });
    t.meta("sigma", sigma);
    t.meta("truth_sha256", truth_sha);
    for (a, b) in x.iter().zip(y) {
        let mut row = vec![Cell::Num(*a), Cell::Num(b)];
        if sigma > 0.0 {
            row.push(Cell::Num(sigma));
        }
        t.push(row);
    }
    Ok(t)
}

fn fit_table(r: &FitResultF64) -> Table {
    let mut t = Table::new(&["parameter", "value", "sigma", "fixed"]);
    t.meta("converged", r.converged);
    t.meta("iterations", r.iterations);
    t.meta("points", r.points);
    t.meta("residual_norm", crate::output::format_float(r.residual_norm));
    t.meta("reduced_chi_squared", crate::output::format_float(r.reduced_chi_squared()));
    for (i, name) in r.names.iter().enumerate() {
        t.push(vec![name.clone().into(), r.params[i].into(), r.sigma(name).into(), r.fixed[i].into()]);
    }
    t
}

fn fit(cmd: &FitCommand) -> Result<Table, CliError> {
    let controls = FitControls::default();
    match cmd {
        FitCommand::Emit { data, window_center_hz, gamma_m_hz, no_fano } => {
            let setup = emech_core::estimation::EmitSetup {
                window_center: *window_center_hz,
                gamma_m: *gamma_m_hz,
                fano: !no_fano,
            };
            Ok(fit_table(&fit_emit(&read(data)?, &setup, None, &controls)?.fit))
        }
        FitCommand::Lorentzian { data } => Ok(fit_table(&fit_lorentzian_psd(&read(data)?, &controls)?.fit)),
        FitCommand::Ringdown { data } => Ok(fit_table(&fit_ringdown(&read(data)?, &controls)?.fit)),
        FitCommand::Sqrtpower { data, mismatch_threshold, photons_per_power } => {
            let r = fit_sqrt_power(&read(data)?, *mismatch_threshold, &controls)?;
            let mut t = fit_table(&r.fit);
            t.meta("relative_rms", crate::output::format_float(r.relative_rms));
            t.meta("poor_fit", r.poor_fit);
            if let Some(ppp) = photons_per_power {
                let g0 = g_single_from_slope(r.slope, *ppp);
                let sigma = r.fit.sigma("slope").map(|s| s / ppp.sqrt());
                t.push(vec!["g0_hz".into(), g0.into(), sigma.into(), false.into()]);
            }
            Ok(t)
        }
        FitCommand::Caltemp { data, anchor, nu_m_hz, occupation } => {
            let series = read(data)?;
            let points: Vec<_> =
                series.x.iter().zip(&series.y).map(|(&temperature, &area)| TemperaturePoint { temperature, area }).collect();
            let (lo, hi) = anchor
                .split_once(':')
                .and_then(|(a, b)| Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?)))
                .ok_or_else(|| CliError::Config(format!("--anchor expects lo:hi, got `{anchor}`")))?;
            let c = calibrate_temperature(&points, (lo, hi), *nu_m_hz, (*occupation).into())?;
            let mut t = Table::new(&["quantity", "value"]);
            t.push(vec!["gain".into(), c.gain.into()]);
            t.push(vec!["base_temperature_k".into(), c.base_temperature.into()]);
            t.push(vec!["base_occupation".into(), c.base_occupation.into()]);
            t.push(vec!["base_bath_occupation".into(), c.base_bath_occupation.into()]);
            t.push(vec!["anchor_points".into(), c.anchor_points.into()]);
            Ok(t)
        }
    }
}

fn read(path: &Path) -> Result<emech_core::DataSeriesF64, CliError> {
    read_series(path)
}

fn selftest() -> Outcome {
    let outcomes = checks::run_all(|o| eprintln!("{}", o.line()));
    let mut t = Table::new(&["criterion", "name", "passed", "measured", "tolerance", "elapsed_s", "budget_s"]);
    for o in &outcomes {
        t.push(vec![
            o.id.into(),
            o.name.into(),
            o.passed.into(),
            o.measured.clone().into(),
            o.tolerance.clone().into(),
            o.elapsed.as_secs_f64().into(),
            o.budget.as_secs_f64().into(),
        ]);
    }
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id.to_string()).collect();
    let deferred = (!failed.is_empty()).then(|| CliError::Acceptance(format!("failed criteria: {}", failed.join(", "))));
    Outcome { table: t, deferred }
}
