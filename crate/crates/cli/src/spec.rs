use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use emech_core::model::OccupationModel;
use emech_core::response::linspace;

/// `start:stop:points` with `points >= 2` and `stop > start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(start: f64, stop: f64, points: usize) -> Result<Self, String> {
        if points < 2 {
            return Err(format!("grid needs at least 2 points, got {points}"));
        }
        if !(start.is_finite() && stop.is_finite() && stop > start) {
            return Err(format!("grid needs finite start < stop, got {start}:{stop}"));
        }
        Ok(Self { start, stop, points })
    }

    pub fn axis(&self) -> Vec<f64> {
        linspace(self.start, self.stop, self.points)
    }
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts.as_slice() else {
            return Err(format!("expected start:stop:points, got `{s}`"));
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number"));
        let points = n.trim().parse::<usize>().map_err(|_| format!("`{n}` is not a point count"))?;
        Self::new(num(a)?, num(b)?, points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// One invocation: global options plus the command to run.
#[derive(Debug, Clone, Parser)]
#[command(name = "emech", version, about = "Multimode cavity electromechanics: spectra, steady states and fits")]
pub struct ScenarioSpec {
    /// System description (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Axis as start:stop:points; repeat once per axis.
    #[arg(long = "grid", global = true, allow_hyphen_values = true)]
    pub grids: Vec<GridSpec>,
    /// Seed for synthetic noise.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check a config and list the resolved tones.
    Validate,
    /// Probe reflection over a probe-offset grid (Hz from the cavity).
    Spectrum,
    /// |S11|^2 over (dressed drive offset, probe offset) for a pump plus two drives.
    Map,
    /// Thermal sideband PSD of a single red tone, offset from the tone.
    Psd,
    /// Steady-state occupations; with a grid, sweeps one tone's coupling (Hz).
    Cool(SweepArgs),
    /// Logarithmic negativity of every mode pair; with a grid, sweeps one tone's coupling (Hz).
    Entangle(SweepArgs),
    /// Figures of merit per tone, or the coupling table.
    Metrics {
        /// Recompute the six-row cavity-mediated coupling table.
        #[arg(long)]
        table_s1: bool,
    },
    /// Model curve plus seeded Gaussian noise.
    Synth {
        #[arg(value_enum)]
        model: FitModel,
        /// JSON file with the true parameters.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
    },
    /// Fit one of the spectral or calibration models to a data CSV.
    Fit {
        #[command(subcommand)]
        model: FitCommand,
    },
    /// Run the acceptance checks.
    Selftest,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Index of the tone whose coupling the grid sweeps.
    #[arg(long, default_value_t = 0)]
    pub tone: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitModel {
    Emit,
    Lorentzian,
    Ringdown,
    Sqrtpower,
    Caltemp,
}

impl FitModel {
    pub fn name(self) -> &'static str {
        match self {
            Self::Emit => "emit",
            Self::Lorentzian => "lorentzian",
            Self::Ringdown => "ringdown",
            Self::Sqrtpower => "sqrtpower",
            Self::Caltemp => "caltemp",
        }
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum FitCommand {
    /// |S11|^2 versus absolute probe frequency.
    Emit {
        #[arg(long)]
        data: PathBuf,
        /// Probe frequency of the transparency window, Hz.
        #[arg(long)]
        window_center_hz: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma_m_hz: f64,
        /// Drop the stray-path term (data normalized to its baseline).
        #[arg(long)]
        no_fano: bool,
    },
    /// Single Lorentzian peak on a constant background.
    Lorentzian {
        #[arg(long)]
        data: PathBuf,
    },
    /// Amplitude ring-down versus time.
    Ringdown {
        #[arg(long)]
        data: PathBuf,
    },
    /// Coupling versus power, `G = s sqrt(P)`.
    Sqrtpower {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        mismatch_threshold: f64,
        /// Intracavity photons per unit power; reports g0 when given.
        #[arg(long)]
        photons_per_power: Option<f64>,
    },
    /// Noise area versus fridge temperature.
    Caltemp {
        #[arg(long)]
        data: PathBuf,
        /// Anchor temperatures as lo:hi, K.
        #[arg(long, allow_hyphen_values = true)]
        anchor: String,
        #[arg(long)]
        nu_m_hz: f64,
        #[arg(long, value_enum, default_value_t = Occupation::Exact)]
        occupation: Occupation,
    },
}

impl FitCommand {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Emit { .. } => "emit",
            Self::Lorentzian { .. } => "lorentzian",
            Self::Ringdown { .. } => "ringdown",
            Self::Sqrtpower { .. } => "sqrtpower",
            Self::Caltemp { .. } => "caltemp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Occupation {
    Exact,
    Linear,
}

impl From<Occupation> for OccupationModel {
    fn from(o: Occupation) -> Self {
        match o {
            Occupation::Exact => OccupationModel::Exact,
            Occupation::Linear => OccupationModel::Linear,
        }
    }
}

impl ScenarioSpec {
    pub fn command_name(&self) -> String {
        match &self.command {
            Command::Validate => "validate".into(),
            Command::Spectrum => "spectrum".into(),
            Command::Map => "map".into(),
            Command::Psd => "psd".into(),
            Command::Cool(_) => "cool".into(),
            Command::Entangle(_) => "entangle".into(),
            Command::Metrics { .. } => "metrics".into(),
            Command::Synth { model, .. } => format!("synth {}", model.name()),
            Command::Fit { model } => format!("fit {}", model.name()),
            Command::Selftest => "selftest".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g: GridSpec = "-300:100:201".parse().unwrap();
        assert_eq!(g, GridSpec { start: -300.0, stop: 100.0, points: 201 });
        assert_eq!(g.axis().len(), 201);
        assert!("0:1:1".parse::<GridSpec>().is_err());
        assert!("1:0:5".parse::<GridSpec>().is_err());
        assert!("0:1".parse::<GridSpec>().is_err());
        assert!("a:1:5".parse::<GridSpec>().is_err());
    }

    #[test]
    fn global_flags_parse_after_the_subcommand() {
        let s = ScenarioSpec::try_parse_from([
            "emech", "map", "--grid", "-200:200:11", "--grid=-300:100:21", "--seed", "7", "--format", "json",
        ])
        .unwrap();
        assert_eq!(s.grids.len(), 2);
        assert_eq!(s.seed, 7);
        assert_eq!(s.format, Format::Json);
        assert_eq!(ScenarioSpec::try_parse_from(["emech", "selftest"]).unwrap().seed, 0);
    }
}
