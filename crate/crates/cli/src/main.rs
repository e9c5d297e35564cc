use clap::error::ErrorKind;
use clap::Parser;
use log::LevelFilter;

use emech_cli::{run_scenario, CliError, ScenarioSpec};

fn main() {
    env_logger::Builder::new().filter_level(LevelFilter::Warn).init();
    let spec = match ScenarioSpec::try_parse() {
        Ok(s) => s,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let err = CliError::Config(e.to_string().trim().to_string());
            eprintln!("{}", err.record());
            std::process::exit(err.exit_code());
        }
    };
    std::process::exit(run_scenario(&spec));
}
