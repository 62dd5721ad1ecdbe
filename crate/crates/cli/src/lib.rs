//! Command-line front end for `nrbundle`: JSON scenarios in, CSV tables and
//! a checksummed manifest out.

pub mod config;
pub mod run;

pub use config::{parse_config, ConfigError, ScenarioConfig, ScenarioKind};
pub use run::{run_scenario, RunError, RunManifest};
