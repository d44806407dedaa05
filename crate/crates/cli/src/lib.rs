//! Scenario files, run orchestration and CSV export for the kinetic UQ solvers.

pub mod config;
pub mod runner;
pub mod scenario;

use std::path::Path;

use config::{ConfigError, Ini};
use scenario::Scenario;

/// Scenarios shipped with the binary, as `(id, INI text)`.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fig1", include_str!("../scenarios/fig1.ini")),
    ("fig2", include_str!("../scenarios/fig2.ini")),
    ("fig3_mc", include_str!("../scenarios/fig3_mc.ini")),
    ("fig4_m3c", include_str!("../scenarios/fig4_m3c.ini")),
    ("fig5_fm3c", include_str!("../scenarios/fig5_fm3c.ini")),
    ("fig6_gpc", include_str!("../scenarios/fig6_gpc.ini")),
    ("ex1_opinion", include_str!("../scenarios/ex1_opinion.ini")),
    ("ex2_wealth", include_str!("../scenarios/ex2_wealth.ini")),
    ("ex3_swarming", include_str!("../scenarios/ex3_swarming.ini")),
];

/// Version string: `git describe` at build time, or the package version outside a checkout.
pub const VERSION: &str = env!("KINETIC_UQ_VERSION");

pub fn bundled(id: &str) -> Option<&'static str> {
    let id = if id == "fig1_maxwellian" { "fig1" } else { id };
    BUNDLED.iter().find(|(name, _)| *name == id).map(|(_, text)| *text)
}

/// Parses scenario text; `source` names it in diagnostics.
pub fn parse_scenario(source: &str, text: &str, fallback_name: &str) -> Result<(Scenario, Vec<(String, String)>), ConfigError> {
    Scenario::from_ini(&Ini::parse(source, text)?, fallback_name)
}

/// Loads a scenario from a file, or from the bundled set when `path_or_id` is not an existing path.
pub fn load_scenario(path_or_id: &str) -> Result<(Scenario, Vec<(String, String)>), ConfigError> {
    let path = Path::new(path_or_id);
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(path_or_id).to_string();
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source: path_or_id.to_string(),
            line: None,
            key: None,
            message: format!("cannot read: {e}"),
        })?;
        return parse_scenario(path_or_id, &text, &stem);
    }
    match bundled(path_or_id) {
        Some(text) => parse_scenario(&format!("{path_or_id}.ini"), text, &stem),
        None => Err(ConfigError {
            source: path_or_id.to_string(),
            line: None,
            key: None,
            message: "no such file or bundled scenario (see `kinetic-uq list`)".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_scenario_validates() {
        assert_eq!(BUNDLED.len(), 9);
        for (id, text) in BUNDLED {
            let (s, _) = parse_scenario(id, text, id).unwrap_or_else(|e| panic!("{e}"));
            assert_eq!(s.name, *id);
        }
        assert!(bundled("fig1_maxwellian").is_some());
    }
}
