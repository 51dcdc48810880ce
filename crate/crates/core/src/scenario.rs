//! TOML scenario files.
//!
//! Top-level keys `name`, `robot` (`msttr` | `ssttr`), `filter`
//! (`multicbf` | `ecbf` | `none`) and `duration`, plus the tables
//! `[geometry]`, `[limits]`, `[mpc]`, `[safety]`, `[reference]`, `[initial]`,
//! `[sim]` and an `[[obstacles]]` array. Omitted tables take the defaults of
//! the published parameter set.

use std::path::Path;

use crate::sim::Scenario;
use crate::Error;

/// Parses and validates a scenario. Parse errors carry line and column.
pub fn parse_scenario(text: &str) -> Result<Scenario, Error> {
    let sc: Scenario = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
    sc.validate()?;
    Ok(sc)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Scenario(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Scenario(m) => Error::Scenario(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn to_toml(sc: &Scenario) -> Result<String, Error> {
    toml::to_string_pretty(sc).map_err(|e| Error::Scenario(e.to_string()))
}
