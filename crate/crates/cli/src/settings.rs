//! Layered settings: a preset, then the TOML file, then command-line flags.
//!
//! The file mirrors `BenchmarkSettings`: top-level benchmark keys plus
//! `[femm]` and `[generator]` tables. Keys it omits keep the preset value.

use std::fs;
use std::path::Path;

use femm_varx::harness::{BenchmarkSettings, Preset};
use femm_varx::synth::block_path;
use toml::{Table, Value};

use crate::error::CliError;

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn load(preset: Preset, file: Option<&Path>) -> Result<BenchmarkSettings, CliError> {
    let base = BenchmarkSettings::preset(preset);
    let Some(path) = file else { return Ok(base) };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let over: Table = toml::from_str(&text).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    let new_length = over
        .get("generator")
        .and_then(|g| g.as_table())
        .is_some_and(|g| g.contains_key("t") && !g.contains_key("regime_path"));
    let mut table = Table::try_from(&base).map_err(|e| CliError::parse(e.to_string()))?;
    merge(&mut table, over);
    let mut settings: BenchmarkSettings = Value::Table(table)
        .try_into()
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    if new_length {
        // the preset path covers the preset length only
        settings.generator.regime_path = block_path(settings.generator.t, 250, 2);
    }
    Ok(settings)
}
