//! Writers for the run directory. JSON is pretty-printed from structs with
//! fixed field order, so identical inputs give identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Format, OutputConfig, RunConfig};
use crate::error::CliError;

/// Provenance block attached to every JSON summary.
#[derive(Debug, Clone, Serialize)]
pub struct Stamp {
    pub version: &'static str,
    pub verb: String,
    pub config_hash: String,
    pub dimension: usize,
    pub grid_size: usize,
    pub constraint_tol: f64,
    pub stationarity_tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Stamp {
    pub fn new(verb: &str, config: &RunConfig, hash: &str) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION"),
            verb: verb.into(),
            config_hash: hash.into(),
            dimension: config.problem.dimension,
            grid_size: config.problem.grid_size,
            constraint_tol: config.solver.constraint_tol,
            stationarity_tol: config.solver.stationarity_tol,
            max_iterations: config.solver.max_iterations,
            seed: config.solver.seed,
        }
    }
}

pub struct RunDir {
    pub path: PathBuf,
    output: OutputConfig,
}

impl RunDir {
    pub fn create(base: &Path, name: &str, output: OutputConfig) -> Result<Self, CliError> {
        let path = base.join(name);
        fs::create_dir_all(&path)?;
        Ok(Self { path, output })
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        fs::write(self.path.join(name), text)?;
        Ok(())
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        if !self.output.wants(Format::Json) {
            return Ok(());
        }
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Header is written explicitly so that an empty table still names its columns.
    pub fn csv<T: Serialize>(
        &self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = T>,
    ) -> Result<(), CliError> {
        if !self.output.wants(Format::Csv) {
            return Ok(());
        }
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(self.path.join(name))?;
        w.write_record(header)?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}
