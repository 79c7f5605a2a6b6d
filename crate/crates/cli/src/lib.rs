//! Command-line front end for the `poscorr` simulator.
//!
//! Every run writes its data files plus a `manifest.json` into the output
//! directory. Data files depend only on the config, the seed and the tool
//! version; the wall-clock timestamp appears only in the manifest. A failed
//! run writes `error.json` instead and exits nonzero.

pub mod args;
mod commands;
pub mod output;

use std::path::Path;

use poscorr::sources::{preset, SourceConfig};
use serde_json::json;

pub use args::{Cli, Command, Common};
pub use output::RunManifest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] poscorr::Error),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("counts file {path}: {reason}")]
    Counts { path: String, reason: String },

    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Stable machine-readable error class.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                poscorr::Error::Domain(_) => "domain",
                poscorr::Error::InvalidConfig { .. } => "invalid-config",
                poscorr::Error::ConfigParse(_) => "config-parse",
                poscorr::Error::Numerical(_) => "numerical",
                poscorr::Error::UnknownParameter(_) => "unknown-parameter",
                poscorr::Error::Material(_) => "material",
            },
            CliError::Usage(_) => "usage",
            CliError::Counts { .. } => "counts",
            CliError::Output(_) => "output",
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            CliError::Core(poscorr::Error::InvalidConfig { field, .. }) => Some(field),
            _ => None,
        }
    }

    /// 2 for problems with the inputs, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "io" | "invalid-config" | "config-parse" | "usage" | "counts" | "unknown-parameter" => 2,
            _ => 1,
        }
    }
}

/// Reads and fully validates a TOML source config.
pub fn load_config(path: &Path) -> Result<SourceConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(SourceConfig::from_toml_str(&text)?)
}

/// The config named by `--config` or `--preset`, with a label for the
/// manifest.
pub(crate) fn resolve_config(common: &Common) -> Result<Option<(SourceConfig, String)>, CliError> {
    match (&common.config, &common.preset) {
        (Some(path), None) => Ok(Some((load_config(path)?, format!("file:{}", path.display())))),
        (None, Some(name)) => Ok(Some((preset(name)?, format!("preset:{name}")))),
        (None, None) => Ok(None),
        (Some(_), Some(_)) => Err(CliError::Usage("--config and --preset are mutually exclusive".into())),
    }
}

pub(crate) fn require_config(common: &Common) -> Result<(SourceConfig, String), CliError> {
    resolve_config(common)?.ok_or_else(|| CliError::Usage("one of --config or --preset is required".into()))
}

/// Runs one subcommand and writes its manifest.
pub fn run(command: &Command) -> Result<RunManifest, CliError> {
    commands::dispatch(command)
}

/// Runs a subcommand, writing `error.json` on failure. Returns the exit code.
pub fn execute(command: &Command) -> i32 {
    match run(command) {
        Ok(_) => 0,
        Err(err) => {
            log::error!("{err}");
            eprintln!("error: {err}");
            let record = json!({
                "error": {
                    "kind": err.kind(),
                    "message": err.to_string(),
                    "field": err.field(),
                },
                "subcommand": command.name(),
            });
            let out = &command.common().out;
            let written = std::fs::create_dir_all(out)
                .ok()
                .and_then(|_| output::to_canonical_json(&record).ok())
                .and_then(|text| std::fs::write(out.join("error.json"), text).ok());
            if written.is_none() {
                eprintln!("error: could not write error record to {}", out.display());
            }
            err.exit_code()
        }
    }
}
