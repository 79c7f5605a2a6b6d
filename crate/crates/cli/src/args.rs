use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use poscorr::qstate::BellKind;

#[derive(Debug, Parser)]
#[command(name = "poscorr", version, about = "Position-correlation entangled photon-pair source simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Source configuration file (TOML).
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Shipped preset: fig1-interferometer, fig2-compact or psi-2f.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Seed for every random draw in the run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Source density matrix, rates and diagnostics as JSON.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Polarization correlation curves with simulated counts.
    Correlate {
        #[command(flatten)]
        common: Common,
        /// Idler analyzer step over [0, 180) degrees.
        #[arg(long, default_value_t = 10.0)]
        step_deg: f64,
        /// Integration time per analyzer setting, seconds.
        #[arg(long, default_value_t = 1.0)]
        integration_s: f64,
    },
    /// State tomography from a counts CSV or from simulated counts.
    Tomography {
        #[command(flatten)]
        common: Common,
        /// Counts CSV (setting_s, setting_i, singles_s, singles_i,
        /// coincidences, integration_s); simulated from the source if absent.
        #[arg(long, value_name = "PATH")]
        counts: Option<PathBuf>,
        /// Number of settings when simulating: 16 or 36.
        #[arg(long, default_value_t = 36)]
        settings: usize,
        /// Total pairs detected over the simulated acquisition.
        #[arg(long, default_value_t = 1e6)]
        pairs: f64,
        /// Bell state for the fidelity (phi+, phi-, psi+, psi-).
        #[arg(long)]
        target: Option<BellKind>,
        #[arg(long, default_value_t = 10_000)]
        max_iterations: usize,
    },
    /// Spectral phase relative to the centre wavelength.
    PhaseScan {
        #[command(flatten)]
        common: Common,
        /// First signal wavelength, nm (default: lower edge of the sampled spectrum).
        #[arg(long)]
        from: Option<f64>,
        /// Last signal wavelength, nm (default: upper edge of the sampled spectrum).
        #[arg(long)]
        to: Option<f64>,
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// Visibility and fidelity against the arm length difference.
    DeltaLScan {
        #[command(flatten)]
        common: Common,
        /// First ΔL, µm.
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        /// Last ΔL, µm.
        #[arg(long, default_value_t = 100.0)]
        to: f64,
        #[arg(long, default_value_t = 11)]
        points: usize,
    },
    /// Expected rates, loss chain and pair-to-singles ratios.
    Rates {
        #[command(flatten)]
        common: Common,
        /// Integration time of the simulated open-analyzer count, seconds.
        #[arg(long, default_value_t = 1.0)]
        integration_s: f64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Correlate { .. } => "correlate",
            Command::Tomography { .. } => "tomography",
            Command::PhaseScan { .. } => "phase-scan",
            Command::DeltaLScan { .. } => "delta-l-scan",
            Command::Rates { .. } => "rates",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Simulate { common }
            | Command::Correlate { common, .. }
            | Command::Tomography { common, .. }
            | Command::PhaseScan { common, .. }
            | Command::DeltaLScan { common, .. }
            | Command::Rates { common, .. } => common,
        }
    }
}
