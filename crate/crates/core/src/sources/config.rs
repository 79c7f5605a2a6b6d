use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{sample_spectrum, CrystalSpec, Material, SpdcSpectrum, SpectralShape};

/// Which source pipeline a configuration describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// Mach-Zehnder with 4f imaging onto a wedge mirror.
    Interferometer,
    /// Segmented half-wave plate plus walk-off combiner.
    Compact,
    /// Mach-Zehnder with 2f imaging: twin photons take different arms.
    #[serde(rename = "psi-2f")]
    Psi2f,
}

impl std::fmt::Display for SourceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SourceKind::Interferometer => "interferometer",
            SourceKind::Compact => "compact",
            SourceKind::Psi2f => "psi-2f",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub center_s_nm: f64,
    pub fwhm_s_nm: f64,
    #[serde(default)]
    pub shape: SpectralShape,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    /// Half-width of the sampled grid in units of the FWHM.
    #[serde(default = "default_span")]
    pub span_fwhm: f64,
}

fn default_samples() -> usize {
    41
}

fn default_span() -> f64 {
    2.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombinerConfig {
    pub material: Material,
    pub length_mm: f64,
    pub cut_angle_deg: f64,
}

/// Per-photon single-mode coupling for each position bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinCoupling {
    pub x1: f64,
    pub x2: f64,
}

/// Detection efficiency of each arm after the WDM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmEfficiency {
    pub signal: f64,
    pub idler: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: SourceKind,
    /// Free-text provenance note, e.g. marking fitted presets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub lambda_p_nm: f64,
    pub pump_waist_um: f64,
    pub collection_waist_um: f64,
    #[serde(default)]
    pub delta_l_um: f64,
    /// Position of the split line (wedge edge or SHWP interface).
    #[serde(default)]
    pub wedge_offset_um: f64,
    /// Fraction of pairs sorted by momentum instead of position.
    #[serde(default)]
    pub defocus_mix: f64,
    /// Width of the lossy strip at the SHWP interface.
    #[serde(default)]
    pub shwp_loss_width_um: f64,
    #[serde(default)]
    pub phase_offset_rad: f64,
    /// Subtract the constant phase at the reference wavelength (pump fringe
    /// lock for the interferometer, tilt tuning for the compact source).
    #[serde(default = "default_true")]
    pub phase_lock: bool,
    /// RMS phase-lock jitter.
    #[serde(default)]
    pub lock_jitter_rad: f64,
    pub pair_rate_per_mw: f64,
    pub pump_power_mw: f64,
    pub spectrum: SpectrumConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combiner: Option<CombinerConfig>,
    pub eta_coupling: BinCoupling,
    pub eta_detector: ArmEfficiency,
}

fn default_true() -> bool {
    true
}

/// Names accepted by [`SourceConfig::set_scalar`].
pub const SCALAR_FIELDS: &[&str] = &[
    "lambda_p_nm",
    "pump_waist_um",
    "collection_waist_um",
    "delta_l_um",
    "wedge_offset_um",
    "defocus_mix",
    "shwp_loss_width_um",
    "phase_offset_rad",
    "lock_jitter_rad",
    "pair_rate_per_mw",
    "pump_power_mw",
    "spectrum.center_s_nm",
    "spectrum.fwhm_s_nm",
    "spectrum.span_fwhm",
    "combiner.length_mm",
    "combiner.cut_angle_deg",
    "eta_coupling.x1",
    "eta_coupling.x2",
    "eta_detector.signal",
    "eta_detector.idler",
];

/// Names of the shipped presets, in listing order.
pub const PRESET_NAMES: &[&str] = &["fig1-interferometer", "fig2-compact", "psi-2f"];

/// TOML text of a shipped preset.
pub fn preset_text(name: &str) -> Result<&'static str> {
    match name {
        "fig1-interferometer" => Ok(include_str!("../../configs/fig1-interferometer.toml")),
        "fig2-compact" => Ok(include_str!("../../configs/fig2-compact.toml")),
        "psi-2f" => Ok(include_str!("../../configs/psi-2f.toml")),
        other => Err(Error::domain(format!(
            "unknown preset `{other}` (available: {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

pub fn preset(name: &str) -> Result<SourceConfig> {
    SourceConfig::from_toml_str(preset_text(name)?)
}

fn unit_interval(field: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::field(field, format!("{v} is outside [0, 1]")));
    }
    Ok(())
}

fn positive(field: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::field(field, format!("{v} must be finite and > 0")));
    }
    Ok(())
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::field(field, format!("{v} must be finite and >= 0")));
    }
    Ok(())
}

fn finite(field: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::field(field, format!("{v} must be finite")));
    }
    Ok(())
}

impl SourceConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SourceConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML rendering; the config digest is computed over this.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        positive("lambda_p_nm", self.lambda_p_nm)?;
        positive("pump_waist_um", self.pump_waist_um)?;
        positive("collection_waist_um", self.collection_waist_um)?;
        finite("delta_l_um", self.delta_l_um)?;
        finite("wedge_offset_um", self.wedge_offset_um)?;
        unit_interval("defocus_mix", self.defocus_mix)?;
        non_negative("shwp_loss_width_um", self.shwp_loss_width_um)?;
        finite("phase_offset_rad", self.phase_offset_rad)?;
        non_negative("lock_jitter_rad", self.lock_jitter_rad)?;
        non_negative("pair_rate_per_mw", self.pair_rate_per_mw)?;
        non_negative("pump_power_mw", self.pump_power_mw)?;
        unit_interval("eta_coupling.x1", self.eta_coupling.x1)?;
        unit_interval("eta_coupling.x2", self.eta_coupling.x2)?;
        unit_interval("eta_detector.signal", self.eta_detector.signal)?;
        unit_interval("eta_detector.idler", self.eta_detector.idler)?;

        let s = &self.spectrum;
        positive("spectrum.center_s_nm", s.center_s_nm)?;
        if s.center_s_nm <= self.lambda_p_nm {
            return Err(Error::field(
                "spectrum.center_s_nm",
                "signal centre must be longer than the pump wavelength",
            ));
        }
        positive("spectrum.fwhm_s_nm", s.fwhm_s_nm)?;
        positive("spectrum.span_fwhm", s.span_fwhm)?;
        if s.n_samples < 3 || s.n_samples % 2 == 0 {
            return Err(Error::field("spectrum.n_samples", "must be odd and at least 3"));
        }
        let lowest = s.center_s_nm - s.span_fwhm * s.fwhm_s_nm;
        if lowest <= self.lambda_p_nm {
            return Err(Error::field(
                "spectrum.span_fwhm",
                "sampled grid reaches the pump wavelength",
            ));
        }

        match &self.combiner {
            Some(c) => {
                non_negative("combiner.length_mm", c.length_mm)?;
                if !(0.0..=90.0).contains(&c.cut_angle_deg) {
                    return Err(Error::field("combiner.cut_angle_deg", "must lie in [0, 90]"));
                }
            }
            None if self.kind == SourceKind::Compact => {
                return Err(Error::field("combiner", "compact source needs a combiner crystal"));
            }
            None => {}
        }
        Ok(())
    }

    pub fn sample_spectrum(&self) -> Result<SpdcSpectrum> {
        let s = &self.spectrum;
        sample_spectrum(
            self.lambda_p_nm,
            s.center_s_nm,
            s.fwhm_s_nm,
            s.shape,
            s.n_samples,
            s.span_fwhm,
        )
    }

    pub fn combiner_crystal(&self) -> Result<CrystalSpec> {
        let c = self
            .combiner
            .as_ref()
            .ok_or_else(|| Error::field("combiner", "missing combiner crystal"))?;
        CrystalSpec::new(c.material, c.length_mm, c.cut_angle_deg)
    }

    /// Sets a named scalar field (dotted paths for nested sections) and
    /// re-validates.
    pub fn set_scalar(&mut self, name: &str, value: f64) -> Result<()> {
        let slot: &mut f64 = match name {
            "lambda_p_nm" => &mut self.lambda_p_nm,
            "pump_waist_um" => &mut self.pump_waist_um,
            "collection_waist_um" => &mut self.collection_waist_um,
            "delta_l_um" => &mut self.delta_l_um,
            "wedge_offset_um" => &mut self.wedge_offset_um,
            "defocus_mix" => &mut self.defocus_mix,
            "shwp_loss_width_um" => &mut self.shwp_loss_width_um,
            "phase_offset_rad" => &mut self.phase_offset_rad,
            "lock_jitter_rad" => &mut self.lock_jitter_rad,
            "pair_rate_per_mw" => &mut self.pair_rate_per_mw,
            "pump_power_mw" => &mut self.pump_power_mw,
            "spectrum.center_s_nm" => &mut self.spectrum.center_s_nm,
            "spectrum.fwhm_s_nm" => &mut self.spectrum.fwhm_s_nm,
            "spectrum.span_fwhm" => &mut self.spectrum.span_fwhm,
            "eta_coupling.x1" => &mut self.eta_coupling.x1,
            "eta_coupling.x2" => &mut self.eta_coupling.x2,
            "eta_detector.signal" => &mut self.eta_detector.signal,
            "eta_detector.idler" => &mut self.eta_detector.idler,
            "combiner.length_mm" | "combiner.cut_angle_deg" => {
                let c = self
                    .combiner
                    .as_mut()
                    .ok_or_else(|| Error::field("combiner", "no combiner to scan"))?;
                if name == "combiner.length_mm" {
                    &mut c.length_mm
                } else {
                    &mut c.cut_angle_deg
                }
            }
            other => return Err(Error::UnknownParameter(other.to_string())),
        };
        *slot = value;
        self.validate()
    }
}
