//! Dispersion, spectrum and phase models.
//!
//! Wavelengths are in nm, path differences in µm and phases in radians.
//! Phases are returned unwrapped; [`wrap_phase`] exists for reporting only.

mod crystal;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use crystal::{
    extraordinary_index, sellmeier_index, walkoff_angle, walkoff_displacement, Axis, CrystalSpec,
    Material, MaterialDb, SellmeierCoefficients, SellmeierSet,
};

/// One sampled signal/idler wavelength pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralMode {
    pub lambda_s: f64,
    pub lambda_i: f64,
    pub weight: f64,
}

impl SpectralMode {
    /// Pump wavelength implied by energy conservation.
    pub fn lambda_p(&self) -> f64 {
        1.0 / (1.0 / self.lambda_s + 1.0 / self.lambda_i)
    }

    /// The same mode with signal and idler exchanged.
    pub fn swapped(&self) -> Self {
        SpectralMode {
            lambda_s: self.lambda_i,
            lambda_i: self.lambda_s,
            weight: self.weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpectralShape {
    #[default]
    Gaussian,
    Sinc2,
}

/// Half-width of sinc²(u) at half maximum, in radians.
const SINC2_HALF_WIDTH: f64 = 1.391_557_378_251_561_6;

impl SpectralShape {
    /// Unnormalized line shape at detuning `delta` from centre.
    fn profile(self, delta: f64, fwhm: f64) -> f64 {
        match self {
            SpectralShape::Gaussian => {
                let sigma = fwhm / (8.0 * std::f64::consts::LN_2).sqrt();
                (-0.5 * (delta / sigma).powi(2)).exp()
            }
            SpectralShape::Sinc2 => {
                let u = 2.0 * SINC2_HALF_WIDTH * delta / fwhm;
                if u == 0.0 {
                    1.0
                } else {
                    (u.sin() / u).powi(2)
                }
            }
        }
    }
}

/// Discretized SPDC spectrum on a uniform signal-wavelength grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdcSpectrum {
    pub lambda_p: f64,
    pub center_s: f64,
    pub fwhm_s: f64,
    pub shape: SpectralShape,
    pub samples: Vec<SpectralMode>,
}

impl SpdcSpectrum {
    /// The sample at the centre of the grid, which sits on `center_s`.
    pub fn center(&self) -> &SpectralMode {
        &self.samples[self.samples.len() / 2]
    }

    pub fn iter(&self) -> impl Iterator<Item = &SpectralMode> {
        self.samples.iter()
    }

    /// A single-mode spectrum at the centre wavelength.
    pub fn monochromatic(lambda_p: f64, center_s: f64) -> Result<Self> {
        let lambda_i = idler_wavelength(lambda_p, center_s)?;
        Ok(SpdcSpectrum {
            lambda_p,
            center_s,
            fwhm_s: 0.0,
            shape: SpectralShape::Gaussian,
            samples: vec![SpectralMode {
                lambda_s: center_s,
                lambda_i,
                weight: 1.0,
            }],
        })
    }
}

/// Energy conservation: `1/λi = 1/λp − 1/λs`.
pub fn idler_wavelength(lambda_p: f64, lambda_s: f64) -> Result<f64> {
    if !(lambda_p > 0.0 && lambda_p.is_finite()) {
        return Err(Error::domain(format!("pump wavelength {lambda_p} nm must be positive")));
    }
    if !(lambda_s > lambda_p) {
        return Err(Error::domain(format!(
            "signal wavelength {lambda_s} nm must exceed pump wavelength {lambda_p} nm"
        )));
    }
    Ok(1.0 / (1.0 / lambda_p - 1.0 / lambda_s))
}

/// Samples `n_samples` points uniformly over `center_s ± span_fwhm·fwhm_s`.
pub fn sample_spectrum(
    lambda_p: f64,
    center_s: f64,
    fwhm_s: f64,
    shape: SpectralShape,
    n_samples: usize,
    span_fwhm: f64,
) -> Result<SpdcSpectrum> {
    if !(fwhm_s > 0.0 && fwhm_s.is_finite()) {
        return Err(Error::domain(format!("spectral FWHM {fwhm_s} nm must be > 0")));
    }
    if n_samples < 3 || n_samples % 2 == 0 {
        return Err(Error::domain(format!(
            "sample count {n_samples} must be odd and at least 3"
        )));
    }
    if !(span_fwhm > 0.0 && span_fwhm.is_finite()) {
        return Err(Error::domain(format!("spectral span {span_fwhm} must be > 0")));
    }
    let half = (n_samples / 2) as f64;
    let step = span_fwhm * fwhm_s / half;
    let mut samples = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        // Offsets built from integer indices so the grid is exactly symmetric.
        let delta = (k as f64 - half) * step;
        let lambda_s = center_s + delta;
        samples.push(SpectralMode {
            lambda_s,
            lambda_i: idler_wavelength(lambda_p, lambda_s)?,
            weight: shape.profile(delta, fwhm_s),
        });
    }
    let total: f64 = samples.iter().map(|m| m.weight).sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("spectrum has zero total weight".into()));
    }
    for m in &mut samples {
        m.weight /= total;
    }
    Ok(SpdcSpectrum {
        lambda_p,
        center_s,
        fwhm_s,
        shape,
        samples,
    })
}

/// Mach-Zehnder phase between the |HH⟩ and |VV⟩ paths for pairs that travel
/// together: `2πΔL(1/λs + 1/λi)`, equal to `2πΔL/λp`.
pub fn mz_phase(delta_l_um: f64, mode: &SpectralMode) -> f64 {
    TAU * delta_l_um * 1e3 * (1.0 / mode.lambda_s + 1.0 / mode.lambda_i)
}

/// Phase when the twin photons take different arms: `2πΔL(1/λs − 1/λi)`.
pub fn psi_phase(delta_l_um: f64, mode: &SpectralMode) -> f64 {
    TAU * delta_l_um * 1e3 * (1.0 / mode.lambda_s - 1.0 / mode.lambda_i)
}

/// Phase of |VV⟩ relative to |HH⟩ accumulated in a walk-off combiner.
///
/// H photons are ordinary and V photons extraordinary at the cut angle, so
/// each photon contributes `2πL(n_o − n_e(θ))/λ`.
pub fn birefringent_pair_phase(crystal: &CrystalSpec, mode: &SpectralMode) -> Result<f64> {
    let length_nm = crystal.length * 1e6;
    let term = |lambda: f64| -> Result<f64> {
        let (n_o, _) = crystal.principal_indices(lambda)?;
        Ok((n_o - crystal.index_at_cut(lambda)?) / lambda)
    };
    Ok(TAU * length_nm * (term(mode.lambda_s)? + term(mode.lambda_i)?))
}

/// Wraps to (−π, π].
pub fn wrap_phase(phase: f64) -> f64 {
    let w = phase.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}
