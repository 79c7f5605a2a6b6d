//! Source pipelines: the 4f Mach-Zehnder interferometer, the compact
//! segmented-plate walk-off source, and the 2f Ψ± variant.
//!
//! Every pipeline evaluates one pure polarization state per spectral sample
//! (and per phase-jitter quadrature node), mixes them with the sample
//! weights, then admixes the incoherent defocus contamination.
//!
//! Rates: `expected_pair_rate = pair_rate_per_mw · pump_power_mw · Π factor.*`
//! where each `factor.*` entry in the diagnostics lies in [0, 1].

mod config;
mod geometry;

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use nalgebra::Matrix4;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::elements::{pbs_route, shwp, single_mode_projection, wedge_split, BinnedPairState};
use crate::error::{Error, Result};
use crate::qstate::{
    bell_state, concurrence, fidelity, mix, mix_matrices, purity, Amplitudes, BellKind, Bin, BiphotonPure,
    DensityMatrix, HH, HV, VH, VV,
};
use crate::spectra::{birefringent_pair_phase, mz_phase, psi_phase, walkoff_displacement, SpectralMode};

pub use config::{
    preset, preset_text, ArmEfficiency, BinCoupling, CombinerConfig, SourceConfig, SourceKind, SpectrumConfig,
    PRESET_NAMES, SCALAR_FIELDS,
};
use geometry::CompactOverlap;

/// Prefix of diagnostics entries that multiply into the pair rate.
pub const FACTOR_PREFIX: &str = "factor.";

/// Quadrature nodes used to average over Gaussian phase-lock jitter.
const JITTER_NODES: usize = 21;
const JITTER_SPAN_SIGMA: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SourceOutput {
    pub rho: DensityMatrix,
    /// Detected coincidences per second.
    pub expected_pair_rate: f64,
    /// Detected singles per second, (signal, idler).
    pub expected_singles: (f64, f64),
    pub diagnostics: BTreeMap<String, f64>,
}

impl SourceOutput {
    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics.get(name).copied()
    }

    /// `(name, value)` for every rate factor.
    pub fn rate_factors(&self) -> impl Iterator<Item = (&str, f64)> {
        self.diagnostics
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(FACTOR_PREFIX).map(|n| (n, *v)))
    }
}

impl SourceConfig {
    /// Bell state the configured phase offset locks onto: Φ± for the
    /// co-propagating sources, Ψ± for the 2f source. The sign follows
    /// whichever of 0 or π the offset is nearer to.
    pub fn target_bell(&self) -> BellKind {
        let minus = crate::spectra::wrap_phase(self.phase_offset_rad).abs() > PI / 2.0;
        match (self.kind, minus) {
            (SourceKind::Psi2f, false) => BellKind::PsiPlus,
            (SourceKind::Psi2f, true) => BellKind::PsiMinus,
            (_, false) => BellKind::PhiPlus,
            (_, true) => BellKind::PhiMinus,
        }
    }
}

fn jitter_nodes(sigma: f64) -> Vec<(f64, f64)> {
    if sigma == 0.0 {
        return vec![(0.0, 1.0)];
    }
    let half = (JITTER_NODES / 2) as f64;
    let step = JITTER_SPAN_SIGMA * sigma / half;
    let mut nodes: Vec<(f64, f64)> = (0..JITTER_NODES)
        .map(|k| {
            let x = (k as f64 - half) * step;
            (x, (-0.5 * (x / sigma).powi(2)).exp())
        })
        .collect();
    let total: f64 = nodes.iter().map(|n| n.1).sum();
    for n in &mut nodes {
        n.1 /= total;
    }
    nodes
}

/// Per-sample pair-probability pieces, chained so the rate factors multiply
/// out exactly.
#[derive(Default)]
struct RateAccumulator {
    weight: f64,
    geometry: f64,
    geometry_coupling: f64,
    geometry_coupling_transmission: f64,
    singles_s: f64,
    singles_i: f64,
}

impl RateAccumulator {
    /// `singles_*` are per-photon coupling probabilities for this sample.
    fn add(&mut self, w: f64, geometry: f64, coupling: f64, transmission: f64, singles: (f64, f64)) {
        self.weight += w;
        self.geometry += w * geometry;
        self.geometry_coupling += w * geometry * coupling;
        self.geometry_coupling_transmission += w * geometry * coupling * transmission;
        self.singles_s += w * geometry * transmission * singles.0;
        self.singles_i += w * geometry * transmission * singles.1;
    }

    fn finish(
        &self,
        config: &SourceConfig,
        diagnostics: &mut BTreeMap<String, f64>,
        transmission_name: &str,
    ) -> (f64, (f64, f64)) {
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
        let geometry = ratio(self.geometry, self.weight);
        let coupling = ratio(self.geometry_coupling, self.geometry);
        let transmission = ratio(self.geometry_coupling_transmission, self.geometry_coupling);
        let det = config.eta_detector;
        let factors = [
            ("geometry", geometry),
            ("pair_coupling", coupling),
            (transmission_name, transmission),
            ("detector_signal", det.signal),
            ("detector_idler", det.idler),
        ];
        let generated = config.pair_rate_per_mw * config.pump_power_mw;
        let mut rate = generated;
        for (name, f) in factors {
            diagnostics.insert(format!("{FACTOR_PREFIX}{name}"), f);
            rate *= f;
        }
        let singles_s = generated * ratio(self.singles_s, self.weight) * det.signal;
        let singles_i = generated * ratio(self.singles_i, self.weight) * det.idler;
        (rate, (singles_s, singles_i))
    }
}

fn contamination(kind: SourceKind) -> DensityMatrix {
    // Defocus sorts some pairs by momentum, which puts the twins in opposite
    // bins; for the 2f source the roles are reversed.
    let (a, b) = match kind {
        SourceKind::Psi2f => (HH, VV),
        _ => (HV, VH),
    };
    let mut m = Matrix4::<Complex64>::zeros();
    m[(a, a)] = Complex64::new(0.5, 0.0);
    m[(b, b)] = Complex64::new(0.5, 0.0);
    DensityMatrix::new(m).expect("contamination state is valid")
}

fn finish_output(
    config: &SourceConfig,
    coherent: DensityMatrix,
    pair_rate: f64,
    singles: (f64, f64),
    mut diagnostics: BTreeMap<String, f64>,
) -> Result<SourceOutput> {
    let mu = config.defocus_mix;
    let rho = if mu > 0.0 {
        mix_matrices(&[(1.0 - mu, &coherent), (mu, &contamination(config.kind))])?
    } else {
        coherent
    };
    let target = bell_state(config.target_bell());
    let (a, b) = match config.kind {
        SourceKind::Psi2f => (HV, VH),
        _ => (HH, VV),
    };
    diagnostics.insert("coherence_visibility".into(), rho.coherence_visibility(a, b));
    diagnostics.insert("fidelity_target".into(), fidelity(&rho, &target));
    diagnostics.insert("concurrence".into(), concurrence(&rho));
    diagnostics.insert("purity".into(), purity(&rho));
    diagnostics.insert("defocus_mix".into(), mu);
    Ok(SourceOutput {
        rho,
        expected_pair_rate: pair_rate,
        expected_singles: singles,
        diagnostics,
    })
}

fn check_kind(config: &SourceConfig, expected: SourceKind) -> Result<()> {
    config.validate()?;
    if config.kind != expected {
        return Err(Error::field(
            "kind",
            format!("pipeline `{expected}` cannot run a `{}` config", config.kind),
        ));
    }
    Ok(())
}

/// Ensemble member: weight, state.
type Member = (f64, BiphotonPure);

fn mix_members(members: &[Member]) -> Result<DensityMatrix> {
    mix(members.iter().map(|(w, psi)| (*w, psi)))
}

/// 4f Mach-Zehnder source: wedge split by birth position, HWP(45°) on the
/// upper arm and HWP(0°) on the lower arm, PBS recombination, single-mode
/// fiber.
pub fn interferometer_source(config: &SourceConfig) -> Result<SourceOutput> {
    check_kind(config, SourceKind::Interferometer)?;
    let spectrum = config.sample_spectrum()?;
    let (a1, a2) = wedge_split(config.pump_waist_um, config.collection_waist_um, config.wedge_offset_um)?;
    let plated = BinnedPairState::from_split(a1, a2).through_arm_plates();
    let eta = config.eta_coupling;
    // Locking to the pump fringe removes 2πΔL/λp, which is common to every
    // spectral sample in this geometry.
    let lock = if config.phase_lock {
        TAU * config.delta_l_um * 1e3 / config.lambda_p_nm
    } else {
        0.0
    };
    let jitter = jitter_nodes(config.lock_jitter_rad);
    let singles = (a1 * a1 * eta.x1 + a2 * a2 * eta.x2, a1 * a1 * eta.x1 + a2 * a2 * eta.x2);

    let mut rates = RateAccumulator::default();
    let mut members = Vec::with_capacity(spectrum.samples.len() * jitter.len());
    let mut phase_min = f64::INFINITY;
    let mut phase_max = f64::NEG_INFINITY;
    for mode in spectrum.iter() {
        let base = mz_phase(config.delta_l_um, mode) - lock + config.phase_offset_rad;
        phase_min = phase_min.min(base);
        phase_max = phase_max.max(base);
        for &(dphi, gw) in &jitter {
            let routed = pbs_route(&plated, base + dphi);
            let transmission = 1.0 - routed.loss;
            let (psi, coupling) = single_mode_projection(&routed.binned, eta.x1, eta.x2)?;
            let w = mode.weight * gw;
            rates.add(w, 1.0, coupling, transmission, singles);
            members.push((w * coupling * transmission, psi.with_mode(*mode)));
        }
    }
    let coherent = mix_members(&members)?;

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("bin_amplitude_x1".into(), a1);
    diagnostics.insert("bin_amplitude_x2".into(), a2);
    diagnostics.insert("spectral_phase_spread_rad".into(), phase_max - phase_min);
    let (rate, singles) = rates.finish(config, &mut diagnostics, "pbs_transmission");
    finish_output(config, coherent, rate, singles, diagnostics)
}

/// Compact source: collimated pump, segmented half-wave plate at the crystal
/// exit (45° over bin x1, 0° over bin x2, lossy strip at the interface), and
/// a birefringent walk-off crystal that overlays the rotated bin onto the
/// unrotated one before single-mode collection.
pub fn compact_source(config: &SourceConfig) -> Result<SourceOutput> {
    check_kind(config, SourceKind::Compact)?;
    let spectrum = config.sample_spectrum()?;
    let crystal = config.combiner_crystal()?;
    let eta = config.eta_coupling;
    let center = *spectrum.center();
    let lock = if config.phase_lock {
        birefringent_pair_phase(&crystal, &center)?
    } else {
        0.0
    };
    let jitter = jitter_nodes(config.lock_jitter_rad);

    let overlap_for = |mode: &SpectralMode, strip: f64| -> Result<CompactOverlap> {
        let d = 0.5 * (walkoff_displacement(&crystal, mode.lambda_s)? + walkoff_displacement(&crystal, mode.lambda_i)?);
        Ok(CompactOverlap::new(
            d,
            config.pump_waist_um,
            config.collection_waist_um,
            config.wedge_offset_um,
            strip,
        ))
    };

    let mut rates = RateAccumulator::default();
    let mut open_geometry = 0.0;
    let mut members = Vec::with_capacity(spectrum.samples.len() * jitter.len());
    let mut phase_min = f64::INFINITY;
    let mut phase_max = f64::NEG_INFINITY;
    for mode in spectrum.iter() {
        let ov = overlap_for(mode, config.shwp_loss_width_um)?;
        open_geometry += mode.weight * overlap_for(mode, 0.0)?.geometric_factor();
        let geometry = ov.geometric_factor();
        let norm = (ov.x1 * ov.x1 + ov.x2 * ov.x2).sqrt();
        let (a1, a2) = if norm > 0.0 { (ov.x1 / norm, ov.x2 / norm) } else { (0.0, 1.0) };

        // Both bins are born |HH⟩; the segmented plate acts per bin.
        let x1 = shwp(&BiphotonPure::basis(HH).with_bin(Bin::X1))?.amplitudes * Complex64::new(a1, 0.0);
        let x2 = shwp(&BiphotonPure::basis(HH).with_bin(Bin::X2))?.amplitudes * Complex64::new(a2, 0.0);
        let binned = BinnedPairState { x1, x2, crosstalk: 0.0 };
        let singles = (a1 * a1 * eta.x1 + a2 * a2 * eta.x2, a1 * a1 * eta.x1 + a2 * a2 * eta.x2);

        let base = birefringent_pair_phase(&crystal, mode)? - lock + config.phase_offset_rad;
        phase_min = phase_min.min(base);
        phase_max = phase_max.max(base);
        for &(dphi, gw) in &jitter {
            let routed = pbs_route(&binned, base + dphi);
            let transmission = 1.0 - routed.loss;
            let (psi, coupling) = single_mode_projection(&routed.binned, eta.x1, eta.x2)?;
            let w = mode.weight * gw;
            rates.add(w, geometry, coupling, transmission, singles);
            members.push((w * geometry * coupling * transmission, psi.with_mode(*mode)));
        }
    }
    let coherent = mix_members(&members)?;

    let center_overlap = overlap_for(&center, config.shwp_loss_width_um)?;
    let mut diagnostics = BTreeMap::new();
    let d_center = 0.5
        * (walkoff_displacement(&crystal, center.lambda_s)? + walkoff_displacement(&crystal, center.lambda_i)?);
    diagnostics.insert("walkoff_displacement_um".into(), d_center);
    diagnostics.insert("walkoff_overlap".into(), center_overlap.walkoff_overlap());
    let n = (center_overlap.x1.powi(2) + center_overlap.x2.powi(2)).sqrt();
    diagnostics.insert("bin_amplitude_x1".into(), if n > 0.0 { center_overlap.x1 / n } else { 0.0 });
    diagnostics.insert("bin_amplitude_x2".into(), if n > 0.0 { center_overlap.x2 / n } else { 1.0 });
    diagnostics.insert("spectral_phase_spread_rad".into(), phase_max - phase_min);
    let (rate, singles) = rates.finish(config, &mut diagnostics, "combiner_transmission");
    let strip_loss = if open_geometry > 0.0 {
        1.0 - diagnostics[&format!("{FACTOR_PREFIX}geometry")] / open_geometry
    } else {
        0.0
    };
    diagnostics.insert("strip_loss_fraction".into(), strip_loss.max(0.0));
    finish_output(config, coherent, rate, singles, diagnostics)
}

/// 2f variant: the wedge sorts by transverse momentum, so the twins take
/// opposite arms. The arm with the 45° plate turns its photon to V, giving
/// `a2|HV⟩ + a1·e^{iφ}|VH⟩` with `φ = 2πΔL(1/λs − 1/λi)`, which the pump
/// fringe lock cannot remove.
pub fn psi_source(config: &SourceConfig) -> Result<SourceOutput> {
    check_kind(config, SourceKind::Psi2f)?;
    let spectrum = config.sample_spectrum()?;
    let (a1, a2) = wedge_split(config.pump_waist_um, config.collection_waist_um, config.wedge_offset_um)?;
    let eta = config.eta_coupling;
    let jitter = jitter_nodes(config.lock_jitter_rad);
    // One photon per arm: the pair always picks up √η1·√η2.
    let coupling = eta.x1 * eta.x2;
    // Signal is in x1 with probability a1², idler then in x2 (and vice versa).
    let singles = (a1 * a1 * eta.x1 + a2 * a2 * eta.x2, a1 * a1 * eta.x2 + a2 * a2 * eta.x1);

    let mut rates = RateAccumulator::default();
    let mut members = Vec::with_capacity(spectrum.samples.len() * jitter.len());
    for mode in spectrum.iter() {
        let base = psi_phase(config.delta_l_um, mode) + config.phase_offset_rad;
        for &(dphi, gw) in &jitter {
            let mut amps = Amplitudes::zeros();
            amps[HV] = Complex64::new(a2, 0.0);
            amps[VH] = Complex64::from_polar(a1, base + dphi);
            let psi = BiphotonPure::new(amps)?.with_mode(*mode);
            let w = mode.weight * gw;
            rates.add(w, 1.0, coupling, 1.0, singles);
            members.push((w, psi));
        }
    }
    let coherent = mix_members(&members)?;

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("bin_amplitude_x1".into(), a1);
    diagnostics.insert("bin_amplitude_x2".into(), a2);
    let (rate, singles) = rates.finish(config, &mut diagnostics, "arm_transmission");
    finish_output(config, coherent, rate, singles, diagnostics)
}

pub fn run_source(config: &SourceConfig) -> Result<SourceOutput> {
    match config.kind {
        SourceKind::Interferometer => interferometer_source(config),
        SourceKind::Compact => compact_source(config),
        SourceKind::Psi2f => psi_source(config),
    }
}

/// Evaluates `source` at each value of a named scalar config field.
/// Points run in parallel; results keep the input order.
pub fn scan(
    config: &SourceConfig,
    parameter: &str,
    values: &[f64],
    source: SourceKind,
) -> Result<Vec<(f64, SourceOutput)>> {
    if !SCALAR_FIELDS.contains(&parameter) {
        return Err(Error::UnknownParameter(parameter.to_string()));
    }
    let mut base = config.clone();
    base.kind = source;
    values
        .par_iter()
        .map(|&v| {
            let mut cfg = base.clone();
            cfg.set_scalar(parameter, v)?;
            Ok((v, run_source(&cfg)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::fidelity;

    fn base(kind: SourceKind) -> SourceConfig {
        let combiner = match kind {
            SourceKind::Compact => Some(CombinerConfig {
                material: crate::spectra::Material::Bbo,
                length_mm: 4.0,
                cut_angle_deg: 28.8,
            }),
            _ => None,
        };
        SourceConfig {
            kind,
            note: None,
            lambda_p_nm: 405.0,
            pump_waist_um: if kind == SourceKind::Compact { 400.0 } else { 150.0 },
            collection_waist_um: 75.0,
            delta_l_um: 0.0,
            wedge_offset_um: 0.0,
            defocus_mix: 0.0,
            shwp_loss_width_um: 0.0,
            phase_offset_rad: 0.0,
            phase_lock: true,
            lock_jitter_rad: 0.0,
            pair_rate_per_mw: 1e6,
            pump_power_mw: 1.0,
            spectrum: SpectrumConfig {
                center_s_nm: 792.0,
                fwhm_s_nm: 2.0,
                shape: Default::default(),
                n_samples: 41,
                span_fwhm: 2.5,
            },
            combiner,
            eta_coupling: BinCoupling { x1: 1.0, x2: 1.0 },
            eta_detector: ArmEfficiency { signal: 1.0, idler: 1.0 },
        }
    }

    #[test]
    fn wrong_pipeline_is_rejected() {
        assert!(compact_source(&base(SourceKind::Interferometer)).is_err());
        assert!(psi_source(&base(SourceKind::Compact)).is_err());
    }

    #[test]
    fn jitter_nodes_normalized() {
        let nodes = jitter_nodes(0.2);
        assert_eq!(nodes.len(), JITTER_NODES);
        assert!((nodes.iter().map(|n| n.1).sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(jitter_nodes(0.0), vec![(0.0, 1.0)]);
    }

    #[test]
    fn jitter_reduces_coherence_like_gaussian_average() {
        let mut cfg = base(SourceKind::Interferometer);
        cfg.lock_jitter_rad = 0.3;
        let out = interferometer_source(&cfg).unwrap();
        let v = out.diagnostic("coherence_visibility").unwrap();
        assert!((v - (-0.045f64).exp()).abs() < 1e-4, "{v}");
    }

    #[test]
    fn ideal_interferometer_rates_are_generated_rate() {
        let out = interferometer_source(&base(SourceKind::Interferometer)).unwrap();
        assert!((out.expected_pair_rate - 1e6).abs() < 1e-6);
        assert!((out.expected_singles.0 - 1e6).abs() < 1e-6);
    }

    #[test]
    fn contamination_lives_outside_signal_block() {
        let mut cfg = base(SourceKind::Interferometer);
        cfg.defocus_mix = 0.1;
        let out = interferometer_source(&cfg).unwrap();
        let f = fidelity(&out.rho, &bell_state(BellKind::PhiPlus));
        assert!((f - 0.9).abs() < 1e-12);
        assert!((out.rho.get(HV, HV).re - 0.05).abs() < 1e-12);
    }

    #[test]
    fn psi_contamination_is_hh_vv() {
        let mut cfg = base(SourceKind::Psi2f);
        cfg.defocus_mix = 0.2;
        let out = psi_source(&cfg).unwrap();
        assert!((out.rho.get(HH, HH).re - 0.1).abs() < 1e-12);
        assert!((fidelity(&out.rho, &bell_state(BellKind::PsiPlus)) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn target_follows_offset() {
        let mut cfg = base(SourceKind::Interferometer);
        assert_eq!(cfg.target_bell(), BellKind::PhiPlus);
        cfg.phase_offset_rad = PI;
        assert_eq!(cfg.target_bell(), BellKind::PhiMinus);
        cfg.kind = SourceKind::Psi2f;
        assert_eq!(cfg.target_bell(), BellKind::PsiMinus);
    }

    #[test]
    fn scan_rejects_unknown_parameter_and_handles_empty() {
        let cfg = base(SourceKind::Psi2f);
        assert!(matches!(
            scan(&cfg, "bogus", &[1.0], SourceKind::Psi2f),
            Err(Error::UnknownParameter(_))
        ));
        assert!(scan(&cfg, "delta_l_um", &[], SourceKind::Psi2f).unwrap().is_empty());
    }
}
