//! Two-qubit polarization state tomography.
//!
//! Measurements are projective analyzer settings from [`crate::detect`]. The
//! design matrix is expanded in the 16 two-qubit Pauli products, so linear
//! inversion is a real least-squares problem.

mod mle;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detect::{hv_da_visibility, angle_grid, Analyzer, AnalyzerSetting, CountRecord};
use crate::error::{Error, Result};
use crate::qstate::{concurrence, fidelity, purity, BiphotonPure, DensityMatrix};

pub use mle::{mle_reconstruct, MleOptions, TomographyResult};

/// Relative singular-value threshold for the completeness check.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SettingsKind {
    /// Minimal informationally complete set.
    Sixteen,
    /// All pairs of the six Pauli eigenstates.
    #[default]
    ThirtySix,
}

impl SettingsKind {
    pub fn from_count(n: usize) -> Result<Self> {
        match n {
            16 => Ok(SettingsKind::Sixteen),
            36 => Ok(SettingsKind::ThirtySix),
            _ => Err(Error::domain(format!("tomography uses 16 or 36 settings, not {n}"))),
        }
    }
}

/// Ordered list of two-photon projector settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographySettings {
    settings: Vec<AnalyzerSetting>,
}

fn pauli(k: usize) -> Matrix2<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match k {
        0 => Matrix2::new(o, z, z, o),
        1 => Matrix2::new(z, o, o, z),
        2 => Matrix2::new(z, -i, i, z),
        _ => Matrix2::new(o, z, z, -o),
    }
}

/// Two-qubit Pauli product `σ_a ⊗ σ_b` with `μ = 4a + b`.
pub(crate) fn pauli_product(mu: usize) -> Matrix4<Complex64> {
    pauli(mu / 4).kronecker(&pauli(mu % 4))
}

impl TomographySettings {
    /// Validates that the settings are informationally complete.
    pub fn new(settings: Vec<AnalyzerSetting>) -> Result<Self> {
        let s = TomographySettings { settings };
        s.check_complete()?;
        Ok(s)
    }

    pub fn settings(&self) -> &[AnalyzerSetting] {
        &self.settings
    }

    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    /// Ideal projectors `P_s ⊗ P_i`, one per setting.
    pub fn projectors(&self) -> Vec<Matrix4<Complex64>> {
        self.settings.iter().map(|s| s.operator(0.0)).collect()
    }

    /// Real design matrix `A[k, μ] = Tr(P_k σ_μ)`.
    pub fn design_matrix(&self) -> DMatrix<f64> {
        let projectors = self.projectors();
        DMatrix::from_fn(projectors.len(), 16, |k, mu| (projectors[k] * pauli_product(mu)).trace().re)
    }

    pub fn rank(&self) -> usize {
        if self.settings.is_empty() {
            return 0;
        }
        let sv = self.design_matrix().singular_values();
        let max = sv.max();
        sv.iter().filter(|&&s| s > RANK_TOL * max).count()
    }

    fn check_complete(&self) -> Result<()> {
        let rank = self.rank();
        if rank < 16 {
            return Err(Error::domain(format!(
                "tomography settings are not informationally complete (design rank {rank} < 16)"
            )));
        }
        Ok(())
    }

    /// Settings carried by a list of records, in record order.
    pub fn from_records(records: &[CountRecord]) -> Result<Self> {
        Self::new(records.iter().map(|r| r.setting).collect())
    }

    fn check_records(&self, records: &[CountRecord]) -> Result<()> {
        if records.len() != self.settings.len() {
            return Err(Error::domain(format!(
                "{} count records for {} tomography settings",
                records.len(),
                self.settings.len()
            )));
        }
        for (k, (r, s)) in records.iter().zip(&self.settings).enumerate() {
            if r.setting.signal != s.signal || r.setting.idler != s.idler {
                return Err(Error::domain(format!(
                    "record {k} was taken at {}{} but setting {k} is {}{}",
                    r.setting.signal, r.setting.idler, s.signal, s.idler
                )));
            }
            if !(r.coincidences >= 0.0 && r.integration_s > 0.0) {
                return Err(Error::domain(format!(
                    "record {k} needs coincidences >= 0 and integration time > 0"
                )));
            }
        }
        Ok(())
    }
}

/// Canonical 16- or 36-setting measurement set.
pub fn standard_settings(kind: SettingsKind) -> TomographySettings {
    use Analyzer as A;
    let settings: Vec<AnalyzerSetting> = match kind {
        SettingsKind::Sixteen => [
            (A::H, A::H),
            (A::H, A::V),
            (A::V, A::V),
            (A::V, A::H),
            (A::R, A::H),
            (A::R, A::V),
            (A::D, A::V),
            (A::D, A::H),
            (A::D, A::R),
            (A::D, A::D),
            (A::R, A::D),
            (A::H, A::D),
            (A::V, A::D),
            (A::V, A::L),
            (A::H, A::L),
            (A::R, A::L),
        ]
        .into_iter()
        .map(|(s, i)| AnalyzerSetting::new(s, i))
        .collect(),
        SettingsKind::ThirtySix => {
            let six = [A::H, A::V, A::D, A::A, A::R, A::L];
            six.iter()
                .flat_map(|&s| six.iter().map(move |&i| AnalyzerSetting::new(s, i)))
                .collect()
        }
    };
    TomographySettings { settings }
}

/// Count rates `C_k / τ_k`, proportional to `Tr(P_k ρ)`.
fn rates(records: &[CountRecord]) -> Vec<f64> {
    records.iter().map(|r| r.coincidences / r.integration_s).collect()
}

/// Least-squares solution of the Born-rule system, Hermitian by construction
/// and renormalized to unit trace. The result may have negative eigenvalues.
pub fn linear_inversion(records: &[CountRecord], settings: &TomographySettings) -> Result<Matrix4<Complex64>> {
    settings.check_records(records)?;
    let a = settings.design_matrix();
    let y = DVector::from_vec(rates(records));
    let svd = a.svd(true, true);
    let max = svd.singular_values.max();
    let coef = svd
        .solve(&y, RANK_TOL * max)
        .map_err(|e| Error::Numerical(format!("linear inversion failed: {e}")))?;
    let mut m = Matrix4::<Complex64>::zeros();
    for mu in 0..16 {
        m += pauli_product(mu) * Complex64::new(coef[mu], 0.0);
    }
    let tr = m.trace().re;
    if !(tr > 0.0) {
        return Err(Error::Numerical("linear inversion has non-positive trace; no counts?".into()));
    }
    let m = m / Complex64::new(tr, 0.0);
    Ok((m + m.adjoint()) * Complex64::new(0.5, 0.0))
}

/// Visibility-based fidelity estimates; these assume a Werner-like state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimates {
    pub mean_visibility: f64,
    /// `(1 + 3V̄)/4`.
    pub werner: f64,
    /// `(1 + V̄)/2`.
    pub linear: f64,
    pub is_estimate: bool,
}

impl FidelityEstimates {
    pub fn from_visibility(v: f64) -> Self {
        FidelityEstimates {
            mean_visibility: v,
            werner: (1.0 + 3.0 * v) / 4.0,
            linear: (1.0 + v) / 2.0,
            is_estimate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportMetrics {
    pub fidelity: f64,
    pub purity: f64,
    pub concurrence: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Density-matrix bar-chart data plus metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyReport {
    pub basis: Vec<String>,
    pub real: [[f64; 4]; 4],
    pub imag: [[f64; 4]; 4],
    pub metrics: ReportMetrics,
    pub visibility_estimates: FidelityEstimates,
}

pub fn tomography_report(result: &TomographyResult, target: &BiphotonPure) -> Result<TomographyReport> {
    let rho = &result.rho_est;
    let mut real = [[0.0; 4]; 4];
    let mut imag = [[0.0; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            let z = rho.get(r, c);
            real[r][c] = z.re;
            imag[r][c] = z.im;
        }
    }
    let (hv, da) = hv_da_visibility(rho, &angle_grid(10.0))?;
    Ok(TomographyReport {
        basis: ["HH", "HV", "VH", "VV"].iter().map(|s| s.to_string()).collect(),
        real,
        imag,
        metrics: ReportMetrics {
            fidelity: fidelity(rho, target),
            purity: purity(rho),
            concurrence: concurrence(rho),
            log_likelihood: result.log_likelihood,
            iterations: result.iterations,
            converged: result.converged,
        },
        visibility_estimates: FidelityEstimates::from_visibility(0.5 * (hv + da)),
    })
}

/// Noise-free records at unit integration time: `coincidences = N·Tr(P_k ρ)`.
pub fn expected_records(rho: &DensityMatrix, settings: &TomographySettings, pairs_per_setting: f64) -> Vec<CountRecord> {
    settings
        .settings
        .iter()
        .map(|s| {
            let p = crate::detect::coincidence_probability(rho, s);
            CountRecord {
                setting: *s,
                singles_s: pairs_per_setting,
                singles_i: pairs_per_setting,
                coincidences: pairs_per_setting * p,
                integration_s: 1.0,
            }
        })
        .collect()
}
