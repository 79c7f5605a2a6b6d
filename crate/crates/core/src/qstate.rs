//! Two-qubit polarization states.
//!
//! Basis order is fixed everywhere as (HH, HV, VH, VV): index = 2·signal + idler
//! with H = 0 and V = 1. The signal photon is the left tensor factor.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::SpectralMode;

pub type Amplitudes = Vector4<Complex64>;

pub const BASIS_ORDER: &str = "HH,HV,VH,VV";

pub const HH: usize = 0;
pub const HV: usize = 1;
pub const VH: usize = 2;
pub const VV: usize = 3;

/// Tolerance below zero within which an eigenvalue is treated as roundoff.
const EIGEN_ROUNDOFF: f64 = 1e-14;
/// Most negative eigenvalue that is clamped rather than rejected.
const EIGEN_FLOOR: f64 = -1e-10;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Transverse birth-position bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bin {
    X1,
    X2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellKind {
    #[serde(rename = "phi+")]
    PhiPlus,
    #[serde(rename = "phi-")]
    PhiMinus,
    #[serde(rename = "psi+")]
    PsiPlus,
    #[serde(rename = "psi-")]
    PsiMinus,
}

impl BellKind {
    pub const ALL: [BellKind; 4] = [
        BellKind::PhiPlus,
        BellKind::PhiMinus,
        BellKind::PsiPlus,
        BellKind::PsiMinus,
    ];
}

impl fmt::Display for BellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BellKind::PhiPlus => "phi+",
            BellKind::PhiMinus => "phi-",
            BellKind::PsiPlus => "psi+",
            BellKind::PsiMinus => "psi-",
        })
    }
}

impl FromStr for BellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "phi+" | "phiplus" | "phi-plus" => Ok(BellKind::PhiPlus),
            "phi-" | "phiminus" | "phi-minus" => Ok(BellKind::PhiMinus),
            "psi+" | "psiplus" | "psi-plus" => Ok(BellKind::PsiPlus),
            "psi-" | "psiminus" | "psi-minus" => Ok(BellKind::PsiMinus),
            _ => Err(Error::domain(format!("unknown Bell state `{s}`"))),
        }
    }
}

/// Pure two-photon polarization state, optionally tagged with the position
/// bin and spectral sample it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct BiphotonPure {
    pub amplitudes: Amplitudes,
    pub bin: Option<Bin>,
    pub mode: Option<SpectralMode>,
}

impl BiphotonPure {
    /// Normalizes `amplitudes`; fails on the zero vector.
    pub fn new(amplitudes: Amplitudes) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::domain("state vector has zero or non-finite norm"));
        }
        Ok(BiphotonPure {
            amplitudes: amplitudes / Complex64::new(norm, 0.0),
            bin: None,
            mode: None,
        })
    }

    pub fn basis(index: usize) -> Self {
        let mut a = Amplitudes::zeros();
        a[index] = ONE;
        BiphotonPure {
            amplitudes: a,
            bin: None,
            mode: None,
        }
    }

    pub fn with_bin(mut self, bin: Bin) -> Self {
        self.bin = Some(bin);
        self
    }

    pub fn with_mode(mut self, mode: SpectralMode) -> Self {
        self.mode = Some(mode);
        self
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn inner(&self, other: &BiphotonPure) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn projector(&self) -> Matrix4<Complex64> {
        self.amplitudes * self.amplitudes.adjoint()
    }
}

pub fn bell_state(kind: BellKind) -> BiphotonPure {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let mut a = Amplitudes::zeros();
    match kind {
        BellKind::PhiPlus => {
            a[HH] = h;
            a[VV] = h;
        }
        BellKind::PhiMinus => {
            a[HH] = h;
            a[VV] = -h;
        }
        BellKind::PsiPlus => {
            a[HV] = h;
            a[VH] = h;
        }
        BellKind::PsiMinus => {
            a[HV] = h;
            a[VH] = -h;
        }
    }
    BiphotonPure {
        amplitudes: a,
        bin: None,
        mode: None,
    }
}

/// `a2|HH⟩ + a1·e^{iφ}|VV⟩`, normalized. Bin x2 keeps H, bin x1 is rotated to V.
pub fn superposed_state(a1: f64, a2: f64, phase: f64) -> Result<BiphotonPure> {
    if !(a1 >= 0.0 && a2 >= 0.0) {
        return Err(Error::domain(format!(
            "bin amplitudes must be non-negative (a1 = {a1}, a2 = {a2})"
        )));
    }
    if a1 == 0.0 && a2 == 0.0 {
        return Err(Error::domain("both bin amplitudes are zero"));
    }
    let mut a = Amplitudes::zeros();
    a[HH] = Complex64::new(a2, 0.0);
    a[VV] = Complex64::from_polar(a1, phase);
    BiphotonPure::new(a)
}

/// 4×4 density matrix over (HH, HV, VH, VV).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: Matrix4<Complex64>,
}

impl DensityMatrix {
    /// Validates Hermiticity (1e-12), unit trace (1e-12) and positivity.
    ///
    /// Eigenvalues in [−1e-10, 0) are clamped to zero with a warning and the
    /// matrix is rebuilt; anything more negative is rejected.
    pub fn new(entries: Matrix4<Complex64>) -> Result<Self> {
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical("density matrix has non-finite entries".into()));
        }
        let herm_err = (entries - entries.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm_err > 1e-12 {
            return Err(Error::Numerical(format!(
                "density matrix not Hermitian (max deviation {herm_err:e})"
            )));
        }
        let trace = entries.trace();
        if (trace.re - 1.0).abs() > 1e-12 || trace.im.abs() > 1e-12 {
            return Err(Error::Numerical(format!("density matrix trace {trace} != 1")));
        }
        // Symmetrize so downstream eigensolvers see an exactly Hermitian matrix.
        let entries = (entries + entries.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = entries.symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < EIGEN_FLOOR {
            return Err(Error::Numerical(format!(
                "density matrix has negative eigenvalue {min:e}"
            )));
        }
        if min < -EIGEN_ROUNDOFF {
            log::warn!("clamping negative eigenvalue {min:e} of density matrix to zero");
            let clamped = eig.eigenvalues.map(|l| l.max(0.0));
            let total: f64 = clamped.sum();
            let mut rebuilt = Matrix4::zeros();
            for (k, &l) in clamped.iter().enumerate() {
                let v = eig.eigenvectors.column(k);
                rebuilt += v * v.adjoint() * Complex64::new(l / total, 0.0);
            }
            let rebuilt = (rebuilt + rebuilt.adjoint()) * Complex64::new(0.5, 0.0);
            return Ok(DensityMatrix { entries: rebuilt });
        }
        Ok(DensityMatrix { entries })
    }

    pub fn from_pure(state: &BiphotonPure) -> Self {
        let n = state.norm_sqr();
        DensityMatrix {
            entries: state.projector() / Complex64::new(n, 0.0),
        }
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix {
            entries: Matrix4::identity() * Complex64::new(0.25, 0.0),
        }
    }

    /// `p·|Φ+⟩⟨Φ+| + (1 − p)·I/4`.
    pub fn werner(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("Werner weight {p} outside [0, 1]")));
        }
        let bell = bell_state(BellKind::PhiPlus).projector();
        DensityMatrix::new(
            bell * Complex64::new(p, 0.0) + Matrix4::identity() * Complex64::new((1.0 - p) / 4.0, 0.0),
        )
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[(row, col)]
    }

    /// Expectation value `Tr(ρ·O)` of a Hermitian observable, real part.
    pub fn expectation(&self, observable: &Matrix4<Complex64>) -> f64 {
        (self.entries * observable).trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let mut ev: Vec<f64> = self.entries.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        [ev[0], ev[1], ev[2], ev[3]]
    }

    /// Probability weight outside the {HH, VV} block.
    pub fn weight_outside_phi_block(&self) -> f64 {
        let mut w = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                let in_block = (r == HH || r == VV) && (c == HH || c == VV);
                if !in_block {
                    w += self.entries[(r, c)].norm();
                }
            }
        }
        w
    }

    /// Fringe visibility of the coherence between basis states `a` and `b`:
    /// `2|ρ_ab| / (ρ_aa + ρ_bb)`.
    pub fn coherence_visibility(&self, a: usize, b: usize) -> f64 {
        let pop = self.entries[(a, a)].re + self.entries[(b, b)].re;
        if pop <= 0.0 {
            return 0.0;
        }
        2.0 * self.entries[(a, b)].norm() / pop
    }
}

/// Eigenvalue clipping at zero followed by trace renormalization.
pub fn project_psd(m: &Matrix4<Complex64>) -> Result<DensityMatrix> {
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let total: f64 = clipped.sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("PSD projection has zero trace".into()));
    }
    let mut out = Matrix4::zeros();
    for (k, &l) in clipped.iter().enumerate() {
        if l > 0.0 {
            let v = eig.eigenvectors.column(k);
            out += v * v.adjoint() * Complex64::new(l / total, 0.0);
        }
    }
    DensityMatrix::new((out + out.adjoint()) * Complex64::new(0.5, 0.0))
}

/// `Σ w_k |ψ_k⟩⟨ψ_k| / Σ w_k`. Each state is normalized before mixing.
pub fn mix<'a, I>(ensemble: I) -> Result<DensityMatrix>
where
    I: IntoIterator<Item = (f64, &'a BiphotonPure)>,
{
    let mut acc = Matrix4::<Complex64>::zeros();
    let mut total = 0.0;
    let mut count = 0usize;
    for (w, psi) in ensemble {
        count += 1;
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::domain(format!("ensemble weight {w} must be finite and >= 0")));
        }
        if w == 0.0 {
            continue;
        }
        let n = psi.norm_sqr();
        if !(n > 0.0) {
            return Err(Error::domain("ensemble member has zero norm"));
        }
        acc += psi.projector() * Complex64::new(w / n, 0.0);
        total += w;
    }
    if count == 0 {
        return Err(Error::domain("empty ensemble"));
    }
    if !(total > 0.0) {
        return Err(Error::domain("ensemble weights sum to zero"));
    }
    DensityMatrix::new(acc / Complex64::new(total, 0.0))
}

/// Convex combination of density matrices, weights renormalized.
pub fn mix_matrices(parts: &[(f64, &DensityMatrix)]) -> Result<DensityMatrix> {
    let total: f64 = parts.iter().map(|(w, _)| *w).sum();
    if parts.is_empty() || !(total > 0.0) {
        return Err(Error::domain("empty or zero-weight mixture"));
    }
    let mut acc = Matrix4::<Complex64>::zeros();
    for (w, rho) in parts {
        if *w < 0.0 {
            return Err(Error::domain("negative mixture weight"));
        }
        acc += rho.entries * Complex64::new(*w / total, 0.0);
    }
    DensityMatrix::new(acc)
}

/// `⟨ψ|ρ|ψ⟩` for a normalized target.
pub fn fidelity(rho: &DensityMatrix, target: &BiphotonPure) -> f64 {
    let psi = target.amplitudes / Complex64::new(target.norm_sqr().sqrt(), 0.0);
    let f = psi.dotc(&(rho.entries * psi)).re;
    f.clamp(0.0, 1.0)
}

fn hermitian_sqrt(m: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    let eig = m.symmetric_eigen();
    let mut out = Matrix4::zeros();
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        out += v * v.adjoint() * Complex64::new(l.max(0.0).sqrt(), 0.0);
    }
    out
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²` between two mixed states.
pub fn state_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    let s = hermitian_sqrt(&rho.entries);
    let inner = s * sigma.entries * s;
    let inner = (inner + inner.adjoint()) * Complex64::new(0.5, 0.0);
    let root_trace: f64 = inner
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    (root_trace * root_trace).clamp(0.0, 1.0)
}

pub fn purity(rho: &DensityMatrix) -> f64 {
    (rho.entries * rho.entries).trace().re
}

fn sigma_y_sigma_y() -> Matrix4<Complex64> {
    // σy ⊗ σy is real: anti-diagonal (-1, 1, 1, -1).
    let mut m = Matrix4::zeros();
    m[(0, 3)] = Complex64::new(-1.0, 0.0);
    m[(1, 2)] = ONE;
    m[(2, 1)] = ONE;
    m[(3, 0)] = Complex64::new(-1.0, 0.0);
    m
}

/// Wootters concurrence.
pub fn concurrence(rho: &DensityMatrix) -> f64 {
    let yy = sigma_y_sigma_y();
    let tilde = yy * rho.entries.map(|z| z.conj()) * yy;
    let s = hermitian_sqrt(&rho.entries);
    let r = s * tilde * s;
    let r = (r + r.adjoint()) * Complex64::new(0.5, 0.0);
    let mut roots: Vec<f64> = r
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    roots.sort_by(|a, b| b.total_cmp(a));
    (roots[0] - roots[1] - roots[2] - roots[3]).clamp(0.0, 1.0)
}

fn gaussian_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-random pure state.
pub fn random_pure_state<R: Rng + ?Sized>(rng: &mut R) -> BiphotonPure {
    let mut a = Amplitudes::from_fn(|_, _| gaussian_complex(rng));
    let n = a.norm();
    a /= Complex64::new(n, 0.0);
    BiphotonPure::new(a).expect("normalized random state")
}

/// Hilbert-Schmidt random mixed state, `G G† / Tr` for a complex Ginibre `G`.
pub fn random_mixed_state<R: Rng + ?Sized>(rng: &mut R) -> DensityMatrix {
    let g = Matrix4::from_fn(|_, _| gaussian_complex(rng));
    let m = g * g.adjoint();
    let m = m / Complex64::new(m.trace().re, 0.0);
    DensityMatrix::new((m + m.adjoint()) * Complex64::new(0.5, 0.0)).expect("Ginibre state is positive")
}

/// JSON-facing form: nested `[re, im]` pairs plus the basis tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrixRecord {
    pub basis: String,
    pub entries: [[[f64; 2]; 4]; 4],
}

impl From<&DensityMatrix> for DensityMatrixRecord {
    fn from(rho: &DensityMatrix) -> Self {
        let mut entries = [[[0.0; 2]; 4]; 4];
        for (r, row) in entries.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                let z = rho.entries[(r, c)];
                *cell = [z.re, z.im];
            }
        }
        DensityMatrixRecord {
            basis: BASIS_ORDER.to_string(),
            entries,
        }
    }
}

impl TryFrom<DensityMatrixRecord> for DensityMatrix {
    type Error = Error;

    fn try_from(rec: DensityMatrixRecord) -> Result<Self> {
        if rec.basis != BASIS_ORDER {
            return Err(Error::domain(format!(
                "unsupported basis order `{}` (expected {BASIS_ORDER})",
                rec.basis
            )));
        }
        let m = Matrix4::from_fn(|r, c| {
            let [re, im] = rec.entries[r][c];
            Complex64::new(re, im)
        });
        DensityMatrix::new(m)
    }
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        DensityMatrixRecord::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rec = DensityMatrixRecord::deserialize(deserializer)?;
        DensityMatrix::try_from(rec).map_err(serde::de::Error::custom)
    }
}
