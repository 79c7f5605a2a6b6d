//! Jones-calculus optical elements and the position-binned pair state.
//!
//! Half-wave plates follow the determinant −1 convention
//! `[[cos 2θ, sin 2θ], [sin 2θ, −cos 2θ]]` with no compensating global phase,
//! so every interference phase is carried by an explicit parameter.

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qstate::{Amplitudes, Bin, BiphotonPure, HH, VV};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix(pub Matrix2<Complex64>);

impl JonesMatrix {
    pub fn identity() -> Self {
        JonesMatrix(Matrix2::identity())
    }

    pub fn matrix(&self) -> &Matrix2<Complex64> {
        &self.0
    }

    pub fn then(&self, next: &JonesMatrix) -> JonesMatrix {
        JonesMatrix(next.0 * self.0)
    }

    /// Deviation of `J†J` from identity.
    pub fn unitarity_error(&self) -> f64 {
        (self.0.adjoint() * self.0 - Matrix2::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_error() < 1e-12
    }

    /// Largest singular value.
    pub fn max_singular_value(&self) -> f64 {
        self.0.singular_values().max()
    }

    /// `self ⊗ other` in the (HH, HV, VH, VV) ordering.
    pub fn kron(&self, other: &JonesMatrix) -> Matrix4<Complex64> {
        self.0.kronecker(&other.0)
    }
}

/// Half-wave plate with fast axis at `theta_deg` from horizontal.
pub fn hwp(theta_deg: f64) -> JonesMatrix {
    let (s, c) = (2.0 * theta_deg.to_radians()).sin_cos();
    let s = Complex64::new(s, 0.0);
    let c = Complex64::new(c, 0.0);
    JonesMatrix(Matrix2::new(c, s, s, -c))
}

/// Quarter-wave plate with fast axis at `theta_deg`, retardance π/2 on the
/// slow axis.
pub fn qwp(theta_deg: f64) -> JonesMatrix {
    let t = theta_deg.to_radians();
    let (s, c) = t.sin_cos();
    let i = Complex64::new(0.0, 1.0);
    let one = Complex64::new(1.0, 0.0);
    let rot = Matrix2::new(
        Complex64::new(c, 0.0),
        Complex64::new(-s, 0.0),
        Complex64::new(s, 0.0),
        Complex64::new(c, 0.0),
    );
    let plate = Matrix2::new(one, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), i);
    JonesMatrix(rot * plate * rot.transpose())
}

/// `(U_s ⊗ U_i)|ψ⟩`. The result is renormalized only when both matrices are
/// unitary; otherwise its norm records the loss.
pub fn apply_local(u_signal: &JonesMatrix, u_idler: &JonesMatrix, state: &BiphotonPure) -> BiphotonPure {
    let amplitudes = u_signal.kron(u_idler) * state.amplitudes;
    let amplitudes = if u_signal.is_unitary() && u_idler.is_unitary() {
        let n = amplitudes.norm();
        if n > 0.0 {
            amplitudes / Complex64::new(n, 0.0)
        } else {
            amplitudes
        }
    } else {
        amplitudes
    };
    BiphotonPure {
        amplitudes,
        bin: state.bin,
        mode: state.mode,
    }
}

/// Bin amplitudes `(a1, a2)` when the emission is split at a line offset by
/// `transverse_offset` µm from the beam centre.
///
/// The birth-position marginal is Gaussian with 1/e² intensity radius
/// `w_eff`, so `a1² = ½(1 + erf(√2·d/w_eff))`.
pub fn split_amplitudes(w_eff: f64, transverse_offset: f64) -> Result<(f64, f64)> {
    if !(w_eff > 0.0 && w_eff.is_finite()) {
        return Err(Error::domain(format!("effective waist {w_eff} µm must be > 0")));
    }
    let p1 = (0.5 * (1.0 + libm::erf(std::f64::consts::SQRT_2 * transverse_offset / w_eff))).clamp(0.0, 1.0);
    let p2 = 1.0 - p1;
    Ok((p1.sqrt(), p2.sqrt()))
}

/// Wedge-mirror split. The effective pair-emission waist is the collection
/// waist; the pump waist only has to be valid.
pub fn wedge_split(pump_waist: f64, collection_waist: f64, transverse_offset: f64) -> Result<(f64, f64)> {
    if !(pump_waist > 0.0 && pump_waist.is_finite()) {
        return Err(Error::domain(format!("pump waist {pump_waist} µm must be > 0")));
    }
    split_amplitudes(collection_waist, transverse_offset)
}

/// Pair amplitudes held separately per birth-position bin.
///
/// Each bin vector is unnormalized; its squared norm is the bin's share of
/// the pair probability. `crosstalk` holds probability moved out of both
/// bins (for example into a contamination channel).
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedPairState {
    pub x1: Amplitudes,
    pub x2: Amplitudes,
    pub crosstalk: f64,
}

impl BinnedPairState {
    /// Both bins born as |HH⟩ with real amplitudes `a1`, `a2`.
    pub fn from_split(a1: f64, a2: f64) -> Self {
        let mut x1 = Amplitudes::zeros();
        let mut x2 = Amplitudes::zeros();
        x1[HH] = Complex64::new(a1, 0.0);
        x2[HH] = Complex64::new(a2, 0.0);
        BinnedPairState { x1, x2, crosstalk: 0.0 }
    }

    pub fn bin(&self, bin: Bin) -> &Amplitudes {
        match bin {
            Bin::X1 => &self.x1,
            Bin::X2 => &self.x2,
        }
    }

    pub fn total_probability(&self) -> f64 {
        self.x1.norm_squared() + self.x2.norm_squared() + self.crosstalk
    }

    /// Applies the same local pair of plates to every photon of a bin.
    pub fn apply_to_bin(&mut self, bin: Bin, u_signal: &JonesMatrix, u_idler: &JonesMatrix) {
        let op = u_signal.kron(u_idler);
        match bin {
            Bin::X1 => self.x1 = op * self.x1,
            Bin::X2 => self.x2 = op * self.x2,
        }
    }

    /// Interferometer arm plates: hwp(45) on both photons of x1, hwp(0) on x2.
    pub fn through_arm_plates(&self) -> Self {
        let mut out = self.clone();
        out.apply_to_bin(Bin::X1, &hwp(45.0), &hwp(45.0));
        out.apply_to_bin(Bin::X2, &hwp(0.0), &hwp(0.0));
        out
    }
}

/// Segmented half-wave plate: bin x1 sees the 45° segment, bin x2 the 0°
/// segment.
pub fn shwp(state: &BiphotonPure) -> Result<BiphotonPure> {
    let plate = match state.bin {
        Some(Bin::X1) => hwp(45.0),
        Some(Bin::X2) => hwp(0.0),
        None => return Err(Error::domain("segmented half-wave plate needs a position bin")),
    };
    Ok(apply_local(&plate, &plate, state))
}

/// Result of routing a binned state through the PBS.
#[derive(Debug, Clone, PartialEq)]
pub struct PbsOutput {
    /// Binned state at the common output port: x1 holds only e^{iφ}|VV⟩,
    /// x2 only |HH⟩.
    pub binned: BinnedPairState,
    /// Probability that left through the other port or split between ports.
    pub loss: f64,
}

/// Keeps the V pairs of bin x1 and the H pairs of bin x2, applies `phase` to
/// the x1 path, and books every other component as loss.
pub fn pbs_route(binned: &BinnedPairState, phase: f64) -> PbsOutput {
    let mut x1 = Amplitudes::zeros();
    let mut x2 = Amplitudes::zeros();
    x1[VV] = binned.x1[VV] * Complex64::from_polar(1.0, phase);
    x2[HH] = binned.x2[HH];
    let before = binned.x1.norm_squared() + binned.x2.norm_squared();
    let after = x1.norm_squared() + x2.norm_squared();
    PbsOutput {
        binned: BinnedPairState {
            x1,
            x2,
            crosstalk: binned.crosstalk,
        },
        loss: (before - after).max(0.0),
    }
}

/// PBS recombination followed by lossless single-mode projection.
pub fn pbs_combine(binned: &BinnedPairState, phase: f64) -> Result<BiphotonPure> {
    let routed = pbs_route(binned, phase);
    let (state, _) = single_mode_projection(&routed.binned, 1.0, 1.0)?;
    Ok(state)
}

/// Single-mode projection with per-photon coupling `eta1` (bin x1) and
/// `eta2` (bin x2).
///
/// Each photon amplitude is weighted by √η, so a pair in bin k picks up η_k.
/// Bin labels are erased by summing the bin vectors coherently. Returns the
/// normalized polarization state and the pair coupling efficiency relative
/// to the probability held in the bins.
pub fn single_mode_projection(binned: &BinnedPairState, eta1: f64, eta2: f64) -> Result<(BiphotonPure, f64)> {
    for (name, eta) in [("eta1", eta1), ("eta2", eta2)] {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::domain(format!("coupling {name} = {eta} outside [0, 1]")));
        }
    }
    let held = binned.x1.norm_squared() + binned.x2.norm_squared();
    if !(held > 0.0) {
        return Err(Error::domain("binned state carries no probability"));
    }
    let combined: Amplitudes =
        binned.x1 * Complex64::new(eta1, 0.0) + binned.x2 * Complex64::new(eta2, 0.0);
    let efficiency = combined.norm_squared() / held;
    if !(efficiency > 0.0) {
        return Err(Error::domain("nothing couples into the single mode"));
    }
    Ok((BiphotonPure::new(combined)?, efficiency))
}
