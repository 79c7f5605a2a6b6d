//! Transverse overlap integrals for the compact walk-off source.
//!
//! Coordinates are in µm across the crystal face, with the pump centred at 0.
//! The pair amplitude born at `x` follows the pump field `exp(−x²/w_p²)`; a
//! pair is accepted by the collection mode centred at `c` with amplitude
//! `exp(−2(x − c)²/w_c²)` (one Gaussian factor per photon).

use std::f64::consts::PI;

/// `∫_a^b exp(−2(x−c)²/w_c² − x²/w_p²) dx`, with infinite limits allowed.
pub(crate) fn collected_amplitude(c: f64, w_c: f64, w_p: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let alpha = 2.0 / (w_c * w_c) + 1.0 / (w_p * w_p);
    let beta = 4.0 * c / (w_c * w_c);
    let gamma = -2.0 * c * c / (w_c * w_c);
    let mu = beta / (2.0 * alpha);
    let peak = (beta * beta / (4.0 * alpha) + gamma).exp();
    let s = alpha.sqrt();
    let erf_at = |x: f64| {
        if x == f64::INFINITY {
            1.0
        } else if x == f64::NEG_INFINITY {
            -1.0
        } else {
            libm::erf(s * (x - mu))
        }
    };
    peak * 0.5 * (PI / alpha).sqrt() * (erf_at(b) - erf_at(a))
}

/// Collected amplitudes of the two bins for one walk-off displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CompactOverlap {
    /// Rotated bin (x > split), extraordinary, seen through the displaced mode.
    pub x1: f64,
    /// Unrotated bin (x < split), ordinary.
    pub x2: f64,
    /// Single-spot, unsplit reference.
    pub reference: f64,
}

impl CompactOverlap {
    /// Collection is aligned for the design point where the displacement is
    /// half the pump waist: the ordinary spot sits at `−w_p/4`, so the
    /// extraordinary spot lands at `+w_p/4` when `d = w_p/2`.
    pub fn new(
        displacement: f64,
        pump_waist: f64,
        collection_waist: f64,
        split: f64,
        strip_width: f64,
    ) -> Self {
        let c_ordinary = -pump_waist / 4.0;
        let c_extra = c_ordinary + displacement;
        let half = strip_width / 2.0;
        CompactOverlap {
            x1: collected_amplitude(c_extra, collection_waist, pump_waist, split + half, f64::INFINITY),
            x2: collected_amplitude(c_ordinary, collection_waist, pump_waist, f64::NEG_INFINITY, split - half),
            reference: collected_amplitude(
                c_ordinary,
                collection_waist,
                pump_waist,
                f64::NEG_INFINITY,
                f64::INFINITY,
            ),
        }
    }

    /// Pair collection relative to two full, unsplit spots.
    pub fn geometric_factor(&self) -> f64 {
        (self.x1 * self.x1 + self.x2 * self.x2) / (2.0 * self.reference * self.reference)
    }

    /// Rotated-bin amplitude relative to the unrotated bin.
    pub fn walkoff_overlap(&self) -> f64 {
        if self.x2 > 0.0 {
            self.x1 / self.x2
        } else {
            0.0
        }
    }
}
