//! Polarization analysis and photon counting.
//!
//! Circular analyzers are a quarter-wave plate at 45° followed by a linear
//! polarizer; with the plate convention in [`crate::elements::qwp`] the
//! polarizer at 0° passes R = (H + iV)/√2 and at 90° passes L = (H − iV)/√2.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector2, Vector3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elements::qwp;
use crate::error::{Error, Result};
use crate::qstate::DensityMatrix;

/// Minimum number of points for the sinusoidal visibility fit.
pub const MIN_FIT_POINTS: usize = 8;

fn normalize_angle(deg: f64) -> f64 {
    let a = deg.rem_euclid(180.0);
    // rem_euclid can return exactly 180.0 for tiny negative inputs.
    if a >= 180.0 {
        0.0
    } else {
        a
    }
}

/// One arm's polarization analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Analyzer {
    /// Linear polarizer at `angle_deg` from horizontal, in [0, 180).
    Linear { angle_deg: f64 },
    /// Quarter-wave plate plus polarizer passing R (`right = true`) or L.
    Circular { right: bool },
    /// No analyzer; every photon passes.
    Open,
}

impl Analyzer {
    pub fn linear(angle_deg: f64) -> Self {
        Analyzer::Linear {
            angle_deg: normalize_angle(angle_deg),
        }
    }

    pub const H: Analyzer = Analyzer::Linear { angle_deg: 0.0 };
    pub const V: Analyzer = Analyzer::Linear { angle_deg: 90.0 };
    pub const D: Analyzer = Analyzer::Linear { angle_deg: 45.0 };
    pub const A: Analyzer = Analyzer::Linear { angle_deg: 135.0 };
    pub const R: Analyzer = Analyzer::Circular { right: true };
    pub const L: Analyzer = Analyzer::Circular { right: false };

    /// Jones vector of the passed polarization, or `None` for an open arm.
    pub fn pass_vector(&self) -> Option<Vector2<Complex64>> {
        match *self {
            Analyzer::Linear { angle_deg } => {
                let (s, c) = angle_deg.to_radians().sin_cos();
                Some(Vector2::new(Complex64::new(c, 0.0), Complex64::new(s, 0.0)))
            }
            Analyzer::Circular { right } => {
                let polarizer = if right {
                    Vector2::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
                } else {
                    Vector2::new(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
                };
                Some(qwp(45.0).matrix().adjoint() * polarizer)
            }
            Analyzer::Open => None,
        }
    }

    /// Single-photon POVM element for the "pass" outcome; `extinction` is
    /// the leakage of the blocked polarization.
    pub fn pass_operator(&self, extinction: f64) -> Matrix2<Complex64> {
        match self.pass_vector() {
            None => Matrix2::identity(),
            Some(v) => {
                let p = v * v.adjoint();
                let q = Matrix2::identity() - p;
                p * Complex64::new(1.0 - extinction, 0.0) + q * Complex64::new(extinction, 0.0)
            }
        }
    }

    /// Angle to report in CSV output; circular analyzers map to their
    /// polarizer angle, an open arm to NaN.
    pub fn angle_deg(&self) -> f64 {
        match *self {
            Analyzer::Linear { angle_deg } => angle_deg,
            Analyzer::Circular { right: true } => 0.0,
            Analyzer::Circular { right: false } => 90.0,
            Analyzer::Open => f64::NAN,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Analyzer::Linear { angle_deg } if angle_deg == 0.0 => "H".into(),
            Analyzer::Linear { angle_deg } if angle_deg == 90.0 => "V".into(),
            Analyzer::Linear { angle_deg } if angle_deg == 45.0 => "D".into(),
            Analyzer::Linear { angle_deg } if angle_deg == 135.0 => "A".into(),
            Analyzer::Linear { angle_deg } => format!("{angle_deg}"),
            Analyzer::Circular { right: true } => "R".into(),
            Analyzer::Circular { right: false } => "L".into(),
            Analyzer::Open => "O".into(),
        }
    }
}

impl fmt::Display for Analyzer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Analyzer {
    type Err = Error;

    /// Accepts H, V, D, A, R, L, O (open) or a linear angle in degrees.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "H" | "h" => Ok(Analyzer::H),
            "V" | "v" => Ok(Analyzer::V),
            "D" | "d" => Ok(Analyzer::D),
            "A" | "a" => Ok(Analyzer::A),
            "R" | "r" => Ok(Analyzer::R),
            "L" | "l" => Ok(Analyzer::L),
            "O" | "o" | "open" => Ok(Analyzer::Open),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|a| a.is_finite())
                .map(Analyzer::linear)
                .ok_or_else(|| Error::domain(format!("unknown analyzer setting `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisTag {
    HV,
    DA,
    RL,
}

impl fmt::Display for BasisTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisTag::HV => "HV",
            BasisTag::DA => "DA",
            BasisTag::RL => "RL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSetting {
    pub signal: Analyzer,
    pub idler: Analyzer,
    pub basis: Option<BasisTag>,
}

impl AnalyzerSetting {
    pub fn new(signal: Analyzer, idler: Analyzer) -> Self {
        AnalyzerSetting {
            signal,
            idler,
            basis: None,
        }
    }

    pub fn linear(signal_deg: f64, idler_deg: f64) -> Self {
        Self::new(Analyzer::linear(signal_deg), Analyzer::linear(idler_deg))
    }

    pub fn open() -> Self {
        Self::new(Analyzer::Open, Analyzer::Open)
    }

    pub fn with_basis(mut self, basis: BasisTag) -> Self {
        self.basis = Some(basis);
        self
    }

    /// Two-photon pass operator `P_s ⊗ P_i`.
    pub fn operator(&self, extinction: f64) -> Matrix4<Complex64> {
        self.signal
            .pass_operator(extinction)
            .kronecker(&self.idler.pass_operator(extinction))
    }
}

/// Analyzer and detector imperfections. Defaults are ideal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Leakage of the blocked polarization through each analyzer.
    pub extinction: f64,
    /// Transmission of each analyzer for its passed polarization.
    pub analyzer_transmission: f64,
    /// Coincidence window in seconds; 0 disables accidentals.
    pub tau_coinc_s: f64,
    /// Flat dark-count rates (signal, idler) in counts/s.
    pub dark_rate: (f64, f64),
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            extinction: 0.0,
            analyzer_transmission: 1.0,
            tau_coinc_s: 0.0,
            dark_rate: (0.0, 0.0),
        }
    }
}

impl DetectorModel {
    fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.extinction) {
            return Err(Error::domain("analyzer extinction must lie in [0, 0.5]"));
        }
        if !(0.0..=1.0).contains(&self.analyzer_transmission) {
            return Err(Error::domain("analyzer transmission must lie in [0, 1]"));
        }
        if !(self.tau_coinc_s >= 0.0 && self.dark_rate.0 >= 0.0 && self.dark_rate.1 >= 0.0) {
            return Err(Error::domain("coincidence window and dark rates must be >= 0"));
        }
        Ok(())
    }
}

/// `Tr(ρ · P_s ⊗ P_i)` with ideal analyzers.
pub fn coincidence_probability(rho: &DensityMatrix, setting: &AnalyzerSetting) -> f64 {
    coincidence_probability_with(rho, setting, 0.0)
}

pub fn coincidence_probability_with(rho: &DensityMatrix, setting: &AnalyzerSetting, extinction: f64) -> f64 {
    rho.expectation(&setting.operator(extinction)).clamp(0.0, 1.0)
}

fn marginal(rho: &DensityMatrix, analyzer: Analyzer, signal_arm: bool, extinction: f64) -> f64 {
    let setting = if signal_arm {
        AnalyzerSetting::new(analyzer, Analyzer::Open)
    } else {
        AnalyzerSetting::new(Analyzer::Open, analyzer)
    };
    coincidence_probability_with(rho, &setting, extinction)
}

/// One point of a correlation curve: idler angle (degrees) and probability.
pub type CurvePoint = (f64, f64);

pub fn correlation_scan(rho: &DensityMatrix, signal: Analyzer, idler_angles: &[f64]) -> Vec<CurvePoint> {
    idler_angles
        .iter()
        .map(|&a| {
            let setting = AnalyzerSetting::new(signal, Analyzer::linear(a));
            (a, coincidence_probability(rho, &setting))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VisibilityMethod {
    /// Least-squares fit of `A + B cos 2θ + C sin 2θ` when there are at
    /// least [`MIN_FIT_POINTS`] points, raw extrema otherwise.
    #[default]
    Fit,
    /// Always use the raw maximum and minimum.
    RawExtrema,
}

/// Fringe visibility `(max − min)/(max + min)` of a correlation curve.
pub fn visibility(curve: &[CurvePoint]) -> Result<f64> {
    visibility_with(curve, VisibilityMethod::Fit)
}

pub fn visibility_with(curve: &[CurvePoint], method: VisibilityMethod) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::domain("visibility of an empty curve"));
    }
    if curve.iter().all(|p| p.1 == 0.0) {
        return Err(Error::domain("visibility of an all-zero curve is undefined"));
    }
    if method == VisibilityMethod::Fit && curve.len() >= MIN_FIT_POINTS {
        let (offset, amplitude) = fit_fringe(curve)?;
        if !(offset > 0.0) {
            return Err(Error::Numerical("fitted fringe offset is not positive".into()));
        }
        return Ok((amplitude / offset).min(1.0));
    }
    let max = curve.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let min = curve.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(((max - min) / (max + min)).clamp(0.0, 1.0))
}

/// Least-squares `(A, √(B² + C²))` for `y = A + B cos 2θ + C sin 2θ`.
fn fit_fringe(curve: &[CurvePoint]) -> Result<(f64, f64)> {
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for &(deg, y) in curve {
        let t = 2.0 * deg.to_radians();
        let row = Vector3::new(1.0, t.cos(), t.sin());
        normal += row * row.transpose();
        rhs += row * y;
    }
    let coef = normal
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("fringe fit is singular; angles do not span a period".into()))?;
    Ok((coef[0], coef[1].hypot(coef[2])))
}

/// Counts for one analyzer setting over one integration window.
///
/// Counts are stored as reals so that expectation-valued records can be
/// represented; simulated records are always integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting: AnalyzerSetting,
    pub singles_s: f64,
    pub singles_i: f64,
    pub coincidences: f64,
    pub integration_s: f64,
}

/// Source rates feeding the counting model, in counts/s after detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateInputs {
    pub pair_rate: f64,
    pub singles: (f64, f64),
}

impl From<&crate::sources::SourceOutput> for RateInputs {
    fn from(out: &crate::sources::SourceOutput) -> Self {
        RateInputs {
            pair_rate: out.expected_pair_rate,
            singles: out.expected_singles,
        }
    }
}

/// Expected (noise-free) record for one setting.
pub fn expected_record(
    rho: &DensityMatrix,
    setting: &AnalyzerSetting,
    rates: RateInputs,
    integration_s: f64,
    model: &DetectorModel,
) -> Result<CountRecord> {
    if !(integration_s >= 0.0 && integration_s.is_finite()) {
        return Err(Error::domain(format!("integration time {integration_s} s must be >= 0")));
    }
    if !(rates.pair_rate >= 0.0 && rates.singles.0 >= rates.pair_rate && rates.singles.1 >= rates.pair_rate) {
        return Err(Error::domain("rates must satisfy 0 <= pair rate <= singles rates"));
    }
    model.validate()?;
    let t_s = if setting.signal == Analyzer::Open { 1.0 } else { model.analyzer_transmission };
    let t_i = if setting.idler == Analyzer::Open { 1.0 } else { model.analyzer_transmission };
    let p = coincidence_probability_with(rho, setting, model.extinction);
    let true_coinc = rates.pair_rate * p * t_s * t_i;
    let s_rate = rates.singles.0 * marginal(rho, setting.signal, true, model.extinction) * t_s + model.dark_rate.0;
    let i_rate = rates.singles.1 * marginal(rho, setting.idler, false, model.extinction) * t_i + model.dark_rate.1;
    let accidentals = s_rate * i_rate * model.tau_coinc_s;
    Ok(CountRecord {
        setting: *setting,
        singles_s: s_rate * integration_s,
        singles_i: i_rate * integration_s,
        coincidences: (true_coinc + accidentals) * integration_s,
        integration_s,
    })
}

fn poisson<R: rand::Rng>(mean: f64, rng: &mut R) -> Result<f64> {
    if mean <= 0.0 {
        return Ok(0.0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::Numerical(format!("Poisson({mean}): {e}")))?;
    Ok(d.sample(rng))
}

/// Poisson-sampled records, one per setting.
///
/// Setting `k` draws from its own ChaCha stream `(seed, k)`, so records are
/// bit-identical for a given seed regardless of thread scheduling.
/// True coincidences are shared with both singles counts, so
/// `coincidences ≤ singles` except when accidentals push past it.
pub fn simulate_counts(
    rho: &DensityMatrix,
    settings: &[AnalyzerSetting],
    rates: RateInputs,
    integration_s: f64,
    seed: u64,
    model: &DetectorModel,
) -> Result<Vec<CountRecord>> {
    if !(integration_s >= 0.0) {
        return Err(Error::domain(format!("integration time {integration_s} s must be >= 0")));
    }
    settings
        .par_iter()
        .enumerate()
        .map(|(k, setting)| {
            let exp_rec = expected_record(rho, setting, rates, integration_s, model)?;
            let t_s = if setting.signal == Analyzer::Open { 1.0 } else { model.analyzer_transmission };
            let t_i = if setting.idler == Analyzer::Open { 1.0 } else { model.analyzer_transmission };
            let true_mean =
                rates.pair_rate * coincidence_probability_with(rho, setting, model.extinction) * t_s * t_i * integration_s;
            let acc_mean = exp_rec.coincidences - true_mean;

            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let pairs = poisson(true_mean, &mut rng)?;
            let extra_s = poisson((exp_rec.singles_s - true_mean).max(0.0), &mut rng)?;
            let extra_i = poisson((exp_rec.singles_i - true_mean).max(0.0), &mut rng)?;
            let accidentals = poisson(acc_mean.max(0.0), &mut rng)?;
            Ok(CountRecord {
                setting: *setting,
                singles_s: pairs + extra_s,
                singles_i: pairs + extra_i,
                coincidences: pairs + accidentals,
                integration_s,
            })
        })
        .collect()
}

/// Pair-to-singles ratios `(C/S_signal, C/S_idler)` summed over records.
///
/// With open analyzers and no accidentals, `C/S_signal` estimates the total
/// efficiency of the idler arm and vice versa.
pub fn klyshko_ratios(records: &[CountRecord]) -> Result<(f64, f64)> {
    let c: f64 = records.iter().map(|r| r.coincidences).sum();
    let s: f64 = records.iter().map(|r| r.singles_s).sum();
    let i: f64 = records.iter().map(|r| r.singles_i).sum();
    klyshko_from_rates(c, (s, i))
}

pub fn klyshko_from_rates(pair_rate: f64, singles: (f64, f64)) -> Result<(f64, f64)> {
    if !(singles.0 > 0.0 && singles.1 > 0.0) {
        return Err(Error::domain("pair-to-singles ratio needs nonzero singles"));
    }
    Ok((pair_rate / singles.0, pair_rate / singles.1))
}

/// Visibilities of the four standard correlation curves (signal fixed at H,
/// V, D, A; idler swept over `idler_angles`), returned as
/// `(mean over H and V, mean over D and A)`.
pub fn hv_da_visibility(rho: &DensityMatrix, idler_angles: &[f64]) -> Result<(f64, f64)> {
    let v = |a: Analyzer| visibility(&correlation_scan(rho, a, idler_angles));
    let hv = 0.5 * (v(Analyzer::H)? + v(Analyzer::V)?);
    let da = 0.5 * (v(Analyzer::D)? + v(Analyzer::A)?);
    Ok((hv, da))
}

/// Evenly spaced angles over [0, 180) with the given step.
pub fn angle_grid(step_deg: f64) -> Vec<f64> {
    let n = (180.0 / step_deg).round() as usize;
    (0..n).map(|k| k as f64 * step_deg).collect()
}
