//! Birefringent crystal description, Sellmeier dispersion and walk-off.
//!
//! Angles are in degrees, wavelengths in nanometres, crystal lengths in
//! millimetres and transverse displacements in micrometres.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MATERIAL_DB: &str = include_str!("materials.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Material {
    #[serde(rename = "BBO")]
    Bbo,
    #[serde(rename = "KTP")]
    Ktp,
    #[serde(rename = "YVO4")]
    Yvo4,
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Material::Bbo => "BBO",
            Material::Ktp => "KTP",
            Material::Yvo4 => "YVO4",
        })
    }
}

impl FromStr for Material {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "BBO" => Ok(Material::Bbo),
            "KTP" => Ok(Material::Ktp),
            "YVO4" => Ok(Material::Yvo4),
            other => Err(Error::Material(format!("unknown material `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Ordinary,
    Extraordinary,
}

/// Four-term Sellmeier fit `n² = A + B/(λ² − C) − Dλ²`, λ in µm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SellmeierCoefficients {
    pub coefficients: [f64; 4],
    /// Evaluation window in nm, inclusive.
    pub window_nm: [f64; 2],
}

impl SellmeierCoefficients {
    pub fn index(&self, lambda_nm: f64) -> Result<f64> {
        let [lo, hi] = self.window_nm;
        if !(lambda_nm >= lo && lambda_nm <= hi) {
            return Err(Error::domain(format!(
                "wavelength {lambda_nm} nm outside Sellmeier window [{lo}, {hi}] nm"
            )));
        }
        let [a, b, c, d] = self.coefficients;
        let l2 = (lambda_nm * 1e-3).powi(2);
        let n2 = a + b / (l2 - c) - d * l2;
        if n2 <= 1.0 {
            return Err(Error::Numerical(format!(
                "Sellmeier evaluation gave n² = {n2} at {lambda_nm} nm"
            )));
        }
        Ok(n2.sqrt())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DbRecord {
    material: Material,
    axis: Axis,
    coefficients: [f64; 4],
    window_nm: [f64; 2],
    #[allow(dead_code)]
    source: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DbFile {
    version: u32,
    record: Vec<DbRecord>,
}

/// Immutable table of Sellmeier fits keyed by (material, axis).
#[derive(Debug, Clone)]
pub struct MaterialDb {
    version: u32,
    entries: BTreeMap<(Material, Axis), SellmeierCoefficients>,
}

impl MaterialDb {
    pub fn parse(text: &str) -> Result<Self> {
        let file: DbFile = toml::from_str(text).map_err(|e| Error::Material(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for rec in file.record {
            if rec.window_nm[0] >= rec.window_nm[1] {
                return Err(Error::Material(format!(
                    "{} {:?}: empty validity window",
                    rec.material, rec.axis
                )));
            }
            let prev = entries.insert(
                (rec.material, rec.axis),
                SellmeierCoefficients {
                    coefficients: rec.coefficients,
                    window_nm: rec.window_nm,
                },
            );
            if prev.is_some() {
                return Err(Error::Material(format!(
                    "duplicate record for {} {:?}",
                    rec.material, rec.axis
                )));
            }
        }
        Ok(MaterialDb {
            version: file.version,
            entries,
        })
    }

    /// The database compiled into the crate.
    pub fn builtin() -> &'static MaterialDb {
        static DB: OnceLock<MaterialDb> = OnceLock::new();
        DB.get_or_init(|| MaterialDb::parse(MATERIAL_DB).expect("builtin material database is valid"))
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn get(&self, material: Material, axis: Axis) -> Result<&SellmeierCoefficients> {
        self.entries
            .get(&(material, axis))
            .ok_or_else(|| Error::Material(format!("no {axis:?} record for {material}")))
    }
}

/// Per-axis Sellmeier data for a uniaxial crystal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SellmeierSet {
    pub ordinary: SellmeierCoefficients,
    pub extraordinary: SellmeierCoefficients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalSpec {
    pub material: Material,
    /// mm
    pub length: f64,
    /// Angle between propagation direction and optic axis, degrees.
    pub cut_angle: f64,
    pub sellmeier: SellmeierSet,
}

impl CrystalSpec {
    /// Builds a crystal from the builtin material database.
    pub fn new(material: Material, length_mm: f64, cut_angle_deg: f64) -> Result<Self> {
        Self::from_db(MaterialDb::builtin(), material, length_mm, cut_angle_deg)
    }

    pub fn from_db(
        db: &MaterialDb,
        material: Material,
        length_mm: f64,
        cut_angle_deg: f64,
    ) -> Result<Self> {
        if !(length_mm >= 0.0 && length_mm.is_finite()) {
            return Err(Error::field("combiner.length_mm", "must be finite and >= 0"));
        }
        if !(0.0..=90.0).contains(&cut_angle_deg) {
            return Err(Error::field("combiner.cut_angle_deg", "must lie in [0, 90]"));
        }
        Ok(CrystalSpec {
            material,
            length: length_mm,
            cut_angle: cut_angle_deg,
            sellmeier: SellmeierSet {
                ordinary: db.get(material, Axis::Ordinary)?.clone(),
                extraordinary: db.get(material, Axis::Extraordinary)?.clone(),
            },
        })
    }

    pub fn with_length(&self, length_mm: f64) -> Self {
        CrystalSpec {
            length: length_mm,
            ..self.clone()
        }
    }

    /// Principal indices `(n_o, n_e)` at `lambda_nm`.
    pub fn principal_indices(&self, lambda_nm: f64) -> Result<(f64, f64)> {
        Ok((
            sellmeier_index(self, Axis::Ordinary, lambda_nm)?,
            sellmeier_index(self, Axis::Extraordinary, lambda_nm)?,
        ))
    }

    /// Extraordinary index at the cut angle.
    pub fn index_at_cut(&self, lambda_nm: f64) -> Result<f64> {
        let (n_o, n_e) = self.principal_indices(lambda_nm)?;
        extraordinary_index(n_o, n_e, self.cut_angle)
    }
}

pub fn sellmeier_index(crystal: &CrystalSpec, axis: Axis, lambda_nm: f64) -> Result<f64> {
    match axis {
        Axis::Ordinary => crystal.sellmeier.ordinary.index(lambda_nm),
        Axis::Extraordinary => crystal.sellmeier.extraordinary.index(lambda_nm),
    }
}

fn check_uniaxial(n_o: f64, n_e: f64, theta_deg: f64) -> Result<()> {
    if !(n_o > 1.0 && n_e > 1.0) {
        return Err(Error::domain(format!(
            "principal indices must exceed 1 (n_o = {n_o}, n_e = {n_e})"
        )));
    }
    if !(0.0..=90.0).contains(&theta_deg) {
        return Err(Error::domain(format!("angle {theta_deg} deg outside [0, 90]")));
    }
    Ok(())
}

/// Index-ellipsoid extraordinary index: `1/n(θ)² = cos²θ/n_o² + sin²θ/n_e²`.
pub fn extraordinary_index(n_o: f64, n_e: f64, theta_deg: f64) -> Result<f64> {
    check_uniaxial(n_o, n_e, theta_deg)?;
    let (s, c) = theta_deg.to_radians().sin_cos();
    let inv = c * c / (n_o * n_o) + s * s / (n_e * n_e);
    let n = inv.sqrt().recip();
    // Rounding can push n a hair outside [min, max] at the endpoints.
    Ok(n.clamp(n_o.min(n_e), n_o.max(n_e)))
}

/// Poynting-vector walk-off angle in degrees.
///
/// Sign convention: positive for a negative uniaxial crystal (`n_e < n_o`),
/// meaning the extraordinary energy flow tilts away from the optic axis.
/// Positive uniaxial crystals return a negative angle. The sign depends only
/// on the material, never on wavelength.
pub fn walkoff_angle(n_o: f64, n_e: f64, theta_deg: f64) -> Result<f64> {
    let n = extraordinary_index(n_o, n_e, theta_deg)?;
    // sin(2θ) is not exactly zero at θ = 90° in floating point.
    if theta_deg == 0.0 || theta_deg == 90.0 {
        return Ok(0.0);
    }
    let theta = theta_deg.to_radians();
    let tan_rho = 0.5 * n * n * (1.0 / (n_e * n_e) - 1.0 / (n_o * n_o)) * (2.0 * theta).sin();
    Ok(tan_rho.atan().to_degrees())
}

/// Transverse walk-off displacement in µm after the full crystal length.
pub fn walkoff_displacement(crystal: &CrystalSpec, lambda_nm: f64) -> Result<f64> {
    let (n_o, n_e) = crystal.principal_indices(lambda_nm)?;
    let rho = walkoff_angle(n_o, n_e, crystal.cut_angle)?;
    Ok(crystal.length * 1e3 * rho.to_radians().tan())
}
