//! Values frozen from an independent scalar reimplementation of the
//! dispersion formulas, plus brute-force spectral integrals.

use std::f64::consts::TAU;

use poscorr::sources::{preset, run_source, scan, SourceKind};
use poscorr::spectra::{
    birefringent_pair_phase, extraordinary_index, idler_wavelength, psi_phase, walkoff_angle, walkoff_displacement,
    Axis, CrystalSpec, Material, SpectralMode,
};

fn bbo() -> CrystalSpec {
    CrystalSpec::new(Material::Bbo, 4.0, 28.8).unwrap()
}

fn mode(lambda_s: f64, lambda_i: f64) -> SpectralMode {
    SpectralMode {
        lambda_s,
        lambda_i,
        weight: 1.0,
    }
}

#[test]
fn bbo_principal_indices() {
    let c = bbo();
    let cases = [
        (405.0, 1.69188689597686, 1.5671241459050829),
        (810.0, 1.6602583173171748, 1.5441811980421354),
    ];
    for (lambda, n_o, n_e) in cases {
        let o = poscorr::spectra::sellmeier_index(&c, Axis::Ordinary, lambda).unwrap();
        let e = poscorr::spectra::sellmeier_index(&c, Axis::Extraordinary, lambda).unwrap();
        assert!((o - n_o).abs() < 1e-12, "{lambda}: {o}");
        assert!((e - n_e).abs() < 1e-12, "{lambda}: {e}");
    }
}

#[test]
fn index_ellipsoid_value() {
    let n = extraordinary_index(1.6614, 1.5462, 28.8).unwrap();
    assert!((n - 1.6323798730265549).abs() < 1e-12);
}

#[test]
fn walkoff_across_band() {
    let c = bbo();
    let cases = [(792.0, 3.63865, 254.368), (810.0, 3.63645, 254.213), (829.0, 3.63439, 254.069)];
    for (lambda, rho_deg, d_um) in cases {
        let (n_o, n_e) = c.principal_indices(lambda).unwrap();
        let rho = walkoff_angle(n_o, n_e, 28.8).unwrap();
        assert!((rho - rho_deg).abs() < 1e-5, "{lambda}: {rho}");
        let d = walkoff_displacement(&c, lambda).unwrap();
        assert!((d - d_um).abs() < 1e-3, "{lambda}: {d}");
    }
}

#[test]
fn idler_for_792_signal() {
    let li = idler_wavelength(405.0, 792.0).unwrap();
    assert!((li - 828.8372093023257).abs() < 1e-9);
    assert!((li - 829.0).abs() < 0.2);
}

#[test]
fn combiner_phase_absolute_and_chromatic() {
    let c = bbo();
    let li = idler_wavelength(405.0, 792.0).unwrap();
    let centre = birefringent_pair_phase(&c, &mode(792.0, li)).unwrap();
    assert!((centre - 1815.9365480319768).abs() < 1e-8);
    let rounded = birefringent_pair_phase(&c, &mode(792.0, 829.0)).unwrap();
    assert!((rounded - 1815.7559705914691).abs() < 1e-8);
    for (ls, rel) in [(787.0, 0.05169), (797.0, -0.03835)] {
        let m = mode(ls, idler_wavelength(405.0, ls).unwrap());
        let p = birefringent_pair_phase(&c, &m).unwrap() - centre;
        assert!((p - rel).abs() < 1e-5, "{ls}: {p}");
    }
}

#[test]
fn psi_phase_value() {
    assert!((psi_phase(20.0, &mode(792.0, 829.0)) - 7.081607887245336).abs() < 1e-12);
}

/// `|∫ g(λ) e^{iφ(λ)} dλ| / ∫ g` on a grid far finer than the source's.
fn brute_force_psi_visibility(delta_l_um: f64, center: f64, fwhm: f64) -> f64 {
    let sigma = fwhm / (8.0 * std::f64::consts::LN_2).sqrt();
    let n = 20_001;
    let half = 8.0 * sigma;
    let (mut re, mut im, mut norm) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let ls = center - half + 2.0 * half * k as f64 / (n - 1) as f64;
        let li = 1.0 / (1.0 / 405.0 - 1.0 / ls);
        let g = (-0.5 * ((ls - center) / sigma).powi(2)).exp();
        let phi = TAU * delta_l_um * 1e3 * (1.0 / ls - 1.0 / li);
        re += g * phi.cos();
        im += g * phi.sin();
        norm += g;
    }
    re.hypot(im) / norm
}

#[test]
fn psi_dephasing_matches_brute_force_integral() {
    let cfg = preset("psi-2f").unwrap();
    let values: Vec<f64> = (0..=10).map(|k| 10.0 * k as f64).collect();
    let results = scan(&cfg, "delta_l_um", &values, SourceKind::Psi2f).unwrap();
    for (dl, out) in &results {
        let v = out.diagnostic("coherence_visibility").unwrap();
        let oracle = brute_force_psi_visibility(*dl, 792.0, 2.0);
        assert!((v - oracle).abs() < 2e-3, "ΔL {dl}: {v} vs {oracle}");
    }
    // Thresholds from the oracle itself.
    assert!(brute_force_psi_visibility(20.0, 792.0, 2.0) >= 0.90);
    assert!(brute_force_psi_visibility(100.0, 792.0, 2.0) <= 0.5);
}

#[test]
fn compact_walkoff_is_half_the_pump_width_scale() {
    let out = run_source(&preset("fig2-compact").unwrap()).unwrap();
    let d = out.diagnostic("walkoff_displacement_um").unwrap();
    assert!((150.0..=300.0).contains(&d), "{d}");
}
