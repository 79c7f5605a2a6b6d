use std::path::Path;

use poscorr::detect::{
    angle_grid, correlation_scan, klyshko_from_rates, klyshko_ratios, simulate_counts, visibility, Analyzer,
    AnalyzerSetting, BasisTag, CountRecord, CurvePoint, DetectorModel, RateInputs,
};
use poscorr::qstate::{bell_state, BellKind, DensityMatrixRecord};
use poscorr::sources::{run_source, scan, SourceConfig, SourceKind};
use poscorr::spectra::{birefringent_pair_phase, idler_wavelength, mz_phase, psi_phase, SpectralMode};
use poscorr::tomo::{
    mle_reconstruct, standard_settings, tomography_report, FidelityEstimates, MleOptions, SettingsKind,
    TomographySettings,
};
use serde_json::{json, Value};

use crate::args::Command;
use crate::output::{format_number, sha256_hex, OutputDir, RunManifest};
use crate::{require_config, resolve_config, CliError};

const COUNTS_HEADER: [&str; 6] = ["setting_s", "setting_i", "singles_s", "singles_i", "coincidences", "integration_s"];

pub(crate) fn dispatch(command: &Command) -> Result<RunManifest, CliError> {
    let common = command.common();
    let mut out = OutputDir::create(&common.out)?;
    let seed = common.seed;
    let (digest, source) = match command {
        Command::Simulate { .. } => {
            let (cfg, src) = require_config(common)?;
            simulate(&cfg, &mut out)?;
            (config_digest(&cfg, &[])?, src)
        }
        Command::Correlate {
            step_deg,
            integration_s,
            ..
        } => {
            let (cfg, src) = require_config(common)?;
            correlate(&cfg, *step_deg, *integration_s, seed, &mut out)?;
            (config_digest(&cfg, &[])?, src)
        }
        Command::Tomography {
            counts,
            settings,
            pairs,
            target,
            max_iterations,
            ..
        } => {
            let cfg = resolve_config(common)?;
            let options = TomographyOptions {
                settings: *settings,
                pairs: *pairs,
                target: *target,
                max_iterations: *max_iterations,
            };
            match counts {
                Some(path) => {
                    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
                    let records = parse_counts(path, &bytes)?;
                    tomography(cfg.as_ref().map(|c| &c.0), Some(records), &options, seed, &mut out)?;
                    let digest = match &cfg {
                        Some((c, _)) => config_digest(c, &bytes)?,
                        None => sha256_hex(&[&bytes]),
                    };
                    let src = match cfg {
                        Some((_, s)) => format!("{s}+counts:{}", path.display()),
                        None => format!("counts:{}", path.display()),
                    };
                    (digest, src)
                }
                None => {
                    let (c, src) = cfg.ok_or_else(|| {
                        CliError::Usage("tomography needs --counts or a source config to simulate from".into())
                    })?;
                    tomography(Some(&c), None, &options, seed, &mut out)?;
                    (config_digest(&c, &[])?, src)
                }
            }
        }
        Command::PhaseScan { from, to, points, .. } => {
            let (cfg, src) = require_config(common)?;
            phase_scan(&cfg, *from, *to, *points, &mut out)?;
            (config_digest(&cfg, &[])?, src)
        }
        Command::DeltaLScan { from, to, points, .. } => {
            let (cfg, src) = require_config(common)?;
            delta_l_scan(&cfg, *from, *to, *points, &mut out)?;
            (config_digest(&cfg, &[])?, src)
        }
        Command::Rates { integration_s, .. } => {
            let (cfg, src) = require_config(common)?;
            rates(&cfg, *integration_s, seed, &mut out)?;
            (config_digest(&cfg, &[])?, src)
        }
    };
    let manifest = RunManifest {
        config_digest: digest,
        config_source: source,
        seed,
        subcommand: command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        files: out.files(),
    };
    let text = crate::output::to_canonical_json(&manifest)?;
    let path = out.path("manifest.json");
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

/// Digest over the canonical TOML rendering, so formatting and comments in
/// the input file do not change it.
fn config_digest(cfg: &SourceConfig, extra: &[u8]) -> Result<String, CliError> {
    let canonical = cfg.to_toml_string()?;
    Ok(sha256_hex(&[canonical.as_bytes(), extra]))
}

fn linspace(from: f64, to: f64, points: usize) -> Result<Vec<f64>, CliError> {
    if points < 2 || !from.is_finite() || !to.is_finite() {
        return Err(CliError::Usage("a scan needs finite bounds and at least 2 points".into()));
    }
    let step = (to - from) / (points - 1) as f64;
    Ok((0..points)
        .map(|k| if k == points - 1 { to } else { from + k as f64 * step })
        .collect())
}

fn simulate(cfg: &SourceConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let src = run_source(cfg)?;
    let d = |name: &str| src.diagnostic(name).unwrap_or(f64::NAN);
    let state = json!({
        "kind": cfg.kind.to_string(),
        "target": cfg.target_bell(),
        "rho": DensityMatrixRecord::from(&src.rho),
        "fidelity": d("fidelity_target"),
        "purity": d("purity"),
        "concurrence": d("concurrence"),
        "coherence_visibility": d("coherence_visibility"),
        "expected_pair_rate": src.expected_pair_rate,
        "expected_singles": {"signal": src.expected_singles.0, "idler": src.expected_singles.1},
        "diagnostics": src.diagnostics,
    });
    out.write_json("state.json", &state)
}

fn correlate(
    cfg: &SourceConfig,
    step_deg: f64,
    integration_s: f64,
    seed: u64,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    if !(step_deg > 0.0 && step_deg <= 90.0) {
        return Err(CliError::Usage("--step-deg must lie in (0, 90]".into()));
    }
    let src = run_source(cfg)?;
    let angles = angle_grid(step_deg);
    let curves = [
        (BasisTag::HV, Analyzer::H),
        (BasisTag::HV, Analyzer::V),
        (BasisTag::DA, Analyzer::D),
        (BasisTag::DA, Analyzer::A),
    ];
    let settings: Vec<AnalyzerSetting> = curves
        .iter()
        .flat_map(|&(basis, signal)| {
            angles
                .iter()
                .map(move |&a| AnalyzerSetting::new(signal, Analyzer::linear(a)).with_basis(basis))
        })
        .collect();
    let records = simulate_counts(
        &src.rho,
        &settings,
        RateInputs::from(&src),
        integration_s,
        seed,
        &DetectorModel::default(),
    )?;

    let mut rows = Vec::with_capacity(records.len());
    let mut summaries = Vec::new();
    let mut sum_expected = 0.0;
    let mut sum_counts = 0.0;
    let mut counts_ok = true;
    for (c, &(basis, signal)) in curves.iter().enumerate() {
        let expected = correlation_scan(&src.rho, signal, &angles);
        let recs = &records[c * angles.len()..(c + 1) * angles.len()];
        let counted: Vec<CurvePoint> = recs.iter().map(|r| (r.setting.idler.angle_deg(), r.coincidences)).collect();
        for (p, r) in expected.iter().zip(recs) {
            rows.push(vec![
                basis.to_string(),
                format_number(signal.angle_deg()),
                format_number(p.0),
                format_number(p.1),
                format_number(r.coincidences),
                format_number(r.singles_s),
                format_number(r.singles_i),
            ]);
        }
        let v_expected = visibility(&expected)?;
        let v_counts = visibility(&counted).ok();
        sum_expected += v_expected;
        match v_counts {
            Some(v) => sum_counts += v,
            None => counts_ok = false,
        }
        summaries.push(json!({
            "basis": basis.to_string(),
            "signal": signal.label(),
            "visibility_expected": v_expected,
            "visibility_counts": v_counts,
        }));
    }
    out.write_csv(
        "correlation.csv",
        &["basis", "signal_angle_deg", "idler_angle_deg", "probability", "coincidences", "singles_s", "singles_i"],
        &rows,
    )?;
    let mean_expected = sum_expected / curves.len() as f64;
    let mean_counts = counts_ok.then(|| sum_counts / curves.len() as f64);
    let summary = json!({
        "curves": summaries,
        "mean_visibility_expected": mean_expected,
        "mean_visibility_counts": mean_counts,
        "fidelity_direct": src.diagnostic("fidelity_target"),
        "fidelity_estimates": FidelityEstimates::from_visibility(mean_expected),
        "integration_s": integration_s,
    });
    out.write_json("visibility.json", &summary)
}

struct TomographyOptions {
    settings: usize,
    pairs: f64,
    target: Option<BellKind>,
    max_iterations: usize,
}

fn parse_counts(path: &Path, bytes: &[u8]) -> Result<Vec<CountRecord>, CliError> {
    let err = |reason: String| CliError::Counts {
        path: path.display().to_string(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = reader.headers().map_err(|e| err(e.to_string()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| err(format!("missing column `{name}`")))
    };
    let idx: Vec<usize> = COUNTS_HEADER.iter().map(|c| column(c)).collect::<Result<_, _>>()?;
    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| err(e.to_string()))?;
        let cell = |k: usize| row.get(idx[k]).unwrap_or("");
        let number = |k: usize| -> Result<f64, CliError> {
            cell(k)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| err(format!("row {}: `{}` is not a count >= 0", line + 1, cell(k))))
        };
        let analyzer = |k: usize| -> Result<Analyzer, CliError> {
            cell(k).parse().map_err(|e: poscorr::Error| err(format!("row {}: {e}", line + 1)))
        };
        records.push(CountRecord {
            setting: AnalyzerSetting::new(analyzer(0)?, analyzer(1)?),
            singles_s: number(2)?,
            singles_i: number(3)?,
            coincidences: number(4)?,
            integration_s: number(5)?,
        });
    }
    if records.is_empty() {
        return Err(err("no records".into()));
    }
    Ok(records)
}

fn counts_rows(records: &[CountRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| {
            vec![
                r.setting.signal.label(),
                r.setting.idler.label(),
                format_number(r.singles_s),
                format_number(r.singles_i),
                format_number(r.coincidences),
                format_number(r.integration_s),
            ]
        })
        .collect()
}

fn tomography(
    cfg: Option<&SourceConfig>,
    records: Option<Vec<CountRecord>>,
    options: &TomographyOptions,
    seed: u64,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let target = options
        .target
        .or_else(|| cfg.map(|c| c.target_bell()))
        .unwrap_or(BellKind::PhiPlus);
    let (records, settings) = match records {
        Some(records) => {
            let settings = TomographySettings::from_records(&records)?;
            (records, settings)
        }
        None => {
            let cfg = cfg.ok_or_else(|| CliError::Usage("no source config to simulate from".into()))?;
            let kind = SettingsKind::from_count(options.settings)?;
            if !(options.pairs > 0.0 && options.pairs.is_finite()) {
                return Err(CliError::Usage("--pairs must be finite and > 0".into()));
            }
            let settings = standard_settings(kind);
            let src = run_source(cfg)?;
            if !(src.expected_pair_rate > 0.0) {
                return Err(CliError::Core(poscorr::Error::Domain(
                    "source has zero pair rate; nothing to simulate".into(),
                )));
            }
            // Each analyzer basis pair (four settings) sees the same pair budget.
            let budget = 4.0 * options.pairs / settings.len() as f64;
            let scale = budget / src.expected_pair_rate;
            let rates = RateInputs {
                pair_rate: budget,
                singles: (src.expected_singles.0 * scale, src.expected_singles.1 * scale),
            };
            let records =
                simulate_counts(&src.rho, settings.settings(), rates, 1.0, seed, &DetectorModel::default())?;
            out.write_csv("counts.csv", &COUNTS_HEADER, &counts_rows(&records))?;
            (records, settings)
        }
    };
    let mle = MleOptions {
        max_iterations: options.max_iterations,
        target: bell_state(target),
        ..Default::default()
    };
    let result = mle_reconstruct(&records, &settings, &mle)?;
    if !result.converged {
        log::warn!("maximum-likelihood fit stopped at the iteration cap");
    }
    let report = tomography_report(&result, &bell_state(target))?;
    let mut value = serde_json::to_value(&report).map_err(|e| CliError::Output(e.to_string()))?;
    if let Value::Object(map) = &mut value {
        map.insert("target".into(), json!(target));
        map.insert("settings".into(), json!(settings.len()));
        map.insert(
            "total_coincidences".into(),
            json!(records.iter().map(|r| r.coincidences).sum::<f64>()),
        );
    }
    out.write_json("tomography.json", &value)
}

fn phase_scan(
    cfg: &SourceConfig,
    from: Option<f64>,
    to: Option<f64>,
    points: usize,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let s = &cfg.spectrum;
    let half = s.span_fwhm * s.fwhm_s_nm;
    let grid = linspace(from.unwrap_or(s.center_s_nm - half), to.unwrap_or(s.center_s_nm + half), points)?;
    let mode = |lambda_s: f64| -> Result<SpectralMode, CliError> {
        Ok(SpectralMode {
            lambda_s,
            lambda_i: idler_wavelength(cfg.lambda_p_nm, lambda_s)?,
            weight: 1.0,
        })
    };
    let crystal = match cfg.kind {
        SourceKind::Compact => Some(cfg.combiner_crystal()?),
        _ => None,
    };
    let phase = |m: &SpectralMode| -> Result<f64, CliError> {
        Ok(match cfg.kind {
            SourceKind::Interferometer => mz_phase(cfg.delta_l_um, m),
            SourceKind::Psi2f => psi_phase(cfg.delta_l_um, m),
            SourceKind::Compact => birefringent_pair_phase(crystal.as_ref().expect("compact crystal"), m)?,
        })
    };
    let reference = phase(&mode(s.center_s_nm)?)?;
    let mut rows = Vec::with_capacity(grid.len());
    for lambda_s in grid {
        let p = phase(&mode(lambda_s)?)? - reference;
        rows.push(vec![format_number(cfg.lambda_p_nm), format_number(lambda_s), format_number(p)]);
    }
    out.write_csv("phase_scan.csv", &["lambda_p_nm", "lambda_s_nm", "phase_rad"], &rows)
}

fn delta_l_scan(cfg: &SourceConfig, from: f64, to: f64, points: usize, out: &mut OutputDir) -> Result<(), CliError> {
    let values = linspace(from, to, points)?;
    let results = scan(cfg, "delta_l_um", &values, cfg.kind)?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|(v, o)| {
            let d = |n: &str| format_number(o.diagnostic(n).unwrap_or(f64::NAN));
            vec![format_number(*v), d("coherence_visibility"), d("fidelity_target"), d("concurrence")]
        })
        .collect();
    out.write_csv("delta_l_scan.csv", &["delta_l_um", "visibility", "fidelity", "concurrence"], &rows)
}

/// `√(r(1 − r)/S)`: binomial spread of a pair-to-singles ratio.
fn ratio_sigma(ratio: f64, singles: f64) -> f64 {
    if singles > 0.0 {
        (ratio * (1.0 - ratio) / singles).max(0.0).sqrt()
    } else {
        f64::NAN
    }
}

fn rates(cfg: &SourceConfig, integration_s: f64, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let src = run_source(cfg)?;
    let expected = klyshko_from_rates(src.expected_pair_rate, src.expected_singles)?;
    let records = simulate_counts(
        &src.rho,
        &[AnalyzerSetting::open()],
        RateInputs::from(&src),
        integration_s,
        seed,
        &DetectorModel::default(),
    )?;
    let r = &records[0];
    let simulated = klyshko_ratios(&records).ok();
    let factors: serde_json::Map<String, Value> = src.rate_factors().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let summary = json!({
        "kind": cfg.kind.to_string(),
        "generated_pair_rate": cfg.pair_rate_per_mw * cfg.pump_power_mw,
        "expected_pair_rate": src.expected_pair_rate,
        "expected_singles": {"signal": src.expected_singles.0, "idler": src.expected_singles.1},
        "pair_rate_per_mw": if cfg.pump_power_mw > 0.0 { src.expected_pair_rate / cfg.pump_power_mw } else { f64::NAN },
        "factors": factors,
        "klyshko_expected": {"signal": expected.0, "idler": expected.1},
        "klyshko_simulated": simulated.map(|(s, i)| json!({
            "signal": s,
            "idler": i,
            "signal_sigma": ratio_sigma(s, r.singles_s),
            "idler_sigma": ratio_sigma(i, r.singles_i),
        })),
        "counts": {
            "coincidences": r.coincidences,
            "singles_s": r.singles_s,
            "singles_i": r.singles_i,
            "integration_s": r.integration_s,
        },
    });
    out.write_json("rates.json", &summary)
}
