//! Maximum-likelihood reconstruction over physical states.
//!
//! `ρ = T†T / Tr(T†T)` with `T` lower-triangular and a real diagonal, which
//! gives 16 real parameters: the four diagonal entries, then the real and
//! imaginary parts of the six entries below the diagonal. The unnormalized
//! `T†T` also carries the overall count rate, so the likelihood is a plain
//! Poisson likelihood with no constraint.

use nalgebra::{Cholesky, DMatrix, DVector, Matrix4};
use num_complex::Complex64;

use super::{linear_inversion, TomographySettings};
use crate::detect::CountRecord;
use crate::error::{Error, Result};
use crate::qstate::{bell_state, concurrence, fidelity, project_psd, purity, BellKind, BiphotonPure, DensityMatrix};

const N_PARAMS: usize = 16;
const LOWER: [(usize, usize); 6] = [(1, 0), (2, 0), (3, 0), (2, 1), (3, 1), (3, 2)];
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;
/// Weight of the maximally mixed state blended into the initial guess, so the
/// Cholesky factor exists for rank-deficient starts.
const INIT_BLEND: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Stop when one step improves the per-count log-likelihood by less.
    pub tol_improvement: f64,
    /// Stop when the per-count gradient norm drops below this.
    pub tol_gradient: f64,
    /// Starting state; defaults to the PSD-projected linear inversion.
    pub init: Option<DensityMatrix>,
    pub target: BiphotonPure,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            max_iterations: 10_000,
            tol_improvement: 1e-10,
            tol_gradient: 1e-8,
            init: None,
            target: bell_state(BellKind::PhiPlus),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TomographyResult {
    pub rho_est: DensityMatrix,
    pub fidelity_to_target: f64,
    pub purity: f64,
    pub concurrence: f64,
    /// `Σ_k C_k ln λ_k − λ_k` at the returned state, without the `ln C_k!` term.
    pub log_likelihood: f64,
    /// Log-likelihood after the initial point and after every accepted step.
    pub log_likelihood_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Problem {
    projectors: Vec<Matrix4<Complex64>>,
    counts: Vec<f64>,
    /// `s·τ_k`; `s` puts the initial `T†T` at unit trace.
    exposure: Vec<f64>,
    total: f64,
}

fn t_from_params(p: &DVector<f64>) -> Matrix4<Complex64> {
    let mut t = Matrix4::<Complex64>::zeros();
    for i in 0..4 {
        t[(i, i)] = Complex64::new(p[i], 0.0);
    }
    for (k, &(i, j)) in LOWER.iter().enumerate() {
        t[(i, j)] = Complex64::new(p[4 + 2 * k], p[5 + 2 * k]);
    }
    t
}

fn params_from_t(t: &Matrix4<Complex64>) -> DVector<f64> {
    let mut p = DVector::zeros(N_PARAMS);
    for i in 0..4 {
        p[i] = t[(i, i)].re;
    }
    for (k, &(i, j)) in LOWER.iter().enumerate() {
        p[4 + 2 * k] = t[(i, j)].re;
        p[5 + 2 * k] = t[(i, j)].im;
    }
    p
}

/// Lower-triangular `T` with `T†T = m`, via the Cholesky factor of the
/// index-reversed matrix. Phases are rotated so the diagonal is real.
fn factor(m: &Matrix4<Complex64>) -> Result<Matrix4<Complex64>> {
    let rev = Matrix4::from_fn(|r, c| m[(3 - r, 3 - c)]);
    let l = Cholesky::new(rev)
        .ok_or_else(|| Error::Numerical("initial state is not positive definite".into()))?
        .l();
    let lh = l.adjoint();
    Ok(Matrix4::from_fn(|r, c| lh[(3 - r, 3 - c)]))
}

impl Problem {
    fn lambdas(&self, t: &Matrix4<Complex64>) -> Vec<f64> {
        let m = t.adjoint() * t;
        self.projectors
            .iter()
            .zip(&self.exposure)
            .map(|(p, e)| e * (p * m).trace().re)
            .collect()
    }

    /// Unnormalized log-likelihood.
    fn log_likelihood(&self, t: &Matrix4<Complex64>) -> f64 {
        let mut ll = 0.0;
        for (lam, &c) in self.lambdas(t).into_iter().zip(&self.counts) {
            if c > 0.0 {
                if lam <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                ll += c * lam.ln();
            }
            ll -= lam;
        }
        ll
    }

    /// Per-count objective and gradient in parameter space.
    fn objective(&self, p: &DVector<f64>) -> (f64, DVector<f64>) {
        let t = t_from_params(p);
        let lambdas = self.lambdas(&t);
        let mut ll = 0.0;
        let mut g = Matrix4::<Complex64>::zeros();
        for k in 0..self.counts.len() {
            let (lam, c) = (lambdas[k], self.counts[k]);
            if c > 0.0 {
                if lam <= 0.0 {
                    return (f64::NEG_INFINITY, DVector::zeros(N_PARAMS));
                }
                ll += c * lam.ln();
            }
            ll -= lam;
            let w = if c > 0.0 { c / lam - 1.0 } else { -1.0 };
            g += t * self.projectors[k] * Complex64::new(w * self.exposure[k], 0.0);
        }
        let mut grad = DVector::zeros(N_PARAMS);
        for i in 0..4 {
            grad[i] = 2.0 * g[(i, i)].re;
        }
        for (k, &(i, j)) in LOWER.iter().enumerate() {
            grad[4 + 2 * k] = 2.0 * g[(i, j)].re;
            grad[5 + 2 * k] = 2.0 * g[(i, j)].im;
        }
        (ll / self.total, grad / self.total)
    }
}

/// Maximizes the Poisson log-likelihood with BFGS and Armijo backtracking.
///
/// Only improving steps are accepted, so the recorded log-likelihood history
/// is non-decreasing. Hitting `max_iterations` returns the best iterate with
/// `converged = false`.
pub fn mle_reconstruct(
    records: &[CountRecord],
    settings: &TomographySettings,
    options: &MleOptions,
) -> Result<TomographyResult> {
    let init = match &options.init {
        Some(rho) => rho.clone(),
        None => project_psd(&linear_inversion(records, settings)?)?,
    };
    settings.check_records(records)?;
    let projectors = settings.projectors();
    let total: f64 = records.iter().map(|r| r.coincidences).sum();
    if !(total > 0.0) {
        return Err(Error::domain("maximum-likelihood tomography needs at least one coincidence"));
    }
    let predicted: f64 = records
        .iter()
        .zip(&projectors)
        .map(|(r, p)| r.integration_s * init.expectation(p))
        .sum();
    let scale = total / predicted;
    let problem = Problem {
        exposure: records.iter().map(|r| r.integration_s * scale).collect(),
        counts: records.iter().map(|r| r.coincidences).collect(),
        projectors,
        total,
    };

    let start = init.matrix() * Complex64::new(1.0 - INIT_BLEND, 0.0)
        + Matrix4::identity() * Complex64::new(INIT_BLEND / 4.0, 0.0);
    let mut p = params_from_t(&factor(&start)?);
    let (mut f, mut grad) = problem.objective(&p);
    let mut history = vec![f * total];
    let mut h_inv = DMatrix::<f64>::identity(N_PARAMS, N_PARAMS);
    let mut converged = grad.norm() < options.tol_gradient;
    let mut iterations = 0;

    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let mut dir = &h_inv * &grad;
        if dir.dot(&grad) <= 0.0 {
            h_inv = DMatrix::identity(N_PARAMS, N_PARAMS);
            dir = grad.clone();
        }
        let slope = dir.dot(&grad);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let trial = &p + &dir * step;
            let (ft, gt) = problem.objective(&trial);
            if ft.is_finite() && ft >= f + ARMIJO_C1 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((p_new, f_new, g_new)) = accepted else {
            if h_inv != DMatrix::identity(N_PARAMS, N_PARAMS) {
                h_inv = DMatrix::identity(N_PARAMS, N_PARAMS);
                continue;
            }
            // No ascent direction left at working precision.
            converged = true;
            break;
        };
        let improvement = f_new - f;
        // BFGS on the minimization of −f.
        let s = &p_new - &p;
        let y = &grad - &g_new;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            if iterations == 1 {
                h_inv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        p = p_new;
        f = f_new;
        grad = g_new;
        history.push(f * total);
        if improvement < options.tol_improvement || grad.norm() < options.tol_gradient {
            converged = true;
        }
    }

    let t = t_from_params(&p);
    let m = t.adjoint() * t;
    let m = m / Complex64::new(m.trace().re, 0.0);
    let rho_est = DensityMatrix::new((m + m.adjoint()) * Complex64::new(0.5, 0.0))?;
    Ok(TomographyResult {
        fidelity_to_target: fidelity(&rho_est, &options.target),
        purity: purity(&rho_est),
        concurrence: concurrence(&rho_est),
        log_likelihood: problem.log_likelihood(&t),
        log_likelihood_history: history,
        iterations,
        converged,
        rho_est,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tomo::{expected_records, standard_settings, SettingsKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem_for(rho: &DensityMatrix, pairs: f64) -> Problem {
        let settings = standard_settings(SettingsKind::ThirtySix);
        let recs = expected_records(rho, &settings, pairs);
        Problem {
            projectors: settings.projectors(),
            counts: recs.iter().map(|r| r.coincidences.round()).collect(),
            exposure: vec![1.0; recs.len()],
            total: recs.iter().map(|r| r.coincidences.round()).sum(),
        }
    }

    #[test]
    fn factor_round_trips() {
        let rho = DensityMatrix::werner(0.7).unwrap();
        let t = factor(rho.matrix()).unwrap();
        for r in 0..4 {
            for c in r + 1..4 {
                assert_eq!(t[(r, c)], Complex64::new(0.0, 0.0));
            }
        }
        assert!((t.adjoint() * t - rho.matrix()).norm() < 1e-14);
        let p = params_from_t(&t);
        assert_eq!(t_from_params(&p), t);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let problem = problem_for(&DensityMatrix::werner(0.8).unwrap(), 1e5);
        for _ in 0..20 {
            let p = DVector::from_fn(N_PARAMS, |_, _| rng.random_range(-1.0..1.0));
            let (_, g) = problem.objective(&p);
            for k in 0..N_PARAMS {
                let h = 1e-6;
                let mut up = p.clone();
                up[k] += h;
                let mut dn = p.clone();
                dn[k] -= h;
                let fd = (problem.objective(&up).0 - problem.objective(&dn).0) / (2.0 * h);
                let denom = g.norm().max(1e-12);
                assert!((fd - g[k]).abs() / denom < 1e-5, "param {k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn noiseless_bell_state_is_recovered() {
        let settings = standard_settings(SettingsKind::ThirtySix);
        let target = bell_state(BellKind::PhiPlus);
        let recs = expected_records(&DensityMatrix::from_pure(&target), &settings, 1e5);
        let res = mle_reconstruct(&recs, &settings, &MleOptions::default()).unwrap();
        assert!(res.fidelity_to_target >= 0.9999);
        assert!(res.converged);
        assert!(res.log_likelihood_history.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let settings = standard_settings(SettingsKind::Sixteen);
        let recs = expected_records(&DensityMatrix::werner(0.9).unwrap(), &settings, 1e4);
        let opts = MleOptions {
            max_iterations: 1,
            init: Some(DensityMatrix::maximally_mixed()),
            tol_improvement: 0.0,
            tol_gradient: 0.0,
            ..Default::default()
        };
        let res = mle_reconstruct(&recs, &settings, &opts).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(!res.converged);
    }

    #[test]
    fn zero_counts_rejected() {
        let settings = standard_settings(SettingsKind::Sixteen);
        let mut recs = expected_records(&DensityMatrix::maximally_mixed(), &settings, 1.0);
        for r in &mut recs {
            r.coincidences = 0.0;
        }
        let opts = MleOptions { init: Some(DensityMatrix::maximally_mixed()), ..Default::default() };
        assert!(mle_reconstruct(&recs, &settings, &opts).is_err());
    }
}
