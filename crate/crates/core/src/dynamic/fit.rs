use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use super::optimize::{self, BfgsOptions, Minimum};
use super::{
    check_identifiability, filter, free_parameter_names, log_likelihood, DrmData, DrmParameters,
};
use crate::error::{Error, Result};
use crate::ranking::{rank_scores, Ranking};

/// Which parameters are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    /// `phi` and `alpha` estimated.
    Free,
    /// `phi = alpha = 0`: a static Plackett–Luce regression.
    Static,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub dynamics: Dynamics,
    pub bfgs: BfgsOptions,
    /// A start is accepted when its final scaled gradient norm is below this.
    pub acceptance_tol: f64,
    /// Second-difference step relative to `max(1, |theta_i|)`.
    pub hessian_step: f64,
    pub compute_hessian: bool,
    /// Single starting point tried before the default starts.
    pub initial: Option<DrmParameters>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            dynamics: Dynamics::Free,
            bfgs: BfgsOptions::default(),
            acceptance_tol: 1e-4,
            hessian_step: 1e-5,
            compute_hessian: true,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferenceMethod {
    Hessian,
    Bootstrap,
}

impl InferenceMethod {
    pub fn label(self) -> &'static str {
        match self {
            InferenceMethod::Hessian => "Hessian",
            InferenceMethod::Bootstrap => "Bootstrap",
        }
    }
}

/// Standard errors and two-sided normal p-values of the free parameters.
#[derive(Debug, Clone)]
pub struct Inference {
    pub method: InferenceMethod,
    pub std_errors: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Standard error of the dependent effect `omega_N = -sum(omega_1..N-1)`.
    pub omega_last_std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartKind {
    Supplied,
    Default,
    Static,
}

#[derive(Debug, Clone)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub scaled_gradient_norm: f64,
    pub start: StartKind,
    pub starts_tried: usize,
    pub starts_converged: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DrmFit {
    pub params: DrmParameters,
    pub dynamics: Dynamics,
    pub loglik: f64,
    /// Names of the estimated parameters, matching `estimates`.
    pub parameter_names: Vec<String>,
    pub estimates: Vec<f64>,
    /// Covariance of `estimates`; empty when the Hessian was not computed.
    pub covariance: DMatrix<f64>,
    pub inference: Option<Inference>,
    pub fitted_worths: DMatrix<f64>,
    pub fitted_scores: DMatrix<f64>,
    pub diagnostics: FitDiagnostics,
}

/// One row of a parameter report.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub p_value: f64,
}

impl DrmFit {
    /// Estimates with inference, including the dependent last effect.
    pub fn parameter_rows(&self) -> Vec<ParameterRow> {
        let n = self.params.omega.len();
        let mut rows = Vec::with_capacity(self.estimates.len() + 1);
        let se = |i: usize| {
            self.inference
                .as_ref()
                .map_or(f64::NAN, |inf| inf.std_errors[i])
        };
        let pv = |i: usize| {
            self.inference
                .as_ref()
                .map_or(f64::NAN, |inf| inf.p_values[i])
        };
        for (i, name) in self.parameter_names.iter().enumerate() {
            if i == n - 1 {
                rows.push(self.omega_last_row());
            }
            rows.push(ParameterRow {
                name: name.clone(),
                estimate: self.estimates[i],
                std_error: se(i),
                p_value: pv(i),
            });
        }
        if self.estimates.len() == n - 1 {
            rows.push(self.omega_last_row());
        }
        rows
    }

    fn omega_last_row(&self) -> ParameterRow {
        let n = self.params.omega.len();
        let estimate = self.params.omega[n - 1];
        let std_error = self
            .inference
            .as_ref()
            .map_or(f64::NAN, |inf| inf.omega_last_std_error);
        ParameterRow {
            name: format!("omega_{n}"),
            estimate,
            std_error,
            p_value: two_sided_p(estimate, std_error),
        }
    }

    /// Estimate, standard error and p-value of a named parameter.
    pub fn parameter(&self, name: &str) -> Option<ParameterRow> {
        self.parameter_rows().into_iter().find(|r| r.name == name)
    }
}

/// Two-sided p-value of `estimate / std_error` under a standard normal.
pub(crate) fn two_sided_p(estimate: f64, std_error: f64) -> f64 {
    if !(std_error.is_finite() && std_error > 0.0) {
        return f64::NAN;
    }
    let z = (estimate / std_error).abs();
    let normal = Normal::standard();
    (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0)
}

/// Maps the optimizer's vector onto model parameters.
struct Problem<'a> {
    data: &'a DrmData,
    dynamics: Dynamics,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        let base = self.data.num_dmus() - 1 + self.data.num_covariates();
        match self.dynamics {
            Dynamics::Free => base + 2,
            Dynamics::Static => base,
        }
    }

    fn params(&self, x: &[f64]) -> DrmParameters {
        let n = self.data.num_dmus();
        let k = self.data.num_covariates();
        match self.dynamics {
            Dynamics::Free => DrmParameters::from_free(x, n, k),
            Dynamics::Static => {
                let mut full = x.to_vec();
                full.extend([0.0, 0.0]);
                DrmParameters::from_free(&full, n, k)
            }
        }
    }

    fn vector(&self, params: &DrmParameters) -> Vec<f64> {
        let mut theta = params.to_free();
        if self.dynamics == Dynamics::Static {
            theta.truncate(self.dim());
        }
        theta
    }

    fn objective(&self) -> impl Fn(&[f64]) -> f64 + '_ {
        move |x: &[f64]| -log_likelihood(self.data, &self.params(x))
    }

    fn names(&self) -> Vec<String> {
        let mut names = free_parameter_names(self.data.num_dmus(), self.data.covariates().names());
        names.truncate(self.dim());
        names
    }
}

/// Maximum likelihood estimate with Hessian-based inference.
///
/// Starts: the supplied `initial` point if any, then zeros with
/// `phi = 0.5, alpha = 0.1`, then the static fit with `phi = alpha = 0`. The
/// accepted start with the highest log-likelihood wins. Warnings (|phi| >= 1,
/// near-singular Hessian) are returned in the diagnostics for the caller to
/// report.
pub fn fit(data: &DrmData, options: &FitOptions) -> Result<DrmFit> {
    check_identifiability(data.rankings()).map_err(Error::Identifiability)?;
    let mut warnings = Vec::new();

    let static_problem = Problem {
        data,
        dynamics: Dynamics::Static,
    };
    let problem = Problem {
        data,
        dynamics: options.dynamics,
    };
    let objective = problem.objective();

    let accepted =
        |m: &Minimum| m.value.is_finite() && m.scaled_gradient_norm <= options.acceptance_tol;

    let mut tried = 0;
    let mut converged: Vec<(StartKind, Minimum)> = Vec::new();

    if let Some(init) = &options.initial {
        tried += 1;
        let m = optimize::minimize(&objective, &problem.vector(init), &options.bfgs);
        if accepted(&m) {
            converged.push((StartKind::Supplied, m));
        }
    }

    if converged.is_empty() {
        let static_min = optimize::minimize(
            static_problem.objective(),
            &vec![0.0; static_problem.dim()],
            &options.bfgs,
        );
        match options.dynamics {
            Dynamics::Static => {
                tried += 1;
                if accepted(&static_min) {
                    converged.push((StartKind::Static, static_min));
                }
            }
            Dynamics::Free => {
                let mut default_start = vec![0.0; problem.dim()];
                let d = default_start.len();
                default_start[d - 2] = 0.5;
                default_start[d - 1] = 0.1;
                let mut from_static = static_min.x.clone();
                from_static.extend([0.0, 0.0]);
                for (kind, start) in [
                    (StartKind::Default, default_start),
                    (StartKind::Static, from_static),
                ] {
                    tried += 1;
                    let m = optimize::minimize(&objective, &start, &options.bfgs);
                    if accepted(&m) {
                        converged.push((kind, m));
                    }
                }
            }
        }
    }

    let starts_converged = converged.len();
    let Some((start, best)) = converged
        .into_iter()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
    else {
        return Err(Error::Convergence(format!(
            "none of {tried} starts reached scaled gradient norm {}",
            options.acceptance_tol
        )));
    };

    let params = problem.params(&best.x);
    if params.phi.abs() >= 1.0 {
        let msg = format!(
            "estimated phi = {:.4} is outside the stationary region",
            params.phi
        );
        log::debug!("{msg}");
        warnings.push(msg);
    }

    let (covariance, inference) = if options.compute_hessian {
        let hessian = optimize::central_hessian(&objective, &best.x, options.hessian_step);
        let (cov, near_singular) = invert_information(&hessian);
        if near_singular {
            let msg = "Hessian is near-singular; using its pseudo-inverse".to_string();
            log::debug!("{msg}");
            warnings.push(msg);
        }
        let inference = hessian_inference(&best.x, &cov, data.num_dmus());
        (cov, Some(inference))
    } else {
        (DMatrix::zeros(0, 0), None)
    };

    let filtered = filter(data, &params)?;
    Ok(DrmFit {
        loglik: filtered.loglik,
        params,
        dynamics: options.dynamics,
        parameter_names: problem.names(),
        estimates: best.x,
        covariance,
        inference,
        fitted_worths: filtered.worths,
        fitted_scores: filtered.scores,
        diagnostics: FitDiagnostics {
            iterations: best.iterations,
            scaled_gradient_norm: best.scaled_gradient_norm,
            start,
            starts_tried: tried,
            starts_converged,
            warnings,
        },
    })
}

/// Inverse of the observed information. Falls back to the SVD pseudo-inverse
/// when the matrix is not safely positive definite.
fn invert_information(hessian: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let sym = (hessian + hessian.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if min > 1e-10 * max.max(f64::MIN_POSITIVE) {
        if let Some(chol) = sym.clone().cholesky() {
            return (chol.inverse(), false);
        }
    }
    let pinv = sym
        .svd(true, true)
        .pseudo_inverse(1e-10 * max.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DMatrix::from_element(hessian.nrows(), hessian.ncols(), f64::NAN));
    (pinv, true)
}

fn hessian_inference(estimates: &[f64], cov: &DMatrix<f64>, num_dmus: usize) -> Inference {
    let std_errors: Vec<f64> = (0..estimates.len())
        .map(|i| {
            let v = cov[(i, i)];
            if v > 0.0 {
                v.sqrt()
            } else {
                f64::NAN
            }
        })
        .collect();
    let p_values = estimates
        .iter()
        .zip(&std_errors)
        .map(|(&e, &s)| two_sided_p(e, s))
        .collect();
    let m = num_dmus - 1;
    let omega_block_sum: f64 = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|ij| cov[ij])
        .sum();
    Inference {
        method: InferenceMethod::Hessian,
        std_errors,
        p_values,
        omega_last_std_error: if omega_block_sum > 0.0 {
            omega_block_sum.sqrt()
        } else {
            f64::NAN
        },
    }
}

/// Long-term ranking: DMUs ordered by the individual effects of a fit
/// without contextual variables.
#[derive(Debug, Clone)]
pub struct LongTermRanking {
    pub fit: DrmFit,
    pub ranking: Ranking,
    /// Groups of DMUs whose effects were tied and were ordered by index.
    pub ties: Vec<Vec<usize>>,
}

impl LongTermRanking {
    pub fn worths(&self) -> &[f64] {
        &self.fit.params.omega
    }
}

/// Individual effects closer than this are reported as ties.
pub const LONG_TERM_TIE_TOL: f64 = 1e-6;

pub fn long_term_ranking(data: &DrmData, options: &FitOptions) -> Result<LongTermRanking> {
    if data.num_covariates() != 0 {
        return Err(Error::invalid(
            "the long-term ranking uses a fit without contextual variables",
        ));
    }
    let fit = fit(data, options)?;
    let outcome = rank_scores(&fit.params.omega, LONG_TERM_TIE_TOL);
    Ok(LongTermRanking {
        fit,
        ranking: outcome.ranking,
        ties: outcome.ties,
    })
}
