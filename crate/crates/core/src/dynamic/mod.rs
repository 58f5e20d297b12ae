//! Score-driven dynamic Plackett–Luce ranking model.
//!
//! Worths follow
//!
//! ```text
//! w[n,t] = omega[n] + sum_k beta[k] z[n,k,t] + e[n,t]
//! e[n,t] = phi e[n,t-1] + alpha grad_n(w[.,t-1] | R[t-1])
//! ```
//!
//! with `sum_n omega[n] = 0`, `e[n,1] = 0`, and `grad` the Plackett–Luce
//! score. Only `omega[0..N-1]` are free; the last individual effect is minus
//! their sum, so the standardization holds for every candidate parameter
//! vector.

mod bootstrap;
mod fit;
mod identifiability;
pub mod optimize;

pub use bootstrap::{bootstrap, BootstrapOptions, BootstrapSummary};
pub use fit::{
    fit, long_term_ranking, DrmFit, Dynamics, FitDiagnostics, FitOptions, Inference,
    InferenceMethod, LongTermRanking, ParameterRow, StartKind, LONG_TERM_TIE_TOL,
};
pub use identifiability::{check_identifiability, IdentifiabilityViolation};

use nalgebra::DMatrix;
use rand::Rng;

use crate::covariates::Covariates;
use crate::error::{Error, Result};
use crate::plackett_luce;
use crate::ranking::{Ranking, RankingSeries};

/// Observed rankings and contextual variables.
#[derive(Debug, Clone)]
pub struct DrmData {
    rankings: RankingSeries,
    covariates: Covariates,
}

impl DrmData {
    pub fn new(rankings: RankingSeries, covariates: Covariates) -> Result<Self> {
        let t = rankings.num_periods();
        if t < 2 {
            return Err(Error::invalid(format!(
                "the ranking model needs at least 2 periods, got {t}"
            )));
        }
        if rankings.num_dmus() < 2 {
            return Err(Error::invalid("the ranking model needs at least 2 DMUs"));
        }
        if covariates.num_dmus() != rankings.num_dmus() || covariates.num_periods() != t {
            return Err(Error::invalid(format!(
                "covariates cover {} DMUs x {} periods, rankings {} x {t}",
                covariates.num_dmus(),
                covariates.num_periods(),
                rankings.num_dmus()
            )));
        }
        Ok(Self {
            rankings,
            covariates,
        })
    }

    /// Rankings without contextual variables.
    pub fn without_covariates(rankings: RankingSeries) -> Result<Self> {
        let cov = Covariates::empty(rankings.num_dmus(), rankings.num_periods());
        Self::new(rankings, cov)
    }

    pub fn rankings(&self) -> &RankingSeries {
        &self.rankings
    }

    pub fn covariates(&self) -> &Covariates {
        &self.covariates
    }

    pub fn num_dmus(&self) -> usize {
        self.rankings.num_dmus()
    }

    pub fn num_periods(&self) -> usize {
        self.rankings.num_periods()
    }

    pub fn num_covariates(&self) -> usize {
        self.covariates.num_vars()
    }
}

/// `(omega, beta, phi, alpha)` with `sum(omega) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrmParameters {
    pub omega: Vec<f64>,
    pub beta: Vec<f64>,
    pub phi: f64,
    pub alpha: f64,
}

/// Tolerance on `sum(omega)`.
pub const STANDARDIZATION_TOL: f64 = 1e-10;

impl DrmParameters {
    pub fn new(omega: Vec<f64>, beta: Vec<f64>, phi: f64, alpha: f64) -> Result<Self> {
        if omega.len() < 2 {
            return Err(Error::invalid(
                "need individual effects for at least 2 DMUs",
            ));
        }
        let sum: f64 = omega.iter().sum();
        if sum.abs() > STANDARDIZATION_TOL {
            return Err(Error::invalid(format!(
                "individual effects must sum to zero, got {sum}"
            )));
        }
        Ok(Self {
            omega,
            beta,
            phi,
            alpha,
        })
    }

    /// From `(omega_1..omega_{N-1}, beta, phi, alpha)`.
    pub fn from_free(theta: &[f64], num_dmus: usize, num_covariates: usize) -> Self {
        assert_eq!(theta.len(), num_dmus + num_covariates + 1);
        let mut omega = theta[..num_dmus - 1].to_vec();
        omega.push(-omega.iter().sum::<f64>());
        let beta = theta[num_dmus - 1..num_dmus - 1 + num_covariates].to_vec();
        Self {
            omega,
            beta,
            phi: theta[num_dmus - 1 + num_covariates],
            alpha: theta[num_dmus + num_covariates],
        }
    }

    pub fn to_free(&self) -> Vec<f64> {
        let mut theta = self.omega[..self.omega.len() - 1].to_vec();
        theta.extend(&self.beta);
        theta.push(self.phi);
        theta.push(self.alpha);
        theta
    }

    pub fn num_free(&self) -> usize {
        self.omega.len() + self.beta.len() + 1
    }
}

/// Names of the free parameters in the order of [`DrmParameters::to_free`].
pub fn free_parameter_names(num_dmus: usize, covariate_names: &[String]) -> Vec<String> {
    let mut names: Vec<String> = (1..num_dmus).map(|n| format!("omega_{n}")).collect();
    names.extend(covariate_names.iter().map(|c| format!("beta_{c}")));
    names.push("phi".into());
    names.push("alpha".into());
    names
}

/// Fitted worths and scores, N×T, and the total log-likelihood.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub worths: DMatrix<f64>,
    pub scores: DMatrix<f64>,
    pub loglik: f64,
}

/// Run the worth recursion forward over all periods.
///
/// A non-finite worth (parameters that make the recursion explode) yields a
/// log-likelihood of negative infinity rather than an error.
pub fn filter(data: &DrmData, params: &DrmParameters) -> Result<FilterOutput> {
    check_dims(data, params)?;
    let n = data.num_dmus();
    let t_count = data.num_periods();
    let mut worths = DMatrix::from_element(n, t_count, f64::NAN);
    let mut scores = DMatrix::from_element(n, t_count, f64::NAN);
    let loglik = recursion(data, params, |t, w, g| {
        worths.set_column(t, &nalgebra::DVector::from_column_slice(w));
        scores.set_column(t, &nalgebra::DVector::from_column_slice(g));
    });
    Ok(FilterOutput {
        worths,
        scores,
        loglik,
    })
}

/// Log-likelihood only; the optimizer's objective.
pub(crate) fn log_likelihood(data: &DrmData, params: &DrmParameters) -> f64 {
    recursion(data, params, |_, _, _| {})
}

fn check_dims(data: &DrmData, params: &DrmParameters) -> Result<()> {
    if params.omega.len() != data.num_dmus() || params.beta.len() != data.num_covariates() {
        return Err(Error::invalid(format!(
            "parameters for {} DMUs and {} covariates, data has {} and {}",
            params.omega.len(),
            params.beta.len(),
            data.num_dmus(),
            data.num_covariates()
        )));
    }
    Ok(())
}

fn recursion(
    data: &DrmData,
    params: &DrmParameters,
    mut record: impl FnMut(usize, &[f64], &[f64]),
) -> f64 {
    let n = data.num_dmus();
    let cov = &data.covariates;
    let mut e = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut total = 0.0;
    for (t, ranking) in data.rankings.iter().enumerate() {
        if t > 0 {
            for i in 0..n {
                e[i] = params.phi * e[i] + params.alpha * grad[i];
            }
        }
        for i in 0..n {
            let regression: f64 = cov
                .row(i, t)
                .iter()
                .zip(&params.beta)
                .map(|(z, b)| z * b)
                .sum();
            w[i] = params.omega[i] + regression + e[i];
        }
        if w.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        total += plackett_luce::log_probability_and_score(&w, ranking, &mut grad);
        record(t, &w, &grad);
    }
    if total.is_finite() {
        total
    } else {
        f64::NEG_INFINITY
    }
}

/// Simulate `covariates.num_periods()` rankings from the model, feeding each
/// realized score back into the next period's worths.
pub fn simulate<R: Rng + ?Sized>(
    params: &DrmParameters,
    covariates: &Covariates,
    rng: &mut R,
) -> Result<RankingSeries> {
    let n = params.omega.len();
    if covariates.num_dmus() != n || covariates.num_vars() != params.beta.len() {
        return Err(Error::invalid(
            "covariates do not match the parameter dimensions",
        ));
    }
    let mut e = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut rankings: Vec<Ranking> = Vec::with_capacity(covariates.num_periods());
    for t in 0..covariates.num_periods() {
        if t > 0 {
            for i in 0..n {
                e[i] = params.phi * e[i] + params.alpha * grad[i];
            }
        }
        for i in 0..n {
            let regression: f64 = covariates
                .row(i, t)
                .iter()
                .zip(&params.beta)
                .map(|(z, b)| z * b)
                .sum();
            w[i] = params.omega[i] + regression + e[i];
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "simulated worths diverged at period {t}"
            )));
        }
        let r = plackett_luce::sample(&w, rng);
        plackett_luce::log_probability_and_score(&w, &r, &mut grad);
        rankings.push(r);
    }
    RankingSeries::new(rankings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn series(orderings: &[&[usize]]) -> RankingSeries {
        RankingSeries::new(
            orderings
                .iter()
                .map(|o| Ranking::from_ordering(o.to_vec()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn static_case_matches_per_period_likelihood() {
        let data =
            DrmData::without_covariates(series(&[&[0, 1, 2], &[2, 0, 1], &[1, 0, 2]])).unwrap();
        let params = DrmParameters::new(vec![0.4, -0.1, -0.3], vec![], 0.0, 0.0).unwrap();
        let out = filter(&data, &params).unwrap();
        let mut expected = 0.0;
        for (t, r) in data.rankings().iter().enumerate() {
            for i in 0..3 {
                assert_eq!(out.worths[(i, t)], params.omega[i]);
            }
            expected += plackett_luce::log_probability(&params.omega, r);
        }
        assert_abs_diff_eq!(out.loglik, expected, epsilon = 1e-12);
    }

    #[test]
    fn score_feeds_next_period() {
        let data = DrmData::without_covariates(series(&[&[0, 1, 2], &[0, 1, 2]])).unwrap();
        let params = DrmParameters::new(vec![0.0; 3], vec![], 0.0, 1.0).unwrap();
        let out = filter(&data, &params).unwrap();
        assert_abs_diff_eq!(out.worths[(0, 1)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.worths[(1, 1)], 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.worths[(2, 1)], -5.0 / 6.0, epsilon = 1e-15);

        let doubled = DrmParameters::new(vec![0.0; 3], vec![], 0.0, 2.0).unwrap();
        let out2 = filter(&data, &doubled).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(
                out2.worths[(i, 1)],
                2.0 * out.worths[(i, 1)],
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn covariates_enter_linearly() {
        let rankings = series(&[&[0, 1], &[1, 0]]);
        let cov = Covariates::from_fn(vec!["z".into()], 2, 2, |n, _, t| (n + t) as f64).unwrap();
        let data = DrmData::new(rankings, cov).unwrap();
        let params = DrmParameters::new(vec![0.5, -0.5], vec![2.0], 0.0, 0.0).unwrap();
        let out = filter(&data, &params).unwrap();
        assert_abs_diff_eq!(out.worths[(1, 1)], -0.5 + 2.0 * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn explosive_parameters_give_negative_infinity() {
        let orderings: Vec<Vec<usize>> = (0..400)
            .map(|t| if t % 2 == 0 { vec![0, 1] } else { vec![1, 0] })
            .collect();
        let refs: Vec<&[usize]> = orderings.iter().map(|o| o.as_slice()).collect();
        let data = DrmData::without_covariates(series(&refs)).unwrap();
        let params = DrmParameters::new(vec![0.0, 0.0], vec![], 10.0, 3.0).unwrap();
        assert_eq!(filter(&data, &params).unwrap().loglik, f64::NEG_INFINITY);
    }

    #[test]
    fn free_vector_round_trip() {
        let p = DrmParameters::new(vec![0.8, -0.3, -0.5], vec![1.5], 0.5, 0.3).unwrap();
        let theta = p.to_free();
        assert_eq!(theta, vec![0.8, -0.3, 1.5, 0.5, 0.3]);
        let back = DrmParameters::from_free(&theta, 3, 1);
        assert_abs_diff_eq!(back.omega[2], -0.5, epsilon = 1e-15);
        assert!(DrmParameters::new(vec![1.0, 0.0], vec![], 0.0, 0.0).is_err());
    }

    #[test]
    fn data_validation() {
        assert!(DrmData::without_covariates(series(&[&[0, 1]])).is_err());
        let cov = Covariates::empty(3, 2);
        assert!(DrmData::new(series(&[&[0, 1], &[1, 0]]), cov).is_err());
    }

    #[test]
    fn simulation_is_seeded_and_dominant_dmu_wins() {
        let params = DrmParameters::new(vec![10.0, -5.0, -5.0], vec![], 0.0, 0.0).unwrap();
        let cov = Covariates::empty(3, 500);
        let a = simulate(&params, &cov, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = simulate(&params, &cov, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        let first = a.iter().filter(|r| r.ordering()[0] == 0).count();
        assert!(first as f64 >= 0.99 * 500.0);
    }
}
