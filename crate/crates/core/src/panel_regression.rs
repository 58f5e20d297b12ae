//! Linear panel regression of efficiency scores on contextual variables with
//! White (heteroskedasticity-consistent) standard errors, and the side-by-side
//! comparison with the ranking model.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::covariates::Covariates;
use crate::dea::DeaModel;
use crate::dynamic::DrmFit;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// OLS with an intercept, no demeaning.
    Pooled,
    /// Within estimator: OLS after subtracting each DMU's time mean.
    EntityFe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobustKind {
    Hc0,
    /// HC0 scaled by `n / df_resid`, so entity effects count as parameters.
    Hc1,
}

#[derive(Debug, Clone, Copy)]
pub struct RegressionOptions {
    pub estimator: Estimator,
    pub robust: RobustKind,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        Self {
            estimator: Estimator::EntityFe,
            robust: RobustKind::Hc0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub robust_std_errors: Vec<f64>,
    /// Two-sided p-values from Student's t with `df_resid` degrees of freedom.
    pub p_values: Vec<f64>,
    /// Classical OLS standard errors with `sigma^2 = RSS / df_resid`.
    pub classical_std_errors: Vec<f64>,
    /// Intercept of the pooled estimator.
    pub intercept: Option<f64>,
    pub estimator: Estimator,
    pub robust: RobustKind,
    pub n_obs: usize,
    pub df_resid: usize,
    /// Within R² for the fixed-effects estimator, centered R² for pooled.
    pub r_squared: f64,
    pub rss: f64,
}

/// Regress the N×T panel `y` on the covariates.
pub fn panel_ols(
    y: &DMatrix<f64>,
    z: &Covariates,
    options: &RegressionOptions,
) -> Result<RegressionResult> {
    let (n, t_count) = y.shape();
    if z.num_dmus() != n || z.num_periods() != t_count {
        return Err(Error::invalid(format!(
            "scores are {n}x{t_count} but covariates cover {} DMUs x {} periods",
            z.num_dmus(),
            z.num_periods()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("scores contain missing or non-finite cells"));
    }
    let k = z.num_vars();
    if k == 0 {
        return Err(Error::invalid("regression needs at least one covariate"));
    }

    let n_obs = n * t_count;
    let with_intercept = options.estimator == Estimator::Pooled;
    let p = k + usize::from(with_intercept);

    // rows ordered by (dmu, period)
    let mut x = DMatrix::zeros(n_obs, p);
    let mut yv = DVector::zeros(n_obs);
    for i in 0..n {
        for t in 0..t_count {
            let row = i * t_count + t;
            yv[row] = y[(i, t)];
            for j in 0..k {
                x[(row, j)] = z.get(i, j, t);
            }
            if with_intercept {
                x[(row, k)] = 1.0;
            }
        }
    }
    if options.estimator == Estimator::EntityFe {
        for i in 0..n {
            let rows = i * t_count..(i + 1) * t_count;
            let mean_y = yv.rows_range(rows.clone()).mean();
            yv.rows_range_mut(rows.clone()).add_scalar_mut(-mean_y);
            for j in 0..k {
                let mut block = x.view_mut((i * t_count, j), (t_count, 1));
                let mean = block.mean();
                block.add_scalar_mut(-mean);
            }
        }
    }

    let mut column_names: Vec<String> = z.names().to_vec();
    if with_intercept {
        column_names.push("(intercept)".into());
    }
    check_full_rank(&x, &column_names)?;

    let df_resid = match options.estimator {
        Estimator::EntityFe => n_obs.saturating_sub(n + k),
        Estimator::Pooled => n_obs.saturating_sub(p),
    };

    let xtx = x.tr_mul(&x);
    let xtx_inv =
        xtx.clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::RankDeficient {
                columns: column_names.clone(),
            })?;
    let beta = &xtx_inv * x.tr_mul(&yv);
    let resid = &yv - &x * &beta;
    let rss = resid.norm_squared();

    // sandwich: (X'X)^-1 X' diag(e^2) X (X'X)^-1
    let mut meat = DMatrix::zeros(p, p);
    for (row, e) in resid.iter().enumerate() {
        let xi = x.row(row);
        meat += (xi.transpose() * xi) * (e * e);
    }
    let mut robust_cov = &xtx_inv * meat * &xtx_inv;
    if options.robust == RobustKind::Hc1 && df_resid > 0 {
        robust_cov *= n_obs as f64 / df_resid as f64;
    }
    let sigma2 = if df_resid > 0 {
        rss / df_resid as f64
    } else {
        f64::NAN
    };

    let tss = match options.estimator {
        Estimator::EntityFe => yv.norm_squared(),
        Estimator::Pooled => {
            let mean = yv.mean();
            yv.iter().map(|v| (v - mean).powi(2)).sum()
        }
    };
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN };

    let robust_std_errors: Vec<f64> = (0..k).map(|j| robust_cov[(j, j)].max(0.0).sqrt()).collect();
    let classical_std_errors = (0..k).map(|j| (sigma2 * xtx_inv[(j, j)]).sqrt()).collect();
    let coefficients: Vec<f64> = beta.iter().take(k).copied().collect();
    let p_values = coefficients
        .iter()
        .zip(&robust_std_errors)
        .map(|(&b, &se)| t_test_p(b, se, df_resid))
        .collect();

    Ok(RegressionResult {
        names: z.names().to_vec(),
        coefficients,
        robust_std_errors,
        p_values,
        classical_std_errors,
        intercept: with_intercept.then(|| beta[k]),
        estimator: options.estimator,
        robust: options.robust,
        n_obs,
        df_resid,
        r_squared,
        rss,
    })
}

/// Sequential Gram–Schmidt; names every column that lies in the span of the
/// columns before it.
fn check_full_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut collinear = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let col = x.column(j).into_owned();
        let scale = col.norm();
        let mut r = col;
        for q in &basis {
            let proj = q.dot(&r);
            r.axpy(-proj, q, 1.0);
        }
        let rn = r.norm();
        if scale == 0.0 || rn <= 1e-10 * scale {
            collinear.push(name.clone());
        } else {
            basis.push(r / rn);
        }
    }
    if collinear.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient { columns: collinear })
    }
}

fn t_test_p(coef: f64, se: f64, df: usize) -> f64 {
    if !se.is_finite() {
        return f64::NAN;
    }
    if se == 0.0 {
        return if coef == 0.0 { 1.0 } else { 0.0 };
    }
    let stat = (coef / se).abs();
    let cdf = if df > 0 {
        StudentsT::new(0.0, 1.0, df as f64)
            .map(|d| d.cdf(stat))
            .unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    (2.0 * (1.0 - cdf)).clamp(0.0, 1.0)
}

/// Significance stars: `***` p < 0.001, `**` p < 0.01, `*` p < 0.05.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub coefficient: f64,
    pub std_error: f64,
    pub p_value: f64,
}

impl Cell {
    pub fn stars(&self) -> &'static str {
        stars(self.p_value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignAgreement {
    Agree,
    /// Every regression column has one sign and the ranking model the other.
    Opposite,
    /// The regression columns disagree among themselves.
    MixedRegressions,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub variable: String,
    /// One cell per entry of [`ComparisonTable::columns`].
    pub cells: Vec<Option<Cell>>,
    pub sign: SignAgreement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// Variables whose ranking-model sign is opposite to all regressions.
    pub fn opposite_signs(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.sign == SignAgreement::Opposite)
            .map(|r| r.variable.as_str())
            .collect()
    }
}

fn drm_cell(fit: &DrmFit, name: &str) -> Option<Cell> {
    fit.parameter(name).map(|row| Cell {
        coefficient: row.estimate,
        std_error: row.std_error,
        p_value: row.p_value,
    })
}

/// Table with columns CCR, AP, H, Log (regressions, in that order when
/// present), Hess. and Boot. (ranking model), one row per contextual
/// variable followed by the `phi` and `alpha` rows.
pub fn second_stage_table(
    regressions: &[(DeaModel, RegressionResult)],
    drm_hessian: &DrmFit,
    drm_bootstrap: Option<&DrmFit>,
) -> ComparisonTable {
    let mut columns: Vec<String> = regressions
        .iter()
        .map(|(m, _)| m.label().to_string())
        .collect();
    columns.push("Hess.".into());
    columns.push("Boot.".into());

    let variables: Vec<String> = regressions
        .first()
        .map(|(_, r)| r.names.clone())
        .unwrap_or_default();

    let mut rows = Vec::new();
    for var in &variables {
        let mut cells: Vec<Option<Cell>> = regressions
            .iter()
            .map(|(_, r)| {
                r.names.iter().position(|n| n == var).map(|idx| Cell {
                    coefficient: r.coefficients[idx],
                    std_error: r.robust_std_errors[idx],
                    p_value: r.p_values[idx],
                })
            })
            .collect();
        let key = format!("beta_{var}");
        cells.push(drm_cell(drm_hessian, &key));
        cells.push(drm_bootstrap.and_then(|b| drm_cell(b, &key)));
        let sign = sign_agreement(
            &cells[..regressions.len()],
            cells[regressions.len()].as_ref(),
        );
        rows.push(ComparisonRow {
            variable: var.clone(),
            cells,
            sign,
        });
    }
    for name in ["phi", "alpha"] {
        let mut cells = vec![None; regressions.len()];
        cells.push(drm_cell(drm_hessian, name));
        cells.push(drm_bootstrap.and_then(|b| drm_cell(b, name)));
        rows.push(ComparisonRow {
            variable: name.to_string(),
            cells,
            sign: SignAgreement::Undetermined,
        });
    }
    ComparisonTable { columns, rows }
}

fn sign_agreement(regressions: &[Option<Cell>], ranking: Option<&Cell>) -> SignAgreement {
    let signs: Vec<f64> = regressions
        .iter()
        .flatten()
        .map(|c| c.coefficient.signum())
        .collect();
    let Some(rank_cell) = ranking else {
        return SignAgreement::Undetermined;
    };
    if signs.is_empty() || rank_cell.coefficient == 0.0 {
        return SignAgreement::Undetermined;
    }
    if signs.iter().any(|s| *s != signs[0]) {
        return SignAgreement::MixedRegressions;
    }
    if signs[0] == rank_cell.coefficient.signum() {
        SignAgreement::Agree
    } else {
        SignAgreement::Opposite
    }
}
