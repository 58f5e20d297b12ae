//! Input-oriented CRS efficiency programs in multiplier form.
//!
//! * CCR: `max y_n'u  s.t.  x_n'v = 1,  Y u - X v <= 0,  u, v >= 0`
//! * AP (super-efficiency): as CCR with DMU `n` removed from `Y`, `X`.
//! * H (universal): `max 1 + d  s.t.  y_n'u >= 1 + d,  x_n'v <= 1 - d,
//!   Y_{-n} u - X_{-n} v <= 0,  u, v >= 0`, scores in `[0, 2]`.
//!
//! AP and H scores are tied by `h = 2 ap / (1 + ap)`. The H program is solved
//! on its own so that identity stays a cross-check.
//!
//! Each input and output column is divided by its maximum before the LPs are
//! built. CRS multiplier scores do not depend on units, and the rescaling
//! keeps data such as citation counts in the millions well conditioned.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Sense};
use crate::pipeline::PanelDataset;
use crate::ranking::{rank_scores, RankOutcome, RankingSeries, SCORE_TIE_TOL};

/// Finite stand-in for an unbounded AP score.
pub const AP_UNBOUNDED: f64 = f64::MAX;

/// Finite stand-in for `ln 0`.
pub const LOG_ZERO: f64 = -f64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeaModel {
    Ccr,
    Ap,
    H,
    Log,
}

impl DeaModel {
    pub const ALL: [DeaModel; 4] = [DeaModel::Ccr, DeaModel::Ap, DeaModel::H, DeaModel::Log];

    pub fn label(self) -> &'static str {
        match self {
            DeaModel::Ccr => "CCR",
            DeaModel::Ap => "AP",
            DeaModel::H => "H",
            DeaModel::Log => "Log",
        }
    }
}

impl std::str::FromStr for DeaModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ccr" => Ok(DeaModel::Ccr),
            "ap" => Ok(DeaModel::Ap),
            "h" => Ok(DeaModel::H),
            "log" => Ok(DeaModel::Log),
            other => Err(Error::invalid(format!("unknown DEA model '{other}'"))),
        }
    }
}

/// Inputs and outputs of N DMUs in one period.
#[derive(Debug, Clone)]
pub struct CrossSection {
    labels: Vec<String>,
    period: String,
    inputs: DMatrix<f64>,
    outputs: DMatrix<f64>,
}

impl CrossSection {
    /// `inputs` is N×I, `outputs` N×J.
    pub fn new(labels: Vec<String>, inputs: DMatrix<f64>, outputs: DMatrix<f64>) -> Result<Self> {
        let n = labels.len();
        if n < 2 {
            return Err(Error::invalid("a cross-section needs at least two DMUs"));
        }
        if inputs.nrows() != n || outputs.nrows() != n {
            return Err(Error::invalid(format!(
                "{n} labels but {} input rows and {} output rows",
                inputs.nrows(),
                outputs.nrows()
            )));
        }
        if inputs.ncols() == 0 || outputs.ncols() == 0 {
            return Err(Error::invalid("need at least one input and one output"));
        }
        for (i, label) in labels.iter().enumerate() {
            if inputs.row(i).iter().any(|&x| !(x.is_finite() && x > 0.0)) {
                return Err(Error::invalid(format!(
                    "DMU {}: inputs must be finite and strictly positive",
                    label
                )));
            }
            let row = outputs.row(i);
            if row.iter().any(|&y| !(y.is_finite() && y >= 0.0)) {
                return Err(Error::invalid(format!(
                    "DMU {}: outputs must be finite and nonnegative",
                    label
                )));
            }
            if row.iter().all(|&y| y == 0.0) {
                return Err(Error::invalid(format!(
                    "DMU {}: needs at least one positive output",
                    label
                )));
            }
        }
        Ok(Self {
            labels,
            period: String::new(),
            inputs,
            outputs,
        })
    }

    /// Convenience constructor from row slices.
    pub fn from_rows(inputs: &[Vec<f64>], outputs: &[Vec<f64>]) -> Result<Self> {
        let n = inputs.len();
        let to_matrix = |rows: &[Vec<f64>]| -> Result<DMatrix<f64>> {
            let cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != cols) {
                return Err(Error::invalid("ragged data rows"));
            }
            Ok(DMatrix::from_row_iterator(
                rows.len(),
                cols,
                rows.iter().flat_map(|r| r.iter().copied()),
            ))
        };
        let labels = (1..=n).map(|i| format!("DMU{i}")).collect();
        Self::new(labels, to_matrix(inputs)?, to_matrix(outputs)?)
    }

    pub fn with_period(mut self, period: impl Into<String>) -> Self {
        self.period = period.into();
        self
    }

    pub fn num_dmus(&self) -> usize {
        self.labels.len()
    }

    pub fn period(&self) -> &str {
        &self.period
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }

    /// The cross-section with DMU `n` removed.
    pub fn without(&self, n: usize) -> Result<Self> {
        let labels = self
            .labels
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != n)
            .map(|(_, l)| l.clone())
            .collect();
        Ok(Self::new(
            labels,
            self.inputs.clone().remove_row(n),
            self.outputs.clone().remove_row(n),
        )?
        .with_period(self.period.clone()))
    }

    fn normalized(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let scale = |m: &DMatrix<f64>| {
            let mut out = m.clone();
            for mut col in out.column_iter_mut() {
                let max = col.max();
                if max > 0.0 {
                    col /= max;
                }
            }
            out
        };
        (scale(&self.inputs), scale(&self.outputs))
    }

    fn model_error(&self, n: usize, status: LpStatus) -> Error {
        Error::Model {
            dmu: self.labels[n].clone(),
            period: self.period.clone(),
            status,
        }
    }
}

/// How a score was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreStatus {
    Optimal,
    /// AP program unbounded; the score is [`AP_UNBOUNDED`] (or its transform).
    Unbounded,
    /// The LP failed; the score is NaN.
    Failed(LpStatus),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub status: ScoreStatus,
}

/// Multiplier-form program for CCR (`exclude_self = false`) or AP.
fn multiplier_program(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    n: usize,
    exclude_self: bool,
) -> LinearProgram {
    let (num_dmus, num_in) = x.shape();
    let num_out = y.ncols();
    let bench: Vec<usize> = (0..num_dmus)
        .filter(|&m| !(exclude_self && m == n))
        .collect();

    // variables: u (outputs) then v (inputs)
    let cols = num_out + num_in;
    let mut a = DMatrix::zeros(1 + bench.len(), cols);
    for i in 0..num_in {
        a[(0, num_out + i)] = x[(n, i)];
    }
    for (row, &m) in bench.iter().enumerate() {
        for j in 0..num_out {
            a[(row + 1, j)] = y[(m, j)];
        }
        for i in 0..num_in {
            a[(row + 1, num_out + i)] = -x[(m, i)];
        }
    }
    let mut objective = vec![0.0; cols];
    for j in 0..num_out {
        objective[j] = y[(n, j)];
    }
    let mut senses = vec![Sense::Le; 1 + bench.len()];
    senses[0] = Sense::Eq;
    let mut rhs = vec![0.0; 1 + bench.len()];
    rhs[0] = 1.0;
    LinearProgram::new(objective, a, senses, rhs).expect("well-formed DEA program")
}

/// Universal (H) program; variables `(d, u, v)` with `d >= -1`.
fn universal_program(x: &DMatrix<f64>, y: &DMatrix<f64>, n: usize) -> LinearProgram {
    let (num_dmus, num_in) = x.shape();
    let num_out = y.ncols();
    let cols = 1 + num_out + num_in;
    let rows = 2 + num_dmus - 1;
    let mut a = DMatrix::zeros(rows, cols);
    // y_n'u - d >= 1
    a[(0, 0)] = -1.0;
    for j in 0..num_out {
        a[(0, 1 + j)] = y[(n, j)];
    }
    // x_n'v + d <= 1
    a[(1, 0)] = 1.0;
    for i in 0..num_in {
        a[(1, 1 + num_out + i)] = x[(n, i)];
    }
    for (row, m) in (0..num_dmus).filter(|&m| m != n).enumerate() {
        for j in 0..num_out {
            a[(2 + row, 1 + j)] = y[(m, j)];
        }
        for i in 0..num_in {
            a[(2 + row, 1 + num_out + i)] = -x[(m, i)];
        }
    }
    let mut objective = vec![0.0; cols];
    objective[0] = 1.0;
    let mut senses = vec![Sense::Le; rows];
    senses[0] = Sense::Ge;
    let mut rhs = vec![0.0; rows];
    rhs[0] = 1.0;
    rhs[1] = 1.0;
    let mut lower = vec![0.0; cols];
    lower[0] = -1.0;
    LinearProgram::new(objective, a, senses, rhs)
        .and_then(|lp| lp.with_lower_bounds(lower))
        .expect("well-formed DEA program")
}

fn check_index(cs: &CrossSection, n: usize) -> Result<()> {
    if n >= cs.num_dmus() {
        return Err(Error::invalid(format!(
            "DMU index {n} out of range for {} DMUs",
            cs.num_dmus()
        )));
    }
    Ok(())
}

/// CCR efficiency of DMU `n`, in `[0, 1]`.
pub fn ccr_score(cs: &CrossSection, n: usize) -> Result<f64> {
    check_index(cs, n)?;
    let (x, y) = cs.normalized();
    let sol = lp::solve(&multiplier_program(&x, &y, n, false))?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective_value.unwrap_or(f64::NAN)),
        status => Err(cs.model_error(n, status)),
    }
}

/// AP super-efficiency of DMU `n`. An unbounded program yields
/// [`AP_UNBOUNDED`] with status `Unbounded` and a warning.
pub fn ap_score(cs: &CrossSection, n: usize) -> Result<Score> {
    check_index(cs, n)?;
    let (x, y) = cs.normalized();
    let sol = lp::solve(&multiplier_program(&x, &y, n, true))?;
    match sol.status {
        LpStatus::Optimal => Ok(Score {
            value: sol.objective_value.unwrap_or(f64::NAN),
            status: ScoreStatus::Optimal,
        }),
        LpStatus::Unbounded => {
            log::warn!(
                "AP program unbounded for DMU {} (period {}); using sentinel score",
                cs.labels[n],
                cs.period
            );
            Ok(Score {
                value: AP_UNBOUNDED,
                status: ScoreStatus::Unbounded,
            })
        }
        status => Err(cs.model_error(n, status)),
    }
}

/// H (universal) efficiency of DMU `n`, in `[0, 2]`.
pub fn h_score(cs: &CrossSection, n: usize) -> Result<f64> {
    check_index(cs, n)?;
    let (x, y) = cs.normalized();
    let sol = lp::solve(&universal_program(&x, &y, n))?;
    match sol.status {
        LpStatus::Optimal => Ok(1.0 + sol.objective_value.unwrap_or(f64::NAN)),
        status => Err(cs.model_error(n, status)),
    }
}

pub fn ap_to_h(ap: f64) -> f64 {
    if ap >= AP_UNBOUNDED {
        return 2.0;
    }
    2.0 * ap / (1.0 + ap)
}

pub fn h_to_ap(h: f64) -> f64 {
    if h >= 2.0 {
        return AP_UNBOUNDED;
    }
    h / (2.0 - h)
}

/// `ln(ap)`; equals `-ln(2/h - 1)` for the matching H score.
pub fn log_score(ap: f64) -> f64 {
    if ap <= 0.0 {
        log::warn!("log of a zero AP score; using sentinel");
        return LOG_ZERO;
    }
    ap.ln()
}

/// Scores of every DMU in the cross-section under `model`. LP failures are
/// kept per DMU rather than aborting.
pub fn cross_section_scores(cs: &CrossSection, model: DeaModel) -> Vec<Score> {
    (0..cs.num_dmus())
        .map(|n| {
            let res = match model {
                DeaModel::Ccr => ccr_score(cs, n).map(optimal),
                DeaModel::H => h_score(cs, n).map(optimal),
                DeaModel::Ap => ap_score(cs, n),
                DeaModel::Log => ap_score(cs, n).map(|s| Score {
                    value: log_score(s.value),
                    status: s.status,
                }),
            };
            res.unwrap_or_else(|err| {
                log::warn!("{err}");
                let status = match err {
                    Error::Model { status, .. } => status,
                    _ => LpStatus::IterationLimit,
                };
                Score {
                    value: f64::NAN,
                    status: ScoreStatus::Failed(status),
                }
            })
        })
        .collect()
}

fn optimal(value: f64) -> Score {
    Score {
        value,
        status: ScoreStatus::Optimal,
    }
}

/// N×T scores for one model.
#[derive(Debug, Clone)]
pub struct EfficiencyPanel {
    pub model: DeaModel,
    pub scores: DMatrix<f64>,
    statuses: Vec<ScoreStatus>,
}

impl EfficiencyPanel {
    pub fn from_columns(model: DeaModel, columns: Vec<Vec<Score>>) -> Self {
        let t_count = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        let scores = DMatrix::from_fn(n, t_count, |i, t| columns[t][i].value);
        let statuses = columns
            .iter()
            .flat_map(|c| c.iter().map(|s| s.status))
            .collect();
        Self {
            model,
            scores,
            statuses,
        }
    }

    pub fn num_dmus(&self) -> usize {
        self.scores.nrows()
    }

    pub fn num_periods(&self) -> usize {
        self.scores.ncols()
    }

    pub fn status(&self, n: usize, t: usize) -> ScoreStatus {
        self.statuses[t * self.num_dmus() + n]
    }

    /// `(n, t)` cells whose LP failed.
    pub fn failures(&self) -> Vec<(usize, usize)> {
        (0..self.num_periods())
            .flat_map(|t| (0..self.num_dmus()).map(move |n| (n, t)))
            .filter(|&(n, t)| matches!(self.status(n, t), ScoreStatus::Failed(_)))
            .collect()
    }

    /// The same panel with every score mapped through `f`.
    pub fn map(&self, model: DeaModel, f: impl Fn(f64) -> f64) -> Self {
        Self {
            model,
            scores: self.scores.map(f),
            statuses: self.statuses.clone(),
        }
    }

    /// Rankings per period (rank 1 = highest score).
    pub fn rankings(&self) -> (RankingSeries, Vec<RankOutcome>) {
        let outcomes: Vec<RankOutcome> = (0..self.num_periods())
            .map(|t| {
                let col: Vec<f64> = self.scores.column(t).iter().copied().collect();
                rank_scores(&col, SCORE_TIE_TOL)
            })
            .collect();
        let series = RankingSeries::new(outcomes.iter().map(|o| o.ranking.clone()).collect())
            .expect("equal-length rankings");
        (series, outcomes)
    }
}

/// Solve every period independently. Periods run in parallel; the result does
/// not depend on scheduling.
pub fn efficiency_panel(data: &PanelDataset, model: DeaModel) -> Result<EfficiencyPanel> {
    let sections = (0..data.num_periods())
        .map(|t| data.cross_section(t))
        .collect::<Result<Vec<_>>>()?;
    let columns: Vec<Vec<Score>> = sections
        .par_iter()
        .map(|cs| cross_section_scores(cs, model))
        .collect();
    Ok(EfficiencyPanel::from_columns(model, columns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_dmu() -> CrossSection {
        CrossSection::from_rows(&[vec![1.0], vec![1.0]], &[vec![2.0], vec![1.0]]).unwrap()
    }

    #[test]
    fn ccr_two_dmu() {
        let cs = two_dmu();
        assert_abs_diff_eq!(ccr_score(&cs, 0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ccr_score(&cs, 1).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ap_two_dmu() {
        let cs = two_dmu();
        let a = ap_score(&cs, 0).unwrap();
        assert_eq!(a.status, ScoreStatus::Optimal);
        assert_abs_diff_eq!(a.value, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ap_score(&cs, 1).unwrap().value, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn h_two_dmu() {
        let cs = two_dmu();
        assert_abs_diff_eq!(h_score(&cs, 0).unwrap(), 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h_score(&cs, 1).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_dmus_score_one() {
        let cs =
            CrossSection::from_rows(&[vec![3.0, 1.0], vec![3.0, 1.0]], &[vec![2.0], vec![2.0]])
                .unwrap();
        for n in 0..2 {
            assert_abs_diff_eq!(ap_score(&cs, n).unwrap().value, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(h_score(&cs, n).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unbounded_super_efficiency_is_flagged() {
        // DMU 0 is the only producer of the second output.
        let cs = CrossSection::from_rows(
            &[vec![1.0], vec![1.0], vec![2.0]],
            &[vec![1.0, 1.0], vec![1.0, 0.0], vec![3.0, 0.0]],
        )
        .unwrap();
        let s = ap_score(&cs, 0).unwrap();
        assert_eq!(s.status, ScoreStatus::Unbounded);
        assert_eq!(s.value, AP_UNBOUNDED);
        assert_abs_diff_eq!(h_score(&cs, 0).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(ap_to_h(s.value), 2.0);
    }

    #[test]
    fn transformations() {
        assert_eq!(ap_to_h(1.0), 1.0);
        assert_abs_diff_eq!(ap_to_h(2.0), 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h_to_ap(2.0 / 3.0), 0.5, epsilon = 1e-15);
        assert_eq!(h_to_ap(2.0), AP_UNBOUNDED);
        for ap in [0.1, 0.5, 1.0, 1.7, 25.0] {
            assert_abs_diff_eq!(h_to_ap(ap_to_h(ap)), ap, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_transform() {
        assert_eq!(log_score(1.0), 0.0);
        assert_abs_diff_eq!(log_score(2.0), std::f64::consts::LN_2, epsilon = 1e-15);
        let h: f64 = 4.0 / 3.0;
        assert_abs_diff_eq!(-(2.0 / h - 1.0).ln(), log_score(2.0), epsilon = 1e-12);
        assert_eq!(log_score(0.0), LOG_ZERO);
    }

    #[test]
    fn invalid_cross_sections() {
        assert!(CrossSection::from_rows(&[vec![1.0]], &[vec![1.0]]).is_err());
        assert!(CrossSection::from_rows(&[vec![0.0], vec![1.0]], &[vec![1.0], vec![1.0]]).is_err());
        assert!(CrossSection::from_rows(&[vec![1.0], vec![1.0]], &[vec![0.0], vec![1.0]]).is_err());
        let cs = two_dmu();
        assert!(ccr_score(&cs, 2).is_err());
    }
}
