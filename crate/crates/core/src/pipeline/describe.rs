//! Five-number summaries and the correlation matrix of all variables.
//!
//! Quantiles use linear interpolation between order statistics: for sorted
//! values `x_1 <= ... <= x_m` the `p`-quantile is taken at position
//! `1 + (m - 1) p`. On `{1, ..., 8}` this gives quartiles 2.75, 4.5 and 6.25.

use super::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableRole {
    Input,
    Output,
    Context,
}

impl VariableRole {
    pub fn label(self) -> &'static str {
        match self {
            VariableRole::Input => "input",
            VariableRole::Output => "output",
            VariableRole::Context => "context",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableSummary {
    pub name: String,
    pub role: VariableRole,
    pub stats: FiveNumber,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Description {
    pub summaries: Vec<VariableSummary>,
    /// Pearson correlations; `None` where a variable is constant.
    pub correlation: Vec<Vec<Option<f64>>>,
}

/// Quantile of already sorted, non-empty data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn five_number(values: &[f64]) -> FiveNumber {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    FiveNumber {
        min: v[0],
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: v[v.len() - 1],
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let m = a.len() as f64;
    let ma = a.iter().sum::<f64>() / m;
    let mb = b.iter().sum::<f64>() / m;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn describe(data: &PanelDataset) -> Description {
    let vars = data.variables();
    let roles = std::iter::repeat_n(VariableRole::Input, data.input_names().len())
        .chain(std::iter::repeat_n(
            VariableRole::Output,
            data.output_names().len(),
        ))
        .chain(std::iter::repeat_n(
            VariableRole::Context,
            data.context().num_vars(),
        ));
    let summaries = vars
        .iter()
        .zip(roles)
        .map(|((name, values), role)| VariableSummary {
            name: name.clone(),
            role,
            stats: five_number(values),
        })
        .collect();
    let correlation = vars
        .iter()
        .map(|(_, a)| vars.iter().map(|(_, b)| pearson(a, b)).collect())
        .collect();
    for (name, values) in &vars {
        if values.iter().all(|v| *v == values[0]) {
            log::warn!("variable '{name}' is constant; its correlations are undefined");
        }
    }
    Description {
        summaries,
        correlation,
    }
}
