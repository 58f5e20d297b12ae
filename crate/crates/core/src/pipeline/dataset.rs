//! CSV ingestion, lagging and interpolation.
//!
//! Each file has the header `dmu,period,<var>,...` with integer periods.
//! Empty cells and `NA` are missing. Lags are applied by period arithmetic:
//! with an input lag of 1 the inputs used for period `p` are the raw inputs
//! of period `p - 1`, and periods without the required lagged rows are
//! dropped.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::covariates::Covariates;
use crate::dea::CrossSection;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lags {
    pub inputs: i64,
    pub outputs: i64,
    pub context: i64,
}

impl Default for Lags {
    fn default() -> Self {
        Self {
            inputs: 1,
            outputs: 0,
            context: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct LoadConfig {
    pub lags: Lags,
    /// Fill missing cells from a per-DMU linear trend instead of failing.
    pub interpolate: bool,
}

/// Balanced panel of inputs, outputs and contextual variables.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    dmu_labels: Vec<String>,
    periods: Vec<i64>,
    input_names: Vec<String>,
    output_names: Vec<String>,
    // one N×I / N×J matrix per period
    inputs: Vec<DMatrix<f64>>,
    outputs: Vec<DMatrix<f64>>,
    context: Covariates,
    lags: Lags,
}

impl PanelDataset {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dmu_labels: Vec<String>,
        periods: Vec<i64>,
        input_names: Vec<String>,
        output_names: Vec<String>,
        inputs: Vec<DMatrix<f64>>,
        outputs: Vec<DMatrix<f64>>,
        context: Covariates,
        lags: Lags,
    ) -> Result<Self> {
        let n = dmu_labels.len();
        let t_count = periods.len();
        if n < 2 {
            return Err(Error::invalid("panel needs at least two DMUs"));
        }
        if t_count == 0 {
            return Err(Error::invalid("panel has no periods"));
        }
        if periods.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("periods must be strictly increasing"));
        }
        if inputs.len() != t_count || outputs.len() != t_count {
            return Err(Error::invalid(
                "one input and output matrix per period required",
            ));
        }
        if context.num_dmus() != n || context.num_periods() != t_count {
            return Err(Error::invalid(
                "context variables do not match the panel shape",
            ));
        }
        for t in 0..t_count {
            if inputs[t].shape() != (n, input_names.len())
                || outputs[t].shape() != (n, output_names.len())
            {
                return Err(Error::invalid(format!(
                    "period {} has the wrong matrix shape",
                    periods[t]
                )));
            }
            for (i, label) in dmu_labels.iter().enumerate() {
                for (j, name) in input_names.iter().enumerate() {
                    let v = inputs[t][(i, j)];
                    if !(v.is_finite() && v > 0.0) {
                        return Err(Error::invalid(format!(
                            "input '{name}' of DMU {label} in period {} must be positive, got {v}",
                            periods[t]
                        )));
                    }
                }
                for (j, name) in output_names.iter().enumerate() {
                    let v = outputs[t][(i, j)];
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(Error::invalid(format!(
                            "output '{name}' of DMU {label} in period {} must be nonnegative, got {v}",
                            periods[t]
                        )));
                    }
                }
            }
        }
        Ok(Self {
            dmu_labels,
            periods,
            input_names,
            output_names,
            inputs,
            outputs,
            context,
            lags,
        })
    }

    pub fn num_dmus(&self) -> usize {
        self.dmu_labels.len()
    }

    pub fn num_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn dmu_labels(&self) -> &[String] {
        &self.dmu_labels
    }

    /// Analysis periods (the output periods).
    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }

    pub fn inputs(&self, t: usize) -> &DMatrix<f64> {
        &self.inputs[t]
    }

    pub fn outputs(&self, t: usize) -> &DMatrix<f64> {
        &self.outputs[t]
    }

    pub fn context(&self) -> &Covariates {
        &self.context
    }

    pub fn lags(&self) -> Lags {
        self.lags
    }

    pub fn cross_section(&self, t: usize) -> Result<CrossSection> {
        Ok(CrossSection::new(
            self.dmu_labels.clone(),
            self.inputs[t].clone(),
            self.outputs[t].clone(),
        )?
        .with_period(self.periods[t].to_string()))
    }

    /// Every variable as `(name, values)` over all N·T cells, period-major.
    /// Inputs come first, then outputs, then context variables.
    pub fn variables(&self) -> Vec<(String, Vec<f64>)> {
        let n = self.num_dmus();
        let cells = |f: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
            (0..self.num_periods())
                .flat_map(|t| (0..n).map(move |i| (t, i)))
                .map(|(t, i)| f(t, i))
                .collect()
        };
        let mut out = Vec::new();
        for (j, name) in self.input_names.iter().enumerate() {
            out.push((name.clone(), cells(&|t, i| self.inputs[t][(i, j)])));
        }
        for (j, name) in self.output_names.iter().enumerate() {
            out.push((name.clone(), cells(&|t, i| self.outputs[t][(i, j)])));
        }
        for (k, name) in self.context.names().iter().enumerate() {
            out.push((name.clone(), cells(&|t, i| self.context.get(i, k, t))));
        }
        out
    }
}

/// Fill the missing entries of `series` (observed at `periods`) from the OLS
/// line of the observed values on the period. Observed entries are returned
/// unchanged.
pub fn interpolate_missing(periods: &[f64], series: &[Option<f64>]) -> Result<Vec<f64>> {
    if periods.len() != series.len() {
        return Err(Error::invalid("periods and series differ in length"));
    }
    let observed: Vec<(f64, f64)> = periods
        .iter()
        .zip(series)
        .filter_map(|(&t, v)| v.map(|y| (t, y)))
        .collect();
    if observed.len() == series.len() {
        return Ok(series.iter().map(|v| v.unwrap()).collect());
    }
    if observed.len() < 2 {
        return Err(Error::invalid(format!(
            "interpolation needs at least two observed values, found {}",
            observed.len()
        )));
    }
    let m = observed.len() as f64;
    let mean_t = observed.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = observed.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = observed
        .iter()
        .map(|(t, y)| (t - mean_t) * (y - mean_y))
        .sum();
    let sxx: f64 = observed.iter().map(|(t, _)| (t - mean_t).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("observed values share a single period"));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_t;
    Ok(periods
        .iter()
        .zip(series)
        .map(|(&t, v)| v.unwrap_or(intercept + slope * t))
        .collect())
}

struct RawRow {
    line: u64,
    values: Vec<Option<f64>>,
}

/// One CSV file in long format.
struct RawTable {
    file: String,
    names: Vec<String>,
    // DMUs in order of first appearance
    dmus: Vec<String>,
    first_line: HashMap<String, u64>,
    rows: HashMap<(String, i64), RawRow>,
    periods: BTreeSet<i64>,
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na")
}

impl RawTable {
    fn read(path: &Path) -> Result<Self> {
        let file = path.display().to_string();
        let data_err = |line: u64, message: String| Error::Data {
            file: file.clone(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let header = reader.headers()?.clone();
        if header.len() < 3 || &header[0] != "dmu" || &header[1] != "period" {
            return Err(data_err(
                1,
                "header must be `dmu,period,<variable>,...`".into(),
            ));
        }
        let names: Vec<String> = header.iter().skip(2).map(String::from).collect();

        let mut table = RawTable {
            file: file.clone(),
            names,
            dmus: Vec::new(),
            first_line: HashMap::new(),
            rows: HashMap::new(),
            periods: BTreeSet::new(),
        };
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let dmu = record[0].to_string();
            if dmu.is_empty() {
                return Err(data_err(line, "empty DMU label".into()));
            }
            let period: i64 = record[1].parse().map_err(|_| {
                data_err(line, format!("period '{}' is not an integer", &record[1]))
            })?;
            let values = record
                .iter()
                .skip(2)
                .zip(&table.names)
                .map(|(cell, name)| {
                    if is_missing(cell) {
                        Ok(None)
                    } else {
                        cell.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .map(Some)
                            .ok_or_else(|| {
                                data_err(line, format!("'{name}' value '{cell}' is not numeric"))
                            })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(prev) = table.rows.get(&(dmu.clone(), period)) {
                return Err(data_err(
                    line,
                    format!(
                        "duplicate row for DMU {dmu}, period {period} (first at line {})",
                        prev.line
                    ),
                ));
            }
            if !table.first_line.contains_key(&dmu) {
                table.first_line.insert(dmu.clone(), line);
                table.dmus.push(dmu.clone());
            }
            table.periods.insert(period);
            table.rows.insert((dmu, period), RawRow { line, values });
        }
        if table.rows.is_empty() {
            return Err(data_err(1, "file has no data rows".into()));
        }
        Ok(table)
    }

    /// Complete grid `[dmu][period][var]` over this file's periods, filling
    /// gaps by interpolation when allowed.
    fn complete(&self, dmus: &[String], interpolate: bool) -> Result<Grid> {
        let periods: Vec<i64> = self.periods.iter().copied().collect();
        let k = self.names.len();
        let mut values = vec![vec![vec![0.0; k]; periods.len()]; dmus.len()];
        for (i, dmu) in dmus.iter().enumerate() {
            for (v, name) in self.names.iter().enumerate() {
                let series: Vec<Option<f64>> = periods
                    .iter()
                    .map(|&p| self.rows.get(&(dmu.clone(), p)).and_then(|r| r.values[v]))
                    .collect();
                let filled = if interpolate {
                    interpolate_missing(
                        &periods.iter().map(|&p| p as f64).collect::<Vec<_>>(),
                        &series,
                    )
                    .map_err(|e| {
                        Error::invalid(format!("{}: DMU {dmu}, '{name}': {e}", self.file))
                    })?
                } else {
                    series
                        .iter()
                        .zip(&periods)
                        .map(|(v, &p)| v.ok_or_else(|| self.missing_error(dmu, p, name)))
                        .collect::<Result<Vec<_>>>()?
                };
                for (t, x) in filled.into_iter().enumerate() {
                    values[i][t][v] = x;
                }
            }
        }
        Ok(Grid { periods, values })
    }

    fn missing_error(&self, dmu: &str, period: i64, name: &str) -> Error {
        match self.rows.get(&(dmu.to_string(), period)) {
            Some(row) => Error::Data {
                file: self.file.clone(),
                line: row.line,
                message: format!("missing value for '{name}' (DMU {dmu}, period {period})"),
            },
            None => Error::invalid(format!(
                "{}: no row for DMU {dmu}, period {period}",
                self.file
            )),
        }
    }
}

struct Grid {
    periods: Vec<i64>,
    // [dmu][period index][variable]
    values: Vec<Vec<Vec<f64>>>,
}

impl Grid {
    fn index(&self, period: i64) -> Option<usize> {
        self.periods.binary_search(&period).ok()
    }
}

fn check_dmus(reference: &RawTable, other: &RawTable) -> Result<()> {
    for dmu in &other.dmus {
        if !reference.first_line.contains_key(dmu) {
            return Err(Error::Data {
                file: other.file.clone(),
                line: other.first_line[dmu],
                message: format!("DMU {dmu} does not appear in {}", reference.file),
            });
        }
    }
    for dmu in &reference.dmus {
        if !other.first_line.contains_key(dmu) {
            return Err(Error::Data {
                file: reference.file.clone(),
                line: reference.first_line[dmu],
                message: format!("DMU {dmu} does not appear in {}", other.file),
            });
        }
    }
    Ok(())
}

/// Read, align, interpolate and lag the three files. `context` may be absent.
pub fn load_panel(
    inputs: impl AsRef<Path>,
    outputs: impl AsRef<Path>,
    context: Option<&Path>,
    config: &LoadConfig,
) -> Result<PanelDataset> {
    let x = RawTable::read(inputs.as_ref())?;
    let y = RawTable::read(outputs.as_ref())?;
    let z = context.map(RawTable::read).transpose()?;
    check_dmus(&x, &y)?;
    if let Some(z) = &z {
        check_dmus(&x, z)?;
    }
    let dmus = x.dmus.clone();

    let xg = x.complete(&dmus, config.interpolate)?;
    let yg = y.complete(&dmus, config.interpolate)?;
    let zg = z
        .as_ref()
        .map(|z| z.complete(&dmus, config.interpolate))
        .transpose()?;
    let lags = config.lags;

    // analysis period p uses outputs at p - lag_out, inputs at p - lag_in, ...
    let mut periods = Vec::new();
    let mut sources = Vec::new();
    for &q in &yg.periods {
        let p = q + lags.outputs;
        let xi = xg.index(p - lags.inputs);
        let zi = match &zg {
            Some(zg) => zg.index(p - lags.context).map(Some),
            None => Some(None),
        };
        if let (Some(xi), Some(zi)) = (xi, zi) {
            periods.push(p);
            sources.push((xi, yg.index(q).unwrap(), zi));
        }
    }
    if periods.is_empty() {
        return Err(Error::invalid(
            "no period has all lagged inputs, outputs and context available",
        ));
    }

    let n = dmus.len();
    let t_count = periods.len();
    let mut in_mats = Vec::with_capacity(t_count);
    let mut out_mats = Vec::with_capacity(t_count);
    for &(xi, yi, _) in &sources {
        in_mats.push(DMatrix::from_fn(n, x.names.len(), |i, j| {
            xg.values[i][xi][j]
        }));
        out_mats.push(DMatrix::from_fn(n, y.names.len(), |i, j| {
            yg.values[i][yi][j]
        }));
    }
    let covariates = match (&z, &zg) {
        (Some(z), Some(zg)) => Covariates::from_fn(z.names.clone(), n, t_count, |i, k, t| {
            zg.values[i][sources[t].2.unwrap()][k]
        })?,
        _ => Covariates::empty(n, t_count),
    };
    PanelDataset::new(
        dmus, periods, x.names, y.names, in_mats, out_mats, covariates, lags,
    )
}

/// Paths of the three input files.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PanelFiles {
    pub inputs: PathBuf,
    pub outputs: PathBuf,
    pub context: Option<PathBuf>,
}

impl PanelFiles {
    pub fn load(&self, config: &LoadConfig) -> Result<PanelDataset> {
        load_panel(&self.inputs, &self.outputs, self.context.as_deref(), config)
    }
}
