//! CSV writers and the full pipeline.
//!
//! Numbers are written with Rust's shortest round-trip formatting and NaN as
//! an empty cell, so identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::describe::{describe, Description};
use super::iia::{iia_experiment, IiaCorrelation, IiaReport};
use super::{LoadConfig, PanelDataset, PanelFiles};
use crate::dea::{efficiency_panel, DeaModel, EfficiencyPanel, ScoreStatus};
use crate::dynamic::{
    bootstrap, check_identifiability, fit, long_term_ranking, BootstrapOptions, DrmData, DrmFit,
    FitOptions, LongTermRanking,
};
use crate::error::{Error, Result};
use crate::panel_regression::{
    panel_ols, second_stage_table, ComparisonTable, Estimator, RegressionOptions, RegressionResult,
    RobustKind, SignAgreement,
};
use crate::ranking::RankingSeries;

pub const REPORT_FILES: [&str; 10] = [
    "summary.csv",
    "correlation.csv",
    "efficiency_scores.csv",
    "rankings.csv",
    "drm_parameters.csv",
    "drm_fitted.csv",
    "long_term_ranking.csv",
    "panel_regressions.csv",
    "second_stage_table.csv",
    "iia.csv",
];

pub const MANIFEST_FILE: &str = "manifest.txt";

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_summary<W: Write>(desc: &Description, w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["variable", "role", "min", "q1", "median", "q3", "max"])?;
    for s in &desc.summaries {
        let f = s.stats;
        out.write_record([
            s.name.clone(),
            s.role.label().into(),
            num(f.min),
            num(f.q1),
            num(f.median),
            num(f.q3),
            num(f.max),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_correlation<W: Write>(desc: &Description, w: W) -> Result<()> {
    let mut out = csv_writer(w);
    let mut header = vec!["variable".to_string()];
    header.extend(desc.summaries.iter().map(|s| s.name.clone()));
    out.write_record(&header)?;
    for (s, row) in desc.summaries.iter().zip(&desc.correlation) {
        let mut rec = vec![s.name.clone()];
        rec.extend(row.iter().map(|c| c.map(num).unwrap_or_default()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

fn status_label(status: ScoreStatus) -> String {
    match status {
        ScoreStatus::Optimal => "optimal".into(),
        ScoreStatus::Unbounded => "unbounded".into(),
        ScoreStatus::Failed(s) => format!("failed:{s:?}").to_lowercase(),
    }
}

/// One row per (DMU, period) with a column per panel; `status` is the AP
/// solve status when an AP panel is present.
pub fn write_scores<W: Write>(data: &PanelDataset, panels: &[EfficiencyPanel], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    let mut header = vec!["dmu".to_string(), "period".into()];
    header.extend(panels.iter().map(|p| p.model.label().to_lowercase()));
    header.push("status".into());
    out.write_record(&header)?;
    let status_panel = panels
        .iter()
        .find(|p| p.model == DeaModel::Ap)
        .or(panels.first());
    for t in 0..data.num_periods() {
        for (n, label) in data.dmu_labels().iter().enumerate() {
            let mut rec = vec![label.clone(), data.periods()[t].to_string()];
            rec.extend(panels.iter().map(|p| num(p.scores[(n, t)])));
            rec.push(
                status_panel
                    .map(|p| status_label(p.status(n, t)))
                    .unwrap_or_default(),
            );
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_rankings<W: Write>(data: &PanelDataset, rankings: &RankingSeries, w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["dmu", "period", "rank"])?;
    for (t, r) in rankings.iter().enumerate() {
        for (n, label) in data.dmu_labels().iter().enumerate() {
            out.write_record([
                label.clone(),
                data.periods()[t].to_string(),
                r.rank(n).to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_parameters<W: Write>(fits: &[&DrmFit], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["parameter", "estimate", "std_error", "p_value", "method"])?;
    for f in fits {
        let method = f.inference.as_ref().map_or("none", |i| i.method.label());
        for row in f.parameter_rows() {
            out.write_record([
                row.name,
                num(row.estimate),
                num(row.std_error),
                num(row.p_value),
                method.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_fitted<W: Write>(data: &PanelDataset, fit: &DrmFit, w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["dmu", "period", "worth", "score"])?;
    for t in 0..data.num_periods() {
        for (n, label) in data.dmu_labels().iter().enumerate() {
            out.write_record([
                label.clone(),
                data.periods()[t].to_string(),
                num(fit.fitted_worths[(n, t)]),
                num(fit.fitted_scores[(n, t)]),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Long-term rank next to the spread of the annual ranks.
pub fn write_long_term<W: Write>(
    data: &PanelDataset,
    long_term: &LongTermRanking,
    annual: &RankingSeries,
    w: W,
) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "dmu",
        "omega",
        "long_term_rank",
        "min_rank",
        "median_rank",
        "max_rank",
    ])?;
    for &n in long_term.ranking.ordering() {
        let mut ranks: Vec<f64> = annual.iter().map(|r| r.rank(n) as f64).collect();
        ranks.sort_by(f64::total_cmp);
        let m = ranks.len();
        let median = if m % 2 == 1 {
            ranks[m / 2]
        } else {
            0.5 * (ranks[m / 2 - 1] + ranks[m / 2])
        };
        out.write_record([
            data.dmu_labels()[n].clone(),
            num(long_term.worths()[n]),
            long_term.ranking.rank(n).to_string(),
            num(ranks[0]),
            num(median),
            num(ranks[m - 1]),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn estimator_label(e: Estimator) -> &'static str {
    match e {
        Estimator::Pooled => "pooled",
        Estimator::EntityFe => "entity_fe",
    }
}

fn robust_label(r: RobustKind) -> &'static str {
    match r {
        RobustKind::Hc0 => "hc0",
        RobustKind::Hc1 => "hc1",
    }
}

pub fn write_regressions<W: Write>(results: &[(DeaModel, RegressionResult)], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "model",
        "variable",
        "coefficient",
        "robust_se",
        "p_value",
        "classical_se",
        "n_obs",
        "r_squared",
        "estimator",
        "covariance",
    ])?;
    for (model, r) in results {
        for j in 0..r.names.len() {
            out.write_record([
                model.label().to_string(),
                r.names[j].clone(),
                num(r.coefficients[j]),
                num(r.robust_std_errors[j]),
                num(r.p_values[j]),
                num(r.classical_std_errors[j]),
                r.n_obs.to_string(),
                num(r.r_squared),
                estimator_label(r.estimator).into(),
                robust_label(r.robust).into(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn sign_label(s: SignAgreement) -> &'static str {
    match s {
        SignAgreement::Agree => "agree",
        SignAgreement::Opposite => "opposite",
        SignAgreement::MixedRegressions => "mixed",
        SignAgreement::Undetermined => "",
    }
}

/// Long format: one row per (variable, column) cell.
pub fn write_table<W: Write>(table: &ComparisonTable, w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "variable",
        "column",
        "coefficient",
        "std_error",
        "p_value",
        "stars",
        "sign",
    ])?;
    for row in &table.rows {
        for (col, cell) in table.columns.iter().zip(&row.cells) {
            let Some(c) = cell else { continue };
            out.write_record([
                row.variable.clone(),
                col.clone(),
                num(c.coefficient),
                num(c.std_error),
                num(c.p_value),
                c.stars().to_string(),
                sign_label(row.sign).to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_iia<W: Write>(data: &PanelDataset, report: &IiaReport, w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "period",
        "removed_dmu",
        "removed_h_score",
        "unchanged",
        "moved",
    ])?;
    for r in &report.removals {
        out.write_record([
            data.periods()[r.period].to_string(),
            data.dmu_labels()[r.removed].clone(),
            num(r.removed_score),
            r.unchanged.to_string(),
            r.moved.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub files: PanelFiles,
    pub load: LoadConfig,
    /// Contextual variables entering both second stages; `None` uses all.
    pub covariates: Option<Vec<String>>,
    /// Parametric bootstrap replications; `None` skips the bootstrap.
    pub bootstrap_replications: Option<usize>,
    pub seed: u64,
    pub regression: RegressionOptions,
    pub iia_correlation: IiaCorrelation,
    pub fit: FitOptions,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
}

impl PipelineConfig {
    pub fn new(files: PanelFiles, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            files,
            load: LoadConfig::default(),
            covariates: None,
            bootstrap_replications: None,
            seed: 0,
            regression: RegressionOptions::default(),
            iia_correlation: IiaCorrelation::default(),
            fit: FitOptions::default(),
            threads: None,
            out_dir: out_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bootstrap_replications == Some(0) {
            return Err(Error::invalid("bootstrap replications must be positive"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("thread count must be positive"));
        }
        Ok(())
    }

    /// Hash of everything the numeric outputs depend on: the settings and
    /// the contents of the input files (not their paths or the output
    /// directory).
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        let mut text = String::new();
        let lags = self.load.lags;
        let _ = writeln!(
            text,
            "lags={},{},{}",
            lags.inputs, lags.outputs, lags.context
        );
        let _ = writeln!(text, "interpolate={}", self.load.interpolate);
        let _ = writeln!(text, "covariates={:?}", self.covariates);
        let _ = writeln!(text, "bootstrap={:?}", self.bootstrap_replications);
        let _ = writeln!(text, "seed={}", self.seed);
        let _ = writeln!(
            text,
            "regression={},{}",
            estimator_label(self.regression.estimator),
            robust_label(self.regression.robust)
        );
        let _ = writeln!(text, "iia={:?}", self.iia_correlation);
        let _ = writeln!(text, "fit={:?}", self.fit);
        h.update(text.as_bytes());
        let mut files = vec![&self.files.inputs, &self.files.outputs];
        files.extend(self.files.context.as_ref());
        for f in files {
            let bytes = fs::read(f)?;
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        Ok(hex::encode(h.finalize()))
    }
}

#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub fit: DrmFit,
    pub bootstrap: Option<DrmFit>,
    pub table: ComparisonTable,
    pub iia: IiaReport,
    pub warnings: Vec<String>,
}

/// The four efficiency panels, in `DeaModel::ALL` order.
pub fn all_panels(data: &PanelDataset) -> Result<Vec<EfficiencyPanel>> {
    DeaModel::ALL
        .iter()
        .map(|&m| efficiency_panel(data, m))
        .collect()
}

/// Rankings implied by a panel, failing on any unsolved cell.
pub fn panel_rankings(data: &PanelDataset, panel: &EfficiencyPanel) -> Result<RankingSeries> {
    if let Some(&(n, t)) = panel.failures().first() {
        let ScoreStatus::Failed(status) = panel.status(n, t) else {
            unreachable!()
        };
        return Err(Error::Model {
            dmu: data.dmu_labels()[n].clone(),
            period: data.periods()[t].to_string(),
            status,
        });
    }
    Ok(panel.rankings().0)
}

fn selected_covariates(data: &PanelDataset, config: &PipelineConfig) -> Result<crate::Covariates> {
    match &config.covariates {
        None => Ok(data.context().clone()),
        Some(names) => data.context().select(names),
    }
}

fn write_file(
    dir: &Path,
    name: &str,
    body: Vec<u8>,
    hashes: &mut Vec<(String, String)>,
) -> Result<PathBuf> {
    let path = dir.join(name);
    hashes.push((name.to_string(), hex::encode(Sha256::digest(&body))));
    fs::write(&path, body)?;
    Ok(path)
}

/// Load, score, rank, fit both second stages, run the IIA experiment and
/// write every table plus a manifest into `config.out_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<ReportBundle> {
    config.validate()?;
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start thread pool: {e}")))?
            .install(|| run(config)),
        None => run(config),
    }
}

fn run(config: &PipelineConfig) -> Result<ReportBundle> {
    let config_hash = config.hash()?;
    let data = config.files.load(&config.load)?;
    let covariates = selected_covariates(&data, config)?;
    let mut warnings = Vec::new();

    let description = describe(&data);
    let panels = all_panels(&data)?;
    for p in &panels {
        for &(n, t) in &p.failures() {
            warnings.push(format!(
                "{} score of DMU {} in period {} could not be computed",
                p.model.label(),
                data.dmu_labels()[n],
                data.periods()[t]
            ));
        }
    }
    let h_panel = panels
        .iter()
        .find(|p| p.model == DeaModel::H)
        .expect("H panel");
    let rankings = panel_rankings(&data, h_panel)?;
    check_identifiability(&rankings).map_err(|v| {
        log::error!("not identifiable: {}", v.labelled(data.dmu_labels()));
        Error::Identifiability(v)
    })?;

    let drm_data = DrmData::new(rankings.clone(), covariates.clone())?;
    let drm = fit(&drm_data, &config.fit)?;
    warnings.extend(drm.diagnostics.warnings.iter().cloned());
    let boot = match config.bootstrap_replications {
        Some(b) => {
            let (boot, summary) = bootstrap(
                &drm_data,
                &drm,
                &config.fit,
                &BootstrapOptions::new(b, config.seed),
            )?;
            if summary.failed > 0 {
                warnings.push(format!(
                    "{} of {b} bootstrap replicates dropped",
                    summary.failed
                ));
            }
            Some(boot)
        }
        None => None,
    };
    let long_term =
        long_term_ranking(&DrmData::without_covariates(rankings.clone())?, &config.fit)?;
    warnings.extend(
        long_term
            .fit
            .diagnostics
            .warnings
            .iter()
            .map(|w| format!("long-term fit: {w}")),
    );

    let mut regressions = Vec::new();
    if covariates.num_vars() > 0 {
        for p in &panels {
            let unusable = !p.failures().is_empty()
                || (p.model == DeaModel::Ap
                    && (0..p.num_dmus()).any(|n| {
                        (0..p.num_periods()).any(|t| p.status(n, t) == ScoreStatus::Unbounded)
                    }));
            if unusable {
                warnings.push(format!(
                    "{} regression skipped: panel has unbounded or failed scores",
                    p.model.label()
                ));
                continue;
            }
            regressions.push((
                p.model,
                panel_ols(&p.scores, &covariates, &config.regression)?,
            ));
        }
    }
    let table = second_stage_table(&regressions, &drm, boot.as_ref());
    let iia = iia_experiment(&data, config.iia_correlation)?;
    for w in &warnings {
        log::warn!("{w}");
    }

    let dir = &config.out_dir;
    fs::create_dir_all(dir)?;
    let mut hashes = Vec::new();
    let mut files = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> Result<()>| -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        files.push(write_file(dir, name, buf, &mut hashes)?);
        Ok(())
    };
    let fits: Vec<&DrmFit> = std::iter::once(&drm).chain(boot.as_ref()).collect();
    emit(REPORT_FILES[0], &|b| write_summary(&description, b))?;
    emit(REPORT_FILES[1], &|b| write_correlation(&description, b))?;
    emit(REPORT_FILES[2], &|b| write_scores(&data, &panels, b))?;
    emit(REPORT_FILES[3], &|b| write_rankings(&data, &rankings, b))?;
    emit(REPORT_FILES[4], &|b| write_parameters(&fits, b))?;
    emit(REPORT_FILES[5], &|b| write_fitted(&data, &drm, b))?;
    emit(REPORT_FILES[6], &|b| {
        write_long_term(&data, &long_term, &rankings, b)
    })?;
    emit(REPORT_FILES[7], &|b| write_regressions(&regressions, b))?;
    emit(REPORT_FILES[8], &|b| write_table(&table, b))?;
    emit(REPORT_FILES[9], &|b| write_iia(&data, &iia, b))?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "config_sha256={config_hash}");
    let _ = writeln!(manifest, "seed={}", config.seed);
    let _ = writeln!(
        manifest,
        "bootstrap_replications={}",
        config.bootstrap_replications.unwrap_or(0)
    );
    let _ = writeln!(manifest, "dmus={}", data.num_dmus());
    let _ = writeln!(manifest, "periods={}", data.num_periods());
    let _ = writeln!(manifest, "covariates={}", covariates.names().join(","));
    let _ = writeln!(manifest, "loglik={}", num(drm.loglik));
    let _ = writeln!(
        manifest,
        "iia_unchanged_fraction={}",
        num(iia.unchanged_fraction)
    );
    let _ = writeln!(
        manifest,
        "iia_rank_correlation={}",
        num(iia.rank_correlation)
    );
    let _ = writeln!(manifest, "warnings={}", warnings.len());
    let _ = writeln!(manifest, "files={}", REPORT_FILES.join(","));
    for (name, digest) in &hashes {
        let _ = writeln!(manifest, "sha256.{name}={digest}");
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, manifest)?;

    Ok(ReportBundle {
        out_dir: dir.clone(),
        files,
        manifest: manifest_path,
        fit: drm,
        bootstrap: boot,
        table,
        iia,
        warnings,
    })
}
