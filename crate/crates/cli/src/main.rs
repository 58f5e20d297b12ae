use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rankdea::dea::{efficiency_panel, DeaModel};
use rankdea::dynamic::{
    bootstrap, check_identifiability, fit, BootstrapOptions, DrmData, DrmFit, FitOptions,
};
use rankdea::panel_regression::{Estimator, RegressionOptions, RobustKind};
use rankdea::pipeline::report::{
    panel_rankings, write_correlation, write_fitted, write_iia, write_parameters, write_rankings,
    write_scores, write_summary,
};
use rankdea::pipeline::{describe, iia_experiment, IiaCorrelation, Lags, LoadConfig, PanelFiles};
use rankdea::{run_pipeline, Error, PanelDataset, PipelineConfig, RankingSeries, Result};

#[derive(Parser)]
#[command(
    name = "rankdea",
    version,
    about = "DEA efficiency rankings with a dynamic Plackett-Luce second stage"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Inputs CSV (`dmu,period,<var>,...`)
    #[arg(long, global = true)]
    inputs: Option<PathBuf>,
    /// Outputs CSV
    #[arg(long, global = true)]
    outputs: Option<PathBuf>,
    /// Contextual variables CSV
    #[arg(long, global = true)]
    context: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    lag_inputs: i64,
    #[arg(long, global = true, default_value_t = 1)]
    lag_context: i64,
    /// Fill missing cells from a per-DMU linear trend
    #[arg(long, global = true)]
    interpolate: bool,
    /// Directory for the CSV outputs; tables go to stdout when absent
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Ccr,
    Ap,
    H,
    Log,
}

impl From<ModelArg> for DeaModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Ccr => DeaModel::Ccr,
            ModelArg::Ap => DeaModel::Ap,
            ModelArg::H => DeaModel::H,
            ModelArg::Log => DeaModel::Log,
        }
    }
}

#[derive(Args)]
struct CovariateArgs {
    /// Contextual variables to include (default: all)
    #[arg(long, value_delimiter = ',', conflicts_with = "no_covariates")]
    covariates: Option<Vec<String>>,
    /// Fit without contextual variables
    #[arg(long)]
    no_covariates: bool,
}

impl CovariateArgs {
    fn selection(&self) -> Option<Vec<String>> {
        if self.no_covariates {
            Some(Vec::new())
        } else {
            self.covariates.clone()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Five-number summaries and correlation matrix
    Describe,
    /// Efficiency scores for every DMU and period
    Dea {
        #[arg(long, value_enum, default_value = "h")]
        model: ModelArg,
    },
    /// Per-period rankings and the identifiability check
    Rank {
        #[arg(long, value_enum, default_value = "h")]
        model: ModelArg,
    },
    /// Fit the dynamic ranking model with Hessian standard errors
    Fit {
        #[command(flatten)]
        covariates: CovariateArgs,
    },
    /// Fit the dynamic ranking model with parametric bootstrap standard errors
    Bootstrap {
        #[command(flatten)]
        covariates: CovariateArgs,
        #[arg(long, default_value_t = 200)]
        replications: usize,
    },
    /// Leave-one-out IIA experiment
    Iia {
        /// Spearman correlation of scores instead of Pearson of ranks
        #[arg(long)]
        spearman: bool,
    },
    /// Full pipeline into --out-dir
    Report {
        #[command(flatten)]
        covariates: CovariateArgs,
        /// Bootstrap replications (omit to skip the bootstrap)
        #[arg(long)]
        replications: Option<usize>,
        /// Pooled OLS with intercept instead of entity fixed effects
        #[arg(long)]
        pooled: bool,
        /// HC1 instead of HC0 robust covariance
        #[arg(long)]
        hc1: bool,
        #[arg(long)]
        spearman: bool,
    },
}

impl Global {
    fn files(&self) -> Result<PanelFiles> {
        let need = |p: &Option<PathBuf>, flag: &str| {
            p.clone()
                .ok_or_else(|| Error::InvalidInput(format!("--{flag} is required")))
        };
        Ok(PanelFiles {
            inputs: need(&self.inputs, "inputs")?,
            outputs: need(&self.outputs, "outputs")?,
            context: self.context.clone(),
        })
    }

    fn load_config(&self) -> LoadConfig {
        LoadConfig {
            lags: Lags {
                inputs: self.lag_inputs,
                outputs: 0,
                context: self.lag_context,
            },
            interpolate: self.interpolate,
        }
    }

    fn load(&self) -> Result<PanelDataset> {
        self.files()?.load(&self.load_config())
    }

    /// Write one table either into the output directory or to stdout.
    fn emit(&self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        match &self.out_dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let mut w = BufWriter::new(File::create(dir.join(name))?);
                f(&mut w)?;
                w.flush()?;
            }
            None => {
                let stdout = io::stdout();
                let mut w = stdout.lock();
                f(&mut w)?;
            }
        }
        Ok(())
    }
}

/// Hunter's condition with the offending DMUs named on stderr.
fn check_labelled(data: &PanelDataset, rankings: &RankingSeries) -> Result<()> {
    check_identifiability(rankings).map_err(|v| {
        eprintln!("not identifiable: {}", v.labelled(data.dmu_labels()));
        Error::Identifiability(v)
    })
}

fn drm_data(data: &PanelDataset, covariates: &CovariateArgs) -> Result<DrmData> {
    let rankings = panel_rankings(data, &efficiency_panel(data, DeaModel::H)?)?;
    check_labelled(data, &rankings)?;
    let z = match covariates.selection() {
        None => data.context().clone(),
        Some(names) => data.context().select(&names)?,
    };
    DrmData::new(rankings, z)
}

fn report_fit(data: &PanelDataset, fits: &[&DrmFit], global: &Global) -> Result<()> {
    global.emit("drm_parameters.csv", |w| write_parameters(fits, w))?;
    if global.out_dir.is_some() {
        global.emit("drm_fitted.csv", |w| write_fitted(data, fits[0], w))?;
    }
    for warning in &fits[0].diagnostics.warnings {
        log::warn!("{warning}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(Error::InvalidInput("--threads must be positive".into()));
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match &cli.command {
        Command::Describe => {
            let desc = describe(&g.load()?);
            g.emit("summary.csv", |w| write_summary(&desc, w))?;
            g.emit("correlation.csv", |w| write_correlation(&desc, w))?;
        }
        Command::Dea { model } => {
            let data = g.load()?;
            let panel = efficiency_panel(&data, (*model).into())?;
            g.emit("efficiency_scores.csv", |w| {
                write_scores(&data, &[panel], w)
            })?;
        }
        Command::Rank { model } => {
            let data = g.load()?;
            let rankings = panel_rankings(&data, &efficiency_panel(&data, (*model).into())?)?;
            g.emit("rankings.csv", |w| write_rankings(&data, &rankings, w))?;
            check_labelled(&data, &rankings)?;
        }
        Command::Fit { covariates } => {
            let data = g.load()?;
            let drm = fit(&drm_data(&data, covariates)?, &FitOptions::default())?;
            report_fit(&data, &[&drm], g)?;
        }
        Command::Bootstrap {
            covariates,
            replications,
        } => {
            if *replications == 0 {
                return Err(Error::InvalidInput(
                    "--replications must be positive".into(),
                ));
            }
            let data = g.load()?;
            let drm_data = drm_data(&data, covariates)?;
            let options = FitOptions::default();
            let drm = fit(&drm_data, &options)?;
            let (boot, _) = bootstrap(
                &drm_data,
                &drm,
                &options,
                &BootstrapOptions::new(*replications, g.seed),
            )?;
            report_fit(&data, &[&drm, &boot], g)?;
        }
        Command::Iia { spearman } => {
            let data = g.load()?;
            let method = if *spearman {
                IiaCorrelation::SpearmanScores
            } else {
                IiaCorrelation::PearsonRanks
            };
            let report = iia_experiment(&data, method)?;
            g.emit("iia.csv", |w| write_iia(&data, &report, w))?;
            eprintln!(
                "unchanged_fraction={} rank_correlation={}",
                report.unchanged_fraction, report.rank_correlation
            );
        }
        Command::Report {
            covariates,
            replications,
            pooled,
            hc1,
            spearman,
        } => {
            let out_dir = g
                .out_dir
                .clone()
                .ok_or_else(|| Error::InvalidInput("report needs --out-dir".into()))?;
            let mut config = PipelineConfig::new(g.files()?, out_dir);
            config.load = g.load_config();
            config.covariates = covariates.selection();
            config.bootstrap_replications = *replications;
            config.seed = g.seed;
            config.regression = RegressionOptions {
                estimator: if *pooled {
                    Estimator::Pooled
                } else {
                    Estimator::EntityFe
                },
                robust: if *hc1 {
                    RobustKind::Hc1
                } else {
                    RobustKind::Hc0
                },
            };
            if *spearman {
                config.iia_correlation = IiaCorrelation::SpearmanScores;
            }
            let bundle = run_pipeline(&config)?;
            eprintln!(
                "wrote {} files and {}",
                bundle.files.len(),
                display(&bundle.manifest)
            );
        }
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
