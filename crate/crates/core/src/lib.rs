//! Two-stage efficiency analysis: DEA scores per period, then either a
//! score-driven Plackett–Luce model of the implied rankings or a panel
//! regression of the scores on contextual variables.

pub mod covariates;
pub mod dea;
pub mod dynamic;
pub mod error;
pub mod lp;
pub mod panel_regression;
pub mod pipeline;
pub mod plackett_luce;
pub mod ranking;

pub use covariates::Covariates;
pub use dea::{CrossSection, DeaModel, EfficiencyPanel};
pub use error::{Error, Result};
pub use pipeline::{load_panel, run_pipeline, LoadConfig, PanelDataset, PipelineConfig};
pub use ranking::{Ranking, RankingSeries};
