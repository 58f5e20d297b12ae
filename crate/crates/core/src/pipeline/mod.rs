//! Data ingestion, descriptive statistics, the IIA experiment and the
//! end-to-end report.

mod dataset;
pub mod describe;
pub mod iia;
pub mod report;

pub use dataset::{interpolate_missing, load_panel, Lags, LoadConfig, PanelDataset, PanelFiles};
pub use describe::{describe, Description, FiveNumber, VariableRole, VariableSummary};
pub use iia::{iia_cross_sections, iia_experiment, IiaCorrelation, IiaRemoval, IiaReport};
pub use report::{run_pipeline, PipelineConfig, ReportBundle, MANIFEST_FILE, REPORT_FILES};
