//! Experiment drivers: the method-combination grid, the variation sweep and
//! report output.

mod report;
mod run;
mod spec;

pub use report::{csv_field, emit_report, parse_report_csv, render_report, ReportFormat, ReportRow};
pub use run::{
    load_data, prepare_data, render_sweep, run_combo_grid, run_combo_grid_on, run_pipeline, run_variation_sweep_on,
    train_float, GridOutcome, PreparedData, SweepRow,
};
pub use spec::{ExperimentSpec, Methods, NetworkKind};
