//! Metrics, the step × sequence × model benchmark grid, and report files.

mod grid;
mod metrics;
mod report;

pub use grid::{
    full_grid, load_series, run_benchmark_grid, BenchmarkSpec, Cell, CellOutcome, CellResult, DataSource, GridOutcome,
};
pub use metrics::{
    compute_metrics, evaluate, evaluate_steps, report_from_series, step_series, Metrics, MetricsReport, MAPE_EPS,
};
pub use report::{step_label, table_csv, table_markdown, write_forecast_csv, write_tables, Row, TABLE_HEADER};
