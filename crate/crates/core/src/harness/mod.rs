//! Monte-Carlo campaigns: configuration, paired runs of every algorithm on
//! shared drops, aggregation and file output.

mod campaign;
mod config;
mod output;
mod stats;

pub use campaign::{
    drop_seed, run_campaign, run_drop, AlSummary, AlgorithmRun, Campaign, DropReport, HeuristicTrace, Metrics,
    Residuals,
};
pub use config::{Algorithm, ExperimentConfig, Scenario};
pub use output::{read_csv, report, to_csv, AlTraceRow, CdfRow, DropRow, HistogramRow, Meta, Metric, SummaryRow, Tables, UserRateRow};
pub use stats::{active_fap_histogram, aggregate_cdf, mean, percentile, std_dev};
