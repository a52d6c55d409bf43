//! Benchmark black boxes, space-filling designs, scaling, ground-truth
//! profiles and estimation metrics.

mod dataset;
mod design;
mod functions;
mod metrics;
mod oracle;

pub use dataset::Dataset;
pub use design::{lhs_sample, lhs_sample_1d, linspace, to_native, to_unit};
pub use functions::{
    benchmark, eval_function, Benchmark, BenchmarkKind, BlackBox, SubprocessBlackBox,
    BENCHMARK_NAMES,
};
pub use metrics::{compute_metrics, MetricsReport};
pub use oracle::{
    read_truth_csv, true_profile, true_profile_in, write_truth_csv, OracleSettings,
};
