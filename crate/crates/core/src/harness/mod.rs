//! Monte-Carlo experiments and separation of user data.

mod config;
mod run;
mod separate;
mod summary;

pub use config::{
    derive_seed, generate_replicate, sim1_sources, ExperimentConfig, HarmonicConfig, Method, MixingConfig, Replicate,
    SourceConfig, PRESETS, PRESET_SEED,
};
pub use run::{
    estimate_file_name, read_results_csv, replicate_mixing, run_experiment, run_method, write_experiment,
    write_results_csv, write_timings_csv, ExperimentResult, ResultRow, RESULTS_HEADER,
};
pub use separate::{report, separate, SeparateOptions, SeparationOutput};
pub use summary::{
    boxplot_svg, median_of, nearest_rank, summarize, write_boxplot_svg, write_summary_csv, QuantileRow,
};
