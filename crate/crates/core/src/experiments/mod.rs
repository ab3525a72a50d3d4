//! The simulation studies: oracle and plug-in tables, the length- versus
//! coverage-calibration comparison and the length-scaling study.

mod config;
mod report;
mod runs;

pub use config::{default_grid_cells, ExperimentConfig, KChoice};
pub use report::{Aggregate, ExperimentReport, RepRecord};
pub use runs::{
    run_comparison, run_length_scaling, run_oracle_table, run_plugin_table, COMPARISON_SIZES, ORACLE_SUPPORT,
    SCALING_SIZES,
};
