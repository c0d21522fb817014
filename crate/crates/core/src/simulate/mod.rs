//! Synthetic dynamic panels and Monte Carlo experiments.

mod dgp;
mod experiment;

pub use dgp::{
    exog_name, generate, generate_replication, generate_with_seed, replication_seed, splitmix64,
    DgpSpec, DEPENDENT,
};
pub use experiment::{
    run_experiment, CoefSummary, Draw, EstimatorConfig, EstimatorSummary, McSummary, Replication,
    SeedEntry, Z_975,
};
