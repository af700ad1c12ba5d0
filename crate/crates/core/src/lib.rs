//! Agent-based simulation of recommender feedback loops.
//!
//! Users repeatedly pick the item with the highest estimated utility from
//! noisy private signals plus a recommendation signal. The estimator is a
//! least-squares model learned in parallel training worlds. Consumption logs
//! are then scored for inter- and intra-user genre diversity.

pub mod acceptance;
pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod io;
pub mod learner;
pub mod metrics;
pub mod recommend;
pub mod rng;
pub mod signals;
pub mod stats;
pub mod world;

pub use config::{parse_config, ExperimentConfig};
pub use engine::{run_deployment_phase, run_training_phase, ConsumptionLog};
pub use error::{Error, Result};
pub use experiment::{run_experiment, RunResults};
pub use metrics::{metrics_report, MetricsReport};
pub use recommend::AlgorithmKind;
