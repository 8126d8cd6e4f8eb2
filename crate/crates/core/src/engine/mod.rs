//! Discrete-event network simulation.

pub mod channel;
pub mod event;
pub mod metrics;
pub mod scenario;
mod sim;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use channel::{Channel, Reception};
pub use event::EventQueue;
pub use metrics::{
    AggregateReport, ControlCounts, DataDrops, FrameLosses, MacTotals, MetricsReport, Summary,
};
pub use scenario::{generate_topology, scenario_suite, Position, ScenarioConfig, ShadowingMode};
pub use sim::{Event, Flow, Node, Simulation};

use crate::error::ConfigError;

/// Independent random streams derived from one seed. Keeping them apart
/// means two configurations with the same seed share topology and traffic.
pub(crate) mod streams {
    pub const TOPOLOGY: u64 = 0;
    pub const TRAFFIC: u64 = 1;
    pub const CHANNEL: u64 = 2;
    pub const MAC: u64 = 3;
    pub const ROUTING: u64 = 4;
    pub const LINK_SHADOWING: u64 = 5;
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of replica `index` of a run with base seed `base`.
pub fn replica_seed(base: u64, index: u32) -> u64 {
    // splitmix64 finaliser
    let mut z = base.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one simulation to completion.
pub fn run(config: &ScenarioConfig) -> Result<MetricsReport, ConfigError> {
    Ok(Simulation::new(config.clone())?.run_to_end())
}

fn replica_configs(config: &ScenarioConfig, n_seeds: u32) -> Result<Vec<ScenarioConfig>, ConfigError> {
    if n_seeds == 0 {
        return Err(ConfigError::invalid("n_seeds", "must be at least 1"));
    }
    config.validate()?;
    Ok((0..n_seeds)
        .map(|i| ScenarioConfig {
            seed: replica_seed(config.seed, i),
            ..config.clone()
        })
        .collect())
}

/// Runs `n_seeds` replications in parallel and aggregates them.
pub fn run_replicated(config: &ScenarioConfig, n_seeds: u32) -> Result<AggregateReport, ConfigError> {
    let reports = replica_configs(config, n_seeds)?
        .par_iter()
        .map(run)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AggregateReport::from_reports(reports))
}

/// Same as [`run_replicated`] on the calling thread.
pub fn run_replicated_sequential(
    config: &ScenarioConfig,
    n_seeds: u32,
) -> Result<AggregateReport, ConfigError> {
    let reports = replica_configs(config, n_seeds)?
        .iter()
        .map(run)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AggregateReport::from_reports(reports))
}
