//! Scenario description, the area-scaling suite and node placement.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::analytics::RectRegion;
use crate::dsr::DsrConfig;
use crate::error::ConfigError;
use crate::frame::NodeId;
use crate::mac::MacParams;
use crate::propagation::{PropagationModel, RadioParams};
use crate::time::SimTime;

use super::stream_rng;
use super::streams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// How shadowing samples are tied to transmissions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShadowingMode {
    /// Fresh draw for every (frame, receiver) pair.
    #[default]
    PerFrame,
    /// One draw per node pair, fixed for the whole run and symmetric.
    PerLink,
}

impl std::str::FromStr for ShadowingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_frame" => Ok(ShadowingMode::PerFrame),
            "per_link" => Ok(ShadowingMode::PerLink),
            other => Err(format!("unknown shadowing mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub region: RectRegion,
    pub node_count: usize,
    pub propagation: PropagationModel,
    pub shadowing_mode: ShadowingMode,
    pub radio: RadioParams,
    pub mac: MacParams,
    pub dsr: DsrConfig,
    pub connections: usize,
    /// Packets per second per connection.
    pub cbr_rate: f64,
    pub payload_bytes: u32,
    pub sim_duration: SimTime,
    /// CBR sources start uniformly inside `[0, start_window]`.
    pub start_window: SimTime,
    pub seed: u64,
    /// Fixed node positions; `None` places nodes uniformly at random.
    pub positions: Option<Vec<Position>>,
    /// Fixed (source, destination) pairs; `None` samples them.
    pub flows: Option<Vec<(NodeId, NodeId)>>,
}

impl ScenarioConfig {
    pub fn new(region: RectRegion, node_count: usize, propagation: PropagationModel) -> Self {
        ScenarioConfig {
            region,
            node_count,
            propagation,
            shadowing_mode: ShadowingMode::default(),
            radio: RadioParams::baseline(),
            mac: MacParams::default(),
            dsr: DsrConfig::default(),
            connections: 5,
            cbr_rate: 1.0,
            payload_bytes: 512,
            sim_duration: SimTime::from_millis(250_000),
            start_window: SimTime::from_millis(10_000),
            seed: 1,
            positions: None,
            flows: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.node_count < 2 {
            return Err(ConfigError::invalid("node_count", format!("{} < 2", self.node_count)));
        }
        let flow_count = self.flows.as_ref().map_or(self.connections, Vec::len);
        if flow_count == 0 || flow_count > self.node_count / 2 {
            return Err(ConfigError::invalid(
                "connections",
                format!("{flow_count} not in 1..={}", self.node_count / 2),
            ));
        }
        if self.sim_duration == SimTime::ZERO {
            return Err(ConfigError::invalid("sim_duration", "must be positive"));
        }
        if !(self.cbr_rate.is_finite() && self.cbr_rate > 0.0) {
            return Err(ConfigError::invalid("cbr_rate", format!("{} is not positive", self.cbr_rate)));
        }
        if self.payload_bytes == 0 {
            return Err(ConfigError::invalid("payload_bytes", "must be positive"));
        }
        if self.dsr.send_buffer_capacity == 0 {
            return Err(ConfigError::invalid("send_buffer_capacity", "must be positive"));
        }
        if self.dsr.discovery_timeout == SimTime::ZERO {
            return Err(ConfigError::invalid("discovery_timeout", "must be positive"));
        }
        self.radio.validate()?;
        self.mac.validate()?;
        if let Some(p) = &self.positions {
            if p.len() != self.node_count {
                return Err(ConfigError::invalid(
                    "positions",
                    format!("{} positions for {} nodes", p.len(), self.node_count),
                ));
            }
            if p.iter().any(|q| !(q.x.is_finite() && q.y.is_finite())) {
                return Err(ConfigError::invalid("positions", "non-finite coordinate"));
            }
        }
        if let Some(flows) = &self.flows {
            let mut seen = HashSet::new();
            for &(s, d) in flows {
                if s == d || s.index() >= self.node_count || d.index() >= self.node_count {
                    return Err(ConfigError::invalid("flows", format!("bad pair {s} -> {d}")));
                }
                if !seen.insert((s, d)) {
                    return Err(ConfigError::invalid("flows", format!("duplicate pair {s} -> {d}")));
                }
            }
        }
        Ok(())
    }
}

/// The eight constant-density scenarios, smallest first.
pub fn scenario_suite() -> Vec<ScenarioConfig> {
    const SUITE: [(f64, f64, usize); 8] = [
        (400.0, 300.0, 30),
        (400.0, 400.0, 40),
        (500.0, 400.0, 50),
        (500.0, 500.0, 62),
        (600.0, 500.0, 75),
        (600.0, 600.0, 90),
        (700.0, 600.0, 105),
        (700.0, 700.0, 122),
    ];
    SUITE
        .iter()
        .map(|&(a, b, n)| {
            let region = RectRegion::new(a, b).expect("suite dimensions are positive");
            ScenarioConfig::new(region, n, PropagationModel::Shadowing)
        })
        .collect()
}

/// Node positions for `config`: the fixed list if given, else uniform
/// over the region from the topology stream of the seed.
pub fn generate_topology(config: &ScenarioConfig) -> Vec<Position> {
    if let Some(p) = &config.positions {
        return p.clone();
    }
    let mut rng = stream_rng(config.seed, streams::TOPOLOGY);
    uniform_positions(&config.region, config.node_count, &mut rng)
}

pub(crate) fn uniform_positions(region: &RectRegion, n: usize, rng: &mut ChaCha8Rng) -> Vec<Position> {
    // x spans the longer side
    let (w, l) = (region.length_d2(), region.width_d1());
    (0..n)
        .map(|_| Position {
            x: rng.random::<f64>() * w,
            y: rng.random::<f64>() * l,
        })
        .collect()
}

/// Distinct ordered (source, destination) pairs.
pub(crate) fn sample_flows(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<(NodeId, NodeId)> {
    if let Some(f) = &config.flows {
        return f.clone();
    }
    let n = config.node_count as u32;
    let mut chosen = Vec::with_capacity(config.connections);
    let mut seen = HashSet::new();
    while chosen.len() < config.connections {
        let s = rng.random_range(0..n);
        let d = rng.random_range(0..n);
        if s != d && seen.insert((s, d)) {
            chosen.push((NodeId(s), NodeId(d)));
        }
    }
    chosen
}
