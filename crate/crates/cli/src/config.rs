//! Experiment files: TOML with flat `[section]` tables.
//!
//! ```toml
//! [experiment]
//! name = "power"
//! seeds = 10
//! output = "power.csv"
//!
//! [scenario]
//! suite_index = 3
//! propagation = "shadowing"
//!
//! [radio]
//! tx_power_dbm = 27.67
//!
//! [sweep]
//! long_retry_limit = [7, 12]
//! ```
//!
//! Every key is optional. Unset radio keys take the baseline radio values.

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use shadownet::analytics::RectRegion;
use shadownet::engine::{scenario_suite, ScenarioConfig, ShadowingMode};
use shadownet::propagation::{PowerDbm, PropagationModel};
use shadownet::{ConfigError, SimTime};
use toml::Spanned;

use crate::error::CliError;

type Field<T> = Option<Spanned<T>>;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    experiment: Option<RawExperiment>,
    scenario: Option<RawScenario>,
    radio: Option<RawRadio>,
    mac: Option<RawMac>,
    traffic: Option<RawTraffic>,
    routing: Option<RawRouting>,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: Field<String>,
    seeds: Field<u32>,
    seed: Field<u64>,
    output: Field<String>,
    detail: Field<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    suite_index: Field<usize>,
    width_m: Field<f64>,
    length_m: Field<f64>,
    node_count: Field<usize>,
    propagation: Field<String>,
    shadowing_mode: Field<String>,
    sim_duration_s: Field<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRadio {
    tx_power_dbm: Field<f64>,
    rx_threshold_dbm: Field<f64>,
    carrier_sense_dbm: Field<f64>,
    tx_gain: Field<f64>,
    rx_gain: Field<f64>,
    tx_height_m: Field<f64>,
    rx_height_m: Field<f64>,
    sigma_db: Field<f64>,
    ref_distance_m: Field<f64>,
    path_loss_exponent: Field<f64>,
    frequency_hz: Field<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMac {
    slot_us: Field<u64>,
    sifs_us: Field<u64>,
    difs_us: Field<u64>,
    cw_min: Field<u32>,
    cw_max: Field<u32>,
    long_retry_limit: Field<u32>,
    short_retry_limit: Field<u32>,
    data_rate_bps: Field<u64>,
    rts_threshold_bytes: Field<u32>,
    queue_capacity: Field<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraffic {
    connections: Field<usize>,
    cbr_rate_pps: Field<f64>,
    payload_bytes: Field<u32>,
    start_window_s: Field<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRouting {
    send_buffer_capacity: Field<usize>,
    send_buffer_timeout_s: Field<f64>,
    discovery_timeout_s: Field<f64>,
    discovery_timeout_max_s: Field<f64>,
    reply_from_cache: Field<bool>,
    broadcast_jitter_ms: Field<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    suite: Field<SuiteSelection>,
    propagation: Field<Vec<String>>,
    tx_power_dbm: Field<Vec<f64>>,
    long_retry_limit: Field<Vec<u32>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SuiteSelection {
    Keyword(String),
    Indices(Vec<usize>),
}

/// One point of a parameter sweep; unset fields keep the base value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepPoint {
    pub suite_index: Option<usize>,
    pub propagation: Option<PropagationModel>,
    pub tx_power_dbm: Option<f64>,
    pub long_retry_limit: Option<u32>,
}

impl SweepPoint {
    pub fn apply(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut c = base.clone();
        if let Some(i) = self.suite_index {
            let s = &scenario_suite()[i];
            c.region = s.region;
            c.node_count = s.node_count;
        }
        if let Some(p) = self.propagation {
            c.propagation = p;
        }
        if let Some(pt) = self.tx_power_dbm {
            c.radio.tx_power = PowerDbm(pt);
        }
        if let Some(r) = self.long_retry_limit {
            c.mac.long_retry_limit = r;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub base: ScenarioConfig,
    /// Never empty; a file without a sweep has one point equal to `base`.
    pub sweep: Vec<SweepPoint>,
    pub n_seeds: u32,
    pub output_path: PathBuf,
    /// Also write one row per replication.
    pub detail: bool,
}

impl ExperimentSpec {
    pub fn points(&self) -> impl Iterator<Item = ScenarioConfig> + '_ {
        self.sweep.iter().map(|p| p.apply(&self.base))
    }
}

struct Source<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Source<'_> {
    fn line_of(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn error(&self, span: Range<usize>, message: impl Into<String>) -> CliError {
        CliError::Parse {
            path: self.path.to_path_buf(),
            line: self.line_of(span.start),
            message: message.into(),
        }
    }

    /// Line of the first `key = ...` whose key starts with `prefix`.
    fn line_of_key(&self, prefix: &str) -> usize {
        self.text
            .lines()
            .position(|l| l.trim_start().starts_with(prefix))
            .map_or(1, |i| i + 1)
    }

    fn positive(&self, field: &Field<f64>, name: &str) -> Result<Option<f64>, CliError> {
        match field {
            Some(v) if !(v.get_ref().is_finite() && *v.get_ref() > 0.0) => Err(self.error(
                v.span(),
                format!("{name} must be a positive number, got {}", v.get_ref()),
            )),
            Some(v) => Ok(Some(*v.get_ref())),
            None => Ok(None),
        }
    }

    fn finite(&self, field: &Field<f64>, name: &str) -> Result<Option<f64>, CliError> {
        match field {
            Some(v) if !v.get_ref().is_finite() => {
                Err(self.error(v.span(), format!("{name} must be finite")))
            }
            Some(v) => Ok(Some(*v.get_ref())),
            None => Ok(None),
        }
    }

    fn seconds(&self, field: &Field<f64>, name: &str) -> Result<Option<SimTime>, CliError> {
        Ok(self.positive(field, name)?.map(SimTime::from_secs_f64))
    }

    fn propagation(&self, value: &Spanned<String>) -> Result<PropagationModel, CliError> {
        value
            .get_ref()
            .parse()
            .map_err(|e: String| self.error(value.span(), e))
    }
}

fn get<T: Copy>(f: &Field<T>) -> Option<T> {
    f.as_ref().map(|v| *v.get_ref())
}

pub fn parse_config(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(path, &text)
}

/// Parses experiment text; `path` is only used in diagnostics and as the
/// default output name.
pub fn parse_config_str(path: &Path, text: &str) -> Result<ExperimentSpec, CliError> {
    let src = Source { path, text };
    let raw: RawFile = toml::from_str(text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.span().map_or(1, |s| src.line_of(s.start)),
        message: e.message().trim().to_string(),
    })?;

    let exp = raw.experiment.unwrap_or_default();
    let sc = raw.scenario.unwrap_or_default();
    let radio_raw = raw.radio.unwrap_or_default();
    let mac_raw = raw.mac.unwrap_or_default();
    let tr = raw.traffic.unwrap_or_default();
    let rt = raw.routing.unwrap_or_default();

    let suite = scenario_suite();
    let mut base = suite[0].clone();
    if let Some(i) = &sc.suite_index {
        let s = suite.get(*i.get_ref()).ok_or_else(|| {
            src.error(i.span(), format!("suite_index must be below {}", suite.len()))
        })?;
        base = s.clone();
    }
    let width = src.positive(&sc.width_m, "width_m")?;
    let length = src.positive(&sc.length_m, "length_m")?;
    if width.is_some() || length.is_some() {
        let w = width.unwrap_or(base.region.length_d2());
        let l = length.unwrap_or(base.region.width_d1());
        base.region = RectRegion::new(w, l).map_err(ConfigError::from)?;
    }
    if let Some(n) = get(&sc.node_count) {
        base.node_count = n;
    }
    if let Some(p) = &sc.propagation {
        base.propagation = src.propagation(p)?;
    }
    if let Some(m) = &sc.shadowing_mode {
        base.shadowing_mode = m
            .get_ref()
            .parse::<ShadowingMode>()
            .map_err(|e| src.error(m.span(), e))?;
    }
    if let Some(t) = src.seconds(&sc.sim_duration_s, "sim_duration_s")? {
        base.sim_duration = t;
    }

    let r = &mut base.radio;
    if let Some(v) = src.finite(&radio_raw.tx_power_dbm, "tx_power_dbm")? {
        r.tx_power = PowerDbm(v);
    }
    if let Some(v) = src.finite(&radio_raw.rx_threshold_dbm, "rx_threshold_dbm")? {
        r.rx_threshold = PowerDbm(v);
    }
    if let Some(v) = src.finite(&radio_raw.carrier_sense_dbm, "carrier_sense_dbm")? {
        r.carrier_sense_threshold = PowerDbm(v);
    }
    if let Some(v) = src.positive(&radio_raw.tx_gain, "tx_gain")? {
        r.tx_gain = v;
    }
    if let Some(v) = src.positive(&radio_raw.rx_gain, "rx_gain")? {
        r.rx_gain = v;
    }
    if let Some(v) = src.positive(&radio_raw.tx_height_m, "tx_height_m")? {
        r.tx_height_m = v;
    }
    if let Some(v) = src.positive(&radio_raw.rx_height_m, "rx_height_m")? {
        r.rx_height_m = v;
    }
    if let Some(v) = &radio_raw.sigma_db {
        let s = *v.get_ref();
        if !(s.is_finite() && s >= 0.0) {
            return Err(src.error(v.span(), format!("sigma_db must be non-negative, got {s}")));
        }
        r.shadow_sigma_db = s;
    }
    if let Some(v) = src.positive(&radio_raw.ref_distance_m, "ref_distance_m")? {
        r.ref_distance_m = v;
    }
    if let Some(v) = src.positive(&radio_raw.path_loss_exponent, "path_loss_exponent")? {
        r.path_loss_exponent = v;
    }
    if let Some(v) = src.positive(&radio_raw.frequency_hz, "frequency_hz")? {
        r.carrier_freq_hz = v;
    }

    let m = &mut base.mac;
    if let Some(v) = get(&mac_raw.slot_us) {
        m.slot_time = SimTime::from_micros(v);
    }
    if let Some(v) = get(&mac_raw.sifs_us) {
        m.sifs = SimTime::from_micros(v);
    }
    if let Some(v) = get(&mac_raw.difs_us) {
        m.difs = SimTime::from_micros(v);
    }
    if let Some(v) = get(&mac_raw.cw_min) {
        m.cw_min = v;
    }
    if let Some(v) = get(&mac_raw.cw_max) {
        m.cw_max = v;
    }
    if let Some(v) = get(&mac_raw.long_retry_limit) {
        m.long_retry_limit = v;
    }
    if let Some(v) = get(&mac_raw.short_retry_limit) {
        m.short_retry_limit = v;
    }
    if let Some(v) = get(&mac_raw.data_rate_bps) {
        m.data_rate_bps = v;
    }
    if let Some(v) = get(&mac_raw.rts_threshold_bytes) {
        m.rts_threshold = v;
    }
    if let Some(v) = get(&mac_raw.queue_capacity) {
        m.queue_capacity = v;
    }

    if let Some(v) = get(&tr.connections) {
        base.connections = v;
    }
    if let Some(v) = src.positive(&tr.cbr_rate_pps, "cbr_rate_pps")? {
        base.cbr_rate = v;
    }
    if let Some(v) = get(&tr.payload_bytes) {
        base.payload_bytes = v;
    }
    if let Some(v) = &tr.start_window_s {
        let s = *v.get_ref();
        if !(s.is_finite() && s >= 0.0) {
            return Err(src.error(v.span(), "start_window_s must be non-negative"));
        }
        base.start_window = SimTime::from_secs_f64(s);
    }

    if let Some(v) = get(&rt.send_buffer_capacity) {
        base.dsr.send_buffer_capacity = v;
    }
    if let Some(t) = src.seconds(&rt.send_buffer_timeout_s, "send_buffer_timeout_s")? {
        base.dsr.send_buffer_timeout = t;
    }
    if let Some(t) = src.seconds(&rt.discovery_timeout_s, "discovery_timeout_s")? {
        base.dsr.discovery_timeout = t;
    }
    if let Some(t) = src.seconds(&rt.discovery_timeout_max_s, "discovery_timeout_max_s")? {
        base.dsr.discovery_timeout_max = t;
    }
    if let Some(v) = get(&rt.reply_from_cache) {
        base.dsr.reply_from_cache = v;
    }
    if let Some(v) = &rt.broadcast_jitter_ms {
        let s = *v.get_ref();
        if !(s.is_finite() && s >= 0.0) {
            return Err(src.error(v.span(), "broadcast_jitter_ms must be non-negative"));
        }
        base.dsr.broadcast_jitter = SimTime::from_secs_f64(s / 1000.0);
    }

    if let Some(s) = get(&exp.seed) {
        base.seed = s;
    }
    let n_seeds = match &exp.seeds {
        Some(v) if *v.get_ref() == 0 => return Err(src.error(v.span(), "seeds must be at least 1")),
        Some(v) => *v.get_ref(),
        None => 10,
    };
    let name = exp.name.as_ref().map_or_else(
        || {
            path.file_stem()
                .map_or("experiment".into(), |s| s.to_string_lossy().into_owned())
        },
        |n| n.get_ref().clone(),
    );
    let output_path = exp
        .output
        .as_ref()
        .map_or_else(|| PathBuf::from(format!("{name}.csv")), |o| PathBuf::from(o.get_ref()));

    let sweep = expand_sweep(&src, raw.sweep.unwrap_or_default(), suite.len())?;
    let spec = ExperimentSpec {
        name,
        base,
        sweep,
        n_seeds,
        output_path,
        detail: get(&exp.detail).unwrap_or(false),
    };
    for point in spec.points() {
        point.validate().map_err(|e| match &e {
            ConfigError::Invalid { field, .. } => CliError::Parse {
                path: path.to_path_buf(),
                line: src.line_of_key(field),
                message: e.to_string(),
            },
            ConfigError::Model(_) => CliError::Config(e),
        })?;
    }
    Ok(spec)
}

/// Cartesian product of the sweep lists, suite outermost.
fn expand_sweep(src: &Source, raw: RawSweep, suite_len: usize) -> Result<Vec<SweepPoint>, CliError> {
    let suite: Vec<Option<usize>> = match &raw.suite {
        None => vec![None],
        Some(s) => match s.get_ref() {
            SuiteSelection::Keyword(k) if k == "all" => (0..suite_len).map(Some).collect(),
            SuiteSelection::Keyword(k) => {
                return Err(src.error(s.span(), format!("suite must be \"all\" or a list of indices, got `{k}`")))
            }
            SuiteSelection::Indices(v) => {
                if let Some(bad) = v.iter().find(|&&i| i >= suite_len) {
                    return Err(src.error(s.span(), format!("suite index {bad} out of range")));
                }
                v.iter().copied().map(Some).collect()
            }
        },
    };
    let propagation: Vec<Option<PropagationModel>> = match &raw.propagation {
        None => vec![None],
        Some(list) => list
            .get_ref()
            .iter()
            .map(|name| {
                name.parse::<PropagationModel>()
                    .map(Some)
                    .map_err(|e: String| src.error(list.span(), e))
            })
            .collect::<Result<_, _>>()?,
    };
    let power: Vec<Option<f64>> = match &raw.tx_power_dbm {
        None => vec![None],
        Some(list) => {
            if list.get_ref().iter().any(|p| !p.is_finite()) {
                return Err(src.error(list.span(), "tx_power_dbm values must be finite"));
            }
            list.get_ref().iter().copied().map(Some).collect()
        }
    };
    let retry: Vec<Option<u32>> = match &raw.long_retry_limit {
        None => vec![None],
        Some(list) => list.get_ref().iter().copied().map(Some).collect(),
    };
    for (name, len, span) in [
        ("suite", suite.len(), raw.suite.as_ref().map(|s| s.span())),
        ("propagation", propagation.len(), raw.propagation.as_ref().map(|s| s.span())),
        ("tx_power_dbm", power.len(), raw.tx_power_dbm.as_ref().map(|s| s.span())),
        ("long_retry_limit", retry.len(), raw.long_retry_limit.as_ref().map(|s| s.span())),
    ] {
        if len == 0 {
            return Err(src.error(span.unwrap_or(0..0), format!("sweep list `{name}` is empty")));
        }
    }
    let mut points = Vec::new();
    for &s in &suite {
        for &p in &propagation {
            for &pt in &power {
                for &r in &retry {
                    points.push(SweepPoint {
                        suite_index: s,
                        propagation: p,
                        tx_power_dbm: pt,
                        long_retry_limit: r,
                    });
                }
            }
        }
    }
    Ok(points)
}
