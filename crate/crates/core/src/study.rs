//! Datasets behind the figure-style experiments: closed-form curves and
//! simulated delivery ratios over the scenario suite.

use crate::analytics::{hop_estimate, mean_link_distance, RectRegion};
use crate::engine::{run_replicated, scenario_suite, AggregateReport, ScenarioConfig, Summary};
use crate::error::ConfigError;
use crate::propagation::{
    calibrate_scaling, mean_path_loss_db, path_loss_pdf, predicted_delivery_ratio,
    prob_above_threshold, received_power_tworay, PowerDbm, PropagationModel, RadioParams,
};

/// Transmission range used for hop-count estimates.
pub const HOP_RANGE_M: f64 = 250.0;
/// Distances at which path-loss densities are tabulated.
pub const PATH_LOSS_DISTANCES_M: [f64; 4] = [4.0, 40.0, 80.0, 186.0];
/// Raised transmit power of the power mitigation.
pub const HIGH_POWER_DBM: f64 = 27.67;
/// Raised retry limit of the retry mitigation.
pub const HIGH_RETRY_LIMIT: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopRow {
    pub area_m2: f64,
    pub d1_m: f64,
    pub d2_m: f64,
    pub mean_link_distance_m: f64,
    pub hop_estimate: u32,
}

/// Mean link distance and hop estimate for every suite rectangle.
pub fn hop_table(range_m: f64) -> Vec<HopRow> {
    scenario_suite()
        .iter()
        .map(|s| {
            let r = &s.region;
            HopRow {
                area_m2: r.area(),
                d1_m: r.width_d1(),
                d2_m: r.length_d2(),
                mean_link_distance_m: mean_link_distance(r).mean_distance,
                hop_estimate: hop_estimate(r, range_m),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossRow {
    pub d_m: f64,
    pub mean_pl_db: f64,
    pub x_db: f64,
    pub pdf: f64,
}

/// Gaussian path-loss densities over mean ± 4 sigma in `step_db` steps.
pub fn path_loss_densities(
    radio: &RadioParams,
    distances: &[f64],
    step_db: f64,
) -> Result<Vec<PathLossRow>, ConfigError> {
    if !(step_db > 0.0) {
        return Err(ConfigError::invalid("step_db", "must be positive"));
    }
    let sigma = radio.shadow_sigma_db;
    let steps = (8.0 * sigma / step_db).round() as usize;
    let mut rows = Vec::new();
    for &d in distances {
        let mean = mean_path_loss_db(radio, d)?;
        for i in 0..=steps {
            let x = mean - 4.0 * sigma + i as f64 * step_db;
            rows.push(PathLossRow {
                d_m: d,
                mean_pl_db: mean,
                x_db: x,
                pdf: path_loss_pdf(radio, d, x)?,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExceedanceRow {
    pub d_m: f64,
    pub area_pi_d2_m2: f64,
    pub prob_above_threshold: f64,
}

/// Reception probability against distance, `from..=to` in `step` metres.
pub fn exceedance_curve(
    radio: &RadioParams,
    from: f64,
    to: f64,
    step: f64,
) -> Result<Vec<ExceedanceRow>, ConfigError> {
    distance_grid(from, to, step)?
        .into_iter()
        .map(|d| {
            Ok(ExceedanceRow {
                d_m: d,
                area_pi_d2_m2: std::f64::consts::PI * d * d,
                prob_above_threshold: prob_above_threshold(radio, d)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoRayRow {
    pub d_m: f64,
    pub pr_dbm_two_ray: f64,
    pub pth_dbm: f64,
}

pub fn tworay_curve(
    radio: &RadioParams,
    from: f64,
    to: f64,
    step: f64,
) -> Result<Vec<TwoRayRow>, ConfigError> {
    distance_grid(from, to, step)?
        .into_iter()
        .map(|d| {
            Ok(TwoRayRow {
                d_m: d,
                pr_dbm_two_ray: received_power_tworay(radio, d)?.0,
                pth_dbm: radio.rx_threshold.0,
            })
        })
        .collect()
}

fn distance_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>, ConfigError> {
    if !(step > 0.0 && from > 0.0 && to >= from) {
        return Err(ConfigError::invalid(
            "distance grid",
            format!("need 0 < from <= to and step > 0, got {from}..{to} by {step}"),
        ));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| from + i as f64 * step).collect())
}

/// Runs every suite scenario after `adjust`, `n_seeds` replications each.
pub fn suite_delivery<F>(
    n_seeds: u32,
    seed: u64,
    adjust: F,
) -> Result<Vec<(ScenarioConfig, AggregateReport)>, ConfigError>
where
    F: Fn(&mut ScenarioConfig),
{
    scenario_suite()
        .into_iter()
        .map(|mut c| {
            c.seed = seed;
            adjust(&mut c);
            let agg = run_replicated(&c, n_seeds)?;
            Ok((c, agg))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteRow {
    pub area_m2: f64,
    pub two_ray: Summary,
    pub shadowing: Summary,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelComparison {
    pub rows: Vec<SuiteRow>,
    /// Scaling factor of the prediction, fitted on the smallest scenario.
    pub k: f64,
}

/// Scaled exceedance prediction for each region, with the scale fitted so
/// the first region reproduces `observed_first`.
pub fn calibrated_prediction(
    radio: &RadioParams,
    regions: &[RectRegion],
    observed_first: f64,
) -> Result<(f64, Vec<f64>), ConfigError> {
    let first = regions
        .first()
        .ok_or_else(|| ConfigError::invalid("regions", "empty"))?;
    let k = calibrate_scaling(radio, first, observed_first)?;
    let curve = regions
        .iter()
        .map(|r| predicted_delivery_ratio(radio, r, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((k, curve))
}

/// Two-ray versus shadowing delivery over the suite, with the prediction.
pub fn model_comparison(n_seeds: u32, seed: u64) -> Result<ModelComparison, ConfigError> {
    let two_ray = suite_delivery(n_seeds, seed, |c| c.propagation = PropagationModel::TwoRay)?;
    let shadowing = suite_delivery(n_seeds, seed, |c| c.propagation = PropagationModel::Shadowing)?;
    comparison_from(&two_ray, &shadowing)
}

pub fn comparison_from(
    two_ray: &[(ScenarioConfig, AggregateReport)],
    shadowing: &[(ScenarioConfig, AggregateReport)],
) -> Result<ModelComparison, ConfigError> {
    let radio = shadowing
        .first()
        .map(|(c, _)| c.radio)
        .ok_or_else(|| ConfigError::invalid("suite", "empty"))?;
    let regions: Vec<RectRegion> = shadowing.iter().map(|(c, _)| c.region).collect();
    let (k, predicted) =
        calibrated_prediction(&radio, &regions, shadowing[0].1.delivery_ratio.mean)?;
    let rows = two_ray
        .iter()
        .zip(shadowing)
        .zip(predicted)
        .map(|(((c, t), (_, s)), p)| SuiteRow {
            area_m2: c.region.area(),
            two_ray: t.delivery_ratio,
            shadowing: s.delivery_ratio,
            predicted: p,
        })
        .collect();
    Ok(ModelComparison { rows, k })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MitigationRow {
    pub area_m2: f64,
    pub baseline: Summary,
    pub high_power: Summary,
    pub high_retry: Summary,
}

/// Shadowing delivery under the baseline, the raised power and the
/// raised retry limit.
pub fn mitigation_comparison(n_seeds: u32, seed: u64) -> Result<Vec<MitigationRow>, ConfigError> {
    let shadow = |c: &mut ScenarioConfig| c.propagation = PropagationModel::Shadowing;
    let baseline = suite_delivery(n_seeds, seed, shadow)?;
    let power = suite_delivery(n_seeds, seed, |c| {
        shadow(c);
        c.radio.tx_power = PowerDbm(HIGH_POWER_DBM);
    })?;
    let retry = suite_delivery(n_seeds, seed, |c| {
        shadow(c);
        c.mac.long_retry_limit = HIGH_RETRY_LIMIT;
    })?;
    Ok(baseline
        .iter()
        .zip(&power)
        .zip(&retry)
        .map(|(((c, b), (_, p)), (_, r))| MitigationRow {
            area_m2: c.region.area(),
            baseline: b.delivery_ratio,
            high_power: p.delivery_ratio,
            high_retry: r.delivery_ratio,
        })
        .collect())
}
