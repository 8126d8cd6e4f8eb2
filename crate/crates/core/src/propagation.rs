//! Large-scale propagation: two-ray ground reflection and log-normal
//! shadowing, with the closed-form probability that a shadowed link clears
//! the reception threshold.
//!
//! Shadowing draws use `rand_distr::StandardNormal` (ziggurat) on the
//! caller's generator, so a seeded ChaCha stream reproduces every sample.
//! `erf` comes from `libm` (musl port, sub-ulp accuracy).

use std::f64::consts::{LN_10, PI};
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::analytics::{mean_link_distance, RectRegion};
use crate::error::ModelError;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Power level in dBm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct PowerDbm(pub f64);

/// Power level in watts, always strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PowerWatts(f64);

impl PowerDbm {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn to_watts(self) -> PowerWatts {
        PowerWatts(dbm_to_watts(self.0))
    }
}

impl PowerWatts {
    pub fn new(watts: f64) -> Result<Self, ModelError> {
        if watts > 0.0 && watts.is_finite() {
            Ok(PowerWatts(watts))
        } else {
            Err(ModelError::NonPositive {
                quantity: "power in watts",
                value: watts,
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn to_dbm(self) -> PowerDbm {
        PowerDbm(10.0 * (self.0 * 1000.0).log10())
    }
}

impl fmt::Display for PowerDbm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} dBm", self.0)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

pub fn watts_to_dbm(watts: f64) -> Result<PowerDbm, ModelError> {
    PowerWatts::new(watts).map(PowerWatts::to_dbm)
}

/// Which large-scale model the channel applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PropagationModel {
    TwoRay,
    Shadowing,
}

impl PropagationModel {
    pub fn name(self) -> &'static str {
        match self {
            PropagationModel::TwoRay => "two_ray",
            PropagationModel::Shadowing => "shadowing",
        }
    }
}

impl std::str::FromStr for PropagationModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "two_ray" | "tworay" => Ok(PropagationModel::TwoRay),
            "shadowing" => Ok(PropagationModel::Shadowing),
            other => Err(format!("unknown propagation model `{other}`")),
        }
    }
}

/// Physical-layer parameters shared by every node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    pub tx_power: PowerDbm,
    /// Minimum received power for a frame to be decodable.
    pub rx_threshold: PowerDbm,
    /// Minimum received power at which the medium reads busy.
    pub carrier_sense_threshold: PowerDbm,
    pub tx_gain: f64,
    pub rx_gain: f64,
    pub tx_height_m: f64,
    pub rx_height_m: f64,
    pub shadow_sigma_db: f64,
    pub ref_distance_m: f64,
    pub path_loss_exponent: f64,
    pub carrier_freq_hz: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams::baseline()
    }
}

impl RadioParams {
    /// Baseline radio: 24.5 dBm transmitter, -64.38 dBm receive threshold,
    /// unity gains, 1 m antennas, sigma 3 dB, d0 1 m, exponent 3, 914 MHz.
    pub fn baseline() -> Self {
        RadioParams {
            tx_power: PowerDbm(24.5),
            rx_threshold: PowerDbm(-64.38),
            carrier_sense_threshold: PowerDbm(-78.0),
            tx_gain: 1.0,
            rx_gain: 1.0,
            tx_height_m: 1.0,
            rx_height_m: 1.0,
            shadow_sigma_db: 3.0,
            ref_distance_m: 1.0,
            path_loss_exponent: 3.0,
            carrier_freq_hz: 914e6,
        }
    }

    /// Baseline radio with 1.5 m antennas, which stretches the two-ray
    /// range at the baseline power/threshold pair to 250 m.
    pub fn baseline_elevated() -> Self {
        RadioParams {
            tx_height_m: 1.5,
            rx_height_m: 1.5,
            ..RadioParams::baseline()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("tx_gain", self.tx_gain),
            ("rx_gain", self.rx_gain),
            ("tx_height_m", self.tx_height_m),
            ("rx_height_m", self.rx_height_m),
            ("ref_distance_m", self.ref_distance_m),
            ("path_loss_exponent", self.path_loss_exponent),
            ("carrier_freq_hz", self.carrier_freq_hz),
        ];
        for (quantity, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::NonPositive { quantity, value });
            }
        }
        if !(self.shadow_sigma_db >= 0.0 && self.shadow_sigma_db.is_finite()) {
            return Err(ModelError::InvalidRadio(format!(
                "shadow_sigma_db must be >= 0, got {}",
                self.shadow_sigma_db
            )));
        }
        if self.tx_power <= self.rx_threshold {
            return Err(ModelError::InvalidRadio(format!(
                "tx power {} must exceed the receive threshold {}",
                self.tx_power, self.rx_threshold
            )));
        }
        if self.carrier_sense_threshold > self.rx_threshold {
            return Err(ModelError::InvalidRadio(format!(
                "carrier-sense threshold {} must not exceed the receive threshold {}",
                self.carrier_sense_threshold, self.rx_threshold
            )));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }
}

/// Free-space loss at the reference distance, `20 log10(4 pi d0 / lambda)`.
pub fn ref_path_loss_db(params: &RadioParams) -> f64 {
    20.0 * (4.0 * PI * params.ref_distance_m / params.wavelength_m()).log10()
}

fn check_distance(params: &RadioParams, d: f64) -> Result<(), ModelError> {
    if d < params.ref_distance_m || d.is_nan() {
        Err(ModelError::InsideReferenceDistance {
            distance: d,
            ref_distance: params.ref_distance_m,
        })
    } else {
        Ok(())
    }
}

/// Distance-dependent mean of the log-normal path loss, in dB.
pub fn mean_path_loss_db(params: &RadioParams, d: f64) -> Result<f64, ModelError> {
    check_distance(params, d)?;
    Ok(ref_path_loss_db(params)
        + 10.0 * params.path_loss_exponent * (d / params.ref_distance_m).log10())
}

/// Mean received power under shadowing (the shadowing term averaged out).
pub fn mean_received_power_shadowing(params: &RadioParams, d: f64) -> Result<PowerDbm, ModelError> {
    Ok(PowerDbm(params.tx_power.0 - mean_path_loss_db(params, d)?))
}

/// One shadowed received-power draw: `Pt - PL(d) - X`, `X ~ N(0, sigma^2)`.
pub fn sample_received_power<R: Rng + ?Sized>(
    params: &RadioParams,
    d: f64,
    rng: &mut R,
) -> Result<PowerDbm, ModelError> {
    let mean = mean_received_power_shadowing(params, d)?;
    Ok(PowerDbm(mean.0 - shadow_draw(params.shadow_sigma_db, rng)))
}

/// Zero-mean Gaussian shadowing term in dB. With sigma 0 no randomness is consumed.
pub fn shadow_draw<R: Rng + ?Sized>(sigma_db: f64, rng: &mut R) -> f64 {
    if sigma_db == 0.0 {
        0.0
    } else {
        let z: f64 = rng.sample(StandardNormal);
        sigma_db * z
    }
}

/// Gaussian density of the path loss `x` (dB) at distance `d`.
pub fn path_loss_pdf(params: &RadioParams, d: f64, x: f64) -> Result<f64, ModelError> {
    let sigma = params.shadow_sigma_db;
    if sigma == 0.0 {
        return Err(ModelError::ZeroSigma);
    }
    let mean = mean_path_loss_db(params, d)?;
    let u = (x - mean) / sigma;
    Ok((-0.5 * u * u).exp() / (sigma * (2.0 * PI).sqrt()))
}

/// Probability that a shadowed draw at distance `d` reaches the receive
/// threshold. With `sigma = 0` this is the indicator of a positive margin.
pub fn prob_above_threshold(params: &RadioParams, d: f64) -> Result<f64, ModelError> {
    let mean_rx = mean_received_power_shadowing(params, d)?;
    let margin = params.rx_threshold.0 - mean_rx.0;
    let sigma = params.shadow_sigma_db;
    if sigma == 0.0 {
        return Ok(if mean_rx.0 > params.rx_threshold.0 { 1.0 } else { 0.0 });
    }
    Ok(0.5 - 0.5 * libm::erf(margin / (sigma * std::f64::consts::SQRT_2)))
}

/// Two-ray ground-reflection received power, `Pt Gt Gr ht^2 hr^2 / d^4`.
pub fn received_power_tworay(params: &RadioParams, d: f64) -> Result<PowerDbm, ModelError> {
    if !(d > 0.0) {
        return Err(ModelError::NonPositive {
            quantity: "distance",
            value: d,
        });
    }
    let pt = params.tx_power.to_watts().value();
    let h2 = params.tx_height_m.powi(2) * params.rx_height_m.powi(2);
    let pr = pt * params.tx_gain * params.rx_gain * h2 / d.powi(4);
    PowerWatts::new(pr).map(PowerWatts::to_dbm)
}

/// Distance at which the two-ray power falls to the receive threshold.
pub fn tworay_range(params: &RadioParams) -> f64 {
    tworay_distance_for(params, params.rx_threshold)
}

/// Distance at which the two-ray power falls to `level`.
pub fn tworay_distance_for(params: &RadioParams, level: PowerDbm) -> f64 {
    let gain_db = 10.0
        * (params.tx_gain
            * params.rx_gain
            * params.tx_height_m.powi(2)
            * params.rx_height_m.powi(2))
        .log10();
    // 40 log10(d) = Pt + gains - level, solved in the log domain for accuracy
    let margin_db = params.tx_power.0 + gain_db - level.0;
    (margin_db / 40.0 * LN_10).exp()
}

/// Scaled exceedance probability at the region's mean link distance,
/// clamped to `[0, 1]`.
pub fn predicted_delivery_ratio(
    params: &RadioParams,
    region: &RectRegion,
    k: f64,
) -> Result<f64, ModelError> {
    if !(k > 0.0) {
        return Err(ModelError::NonPositive {
            quantity: "scaling factor k",
            value: k,
        });
    }
    let d = mean_link_distance(region)
        .mean_distance
        .max(params.ref_distance_m);
    Ok((k * prob_above_threshold(params, d)?).clamp(0.0, 1.0))
}

/// Scaling factor that makes the prediction equal `observed` on `region`.
pub fn calibrate_scaling(
    params: &RadioParams,
    region: &RectRegion,
    observed: f64,
) -> Result<f64, ModelError> {
    let d = mean_link_distance(region)
        .mean_distance
        .max(params.ref_distance_m);
    let p = prob_above_threshold(params, d)?;
    if !(p > 0.0) {
        return Err(ModelError::NonPositive {
            quantity: "exceedance probability at the calibration area",
            value: p,
        });
    }
    Ok(observed / p)
}
