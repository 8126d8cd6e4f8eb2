//! Pairwise propagation: mean received power, shadowing draws and delays.

use rand::Rng;

use crate::propagation::{
    mean_received_power_shadowing, received_power_tworay, shadow_draw, PowerDbm,
    PropagationModel, RadioParams, SPEED_OF_LIGHT,
};
use crate::time::SimTime;

use super::scenario::{Position, ShadowingMode};

/// Two-ray power is singular at zero distance; co-located nodes are
/// treated as 1 mm apart.
const MIN_TWORAY_DISTANCE_M: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    /// Strong enough to decode, subject to collisions.
    Candidate,
    /// Only raises carrier sense.
    Sensed,
    Silent,
}

/// Precomputed link table for a fixed topology.
#[derive(Debug, Clone)]
pub struct Channel {
    n: usize,
    model: PropagationModel,
    mode: ShadowingMode,
    sigma_db: f64,
    rx_threshold: f64,
    cs_threshold: f64,
    distance: Vec<f64>,
    mean_dbm: Vec<f64>,
    delay: Vec<SimTime>,
    link_shadow: Vec<f64>,
}

impl Channel {
    /// `link_rng` is only consumed for the per-link shadowing mode.
    pub fn new<R: Rng + ?Sized>(
        positions: &[Position],
        model: PropagationModel,
        mode: ShadowingMode,
        radio: &RadioParams,
        link_rng: &mut R,
    ) -> Self {
        let n = positions.len();
        let mut distance = vec![0.0; n * n];
        let mut mean_dbm = vec![f64::NEG_INFINITY; n * n];
        let mut delay = vec![SimTime::ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d = positions[i].distance(positions[j]);
                distance[i * n + j] = d;
                delay[i * n + j] = SimTime::from_secs_f64(d / SPEED_OF_LIGHT);
                let p = match model {
                    PropagationModel::TwoRay => {
                        received_power_tworay(radio, d.max(MIN_TWORAY_DISTANCE_M))
                    }
                    PropagationModel::Shadowing => {
                        mean_received_power_shadowing(radio, d.max(radio.ref_distance_m))
                    }
                };
                mean_dbm[i * n + j] = p.map_or(f64::NEG_INFINITY, |p| p.0);
            }
        }
        let mut link_shadow = Vec::new();
        if model == PropagationModel::Shadowing && mode == ShadowingMode::PerLink {
            link_shadow = vec![0.0; n * n];
            for i in 0..n {
                for j in i + 1..n {
                    let x = shadow_draw(radio.shadow_sigma_db, link_rng);
                    link_shadow[i * n + j] = x;
                    link_shadow[j * n + i] = x;
                }
            }
        }
        Channel {
            n,
            model,
            mode,
            sigma_db: radio.shadow_sigma_db,
            rx_threshold: radio.rx_threshold.0,
            cs_threshold: radio.carrier_sense_threshold.0,
            distance,
            mean_dbm,
            delay,
            link_shadow,
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn distance(&self, from: usize, to: usize) -> f64 {
        self.distance[from * self.n + to]
    }

    pub fn delay(&self, from: usize, to: usize) -> SimTime {
        self.delay[from * self.n + to]
    }

    /// Received power with the shadowing term averaged out.
    pub fn mean_power(&self, from: usize, to: usize) -> PowerDbm {
        PowerDbm(self.mean_dbm[from * self.n + to])
    }

    /// Received power of one frame. Per-frame shadowing draws once per call.
    pub fn sample_power<R: Rng + ?Sized>(&self, from: usize, to: usize, rng: &mut R) -> PowerDbm {
        let k = from * self.n + to;
        let mean = self.mean_dbm[k];
        match (self.model, self.mode) {
            (PropagationModel::TwoRay, _) => PowerDbm(mean),
            (PropagationModel::Shadowing, ShadowingMode::PerLink) => {
                PowerDbm(mean - self.link_shadow[k])
            }
            (PropagationModel::Shadowing, ShadowingMode::PerFrame) => {
                PowerDbm(mean - shadow_draw(self.sigma_db, rng))
            }
        }
    }

    pub fn classify(&self, power: PowerDbm) -> Reception {
        if power.0 >= self.rx_threshold {
            Reception::Candidate
        } else if power.0 >= self.cs_threshold {
            Reception::Sensed
        } else {
            Reception::Silent
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::prob_above_threshold;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(d: f64) -> Vec<Position> {
        vec![Position { x: 0.0, y: 0.0 }, Position { x: d, y: 0.0 }]
    }

    #[test]
    fn tworay_inside_range_is_always_candidate() {
        let radio = RadioParams::baseline();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = Channel::new(&pair(100.0), PropagationModel::TwoRay, ShadowingMode::PerFrame, &radio, &mut rng);
        for _ in 0..100 {
            assert_eq!(ch.classify(ch.sample_power(0, 1, &mut rng)), Reception::Candidate);
        }
        let far = Channel::new(&pair(300.0), PropagationModel::TwoRay, ShadowingMode::PerFrame, &radio, &mut rng);
        assert_ne!(far.classify(far.sample_power(0, 1, &mut rng)), Reception::Candidate);
    }

    #[test]
    fn shadowed_candidacy_matches_exceedance_probability() {
        let radio = RadioParams::baseline();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ch = Channel::new(&pair(80.0), PropagationModel::Shadowing, ShadowingMode::PerFrame, &radio, &mut rng);
        let trials = 10_000;
        let hits = (0..trials)
            .filter(|_| ch.classify(ch.sample_power(0, 1, &mut rng)) == Reception::Candidate)
            .count();
        let p = prob_above_threshold(&radio, 80.0).unwrap();
        assert!((hits as f64 / trials as f64 - p).abs() < 0.02);
    }

    #[test]
    fn per_link_shadowing_is_fixed_and_symmetric() {
        let radio = RadioParams::baseline();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = Channel::new(&pair(60.0), PropagationModel::Shadowing, ShadowingMode::PerLink, &radio, &mut rng);
        let a = ch.sample_power(0, 1, &mut rng);
        assert_eq!(a, ch.sample_power(0, 1, &mut rng));
        assert_eq!(a, ch.sample_power(1, 0, &mut rng));
    }
}
