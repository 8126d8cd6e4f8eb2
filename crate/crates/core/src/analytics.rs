//! Link-geometry statistics for nodes placed uniformly in a rectangle.
//!
//! Distances are expressed in units of the short side `D1` as
//! `xi = distance / D1`, and the rectangle's aspect ratio is
//! `zeta = D1 / D2 ∈ (0, 1]`. The density of `xi` has three smooth pieces
//! separated at `xi = 1` and `xi = 1/zeta`, and vanishes beyond the
//! normalized diagonal `sqrt(1 + zeta^-2)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ModelError;
use crate::quad;

/// Absolute tolerance used for every quadrature of the link-distance density.
pub const QUAD_TOL: f64 = 1e-8;

/// Axis-aligned service area. Always stored with `width_d1 <= length_d2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectRegion {
    width_d1: f64,
    length_d2: f64,
}

impl RectRegion {
    /// Builds a region from its two side lengths in either order.
    pub fn new(a: f64, b: f64) -> Result<Self, ModelError> {
        for (quantity, value) in [("region side", a), ("region side", b)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::NonPositive { quantity, value });
            }
        }
        Ok(RectRegion {
            width_d1: a.min(b),
            length_d2: a.max(b),
        })
    }

    pub fn width_d1(&self) -> f64 {
        self.width_d1
    }

    pub fn length_d2(&self) -> f64 {
        self.length_d2
    }

    /// Shape parameter `D1 / D2`.
    pub fn zeta(&self) -> f64 {
        self.width_d1 / self.length_d2
    }

    pub fn area(&self) -> f64 {
        self.width_d1 * self.length_d2
    }

    pub fn diagonal(&self) -> f64 {
        self.width_d1.hypot(self.length_d2)
    }

    /// Upper end of the normalized support, `sqrt(1 + zeta^-2)`.
    pub fn max_xi(&self) -> f64 {
        self.diagonal() / self.width_d1
    }

    pub fn scaled(&self, s: f64) -> Result<Self, ModelError> {
        RectRegion::new(self.width_d1 * s, self.length_d2 * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDistanceStats {
    /// Mean of the normalized link distance.
    pub mean_xi: f64,
    /// Mean link distance in meters (`mean_xi * D1`).
    pub mean_distance: f64,
    /// Region diagonal in meters.
    pub max_distance: f64,
}

/// Density of the normalized link distance `xi` between two independent
/// uniform points of `region`. Zero outside `[0, sqrt(1 + zeta^-2))`.
pub fn link_distance_pdf(region: &RectRegion, xi: f64) -> f64 {
    let z = region.zeta();
    let inv_z = 1.0 / z;
    let upper = region.max_xi();
    if !(xi >= 0.0) || xi >= upper {
        return 0.0;
    }
    let density = if xi < 1.0 {
        2.0 * z * xi * (z * xi * xi - 2.0 * xi * (1.0 + z) + PI)
    } else if xi < inv_z {
        4.0 * z * xi * (xi * xi - 1.0).sqrt() - 2.0 * z * xi * (2.0 * xi + z)
            + 4.0 * z * xi * (1.0 / xi).asin()
    } else {
        let acos_arg = (1.0 / (z * xi)).min(1.0);
        4.0 * z * xi * (xi * xi - 1.0).sqrt()
            + 4.0 * z * z * xi * (xi * xi - inv_z * inv_z).max(0.0).sqrt()
            - 2.0 * xi * (z * z * xi * xi + 1.0 + z * z)
            + 4.0 * z * xi * ((1.0 / xi).asin() - acos_arg.acos())
    };
    // rounding near the far corner can dip a hair below zero
    density.max(0.0)
}

/// Density of the link distance in meters (per meter).
pub fn link_distance_density_m(region: &RectRegion, distance_m: f64) -> f64 {
    link_distance_pdf(region, distance_m / region.width_d1()) / region.width_d1()
}

/// Piece boundaries of the normalized support, deduplicated for squares.
pub fn pdf_breakpoints(region: &RectRegion) -> Vec<f64> {
    let mut points = vec![0.0, 1.0, 1.0 / region.zeta(), region.max_xi()];
    points.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    points
}

/// Integrates `g(xi) * pdf(xi)` piecewise over the support.
pub fn integrate_against_pdf<G: Fn(f64) -> f64>(region: &RectRegion, g: G, tol: f64) -> f64 {
    pdf_breakpoints(region)
        .windows(2)
        .map(|w| {
            quad::integrate(|xi| g(xi) * link_distance_pdf(region, xi), w[0], w[1], tol)
        })
        .sum()
}

pub fn mean_link_distance(region: &RectRegion) -> LinkDistanceStats {
    let mean_xi = integrate_against_pdf(region, |xi| xi, QUAD_TOL);
    LinkDistanceStats {
        mean_xi,
        mean_distance: mean_xi * region.width_d1(),
        max_distance: region.diagonal(),
    }
}

/// Monte Carlo sample of distances between independent uniform point pairs.
pub fn sample_link_distances(region: &RectRegion, n_pairs: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, l) = (region.width_d1(), region.length_d2());
    (0..n_pairs)
        .map(|_| {
            let dx = rng.random::<f64>() * w - rng.random::<f64>() * w;
            let dy = rng.random::<f64>() * l - rng.random::<f64>() * l;
            dx.hypot(dy)
        })
        .collect()
}

/// Expected number of hops, `ceil(mean link distance / range)`, at least one.
pub fn hop_estimate(region: &RectRegion, range_r: f64) -> u32 {
    hops_for(mean_link_distance(region).mean_distance, range_r)
}

pub(crate) fn hops_for(mean_distance: f64, range_r: f64) -> u32 {
    ((mean_distance / range_r).ceil() as u32).max(1)
}
