//! Kinematic derivations shared by every pipeline stage.
//!
//! Speeds are forward differences of positions, accelerations forward
//! differences of speeds, so a derived series is always one element shorter
//! than its source. Trajectory assembly trims all label series to the common
//! shortest length instead of inventing boundary values.

use crate::error::{Error, Result};

/// A planar point or direction in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sub(self, other: Vec2) -> Vec2 {
        Vec2::new(self.x - other.x, self.y - other.y)
    }

    pub fn is_zero(self) -> bool {
        self.x == 0.0 && self.y == 0.0
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Forward-difference speeds: element `t` is `(p[t+1] - p[t]) / delta_t`.
///
/// Output is one shorter than the input.
pub fn derive_speed_series(positions: &[f64], delta_t: f64) -> Result<Vec<f64>> {
    if positions.len() < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 positions to derive speeds, got {}",
            positions.len()
        )));
    }
    if delta_t <= 0.0 {
        return Err(Error::Argument(format!("delta_t must be > 0, got {delta_t}")));
    }
    Ok(positions
        .windows(2)
        .map(|w| (w[1] - w[0]) / delta_t)
        .collect())
}

/// Forward-difference accelerations: element `t` is `(v[t+1] - v[t]) / delta_t`.
pub fn derive_accel_series(speeds: &[f64], delta_t: f64) -> Result<Vec<f64>> {
    if speeds.len() < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 speeds to derive accelerations, got {}",
            speeds.len()
        )));
    }
    if delta_t <= 0.0 {
        return Err(Error::Argument(format!("delta_t must be > 0, got {delta_t}")));
    }
    Ok(speeds.windows(2).map(|w| (w[1] - w[0]) / delta_t).collect())
}

/// Position recurrence `p[t] = p[t-1] + delta_t * v[t]`, anchored at `initial`.
///
/// `speeds[0]` is never read: the first output is `initial` itself. The
/// output has the same length as `speeds`.
pub fn integrate_position(initial: f64, speeds: &[f64], delta_t: f64) -> Result<Vec<f64>> {
    if delta_t <= 0.0 {
        return Err(Error::Argument(format!("delta_t must be > 0, got {delta_t}")));
    }
    let mut out = Vec::with_capacity(speeds.len());
    let mut pos = initial;
    for (t, &v) in speeds.iter().enumerate() {
        if t > 0 {
            pos += delta_t * v;
        }
        out.push(pos);
    }
    Ok(out)
}

/// Bumper-to-bumper gap from a center-to-center headway and the two vehicle
/// lengths. May be negative; downstream hard margins flag those rows.
pub fn compute_gap(headway: f64, fav_length: f64, lv_length: f64) -> Result<f64> {
    if !headway.is_finite() {
        return Err(Error::Argument(format!("headway must be finite, got {headway}")));
    }
    if fav_length <= 0.0 || lv_length <= 0.0 {
        return Err(Error::Argument(format!(
            "vehicle lengths must be > 0, got fav={fav_length} lv={lv_length}"
        )));
    }
    Ok(headway - (fav_length + lv_length) / 2.0)
}
