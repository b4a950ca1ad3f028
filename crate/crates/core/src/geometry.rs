//! Planar scene geometry: bearings, ranges, two-way delays, and their
//! position derivatives.
//!
//! Everything lives in a 2-D plane. Units are meters and microseconds with
//! the propagation speed expressed in m/us (300 m/us for free space), so a
//! delay times the speed is directly a distance in meters.
//!
//! Two reference nodes exist: the base station (monostatic transmit and
//! receive array) and the reflecting surface. For a target position the
//! scene is summarized by:
//!
//! * `theta_bt` — bearing of the target seen from the base station,
//! * `theta_rt` — bearing of the target seen from the surface,
//! * `d_bt`, `d_rt`, `d_br` — the three pairwise distances,
//! * `tau_d_us` — two-way direct delay, 2*d_bt/c,
//! * `tau_r_us` — two-way surface-bounce delay, 2*(d_br + d_rt)/c.
//!
//! Bearings use `atan2(dy, dx)`, i.e. the angle of the target relative to
//! the node measured from the +x axis, which for targets in the forward
//! half-plane of both arrays stays inside (-pi/2, pi/2).

use crate::error::{Error, Result};

/// Squared-distance floor below which a target is considered to sit on top
/// of a reference node and the geometry is rejected as degenerate.
const DEGENERATE_DIST_SQ: f64 = 1e-24;

// ─── Positions ─────────────────────────────────────────────────────────────

/// A point in the 2-D scene plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position2D {
    /// x coordinate in meters.
    pub x: f64,
    /// y coordinate in meters.
    pub y: f64,
}

impl Position2D {
    /// Creates a position from its coordinates.
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Euclidean distance to another point, in meters.
    pub fn distance_to(&self, other: Position2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Bearing of `other` as seen from `self`, in radians from the +x axis.
    pub fn bearing_to(&self, other: Position2D) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

// ─── Scene summaries ───────────────────────────────────────────────────────

/// Bearings, ranges, and two-way delays for one target position.
#[derive(Debug, Clone, Copy)]
pub struct GeometricParams {
    /// Bearing of the target from the base station, radians.
    pub theta_bt: f64,
    /// Bearing of the target from the reflecting surface, radians.
    pub theta_rt: f64,
    /// Base-station-to-target distance, meters.
    pub d_bt: f64,
    /// Surface-to-target distance, meters.
    pub d_rt: f64,
    /// Base-station-to-surface distance, meters.
    pub d_br: f64,
    /// Two-way direct-path delay, microseconds.
    pub tau_d_us: f64,
    /// Two-way surface-path delay, microseconds.
    pub tau_r_us: f64,
}

/// Partial derivatives of the four position-dependent channel parameters
/// with respect to the target coordinates.
///
/// With `r = p_target - p_node` and `d = |r|`, the bearing derivatives are
/// `d theta/dx = -r_y/d^2` and `d theta/dy = r_x/d^2`; the two-way delay
/// derivatives are `(2/c) * r/d` toward the relevant node (the fixed
/// station-to-surface leg contributes nothing).
#[derive(Debug, Clone, Copy)]
pub struct GeometryJacobian {
    /// d theta_bt / dx, radians per meter.
    pub d_theta_bt_dx: f64,
    /// d theta_bt / dy, radians per meter.
    pub d_theta_bt_dy: f64,
    /// d theta_rt / dx, radians per meter.
    pub d_theta_rt_dx: f64,
    /// d theta_rt / dy, radians per meter.
    pub d_theta_rt_dy: f64,
    /// d tau_d / dx, microseconds per meter.
    pub d_tau_d_dx: f64,
    /// d tau_d / dy, microseconds per meter.
    pub d_tau_d_dy: f64,
    /// d tau_r / dx, microseconds per meter.
    pub d_tau_r_dx: f64,
    /// d tau_r / dy, microseconds per meter.
    pub d_tau_r_dy: f64,
}

fn check_separation(target: Position2D, node: Position2D, name: &'static str) -> Result<()> {
    let dx = target.x - node.x;
    let dy = target.y - node.y;
    if dx * dx + dy * dy < DEGENERATE_DIST_SQ {
        return Err(Error::DegenerateGeometry { node: name });
    }
    Ok(())
}

/// Computes bearings, ranges, and two-way delays for a target.
///
/// `c_m_per_us` is the propagation speed in m/us. Fails if the target
/// coincides with either reference node.
pub fn geometric_params(
    target: Position2D,
    bs: Position2D,
    ris: Position2D,
    c_m_per_us: f64,
) -> Result<GeometricParams> {
    check_separation(target, bs, "base station")?;
    check_separation(target, ris, "ris")?;

    let d_bt = bs.distance_to(target);
    let d_rt = ris.distance_to(target);
    let d_br = bs.distance_to(ris);
    Ok(GeometricParams {
        theta_bt: bs.bearing_to(target),
        theta_rt: ris.bearing_to(target),
        d_bt,
        d_rt,
        d_br,
        tau_d_us: 2.0 * d_bt / c_m_per_us,
        tau_r_us: 2.0 * (d_br + d_rt) / c_m_per_us,
    })
}

/// Computes the closed-form position derivatives of the channel geometry.
///
/// Fails on the same degenerate configurations as [`geometric_params`].
pub fn geometry_jacobian(
    target: Position2D,
    bs: Position2D,
    ris: Position2D,
    c_m_per_us: f64,
) -> Result<GeometryJacobian> {
    check_separation(target, bs, "base station")?;
    check_separation(target, ris, "ris")?;

    let bx = target.x - bs.x;
    let by = target.y - bs.y;
    let d_bt_sq = bx * bx + by * by;
    let d_bt = d_bt_sq.sqrt();

    let rx = target.x - ris.x;
    let ry = target.y - ris.y;
    let d_rt_sq = rx * rx + ry * ry;
    let d_rt = d_rt_sq.sqrt();

    Ok(GeometryJacobian {
        d_theta_bt_dx: -by / d_bt_sq,
        d_theta_bt_dy: bx / d_bt_sq,
        d_theta_rt_dx: -ry / d_rt_sq,
        d_theta_rt_dy: rx / d_rt_sq,
        d_tau_d_dx: 2.0 * bx / (c_m_per_us * d_bt),
        d_tau_d_dy: 2.0 * by / (c_m_per_us * d_bt),
        d_tau_r_dx: 2.0 * rx / (c_m_per_us * d_rt),
        d_tau_r_dy: 2.0 * ry / (c_m_per_us * d_rt),
    })
}

// ─── Tests ─────────────────────────────────────────────────────────────────
