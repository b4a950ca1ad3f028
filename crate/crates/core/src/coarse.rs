//! Coarse two-path estimation: grid-based angle picks, per-subcarrier gain
//! projection, successive path cancellation, phase-slope delays, and the
//! resulting position initialization.
//!
//! The stage runs in a fixed order:
//!
//! 1. matched-filter the raw measurement against the direct dictionary and
//!    pick the best angle column,
//! 2. least-squares project per-subcarrier gains onto that column and
//!    subtract the reconstructed direct echo from the residual,
//! 3. matched-filter the residual against the surface dictionary and
//!    project its gains the same way,
//! 4. with both columns fixed, re-solve the two per-subcarrier gain tracks
//!    jointly against the raw measurement (sequential projection leaves
//!    each track biased by the other path's overlap; the joint 2x2 solve
//!    removes that bias exactly when there is no noise),
//! 5. turn each path's per-subcarrier gain sequence into a delay via the
//!    mean wrapped phase slope, and delays into ranges,
//! 6. place the initial position on the direct bearing/range fix.
//!
//! Delays are identifiable only inside `[0, N*T_s)`; the phase-slope
//! estimator aliases anything beyond that back into the window, which is
//! why every scenario profile keeps its geometry well inside it.

use ndarray::Array2;
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};

use crate::config::{ScenarioConfig, WaveformConfig};
use crate::dictionary::{AngleGrid, PathDictionary};
use crate::error::{Error, Result};
use crate::geometry::Position2D;
use crate::signal::{cdot, MeasurementSet};

/// Floor (meters) applied to a surface-to-target range that came out
/// non-positive after subtracting the station-surface leg; the estimate is
/// flagged instead of silently trusted.
pub const RANGE_FLOOR_M: f64 = 1e-3;

/// Surface-path peak score below this fraction of the direct-path peak is
/// flagged as low-confidence (nothing left after cancellation but dust).
const LOW_CONFIDENCE_RATIO: f64 = 1e-12;

/// Relative determinant floor below which the per-subcarrier joint gain
/// system counts as collinear and the sequential estimates are kept.
const COLLINEARITY_FLOOR: f64 = 1e-12;

// ─── Results ───────────────────────────────────────────────────────────────

/// Coarse estimate for a single propagation path.
#[derive(Debug, Clone)]
pub struct PathCoarseEstimate {
    /// Selected grid column.
    pub grid_index: usize,
    /// Angle of that column, radians.
    pub theta: f64,
    /// Matched-filter score of the selected column.
    pub score: f64,
    /// Per-subcarrier complex gains, length N.
    pub gains: Vec<Complex64>,
    /// Phase-slope delay estimate, microseconds, in `[0, N*T_s)`.
    pub tau_us: f64,
}

/// Options for the coarse stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct CoarseOptions {
    /// Fuse the direct fix with the surface fix (score-weighted average)
    /// for the initial position instead of using the direct fix alone.
    /// Off by default; the direct fix is the better-conditioned one.
    pub fused_initializer: bool,
}

/// Full coarse-stage output: both path estimates, derived ranges, and the
/// initialization handed to the refinement stage.
#[derive(Debug, Clone)]
pub struct CoarseEstimate {
    /// Direct-path estimate (angle from the base station).
    pub direct: PathCoarseEstimate,
    /// Surface-path estimate (angle from the surface).
    pub ris: PathCoarseEstimate,
    /// Station-to-target range from the direct delay, meters.
    pub d_bt: f64,
    /// Surface-to-target range from the bounce delay, meters.
    pub d_rt: f64,
    /// True when `d_rt` hit [`RANGE_FLOOR_M`] and was clamped.
    pub ris_range_clamped: bool,
    /// True when the surface path carried essentially no energy after the
    /// direct path was cancelled.
    pub ris_low_confidence: bool,
    /// Initial target position for refinement.
    pub initial_position: Position2D,
    /// Initial direct-path gain (delay-derotated mean of `direct.gains`).
    pub initial_gain_dir: Complex64,
    /// Initial surface-path gain (delay-derotated mean of `ris.gains`).
    pub initial_gain_ris: Complex64,
}

// ─── Stage operations ──────────────────────────────────────────────────────

/// Rearranges measurement blocks into per-subcarrier residual rows, shape
/// `[N, n_rx*N_s]`, snapshot blocks stacked with antennas fastest (the same
/// layout as dictionary columns).
pub fn residual_from_measurement(meas: &MeasurementSet) -> Array2<Complex64> {
    let (n_sub, n_snap, n_rx) = meas.blocks.dim();
    let mut resid = Array2::zeros((n_sub, n_rx * n_snap));
    for n in 0..n_sub {
        for k in 0..n_snap {
            for i in 0..n_rx {
                resid[[n, k * n_rx + i]] = meas.blocks[[n, k, i]];
            }
        }
    }
    resid
}

/// Scores every grid column against the residual and returns the best
/// index plus the whole score vector.
///
/// The score of column `m` is `sum_n |col(n,m)^H r_n|^2 / ||col(n,m)||^2`;
/// ties resolve to the smallest index. A zero-norm column (degenerate
/// probing) is an error.
pub fn matched_filter_select(
    residual: &Array2<Complex64>,
    dict: &PathDictionary,
) -> Result<(usize, Vec<f64>)> {
    let n_sub = dict.n_subcarriers();
    let g = dict.grid_len();
    debug_assert_eq!(residual.dim().0, n_sub);

    let mut scores = vec![0.0f64; g];
    for (m, score) in scores.iter_mut().enumerate() {
        for n in 0..n_sub {
            let norm = dict.atom_norms[[n, m]];
            if norm == 0.0 {
                return Err(Error::ZeroNormAtom {
                    subcarrier: n,
                    column: m,
                });
            }
            let corr = cdot(dict.column(n, m), residual.row(n));
            *score += corr.norm_sqr() / (norm * norm);
        }
    }
    let mut best = 0usize;
    for (m, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = m;
        }
    }
    Ok((best, scores))
}

/// Least-squares per-subcarrier gains of the residual on one column:
/// `h_n = col(n,m)^H r_n / ||col(n,m)||^2`.
pub fn per_subcarrier_gains(
    residual: &Array2<Complex64>,
    dict: &PathDictionary,
    m: usize,
) -> Result<Vec<Complex64>> {
    let n_sub = dict.n_subcarriers();
    let mut gains = Vec::with_capacity(n_sub);
    for n in 0..n_sub {
        let norm = dict.atom_norms[[n, m]];
        if norm == 0.0 {
            return Err(Error::ZeroNormAtom {
                subcarrier: n,
                column: m,
            });
        }
        gains.push(cdot(dict.column(n, m), residual.row(n)) / (norm * norm));
    }
    Ok(gains)
}

/// Two-column least-squares refresh of both per-subcarrier gain tracks on
/// the raw (uncancelled) measurement, once both grid columns are selected.
///
/// Sequential projection estimates each path against a residual still
/// containing (or missing) part of the other path, so each gain track
/// carries a bias proportional to the columns' overlap. Solving the
/// per-subcarrier 2x2 normal equations jointly removes that bias — in a
/// noiseless scene the recovered tracks equal `g * exp(-j*w_n*tau)`
/// exactly. Subcarriers whose two columns are nearly collinear keep the
/// sequential estimates (the joint system is not trustworthy there).
pub fn joint_subcarrier_gains(
    raw: &Array2<Complex64>,
    dict_dir: &PathDictionary,
    m_d: usize,
    dict_ris: &PathDictionary,
    m_r: usize,
    fallback_dir: &[Complex64],
    fallback_ris: &[Complex64],
) -> (Vec<Complex64>, Vec<Complex64>) {
    let n_sub = raw.dim().0;
    let mut out_d = Vec::with_capacity(n_sub);
    let mut out_r = Vec::with_capacity(n_sub);
    for n in 0..n_sub {
        let c_d = dict_dir.column(n, m_d);
        let c_r = dict_ris.column(n, m_r);
        let g11 = dict_dir.atom_norms[[n, m_d]].powi(2);
        let g22 = dict_ris.atom_norms[[n, m_r]].powi(2);
        let g12 = cdot(c_d, c_r);
        let det = g11 * g22 - g12.norm_sqr();
        if det <= COLLINEARITY_FLOOR * g11 * g22 {
            out_d.push(fallback_dir[n]);
            out_r.push(fallback_ris[n]);
            continue;
        }
        let row = raw.row(n);
        let b1 = cdot(c_d, row);
        let b2 = cdot(c_r, row);
        out_d.push((b1 * g22 - g12 * b2) / det);
        out_r.push((b2 * g11 - g12.conj() * b1) / det);
    }
    (out_d, out_r)
}

/// Subtracts the reconstructed path `col(n,m) * h_n` from each residual row
/// and returns the updated residual.
///
/// Because `h_n` is the least-squares projection, the updated residual can
/// only lose energy.
pub fn cancel_path(
    mut residual: Array2<Complex64>,
    dict: &PathDictionary,
    m: usize,
    gains: &[Complex64],
) -> Array2<Complex64> {
    let n_sub = dict.n_subcarriers();
    debug_assert_eq!(gains.len(), n_sub);
    for n in 0..n_sub {
        let col = dict.column(n, m);
        let h = gains[n];
        for (r, c) in residual.row_mut(n).iter_mut().zip(col.iter()) {
            *r -= c * h;
        }
    }
    residual
}

/// Wraps an angle into `(-pi, pi]`.
fn wrap_phase(x: f64) -> f64 {
    x - TAU * ((x - PI) / TAU).ceil()
}

/// Phase-slope delay estimate from per-subcarrier gains.
///
/// Adjacent subcarriers of a pure delay differ in phase by
/// `-2*pi*tau/(N*T_s)`; averaging the wrapped phase increments and scaling
/// back gives `tau`, folded into the unambiguous window `[0, N*T_s)`.
/// Needs at least two subcarriers.
pub fn estimate_delay(gains: &[Complex64], waveform: &WaveformConfig) -> Result<f64> {
    if gains.len() < 2 {
        return Err(Error::TooFewSubcarriers(gains.len()));
    }
    let mut sum = 0.0f64;
    for pair in gains.windows(2) {
        sum += wrap_phase(pair[1].arg() - pair[0].arg());
    }
    let mean_slope = sum / (gains.len() - 1) as f64;
    let span = waveform.unambiguous_delay_us();
    let mut tau = -span * mean_slope / TAU;
    if tau < 0.0 {
        tau += span;
    }
    Ok(tau)
}

/// Maps the two delay estimates to one-way ranges: the direct two-way
/// range halves; the bounce range additionally sheds the known
/// station-surface leg. A non-positive surface range clamps to
/// [`RANGE_FLOOR_M`] and is flagged.
pub fn ranges_from_delays(
    tau_d_us: f64,
    tau_r_us: f64,
    d_br: f64,
    c_m_per_us: f64,
) -> (f64, f64, bool) {
    let d_bt = c_m_per_us * tau_d_us / 2.0;
    let d_rt_raw = c_m_per_us * tau_r_us / 2.0 - d_br;
    if d_rt_raw < RANGE_FLOOR_M {
        (d_bt, RANGE_FLOOR_M, true)
    } else {
        (d_bt, d_rt_raw, false)
    }
}

/// Runs the full coarse stage on a measurement.
pub fn coarse_estimate(
    meas: &MeasurementSet,
    dict_dir: &PathDictionary,
    dict_ris: &PathDictionary,
    grid: &AngleGrid,
    scenario: &ScenarioConfig,
    options: &CoarseOptions,
) -> Result<CoarseEstimate> {
    let w = &scenario.waveform;

    // Direct path first: it is the stronger, better-conditioned one.
    let resid = residual_from_measurement(meas);
    let (m_d, scores_d) = matched_filter_select(&resid, dict_dir)?;
    let gains_d = per_subcarrier_gains(&resid, dict_dir, m_d)?;
    let resid = cancel_path(resid, dict_dir, m_d, &gains_d);

    // Surface path on what's left.
    let (m_r, scores_r) = matched_filter_select(&resid, dict_ris)?;
    let gains_r = per_subcarrier_gains(&resid, dict_ris, m_r)?;

    // Selections stay sequential, but the gain tracks the delays are read
    // from are re-solved jointly so neither path biases the other.
    let raw = residual_from_measurement(meas);
    let (gains_d, gains_r) =
        joint_subcarrier_gains(&raw, dict_dir, m_d, dict_ris, m_r, &gains_d, &gains_r);

    let tau_d = estimate_delay(&gains_d, w)?;
    let tau_r = estimate_delay(&gains_r, w)?;
    let (d_bt, d_rt, clamped) = ranges_from_delays(tau_d, tau_r, scenario.d_br(), w.c_m_per_us);

    let theta_d = grid.angle(m_d);
    let theta_r = grid.angle(m_r);
    let direct_fix = Position2D::new(
        scenario.bs.x + d_bt * theta_d.cos(),
        scenario.bs.y + d_bt * theta_d.sin(),
    );
    let initial_position = if options.fused_initializer {
        let ris_fix = Position2D::new(
            scenario.ris.x + d_rt * theta_r.cos(),
            scenario.ris.y + d_rt * theta_r.sin(),
        );
        let (w_d, w_r) = (scores_d[m_d], scores_r[m_r]);
        let total = w_d + w_r;
        Position2D::new(
            (w_d * direct_fix.x + w_r * ris_fix.x) / total,
            (w_d * direct_fix.y + w_r * ris_fix.y) / total,
        )
    } else {
        direct_fix
    };

    // De-rotate the estimated delay out of each gain sequence and average:
    // in the noiseless on-grid case every term is already the path gain.
    let derotated_mean = |gains: &[Complex64], tau: f64| {
        gains
            .iter()
            .enumerate()
            .map(|(n, h)| h * Complex64::from_polar(1.0, w.angular_frequency(n) * tau))
            .sum::<Complex64>()
            / gains.len() as f64
    };

    Ok(CoarseEstimate {
        ris_low_confidence: scores_r[m_r] <= LOW_CONFIDENCE_RATIO * scores_d[m_d],
        direct: PathCoarseEstimate {
            grid_index: m_d,
            theta: theta_d,
            score: scores_d[m_d],
            tau_us: tau_d,
            gains: gains_d.clone(),
        },
        ris: PathCoarseEstimate {
            grid_index: m_r,
            theta: theta_r,
            score: scores_r[m_r],
            tau_us: tau_r,
            gains: gains_r.clone(),
        },
        d_bt,
        d_rt,
        ris_range_clamped: clamped,
        initial_position,
        initial_gain_dir: derotated_mean(&gains_d, tau_d),
        initial_gain_ris: derotated_mean(&gains_r, tau_r),
    })
}

// ─── Tests ─────────────────────────────────────────────────────────────────
