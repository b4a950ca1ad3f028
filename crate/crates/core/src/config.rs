//! Scenario configuration shared by the simulator, the estimators, and the
//! bound computations: node placement, array sizes, and the multicarrier
//! waveform.
//!
//! Two baked-in profiles exist:
//!
//! * [`ScenarioConfig::desk`] — small arrays (8 elements everywhere) meant
//!   for fast iteration and CI-scale Monte Carlo runs,
//! * [`ScenarioConfig::paper`] — the full evaluation dimensioning
//!   (32-element arrays, 20 subcarriers at 100 MHz, 32 snapshots).
//!
//! Units are meters and microseconds throughout; sample rate is MHz, so
//! `T_s = 1/R_s` lands directly in microseconds.

use crate::geometry::Position2D;

/// Uniform linear array and reflecting-surface dimensioning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayConfig {
    /// Transmit array element count at the base station.
    pub n_tx: usize,
    /// Receive array element count at the base station.
    pub n_rx: usize,
    /// Reflecting-surface element count.
    pub m_ris: usize,
    /// Element spacing over wavelength (half-wavelength by default).
    pub spacing_over_lambda: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            n_tx: 8,
            n_rx: 8,
            m_ris: 8,
            spacing_over_lambda: 0.5,
        }
    }
}

/// Multicarrier waveform dimensioning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveformConfig {
    /// Number of subcarriers N.
    pub n_subcarriers: usize,
    /// Number of probing snapshots N_s per subcarrier.
    pub n_snapshots: usize,
    /// Sample rate R_s in MHz (T_s = 1/R_s microseconds).
    pub sample_rate_mhz: f64,
    /// Propagation speed in m/us (300 for free space).
    pub c_m_per_us: f64,
}

impl WaveformConfig {
    /// Symbol period T_s in microseconds.
    pub fn symbol_period_us(&self) -> f64 {
        1.0 / self.sample_rate_mhz
    }

    /// Angular frequency of subcarrier `n` (0-based) in rad/us:
    /// `2*pi*n / (N*T_s)`. Subcarrier 0 sits at zero frequency.
    pub fn angular_frequency(&self, n: usize) -> f64 {
        2.0 * std::f64::consts::PI * n as f64
            / (self.n_subcarriers as f64 * self.symbol_period_us())
    }

    /// Largest unambiguously resolvable two-way delay, `N*T_s`, in
    /// microseconds. Delays at or beyond this alias back into `[0, N*T_s)`.
    pub fn unambiguous_delay_us(&self) -> f64 {
        self.n_subcarriers as f64 * self.symbol_period_us()
    }
}

/// Full static scene description: node positions, arrays, waveform, and the
/// coarse-search grid resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    /// Base-station position (collocated transmit/receive arrays).
    pub bs: Position2D,
    /// Reflecting-surface position.
    pub ris: Position2D,
    /// Array dimensioning.
    pub arrays: ArrayConfig,
    /// Waveform dimensioning.
    pub waveform: WaveformConfig,
    /// Number of points in the coarse angle grid over [-pi/2, pi/2].
    pub grid_size: usize,
}

impl ScenarioConfig {
    /// Small-array profile for fast runs: 8 elements everywhere, 8
    /// subcarriers, 8 snapshots, 181-point grid.
    ///
    /// The sample rate is 25 MHz so the unambiguous two-way range
    /// (N*T_s*c = 96 m) keeps every target in the default placement
    /// rectangle below HALF the window (worst bounce path ~33 m two-way
    /// vs 48 m): the phase-slope delay estimator reads a per-subcarrier
    /// step of `-2*pi*tau/(N*T_s)`, and once that step nears +-pi, small
    /// perturbations flip individual steps by 2*pi and throw the range
    /// estimate by meters. Staying under half the window keeps the whole
    /// rectangle clear of that cliff, matching the intended invariant
    /// that wrapping never triggers on nominal geometries.
    pub fn desk() -> Self {
        Self {
            bs: Position2D::new(0.0, 0.0),
            ris: Position2D::new(5.0, 5.0),
            arrays: ArrayConfig::default(),
            waveform: WaveformConfig {
                n_subcarriers: 8,
                n_snapshots: 8,
                sample_rate_mhz: 25.0,
                c_m_per_us: 300.0,
            },
            grid_size: 181,
        }
    }

    /// Full evaluation profile: 32-element arrays and surface, 20
    /// subcarriers at 100 MHz (60 m unambiguous two-way range), 32
    /// snapshots, 181-point grid.
    pub fn paper() -> Self {
        Self {
            bs: Position2D::new(0.0, 0.0),
            ris: Position2D::new(5.0, 5.0),
            arrays: ArrayConfig {
                n_tx: 32,
                n_rx: 32,
                m_ris: 32,
                spacing_over_lambda: 0.5,
            },
            waveform: WaveformConfig {
                n_subcarriers: 20,
                n_snapshots: 32,
                sample_rate_mhz: 100.0,
                c_m_per_us: 300.0,
            },
            grid_size: 181,
        }
    }

    /// Bearing of the surface seen from the base station, radians.
    pub fn theta_br(&self) -> f64 {
        self.bs.bearing_to(self.ris)
    }

    /// Bearing of the base station seen from the surface, radians.
    pub fn theta_rb(&self) -> f64 {
        self.ris.bearing_to(self.bs)
    }

    /// Base-station-to-surface distance, meters.
    pub fn d_br(&self) -> f64 {
        self.bs.distance_to(self.ris)
    }
}
