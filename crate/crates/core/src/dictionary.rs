//! Angle-gridded correlation dictionaries for the coarse search.
//!
//! For every subcarrier `n` and candidate angle `theta_m` the dictionary
//! stores the receive-side response the scene would produce (up to a
//! per-subcarrier complex gain) if the target sat at `theta_m`. A column
//! stacks the `N_s` snapshot blocks, antennas fastest:
//!
//! ```text
//! direct:  block k = sqrt(n_rx) * a_r(theta_m + pi) * s_dir_{n,k}(theta_m)
//!          s_dir_{n,k}(theta_m) = sqrt(n_tx) * a_t(theta_m)^H f_{n,k}
//! surface: block k = sqrt(n_rx) * a_r(theta_rb)     * s_ris_{n,k} * b_{n,k}(theta_m)
//!          s_ris_{n,k}          = sqrt(n_tx) * a_t(theta_br)^H f_{n,k}
//! ```
//!
//! so a noiseless on-grid echo is an exact per-subcarrier scalar multiple
//! of the matching column, the scalar being `gain * exp(-j*w_n*tau)`.
//!
//! The grid covers `[-pi/2, pi/2]` with `G` uniformly spaced points
//! `theta_i = -pi/2 + i*pi/(G-1)`; both endpoints are included (they alias
//! to the same half-wavelength steering vector, which the coarse stage's
//! smallest-index tie-break resolves deterministically).

use ndarray::{Array2, Array3, ArrayView1};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::signal::{cdot, ris_cascade_gain, steering_vector, ProbingSet};

// ─── Angle grid ────────────────────────────────────────────────────────────

/// Uniform candidate-angle grid over `[-pi/2, pi/2]`.
#[derive(Debug, Clone)]
pub struct AngleGrid {
    angles: Vec<f64>,
}

impl AngleGrid {
    /// Builds a `size`-point grid; `size` must be at least 2.
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::Config(format!(
                "angle grid needs at least 2 points, got {size}"
            )));
        }
        let step = PI / (size - 1) as f64;
        Ok(Self {
            angles: (0..size).map(|i| -PI / 2.0 + i as f64 * step).collect(),
        })
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    /// True when the grid holds no points (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Angle of grid point `i`, radians.
    pub fn angle(&self, i: usize) -> f64 {
        self.angles[i]
    }

    /// All grid angles in order.
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Grid spacing `pi/(G-1)`, radians.
    pub fn spacing(&self) -> f64 {
        PI / (self.angles.len() - 1) as f64
    }

    /// Index of the grid point closest to `theta` (ties toward the smaller
    /// index, angles outside the span clamp to the nearest endpoint).
    pub fn nearest_index(&self, theta: f64) -> usize {
        let raw = (theta + PI / 2.0) / self.spacing();
        (raw.round().max(0.0) as usize).min(self.angles.len() - 1)
    }
}

// ─── Dictionaries ──────────────────────────────────────────────────────────

/// Per-subcarrier dictionary for one propagation path.
#[derive(Debug, Clone)]
pub struct PathDictionary {
    /// Columns, shape `[N, G, n_rx*N_s]`; entry `[n, m, k*n_rx + i]` is
    /// receive antenna `i` of snapshot block `k`.
    pub atoms: Array3<Complex64>,
    /// Euclidean norm of each column, shape `[N, G]`, precomputed so the
    /// matched filter pays O(1) per normalization.
    pub atom_norms: Array2<f64>,
}

impl PathDictionary {
    /// Dictionary column for subcarrier `n` and grid index `m`.
    pub fn column(&self, n: usize, m: usize) -> ArrayView1<'_, Complex64> {
        self.atoms.slice(ndarray::s![n, m, ..])
    }

    /// Number of subcarriers the dictionary covers.
    pub fn n_subcarriers(&self) -> usize {
        self.atoms.shape()[0]
    }

    /// Number of grid columns per subcarrier.
    pub fn grid_len(&self) -> usize {
        self.atoms.shape()[1]
    }
}

fn finalize(atoms: Array3<Complex64>) -> PathDictionary {
    let (n_sub, g, _) = atoms.dim();
    let mut atom_norms = Array2::zeros((n_sub, g));
    for n in 0..n_sub {
        for m in 0..g {
            let norm_sq: f64 = atoms
                .slice(ndarray::s![n, m, ..])
                .iter()
                .map(|v| v.norm_sqr())
                .sum();
            atom_norms[[n, m]] = norm_sq.sqrt();
        }
    }
    PathDictionary { atoms, atom_norms }
}

/// Builds the direct-path dictionary over `grid` for the given probing.
pub fn build_direct_dictionary(
    scenario: &ScenarioConfig,
    probing: &ProbingSet,
    grid: &AngleGrid,
) -> PathDictionary {
    let a = &scenario.arrays;
    let w = &scenario.waveform;
    let sp = a.spacing_over_lambda;
    let tx_scale = (a.n_tx as f64).sqrt();
    let rx_scale = (a.n_rx as f64).sqrt();

    let mut atoms = Array3::zeros((w.n_subcarriers, grid.len(), a.n_rx * w.n_snapshots));
    for (m, &theta) in grid.angles().iter().enumerate() {
        let a_t = steering_vector(theta, a.n_tx, sp);
        let a_r = steering_vector(theta + PI, a.n_rx, sp);
        for n in 0..w.n_subcarriers {
            for k in 0..w.n_snapshots {
                let s = tx_scale * cdot(a_t.view(), probing.precoders.slice(ndarray::s![n, k, ..]));
                let cs = rx_scale * s;
                for i in 0..a.n_rx {
                    atoms[[n, m, k * a.n_rx + i]] = cs * a_r[i];
                }
            }
        }
    }
    finalize(atoms)
}

/// Builds the surface-path dictionary over `grid` for the given probing.
///
/// The transmit pointing and receive response are fixed by the known
/// station-surface geometry; only the cascade gain `b_{n,k}(theta_m)`
/// depends on the candidate angle.
pub fn build_ris_dictionary(
    scenario: &ScenarioConfig,
    probing: &ProbingSet,
    grid: &AngleGrid,
) -> PathDictionary {
    let a = &scenario.arrays;
    let w = &scenario.waveform;
    let sp = a.spacing_over_lambda;
    let theta_rb = scenario.theta_rb();
    let a_t = steering_vector(scenario.theta_br(), a.n_tx, sp);
    let a_r = steering_vector(theta_rb, a.n_rx, sp);
    let tx_scale = (a.n_tx as f64).sqrt();
    let rx_scale = (a.n_rx as f64).sqrt();

    // The angle-independent snapshot factor sqrt(n_tx) * a_t^H f_{n,k}.
    let mut s_ris = Array2::zeros((w.n_subcarriers, w.n_snapshots));
    for n in 0..w.n_subcarriers {
        for k in 0..w.n_snapshots {
            s_ris[[n, k]] =
                tx_scale * cdot(a_t.view(), probing.precoders.slice(ndarray::s![n, k, ..]));
        }
    }

    let mut atoms = Array3::zeros((w.n_subcarriers, grid.len(), a.n_rx * w.n_snapshots));
    for (m, &theta) in grid.angles().iter().enumerate() {
        for n in 0..w.n_subcarriers {
            for k in 0..w.n_snapshots {
                let b = ris_cascade_gain(
                    theta,
                    theta_rb,
                    probing.ris_phases.slice(ndarray::s![n, k, ..]),
                    sp,
                );
                let cs = rx_scale * s_ris[[n, k]] * b;
                for i in 0..a.n_rx {
                    atoms[[n, m, k * a.n_rx + i]] = cs * a_r[i];
                }
            }
        }
    }
    finalize(atoms)
}

// ─── Tests ─────────────────────────────────────────────────────────────────
