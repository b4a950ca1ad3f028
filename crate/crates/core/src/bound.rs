//! Fisher information and the position error bound (PEB).
//!
//! For a measurement `y = m(eta) + z` with circularly-symmetric complex
//! Gaussian noise `z ~ CN(0, sigma^2 I)` and real parameter vector `eta`,
//! the Fisher information matrix is
//!
//! ```text
//! J_ij = (2 / sigma^2) * Re{ d_i^H d_j },   d_i = d m / d eta_i.
//! ```
//!
//! The channel parameterization stacks, per active path, its angle, its
//! delay, and the real/imaginary parts of its complex gain. Position
//! information follows by chaining through the scene geometry; the
//! headline PEB marginalizes the unknown gains (Schur complement) before
//! projecting onto x/y, while a secondary known-gains variant simply
//! zero-pads the gain rows of the chain matrix.
//!
//! Information is additive over (subcarrier, snapshot) blocks — the noise
//! is independent across them — which yields the prefix-monotonicity and
//! replication-scaling properties the tests pin down.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::ops::Range;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::geometry::GeometryJacobian;
use crate::refine::channel_atoms;
use crate::signal::{ChannelParams, ProbingSet};

/// Meaning of one row/column of a [`FisherMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamLabel {
    /// Target bearing from the base station.
    ThetaBt,
    /// Two-way direct delay.
    TauD,
    /// Direct gain, real part.
    GainDirRe,
    /// Direct gain, imaginary part.
    GainDirIm,
    /// Target bearing from the surface.
    ThetaRt,
    /// Two-way surface-path delay.
    TauR,
    /// Surface gain, real part.
    GainRisRe,
    /// Surface gain, imaginary part.
    GainRisIm,
}

impl ParamLabel {
    /// Geometric parameters carry position information; gain parameters
    /// are nuisance.
    pub fn is_geometric(self) -> bool {
        matches!(
            self,
            ParamLabel::ThetaBt | ParamLabel::TauD | ParamLabel::ThetaRt | ParamLabel::TauR
        )
    }

    /// Row of the position chain matrix for this parameter: its partial
    /// derivatives against target x and y (zero for gains).
    fn chain_row(self, jac: &GeometryJacobian) -> [f64; 2] {
        match self {
            ParamLabel::ThetaBt => [jac.d_theta_bt_dx, jac.d_theta_bt_dy],
            ParamLabel::TauD => [jac.d_tau_d_dx, jac.d_tau_d_dy],
            ParamLabel::ThetaRt => [jac.d_theta_rt_dx, jac.d_theta_rt_dy],
            ParamLabel::TauR => [jac.d_tau_r_dx, jac.d_tau_r_dy],
            _ => [0.0, 0.0],
        }
    }
}

/// Which propagation paths the measurement model contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathSelection {
    /// Direct and surface echo together (8 parameters).
    BothPaths,
    /// Direct echo alone (4 parameters).
    DirectOnly,
    /// Surface echo alone (4 parameters).
    SurfaceOnly,
}

/// A Fisher information matrix together with the meaning of its rows.
#[derive(Debug, Clone)]
pub struct FisherMatrix {
    /// The (symmetric, positive semidefinite) information matrix.
    pub matrix: DMatrix<f64>,
    /// Row/column labels, in order.
    pub labels: Vec<ParamLabel>,
}

/// Position-domain bound derived from a channel Fisher matrix.
#[derive(Debug, Clone, Copy)]
pub struct PositionBound {
    /// 2x2 position information with the gains marginalized out.
    pub fim_position: [[f64; 2]; 2],
    /// Root-trace of the inverse position information: the bound on RMS
    /// position error, meters. Infinite when `singular`.
    pub peb_m: f64,
    /// Bound under the (optimistic) assumption of known gains, meters.
    pub peb_known_gains_m: f64,
    /// Set when the information matrix could not support a finite bound.
    pub singular: bool,
}

/// Full-measurement Fisher matrix for the selected paths.
pub fn fim_channel(
    params: &ChannelParams,
    scenario: &ScenarioConfig,
    probing: &ProbingSet,
    noise_sigma: f64,
    selection: PathSelection,
) -> Result<FisherMatrix> {
    let blocks = scenario.waveform.n_subcarriers * scenario.waveform.n_snapshots;
    fim_channel_prefix(params, scenario, probing, noise_sigma, selection, blocks)
}

/// Fisher matrix restricted to the first `block_count` (subcarrier,
/// snapshot) blocks in row-major order — the information collected after
/// only part of the measurement.
pub fn fim_channel_prefix(
    params: &ChannelParams,
    scenario: &ScenarioConfig,
    probing: &ProbingSet,
    noise_sigma: f64,
    selection: PathSelection,
    block_count: usize,
) -> Result<FisherMatrix> {
    if !(noise_sigma > 0.0) {
        return Err(Error::NonPositiveNoise(noise_sigma));
    }
    let w = &scenario.waveform;
    let total_blocks = w.n_subcarriers * w.n_snapshots;
    if block_count == 0 || block_count > total_blocks {
        return Err(Error::Config(format!(
            "block prefix must be in 1..={total_blocks}, got {block_count}"
        )));
    }

    let atoms = channel_atoms(
        params.theta_bt,
        params.tau_d_us,
        params.theta_rt,
        params.tau_r_us,
        scenario,
        probing,
    );
    let j = Complex64::new(0.0, 1.0);
    let direct_set = |d: &mut Vec<Vec<Complex64>>, labels: &mut Vec<ParamLabel>| {
        d.push(atoms.d_dir_dtheta.iter().map(|v| params.gain_dir * v).collect());
        d.push(atoms.d_dir_dtau.iter().map(|v| params.gain_dir * v).collect());
        d.push(atoms.phi_dir.to_vec());
        d.push(atoms.phi_dir.iter().map(|v| j * v).collect());
        labels.extend([
            ParamLabel::ThetaBt,
            ParamLabel::TauD,
            ParamLabel::GainDirRe,
            ParamLabel::GainDirIm,
        ]);
    };
    let surface_set = |d: &mut Vec<Vec<Complex64>>, labels: &mut Vec<ParamLabel>| {
        d.push(atoms.d_ris_dtheta.iter().map(|v| params.gain_ris * v).collect());
        d.push(atoms.d_ris_dtau.iter().map(|v| params.gain_ris * v).collect());
        d.push(atoms.phi_ris.to_vec());
        d.push(atoms.phi_ris.iter().map(|v| j * v).collect());
        labels.extend([
            ParamLabel::ThetaRt,
            ParamLabel::TauR,
            ParamLabel::GainRisRe,
            ParamLabel::GainRisIm,
        ]);
    };

    let mut d_vectors: Vec<Vec<Complex64>> = Vec::new();
    let mut labels = Vec::new();
    match selection {
        PathSelection::BothPaths => {
            direct_set(&mut d_vectors, &mut labels);
            surface_set(&mut d_vectors, &mut labels);
        }
        PathSelection::DirectOnly => direct_set(&mut d_vectors, &mut labels),
        PathSelection::SurfaceOnly => surface_set(&mut d_vectors, &mut labels),
    }

    let range = 0..block_count * scenario.arrays.n_rx;
    Ok(FisherMatrix {
        matrix: fim_from_derivatives(&d_vectors, noise_sigma, range),
        labels,
    })
}

fn fim_from_derivatives(
    d_vectors: &[Vec<Complex64>],
    noise_sigma: f64,
    range: Range<usize>,
) -> DMatrix<f64> {
    let p = d_vectors.len();
    let scale = 2.0 / (noise_sigma * noise_sigma);
    let mut m = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let v: f64 = d_vectors[a][range.clone()]
                .iter()
                .zip(d_vectors[b][range.clone()].iter())
                .map(|(x, y)| (x.conj() * y).re)
                .sum();
            m[(a, b)] = scale * v;
            m[(b, a)] = scale * v;
        }
    }
    m
}

/// Stacks two Fisher matrices as a block-diagonal matrix (independent
/// parameter sets observed through independent measurements).
pub fn block_diag_fim(a: &FisherMatrix, b: &FisherMatrix) -> FisherMatrix {
    let (na, nb) = (a.matrix.nrows(), b.matrix.nrows());
    let mut m = DMatrix::zeros(na + nb, na + nb);
    m.view_mut((0, 0), (na, na)).copy_from(&a.matrix);
    m.view_mut((na, na), (nb, nb)).copy_from(&b.matrix);
    let mut labels = a.labels.clone();
    labels.extend_from_slice(&b.labels);
    FisherMatrix { matrix: m, labels }
}

/// Projects a channel Fisher matrix onto target position.
///
/// The headline `peb_m` marginalizes the gain parameters via the Schur
/// complement and then chains the remaining geometric information through
/// the geometry Jacobian; `peb_known_gains_m` skips the marginalization
/// (gain rows chain to zero), so it can only be smaller or equal. A
/// non-invertible gain block or position information yields an infinite,
/// flagged bound rather than an error.
pub fn position_bound(fim: &FisherMatrix, jac: &GeometryJacobian) -> PositionBound {
    let p = fim.labels.len();
    debug_assert_eq!(fim.matrix.nrows(), p);

    // Known-gains variant: chain the full matrix, gain rows zeroed.
    let mut t_full = DMatrix::zeros(p, 2);
    for (i, label) in fim.labels.iter().enumerate() {
        let row = label.chain_row(jac);
        t_full[(i, 0)] = row[0];
        t_full[(i, 1)] = row[1];
    }
    let fim_pos_known = t_full.transpose() * &fim.matrix * &t_full;
    let (peb_known, _) = peb_from_2x2(&fim_pos_known);

    // Headline variant: Schur-marginalize the gains first.
    let geo_idx: Vec<usize> = (0..p).filter(|&i| fim.labels[i].is_geometric()).collect();
    let gain_idx: Vec<usize> = (0..p).filter(|&i| !fim.labels[i].is_geometric()).collect();
    let j_aa = fim.matrix.select_rows(&geo_idx).select_columns(&geo_idx);
    let marginal = if gain_idx.is_empty() {
        Some(j_aa.clone())
    } else {
        let j_ab = fim.matrix.select_rows(&geo_idx).select_columns(&gain_idx);
        let j_bb = fim.matrix.select_rows(&gain_idx).select_columns(&gain_idx);
        j_bb.try_inverse()
            .map(|j_bb_inv| &j_aa - &j_ab * j_bb_inv * j_ab.transpose())
    };

    match marginal {
        Some(j_geo) => {
            let mut t_geo = DMatrix::zeros(geo_idx.len(), 2);
            for (r, &i) in geo_idx.iter().enumerate() {
                let row = fim.labels[i].chain_row(jac);
                t_geo[(r, 0)] = row[0];
                t_geo[(r, 1)] = row[1];
            }
            let fim_pos = t_geo.transpose() * j_geo * t_geo;
            let (peb, singular) = peb_from_2x2(&fim_pos);
            PositionBound {
                fim_position: [
                    [fim_pos[(0, 0)], fim_pos[(0, 1)]],
                    [fim_pos[(1, 0)], fim_pos[(1, 1)]],
                ],
                peb_m: peb,
                peb_known_gains_m: peb_known,
                singular,
            }
        }
        None => PositionBound {
            fim_position: [[0.0; 2]; 2],
            peb_m: f64::INFINITY,
            peb_known_gains_m: peb_known,
            singular: true,
        },
    }
}

/// Root-trace-of-inverse for a 2x2 information matrix, with a singularity
/// flag instead of a panic.
fn peb_from_2x2(m: &DMatrix<f64>) -> (f64, bool) {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let det = a * d - b * c;
    let tr = a + d;
    if det <= 0.0 || !det.is_finite() || !tr.is_finite() {
        return (f64::INFINITY, true);
    }
    let peb = (tr / det).sqrt();
    if peb.is_finite() {
        (peb, false)
    } else {
        (f64::INFINITY, true)
    }
}

// ─── Tests ─────────────────────────────────────────────────────────────────
