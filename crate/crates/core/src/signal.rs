//! Echo signal model: array steering, surface cascade gains, dual-path
//! measurement synthesis, and SNR-calibrated noise.
//!
//! One probing snapshot `k` on subcarrier `n` produces a receive-array
//! block `y_{n,k}` of length `n_rx`. The direct echo is
//!
//! ```text
//! y_dir = sqrt(Nt*Nr) * g_d * exp(-j*w_n*tau_d) * a_r(theta_bt + pi) * (a_t(theta_bt)^H f_{n,k})
//! ```
//!
//! and the surface-bounce echo picks up the *squared* cascade response
//! (the wave crosses the surface twice):
//!
//! ```text
//! y_ris = sqrt(Nt*Nr) * g_r * exp(-j*w_n*tau_r) * a_r(theta_rb) * (a_t(theta_br)^H f_{n,k}) * b_{n,k}
//! b_{n,k}(theta) = (a_s(theta_rb)^H * diag(phases_{n,k}) * a_s(theta))^2
//! ```
//!
//! All steering vectors are unit-norm half-wavelength line arrays; `w_n`
//! are the subcarrier angular frequencies from
//! [`WaveformConfig::angular_frequency`]. A measurement is the sum of both
//! echoes plus circularly-symmetric complex Gaussian noise of per-entry
//! variance `sigma^2`.

use ndarray::{Array1, Array3, ArrayView1};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::{PI, TAU};

use crate::config::{ArrayConfig, ScenarioConfig, WaveformConfig};
use crate::error::{Error, Result};
use crate::geometry::GeometricParams;

// ─── Steering and cascade responses ────────────────────────────────────────

/// Conjugated inner product `a^H b`.
pub fn cdot(a: ArrayView1<'_, Complex64>, b: ArrayView1<'_, Complex64>) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Unit-norm line-array steering vector.
///
/// Element `i` (0-based) is `exp(-j*2*pi*spacing*i*sin(theta)) / sqrt(n)`,
/// so the vector always has unit Euclidean norm; a single-element array
/// steers to `[1]` regardless of angle.
pub fn steering_vector(theta: f64, n_ant: usize, spacing_over_lambda: f64) -> Array1<Complex64> {
    debug_assert!(n_ant >= 1, "steering vector needs at least one element");
    let scale = 1.0 / (n_ant as f64).sqrt();
    let step = -TAU * spacing_over_lambda * theta.sin();
    Array1::from_iter((0..n_ant).map(|i| Complex64::from_polar(scale, step * i as f64)))
}

/// Elementwise angle derivative of [`steering_vector`].
///
/// Element `i` of `a(theta)` has phase `-2*pi*spacing*i*sin(theta)`, so its
/// derivative is the element times `-j*2*pi*spacing*i*cos(theta)`.
pub fn steering_vector_deriv(
    theta: f64,
    n_ant: usize,
    spacing_over_lambda: f64,
) -> Array1<Complex64> {
    let a = steering_vector(theta, n_ant, spacing_over_lambda);
    let factor = -TAU * spacing_over_lambda * theta.cos();
    Array1::from_iter(
        a.iter()
            .enumerate()
            .map(|(i, v)| v * Complex64::new(0.0, factor * i as f64)),
    )
}

/// Single-pass surface response: `v = a_s(theta_rb)^H diag(phases) a_s(theta)`.
///
/// The surface element count is `phases.len()`. `|v| <= 1` for unit-modulus
/// phases, with equality when the phase profile aligns the two steering
/// vectors.
pub fn ris_cascade_inner(
    theta: f64,
    theta_rb: f64,
    phases: ArrayView1<'_, Complex64>,
    spacing_over_lambda: f64,
) -> Complex64 {
    let m = phases.len();
    let a_to = steering_vector(theta, m, spacing_over_lambda);
    let a_rb = steering_vector(theta_rb, m, spacing_over_lambda);
    a_rb.iter()
        .zip(phases.iter())
        .zip(a_to.iter())
        .map(|((rb, p), t)| rb.conj() * p * t)
        .sum()
}

/// Two-pass cascade gain `b = v^2` for a monostatic bounce over the surface
/// (out and back through the same phase profile).
pub fn ris_cascade_gain(
    theta: f64,
    theta_rb: f64,
    phases: ArrayView1<'_, Complex64>,
    spacing_over_lambda: f64,
) -> Complex64 {
    let v = ris_cascade_inner(theta, theta_rb, phases, spacing_over_lambda);
    v * v
}

/// Cascade gain and its angle derivative: `b = v^2`, `db/dtheta = 2*v*v'`
/// with `v' = a_s(theta_rb)^H diag(phases) a_s'(theta)`.
pub fn ris_cascade_gain_with_deriv(
    theta: f64,
    theta_rb: f64,
    phases: ArrayView1<'_, Complex64>,
    spacing_over_lambda: f64,
) -> (Complex64, Complex64) {
    let m = phases.len();
    let a_rb = steering_vector(theta_rb, m, spacing_over_lambda);
    let a_to = steering_vector(theta, m, spacing_over_lambda);
    let d_to = steering_vector_deriv(theta, m, spacing_over_lambda);
    let mut v = Complex64::default();
    let mut dv = Complex64::default();
    for i in 0..m {
        let w = a_rb[i].conj() * phases[i];
        v += w * a_to[i];
        dv += w * d_to[i];
    }
    (v * v, 2.0 * v * dv)
}

// ─── Probing, channels, measurements ───────────────────────────────────────

/// One experiment's worth of random probing: per-(subcarrier, snapshot)
/// transmit precoders and surface phase profiles.
#[derive(Debug, Clone)]
pub struct ProbingSet {
    /// Precoders `f_{n,k}`, shape `[N, N_s, n_tx]`; each column has unit
    /// norm (entries `exp(j*phi)/sqrt(n_tx)` with uniform phases).
    pub precoders: Array3<Complex64>,
    /// Surface phase profiles `diag` entries, shape `[N, N_s, m_ris]`;
    /// unit-modulus entries with uniform phases.
    pub ris_phases: Array3<Complex64>,
}

/// True channel parameters for one scene realization: geometry of both
/// paths plus complex path gains.
#[derive(Debug, Clone, Copy)]
pub struct ChannelParams {
    /// Target bearing from the base station, radians.
    pub theta_bt: f64,
    /// Two-way direct delay, microseconds.
    pub tau_d_us: f64,
    /// Complex direct-path gain.
    pub gain_dir: Complex64,
    /// Target bearing from the surface, radians.
    pub theta_rt: f64,
    /// Two-way surface-path delay, microseconds.
    pub tau_r_us: f64,
    /// Complex surface-path gain.
    pub gain_ris: Complex64,
}

impl ChannelParams {
    /// Builds channel parameters from scene geometry and path gains.
    pub fn from_geometry(gp: &GeometricParams, gain_dir: Complex64, gain_ris: Complex64) -> Self {
        Self {
            theta_bt: gp.theta_bt,
            tau_d_us: gp.tau_d_us,
            gain_dir,
            theta_rt: gp.theta_rt,
            tau_r_us: gp.tau_r_us,
            gain_ris,
        }
    }
}

/// A full measurement: receive blocks for every (subcarrier, snapshot),
/// the probing that produced them, and the noise level used.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    /// Receive blocks `y_{n,k}`, shape `[N, N_s, n_rx]`.
    pub blocks: Array3<Complex64>,
    /// The probing the blocks were measured under.
    pub probing: ProbingSet,
    /// Per-entry noise standard deviation `sigma` (complex variance
    /// `sigma^2` split evenly between real and imaginary parts).
    pub noise_sigma: f64,
}

/// Draws a random probing set: precoder entries `exp(j*u)/sqrt(n_tx)` and
/// unit-modulus surface phases `exp(j*u)`, `u ~ U[0, 2*pi)`.
///
/// Consumes the stream in a fixed order (all precoders row-major, then all
/// phase profiles row-major) so equal seeds give equal probing.
pub fn generate_probing(
    arrays: &ArrayConfig,
    waveform: &WaveformConfig,
    rng: &mut impl Rng,
) -> ProbingSet {
    let (n, ns) = (waveform.n_subcarriers, waveform.n_snapshots);
    let tx_scale = 1.0 / (arrays.n_tx as f64).sqrt();
    let precoders = Array3::from_shape_simple_fn((n, ns, arrays.n_tx), || {
        Complex64::from_polar(tx_scale, rng.random::<f64>() * TAU)
    });
    let ris_phases = Array3::from_shape_simple_fn((n, ns, arrays.m_ris), || {
        Complex64::from_polar(1.0, rng.random::<f64>() * TAU)
    });
    ProbingSet {
        precoders,
        ris_phases,
    }
}

/// Synthesizes the noiseless direct echo, shape `[N, N_s, n_rx]`.
pub fn synthesize_direct_echo(
    params: &ChannelParams,
    scenario: &ScenarioConfig,
    probing: &ProbingSet,
) -> Array3<Complex64> {
    let a = &scenario.arrays;
    let w = &scenario.waveform;
    let a_t = steering_vector(params.theta_bt, a.n_tx, a.spacing_over_lambda);
    let a_r = steering_vector(params.theta_bt + PI, a.n_rx, a.spacing_over_lambda);
    let scale = (a.n_tx as f64 * a.n_rx as f64).sqrt();

    let mut out = Array3::zeros((w.n_subcarriers, w.n_snapshots, a.n_rx));
    for n in 0..w.n_subcarriers {
        let carrier = params.gain_dir
            * Complex64::from_polar(scale, -w.angular_frequency(n) * params.tau_d_us);
        for k in 0..w.n_snapshots {
            let s = cdot(a_t.view(), probing.precoders.slice(ndarray::s![n, k, ..]));
            let cs = carrier * s;
            for i in 0..a.n_rx {
                out[[n, k, i]] = cs * a_r[i];
            }
        }
    }
    out
}

/// Synthesizes the noiseless surface-bounce echo, shape `[N, N_s, n_rx]`.
pub fn synthesize_ris_echo(
    params: &ChannelParams,
    scenario: &ScenarioConfig,
    probing: &ProbingSet,
) -> Array3<Complex64> {
    let a = &scenario.arrays;
    let w = &scenario.waveform;
    let sp = a.spacing_over_lambda;
    let theta_br = scenario.theta_br();
    let theta_rb = scenario.theta_rb();
    let a_t = steering_vector(theta_br, a.n_tx, sp);
    let a_r = steering_vector(theta_rb, a.n_rx, sp);
    let scale = (a.n_tx as f64 * a.n_rx as f64).sqrt();

    let mut out = Array3::zeros((w.n_subcarriers, w.n_snapshots, a.n_rx));
    for n in 0..w.n_subcarriers {
        let carrier = params.gain_ris
            * Complex64::from_polar(scale, -w.angular_frequency(n) * params.tau_r_us);
        for k in 0..w.n_snapshots {
            let s = cdot(a_t.view(), probing.precoders.slice(ndarray::s![n, k, ..]));
            let b = ris_cascade_gain(
                params.theta_rt,
                theta_rb,
                probing.ris_phases.slice(ndarray::s![n, k, ..]),
                sp,
            );
            let cs = carrier * s * b;
            for i in 0..a.n_rx {
                out[[n, k, i]] = cs * a_r[i];
            }
        }
    }
    out
}

/// Sum of both noiseless echoes.
pub fn synthesize_noiseless(
    params: &ChannelParams,
    scenario: &ScenarioConfig,
    probing: &ProbingSet,
) -> Array3<Complex64> {
    let mut y = synthesize_direct_echo(params, scenario, probing);
    y += &synthesize_ris_echo(params, scenario, probing);
    y
}

/// Noise level that realizes a target SNR against a noiseless reference:
/// `sigma^2 = mean(|y|^2) / 10^(snr_db/10)` over all entries.
///
/// Fails if the reference signal is identically zero.
pub fn snr_to_sigma(noiseless: &Array3<Complex64>, snr_db: f64) -> Result<f64> {
    let mean_power =
        noiseless.iter().map(|v| v.norm_sqr()).sum::<f64>() / noiseless.len() as f64;
    if mean_power <= 0.0 {
        return Err(Error::ZeroSignal);
    }
    Ok((mean_power / 10f64.powf(snr_db / 10.0)).sqrt())
}

/// Synthesizes a measurement: both echoes plus circularly-symmetric complex
/// Gaussian noise with per-entry variance `noise_sigma^2` (real and
/// imaginary parts each `N(0, sigma^2/2)`).
///
/// Noise is drawn entry by entry in row-major block order, real part before
/// imaginary part, so equal seeds give bit-identical measurements.
pub fn synthesize_measurement(
    params: &ChannelParams,
    scenario: &ScenarioConfig,
    probing: ProbingSet,
    noise_sigma: f64,
    rng: &mut impl Rng,
) -> Result<MeasurementSet> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::NonPositiveNoise(noise_sigma));
    }
    let mut blocks = synthesize_noiseless(params, scenario, &probing);
    if noise_sigma > 0.0 {
        let s = noise_sigma / 2f64.sqrt();
        for v in blocks.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(s * re, s * im);
        }
    }
    Ok(MeasurementSet {
        blocks,
        probing,
        noise_sigma,
    })
}

// ─── Tests ─────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array1;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn steering_matches_literal_formula() {
        let theta = 0.3;
        let a = steering_vector(theta, 4, 0.5);
        for (i, v) in a.iter().enumerate() {
            // Literal per-element formula, written out independently.
            let phase = -2.0 * PI * 0.5 * i as f64 * theta.sin();
            let expect = c(phase.cos() / 2.0, phase.sin() / 2.0);
            assert_relative_eq!(v.re, expect.re, epsilon = 1e-15);
            assert_relative_eq!(v.im, expect.im, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_element_array_steers_to_one() {
        let a = steering_vector(1.234, 1, 0.5);
        assert_eq!(a.len(), 1);
        assert_relative_eq!(a[0].re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(a[0].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn identity_phases_cascade_matches_scalar_expansion() {
        // M = 2, all phases 1: b = (sum_m conj(a_rb[m]) * a_to[m])^2.
        let (theta, theta_rb) = (0.4, -2.356194490192345);
        let phases = Array1::from_elem(2, c(1.0, 0.0));
        let b = ris_cascade_gain(theta, theta_rb, phases.view(), 0.5);

        let term = |m: f64, ang: f64| {
            let ph = -2.0 * PI * 0.5 * m * f64::sin(ang);
            c(ph.cos(), ph.sin()) / 2f64.sqrt()
        };
        let v = term(0.0, theta_rb).conj() * term(0.0, theta)
            + term(1.0, theta_rb).conj() * term(1.0, theta);
        let expect = v * v;
        assert_relative_eq!(b.re, expect.re, epsilon = 1e-14);
        assert_relative_eq!(b.im, expect.im, epsilon = 1e-14);
    }

    #[test]
    fn aligned_phase_profile_reaches_unit_cascade_magnitude() {
        // Choosing phases that cancel the steering phase difference makes
        // every term 1/M, so |v| = 1 and |b| = 1 exactly.
        let (theta, theta_rb, m) = (0.7, -0.9, 16);
        let a_to = steering_vector(theta, m, 0.5);
        let a_rb = steering_vector(theta_rb, m, 0.5);
        let phases = Array1::from_iter(
            a_to.iter()
                .zip(a_rb.iter())
                .map(|(t, r)| Complex64::from_polar(1.0, r.arg() - t.arg())),
        );
        let b = ris_cascade_gain(theta, theta_rb, phases.view(), 0.5);
        assert_relative_eq!(b.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn direct_echo_matches_scalar_loop_on_tiny_dims() {
        // N=2, N_s=1, n_tx=1, n_rx=2: every quantity is tractable by hand.
        let mut sc = ScenarioConfig::desk();
        sc.arrays.n_tx = 1;
        sc.arrays.n_rx = 2;
        sc.waveform.n_subcarriers = 2;
        sc.waveform.n_snapshots = 1;
        let params = ChannelParams {
            theta_bt: 0.25,
            tau_d_us: 0.05,
            gain_dir: c(0.8, -0.3),
            theta_rt: 0.0,
            tau_r_us: 0.0,
            gain_ris: c(0.0, 0.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let probing = generate_probing(&sc.arrays, &sc.waveform, &mut rng);
        let y = synthesize_direct_echo(&params, &sc, &probing);

        let ts = 1.0 / sc.waveform.sample_rate_mhz;
        for n in 0..2 {
            let w_n = 2.0 * PI * n as f64 / (2.0 * ts);
            // n_tx = 1: a_t = [1], so a_t^H f = f[0].
            let s = probing.precoders[[n, 0, 0]];
            for i in 0..2 {
                let rx_phase = -2.0 * PI * 0.5 * i as f64 * f64::sin(params.theta_bt + PI);
                let expect = 2f64.sqrt()
                    * params.gain_dir
                    * c(0.0, -w_n * params.tau_d_us).exp()
                    * (c(rx_phase.cos(), rx_phase.sin()) / 2f64.sqrt())
                    * s;
                let got = y[[n, 0, i]];
                assert_relative_eq!(got.re, expect.re, epsilon = 1e-13);
                assert_relative_eq!(got.im, expect.im, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn ris_echo_matches_scalar_loop_on_tiny_dims() {
        let mut sc = ScenarioConfig::desk();
        sc.arrays.n_tx = 1;
        sc.arrays.n_rx = 1;
        sc.arrays.m_ris = 2;
        sc.waveform.n_subcarriers = 1;
        sc.waveform.n_snapshots = 2;
        let params = ChannelParams {
            theta_bt: 0.0,
            tau_d_us: 0.0,
            gain_dir: c(0.0, 0.0),
            theta_rt: -0.5,
            tau_r_us: 0.08,
            gain_ris: c(-0.2, 0.9),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let probing = generate_probing(&sc.arrays, &sc.waveform, &mut rng);
        let y = synthesize_ris_echo(&params, &sc, &probing);

        let theta_rb = sc.theta_rb();
        // w_0 = 0, n_tx = n_rx = 1, so a_t^H f = f[0] and a_r = [1].
        for k in 0..2 {
            let s = probing.precoders[[0, k, 0]];
            let mut v = c(0.0, 0.0);
            for m in 0..2 {
                let rb_ph = -2.0 * PI * 0.5 * m as f64 * theta_rb.sin();
                let to_ph = -2.0 * PI * 0.5 * m as f64 * params.theta_rt.sin();
                v += (c(rb_ph.cos(), rb_ph.sin()) / 2f64.sqrt()).conj()
                    * probing.ris_phases[[0, k, m]]
                    * (c(to_ph.cos(), to_ph.sin()) / 2f64.sqrt());
            }
            let expect = params.gain_ris * v * v * s;
            let got = y[[0, k, 0]];
            assert_relative_eq!(got.re, expect.re, epsilon = 1e-13);
            assert_relative_eq!(got.im, expect.im, epsilon = 1e-13);
        }
    }

    #[test]
    fn zero_sigma_measurement_equals_noiseless_sum() {
        let sc = ScenarioConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let probing = generate_probing(&sc.arrays, &sc.waveform, &mut rng);
        let params = ChannelParams {
            theta_bt: 0.2,
            tau_d_us: 0.07,
            gain_dir: c(1.0, 0.0),
            theta_rt: -0.5,
            tau_r_us: 0.09,
            gain_ris: c(0.0, 1.0),
        };
        let clean = synthesize_noiseless(&params, &sc, &probing);
        let meas =
            synthesize_measurement(&params, &sc, probing.clone(), 0.0, &mut rng).unwrap();
        assert_eq!(meas.blocks, clean);
    }

    #[test]
    fn equal_seeds_give_bit_identical_measurements() {
        let sc = ScenarioConfig::desk();
        let params = ChannelParams {
            theta_bt: 0.2,
            tau_d_us: 0.07,
            gain_dir: c(1.0, 0.0),
            theta_rt: -0.5,
            tau_r_us: 0.09,
            gain_ris: c(0.7, -0.7),
        };
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let probing = generate_probing(&sc.arrays, &sc.waveform, &mut rng);
            synthesize_measurement(&params, &sc, probing, 0.3, &mut rng).unwrap()
        };
        let (a, b, c_) = (run(42), run(42), run(43));
        assert_eq!(a.blocks, b.blocks);
        assert_ne!(a.blocks, c_.blocks);
    }

    #[test]
    fn noise_power_matches_requested_sigma() {
        let mut sc = ScenarioConfig::desk();
        sc.waveform.n_subcarriers = 32;
        sc.waveform.n_snapshots = 32;
        let params = ChannelParams {
            theta_bt: 0.2,
            tau_d_us: 0.05,
            gain_dir: c(1.0, 0.0),
            theta_rt: -0.5,
            tau_r_us: 0.09,
            gain_ris: c(0.5, 0.5),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let probing = generate_probing(&sc.arrays, &sc.waveform, &mut rng);
        let clean = synthesize_noiseless(&params, &sc, &probing);
        let sigma = 0.7;
        let meas = synthesize_measurement(&params, &sc, probing, sigma, &mut rng).unwrap();
        let resid = &meas.blocks - &clean;
        let mean_sq = resid.iter().map(|v| v.norm_sqr()).sum::<f64>() / resid.len() as f64;
        // 8192 samples: the variance estimate concentrates well within 5%.
        assert_relative_eq!(mean_sq, sigma * sigma, max_relative = 0.05);
    }

    #[test]
    fn snr_calibration_matches_mean_signal_power() {
        let sc = ScenarioConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let probing = generate_probing(&sc.arrays, &sc.waveform, &mut rng);
        let params = ChannelParams {
            theta_bt: 0.3,
            tau_d_us: 0.06,
            gain_dir: c(1.0, 0.0),
            theta_rt: -0.4,
            tau_r_us: 0.08,
            gain_ris: c(0.0, 1.0),
        };
        let clean = synthesize_noiseless(&params, &sc, &probing);
        let mean_power = clean.iter().map(|v| v.norm_sqr()).sum::<f64>() / clean.len() as f64;
        // 0 dB: sigma^2 equals the mean per-entry signal power.
        let sigma = snr_to_sigma(&clean, 0.0).unwrap();
        assert_relative_eq!(sigma * sigma, mean_power, max_relative = 1e-12);
        // +20 dB: noise power is 100x smaller.
        let sigma20 = snr_to_sigma(&clean, 20.0).unwrap();
        assert_relative_eq!(sigma20 * sigma20, mean_power / 100.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_signal_rejects_snr_calibration() {
        let zeros = Array3::<Complex64>::zeros((2, 2, 2));
        assert!(matches!(snr_to_sigma(&zeros, 10.0), Err(Error::ZeroSignal)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Steering vectors keep unit norm at any angle and size.
        #[test]
        fn steering_norm_is_one(theta in -1.5f64..1.5, n in 1usize..64) {
            let a = steering_vector(theta, n, 0.5);
            let norm_sq: f64 = a.iter().map(|v| v.norm_sqr()).sum();
            prop_assert!((norm_sq - 1.0).abs() < 1e-12);
        }

        /// Unit-modulus phase profiles can never push the cascade magnitude
        /// above 1 (each of the M terms has magnitude 1/M).
        #[test]
        fn cascade_magnitude_is_bounded_by_one(
            theta in -1.5f64..1.5,
            theta_rb in -3.1f64..3.1,
            seed in 0u64..1000,
            m in 1usize..32,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phases = Array1::from_shape_simple_fn(m, || {
                Complex64::from_polar(1.0, rng.random::<f64>() * TAU)
            });
            let b = ris_cascade_gain(theta, theta_rb, phases.view(), 0.5);
            prop_assert!(b.norm() <= 1.0 + 1e-12);
        }

        /// The analytic steering derivative matches central differences.
        #[test]
        fn steering_deriv_matches_finite_differences(
            theta in -1.4f64..1.4,
            n in 1usize..24,
        ) {
            let h = 1e-6;
            let d = steering_vector_deriv(theta, n, 0.5);
            let hi = steering_vector(theta + h, n, 0.5);
            let lo = steering_vector(theta - h, n, 0.5);
            for i in 0..n {
                let fd = (hi[i] - lo[i]) / (2.0 * h);
                prop_assert!((d[i] - fd).norm() < 1e-7, "element {i}: {} vs {}", d[i], fd);
            }
        }

        /// The cascade angle derivative matches central differences.
        #[test]
        fn cascade_deriv_matches_finite_differences(
            theta in -1.4f64..1.4,
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phases = Array1::from_shape_simple_fn(8, || {
                Complex64::from_polar(1.0, rng.random::<f64>() * TAU)
            });
            let (b, db) = ris_cascade_gain_with_deriv(theta, -0.9, phases.view(), 0.5);
            let h = 1e-6;
            let bp = ris_cascade_gain(theta + h, -0.9, phases.view(), 0.5);
            let bm = ris_cascade_gain(theta - h, -0.9, phases.view(), 0.5);
            let fd = (bp - bm) / (2.0 * h);
            prop_assert!((db - fd).norm() < 1e-6 * (1.0 + fd.norm()));
            prop_assert!((b - ris_cascade_gain(theta, -0.9, phases.view(), 0.5)).norm() < 1e-14);
        }
    }
}
