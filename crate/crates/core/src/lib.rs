//! Signal-level simulator and estimators for monostatic dual-path radar
//! positioning assisted by a reconfigurable reflecting surface.
//!
//! A collocated transmit/receive array illuminates a scene; echoes return
//! along a direct path and along a bounce over a phase-controlled surface.
//! The library synthesizes the resulting multicarrier echo measurements,
//! estimates the target position from them, and computes the Fisher-
//! information position error bound for comparison.
//!
//! ```text
//!            measurement synthesis            estimation
//!   ┌──────────┐   ┌─────────────┐   ┌────────┐   ┌────────┐   ┌───────┐
//!   │ geometry ├──►│   signal    ├──►│ coarse ├──►│ refine │   │ bound │
//!   └──────────┘   └─────────────┘   └────────┘   └────────┘   └───────┘
//!        ▲               ▲               ▲ uses        ▲            ▲
//!        └── config ─────┴── dictionary ─┘             └─ harness ──┘
//! ```
//!
//! * [`geometry`] — bearings, ranges, two-way delays, position jacobians.
//! * [`config`] — scene, array, and waveform dimensioning (desk/full profiles).
//! * [`signal`] — steering vectors, cascade gains, echo synthesis, noise.
//! * [`dictionary`] — angle-gridded correlation dictionaries per path.
//! * [`coarse`] — matched-filter angle pick, per-subcarrier gains, phase-slope
//!   delays, coarse position fix.
//! * [`refine`] — linearized least-squares position refinement and a
//!   coordinate-descent + gradient-descent baseline.
//! * [`bound`] — Fisher information and position error bounds.
//! * [`harness`] — seeded Monte Carlo trials, SNR sweeps, CSV/JSON reports.
//!
//! Units are meters and microseconds everywhere; propagation speed defaults
//! to 300 m/us.

pub mod bound;
pub mod coarse;
pub mod config;
pub mod dictionary;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod refine;
pub mod signal;

pub use error::{Error, Result};
