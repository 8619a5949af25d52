//! Time-gated fluorescence readout for spin-defect magnetometry.
//!
//! The crate models multi-exponential fluorescence decays with background
//! emitters, computes how a detection gate trades signal for background, and
//! picks the gate and repetition rate that maximise shot-noise-limited SNR.
//! Around that core sit a photon-level acquisition simulator, ODMR spectrum
//! synthesis and fitting, and the file formats used by the `chronogate` CLI.

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod decay;
pub mod error;
pub mod histogram;
pub mod interp;
pub mod io;
pub mod metrics;
pub mod odmr;
pub mod quadrature;
pub mod scenarios;
pub mod sweep;

pub use acquisition::{
    hw_gate, mc_snr_distribution, offline_gate, sample_histogram, simulate_events, EventSimConfig, HwGateConfig,
    McConfig, McResult, PhotonEvent,
};
pub use decay::{
    gated_counts, gated_rate, histogram_expectation, steady_rate, BackgroundLevel, CountSplit, DecayComponent,
    FluorescenceModel, GateWindow, PileUp, PulseTrain, SpinState,
};
pub use error::{Error, ParseErrorKind, Result};
pub use histogram::{Channel, Count, TcspcHistogram};
pub use metrics::{CountPair, PhysicalConstants, RatePair};
pub use odmr::{
    fit_double_lorentzian, snr_map, synth_odmr, FitOptions, FitResult, LorentzianDoublet, MapChannel, OdmrSpectrum,
    OdmrTruth, ScanMap, SnrMap,
};
pub use scenarios::Scenario;
pub use sweep::{
    joint_optimum, sweep_gate, sweep_rep_rate, GateSweepReport, PowerMode, RepRateSweepReport, SweepConfig, TauGrid,
};
