//! Shared fixtures for the kernel benchmarks.

use chronogate_core::decay::GateWindow;
use chronogate_core::odmr::{synth_odmr, OdmrSpectrum, OdmrTruth};
use chronogate_core::scenarios::{bulk_nv_siv, Scenario};

/// The bulk scenario with an IRF, so gated counts take the EMG path.
pub fn bulk_with_irf() -> Scenario {
    let mut s = bulk_nv_siv().expect("bulk preset");
    s.model = s.model.with_irf_sigma(0.3).expect("valid sigma");
    s
}

/// A noisy 201-point split doublet from the bulk model.
pub fn noisy_spectrum() -> OdmrSpectrum {
    let s = bulk_nv_siv().expect("bulk preset");
    let freqs: Vec<f64> = (0..201).map(|k| 2.82e9 + k as f64 * 0.5e6).collect();
    let truth = OdmrTruth::split([2.86e9, 2.88e9], 10e6, s.sweep.c_sat);
    let gate = GateWindow::new(9.2, s.train.period()).expect("gate");
    synth_odmr(&s.model, &s.train, Some(gate), &freqs, &truth, 1.0, Some(11)).expect("spectrum")
}

/// A deterministic pseudo-random `nx × ny` field.
pub fn field(nx: usize, ny: usize) -> Vec<f64> {
    (0..nx * ny).map(|i| ((i * 2654435761) % 1000) as f64 / 10.0).collect()
}
