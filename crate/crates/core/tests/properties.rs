use chronogate_core::acquisition::{hw_gate, offline_gate, HwGateConfig, PhotonEvent};
use chronogate_core::decay::{
    gated_counts, gated_counts_exponential, steady_rate, DecayComponent, FluorescenceModel, GateWindow, PulseTrain,
    SpinState,
};
use chronogate_core::histogram::{Channel, TcspcHistogram};
use chronogate_core::interp::upsample_catmull_rom;
use chronogate_core::io::{format_histogram, parse_histogram, ColumnarReport, RunConfig};
use chronogate_core::metrics::{contrast, ef_theoretical, snr, speedup, CountPair};
use chronogate_core::odmr::{fit_double_lorentzian, FitOptions, LorentzianDoublet, OdmrSpectrum, Dip};
use chronogate_core::quadrature::Quadrature;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn model(a0: f64, t0: f64, a1: f64, t1: f64, ab: f64, tb: f64, sigma: f64) -> FluorescenceModel {
    FluorescenceModel::new(
        vec![DecayComponent::new(a0, t0, "ms0").unwrap()],
        vec![DecayComponent::new(a1, t1, "ms1").unwrap()],
    )
    .unwrap()
    .with_background(vec![DecayComponent::new(ab, tb, "bg").unwrap()])
    .with_irf_sigma(sigma)
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gated_counts_are_additive(a in 1e-3..10.0f64, tau in 0.5..40.0f64, t0 in 0.0..30.0f64, d1 in 0.0..30.0f64, d2 in 0.0..30.0f64) {
        let c = DecayComponent::new(a, tau, "x").unwrap();
        let g = |s: f64, e: f64| if e > s { gated_counts_exponential(&c, GateWindow::new(s, e).unwrap()) } else { 0.0 };
        let whole = g(t0, t0 + d1 + d2);
        let parts = g(t0, t0 + d1) + g(t0 + d1, t0 + d1 + d2);
        prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(1e-300));
    }

    #[test]
    fn later_gates_keep_fewer_photons(a in 1e-3..10.0f64, tau in 0.5..40.0f64, sigma in 0.0..1.0f64, t0 in 0.0..30.0f64, dt in 0.01..10.0f64) {
        let m = model(a, tau, a, tau * 0.6, a, 1.7, sigma);
        let early = gated_counts(&m, SpinState::Ms0, GateWindow::new(t0, 300.0).unwrap()).unwrap().total();
        let late = gated_counts(&m, SpinState::Ms0, GateWindow::new(t0 + dt, 300.0).unwrap()).unwrap().total();
        prop_assert!(late <= early);
    }

    #[test]
    fn irf_convolved_counts_match_quadrature(sigma in 0.05..1.0f64, tau in 1.0..30.0f64, t0 in 0.0..20.0f64, len in 0.5..30.0f64) {
        let m = model(1.0, tau, 1.0, tau, 0.0, 1.0, sigma);
        let gate = GateWindow::new(t0, t0 + len).unwrap();
        let closed = gated_counts(&m, SpinState::Ms0, gate).unwrap().signal;
        let numeric = Quadrature::default().integrate(
            |t| chronogate_core::decay::emg::intensity(1.0, tau, sigma, t),
            t0,
            t0 + len,
        );
        prop_assert!(rel(closed, numeric) < 1e-7, "{} vs {}", closed, numeric);
    }

    #[test]
    fn steady_rate_never_negative(rate in 1e6..2e8f64, onset_frac in 0.0..0.99f64) {
        let m = model(1.0, 12.0, 1.0, 8.0, 3.0, 1.7, 0.2);
        let train = PulseTrain::new(rate).unwrap();
        let r = steady_rate(&m, SpinState::Mixed(0.3), onset_frac * train.period(), &train).unwrap();
        prop_assert!(r.signal >= 0.0 && r.background >= 0.0);
    }

    #[test]
    fn snr_is_homogeneous(n0 in 1.0..1e9f64, n1 in 0.0..1e9f64, k in 0.01..100.0f64) {
        let p = CountPair::new(n0, n1).unwrap();
        let s = snr(p).unwrap();
        let scaled = snr(CountPair::new(k * n0, k * n1).unwrap()).unwrap();
        prop_assert!((scaled - k.sqrt() * s).abs() <= 1e-9 * scaled.abs().max(1e-12));
        prop_assert_eq!(contrast(CountPair::new(k * n0, k * n0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn enhancement_is_at_least_one(c in 0.0..0.99f64, bg in 0.0..100.0f64) {
        let ef = ef_theoretical(c, bg).unwrap();
        prop_assert!(ef >= 1.0);
        prop_assert_eq!(speedup(ef), ef * ef);
        prop_assert!(rel(speedup(ef), 1.0 + 2.0 / (2.0 - c) * bg) < 1e-14);
    }

    #[test]
    fn catmull_rom_is_node_exact(nx in 1usize..8, ny in 1usize..8, factor in 1usize..6, seed in any::<u64>()) {
        let values: Vec<f64> = (0..nx * ny).map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 / 7.0).collect();
        let up = upsample_catmull_rom(&values, nx, ny, factor);
        prop_assert_eq!(up.len(), nx * ny * factor * factor);
        for y in 0..ny {
            for x in 0..nx {
                prop_assert_eq!(up[(y * factor) * nx * factor + x * factor], values[y * nx + x]);
            }
        }
        let flat = upsample_catmull_rom(&vec![-2.5; nx * ny], nx, ny, factor);
        prop_assert!(flat.iter().all(|&v| v == -2.5));
    }

    #[test]
    fn hardware_gate_equals_offline_filter(
        times in prop::collection::vec(0.0..1e6f64, 0..400),
        delay in 0.0..49.0f64,
        len_frac in 0.01..1.0f64,
    ) {
        let mut times = times;
        times.sort_by(f64::total_cmp);
        let events: Vec<PhotonEvent> = times
            .iter()
            .enumerate()
            .map(|(i, &t)| PhotonEvent { timestamp: t, channel: if i % 3 == 0 { Channel::MwOn } else { Channel::MwOff } })
            .collect();
        let train = PulseTrain::new(20e6).unwrap();
        let length = (50.0 - delay) * len_frac;
        let cfg = HwGateConfig { trigger_delay: delay, gate_length: length, jitter_sigma: 0.0 };
        let hw = hw_gate(&events, &train, &cfg, 0).unwrap();
        let off = offline_gate(&events, &train, GateWindow::new(delay, delay + length).unwrap());
        prop_assert_eq!(hw, off);
    }

    #[test]
    fn histogram_text_round_trips(counts in prop::collection::vec(0u64..u64::MAX, 10), freq in prop::option::of(1e6..1e10f64)) {
        let h = TcspcHistogram { bin_width: 5.0, counts, channel: Channel::MwOn, integration_time: 2.5, rep_rate: 20e6 };
        let text = format_histogram(&h, freq);
        let back = parse_histogram::<u64>(&text).unwrap();
        prop_assert_eq!(&back.histogram, &h);
        prop_assert_eq!(back.mw_freq_hz, freq);
    }

    #[test]
    fn real_histogram_round_trips_exactly(counts in prop::collection::vec(0.0..1e12f64, 10)) {
        let h = TcspcHistogram { bin_width: 5.0, counts, channel: Channel::MwOff, integration_time: 1.0 / 3.0, rep_rate: 20e6 };
        prop_assert_eq!(parse_histogram::<f64>(&format_histogram(&h, None)).unwrap().histogram, h);
    }

    #[test]
    fn report_round_trips_bit_exactly(rows in prop::collection::vec(prop::collection::vec(-1e300..1e300f64, 3), 0..20), seed in any::<u64>()) {
        let mut r = ColumnarReport::new(["a", "b", "c"], Some(seed));
        for row in rows {
            r.push_row(row);
        }
        let back = ColumnarReport::parse(&r.to_text().unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn config_parser_never_panics(text in "[\\[\\]a-z_=0-9., #\n-]{0,200}") {
        let _ = RunConfig::parse(&text);
    }

    #[test]
    fn noiseless_doublets_are_recovered(
        split in 15e6..60e6f64,
        fwhm in 4e6..14e6f64,
        d1 in 0.01..0.3f64,
        d2 in 0.01..0.3f64,
        base in 1e3..1e8f64,
    ) {
        let truth = LorentzianDoublet {
            baseline: base,
            dips: [
                Dip { center: 2.87e9 - split / 2.0, fwhm, depth: d1 },
                Dip { center: 2.87e9 + split / 2.0, fwhm, depth: d2 },
            ],
        };
        let freqs: Vec<f64> = (0..241).map(|k| 2.81e9 + k as f64 * 0.5e6).collect();
        let counts = freqs.iter().map(|&f| truth.eval(f)).collect();
        let spectrum = OdmrSpectrum::new(freqs, counts, 1.0, None).unwrap();
        let fit = fit_double_lorentzian(&spectrum, &FitOptions::default()).unwrap().doublet;
        prop_assert!(rel(fit.baseline, base) < 1e-6);
        for (a, b) in fit.dips.iter().zip(&truth.dips) {
            prop_assert!(rel(a.center, b.center) < 1e-6 && rel(a.fwhm, b.fwhm) < 1e-6 && rel(a.depth, b.depth) < 1e-6,
                "{:?} vs {:?}", fit, truth);
        }
    }
}
