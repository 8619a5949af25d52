//! Fluorescence decay physics: multi-exponential emitters, Gaussian instrument
//! response, gated photon yields and steady-state count rates under a pulse
//! train.
//!
//! Amplitudes are counts per ns at the pulse instant for a single excitation
//! cycle. Every rate in the toolkit is derived from these amplitudes; nothing
//! stores a rate redundantly.

pub mod emg;

use crate::error::{check, Error, Result};
use crate::histogram::{Channel, TcspcHistogram};
use crate::quadrature::Quadrature;

/// One exponential emitter.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayComponent {
    pub amplitude: f64,
    pub lifetime: f64,
    pub label: String,
}

impl DecayComponent {
    pub fn new(amplitude: f64, lifetime: f64, label: impl Into<String>) -> Result<Self> {
        check("amplitude", amplitude >= 0.0 && amplitude.is_finite(), amplitude, "must be finite and >= 0")?;
        check("lifetime", lifetime > 0.0 && lifetime.is_finite(), lifetime, "must be finite and > 0")?;
        Ok(Self {
            amplitude,
            lifetime,
            label: label.into(),
        })
    }

    /// Integrated yield of `A·exp(-t/τ)` for `t ≥ 0` over the window.
    fn counts_from_onset(&self, from: f64, to: f64) -> f64 {
        let a = from.max(0.0);
        if to <= a || self.amplitude == 0.0 {
            return 0.0;
        }
        let head = self.amplitude * self.lifetime * (-a / self.lifetime).exp();
        if to.is_infinite() {
            head
        } else {
            head * -(-(to - a) / self.lifetime).exp_m1()
        }
    }
}

/// Which spin population feeds the NV part of the signal.
///
/// `Mixed(w)` weights the `m_S = ±1` curve by `w` and the `m_S = 0` curve by
/// `1 - w`; it describes the microwave-driven channel of a CW measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpinState {
    Ms0,
    Ms1,
    Mixed(f64),
}

impl SpinState {
    pub fn spin1_fraction(self) -> f64 {
        match self {
            SpinState::Ms0 => 0.0,
            SpinState::Ms1 => 1.0,
            SpinState::Mixed(w) => w,
        }
    }

    /// The acquisition channel this state is recorded in.
    pub fn channel(self) -> Channel {
        if self.spin1_fraction() == 0.0 {
            Channel::MwOff
        } else {
            Channel::MwOn
        }
    }

    fn validate(self) -> Result<()> {
        let w = self.spin1_fraction();
        check("spin1_fraction", (0.0..=1.0).contains(&w), w, "must lie in [0, 1]")
    }
}

/// How strong the background is relative to the `m_S = 0` signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackgroundLevel {
    /// Ratio of background peak amplitude to summed spin-0 amplitudes.
    AmplitudeRatio(f64),
    /// Ratio of background counts to spin-0 counts, both integrated over a window.
    IntegratedRatio(f64),
}

impl Default for BackgroundLevel {
    fn default() -> Self {
        BackgroundLevel::AmplitudeRatio(1.0)
    }
}

/// Spin-resolved fluorescence plus background, dark counts and instrument response.
#[derive(Debug, Clone, PartialEq)]
pub struct FluorescenceModel {
    spin0: Vec<DecayComponent>,
    spin1: Vec<DecayComponent>,
    background: Vec<DecayComponent>,
    dark_rate: f64,
    irf_sigma: f64,
    pulse_time: f64,
}

impl FluorescenceModel {
    pub fn new(spin0: Vec<DecayComponent>, spin1: Vec<DecayComponent>) -> Result<Self> {
        if spin0.is_empty() {
            return Err(Error::invalid("spin0", "needs at least one component"));
        }
        if spin1.is_empty() {
            return Err(Error::invalid("spin1", "needs at least one component"));
        }
        Ok(Self {
            spin0,
            spin1,
            background: Vec::new(),
            dark_rate: 0.0,
            irf_sigma: 0.0,
            pulse_time: 0.0,
        })
    }

    pub fn with_background(mut self, background: Vec<DecayComponent>) -> Self {
        self.background = background;
        self
    }

    pub fn with_dark_rate(mut self, dark_rate: f64) -> Result<Self> {
        check("dark_rate", dark_rate >= 0.0 && dark_rate.is_finite(), dark_rate, "must be finite and >= 0")?;
        self.dark_rate = dark_rate;
        Ok(self)
    }

    pub fn with_irf_sigma(mut self, irf_sigma: f64) -> Result<Self> {
        check("irf_sigma", irf_sigma >= 0.0 && irf_sigma.is_finite(), irf_sigma, "must be finite and >= 0")?;
        self.irf_sigma = irf_sigma;
        Ok(self)
    }

    pub fn with_pulse_time(mut self, pulse_time: f64) -> Result<Self> {
        check("pulse_time", pulse_time.is_finite(), pulse_time, "must be finite")?;
        self.pulse_time = pulse_time;
        Ok(self)
    }

    /// Add a background component whose strength is set relative to the spin-0
    /// signal. `window` is only used for [`BackgroundLevel::IntegratedRatio`].
    pub fn with_background_level(
        mut self,
        lifetime: f64,
        label: impl Into<String>,
        level: BackgroundLevel,
        window: GateWindow,
    ) -> Result<Self> {
        let unit = DecayComponent::new(1.0, lifetime, label)?;
        let amplitude = match level {
            BackgroundLevel::AmplitudeRatio(r) => {
                check("background ratio", r >= 0.0, r, "must be >= 0")?;
                r * self.spin0.iter().map(|c| c.amplitude).sum::<f64>()
            }
            BackgroundLevel::IntegratedRatio(r) => {
                check("background ratio", r >= 0.0, r, "must be >= 0")?;
                let signal = self.integrate_components(&self.spin0, window)?;
                let per_unit = self.integrate_components(std::slice::from_ref(&unit), window)?;
                if per_unit <= 0.0 {
                    return Err(Error::invalid("window", "background has no yield inside the window"));
                }
                r * signal / per_unit
            }
        };
        self.background.push(DecayComponent { amplitude, ..unit });
        Ok(self)
    }

    pub fn spin0(&self) -> &[DecayComponent] {
        &self.spin0
    }

    pub fn spin1(&self) -> &[DecayComponent] {
        &self.spin1
    }

    pub fn background(&self) -> &[DecayComponent] {
        &self.background
    }

    pub fn dark_rate(&self) -> f64 {
        self.dark_rate
    }

    pub fn irf_sigma(&self) -> f64 {
        self.irf_sigma
    }

    pub fn pulse_time(&self) -> f64 {
        self.pulse_time
    }

    /// Multiply every emitter amplitude (not the dark rate) by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let scale = |v: &[DecayComponent]| {
            v.iter()
                .map(|c| DecayComponent {
                    amplitude: c.amplitude * factor,
                    ..c.clone()
                })
                .collect()
        };
        Self {
            spin0: scale(&self.spin0),
            spin1: scale(&self.spin1),
            background: scale(&self.background),
            ..self.clone()
        }
    }

    /// Steady-state amplitudes when every earlier pulse's tail wraps into the
    /// current period: each component gains `1 / (1 - exp(-period/τ))`.
    pub fn folded(&self, period: f64) -> Self {
        let fold = |v: &[DecayComponent]| {
            v.iter()
                .map(|c| DecayComponent {
                    amplitude: c.amplitude / -(-period / c.lifetime).exp_m1(),
                    ..c.clone()
                })
                .collect()
        };
        Self {
            spin0: fold(&self.spin0),
            spin1: fold(&self.spin1),
            background: fold(&self.background),
            ..self.clone()
        }
    }

    fn component_intensity(&self, c: &DecayComponent, t: f64) -> f64 {
        emg::intensity(c.amplitude, c.lifetime, self.irf_sigma, t - self.pulse_time)
    }

    fn integrate_components(&self, comps: &[DecayComponent], gate: GateWindow) -> Result<f64> {
        if self.irf_sigma == 0.0 {
            let t0 = gate.t_start - self.pulse_time;
            let t1 = gate.t_end - self.pulse_time;
            return Ok(comps.iter().map(|c| c.counts_from_onset(t0, t1)).sum());
        }
        if !gate.is_bounded() {
            return Err(Error::UnboundedQuadrature);
        }
        let q = Quadrature::default();
        Ok(comps
            .iter()
            .map(|c| q.integrate(|t| self.component_intensity(c, t), gate.t_start, gate.t_end))
            .sum())
    }
}

/// Detection window relative to the laser trigger; `t_end` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateWindow {
    pub t_start: f64,
    pub t_end: f64,
}

impl GateWindow {
    pub fn new(t_start: f64, t_end: f64) -> Result<Self> {
        check("t_start", t_start >= 0.0 && t_start.is_finite(), t_start, "must be finite and >= 0")?;
        if !(t_end > t_start) {
            return Err(Error::invalid("t_end", format!("{t_end} must exceed t_start {t_start}")));
        }
        Ok(Self { t_start, t_end })
    }

    pub fn unbounded(t_start: f64) -> Result<Self> {
        Self::new(t_start, f64::INFINITY)
    }

    pub fn is_bounded(&self) -> bool {
        self.t_end.is_finite()
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end
    }
}

/// Whether decay tails from earlier pulses are carried into the current period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PileUp {
    #[default]
    Off,
    Folded,
}

/// A periodic laser excitation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseTrain {
    rep_rate: f64,
    pile_up: PileUp,
}

impl PulseTrain {
    pub fn new(rep_rate: f64) -> Result<Self> {
        check("rep_rate", rep_rate > 0.0 && rep_rate.is_finite(), rep_rate, "must be finite and > 0")?;
        Ok(Self {
            rep_rate,
            pile_up: PileUp::Off,
        })
    }

    pub fn with_pile_up(mut self, pile_up: PileUp) -> Self {
        self.pile_up = pile_up;
        self
    }

    /// Repetition rate in Hz.
    pub fn rep_rate(&self) -> f64 {
        self.rep_rate
    }

    /// Pulse period in ns.
    pub fn period(&self) -> f64 {
        1e9 / self.rep_rate
    }

    pub fn pile_up(&self) -> PileUp {
        self.pile_up
    }

    pub fn full_window(&self) -> GateWindow {
        GateWindow {
            t_start: 0.0,
            t_end: self.period(),
        }
    }

    /// Split an absolute timestamp (ns) into its pulse index and the delay
    /// after that pulse's trigger.
    pub fn phase(&self, t: f64) -> (u64, f64) {
        let period = self.period();
        let phase = t.rem_euclid(period);
        let index = ((t - phase) / period).round();
        (index.max(0.0) as u64, phase)
    }

    /// The model as seen by this train (folded when pile-up is on).
    pub fn effective_model(&self, model: &FluorescenceModel) -> FluorescenceModel {
        match self.pile_up {
            PileUp::Off => model.clone(),
            PileUp::Folded => model.folded(self.period()),
        }
    }

    fn check_window(&self, gate: GateWindow) -> Result<()> {
        let period = self.period();
        if gate.t_start >= period {
            return Err(Error::GateExceedsPeriod {
                gate: gate.t_start,
                period,
            });
        }
        if gate.t_end > period * (1.0 + 1e-12) {
            return Err(Error::GateExceedsPeriod {
                gate: gate.t_end,
                period,
            });
        }
        Ok(())
    }
}

/// Counts (or rates) split by origin.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CountSplit {
    pub signal: f64,
    pub background: f64,
    pub dark: f64,
}

impl CountSplit {
    pub fn total(&self) -> f64 {
        self.signal + self.background + self.dark
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            signal: self.signal * k,
            background: self.background * k,
            dark: self.dark * k,
        }
    }
}

/// Expected detected intensity (counts per ns) at time `t` after the trigger.
pub fn expected_intensity(model: &FluorescenceModel, state: SpinState, t: f64) -> f64 {
    let w = state.spin1_fraction();
    let sum = |v: &[DecayComponent]| v.iter().map(|c| model.component_intensity(c, t)).sum::<f64>();
    let mut total = sum(&model.background) + model.dark_rate;
    if w != 1.0 {
        total += (1.0 - w) * sum(&model.spin0);
    }
    if w != 0.0 {
        total += w * sum(&model.spin1);
    }
    total
}

/// Closed-form yield of one component excited at t = 0 over a gate:
/// `A·τ·(exp(-t0/τ) - exp(-t1/τ))`.
pub fn gated_counts_exponential(comp: &DecayComponent, gate: GateWindow) -> f64 {
    comp.counts_from_onset(gate.t_start, gate.t_end)
}

/// Expected counts per excitation cycle inside `gate`, split by origin.
pub fn gated_counts(model: &FluorescenceModel, state: SpinState, gate: GateWindow) -> Result<CountSplit> {
    state.validate()?;
    let w = state.spin1_fraction();
    let mut signal = 0.0;
    if w != 1.0 {
        signal += (1.0 - w) * model.integrate_components(&model.spin0, gate)?;
    }
    if w != 0.0 {
        signal += w * model.integrate_components(&model.spin1, gate)?;
    }
    let background = model.integrate_components(&model.background, gate)?;
    let dark = if model.dark_rate == 0.0 {
        0.0
    } else if gate.is_bounded() {
        model.dark_rate * (gate.t_end - gate.t_start)
    } else {
        return Err(Error::invalid("t_end", "unbounded gate with a non-zero dark rate"));
    };
    Ok(CountSplit {
        signal,
        background,
        dark,
    })
}

/// Count rate (counts per second) inside a gate that lies within one period.
pub fn gated_rate(
    model: &FluorescenceModel,
    state: SpinState,
    gate: GateWindow,
    train: &PulseTrain,
) -> Result<CountSplit> {
    train.check_window(gate)?;
    let gate = GateWindow {
        t_end: gate.t_end.min(train.period()),
        ..gate
    };
    let effective = train.effective_model(model);
    Ok(gated_counts(&effective, state, gate)?.scaled(train.rep_rate()))
}

/// Steady-state gated count rate with the gate open from `gate_onset` to the
/// end of the period.
pub fn steady_rate(
    model: &FluorescenceModel,
    state: SpinState,
    gate_onset: f64,
    train: &PulseTrain,
) -> Result<CountSplit> {
    let period = train.period();
    if gate_onset >= period {
        return Err(Error::GateExceedsPeriod {
            gate: gate_onset,
            period,
        });
    }
    let gate = GateWindow::new(gate_onset, period)?;
    gated_rate(model, state, gate, train)
}

/// Number of `bin_width` bins in one period, if they tile it.
pub fn bins_per_period(bin_width: f64, period: f64) -> Result<usize> {
    check("bin_width", bin_width > 0.0 && bin_width.is_finite(), bin_width, "must be finite and > 0")?;
    let n = (period / bin_width).round();
    if n < 1.0 || (n * bin_width - period).abs() > 1e-9 * period {
        return Err(Error::NonCommensurateBins { bin_width, period });
    }
    Ok(n as usize)
}

/// Expected TCSPC histogram over one period accumulated for `integration_time` seconds.
pub fn histogram_expectation(
    model: &FluorescenceModel,
    state: SpinState,
    train: &PulseTrain,
    bin_width: f64,
    integration_time: f64,
) -> Result<TcspcHistogram<f64>> {
    check(
        "integration_time",
        integration_time >= 0.0 && integration_time.is_finite(),
        integration_time,
        "must be finite and >= 0",
    )?;
    let period = train.period();
    let n = bins_per_period(bin_width, period)?;
    let effective = train.effective_model(model);
    let scale = integration_time * train.rep_rate();
    let counts = (0..n)
        .map(|b| {
            let t_start = b as f64 * bin_width;
            let t_end = if b + 1 == n { period } else { (b + 1) as f64 * bin_width };
            gated_counts(&effective, state, GateWindow { t_start, t_end }).map(|c| c.total() * scale)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TcspcHistogram {
        bin_width,
        counts,
        channel: state.channel(),
        integration_time,
        rep_rate: train.rep_rate(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(a: f64, tau: f64) -> FluorescenceModel {
        let c = DecayComponent::new(a, tau, "x").unwrap();
        FluorescenceModel::new(vec![c.clone()], vec![c]).unwrap()
    }

    #[test]
    fn intensity_at_origin_and_one_lifetime() {
        let m = single(1.0, 12.0);
        assert_eq!(expected_intensity(&m, SpinState::Ms0, 0.0), 1.0);
        assert!((expected_intensity(&m, SpinState::Ms0, 12.0) - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn component_validation() {
        assert!(DecayComponent::new(-1.0, 1.0, "").is_err());
        assert!(DecayComponent::new(1.0, 0.0, "").is_err());
        assert!(DecayComponent::new(f64::NAN, 1.0, "").is_err());
        assert!(FluorescenceModel::new(vec![], vec![DecayComponent::new(1.0, 1.0, "").unwrap()]).is_err());
    }

    #[test]
    fn gate_validation() {
        assert!(GateWindow::new(5.0, 5.0).is_err());
        assert!(GateWindow::new(-1.0, 5.0).is_err());
        assert!(GateWindow::unbounded(3.0).unwrap().t_end.is_infinite());
    }

    #[test]
    fn full_window_integral() {
        let c = DecayComponent::new(1.0, 12.0, "").unwrap();
        assert_eq!(gated_counts_exponential(&c, GateWindow::unbounded(0.0).unwrap()), 12.0);
    }

    #[test]
    fn empty_background_contributes_nothing() {
        let m = single(1.0, 12.0);
        let c = gated_counts(&m, SpinState::Ms0, GateWindow::new(0.0, 50.0).unwrap()).unwrap();
        assert_eq!(c.background, 0.0);
        assert_eq!(c.dark, 0.0);
    }

    #[test]
    fn unbounded_gate_needs_sigma_zero() {
        let m = single(1.0, 12.0).with_irf_sigma(0.4).unwrap();
        let err = gated_counts(&m, SpinState::Ms0, GateWindow::unbounded(0.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::UnboundedQuadrature));
        assert_eq!(err.to_string(), "quadrature requires finite window");
    }

    #[test]
    fn steady_rate_rejects_late_onset() {
        let m = single(1.0, 12.0);
        let train = PulseTrain::new(20e6).unwrap();
        assert!(matches!(
            steady_rate(&m, SpinState::Ms0, 50.0, &train),
            Err(Error::GateExceedsPeriod { .. })
        ));
        let near = steady_rate(&m, SpinState::Ms0, 50.0 - 1e-9, &train).unwrap();
        assert!(near.total() < 1e-1);
    }

    #[test]
    fn pulse_time_shifts_the_curve() {
        let m = single(1.0, 10.0).with_pulse_time(2.0).unwrap();
        assert_eq!(expected_intensity(&m, SpinState::Ms0, 1.0), 0.0);
        assert_eq!(expected_intensity(&m, SpinState::Ms0, 2.0), 1.0);
        let c = gated_counts(&m, SpinState::Ms0, GateWindow::unbounded(0.0).unwrap()).unwrap();
        assert!((c.signal - 10.0).abs() < 1e-12);
    }

    #[test]
    fn folded_amplitudes() {
        let m = single(1.0, 10.0);
        let f = m.folded(10.0);
        let expected = 1.0 / (1.0 - (-1.0f64).exp());
        assert!((f.spin0()[0].amplitude - expected).abs() < 1e-14);
    }

    #[test]
    fn mixed_state_interpolates_linearly() {
        let s0 = DecayComponent::new(1.0, 12.0, "").unwrap();
        let s1 = DecayComponent::new(1.0, 8.0, "").unwrap();
        let m = FluorescenceModel::new(vec![s0], vec![s1]).unwrap();
        let g = GateWindow::new(3.0, 40.0).unwrap();
        let a = gated_counts(&m, SpinState::Ms0, g).unwrap().signal;
        let b = gated_counts(&m, SpinState::Ms1, g).unwrap().signal;
        let mix = gated_counts(&m, SpinState::Mixed(0.25), g).unwrap().signal;
        assert!((mix - (0.75 * a + 0.25 * b)).abs() < 1e-12);
        assert!(gated_counts(&m, SpinState::Mixed(1.5), g).is_err());
    }

    #[test]
    fn background_levels() {
        let m = single(2.0, 12.0);
        let w = GateWindow::new(0.0, 50.0).unwrap();
        let amp = m
            .clone()
            .with_background_level(1.7, "bg", BackgroundLevel::AmplitudeRatio(3.0), w)
            .unwrap();
        assert_eq!(amp.background()[0].amplitude, 6.0);
        let int = m
            .with_background_level(1.7, "bg", BackgroundLevel::IntegratedRatio(3.0), w)
            .unwrap();
        let c = gated_counts(&int, SpinState::Ms0, w).unwrap();
        assert!((c.background / c.signal - 3.0).abs() < 1e-12);
    }

    #[test]
    fn non_commensurate_bins() {
        let m = single(1.0, 12.0);
        let train = PulseTrain::new(20e6).unwrap();
        assert!(matches!(
            histogram_expectation(&m, SpinState::Ms0, &train, 0.3, 1.0),
            Err(Error::NonCommensurateBins { .. })
        ));
    }

    #[test]
    fn dark_only_histogram_is_flat() {
        let zero = DecayComponent::new(0.0, 12.0, "").unwrap();
        let m = FluorescenceModel::new(vec![zero.clone()], vec![zero])
            .unwrap()
            .with_dark_rate(0.01)
            .unwrap();
        let train = PulseTrain::new(20e6).unwrap();
        let h = histogram_expectation(&m, SpinState::Ms0, &train, 0.1, 1.0).unwrap();
        assert_eq!(h.counts.len(), 500);
        let first = h.counts[0];
        assert!(h.counts.iter().all(|&c| ((c - first) / first).abs() < 1e-9));
    }

    #[test]
    fn phase_decomposition() {
        let train = PulseTrain::new(20e6).unwrap();
        assert_eq!(train.phase(0.0), (0, 0.0));
        assert_eq!(train.phase(123.0), (2, 23.0));
    }
}
