//! Exhaustive grid sweeps over gate onset and laser repetition rate.
//!
//! Every grid point is evaluated independently into a pre-sized slot, so
//! reports are bit-identical whatever the thread count.

use rayon::prelude::*;

use crate::decay::{steady_rate, FluorescenceModel, PileUp, PulseTrain, SpinState};
use crate::error::{check, Error, Result};
use crate::metrics::{self, CountPair, PhysicalConstants, RatePair};

/// How pulse amplitudes change when the repetition rate changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PowerMode {
    /// Mean laser power fixed: per-pulse amplitude scales as `f_ref / f_L`.
    ConstantMeanPower,
    /// Per-pulse energy fixed: amplitudes independent of `f_L`.
    #[default]
    ConstantPulseEnergy,
}

impl PowerMode {
    pub fn name(self) -> &'static str {
        match self {
            PowerMode::ConstantMeanPower => "constant-mean-power",
            PowerMode::ConstantPulseEnergy => "constant-pulse-energy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant-mean-power" => Some(PowerMode::ConstantMeanPower),
            "constant-pulse-energy" => Some(PowerMode::ConstantPulseEnergy),
            _ => None,
        }
    }

    pub fn amplitude_scale(self, rep_rate: f64, reference_rate: f64) -> f64 {
        match self {
            PowerMode::ConstantMeanPower => reference_rate / rep_rate,
            PowerMode::ConstantPulseEnergy => 1.0,
        }
    }
}

/// Gate-onset grid.
#[derive(Debug, Clone, PartialEq)]
pub enum TauGrid {
    /// `0, step, 2·step, …` up to `max_fraction` of the period.
    Auto { step: f64, max_fraction: f64 },
    /// `start, start + step, …, <= stop`.
    Range { start: f64, step: f64, stop: f64 },
    /// Explicit ascending onsets.
    Points(Vec<f64>),
}

impl Default for TauGrid {
    fn default() -> Self {
        TauGrid::Auto {
            step: 0.1,
            max_fraction: 0.8,
        }
    }
}

impl TauGrid {
    pub fn resolve(&self, period: f64) -> Result<Vec<f64>> {
        let arithmetic = |start: f64, step: f64, stop: f64| -> Result<Vec<f64>> {
            check("tau_c step", step > 0.0 && step.is_finite(), step, "must be finite and > 0")?;
            if stop < start {
                return Ok(Vec::new());
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..n).map(|k| start + k as f64 * step).collect())
        };
        let grid = match self {
            TauGrid::Auto { step, max_fraction } => arithmetic(0.0, *step, max_fraction * period)?,
            TauGrid::Range { start, step, stop } => arithmetic(*start, *step, *stop)?,
            TauGrid::Points(p) => p.clone(),
        };
        if grid.is_empty() {
            return Err(Error::EmptyGrid("tau_c"));
        }
        for w in grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid("tau_c grid", "must be strictly increasing"));
            }
        }
        if let Some(&bad) = grid.iter().find(|&&t| !(t >= 0.0 && t < period)) {
            return Err(Error::GateExceedsPeriod { gate: bad, period });
        }
        Ok(grid)
    }
}

/// Settings shared by all sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Total acquisition time in s, split between the two MW channels.
    pub integration_time: f64,
    /// Fraction of the acquisition spent with the MW on.
    pub mw_duty: f64,
    pub tau_c: TauGrid,
    /// Repetition rates in Hz for rate sweeps.
    pub rate_grid: Vec<f64>,
    /// Resonance FWHM in Hz; enables sensitivity columns.
    pub linewidth: Option<f64>,
    /// Fraction of emitters driven into `m_S = ±1` in the MW-on channel.
    pub c_sat: f64,
    pub power_mode: PowerMode,
    /// Rate (Hz) at which both power modes use the model's amplitudes.
    pub reference_rate: f64,
    pub pile_up: PileUp,
    pub constants: PhysicalConstants,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            integration_time: 10.0,
            mw_duty: 0.5,
            tau_c: TauGrid::default(),
            rate_grid: Vec::new(),
            linewidth: None,
            c_sat: 0.15,
            power_mode: PowerMode::default(),
            reference_rate: 40e6,
            pile_up: PileUp::Off,
            constants: PhysicalConstants::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        check(
            "integration_time",
            self.integration_time > 0.0 && self.integration_time.is_finite(),
            self.integration_time,
            "must be finite and > 0",
        )?;
        check("mw_duty", self.mw_duty > 0.0 && self.mw_duty < 1.0, self.mw_duty, "must lie in (0, 1)")?;
        check("c_sat", (0.0..=1.0).contains(&self.c_sat), self.c_sat, "must lie in [0, 1]")?;
        check(
            "reference_rate",
            self.reference_rate > 0.0 && self.reference_rate.is_finite(),
            self.reference_rate,
            "must be finite and > 0",
        )?;
        if let Some(lw) = self.linewidth {
            check("linewidth", lw > 0.0 && lw.is_finite(), lw, "must be finite and > 0")?;
        }
        self.constants.validate()
    }

    /// Spin state of the MW-on channel.
    pub fn on_state(&self) -> SpinState {
        SpinState::Mixed(self.c_sat)
    }

    fn counts_at(&self, model: &FluorescenceModel, train: &PulseTrain, tau_c: f64) -> Result<GatePoint> {
        let r0 = steady_rate(model, SpinState::Ms0, tau_c, train)?.total();
        let r1 = steady_rate(model, self.on_state(), tau_c, train)?.total();
        let counts = CountPair {
            n0: r0 * self.integration_time * (1.0 - self.mw_duty),
            n1: r1 * self.integration_time * self.mw_duty,
        };
        let eta = match self.linewidth {
            Some(lw) => Some(match metrics::sensitivity_cw(lw, RatePair { r0, r1 }, &self.constants) {
                Ok(v) => v,
                Err(Error::NonPositiveDip { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            }),
            None => None,
        };
        Ok(GatePoint {
            counts,
            contrast: metrics::contrast(counts)?,
            snr: metrics::snr(counts)?,
            eta,
        })
    }
}

struct GatePoint {
    counts: CountPair,
    contrast: f64,
    snr: f64,
    eta: Option<f64>,
}

/// Figures of merit as a function of gate onset at one repetition rate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSweepReport {
    pub rep_rate: f64,
    pub tau_c_grid: Vec<f64>,
    pub n0: Vec<f64>,
    pub n1: Vec<f64>,
    pub contrast: Vec<f64>,
    pub shot_noise: Vec<f64>,
    pub snr: Vec<f64>,
    /// SNR relative to the ungated (`τ_c = 0`) readout.
    pub ef: Vec<f64>,
    /// T/√Hz; present when a linewidth was configured.
    pub eta: Option<Vec<f64>>,
    pub optimum: usize,
    pub baseline_snr: f64,
    pub baseline_eta: Option<f64>,
}

impl GateSweepReport {
    pub fn len(&self) -> usize {
        self.tau_c_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_c_grid.is_empty()
    }

    pub fn optimal_tau_c(&self) -> f64 {
        self.tau_c_grid[self.optimum]
    }

    pub fn speedup(&self) -> Vec<f64> {
        self.ef.iter().map(|&e| metrics::speedup(e)).collect()
    }

    /// Index of the lowest sensitivity, ties toward the earliest gate.
    pub fn best_eta_index(&self) -> Option<usize> {
        let eta = self.eta.as_ref()?;
        let mut best = 0;
        for (i, &v) in eta.iter().enumerate() {
            if v < eta[best] {
                best = i;
            }
        }
        Some(best)
    }
}

/// Index of the largest value, ignoring NaN, ties toward the smallest index.
fn argmax(values: &[f64]) -> usize {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if v <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best.unwrap_or(0)
}

/// Evaluate contrast, shot noise, SNR, enhancement and sensitivity for every
/// gate onset on the configured grid.
pub fn sweep_gate(model: &FluorescenceModel, train: &PulseTrain, cfg: &SweepConfig) -> Result<GateSweepReport> {
    cfg.validate()?;
    let grid = cfg.tau_c.resolve(train.period())?;
    let baseline = cfg.counts_at(model, train, 0.0)?;
    let points = grid
        .par_iter()
        .map(|&tau| cfg.counts_at(model, train, tau))
        .collect::<Result<Vec<_>>>()?;

    let snr: Vec<f64> = points.iter().map(|p| p.snr).collect();
    let optimum = argmax(&snr);
    Ok(GateSweepReport {
        rep_rate: train.rep_rate(),
        n0: points.iter().map(|p| p.counts.n0).collect(),
        n1: points.iter().map(|p| p.counts.n1).collect(),
        contrast: points.iter().map(|p| p.contrast).collect(),
        shot_noise: points.iter().map(|p| (p.counts.n0 + p.counts.n1).sqrt()).collect(),
        ef: snr.iter().map(|&s| s / baseline.snr).collect(),
        eta: cfg.linewidth.map(|_| points.iter().map(|p| p.eta.unwrap_or(f64::NAN)).collect()),
        snr,
        optimum,
        tau_c_grid: grid,
        baseline_snr: baseline.snr,
        baseline_eta: baseline.eta,
    })
}

/// Onset with the highest SNR; ties resolve to the earliest onset.
pub fn optimal_gate(report: &GateSweepReport) -> f64 {
    report.tau_c_grid[argmax(&report.snr)]
}

/// Ungated and best-gated performance as a function of repetition rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RepRateSweepReport {
    pub rate_grid: Vec<f64>,
    pub mode: PowerMode,
    pub snr_ungated: Vec<f64>,
    pub snr_gated: Vec<f64>,
    pub eta_ungated: Option<Vec<f64>>,
    pub eta_gated: Option<Vec<f64>>,
    pub optimal_tau_c: Vec<f64>,
}

impl RepRateSweepReport {
    /// Index of the rate with the best gated SNR (ties toward the lowest rate).
    pub fn best_gated(&self) -> usize {
        let mut order: Vec<usize> = (0..self.rate_grid.len()).collect();
        order.sort_by(|&a, &b| self.rate_grid[a].total_cmp(&self.rate_grid[b]));
        let mut best = order[0];
        for &i in &order[1..] {
            if self.snr_gated[i] > self.snr_gated[best] {
                best = i;
            }
        }
        best
    }
}

/// Repetition rates (Hz) for a list of pulse periods (ns).
pub fn rates_from_periods(periods_ns: &[f64]) -> Vec<f64> {
    periods_ns.iter().map(|p| 1e9 / p).collect()
}

fn model_at_rate(model: &FluorescenceModel, cfg: &SweepConfig, rate: f64) -> Result<(FluorescenceModel, PulseTrain)> {
    let train = PulseTrain::new(rate)?.with_pile_up(cfg.pile_up);
    let scale = cfg.power_mode.amplitude_scale(rate, cfg.reference_rate);
    Ok((model.scaled(scale), train))
}

/// Re-run the gate sweep at every configured repetition rate.
pub fn sweep_rep_rate(model: &FluorescenceModel, cfg: &SweepConfig) -> Result<RepRateSweepReport> {
    cfg.validate()?;
    if cfg.rate_grid.is_empty() {
        return Err(Error::EmptyGrid("rate"));
    }
    let reports = cfg
        .rate_grid
        .par_iter()
        .map(|&rate| {
            let (m, train) = model_at_rate(model, cfg, rate)?;
            sweep_gate(&m, &train, cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let with_eta = cfg.linewidth.is_some();
    Ok(RepRateSweepReport {
        rate_grid: cfg.rate_grid.clone(),
        mode: cfg.power_mode,
        snr_ungated: reports.iter().map(|r| r.baseline_snr).collect(),
        snr_gated: reports.iter().map(|r| r.snr[r.optimum]).collect(),
        eta_ungated: with_eta.then(|| reports.iter().map(|r| r.baseline_eta.unwrap_or(f64::NAN)).collect()),
        eta_gated: with_eta.then(|| {
            reports
                .iter()
                .map(|r| r.eta.as_ref().map_or(f64::NAN, |e| e[r.optimum]))
                .collect()
        }),
        optimal_tau_c: reports.iter().map(GateSweepReport::optimal_tau_c).collect(),
    })
}

/// Best (onset, rate) pair over the product grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointOptimum {
    pub tau_c: f64,
    pub rep_rate: f64,
    pub snr: f64,
}

/// Maximise gated SNR jointly over onset and repetition rate; ties go to the
/// lowest rate, then the earliest onset.
pub fn joint_optimum(model: &FluorescenceModel, cfg: &SweepConfig) -> Result<JointOptimum> {
    let report = sweep_rep_rate(model, cfg)?;
    let best = report.best_gated();
    Ok(JointOptimum {
        tau_c: report.optimal_tau_c[best],
        rep_rate: report.rate_grid[best],
        snr: report.snr_gated[best],
    })
}
