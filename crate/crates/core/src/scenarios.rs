//! Ready-made physical scenarios used by the command line, the benches and
//! the acceptance suite.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::decay::{
    gated_counts, gated_rate, steady_rate, BackgroundLevel, DecayComponent, FluorescenceModel, GateWindow, PulseTrain,
    SpinState,
};
use crate::error::{check, Result};
use crate::odmr::ScanMap;
use crate::sweep::{rates_from_periods, PowerMode, SweepConfig, TauGrid};

/// A model, its pulse train and the sweep settings that go with it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: FluorescenceModel,
    pub train: PulseTrain,
    pub sweep: SweepConfig,
}

fn nv_pair(tau0: f64, tau1: f64) -> Result<FluorescenceModel> {
    FluorescenceModel::new(
        vec![DecayComponent::new(1.0, tau0, "NV ms0")?],
        vec![DecayComponent::new(1.0, tau1, "NV ms1")?],
    )
}

/// Rescale all emitters so the ungated MW-off rate equals `target` (cts/s).
fn normalize_rate(model: FluorescenceModel, train: &PulseTrain, target: f64) -> Result<FluorescenceModel> {
    let r = steady_rate(&model, SpinState::Ms0, 0.0, train)?.total();
    Ok(model.scaled(target / r))
}

/// NV ensemble with an SiV background in bulk diamond: 12 ns / 8 ns spin
/// lifetimes with equal amplitudes, a 1.7 ns background carrying three times
/// the NV counts over the period, 20 MHz excitation and ≈5·10⁶ cts/s.
pub fn bulk_nv_siv() -> Result<Scenario> {
    let train = PulseTrain::new(20e6)?;
    let model = nv_pair(12.0, 8.0)?.with_background_level(
        1.7,
        "SiV",
        BackgroundLevel::IntegratedRatio(3.0),
        train.full_window(),
    )?;
    Ok(Scenario {
        model: normalize_rate(model, &train, 5e6)?,
        train,
        sweep: SweepConfig {
            c_sat: 0.15,
            linewidth: Some(10e6),
            ..Default::default()
        },
    })
}

/// Ungated contrast of the FND scenario.
pub const FND_UNGATED_CONTRAST: f64 = 0.012;

/// Fluorescent nanodiamonds on nitrocellulose: 25 ns / 13 ns NV lifetimes,
/// a 4 ns substrate background strong enough that the ungated contrast is
/// 1.2 %, and a strongly driven resonance (`c_sat = 0.5`).
pub fn fnd_on_nc() -> Result<Scenario> {
    let train = PulseTrain::new(20e6)?;
    let c_sat = 0.5;
    let nv = nv_pair(25.0, 13.0)?;
    let window = train.full_window();
    let n0 = gated_counts(&nv, SpinState::Ms0, window)?.total();
    let n1 = gated_counts(&nv, SpinState::Mixed(c_sat), window)?.total();
    // C = (n0 - n1) / (n0 + n_bg) fixes the background yield.
    let ratio = (n0 - n1) / (FND_UNGATED_CONTRAST * n0) - 1.0;
    let model = nv.with_background_level(4.0, "NC", BackgroundLevel::IntegratedRatio(ratio), window)?;
    Ok(Scenario {
        model: normalize_rate(model, &train, 5e6)?,
        train,
        sweep: SweepConfig {
            c_sat,
            linewidth: Some(10e6),
            ..Default::default()
        },
    })
}

/// Two-exponential model of the repetition-rate study: the bulk lifetimes
/// with a 1.7 ns background of equal peak amplitude, a fixed 10 ns gate
/// onset, constant pulse energy, and pulse periods 11–200 ns in 1 ns steps.
pub fn simplified_rep_rate() -> Result<Scenario> {
    let train = PulseTrain::new(20e6)?;
    let model = nv_pair(12.0, 8.0)?.with_background_level(
        1.7,
        "background",
        BackgroundLevel::AmplitudeRatio(1.0),
        train.full_window(),
    )?;
    let periods: Vec<f64> = (11..=200).map(f64::from).collect();
    Ok(Scenario {
        model,
        train,
        sweep: SweepConfig {
            c_sat: 0.15,
            tau_c: TauGrid::Points(vec![10.0]),
            rate_grid: rates_from_periods(&periods),
            power_mode: PowerMode::ConstantPulseEnergy,
            linewidth: Some(10e6),
            ..Default::default()
        },
    })
}

/// Look up a preset by name.
pub fn by_name(name: &str) -> Option<Result<Scenario>> {
    match name {
        "bulk" => Some(bulk_nv_siv()),
        "fnd" => Some(fnd_on_nc()),
        "simplified" => Some(simplified_rep_rate()),
        _ => None,
    }
}

pub const PRESETS: [&str; 3] = ["bulk", "fnd", "simplified"];

// --- synthetic confocal scan ------------------------------------------------------

/// A Gaussian spot of NV emission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    /// Pixel coordinates of the center.
    pub x: f64,
    pub y: f64,
    /// px
    pub radius: f64,
    /// Peak NV brightness relative to the scenario's NV amplitudes.
    pub brightness: f64,
}

/// Scan of emitters on a uniform background.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanScenario {
    pub nx: usize,
    pub ny: usize,
    /// µm
    pub pitch: f64,
    /// s
    pub dwell: f64,
    pub blobs: Vec<Blob>,
    /// Background amplitude relative to the scenario's background components.
    pub background_level: f64,
    pub gate: GateWindow,
    pub c_sat: f64,
}

impl ScanScenario {
    /// FNDs on a nitrocellulose strip: two bright and two faint spots, 0.4 µm
    /// pixels, 10 ms dwell, gate at `gate_onset`.
    pub fn fnd_strip(gate_onset: f64) -> Result<Self> {
        let blob = |x, y, brightness| Blob {
            x,
            y,
            radius: 1.5,
            brightness,
        };
        Ok(Self {
            nx: 32,
            ny: 24,
            pitch: 0.4,
            dwell: 10e-3,
            blobs: vec![
                blob(7.0, 6.0, 1.0),
                blob(24.0, 17.0, 1.0),
                blob(22.0, 6.0, 0.45),
                blob(9.0, 17.0, 0.45),
            ],
            background_level: 1.0,
            gate: GateWindow::new(gate_onset, 50.0)?,
            c_sat: 0.5,
        })
    }

    /// NV weight at a pixel.
    pub fn emitter_weight(&self, x: usize, y: usize) -> f64 {
        self.blobs
            .iter()
            .map(|b| {
                let r2 = (x as f64 - b.x).powi(2) + (y as f64 - b.y).powi(2);
                b.brightness * (-0.5 * r2 / (b.radius * b.radius)).exp()
            })
            .sum()
    }

    /// Pixels within one radius of a blob whose brightness is below `threshold`.
    pub fn faint_mask(&self, threshold: f64) -> Vec<bool> {
        let mut mask = vec![false; self.nx * self.ny];
        for b in self.blobs.iter().filter(|b| b.brightness < threshold) {
            for y in 0..self.ny {
                for x in 0..self.nx {
                    let r2 = (x as f64 - b.x).powi(2) + (y as f64 - b.y).powi(2);
                    if r2 <= b.radius * b.radius {
                        mask[y * self.nx + x] = true;
                    }
                }
            }
        }
        mask
    }

    /// Render the four count planes from the NV part and background part of
    /// `model`; half the dwell goes to each MW channel. Poisson noise is added
    /// when a seed is given.
    pub fn render(&self, model: &FluorescenceModel, train: &PulseTrain, seed: Option<u64>) -> Result<ScanMap> {
        check("dwell", self.dwell > 0.0 && self.dwell.is_finite(), self.dwell, "must be finite and > 0")?;
        check(
            "background_level",
            self.background_level >= 0.0,
            self.background_level,
            "must be >= 0",
        )?;
        let nv = FluorescenceModel::new(model.spin0().to_vec(), model.spin1().to_vec())?
            .with_irf_sigma(model.irf_sigma())?
            .with_pulse_time(model.pulse_time())?;
        let on = SpinState::Mixed(self.c_sat);
        let full = train.full_window();
        let rate = |state, gate| -> Result<(f64, f64)> {
            let nv_rate = gated_rate(&nv, state, gate, train)?.total();
            let all = gated_rate(model, state, gate, train)?;
            Ok((nv_rate, all.background + all.dark))
        };
        let half = 0.5 * self.dwell;
        let (nv_off_g, bg_g) = rate(SpinState::Ms0, self.gate)?;
        let (nv_on_g, _) = rate(on, self.gate)?;
        let (nv_off_u, bg_u) = rate(SpinState::Ms0, full)?;
        let (nv_on_u, _) = rate(on, full)?;

        let n = self.nx * self.ny;
        let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for y in 0..self.ny {
            for x in 0..self.nx {
                let w = self.emitter_weight(x, y);
                let i = y * self.nx + x;
                let b = self.background_level;
                planes[0][i] = (w * nv_off_g + b * bg_g) * half;
                planes[1][i] = (w * nv_on_g + b * bg_g) * half;
                planes[2][i] = (w * nv_off_u + b * bg_u) * half;
                planes[3][i] = (w * nv_on_u + b * bg_u) * half;
            }
        }
        if let Some(seed) = seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for plane in &mut planes {
                for v in plane.iter_mut() {
                    *v = if *v > 0.0 { Poisson::new(*v).expect("positive mean").sample(&mut rng) } else { 0.0 };
                }
            }
        }
        let [off_gated, on_gated, off_ungated, on_ungated] = planes;
        let map = ScanMap {
            nx: self.nx,
            ny: self.ny,
            pitch: self.pitch,
            dwell: self.dwell,
            off_gated,
            on_gated,
            off_ungated,
            on_ungated,
        };
        map.validate()?;
        Ok(map)
    }
}
