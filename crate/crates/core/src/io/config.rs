//! INI-style run configuration.
//!
//! ```text
//! [model]
//! preset = bulk            # bulk | fnd | simplified; supplies every default
//! c_sat = 0.15
//! [spin0]
//! component = 0.0053, 12, NV ms0
//! [background]
//! level = integrated       # how `relative` ratios are read
//! relative = 3, 1.7, SiV   # ratio, lifetime, label
//! ```
//!
//! Component sections, when present, replace the preset's lists wholesale.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::read_text;
use crate::decay::{BackgroundLevel, DecayComponent, FluorescenceModel, PileUp, PulseTrain};
use crate::error::{Error, Result};
use crate::scenarios::{self, Scenario};
use crate::sweep::{rates_from_periods, PowerMode, SweepConfig, TauGrid};

/// Photon-level simulation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionSettings {
    /// ns
    pub bin_width: f64,
    /// s of simulated event stream.
    pub event_time: f64,
    /// Hz
    pub mw_toggle_rate: f64,
    pub trials: usize,
    /// ns; `None` means the SNR-optimal onset.
    pub gate_start: Option<f64>,
    /// ns; `None` means the end of the period.
    pub gate_end: Option<f64>,
    /// ns
    pub jitter_sigma: f64,
}

impl Default for AcquisitionSettings {
    fn default() -> Self {
        Self {
            bin_width: 0.1,
            event_time: 1e-3,
            mw_toggle_rate: 50.0,
            trials: 1000,
            gate_start: None,
            gate_end: None,
            jitter_sigma: 0.0,
        }
    }
}

/// Synthetic spectrum and fit settings.
#[derive(Debug, Clone, PartialEq)]
pub struct OdmrSettings {
    pub freq_start: f64,
    pub freq_stop: f64,
    pub freq_points: usize,
    pub centers: [f64; 2],
    pub fwhm: f64,
    /// Population transfer on resonance per dip; `None` uses `c_sat`.
    pub transfer: Option<f64>,
    /// s
    pub integration_per_point: f64,
    pub max_iter: usize,
}

impl Default for OdmrSettings {
    fn default() -> Self {
        Self {
            freq_start: 2.82e9,
            freq_stop: 2.92e9,
            freq_points: 201,
            centers: [2.86e9, 2.88e9],
            fwhm: 10e6,
            transfer: None,
            integration_per_point: 1.0,
            max_iter: 200,
        }
    }
}

impl OdmrSettings {
    pub fn freqs(&self) -> Vec<f64> {
        let n = self.freq_points;
        let step = (self.freq_stop - self.freq_start) / (n - 1) as f64;
        (0..n).map(|k| self.freq_start + k as f64 * step).collect()
    }
}

/// Everything a command-line run needs, resolved and validated.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub preset: String,
    pub model: FluorescenceModel,
    pub train: PulseTrain,
    pub sweep: SweepConfig,
    pub acquisition: AcquisitionSettings,
    pub odmr: OdmrSettings,
    pub interp_factor: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// The bulk preset with all defaults.
    pub fn default_run() -> Result<Self> {
        Self::parse("")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries = tokenize(text)?;
        Builder::new(entries)?.build()
    }
}

#[derive(Debug)]
struct Entry {
    line: usize,
    section: String,
    key: String,
    value: String,
}

const SECTIONS: [&str; 9] = [
    "model",
    "spin0",
    "spin1",
    "background",
    "train",
    "sweep",
    "acquisition",
    "odmr",
    "io",
];

fn cfg_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Entry>> {
    let mut section: Option<String> = None;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split(['#', ';']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| cfg_err(line, format!("malformed section header `{content}`")))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(cfg_err(line, format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| cfg_err(line, format!("expected `key = value`, found `{content}`")))?;
        let section = section
            .clone()
            .ok_or_else(|| cfg_err(line, "key outside of any section"))?;
        out.push(Entry {
            line,
            section,
            key: key.trim().to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

struct Builder {
    scalars: HashMap<(String, String), (usize, String)>,
    lists: HashMap<String, Vec<(usize, String)>>,
    /// Key name → line, for mapping validation failures back to the file.
    lines: HashMap<String, usize>,
}

const SCALAR_KEYS: &[(&str, &[&str])] = &[
    ("model", &["preset", "irf_sigma_ns", "dark_rate_per_ns", "pulse_time_ns", "c_sat", "amplitude_scale"]),
    ("background", &["level"]),
    ("train", &["rep_rate_hz", "reference_rate_hz", "power_mode", "pile_up"]),
    (
        "sweep",
        &[
            "integration_s",
            "mw_duty",
            "tau_step_ns",
            "tau_max_fraction",
            "tau_range_ns",
            "tau_points_ns",
            "rates_hz",
            "period_range_ns",
            "linewidth_hz",
        ],
    ),
    (
        "acquisition",
        &[
            "bin_width_ns",
            "event_time_s",
            "mw_toggle_hz",
            "trials",
            "gate_start_ns",
            "gate_end_ns",
            "jitter_sigma_ns",
        ],
    ),
    (
        "odmr",
        &[
            "freq_start_hz",
            "freq_stop_hz",
            "freq_points",
            "centers_hz",
            "fwhm_hz",
            "transfer",
            "integration_per_point_s",
            "max_iter",
            "interp_factor",
        ],
    ),
    ("io", &["seed", "out"]),
];

const LIST_KEYS: &[(&str, &str)] = &[
    ("spin0", "component"),
    ("spin1", "component"),
    ("background", "component"),
    ("background", "relative"),
];

impl Builder {
    fn new(entries: Vec<Entry>) -> Result<Self> {
        let mut b = Builder {
            scalars: HashMap::new(),
            lists: HashMap::new(),
            lines: HashMap::new(),
        };
        for e in entries {
            if LIST_KEYS.contains(&(e.section.as_str(), e.key.as_str())) {
                b.lists
                    .entry(format!("{}.{}", e.section, e.key))
                    .or_default()
                    .push((e.line, e.value));
                continue;
            }
            let known = SCALAR_KEYS
                .iter()
                .any(|(s, keys)| *s == e.section && keys.contains(&e.key.as_str()));
            if !known {
                return Err(cfg_err(e.line, format!("unknown key `{}` in [{}]", e.key, e.section)));
            }
            b.lines.insert(e.key.clone(), e.line);
            if let Some((prev, _)) = b.scalars.insert((e.section.clone(), e.key.clone()), (e.line, e.value)) {
                return Err(cfg_err(e.line, format!("duplicate key `{}` (first set on line {prev})", e.key)));
            }
        }
        Ok(b)
    }

    fn raw(&self, section: &str, key: &str) -> Option<(usize, &str)> {
        self.scalars
            .get(&(section.to_string(), key.to_string()))
            .map(|(l, v)| (*l, v.as_str()))
    }

    fn f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.raw(section, key)
            .map(|(line, v)| parse_f64(line, key, v))
            .transpose()
    }

    fn usize(&self, section: &str, key: &str) -> Result<Option<usize>> {
        self.raw(section, key)
            .map(|(line, v)| {
                v.parse::<usize>()
                    .map_err(|_| cfg_err(line, format!("`{key}` expects a non-negative integer, found `{v}`")))
            })
            .transpose()
    }

    fn list(&self, section: &str, key: &str) -> Result<Option<(usize, Vec<f64>)>> {
        self.raw(section, key)
            .map(|(line, v)| {
                v.split(',')
                    .map(|s| parse_f64(line, key, s.trim()))
                    .collect::<Result<Vec<_>>>()
                    .map(|l| (line, l))
            })
            .transpose()
    }

    fn components(&self, section: &str) -> Result<Option<Vec<DecayComponent>>> {
        let Some(items) = self.lists.get(&format!("{section}.component")) else {
            return Ok(None);
        };
        items
            .iter()
            .map(|(line, v)| {
                let (nums, label) = split_triple(*line, v, "component = amplitude, lifetime, label")?;
                DecayComponent::new(nums[0], nums[1], label).map_err(|e| cfg_err(*line, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn build(self) -> Result<RunConfig> {
        let (preset_line, preset) = self
            .raw("model", "preset")
            .map(|(l, v)| (l, v.to_string()))
            .unwrap_or((0, "bulk".to_string()));
        let Scenario {
            model: base,
            train: base_train,
            mut sweep,
        } = scenarios::by_name(&preset)
            .ok_or_else(|| {
                cfg_err(
                    preset_line,
                    format!("unknown preset `{preset}` (expected one of {})", scenarios::PRESETS.join(", ")),
                )
            })?
            .map_err(|e| cfg_err(preset_line, e.to_string()))?;

        let at = |key: &str| self.lines.get(key).copied().unwrap_or(0);
        let named = |e: Error| match &e {
            Error::InvalidParameter { name, .. } => cfg_err(at(name), e.to_string()),
            _ => cfg_err(0, e.to_string()),
        };

        // [train]
        let mut train = match self.f64("train", "rep_rate_hz")? {
            Some(f) => PulseTrain::new(f).map_err(|e| cfg_err(at("rep_rate_hz"), e.to_string()))?,
            None => base_train,
        };
        if let Some((line, v)) = self.raw("train", "pile_up") {
            let p = match v {
                "off" => PileUp::Off,
                "folded" => PileUp::Folded,
                _ => return Err(cfg_err(line, format!("pile_up must be `off` or `folded`, found `{v}`"))),
            };
            train = train.with_pile_up(p);
            sweep.pile_up = p;
        } else {
            sweep.pile_up = train.pile_up();
        }
        if let Some(r) = self.f64("train", "reference_rate_hz")? {
            sweep.reference_rate = r;
        }
        if let Some((line, v)) = self.raw("train", "power_mode") {
            sweep.power_mode = PowerMode::parse(v).ok_or_else(|| {
                cfg_err(
                    line,
                    format!("power_mode must be `constant-mean-power` or `constant-pulse-energy`, found `{v}`"),
                )
            })?;
        }

        // [model], component sections
        let spin0 = self.components("spin0")?.unwrap_or_else(|| base.spin0().to_vec());
        let spin1 = self.components("spin1")?.unwrap_or_else(|| base.spin1().to_vec());
        let absolute = self.components("background")?;
        let relative = self.lists.get("background.relative");
        let background = if absolute.is_some() || relative.is_some() {
            absolute.unwrap_or_default()
        } else {
            base.background().to_vec()
        };
        let mut model = FluorescenceModel::new(spin0, spin1)
            .map_err(|e| cfg_err(0, e.to_string()))?
            .with_background(background)
            .with_irf_sigma(self.f64("model", "irf_sigma_ns")?.unwrap_or(base.irf_sigma()))
            .map_err(|e| cfg_err(at("irf_sigma_ns"), e.to_string()))?
            .with_dark_rate(self.f64("model", "dark_rate_per_ns")?.unwrap_or(base.dark_rate()))
            .map_err(|e| cfg_err(at("dark_rate_per_ns"), e.to_string()))?
            .with_pulse_time(self.f64("model", "pulse_time_ns")?.unwrap_or(base.pulse_time()))
            .map_err(|e| cfg_err(at("pulse_time_ns"), e.to_string()))?;
        if let Some(items) = relative {
            let (level_line, level) = self.raw("background", "level").unwrap_or((0, "amplitude"));
            for (line, v) in items {
                let (nums, label) = split_triple(*line, v, "relative = ratio, lifetime, label")?;
                let lvl = match level {
                    "amplitude" => BackgroundLevel::AmplitudeRatio(nums[0]),
                    "integrated" => BackgroundLevel::IntegratedRatio(nums[0]),
                    _ => {
                        return Err(cfg_err(
                            level_line,
                            format!("level must be `amplitude` or `integrated`, found `{level}`"),
                        ))
                    }
                };
                model = model
                    .with_background_level(nums[1], label, lvl, train.full_window())
                    .map_err(|e| cfg_err(*line, e.to_string()))?;
            }
        } else if let Some((line, _)) = self.raw("background", "level") {
            return Err(cfg_err(line, "`level` only applies to `relative` entries"));
        }
        if let Some((line, v)) = self.raw("model", "amplitude_scale") {
            let k = parse_f64(line, "amplitude_scale", v)?;
            if !(k > 0.0 && k.is_finite()) {
                return Err(cfg_err(line, format!("amplitude_scale must be finite and > 0, found {k}")));
            }
            model = model.scaled(k);
        }
        if let Some(c) = self.f64("model", "c_sat")? {
            sweep.c_sat = c;
        }

        // [sweep]
        if let Some(v) = self.f64("sweep", "integration_s")? {
            sweep.integration_time = v;
        }
        if let Some(v) = self.f64("sweep", "mw_duty")? {
            sweep.mw_duty = v;
        }
        let grid_keys = ["tau_range_ns", "tau_points_ns"];
        if let Some(step) = self.f64("sweep", "tau_step_ns")? {
            let max_fraction = self.f64("sweep", "tau_max_fraction")?.unwrap_or(0.8);
            sweep.tau_c = TauGrid::Auto { step, max_fraction };
        } else if let Some(max_fraction) = self.f64("sweep", "tau_max_fraction")? {
            sweep.tau_c = TauGrid::Auto { step: 0.1, max_fraction };
        }
        if let Some((line, v)) = self.list("sweep", "tau_range_ns")? {
            if v.len() != 3 {
                return Err(cfg_err(line, "tau_range_ns = start, stop, step"));
            }
            sweep.tau_c = TauGrid::Range {
                start: v[0],
                stop: v[1],
                step: v[2],
            };
        }
        if let Some((_, v)) = self.list("sweep", "tau_points_ns")? {
            sweep.tau_c = TauGrid::Points(v);
        }
        if grid_keys.iter().filter(|k| self.raw("sweep", k).is_some()).count() > 1 {
            return Err(cfg_err(at("tau_points_ns"), "give at most one of tau_range_ns, tau_points_ns"));
        }
        if let Some((_, v)) = self.list("sweep", "rates_hz")? {
            sweep.rate_grid = v;
        }
        if let Some((line, v)) = self.list("sweep", "period_range_ns")? {
            if v.len() != 3 || !(v[2] > 0.0) || v[1] < v[0] {
                return Err(cfg_err(line, "period_range_ns = start, stop, step with step > 0"));
            }
            let n = ((v[1] - v[0]) / v[2] + 1e-9).floor() as usize + 1;
            let periods: Vec<f64> = (0..n).map(|k| v[0] + k as f64 * v[2]).collect();
            sweep.rate_grid = rates_from_periods(&periods);
        }
        if let Some(l) = self.f64("sweep", "linewidth_hz")? {
            sweep.linewidth = Some(l);
        }
        sweep.validate().map_err(named)?;
        if let Some(&bad) = sweep.rate_grid.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(cfg_err(at("rates_hz").max(at("period_range_ns")), format!("rate {bad} must be finite and > 0")));
        }

        // [acquisition]
        let d = AcquisitionSettings::default();
        let acquisition = AcquisitionSettings {
            bin_width: self.f64("acquisition", "bin_width_ns")?.unwrap_or(d.bin_width),
            event_time: self.f64("acquisition", "event_time_s")?.unwrap_or(d.event_time),
            mw_toggle_rate: self.f64("acquisition", "mw_toggle_hz")?.unwrap_or(d.mw_toggle_rate),
            trials: self.usize("acquisition", "trials")?.unwrap_or(d.trials),
            gate_start: self.f64("acquisition", "gate_start_ns")?,
            gate_end: self.f64("acquisition", "gate_end_ns")?,
            jitter_sigma: self.f64("acquisition", "jitter_sigma_ns")?.unwrap_or(d.jitter_sigma),
        };
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(cfg_err(at(key), format!("{key} must be finite and > 0, found {v}")))
            }
        };
        positive("bin_width_ns", acquisition.bin_width)?;
        positive("event_time_s", acquisition.event_time)?;
        positive("mw_toggle_hz", acquisition.mw_toggle_rate)?;
        if acquisition.trials < 2 {
            return Err(cfg_err(at("trials"), "trials must be >= 2"));
        }
        if !(acquisition.jitter_sigma >= 0.0 && acquisition.jitter_sigma.is_finite()) {
            return Err(cfg_err(at("jitter_sigma_ns"), "jitter_sigma_ns must be finite and >= 0"));
        }
        let period = train.period();
        if let Some(g) = acquisition.gate_start {
            if !(g >= 0.0 && g < period) {
                return Err(cfg_err(at("gate_start_ns"), format!("gate_start_ns must lie in [0, {period})")));
            }
        }
        if let Some(g) = acquisition.gate_end {
            let start = acquisition.gate_start.unwrap_or(0.0);
            if !(g > start && g <= period) {
                return Err(cfg_err(at("gate_end_ns"), format!("gate_end_ns must lie in ({start}, {period}]")));
            }
        }

        // [odmr]
        let d = OdmrSettings::default();
        let centers = match self.list("odmr", "centers_hz")? {
            Some((_, v)) if v.len() == 2 => [v[0], v[1]],
            Some((_, v)) if v.len() == 1 => [v[0], v[0]],
            Some((line, _)) => return Err(cfg_err(line, "centers_hz takes one or two frequencies")),
            None => d.centers,
        };
        let odmr = OdmrSettings {
            freq_start: self.f64("odmr", "freq_start_hz")?.unwrap_or(d.freq_start),
            freq_stop: self.f64("odmr", "freq_stop_hz")?.unwrap_or(d.freq_stop),
            freq_points: self.usize("odmr", "freq_points")?.unwrap_or(d.freq_points),
            centers,
            fwhm: self.f64("odmr", "fwhm_hz")?.unwrap_or(d.fwhm),
            transfer: self.f64("odmr", "transfer")?,
            integration_per_point: self.f64("odmr", "integration_per_point_s")?.unwrap_or(d.integration_per_point),
            max_iter: self.usize("odmr", "max_iter")?.unwrap_or(d.max_iter),
        };
        if !(odmr.freq_stop > odmr.freq_start) {
            return Err(cfg_err(at("freq_stop_hz"), "freq_stop_hz must exceed freq_start_hz"));
        }
        if odmr.freq_points < 7 {
            return Err(cfg_err(at("freq_points"), "freq_points must be >= 7"));
        }
        positive("fwhm_hz", odmr.fwhm)?;
        positive("integration_per_point_s", odmr.integration_per_point)?;
        if let Some(t) = odmr.transfer {
            if !(0.0..0.5).contains(&t) && !(centers[0] != centers[1] && (0.0..1.0).contains(&t)) {
                return Err(cfg_err(at("transfer"), format!("transfer {t} out of range")));
            }
        }
        if odmr.max_iter == 0 {
            return Err(cfg_err(at("max_iter"), "max_iter must be >= 1"));
        }
        let interp_factor = self.usize("odmr", "interp_factor")?.unwrap_or(4);
        if interp_factor == 0 {
            return Err(cfg_err(at("interp_factor"), "interp_factor must be >= 1"));
        }

        // [io]
        let seed = match self.raw("io", "seed") {
            Some((line, v)) => v
                .parse::<u64>()
                .map_err(|_| cfg_err(line, format!("seed must be a non-negative integer, found `{v}`")))?,
            None => 0,
        };
        let out = self.raw("io", "out").map(|(_, v)| PathBuf::from(v));

        Ok(RunConfig {
            preset,
            model,
            train,
            sweep,
            acquisition,
            odmr,
            interp_factor,
            seed,
            out,
        })
    }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(cfg_err(line, format!("`{key}` expects a finite number, found `{v}`"))),
    }
}

fn split_triple<'a>(line: usize, v: &'a str, usage: &str) -> Result<([f64; 2], &'a str)> {
    let parts: Vec<&str> = v.splitn(3, ',').map(str::trim).collect();
    if parts.len() < 2 {
        return Err(cfg_err(line, format!("expected `{usage}`")));
    }
    Ok((
        [parse_f64(line, "value", parts[0])?, parse_f64(line, "lifetime", parts[1])?],
        parts.get(2).copied().unwrap_or(""),
    ))
}
