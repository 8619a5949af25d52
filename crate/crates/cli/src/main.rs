//! `chronogate` — time-gated fluorescence readout from the command line.
//!
//! Every subcommand reads an optional INI config (`--config`), takes a seed
//! (`--seed`) and writes a columnar report to `--out` or stdout.
//! Exit status: 0 success, 2 invalid input, 3 numeric failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use chronogate_core::acquisition::{bin_events, channel_durations};
use chronogate_core::io::{
    read_events, read_histogram, read_report, scan_to_report, snr_map_to_report, spectrum_from_report,
    spectrum_to_report, write_atomic, write_events, ColumnarReport, RunConfig,
};
use chronogate_core::odmr::{channel_rates, gate_measured_odmr, sensitivity_from_fit};
use chronogate_core::scenarios::ScanScenario;
use chronogate_core::sweep::rates_from_periods;
use chronogate_core::{
    fit_double_lorentzian, histogram_expectation, hw_gate, joint_optimum, mc_snr_distribution, sample_histogram,
    simulate_events, snr_map, sweep_gate, sweep_rep_rate, synth_odmr, Channel, Error, EventSimConfig, FitOptions,
    GateWindow, HwGateConfig, MapChannel, McConfig, OdmrTruth, Result, SpinState, TcspcHistogram,
};

#[derive(Parser, Debug)]
#[command(name = "chronogate", version, about = "Time-gated fluorescence readout toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// INI run configuration; defaults to the bulk preset
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random stream (overrides `[io] seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file (overrides `[io] out`); stdout when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Expected and Poisson-sampled TCSPC histograms for both MW channels
    Simulate,
    /// Contrast, SNR, enhancement and sensitivity versus gate onset
    GateSweep,
    /// Ungated and optimally gated SNR versus repetition rate
    RepSweep,
    /// Best (gate onset, repetition rate) pair
    JointOpt,
    /// Monte-Carlo distribution of the gated SNR
    Mc {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Synthetic CW-ODMR spectrum from gated steady-state rates
    OdmrSynth {
        /// Skip Poisson sampling
        #[arg(long)]
        noiseless: bool,
        /// Use the whole period instead of the configured gate
        #[arg(long)]
        ungated: bool,
    },
    /// Fit a Lorentzian doublet to a spectrum report
    OdmrFit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Gate recorded histograms and report kept counts (per MW frequency when present)
    GateApply {
        /// Histogram files, in frequency order
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        gate_start: Option<f64>,
        #[arg(long)]
        gate_end: Option<f64>,
    },
    /// Photon-event stream through a triggered hardware gate
    HwSim {
        /// Read events instead of simulating them
        #[arg(long)]
        events: Option<PathBuf>,
        /// Also write the ungated stream here
        #[arg(long)]
        raw_out: Option<PathBuf>,
    },
    /// Per-pixel SNR map of a simulated confocal scan
    SnrMap {
        #[arg(long, value_enum, default_value_t = MapKind::Gated)]
        channel: MapKind,
        #[arg(long)]
        factor: Option<usize>,
        /// Also write the raw count planes here
        #[arg(long)]
        scan_out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MapKind {
    Gated,
    Ungated,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::NonConvergence { last, .. } = &e {
                eprintln!("last iterate: baseline {:.6e}", last.baseline);
                for (k, d) in last.dips.iter().enumerate() {
                    eprintln!(
                        "  dip {k}: center {:.6e} Hz, fwhm {:.6e} Hz, depth {:.6e}",
                        d.center, d.fwhm, d.depth
                    );
                }
            }
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default_run()?,
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if cli.common.out.is_some() {
        cfg.out = cli.common.out;
    }
    if cfg.sweep.rate_grid.is_empty() {
        // 10–100 ns periods in 1 ns steps.
        let periods: Vec<f64> = (10..=100).map(f64::from).collect();
        cfg.sweep.rate_grid = rates_from_periods(&periods);
    }

    let report = match cli.command {
        Command::Simulate => simulate(&cfg)?,
        Command::GateSweep => gate_sweep(&cfg)?,
        Command::RepSweep => rep_sweep(&cfg)?,
        Command::JointOpt => joint(&cfg)?,
        Command::Mc { trials } => mc(&cfg, trials)?,
        Command::OdmrSynth { noiseless, ungated } => odmr_synth(&cfg, noiseless, ungated)?,
        Command::OdmrFit { input, max_iter } => odmr_fit(&cfg, &input, max_iter)?,
        Command::GateApply {
            input,
            gate_start,
            gate_end,
        } => gate_apply(&cfg, &input, gate_start, gate_end)?,
        Command::HwSim { events, raw_out } => return hw_sim(&cfg, events.as_deref(), raw_out.as_deref()),
        Command::SnrMap {
            channel,
            factor,
            scan_out,
        } => map(&cfg, channel, factor, scan_out.as_deref())?,
    };
    emit(&cfg, &report)
}

fn emit(cfg: &RunConfig, report: &ColumnarReport) -> Result<()> {
    let text = report.to_text()?;
    match &cfg.out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => match std::io::stdout().lock().write_all(text.as_bytes()) {
            // A closed pipe (`| head`) is not a failure.
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            }),
            _ => Ok(()),
        },
    }
}

fn base_report<S: Into<String>>(cfg: &RunConfig, columns: impl IntoIterator<Item = S>) -> ColumnarReport {
    let mut r = ColumnarReport::new(columns, Some(cfg.seed));
    r.set_meta("preset", &cfg.preset);
    r.set_meta("rep_rate_hz", cfg.train.rep_rate());
    r
}

/// The configured gate; the onset defaults to the SNR-optimal one and the end
/// to the end of the period.
fn resolve_gate(cfg: &RunConfig) -> Result<GateWindow> {
    let start = match cfg.acquisition.gate_start {
        Some(s) => s,
        None => sweep_gate(&cfg.model, &cfg.train, &cfg.sweep)?.optimal_tau_c(),
    };
    GateWindow::new(start, cfg.acquisition.gate_end.unwrap_or(cfg.train.period()))
}

fn simulate(cfg: &RunConfig) -> Result<ColumnarReport> {
    let t = cfg.sweep.integration_time;
    let duty = cfg.sweep.mw_duty;
    let bw = cfg.acquisition.bin_width;
    let off = histogram_expectation(&cfg.model, SpinState::Ms0, &cfg.train, bw, t * (1.0 - duty))?;
    let on = histogram_expectation(&cfg.model, cfg.sweep.on_state(), &cfg.train, bw, t * duty)?;
    // Independent streams per channel.
    let off_s = sample_histogram(&off, cfg.seed)?;
    let on_s = sample_histogram(&on, cfg.seed.wrapping_add(1))?;

    let mut r = base_report(
        cfg,
        ["bin_start_ns", "expected_off", "expected_on", "sampled_off", "sampled_on"],
    );
    r.set_meta("bin_width_ns", bw);
    r.set_meta("integration_s", t);
    r.set_meta("mw_duty", duty);
    for b in 0..off.counts.len() {
        r.push_row(vec![
            off.bin_start(b),
            off.counts[b],
            on.counts[b],
            off_s.counts[b] as f64,
            on_s.counts[b] as f64,
        ]);
    }
    Ok(r)
}

fn gate_sweep(cfg: &RunConfig) -> Result<ColumnarReport> {
    let s = sweep_gate(&cfg.model, &cfg.train, &cfg.sweep)?;
    let mut cols = vec!["tau_c_ns", "n0", "n1", "contrast", "shot_noise", "snr", "ef", "speedup"];
    if s.eta.is_some() {
        cols.push("eta");
    }
    let mut r = base_report(cfg, cols);
    r.set_meta("optimal_tau_c_ns", s.optimal_tau_c());
    r.set_meta("optimal_ef", s.ef[s.optimum]);
    r.set_meta("baseline_snr", s.baseline_snr);
    if let Some(i) = s.best_eta_index() {
        r.set_meta("best_eta_tau_c_ns", s.tau_c_grid[i]);
    }
    let speedup = s.speedup();
    for i in 0..s.len() {
        let mut row = vec![
            s.tau_c_grid[i],
            s.n0[i],
            s.n1[i],
            s.contrast[i],
            s.shot_noise[i],
            s.snr[i],
            s.ef[i],
            speedup[i],
        ];
        if let Some(eta) = &s.eta {
            row.push(eta[i]);
        }
        r.push_row(row);
    }
    Ok(r)
}

fn rep_sweep(cfg: &RunConfig) -> Result<ColumnarReport> {
    let s = sweep_rep_rate(&cfg.model, &cfg.sweep)?;
    let mut cols = vec!["rep_rate_hz", "period_ns", "snr_ungated", "snr_gated", "optimal_tau_c_ns"];
    let with_eta = s.eta_gated.is_some() && s.eta_ungated.is_some();
    if with_eta {
        cols.extend(["eta_ungated", "eta_gated"]);
    }
    let mut r = ColumnarReport::new(cols, Some(cfg.seed));
    r.set_meta("preset", &cfg.preset);
    r.set_meta("power_mode", s.mode.name());
    r.set_meta("reference_rate_hz", cfg.sweep.reference_rate);
    r.set_meta("best_rate_hz", s.rate_grid[s.best_gated()]);
    for i in 0..s.rate_grid.len() {
        let mut row = vec![
            s.rate_grid[i],
            1e9 / s.rate_grid[i],
            s.snr_ungated[i],
            s.snr_gated[i],
            s.optimal_tau_c[i],
        ];
        if let (Some(u), Some(g)) = (&s.eta_ungated, &s.eta_gated) {
            row.extend([u[i], g[i]]);
        }
        r.push_row(row);
    }
    Ok(r)
}

fn joint(cfg: &RunConfig) -> Result<ColumnarReport> {
    let j = joint_optimum(&cfg.model, &cfg.sweep)?;
    let mut r = ColumnarReport::new(["tau_c_ns", "rep_rate_hz", "period_ns", "snr"], Some(cfg.seed));
    r.set_meta("preset", &cfg.preset);
    r.set_meta("power_mode", cfg.sweep.power_mode.name());
    r.push_row(vec![j.tau_c, j.rep_rate, 1e9 / j.rep_rate, j.snr]);
    Ok(r)
}

fn mc(cfg: &RunConfig, trials: Option<usize>) -> Result<ColumnarReport> {
    let gate = resolve_gate(cfg)?;
    let mc = McConfig {
        integration_time: cfg.sweep.integration_time,
        mw_duty: cfg.sweep.mw_duty,
        trials: trials.unwrap_or(cfg.acquisition.trials),
        bin_width: cfg.acquisition.bin_width,
        on_state: cfg.sweep.on_state(),
        seed: cfg.seed,
    };
    let res = mc_snr_distribution(&cfg.model, gate, &cfg.train, &mc)?;
    let mut r = base_report(cfg, ["trial", "snr"]);
    r.set_meta("gate_start_ns", gate.t_start);
    r.set_meta("gate_end_ns", gate.t_end);
    r.set_meta("analytic_snr", res.analytic);
    r.set_meta("mean_snr", res.mean);
    r.set_meta("std_snr", res.std);
    for (i, v) in res.values.iter().enumerate() {
        r.push_row(vec![i as f64, *v]);
    }
    Ok(r)
}

fn odmr_truth(cfg: &RunConfig) -> OdmrTruth {
    let o = &cfg.odmr;
    let transfer = o.transfer.unwrap_or(cfg.sweep.c_sat);
    if o.centers[0] == o.centers[1] {
        OdmrTruth::degenerate(o.centers[0], o.fwhm, transfer)
    } else {
        OdmrTruth::split(o.centers, o.fwhm, transfer)
    }
}

fn odmr_synth(cfg: &RunConfig, noiseless: bool, ungated: bool) -> Result<ColumnarReport> {
    let gate = if ungated { None } else { Some(resolve_gate(cfg)?) };
    let seed = (!noiseless).then_some(cfg.seed);
    let spectrum = synth_odmr(
        &cfg.model,
        &cfg.train,
        gate,
        &cfg.odmr.freqs(),
        &odmr_truth(cfg),
        cfg.odmr.integration_per_point,
        seed,
    )?;
    let mut r = spectrum_to_report(&spectrum, Some(cfg.seed))?;
    r.set_meta("preset", &cfg.preset);
    r.set_meta("noiseless", noiseless);
    Ok(r)
}

fn odmr_fit(cfg: &RunConfig, input: &Path, max_iter: Option<usize>) -> Result<ColumnarReport> {
    let spectrum = spectrum_from_report(&read_report(input)?)?;
    let opts = FitOptions {
        max_iter: max_iter.unwrap_or(cfg.odmr.max_iter),
        fwhm_guess: cfg.odmr.fwhm,
        ..Default::default()
    };
    let fit = fit_double_lorentzian(&spectrum, &opts)?;
    let d = fit.doublet;
    let mut r = ColumnarReport::new(["dip", "center_hz", "fwhm_hz", "depth"], Some(cfg.seed));
    r.set_meta("baseline", d.baseline);
    r.set_meta("contrast", d.contrast());
    r.set_meta("residual_norm", fit.residual_norm);
    r.set_meta("iterations", fit.iterations);
    // Sensitivity needs the channel rates of the model the spectrum came from.
    let rates = channel_rates(&cfg.model, &cfg.train, spectrum.gate)?;
    if let Ok(eta) = sensitivity_from_fit(&d, rates, &cfg.sweep.constants) {
        r.set_meta("eta_t_sqrt_hz", eta);
    }
    for (k, dip) in d.dips.iter().enumerate() {
        r.push_row(vec![k as f64, dip.center, dip.fwhm, dip.depth]);
    }
    Ok(r)
}

fn gate_apply(cfg: &RunConfig, inputs: &[PathBuf], start: Option<f64>, end: Option<f64>) -> Result<ColumnarReport> {
    let records = inputs
        .iter()
        .map(|p| read_histogram::<f64>(p))
        .collect::<Result<Vec<_>>>()?;
    let period = records[0].histogram.period();
    let start = start.or(cfg.acquisition.gate_start).unwrap_or(0.0);
    let gate = GateWindow::new(start, end.or(cfg.acquisition.gate_end).unwrap_or(period))?;
    let freqs: Option<Vec<f64>> = records.iter().map(|r| r.mw_freq_hz).collect();
    let histograms: Vec<TcspcHistogram<f64>> = records.into_iter().map(|r| r.histogram).collect();

    if let Some(freqs) = freqs {
        let spectrum = gate_measured_odmr(&freqs, &histograms, gate)?;
        return spectrum_to_report(&spectrum, Some(cfg.seed));
    }
    let mut r = ColumnarReport::new(["index", "total", "gated"], Some(cfg.seed));
    r.set_meta("gate_start_ns", gate.t_start);
    r.set_meta("gate_end_ns", gate.t_end);
    for (i, h) in histograms.iter().enumerate() {
        r.push_row(vec![i as f64, h.total(), h.gated_total(gate)?]);
    }
    Ok(r)
}

fn hw_sim(cfg: &RunConfig, input: Option<&Path>, raw_out: Option<&Path>) -> Result<()> {
    let acq = &cfg.acquisition;
    let events = match input {
        Some(p) => read_events(p)?,
        None => simulate_events(
            &cfg.model,
            &cfg.train,
            &EventSimConfig {
                integration_time: acq.event_time,
                mw_toggle_rate: acq.mw_toggle_rate,
                on_state: cfg.sweep.on_state(),
                seed: cfg.seed,
            },
        )?,
    };
    if let Some(p) = raw_out {
        write_events(p, &events)?;
    }
    let gate = resolve_gate(cfg)?;
    let hw = HwGateConfig {
        trigger_delay: gate.t_start,
        gate_length: gate.t_end - gate.t_start,
        jitter_sigma: acq.jitter_sigma,
    };
    let kept = hw_gate(&events, &cfg.train, &hw, cfg.seed)?;

    let (t_off, t_on) = channel_durations(acq.event_time, acq.mw_toggle_rate);
    let bw = acq.bin_width;
    let off = bin_events(&kept, &cfg.train, bw, Channel::MwOff, t_off)?;
    let on = bin_events(&kept, &cfg.train, bw, Channel::MwOn, t_on)?;
    let mut r = base_report(cfg, ["bin_start_ns", "gated_off", "gated_on"]);
    r.set_meta("events_in", events.len());
    r.set_meta("events_kept", kept.len());
    r.set_meta("trigger_delay_ns", hw.trigger_delay);
    r.set_meta("gate_length_ns", hw.gate_length);
    r.set_meta("jitter_sigma_ns", hw.jitter_sigma);
    for b in 0..off.counts.len() {
        r.push_row(vec![off.bin_start(b), off.counts[b] as f64, on.counts[b] as f64]);
    }
    emit(cfg, &r)
}

fn map(cfg: &RunConfig, kind: MapKind, factor: Option<usize>, scan_out: Option<&Path>) -> Result<ColumnarReport> {
    let gate = resolve_gate(cfg)?;
    let mut scan = ScanScenario::fnd_strip(gate.t_start)?;
    scan.gate = gate;
    let planes = scan.render(&cfg.model, &cfg.train, Some(cfg.seed))?;
    if let Some(p) = scan_out {
        let text = scan_to_report(&planes, Some(cfg.seed))?.to_text()?;
        write_atomic(p, text.as_bytes())?;
    }
    let channel = match kind {
        MapKind::Gated => MapChannel::Gated,
        MapKind::Ungated => MapChannel::Ungated,
    };
    let m = snr_map(&planes, channel, factor.unwrap_or(cfg.interp_factor))?;
    let mut r = snr_map_to_report(&m, Some(cfg.seed));
    r.set_meta("gate_start_ns", gate.t_start);
    r.set_meta("gate_end_ns", gate.t_end);
    Ok(r)
}
