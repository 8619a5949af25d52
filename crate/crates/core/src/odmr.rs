//! CW-ODMR spectra: synthesis from the decay model, double-Lorentzian
//! least-squares fitting, gating of per-frequency histograms, sensitivity
//! from fitted linewidths, and per-pixel SNR maps.

use nalgebra::{SMatrix, SVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::decay::{gated_rate, FluorescenceModel, GateWindow, PulseTrain, SpinState};
use crate::error::{check, Error, Result};
use crate::histogram::{Count, TcspcHistogram};
use crate::interp::upsample_catmull_rom;
use crate::metrics::{self, PhysicalConstants, RatePair};

/// Counts per microwave frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct OdmrSpectrum {
    /// Hz, strictly increasing.
    pub freqs: Vec<f64>,
    pub counts: Vec<f64>,
    /// s per frequency point.
    pub integration_per_point: f64,
    pub gate: Option<GateWindow>,
}

impl OdmrSpectrum {
    pub fn new(freqs: Vec<f64>, counts: Vec<f64>, integration_per_point: f64, gate: Option<GateWindow>) -> Result<Self> {
        let s = Self {
            freqs,
            counts,
            integration_per_point,
            gate,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.freqs.len() != self.counts.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} frequencies vs {} counts",
                self.freqs.len(),
                self.counts.len()
            )));
        }
        if self.freqs.iter().any(|f| !f.is_finite()) || self.freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("freqs", "must be finite and strictly increasing"));
        }
        if let Some(c) = self.counts.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::invalid("counts", format!("{c} must be finite and >= 0")));
        }
        check(
            "integration_per_point",
            self.integration_per_point >= 0.0 && self.integration_per_point.is_finite(),
            self.integration_per_point,
            "must be finite and >= 0",
        )
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }
}

/// One Lorentzian dip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dip {
    /// Hz
    pub center: f64,
    /// Hz, full width at half maximum.
    pub fwhm: f64,
    /// Fractional depth at the center.
    pub depth: f64,
}

impl Dip {
    /// Unit-height Lorentzian profile at `f`.
    pub fn profile(&self, f: f64) -> f64 {
        let h = 0.5 * self.fwhm;
        let u = f - self.center;
        h * h / (u * u + h * h)
    }
}

/// Baseline times one minus two Lorentzian dips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianDoublet {
    pub baseline: f64,
    pub dips: [Dip; 2],
}

impl LorentzianDoublet {
    /// Summed fractional dip at `f`.
    pub fn dip_fraction(&self, f: f64) -> f64 {
        self.dips.iter().map(|d| d.depth * d.profile(f)).sum()
    }

    pub fn eval(&self, f: f64) -> f64 {
        self.baseline * (1.0 - self.dip_fraction(f))
    }

    /// The deeper dip; equal depths resolve to the lower frequency.
    pub fn deeper_dip(&self) -> Dip {
        let [a, b] = self.dips;
        let (lo, hi) = if a.center <= b.center { (a, b) } else { (b, a) };
        if hi.depth > lo.depth {
            hi
        } else {
            lo
        }
    }

    /// Largest fractional drop below baseline, taken at a dip center.
    pub fn contrast(&self) -> f64 {
        self.dips
            .iter()
            .map(|d| self.dip_fraction(d.center))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

// --- synthesis -----------------------------------------------------------------

/// Ground truth for a synthetic spectrum: each dip's `depth` is the fraction
/// of the population transferred to `m_S = ±1` on resonance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdmrTruth {
    pub dips: [Dip; 2],
}

impl OdmrTruth {
    /// Zero-field doublet: both transitions at `center`, splitting the transfer.
    pub fn degenerate(center: f64, fwhm: f64, transfer: f64) -> Self {
        let d = Dip {
            center,
            fwhm,
            depth: 0.5 * transfer,
        };
        Self { dips: [d, d] }
    }

    pub fn split(centers: [f64; 2], fwhm: f64, transfer: f64) -> Self {
        let d = |center| Dip {
            center,
            fwhm,
            depth: transfer,
        };
        Self {
            dips: [d(centers[0]), d(centers[1])],
        }
    }

    /// Population mixing `p(f)`.
    pub fn mixing(&self, f: f64) -> f64 {
        self.dips.iter().map(|d| d.depth * d.profile(f)).sum()
    }

    fn validate(&self) -> Result<()> {
        for d in &self.dips {
            check("fwhm", d.fwhm > 0.0 && d.fwhm.is_finite(), d.fwhm, "must be finite and > 0")?;
            check("depth", (0.0..1.0).contains(&d.depth), d.depth, "must lie in [0, 1)")?;
            check("center", d.center.is_finite(), d.center, "must be finite")?;
        }
        let total = self.dips[0].depth + self.dips[1].depth;
        check("depth", total <= 1.0, total, "summed dip depths must not exceed 1")
    }

    /// The doublet a noiseless spectrum of this truth follows exactly, given
    /// the two channel rates and integration time.
    pub fn expected_doublet(&self, rates: RatePair, integration: f64) -> LorentzianDoublet {
        let c_gate = (rates.r0 - rates.r1) / rates.r0;
        let mut dips = self.dips;
        for d in &mut dips {
            d.depth *= c_gate;
        }
        LorentzianDoublet {
            baseline: rates.r0 * integration,
            dips,
        }
    }
}

/// Gated rates of the undriven (`m_S = 0`) and fully driven (`m_S = ±1`) states.
pub fn channel_rates(model: &FluorescenceModel, train: &PulseTrain, gate: Option<GateWindow>) -> Result<RatePair> {
    let gate = gate.unwrap_or_else(|| train.full_window());
    Ok(RatePair {
        r0: gated_rate(model, SpinState::Ms0, gate, train)?.total(),
        r1: gated_rate(model, SpinState::Ms1, gate, train)?.total(),
    })
}

/// Synthesize a CW-ODMR spectrum: at each frequency the detected counts are
/// `(1 - p)·N0 + p·N1` from gated steady-state rates, Poisson-sampled when a
/// seed is given.
pub fn synth_odmr(
    model: &FluorescenceModel,
    train: &PulseTrain,
    gate: Option<GateWindow>,
    freqs: &[f64],
    truth: &OdmrTruth,
    integration_per_point: f64,
    seed: Option<u64>,
) -> Result<OdmrSpectrum> {
    truth.validate()?;
    let rates = channel_rates(model, train, gate)?;
    let expected: Vec<f64> = freqs
        .iter()
        .map(|&f| {
            let p = truth.mixing(f);
            ((1.0 - p) * rates.r0 + p * rates.r1) * integration_per_point
        })
        .collect();
    let counts = match seed {
        None => expected,
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            expected
                .iter()
                .map(|&m| if m > 0.0 { Poisson::new(m).expect("positive mean").sample(&mut rng) } else { 0.0 })
                .collect()
        }
    };
    OdmrSpectrum::new(freqs.to_vec(), counts, integration_per_point, gate)
}

/// Gate each frequency's histogram and record the kept counts.
pub fn gate_measured_odmr<T: Count>(
    freqs: &[f64],
    histograms: &[TcspcHistogram<T>],
    gate: GateWindow,
) -> Result<OdmrSpectrum> {
    if freqs.len() != histograms.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} frequencies vs {} histograms",
            freqs.len(),
            histograms.len()
        )));
    }
    let Some(first) = histograms.first() else {
        return Err(Error::EmptyGrid("frequency"));
    };
    for (i, h) in histograms.iter().enumerate() {
        if h.bin_width != first.bin_width || h.rep_rate != first.rep_rate || h.counts.len() != first.counts.len() {
            return Err(Error::IncompatibleHistograms(format!(
                "histogram {i} has bin width {} ns, rate {} Hz, {} bins; expected {} ns, {} Hz, {} bins",
                h.bin_width,
                h.rep_rate,
                h.counts.len(),
                first.bin_width,
                first.rep_rate,
                first.counts.len()
            )));
        }
    }
    let counts = histograms
        .iter()
        .map(|h| h.gated_total(gate))
        .collect::<Result<Vec<_>>>()?;
    OdmrSpectrum::new(freqs.to_vec(), counts, first.integration_time, Some(gate))
}

// --- fitting ---------------------------------------------------------------------

/// Levenberg-Marquardt settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Converged once an accepted step lowers the cost by less than this fraction.
    pub rel_tol: f64,
    /// Initial linewidth guess in Hz.
    pub fwhm_guess: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            rel_tol: 1e-10,
            fwhm_guess: 10e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub doublet: LorentzianDoublet,
    /// √(Σ residual²) in counts.
    pub residual_norm: f64,
    pub iterations: usize,
}

const NP: usize = 7;
type Params = SVector<f64, NP>;

/// Parameters `[b, c1, g1, d1, c2, g2, d2]` on normalized axes.
fn residuals_and_jacobian(p: &Params, x: &[f64], y: &[f64], jac: Option<&mut Vec<[f64; NP]>>) -> (Vec<f64>, f64) {
    let mut r = Vec::with_capacity(x.len());
    let mut rows = jac;
    if let Some(j) = rows.as_deref_mut() {
        j.clear();
    }
    let mut cost = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let mut sum = 0.0;
        let mut row = [0.0; NP];
        for k in 0..2 {
            let (c, g, d) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
            let h = 0.5 * g;
            let u = xi - c;
            let q = u * u + h * h;
            let l = h * h / q;
            sum += d * l;
            let dl_dc = 2.0 * u * h * h / (q * q);
            let dl_dg = h * u * u / (q * q);
            row[1 + 3 * k] = -p[0] * d * dl_dc;
            row[2 + 3 * k] = -p[0] * d * dl_dg;
            row[3 + 3 * k] = -p[0] * l;
        }
        row[0] = 1.0 - sum;
        let ri = p[0] * (1.0 - sum) - yi;
        cost += ri * ri;
        r.push(ri);
        if let Some(j) = rows.as_deref_mut() {
            j.push(row);
        }
    }
    (r, 0.5 * cost)
}

fn admissible(p: &Params) -> bool {
    p.iter().all(|v| v.is_finite())
        && p[0] > 0.0
        && p[2] > 0.0
        && p[5] > 0.0
        && (0.0..1.0).contains(&p[3])
        && (0.0..1.0).contains(&p[6])
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Starting point on raw axes: baseline from the outer tenth of the points,
/// centers at the two lowest local minima (or one minimum split by the
/// linewidth guess), depths from the dip depths.
fn initial_guess(s: &OdmrSpectrum, fwhm: f64) -> LorentzianDoublet {
    let n = s.len();
    let y = &s.counts;
    let edge = ((0.05 * n as f64).round() as usize).max(1);
    let outer: Vec<f64> = y[..edge].iter().chain(&y[n - edge..]).copied().collect();
    let baseline = median(outer);

    let mut minima: Vec<usize> = (0..n)
        .filter(|&i| (i == 0 || y[i] <= y[i - 1]) && (i + 1 == n || y[i] <= y[i + 1]))
        .collect();
    minima.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let first = minima[0];
    // Neighbouring noise minima inside one dip are not a second resonance.
    let second = minima
        .iter()
        .copied()
        .find(|&i| (s.freqs[i] - s.freqs[first]).abs() >= fwhm);
    let depth_at = |i: usize| ((baseline - y[i]) / baseline).clamp(1e-3, 0.9);
    let dip = |center: f64, depth: f64| Dip { center, fwhm, depth };
    let dips = match second {
        Some(j) => {
            let (a, b) = if s.freqs[first] <= s.freqs[j] { (first, j) } else { (j, first) };
            [dip(s.freqs[a], depth_at(a)), dip(s.freqs[b], depth_at(b))]
        }
        None => {
            let c = s.freqs[first];
            let d = depth_at(first);
            [dip(c - 0.5 * fwhm, d), dip(c + 0.5 * fwhm, d)]
        }
    };
    LorentzianDoublet { baseline, dips }
}

/// Least-squares double-Lorentzian fit by Levenberg-Marquardt.
pub fn fit_double_lorentzian(spectrum: &OdmrSpectrum, opts: &FitOptions) -> Result<FitResult> {
    spectrum.validate()?;
    let n = spectrum.len();
    if n < NP {
        return Err(Error::invalid("spectrum", format!("{n} points; a fit needs at least {NP}")));
    }
    let y_max = spectrum.counts.iter().copied().fold(0.0, f64::max);
    let mean = spectrum.counts.iter().sum::<f64>() / n as f64;
    if y_max == 0.0 || spectrum.counts.iter().all(|&c| c == mean) {
        return Err(Error::DegenerateSpectrum("zero variance"));
    }

    let f_mid = 0.5 * (spectrum.freqs[0] + spectrum.freqs[n - 1]);
    let f_scale = 0.5 * (spectrum.freqs[n - 1] - spectrum.freqs[0]);
    let x: Vec<f64> = spectrum.freqs.iter().map(|f| (f - f_mid) / f_scale).collect();
    let y: Vec<f64> = spectrum.counts.iter().map(|c| c / y_max).collect();

    let fwhm = opts.fwhm_guess.min(f_scale);
    let g0 = initial_guess(spectrum, fwhm);
    let mut p = Params::from_column_slice(&[
        g0.baseline / y_max,
        (g0.dips[0].center - f_mid) / f_scale,
        g0.dips[0].fwhm / f_scale,
        g0.dips[0].depth,
        (g0.dips[1].center - f_mid) / f_scale,
        g0.dips[1].fwhm / f_scale,
        g0.dips[1].depth,
    ]);

    let to_doublet = |p: &Params| {
        let dip = |k: usize| Dip {
            center: f_mid + p[1 + 3 * k] * f_scale,
            fwhm: p[2 + 3 * k] * f_scale,
            depth: p[3 + 3 * k],
        };
        let (a, b) = (dip(0), dip(1));
        LorentzianDoublet {
            baseline: p[0] * y_max,
            dips: if a.center <= b.center { [a, b] } else { [b, a] },
        }
    };

    let scale2: f64 = y.iter().map(|v| v * v).sum();
    let mut jac = Vec::with_capacity(n);
    let (mut r, mut cost) = residuals_and_jacobian(&p, &x, &y, Some(&mut jac));
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        if cost <= 1e-30 * scale2 {
            converged = true;
            break;
        }
        let mut jtj = SMatrix::<f64, NP, NP>::zeros();
        let mut jtr = Params::zeros();
        for (row, &ri) in jac.iter().zip(&r) {
            for a in 0..NP {
                jtr[a] += row[a] * ri;
                for b in a..NP {
                    jtj[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..NP {
            for b in 0..a {
                jtj[(a, b)] = jtj[(b, a)];
            }
        }

        let mut accepted = false;
        while lambda <= 1e16 {
            let mut damped = jtj;
            for a in 0..NP {
                damped[(a, a)] += lambda * jtj[(a, a)].max(1e-12);
            }
            if let Some(chol) = damped.cholesky() {
                let trial = p - chol.solve(&jtr);
                if admissible(&trial) {
                    let (_, trial_cost) = residuals_and_jacobian(&trial, &x, &y, None);
                    if trial_cost < cost {
                        let rel = (cost - trial_cost) / cost;
                        p = trial;
                        (r, cost) = residuals_and_jacobian(&p, &x, &y, Some(&mut jac));
                        lambda = (lambda / 10.0).max(1e-12);
                        accepted = true;
                        converged = rel < opts.rel_tol;
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No damping level lowers the cost: a stationary point to machine precision.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let doublet = to_doublet(&p);
    let residual_norm = (2.0 * cost).sqrt() * y_max;
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            cost: residual_norm * residual_norm,
            last: Box::new(doublet),
        });
    }
    Ok(FitResult {
        doublet,
        residual_norm,
        iterations,
    })
}

/// CW sensitivity using the linewidth of the deeper fitted dip.
pub fn sensitivity_from_fit(doublet: &LorentzianDoublet, rates: RatePair, constants: &PhysicalConstants) -> Result<f64> {
    metrics::sensitivity_cw(doublet.deeper_dip().fwhm, rates, constants)
}

// --- scan maps ---------------------------------------------------------------------

/// Confocal scan with four count planes, row-major `ny × nx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanMap {
    pub nx: usize,
    pub ny: usize,
    /// µm
    pub pitch: f64,
    /// s per pixel
    pub dwell: f64,
    pub off_gated: Vec<f64>,
    pub on_gated: Vec<f64>,
    pub off_ungated: Vec<f64>,
    pub on_ungated: Vec<f64>,
}

impl ScanMap {
    pub fn validate(&self) -> Result<()> {
        let n = self.nx * self.ny;
        if n == 0 {
            return Err(Error::EmptyGrid("scan"));
        }
        for (name, plane) in self.planes() {
            if plane.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{name} has {} pixels, expected {}×{} = {n}",
                    plane.len(),
                    self.nx,
                    self.ny
                )));
            }
            if let Some(c) = plane.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
                return Err(Error::invalid("counts", format!("{name} contains {c}")));
            }
        }
        Ok(())
    }

    pub fn planes(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("off_gated", &self.off_gated),
            ("on_gated", &self.on_gated),
            ("off_ungated", &self.off_ungated),
            ("on_ungated", &self.on_ungated),
        ]
    }
}

/// Which pair of count planes a map is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapChannel {
    Gated,
    Ungated,
}

/// Per-pixel SNR, optionally upsampled.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrMap {
    /// Upsampled width and height.
    pub nx: usize,
    pub ny: usize,
    pub factor: usize,
    pub method: &'static str,
    pub values: Vec<f64>,
    /// Source-resolution flags for pixels with zero total counts (mapped to 0).
    pub zero_total: Vec<bool>,
}

impl SnrMap {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.nx + x]
    }
}

/// SNR per pixel followed by Catmull-Rom upsampling.
pub fn snr_map(scan: &ScanMap, channel: MapChannel, factor: usize) -> Result<SnrMap> {
    scan.validate()?;
    if factor < 1 {
        return Err(Error::invalid("interp_factor", "must be >= 1"));
    }
    let (off, on) = match channel {
        MapChannel::Gated => (&scan.off_gated, &scan.on_gated),
        MapChannel::Ungated => (&scan.off_ungated, &scan.on_ungated),
    };
    let mut zero_total = Vec::with_capacity(off.len());
    let raw: Vec<f64> = off
        .iter()
        .zip(on)
        .map(|(&n0, &n1)| {
            let zero = n0 + n1 == 0.0;
            zero_total.push(zero);
            if zero {
                0.0
            } else {
                (n0 - n1) / (n0 + n1).sqrt()
            }
        })
        .collect();
    Ok(SnrMap {
        nx: scan.nx * factor,
        ny: scan.ny * factor,
        factor,
        method: "catmull-rom",
        values: upsample_catmull_rom(&raw, scan.nx, scan.ny, factor),
        zero_total,
    })
}
