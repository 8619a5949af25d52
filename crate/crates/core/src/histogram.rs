use std::fmt;
use std::str::FromStr;

use crate::decay::GateWindow;
use crate::error::{Error, Result};

/// Microwave channel a photon or histogram belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    MwOff,
    MwOn,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::MwOff => "mw_off",
            Channel::MwOn => "mw_on",
        })
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mw_off" => Ok(Channel::MwOff),
            "mw_on" => Ok(Channel::MwOn),
            other => Err(format!("unknown channel `{other}`")),
        }
    }
}

/// Photon arrival-time histogram over one laser period.
///
/// `T` is `f64` for expectations and `u64` for measured or sampled counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TcspcHistogram<T> {
    /// ns
    pub bin_width: f64,
    pub counts: Vec<T>,
    pub channel: Channel,
    /// s
    pub integration_time: f64,
    /// Hz
    pub rep_rate: f64,
}

impl<T> TcspcHistogram<T> {
    pub fn period(&self) -> f64 {
        1e9 / self.rep_rate
    }

    pub fn bin_start(&self, b: usize) -> f64 {
        b as f64 * self.bin_width
    }

    /// Bin index range `[first, last)` covered exactly by `gate`.
    ///
    /// Gates must start and end on bin boundaries; an end at or beyond the
    /// period (including an unbounded end) selects through the last bin.
    pub fn gate_bins(&self, gate: GateWindow) -> Result<(usize, usize)> {
        let n = self.counts.len();
        let misaligned = || Error::MisalignedGate {
            t_start: gate.t_start,
            t_end: gate.t_end,
            bin_width: self.bin_width,
        };
        let to_index = |t: f64| -> Option<usize> {
            let x = t / self.bin_width;
            let r = x.round();
            ((x - r).abs() <= 1e-9 * x.abs().max(1.0)).then_some(r as usize)
        };
        let first = to_index(gate.t_start).ok_or_else(misaligned)?;
        let period = self.period();
        let last = if gate.t_end >= period * (1.0 - 1e-12) {
            n
        } else {
            to_index(gate.t_end).ok_or_else(misaligned)?
        };
        if first >= last || first >= n {
            return Err(misaligned());
        }
        Ok((first, last.min(n)))
    }
}

/// A bin content that can be summed as a real number.
pub trait Count: Copy {
    fn as_f64(self) -> f64;
}

impl Count for u64 {
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Count for f64 {
    fn as_f64(self) -> f64 {
        self
    }
}

impl<T: Count> TcspcHistogram<T> {
    pub fn total(&self) -> f64 {
        self.counts.iter().map(|&c| c.as_f64()).sum()
    }

    /// Sum of whole bins lying inside `gate`.
    pub fn gated_total(&self, gate: GateWindow) -> Result<f64> {
        let (a, b) = self.gate_bins(gate)?;
        Ok(self.counts[a..b].iter().map(|&c| c.as_f64()).sum())
    }
}

impl TcspcHistogram<u64> {
    /// Integer sum of whole bins inside `gate`.
    pub fn gated_count(&self, gate: GateWindow) -> Result<u64> {
        let (a, b) = self.gate_bins(gate)?;
        Ok(self.counts[a..b].iter().sum())
    }
}
