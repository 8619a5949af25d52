use std::fmt::{Display, Write as _};
use std::path::Path;
use std::str::FromStr;

use super::{read_text, write_atomic};
use crate::decay::bins_per_period;
use crate::error::{Error, ParseErrorKind, Result};
use crate::histogram::{Channel, Count, TcspcHistogram};

const HEADER: &str = "bin_start_ns,counts";

/// A histogram file: the histogram plus the MW frequency it was taken at, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramRecord<T> {
    pub histogram: TcspcHistogram<T>,
    pub mw_freq_hz: Option<f64>,
}

/// Bin contents that can live in a histogram file.
pub trait CountValue: Count + Display + FromStr {
    fn is_valid(&self) -> bool;
}

impl CountValue for u64 {
    fn is_valid(&self) -> bool {
        true
    }
}

impl CountValue for f64 {
    fn is_valid(&self) -> bool {
        self.is_finite() && *self >= 0.0
    }
}

pub fn format_histogram<T: CountValue>(h: &TcspcHistogram<T>, mw_freq_hz: Option<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# bin_width_ns={}", h.bin_width);
    let _ = writeln!(out, "# rep_rate_hz={}", h.rep_rate);
    let _ = writeln!(out, "# integration_s={}", h.integration_time);
    let _ = writeln!(out, "# channel={}", h.channel);
    if let Some(f) = mw_freq_hz {
        let _ = writeln!(out, "# mw_freq_hz={f}");
    }
    out.push_str(HEADER);
    out.push('\n');
    for (b, c) in h.counts.iter().enumerate() {
        let _ = writeln!(out, "{},{}", h.bin_start(b), c);
    }
    out
}

pub fn write_histogram<T: CountValue>(path: &Path, h: &TcspcHistogram<T>, mw_freq_hz: Option<f64>) -> Result<()> {
    write_atomic(path, format_histogram(h, mw_freq_hz).as_bytes())
}

pub fn read_histogram<T: CountValue>(path: &Path) -> Result<HistogramRecord<T>> {
    parse_histogram(&read_text(path)?)
}

fn bad_meta(line: usize, key: &str, value: &str) -> Error {
    Error::parse(
        line,
        ParseErrorKind::BadMetadata {
            key: key.into(),
            value: value.into(),
        },
    )
}

pub fn parse_histogram<T: CountValue>(text: &str) -> Result<HistogramRecord<T>> {
    let mut bin_width = None;
    let mut rep_rate = None;
    let mut integration = None;
    let mut channel = None;
    let mut mw_freq = None;
    let mut counts: Vec<T> = Vec::new();
    let mut header_line = None;
    let mut last_start = f64::NEG_INFINITY;

    let positive = |line: usize, key: &str, v: &str| -> Result<f64> {
        match v.trim().parse::<f64>() {
            Ok(x) if x.is_finite() && x > 0.0 => Ok(x),
            _ => Err(bad_meta(line, key, v)),
        }
    };

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .trim_start()
                .split_once('=')
                .ok_or_else(|| Error::parse(lineno, ParseErrorKind::Malformed(format!("`{line}`"))))?;
            match k.trim() {
                "bin_width_ns" => bin_width = Some(positive(lineno, k, v)?),
                "rep_rate_hz" => rep_rate = Some(positive(lineno, k, v)?),
                "integration_s" => {
                    integration = Some(match v.trim().parse::<f64>() {
                        Ok(x) if x.is_finite() && x >= 0.0 => x,
                        _ => return Err(bad_meta(lineno, k, v)),
                    })
                }
                "channel" => channel = Some(v.trim().parse::<Channel>().map_err(|_| bad_meta(lineno, k, v))?),
                "mw_freq_hz" => mw_freq = Some(positive(lineno, k, v)?),
                // Extra provenance (e.g. toolkit_version, seed) is tolerated.
                _ => {}
            }
            continue;
        }
        if header_line.is_none() {
            if line.trim() != HEADER {
                return Err(Error::parse(lineno, ParseErrorKind::MissingHeader));
            }
            header_line = Some(lineno);
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let width = bin_width.ok_or(Error::parse(lineno, ParseErrorKind::MissingMetadata("bin_width_ns")))?;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                lineno,
                ParseErrorKind::Ragged {
                    expected: 2,
                    found: fields.len(),
                },
            ));
        }
        let start: f64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(lineno, ParseErrorKind::Malformed(format!("bin start `{}`", fields[0]))))?;
        if !(start > last_start) {
            return Err(Error::parse(lineno, ParseErrorKind::NonMonotoneBins));
        }
        last_start = start;
        let expected = counts.len() as f64 * width;
        if (start - expected).abs() > 1e-9 * width.max(expected) {
            return Err(Error::parse(lineno, ParseErrorKind::MisplacedBin));
        }
        let raw = fields[1];
        if raw.starts_with('-') || raw.starts_with('\u{2212}') {
            return Err(Error::parse(lineno, ParseErrorKind::NegativeCount(raw.into())));
        }
        let c: T = raw
            .parse()
            .ok()
            .filter(CountValue::is_valid)
            .ok_or_else(|| Error::parse(lineno, ParseErrorKind::Malformed(format!("count `{raw}`"))))?;
        counts.push(c);
    }

    let end = text.lines().count() + 1;
    let missing = |key| Error::parse(end, ParseErrorKind::MissingMetadata(key));
    let bin_width = bin_width.ok_or(missing("bin_width_ns"))?;
    let rep_rate = rep_rate.ok_or(missing("rep_rate_hz"))?;
    let integration_time = integration.ok_or(missing("integration_s"))?;
    let channel = channel.ok_or(missing("channel"))?;
    if header_line.is_none() {
        return Err(Error::parse(end, ParseErrorKind::MissingHeader));
    }
    let period = 1e9 / rep_rate;
    let n = bins_per_period(bin_width, period)
        .map_err(|e| Error::parse(end, ParseErrorKind::Invariant(e.to_string())))?;
    if counts.len() != n {
        return Err(Error::parse(
            end,
            ParseErrorKind::Invariant(format!("{} bins, but {period} ns / {bin_width} ns = {n}", counts.len())),
        ));
    }
    Ok(HistogramRecord {
        histogram: TcspcHistogram {
            bin_width,
            counts,
            channel,
            integration_time,
            rep_rate,
        },
        mw_freq_hz: mw_freq,
    })
}
