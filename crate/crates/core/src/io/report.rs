use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_atomic, TOOLKIT_VERSION};
use crate::decay::GateWindow;
use crate::error::{Error, ParseErrorKind, Result};
use crate::odmr::{OdmrSpectrum, ScanMap, SnrMap};

/// Named float columns with ordered `key=value` metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColumnarReport {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ColumnarReport {
    /// A report stamped with the toolkit version and, if given, the seed.
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>, seed: Option<u64>) -> Self {
        let mut r = Self {
            columns: columns.into_iter().map(Into::into).collect(),
            ..Default::default()
        };
        r.set_meta("toolkit_version", TOOLKIT_VERSION);
        if let Some(seed) = seed {
            r.set_meta("seed", seed);
        }
        r
    }

    /// Insert or replace a metadata entry, keeping first-insertion order.
    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.metadata.push((key.to_string(), value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Parse a numeric metadata value.
    pub fn meta_f64(&self, key: &'static str) -> Result<f64> {
        let v = self
            .meta(key)
            .ok_or(Error::parse(0, ParseErrorKind::MissingMetadata(key)))?;
        v.parse().map_err(|_| {
            Error::parse(
                0,
                ParseErrorKind::BadMetadata {
                    key: key.into(),
                    value: v.into(),
                },
            )
        })
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Build from equal-length named columns.
    pub fn from_columns(cols: &[(&str, &[f64])], seed: Option<u64>) -> Result<Self> {
        let mut r = Self::new(cols.iter().map(|(n, _)| *n), seed);
        let n = cols.first().map_or(0, |(_, v)| v.len());
        if let Some((name, v)) = cols.iter().find(|(_, v)| v.len() != n) {
            return Err(Error::ShapeMismatch(format!("column `{name}` has {} rows, expected {n}", v.len())));
        }
        r.rows = (0..n).map(|i| cols.iter().map(|(_, v)| v[i]).collect()).collect();
        Ok(r)
    }

    fn check_rectangular(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} values for {} columns",
                    row.len(),
                    self.columns.len()
                )));
            }
        }
        Ok(())
    }

    /// Serialize; floats carry 17 significant digits.
    pub fn to_text(&self) -> Result<String> {
        self.check_rectangular()?;
        let mut out = String::new();
        for (k, v) in &self.metadata {
            if k.contains('=') || k.contains('\n') || v.contains('\n') {
                return Err(Error::invalid("metadata", format!("entry `{k}` cannot be serialized")));
            }
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:.16e}");
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Self::default();
        let mut header_seen = false;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            if let Some(rest) = line.strip_prefix('#') {
                if header_seen {
                    return Err(Error::parse(lineno, ParseErrorKind::Malformed("metadata after header".into())));
                }
                let rest = rest.trim_start();
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| Error::parse(lineno, ParseErrorKind::Malformed(format!("`{line}`"))))?;
                r.metadata.push((k.trim().to_string(), v.to_string()));
                continue;
            }
            if !header_seen {
                header_seen = true;
                r.columns = if line.is_empty() {
                    Vec::new()
                } else {
                    line.split(',').map(|s| s.trim().to_string()).collect()
                };
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(lineno, ParseErrorKind::Malformed(format!("`{s}` is not a number"))))
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != r.columns.len() {
                return Err(Error::parse(
                    lineno,
                    ParseErrorKind::Ragged {
                        expected: r.columns.len(),
                        found: row.len(),
                    },
                ));
            }
            r.rows.push(row);
        }
        if !header_seen {
            return Err(Error::parse(text.lines().count() + 1, ParseErrorKind::MissingHeader));
        }
        Ok(r)
    }
}

pub fn write_report(path: &Path, report: &ColumnarReport) -> Result<()> {
    write_atomic(path, report.to_text()?.as_bytes())
}

pub fn read_report(path: &Path) -> Result<ColumnarReport> {
    ColumnarReport::parse(&read_text(path)?)
}

// --- typed views -------------------------------------------------------------------

pub fn spectrum_to_report(s: &OdmrSpectrum, seed: Option<u64>) -> Result<ColumnarReport> {
    let mut r = ColumnarReport::from_columns(&[("freq_hz", &s.freqs), ("counts", &s.counts)], seed)?;
    r.set_meta("integration_s", s.integration_per_point);
    if let Some(g) = s.gate {
        r.set_meta("gate_start_ns", g.t_start);
        r.set_meta("gate_end_ns", g.t_end);
    }
    Ok(r)
}

fn required_column(r: &ColumnarReport, name: &'static str) -> Result<Vec<f64>> {
    r.column(name)
        .ok_or_else(|| Error::parse(0, ParseErrorKind::Invariant(format!("missing column `{name}`"))))
}

pub fn spectrum_from_report(r: &ColumnarReport) -> Result<OdmrSpectrum> {
    let gate = match (r.meta("gate_start_ns"), r.meta("gate_end_ns")) {
        (Some(_), Some(_)) => Some(GateWindow::new(r.meta_f64("gate_start_ns")?, r.meta_f64("gate_end_ns")?)?),
        _ => None,
    };
    let integration = if r.meta("integration_s").is_some() { r.meta_f64("integration_s")? } else { 0.0 };
    OdmrSpectrum::new(required_column(r, "freq_hz")?, required_column(r, "counts")?, integration, gate)
}

const SCAN_COLUMNS: [&str; 6] = ["x", "y", "off_gated", "on_gated", "off_ungated", "on_ungated"];

pub fn scan_to_report(scan: &ScanMap, seed: Option<u64>) -> Result<ColumnarReport> {
    scan.validate()?;
    let mut r = ColumnarReport::new(SCAN_COLUMNS, seed);
    r.set_meta("nx", scan.nx);
    r.set_meta("ny", scan.ny);
    r.set_meta("pitch_um", scan.pitch);
    r.set_meta("dwell_s", scan.dwell);
    for y in 0..scan.ny {
        for x in 0..scan.nx {
            let i = y * scan.nx + x;
            r.push_row(vec![
                x as f64,
                y as f64,
                scan.off_gated[i],
                scan.on_gated[i],
                scan.off_ungated[i],
                scan.on_ungated[i],
            ]);
        }
    }
    Ok(r)
}

pub fn scan_from_report(r: &ColumnarReport) -> Result<ScanMap> {
    let dim = |key: &'static str| -> Result<usize> {
        let v = r.meta_f64(key)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::parse(
                0,
                ParseErrorKind::BadMetadata {
                    key: key.into(),
                    value: v.to_string(),
                },
            ));
        }
        Ok(v as usize)
    };
    let (nx, ny) = (dim("nx")?, dim("ny")?);
    if r.rows.len() != nx * ny {
        return Err(Error::ShapeMismatch(format!("{} rows for a {nx}×{ny} scan", r.rows.len())));
    }
    let mut planes: [Vec<f64>; 4] = Default::default();
    for (k, name) in SCAN_COLUMNS[2..].iter().enumerate() {
        planes[k] = vec![0.0; nx * ny];
        let col = required_column(r, name)?;
        let xs = required_column(r, "x")?;
        let ys = required_column(r, "y")?;
        for ((v, x), y) in col.iter().zip(&xs).zip(&ys) {
            let (x, y) = (*x as usize, *y as usize);
            if x >= nx || y >= ny {
                return Err(Error::ShapeMismatch(format!("pixel ({x}, {y}) outside {nx}×{ny}")));
            }
            planes[k][y * nx + x] = *v;
        }
    }
    let [off_gated, on_gated, off_ungated, on_ungated] = planes;
    let scan = ScanMap {
        nx,
        ny,
        pitch: r.meta_f64("pitch_um")?,
        dwell: r.meta_f64("dwell_s")?,
        off_gated,
        on_gated,
        off_ungated,
        on_ungated,
    };
    scan.validate()?;
    Ok(scan)
}

pub fn snr_map_to_report(map: &SnrMap, seed: Option<u64>) -> ColumnarReport {
    let mut r = ColumnarReport::new(["x", "y", "snr"], seed);
    r.set_meta("nx", map.nx);
    r.set_meta("ny", map.ny);
    r.set_meta("interp_factor", map.factor);
    r.set_meta("method", map.method);
    r.set_meta("zero_total_pixels", map.zero_total.iter().filter(|&&z| z).count());
    for y in 0..map.ny {
        for x in 0..map.nx {
            r.push_row(vec![x as f64 / map.factor as f64, y as f64 / map.factor as f64, map.at(x, y)]);
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut r = ColumnarReport::new(["a", "b"], Some(7));
        r.push_row(vec![0.1, 1.0 / 3.0]);
        r.push_row(vec![-2.5e-300, f64::INFINITY]);
        r.set_meta("optimal_tau_c_ns", 9.2);
        let text = r.to_text().unwrap();
        let back = ColumnarReport::parse(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.meta("seed"), Some("7"));
        assert_eq!(back.to_text().unwrap(), text);
    }

    #[test]
    fn empty_rows_are_valid() {
        let r = ColumnarReport::new(["tau_c_ns", "snr"], None);
        let back = ColumnarReport::parse(&r.to_text().unwrap()).unwrap();
        assert!(back.rows.is_empty());
        assert_eq!(back.columns, ["tau_c_ns", "snr"]);
    }

    #[test]
    fn ragged_rows_rejected() {
        let mut r = ColumnarReport::new(["a", "b"], None);
        r.push_row(vec![1.0]);
        assert!(matches!(r.to_text(), Err(Error::ShapeMismatch(_))));
        let err = ColumnarReport::parse("a,b\n1,2\n3\n").unwrap_err();
        assert!(matches!(
            err,
            Error::Parse {
                line: 3,
                kind: ParseErrorKind::Ragged { expected: 2, found: 1 }
            }
        ));
    }

    #[test]
    fn spectrum_view_round_trip() {
        let s = OdmrSpectrum::new(vec![1.0, 2.0], vec![10.0, 9.0], 0.5, Some(GateWindow::new(6.0, 50.0).unwrap()))
            .unwrap();
        let back = spectrum_from_report(&ColumnarReport::parse(&spectrum_to_report(&s, None).unwrap().to_text().unwrap()).unwrap())
            .unwrap();
        assert_eq!(back, s);
    }
}
