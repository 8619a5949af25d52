use std::path::PathBuf;

use crate::odmr::LorentzianDoublet;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong inside the toolkit.
///
/// Errors fall into two families that the command-line front end maps to
/// distinct exit codes: validation failures (bad parameters, malformed files)
/// and numeric failures (a fit that did not converge, a degenerate spectrum).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature requires finite window")]
    UnboundedQuadrature,

    #[error("gate exceeds pulse period ({gate} ns >= {period} ns)")]
    GateExceedsPeriod { gate: f64, period: f64 },

    #[error("bin width {bin_width} ns does not divide period {period} ns")]
    NonCommensurateBins { bin_width: f64, period: f64 },

    #[error("undefined contrast: reference channel has zero counts")]
    UndefinedContrast,

    #[error("undefined snr: both channels have zero counts")]
    UndefinedSnr,

    #[error("non-positive ODMR dip (R0 = {r0}, R1 = {r1})")]
    NonPositiveDip { r0: f64, r1: f64 },

    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),

    #[error("gate [{t_start}, {t_end}) ns is not aligned to {bin_width} ns bins")]
    MisalignedGate { t_start: f64, t_end: f64, bin_width: f64 },

    #[error("histograms disagree: {0}")]
    IncompatibleHistograms(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(&'static str),

    #[error("fit did not converge after {iterations} iterations (cost {cost:e})")]
    NonConvergence {
        iterations: usize,
        cost: f64,
        last: Box<LorentzianDoublet>,
    },

    #[error("line {line}: {kind}")]
    Parse { line: usize, kind: ParseErrorKind },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// The specific reason a data file was rejected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("missing metadata key `{0}`")]
    MissingMetadata(&'static str),
    #[error("bad metadata value for `{key}`: `{value}`")]
    BadMetadata { key: String, value: String },
    #[error("bin start not increasing")]
    NonMonotoneBins,
    #[error("bin start does not match bin index times bin width")]
    MisplacedBin,
    #[error("negative count `{0}`")]
    NegativeCount(String),
    #[error("malformed row: {0}")]
    Malformed(String),
    #[error("row has {found} fields, expected {expected}")]
    Ragged { expected: usize, found: usize },
    #[error("missing column header")]
    MissingHeader,
    #[error("{0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(line: usize, kind: ParseErrorKind) -> Self {
        Error::Parse { line, kind }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::DegenerateSpectrum(_)
        )
    }
}

/// Reject non-finite or out-of-range scalars with a named error.
pub(crate) fn check(name: &'static str, ok: bool, value: f64, what: &str) -> Result<()> {
    if ok && !value.is_nan() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{value} {what}")))
    }
}
