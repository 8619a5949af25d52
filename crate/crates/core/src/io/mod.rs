//! File formats and run configuration.
//!
//! Every text format is UTF-8, comma separated, with `# key=value` metadata
//! lines at the top. Writes go to a temporary sibling first and are renamed
//! into place, so readers never observe a half-written file.

mod config;
mod events;
mod histogram_file;
mod report;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use config::{AcquisitionSettings, OdmrSettings, RunConfig};
pub use events::{read_events, read_events_binary, read_events_text, write_events, write_events_binary, write_events_text};
pub use histogram_file::{format_histogram, parse_histogram, read_histogram, write_histogram, HistogramRecord};
pub use report::{
    read_report, scan_from_report, scan_to_report, snr_map_to_report, spectrum_from_report, spectrum_to_report,
    write_report, ColumnarReport,
};

use crate::error::{Error, Result};

/// Version stamped into every report header.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Write `bytes` to `path` atomically (temporary file in the same directory, then rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
