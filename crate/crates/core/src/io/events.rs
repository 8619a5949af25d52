use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{read_text, write_atomic, TOOLKIT_VERSION};
use crate::acquisition::PhotonEvent;
use crate::error::{Error, ParseErrorKind, Result};
use crate::histogram::Channel;

const MAGIC: &[u8; 8] = b"CGEVT001";
const HEADER: &str = "timestamp_ns,channel";

/// `timestamp_ns,channel` text with a version header.
pub fn write_events_text(path: &Path, events: &[PhotonEvent]) -> Result<()> {
    let mut out = String::with_capacity(32 * events.len() + 64);
    let _ = writeln!(out, "# toolkit_version={TOOLKIT_VERSION}");
    out.push_str(HEADER);
    out.push('\n');
    for e in events {
        let _ = writeln!(out, "{},{}", e.timestamp, e.channel);
    }
    write_atomic(path, out.as_bytes())
}

pub fn parse_events_text(text: &str) -> Result<Vec<PhotonEvent>> {
    let mut events = Vec::new();
    let mut header = false;
    let mut last = f64::NEG_INFINITY;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.starts_with('#') {
            continue;
        }
        if !header {
            if line.trim() != HEADER {
                return Err(Error::parse(lineno, ParseErrorKind::MissingHeader));
            }
            header = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (t, c) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(lineno, ParseErrorKind::Ragged { expected: 2, found: 1 }))?;
        let timestamp: f64 = t
            .trim()
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite() && *t >= 0.0)
            .ok_or_else(|| Error::parse(lineno, ParseErrorKind::Malformed(format!("timestamp `{t}`"))))?;
        if timestamp < last {
            return Err(Error::parse(lineno, ParseErrorKind::Invariant("events not sorted by timestamp".into())));
        }
        last = timestamp;
        let channel = c
            .trim()
            .parse::<Channel>()
            .map_err(|m| Error::parse(lineno, ParseErrorKind::Malformed(m)))?;
        events.push(PhotonEvent { timestamp, channel });
    }
    if !header {
        return Err(Error::parse(text.lines().count() + 1, ParseErrorKind::MissingHeader));
    }
    Ok(events)
}

pub fn read_events_text(path: &Path) -> Result<Vec<PhotonEvent>> {
    parse_events_text(&read_text(path)?)
}

/// Little-endian records: 8-byte magic, u64 count, then (f64 timestamp, u8 channel).
pub fn write_events_binary(path: &Path, events: &[PhotonEvent]) -> Result<()> {
    let mut out = Vec::with_capacity(16 + 9 * events.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(events.len() as u64).to_le_bytes());
    for e in events {
        out.extend_from_slice(&e.timestamp.to_le_bytes());
        out.push(match e.channel {
            Channel::MwOff => 0,
            Channel::MwOn => 1,
        });
    }
    write_atomic(path, &out)
}

pub fn read_events_binary(path: &Path) -> Result<Vec<PhotonEvent>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |what: String| Error::parse(0, ParseErrorKind::Malformed(what));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a binary event file".into()));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != n.saturating_mul(9) {
        return Err(bad(format!("{} payload bytes for {n} events", body.len())));
    }
    body.chunks_exact(9)
        .enumerate()
        .map(|(i, rec)| {
            let timestamp = f64::from_le_bytes(rec[..8].try_into().unwrap());
            let channel = match rec[8] {
                0 => Channel::MwOff,
                1 => Channel::MwOn,
                c => return Err(bad(format!("event {i}: channel byte {c}"))),
            };
            Ok(PhotonEvent { timestamp, channel })
        })
        .collect()
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

/// Binary when the extension is `.bin`, text otherwise.
pub fn write_events(path: &Path, events: &[PhotonEvent]) -> Result<()> {
    if is_binary(path) {
        write_events_binary(path, events)
    } else {
        write_events_text(path, events)
    }
}

pub fn read_events(path: &Path) -> Result<Vec<PhotonEvent>> {
    if is_binary(path) {
        read_events_binary(path)
    } else {
        read_events_text(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<PhotonEvent> {
        vec![
            PhotonEvent {
                timestamp: 0.1,
                channel: Channel::MwOff,
            },
            PhotonEvent {
                timestamp: 1e10 + 1.0 / 3.0,
                channel: Channel::MwOn,
            },
        ]
    }

    #[test]
    fn both_formats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["ev.txt", "ev.bin"] {
            let p = dir.path().join(name);
            write_events(&p, &sample()).unwrap();
            assert_eq!(read_events(&p).unwrap(), sample());
        }
    }

    #[test]
    fn unsorted_text_rejected() {
        let text = "timestamp_ns,channel\n5,mw_on\n4,mw_on\n";
        assert!(matches!(parse_events_text(text), Err(Error::Parse { line: 3, .. })));
    }
}
