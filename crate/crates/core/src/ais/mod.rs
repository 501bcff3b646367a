//! AIS ingestion: raw NMEA or pre-decoded CSV into per-vessel tracks, then
//! port calls and voyages.

pub mod calls;
pub mod decode;
pub mod nmea;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::csv_reader;

pub use calls::{detect_port_calls, extract_voyages, CallParams, PortCall, Voyage};
pub use decode::{decode_position_report, Decoded, PositionReport};
pub use nmea::{decode_nmea_line, Fragment, PayloadBits, Reassembler};

/// One kinematic observation of a vessel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AisMessage {
    pub mmsi: u32,
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
    pub sog: f64,
    /// `None` when the course is reported as unavailable.
    pub cog: Option<f64>,
}

impl AisMessage {
    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..180.0).contains(&self.lon) {
            return Err(Error::Domain(format!(
                "position ({}, {}) out of range",
                self.lat, self.lon
            )));
        }
        if !(0.0..102.3).contains(&self.sog) {
            return Err(Error::Domain(format!("sog {} out of range", self.sog)));
        }
        if let Some(c) = self.cog {
            if !(0.0..360.0).contains(&c) {
                return Err(Error::Domain(format!("cog {c} out of range")));
            }
        }
        Ok(())
    }

    fn sort_key(&self) -> (i64, u64, u64, u64, u64) {
        (
            self.timestamp,
            self.lat.to_bits(),
            self.lon.to_bits(),
            self.sog.to_bits(),
            self.cog.map_or(u64::MAX, f64::to_bits),
        )
    }
}

/// Counters kept while reading an input stream.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines: u64,
    pub positions: u64,
    pub checksum_errors: u64,
    pub parse_errors: u64,
    pub unsupported: u64,
    pub skipped_types: u64,
    pub sentinel_dropped: u64,
    pub untimed: u64,
    pub incomplete_fragments: u64,
}

impl IngestStats {
    pub fn skipped(&self) -> u64 {
        self.checksum_errors
            + self.parse_errors
            + self.unsupported
            + self.skipped_types
            + self.sentinel_dropped
            + self.untimed
            + self.incomplete_fragments
    }
}

/// Decodes NMEA lines into timed position messages. Bad lines are counted,
/// not fatal.
pub fn read_nmea_lines<I, S>(lines: I) -> (Vec<AisMessage>, IngestStats)
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut stats = IngestStats::default();
    let mut reassembler = Reassembler::new();
    let mut out = Vec::new();
    for line in lines {
        let line = line.as_ref().trim();
        if line.is_empty() {
            continue;
        }
        stats.lines += 1;
        let assembled = match decode_nmea_line(line).and_then(|f| reassembler.push(f)) {
            Ok(Some(a)) => a,
            Ok(None) => continue,
            Err(Error::Checksum { .. }) => {
                stats.checksum_errors += 1;
                continue;
            }
            Err(Error::UnsupportedSentence(_)) => {
                stats.unsupported += 1;
                continue;
            }
            Err(e) => {
                log::debug!("skipping line {}: {e}", stats.lines);
                stats.parse_errors += 1;
                continue;
            }
        };
        match decode_position_report(&assembled.bits) {
            Ok(Decoded::Position(report)) => {
                let Some(ts) = assembled.timestamp else {
                    stats.untimed += 1;
                    continue;
                };
                match report.to_message(ts) {
                    Some(m) => {
                        stats.positions += 1;
                        out.push(m);
                    }
                    None => stats.sentinel_dropped += 1,
                }
            }
            Ok(Decoded::Skip { .. }) => stats.skipped_types += 1,
            Err(_) => stats.parse_errors += 1,
        }
    }
    stats.incomplete_fragments = reassembler.dropped();
    (out, stats)
}

pub fn read_nmea(path: &Path) -> Result<(Vec<AisMessage>, IngestStats)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<String>>>()
        .map_err(|e| Error::io(path, e))?;
    Ok(read_nmea_lines(lines))
}

/// Epoch seconds, RFC 3339, or a naive `YYYY-MM-DD[T ]HH:MM:SS` taken as UTC.
pub fn parse_timestamp(s: &str) -> Result<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Ok(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt.and_utc().timestamp());
        }
    }
    Err(Error::Parse(format!("unrecognized timestamp {s:?}")))
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    mmsi: u32,
    timestamp: String,
    lat: f64,
    lon: f64,
    sog: f64,
    cog: Option<f64>,
}

/// Reads `mmsi,timestamp,lat,lon,sog,cog`. Unavailable sentinels
/// (lat 91, lon 181, sog 102.3) are dropped and counted; anything else out
/// of range is an error.
pub fn read_decoded_csv(path: &Path) -> Result<(Vec<AisMessage>, IngestStats)> {
    let mut rdr = csv_reader(path)?;
    let mut stats = IngestStats::default();
    let mut out = Vec::new();
    for (row, rec) in rdr.deserialize::<CsvRow>().enumerate() {
        let line = row as u64 + 2;
        stats.lines += 1;
        let rec = rec.map_err(|e| Error::from(e).at(path, line))?;
        if rec.lat == 91.0 || rec.lon == 181.0 || rec.sog == 102.3 {
            stats.sentinel_dropped += 1;
            continue;
        }
        let msg = AisMessage {
            mmsi: rec.mmsi,
            timestamp: parse_timestamp(&rec.timestamp).map_err(|e| e.at(path, line))?,
            lat: rec.lat,
            lon: rec.lon,
            sog: rec.sog,
            cog: rec.cog.filter(|c| *c != 360.0),
        };
        msg.validate().map_err(|e| e.at(path, line))?;
        stats.positions += 1;
        out.push(msg);
    }
    Ok((out, stats))
}

/// Groups messages per vessel, each track in a total deterministic order.
pub fn group_tracks(messages: Vec<AisMessage>) -> BTreeMap<u32, Vec<AisMessage>> {
    let mut tracks: BTreeMap<u32, Vec<AisMessage>> = BTreeMap::new();
    for m in messages {
        tracks.entry(m.mmsi).or_default().push(m);
    }
    for track in tracks.values_mut() {
        track.sort_by_key(AisMessage::sort_key);
    }
    tracks
}
