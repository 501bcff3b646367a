//! Position report extraction from assembled payload bits (ITU-R M.1371
//! message types 1, 2, 3 and 18).

use serde::{Deserialize, Serialize};

use super::nmea::PayloadBits;
use super::AisMessage;
use crate::error::{Error, Result};

pub const LAT_UNAVAILABLE: i32 = 91 * 600_000;
pub const LON_UNAVAILABLE: i32 = 181 * 600_000;
pub const SOG_UNAVAILABLE: u32 = 1023;
pub const COG_UNAVAILABLE: u32 = 3600;

const POSITION_REPORT_BITS: usize = 168;

/// Position fields as transmitted, before scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionReport {
    pub msg_type: u8,
    pub mmsi: u32,
    pub lat_raw: i32,
    pub lon_raw: i32,
    pub sog_raw: u32,
    pub cog_raw: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoded {
    Position(PositionReport),
    Skip { msg_type: u8 },
}

pub fn decode_position_report(bits: &PayloadBits) -> Result<Decoded> {
    if bits.len() < 6 {
        return Err(Error::Parse("payload shorter than the message type field".into()));
    }
    let msg_type = bits.uint(0, 6)? as u8;
    // (sog, lon, lat, cog) bit offsets
    let layout = match msg_type {
        1..=3 => (50, 61, 89, 116),
        18 => (46, 57, 85, 112),
        _ => return Ok(Decoded::Skip { msg_type }),
    };
    if bits.len() < POSITION_REPORT_BITS {
        return Err(Error::Parse(format!(
            "type {msg_type} report has {} bits, needs {POSITION_REPORT_BITS}",
            bits.len()
        )));
    }
    let (sog_at, lon_at, lat_at, cog_at) = layout;
    Ok(Decoded::Position(PositionReport {
        msg_type,
        mmsi: bits.uint(8, 30)?,
        sog_raw: bits.uint(sog_at, 10)?,
        lon_raw: bits.int(lon_at, 28)?,
        lat_raw: bits.int(lat_at, 27)?,
        cog_raw: bits.uint(cog_at, 12)?,
    }))
}

impl PositionReport {
    pub fn latitude(&self) -> f64 {
        self.lat_raw as f64 / 600_000.0
    }

    pub fn longitude(&self) -> f64 {
        self.lon_raw as f64 / 600_000.0
    }

    pub fn sog_knots(&self) -> f64 {
        self.sog_raw as f64 / 10.0
    }

    pub fn cog_degrees(&self) -> Option<f64> {
        (self.cog_raw < COG_UNAVAILABLE).then(|| self.cog_raw as f64 / 10.0)
    }

    /// True when any of position or speed carries its "not available" value.
    pub fn has_sentinel(&self) -> bool {
        self.lat_raw == LAT_UNAVAILABLE || self.lon_raw == LON_UNAVAILABLE || self.sog_raw == SOG_UNAVAILABLE
    }

    /// Scaled message, or `None` for sentinel or out-of-range positions.
    pub fn to_message(&self, timestamp: i64) -> Option<AisMessage> {
        if self.has_sentinel() {
            return None;
        }
        let msg = AisMessage {
            mmsi: self.mmsi,
            timestamp,
            lat: self.latitude(),
            lon: self.longitude(),
            sog: self.sog_knots(),
            cog: self.cog_degrees(),
        };
        msg.validate().ok().map(|_| msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ais::nmea::{dearmor, decode_nmea_line};

    #[test]
    fn decodes_public_sample() {
        let f = decode_nmea_line("!AIVDM,1,1,,B,177KQJ5000G?tO`K>RA1wUbN0TKH,0*5C").unwrap();
        let Decoded::Position(r) = decode_position_report(&f.bits).unwrap() else {
            panic!("expected a position report");
        };
        assert_eq!(r.mmsi, 477553000);
        assert_eq!(r.cog_raw, 510);
        assert!((r.latitude() - 47.582833).abs() < 1e-4);
        assert!((r.longitude() + 122.345833).abs() < 1e-4);
    }

    #[test]
    fn truncated_type_1_is_parse_error() {
        let mut bits = dearmor("177KQJ5000G?tO`K>RA1wUbN0TKH").unwrap();
        bits.truncate(167);
        assert!(matches!(
            decode_position_report(&PayloadBits::from_bits(bits)),
            Err(Error::Parse(_))
        ));
        assert!(decode_position_report(&PayloadBits::from_bits(vec![true; 4])).is_err());
    }

    #[test]
    fn base_station_report_is_skipped() {
        let f = decode_nmea_line("!AIVDM,1,1,,A,4030ohAvQ1:00KMDO0IQC@000000,0*6D").unwrap();
        assert_eq!(
            decode_position_report(&f.bits).unwrap(),
            Decoded::Skip { msg_type: 4 }
        );
    }

    #[test]
    fn sentinels_are_dropped() {
        let r = PositionReport {
            msg_type: 1,
            mmsi: 1,
            lat_raw: LAT_UNAVAILABLE,
            lon_raw: 0,
            sog_raw: 0,
            cog_raw: 0,
        };
        assert!(r.to_message(0).is_none());
        let r = PositionReport {
            lat_raw: 0,
            sog_raw: SOG_UNAVAILABLE,
            ..r
        };
        assert!(r.to_message(0).is_none());
        let r = PositionReport {
            sog_raw: 5,
            cog_raw: COG_UNAVAILABLE,
            ..r
        };
        assert_eq!(r.to_message(0).unwrap().cog, None);
    }
}
