//! Port-call detection on per-vessel tracks and voyage extraction between
//! consecutive calls.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AisMessage;
use crate::error::{Error, Result};
use crate::registry::{Port, PortRegistry};

const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CallParams {
    pub radius_km: f64,
    pub sog_max_knots: f64,
    pub min_dwell_hours: f64,
    pub gap_split_hours: f64,
}

impl Default for CallParams {
    fn default() -> Self {
        Self {
            radius_km: 10.0,
            sog_max_knots: 1.0,
            min_dwell_hours: 2.0,
            gap_split_hours: 6.0,
        }
    }
}

impl CallParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("radius_km", self.radius_km),
            ("sog_max_knots", self.sog_max_knots),
            ("min_dwell_hours", self.min_dwell_hours),
            ("gap_split_hours", self.gap_split_hours),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortCall {
    pub mmsi: u32,
    pub port_id: String,
    pub arrival: i64,
    pub departure: i64,
    pub dwell_hours: f64,
}

impl PortCall {
    pub fn new(mmsi: u32, port_id: String, arrival: i64, departure: i64) -> Self {
        Self {
            mmsi,
            port_id,
            arrival,
            departure,
            dwell_hours: (departure - arrival) as f64 / 3600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Voyage {
    pub mmsi: u32,
    pub origin: String,
    pub destination: String,
    pub depart: i64,
    pub arrive: i64,
    pub month_index: i64,
}

pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// `year * 12 + month0` of a UTC timestamp.
pub fn month_index(timestamp: i64) -> Result<i64> {
    let dt = DateTime::from_timestamp(timestamp, 0)
        .ok_or_else(|| Error::Range(format!("timestamp {timestamp} not representable")))?;
    Ok(dt.year() as i64 * 12 + dt.month0() as i64)
}

/// Nearest port within `radius_km`, ties broken by `port_id` (registry order).
fn nearest_port(ports: &[Port], lat: f64, lon: f64, radius_km: f64) -> Option<&Port> {
    // one degree of latitude is at least 110.5 km
    let lat_window = radius_km / 110.5;
    let mut best: Option<(&Port, f64)> = None;
    for p in ports {
        if (p.latitude - lat).abs() > lat_window {
            continue;
        }
        let d = haversine_km(lat, lon, p.latitude, p.longitude);
        if d <= radius_km && best.is_none_or(|(_, bd)| d < bd) {
            best = Some((p, d));
        }
    }
    best.map(|(p, _)| p)
}

/// Calls for one vessel. A call is a maximal run of consecutive messages,
/// inside one gap-free segment, that are all slow and within `radius_km` of
/// some port, lasting at least `min_dwell_hours`. The call is assigned to the
/// port nearest the run's middle message.
pub fn detect_port_calls(
    track: &[AisMessage],
    registry: &PortRegistry,
    params: &CallParams,
) -> Result<Vec<PortCall>> {
    params.validate()?;
    let Some(first) = track.first() else {
        return Ok(Vec::new());
    };
    for w in track.windows(2) {
        if w[1].timestamp < w[0].timestamp {
            return Err(Error::Ordering(format!(
                "mmsi {}: timestamp {} follows {}",
                w[0].mmsi, w[1].timestamp, w[0].timestamp
            )));
        }
    }
    if let Some(other) = track.iter().find(|m| m.mmsi != first.mmsi) {
        return Err(Error::DataIntegrity(format!(
            "track mixes mmsi {} and {}",
            first.mmsi, other.mmsi
        )));
    }

    let gap = (params.gap_split_hours * 3600.0) as i64;
    let min_dwell = params.min_dwell_hours * 3600.0;
    let ports = registry.ports();
    let moored: Vec<bool> = track
        .iter()
        .map(|m| {
            m.sog <= params.sog_max_knots && nearest_port(ports, m.lat, m.lon, params.radius_km).is_some()
        })
        .collect();

    let mut calls = Vec::new();
    let close_run = |start: usize, end: usize, calls: &mut Vec<PortCall>| {
        let (a, b) = (&track[start], &track[end]);
        if ((b.timestamp - a.timestamp) as f64) < min_dwell {
            return;
        }
        let mid = &track[start + (end - start) / 2];
        if let Some(port) = nearest_port(ports, mid.lat, mid.lon, params.radius_km) {
            calls.push(PortCall::new(
                a.mmsi,
                port.port_id.clone(),
                a.timestamp,
                b.timestamp,
            ));
        }
    };

    let mut run_start: Option<usize> = None;
    for i in 0..track.len() {
        let split = i > 0 && track[i].timestamp - track[i - 1].timestamp > gap;
        if split {
            if let Some(s) = run_start.take() {
                close_run(s, i - 1, &mut calls);
            }
        }
        match (moored[i], run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                close_run(s, i - 1, &mut calls);
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        close_run(s, track.len() - 1, &mut calls);
    }
    Ok(calls)
}

/// Collapses consecutive calls at the same port into one.
pub fn merge_calls(calls: &[PortCall]) -> Vec<PortCall> {
    let mut merged: Vec<PortCall> = Vec::with_capacity(calls.len());
    for c in calls {
        match merged.last_mut() {
            Some(last) if last.port_id == c.port_id => {
                *last = PortCall::new(last.mmsi, last.port_id.clone(), last.arrival, c.departure);
            }
            _ => merged.push(c.clone()),
        }
    }
    merged
}

fn check_call_chain(calls: &[PortCall]) -> Result<()> {
    for w in calls.windows(2) {
        if w[1].mmsi != w[0].mmsi {
            return Err(Error::DataIntegrity(format!(
                "call list mixes mmsi {} and {}",
                w[0].mmsi, w[1].mmsi
            )));
        }
        if w[1].arrival < w[0].arrival {
            return Err(Error::Ordering(format!(
                "mmsi {}: calls not sorted by arrival",
                w[0].mmsi
            )));
        }
        if w[1].arrival < w[0].departure {
            return Err(Error::DataIntegrity(format!(
                "mmsi {}: call at {} overlaps call at {}",
                w[0].mmsi, w[1].port_id, w[0].port_id
            )));
        }
    }
    Ok(())
}

/// One voyage per consecutive pair of (merged) calls at different ports.
pub fn extract_voyages(calls: &[PortCall]) -> Result<Vec<Voyage>> {
    check_call_chain(calls)?;
    merge_calls(calls)
        .windows(2)
        .map(|w| {
            Ok(Voyage {
                mmsi: w[0].mmsi,
                origin: w[0].port_id.clone(),
                destination: w[1].port_id.clone(),
                depart: w[0].departure,
                arrive: w[1].arrival,
                month_index: month_index(w[1].arrival)?,
            })
        })
        .collect()
}

/// Calls (merged) and voyages for every vessel, in mmsi order.
pub fn build_voyages(
    tracks: &BTreeMap<u32, Vec<AisMessage>>,
    registry: &PortRegistry,
    params: &CallParams,
) -> Result<(Vec<PortCall>, Vec<Voyage>)> {
    let per_vessel = tracks
        .par_iter()
        .map(|(_, track)| {
            let calls = detect_port_calls(track, registry, params)?;
            let voyages = extract_voyages(&calls)?;
            Ok((merge_calls(&calls), voyages))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut calls = Vec::new();
    let mut voyages = Vec::new();
    for (c, v) in per_vessel {
        calls.extend(c);
        voyages.extend(v);
    }
    Ok((calls, voyages))
}
