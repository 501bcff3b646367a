//! Stage artifact files: writers and the readers used to resume a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::DateTime;
use ndarray::Array2;
use serde::Deserialize;

use crate::ais::calls::month_index;
use crate::ais::{parse_timestamp, PortCall, Voyage};
use crate::climate::FeatureVector;
use crate::clustering::ClusterLabeling;
use crate::error::{Error, Result};
use crate::io::{csv_reader, fmt_f64, parse_f64, ArtifactWriter};
use crate::mobility::{MobilitySnapshot, Timeline};
use crate::registry::PortRegistry;
use crate::risk::ShipmentScore;
use crate::similarity::PortMatrix;

pub const FEATURES: &str = "features.csv";
pub const SCENARIO_FEATURES: &str = "scenario_features.csv";
pub const CLUSTERS: &str = "clusters.csv";
pub const SIMILARITY: &str = "similarity.csv";
pub const KERNEL: &str = "kernel.csv";
pub const DELTA_SIMILARITY: &str = "delta_similarity.csv";
pub const PORT_CALLS: &str = "port_calls.csv";
pub const VOYAGES: &str = "voyages.csv";
pub const INGEST_STATS: &str = "ingest_stats.json";
pub const SNAPSHOTS: &str = "snapshots.csv";
pub const SNAPSHOTS_ROLLING: &str = "snapshots_rolling.csv";
pub const MODEL: &str = "model.json";
pub const FORECAST_SUMMARY: &str = "forecast_summary.json";
pub const PREDICTIONS: &str = "predictions.csv";
pub const EXPOSURE: &str = "exposure.csv";
pub const SHIPMENTS: &str = "shipments.csv";
pub const TRIPLETS: &str = "triplets.csv";
pub const WHAT_IF: &str = "what_if.csv";
pub const EXPOSURE_SERIES: &str = "exposure_series.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const MANIFEST: &str = "manifest.json";

pub fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::IncompleteRun(format!(
            "artifact {} is missing; run the stage that produces it first",
            p.display()
        )))
    }
}

pub fn fmt_time(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .map(|d| d.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

pub fn fmt_month(month_index: i64) -> String {
    format!(
        "{:04}-{:02}",
        month_index.div_euclid(12),
        month_index.rem_euclid(12) + 1
    )
}

pub fn write_features(
    path: &Path,
    stage: &str,
    hash: &str,
    names: &[String],
    f: &[FeatureVector],
) -> Result<()> {
    let mut w = ArtifactWriter::create(path, stage, hash)?;
    w.row(std::iter::once("port_id".to_string()).chain(names.iter().cloned()))?;
    for fv in f {
        w.row(std::iter::once(fv.port_id.clone()).chain(fv.values.iter().map(|&v| fmt_f64(v))))?;
    }
    w.finish()
}

/// Header and `(line, fields)` rows.
type Table = (Vec<String>, Vec<(u64, Vec<String>)>);

fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv_reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec.map_err(|e| Error::from(e).at(path, line))?;
        rows.push((line, rec.iter().map(String::from).collect()));
    }
    Ok((header, rows))
}

pub fn read_features(path: &Path) -> Result<(Vec<String>, Vec<FeatureVector>)> {
    let (header, rows) = read_table(path)?;
    let names = header.into_iter().skip(1).collect::<Vec<_>>();
    let mut out = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        let values = row[1..]
            .iter()
            .map(|s| parse_f64(s))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at(path, line))?;
        if values.len() != names.len() {
            return Err(Error::Dimension {
                expected: names.len(),
                got: values.len(),
            }
            .at(path, line));
        }
        out.push(FeatureVector {
            port_id: row[0].clone(),
            values,
        });
    }
    Ok((names, out))
}

pub fn write_clusters(path: &Path, hash: &str, labels: &ClusterLabeling) -> Result<()> {
    let mut w = ArtifactWriter::create(path, "cluster", hash)?;
    w.row(["port_id", "cluster", "stability"])?;
    for (port, &label) in labels.ports.iter().zip(&labels.labels) {
        let stability = labels.stability_of(label).unwrap_or(0.0);
        w.row([port.clone(), label.to_string(), fmt_f64(stability)])?;
    }
    w.finish()
}

pub fn read_clusters(path: &Path) -> Result<ClusterLabeling> {
    #[derive(Deserialize)]
    struct Row {
        port_id: String,
        cluster: i64,
        stability: String,
    }
    let mut out = ClusterLabeling {
        ports: Vec::new(),
        labels: Vec::new(),
        stabilities: BTreeMap::new(),
    };
    for (k, row) in csv_reader(path)?.deserialize::<Row>().enumerate() {
        let line = k as u64 + 2;
        let row = row.map_err(|e| Error::from(e).at(path, line))?;
        if row.cluster > 0 {
            let s = parse_f64(&row.stability).map_err(|e| e.at(path, line))?;
            out.stabilities.insert(row.cluster, s);
        }
        out.ports.push(row.port_id);
        out.labels.push(row.cluster);
    }
    Ok(out)
}

pub fn write_matrix(path: &Path, stage: &str, hash: &str, m: &PortMatrix) -> Result<()> {
    let mut w = ArtifactWriter::create(path, stage, hash)?;
    w.row(std::iter::once("port_id".to_string()).chain(m.ports.iter().cloned()))?;
    for (i, port) in m.ports.iter().enumerate() {
        w.row(std::iter::once(port.clone()).chain(m.values.row(i).iter().map(|&v| fmt_f64(v))))?;
    }
    w.finish()
}

pub fn read_matrix(path: &Path) -> Result<PortMatrix> {
    let (header, rows) = read_table(path)?;
    let ports: Vec<String> = header.into_iter().skip(1).collect();
    let n = ports.len();
    if rows.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: rows.len(),
        });
    }
    let mut values = Array2::zeros((n, n));
    for (i, (line, row)) in rows.iter().enumerate() {
        if row[0] != ports[i] {
            return Err(
                Error::Alignment(format!("row {} is {}, expected {}", i + 1, row[0], ports[i]))
                    .at(path, *line),
            );
        }
        if row.len() != n + 1 {
            return Err(Error::Dimension {
                expected: n,
                got: row.len() - 1,
            }
            .at(path, *line));
        }
        for (j, cell) in row[1..].iter().enumerate() {
            values[[i, j]] = parse_f64(cell).map_err(|e| e.at(path, *line))?;
        }
    }
    PortMatrix::new(ports, values)
}

pub fn write_calls(path: &Path, hash: &str, calls: &[PortCall]) -> Result<()> {
    let mut w = ArtifactWriter::create(path, "ingest", hash)?;
    w.row(["mmsi", "port_id", "arrival", "departure", "dwell_hours"])?;
    for c in calls {
        w.row([
            c.mmsi.to_string(),
            c.port_id.clone(),
            fmt_time(c.arrival),
            fmt_time(c.departure),
            fmt_f64(c.dwell_hours),
        ])?;
    }
    w.finish()
}

pub fn read_calls(path: &Path) -> Result<Vec<PortCall>> {
    #[derive(Deserialize)]
    struct Row {
        mmsi: u32,
        port_id: String,
        arrival: String,
        departure: String,
    }
    let mut out = Vec::new();
    for (k, row) in csv_reader(path)?.deserialize::<Row>().enumerate() {
        let line = k as u64 + 2;
        let row = row.map_err(|e| Error::from(e).at(path, line))?;
        let a = parse_timestamp(&row.arrival).map_err(|e| e.at(path, line))?;
        let d = parse_timestamp(&row.departure).map_err(|e| e.at(path, line))?;
        out.push(PortCall::new(row.mmsi, row.port_id, a, d));
    }
    Ok(out)
}

pub fn write_voyages(path: &Path, hash: &str, voyages: &[Voyage]) -> Result<()> {
    let mut w = ArtifactWriter::create(path, "ingest", hash)?;
    w.row(["mmsi", "origin", "destination", "depart", "arrive"])?;
    for v in voyages {
        w.row([
            v.mmsi.to_string(),
            v.origin.clone(),
            v.destination.clone(),
            fmt_time(v.depart),
            fmt_time(v.arrive),
        ])?;
    }
    w.finish()
}

pub fn read_voyages(path: &Path) -> Result<Vec<Voyage>> {
    #[derive(Deserialize)]
    struct Row {
        mmsi: u32,
        origin: String,
        destination: String,
        depart: String,
        arrive: String,
    }
    let mut out = Vec::new();
    for (k, row) in csv_reader(path)?.deserialize::<Row>().enumerate() {
        let line = k as u64 + 2;
        let row = row.map_err(|e| Error::from(e).at(path, line))?;
        let parsed = (|| {
            let arrive = parse_timestamp(&row.arrive)?;
            Ok::<_, Error>(Voyage {
                mmsi: row.mmsi,
                origin: row.origin,
                destination: row.destination,
                depart: parse_timestamp(&row.depart)?,
                arrive,
                month_index: month_index(arrive)?,
            })
        })();
        out.push(parsed.map_err(|e| e.at(path, line))?);
    }
    Ok(out)
}

pub fn write_snapshots(path: &Path, hash: &str, timeline: &Timeline) -> Result<()> {
    let mut w = ArtifactWriter::create(path, "graph", hash)?;
    w.row(["month_index", "origin", "destination", "weight"])?;
    for s in &timeline.snapshots {
        for (&(i, j), &weight) in &s.weights {
            w.row([
                s.month_index.to_string(),
                timeline.ports[i].clone(),
                timeline.ports[j].clone(),
                weight.to_string(),
            ])?;
        }
    }
    w.finish()
}

/// The timeline spans the first to last month present in the file.
pub fn read_snapshots(path: &Path, registry: &PortRegistry) -> Result<Timeline> {
    #[derive(Deserialize)]
    struct Row {
        month_index: i64,
        origin: String,
        destination: String,
        weight: u32,
    }
    let ports = Arc::new(registry.ids());
    let mut cells: BTreeMap<i64, BTreeMap<(usize, usize), u32>> = BTreeMap::new();
    for (k, row) in csv_reader(path)?.deserialize::<Row>().enumerate() {
        let line = k as u64 + 2;
        let row = row.map_err(|e| Error::from(e).at(path, line))?;
        let i = registry.index_of(&row.origin).map_err(|e| e.at(path, line))?;
        let j = registry
            .index_of(&row.destination)
            .map_err(|e| e.at(path, line))?;
        cells
            .entry(row.month_index)
            .or_default()
            .insert((i, j), row.weight);
    }
    let (Some(&first), Some(&last)) = (cells.keys().next(), cells.keys().last()) else {
        return Ok(Timeline {
            ports,
            snapshots: Vec::new(),
        });
    };
    let snapshots = (first..=last)
        .map(|m| MobilitySnapshot {
            month_index: m,
            ports: ports.clone(),
            weights: cells.remove(&m).unwrap_or_default(),
        })
        .collect();
    Ok(Timeline { ports, snapshots })
}

pub fn write_predictions(path: &Path, hash: &str, predictions: &BTreeMap<i64, PortMatrix>) -> Result<()> {
    let mut w = ArtifactWriter::create(path, "forecast", hash)?;
    w.row(["month_index", "origin", "destination", "yhat"])?;
    for (month, m) in predictions {
        for ((i, j), &y) in m.values.indexed_iter() {
            if y > 0.0 {
                w.row([
                    month.to_string(),
                    m.ports[i].clone(),
                    m.ports[j].clone(),
                    fmt_f64(y),
                ])?;
            }
        }
    }
    w.finish()
}

pub fn read_predictions(path: &Path, registry: &PortRegistry) -> Result<BTreeMap<i64, PortMatrix>> {
    #[derive(Deserialize)]
    struct Row {
        month_index: i64,
        origin: String,
        destination: String,
        yhat: String,
    }
    let ids = registry.ids();
    let n = ids.len();
    let mut out: BTreeMap<i64, Array2<f64>> = BTreeMap::new();
    for (k, row) in csv_reader(path)?.deserialize::<Row>().enumerate() {
        let line = k as u64 + 2;
        let row = row.map_err(|e| Error::from(e).at(path, line))?;
        let cell = (|| {
            Ok::<_, Error>((
                registry.index_of(&row.origin)?,
                registry.index_of(&row.destination)?,
                parse_f64(&row.yhat)?,
            ))
        })()
        .map_err(|e| e.at(path, line))?;
        out.entry(row.month_index)
            .or_insert_with(|| Array2::zeros((n, n)))[[cell.0, cell.1]] = cell.2;
    }
    out.into_iter()
        .map(|(m, v)| Ok((m, PortMatrix::new(ids.clone(), v)?)))
        .collect()
}

/// One row of `exposure.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureRow {
    pub port_id: String,
    pub month_index: i64,
    pub e1: f64,
    pub e_multi: f64,
}

pub fn write_exposure(path: &Path, hash: &str, rows: &[ExposureRow]) -> Result<()> {
    let mut w = ArtifactWriter::create(path, "risk", hash)?;
    w.row(["port_id", "month_index", "E1", "E_multi"])?;
    for r in rows {
        w.row([
            r.port_id.clone(),
            r.month_index.to_string(),
            fmt_f64(r.e1),
            fmt_f64(r.e_multi),
        ])?;
    }
    w.finish()
}

pub fn read_exposure(path: &Path) -> Result<Vec<ExposureRow>> {
    let (header, rows) = read_table(path)?;
    if header != ["port_id", "month_index", "E1", "E_multi"] {
        return Err(Error::Parse(format!("unexpected exposure header {header:?}")).at(path, 1));
    }
    rows.into_iter()
        .map(|(line, r)| {
            let parsed = (|| {
                Ok::<_, Error>(ExposureRow {
                    port_id: r[0].clone(),
                    month_index: r[1]
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad month {:?}", r[1])))?,
                    e1: parse_f64(&r[2])?,
                    e_multi: parse_f64(&r[3])?,
                })
            })();
            parsed.map_err(|e| e.at(path, line))
        })
        .collect()
}

pub fn write_shipments(path: &Path, hash: &str, scores: &[ShipmentScore]) -> Result<()> {
    let mut w = ArtifactWriter::create(path, "risk", hash)?;
    w.row(["mmsi", "path", "month_index", "voyage_factor", "rho"])?;
    for s in scores {
        w.row([
            s.mmsi.to_string(),
            s.path.join(">"),
            s.month_index.to_string(),
            fmt_f64(s.voyage_factor),
            fmt_f64(s.rho),
        ])?;
    }
    w.finish()
}

pub fn read_shipments(path: &Path) -> Result<Vec<ShipmentScore>> {
    #[derive(Deserialize)]
    struct Row {
        mmsi: u32,
        path: String,
        month_index: i64,
        voyage_factor: String,
        rho: String,
    }
    let mut out = Vec::new();
    for (k, row) in csv_reader(path)?.deserialize::<Row>().enumerate() {
        let line = k as u64 + 2;
        let row = row.map_err(|e| Error::from(e).at(path, line))?;
        let parsed = (|| {
            Ok::<_, Error>(ShipmentScore {
                mmsi: row.mmsi,
                path: row.path.split('>').map(String::from).collect(),
                month_index: row.month_index,
                rho: parse_f64(&row.rho)?,
                voyage_factor: parse_f64(&row.voyage_factor)?,
            })
        })();
        out.push(parsed.map_err(|e| e.at(path, line))?);
    }
    Ok(out)
}
