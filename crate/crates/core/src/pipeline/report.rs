//! Machine-readable and text run reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::artifacts::{fmt_month, ExposureRow};
use super::{ForecastSummary, KernelSimilarity, PipelineConfig};
use crate::ais::IngestStats;
use crate::clustering::{ClusterLabeling, NOISE};
use crate::error::{Error, Result};
use crate::io::{csv_reader, fmt_f64, parse_f64, ArtifactWriter};
use crate::risk::{RankedTriplet, ShipmentScore, TripletKind};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct WhatIfRow {
    pub scenario: String,
    pub port_id: String,
    pub month_index: i64,
    pub e1: f64,
    pub e_multi: f64,
    pub e1_base: f64,
    pub e_multi_base: f64,
}

pub fn write_what_if(path: &Path, hash: &str, rows: &[WhatIfRow]) -> Result<()> {
    let mut w = ArtifactWriter::create(path, "risk", hash)?;
    w.row([
        "scenario",
        "port_id",
        "month_index",
        "E1",
        "E_multi",
        "E1_base",
        "E_multi_base",
    ])?;
    for r in rows {
        w.row([
            r.scenario.clone(),
            r.port_id.clone(),
            r.month_index.to_string(),
            fmt_f64(r.e1),
            fmt_f64(r.e_multi),
            fmt_f64(r.e1_base),
            fmt_f64(r.e_multi_base),
        ])?;
    }
    w.finish()
}

pub fn read_what_if(path: &Path) -> Result<Vec<WhatIfRow>> {
    #[derive(Deserialize)]
    struct Row {
        scenario: String,
        port_id: String,
        month_index: i64,
        #[serde(rename = "E1")]
        e1: String,
        #[serde(rename = "E_multi")]
        e_multi: String,
        #[serde(rename = "E1_base")]
        e1_base: String,
        #[serde(rename = "E_multi_base")]
        e_multi_base: String,
    }
    let mut out = Vec::new();
    for (k, row) in csv_reader(path)?.deserialize::<Row>().enumerate() {
        let line = k as u64 + 2;
        let row = row.map_err(|e| Error::from(e).at(path, line))?;
        let parsed = (|| {
            Ok::<_, Error>(WhatIfRow {
                e1: parse_f64(&row.e1)?,
                e_multi: parse_f64(&row.e_multi)?,
                e1_base: parse_f64(&row.e1_base)?,
                e_multi_base: parse_f64(&row.e_multi_base)?,
                scenario: row.scenario,
                port_id: row.port_id,
                month_index: row.month_index,
            })
        })();
        out.push(parsed.map_err(|e| e.at(path, line))?);
    }
    Ok(out)
}

/// Wide table for plotting: one `E_multi` column per port.
pub fn write_exposure_series(path: &Path, rows: &[ExposureRow]) -> Result<()> {
    let mut table: BTreeMap<i64, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in rows {
        table
            .entry(r.month_index)
            .or_default()
            .insert(&r.port_id, r.e_multi);
    }
    let mut ports: Vec<&str> = rows.iter().map(|r| r.port_id.as_str()).collect();
    ports.sort_unstable();
    ports.dedup();
    let mut w = ArtifactWriter::create(path, "report", "-")?;
    w.row(
        ["month_index", "month"]
            .into_iter()
            .map(String::from)
            .chain(ports.iter().map(|p| p.to_string())),
    )?;
    for (month, cells) in &table {
        let values = ports
            .iter()
            .map(|p| cells.get(p).map_or(String::new(), |&v| fmt_f64(v)));
        w.row([month.to_string(), fmt_month(*month)].into_iter().chain(values))?;
    }
    w.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportParameters {
    pub gamma: f64,
    pub hops: usize,
    pub path_hops: usize,
    pub eta: f64,
    pub beta: f64,
    pub clamp: bool,
    /// Similarity actually used for the kernel.
    pub kernel_similarity: KernelSimilarity,
    pub tau: f64,
    pub horizon: usize,
    pub lags: usize,
    pub residence_scale_hours: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSummary {
    pub clusters: BTreeMap<String, Vec<String>>,
    pub noise: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportTriplet {
    pub rank: usize,
    pub mmsi: String,
    pub port_id: String,
    pub month_index: i64,
    pub month: String,
    pub score: f64,
    pub kind: TripletKind,
    pub path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesPoint {
    pub month_index: i64,
    pub e1: f64,
    pub e_multi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortPeak {
    pub port_id: String,
    pub month_index: i64,
    pub month: String,
    pub e1: f64,
    pub e_multi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfPort {
    pub port_id: String,
    pub e1_base: f64,
    pub e1: f64,
    pub e_multi_base: f64,
    pub e_multi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfSummary {
    pub name: String,
    /// Exposure summed over all months, per port.
    pub ports: Vec<WhatIfPort>,
    pub total_e_multi_base: f64,
    pub total_e_multi: f64,
    /// Fractional reduction of total multi-hop exposure.
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub format_version: u32,
    pub parameters: ReportParameters,
    pub input_sha256: BTreeMap<String, String>,
    pub clusters: ClusterSummary,
    pub ingest: Option<IngestStats>,
    pub forecast: Option<ForecastSummary>,
    pub zero_exposure: bool,
    pub peaks: Vec<PortPeak>,
    pub triplet_count: usize,
    pub top_triplets: Vec<ReportTriplet>,
    pub exposure_series: BTreeMap<String, Vec<SeriesPoint>>,
    pub what_if: Vec<WhatIfSummary>,
}

pub struct ReportInputs<'a> {
    pub config: &'a PipelineConfig,
    pub input_sha256: BTreeMap<String, String>,
    pub labels: &'a ClusterLabeling,
    pub exposure: &'a [ExposureRow],
    pub triplets: &'a [RankedTriplet],
    pub shipments: &'a [ShipmentScore],
    pub what_if: &'a [WhatIfRow],
    pub forecast: Option<&'a ForecastSummary>,
    pub ingest: Option<&'a IngestStats>,
}

pub fn build_report(inp: ReportInputs<'_>) -> Report {
    let cfg = inp.config;
    let mut clusters: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut noise = Vec::new();
    for (port, &label) in inp.labels.ports.iter().zip(&inp.labels.labels) {
        if label == NOISE {
            noise.push(port.clone());
        } else {
            clusters.entry(label.to_string()).or_default().push(port.clone());
        }
    }

    let mut series: BTreeMap<String, Vec<SeriesPoint>> = BTreeMap::new();
    for r in inp.exposure {
        series.entry(r.port_id.clone()).or_default().push(SeriesPoint {
            month_index: r.month_index,
            e1: r.e1,
            e_multi: r.e_multi,
        });
    }
    let peaks = series
        .iter()
        .filter_map(|(port, pts)| {
            let best = pts.iter().fold(None::<&SeriesPoint>, |acc, p| match acc {
                Some(b) if b.e_multi >= p.e_multi => Some(b),
                _ => Some(p),
            })?;
            Some(PortPeak {
                port_id: port.clone(),
                month_index: best.month_index,
                month: fmt_month(best.month_index),
                e1: best.e1,
                e_multi: best.e_multi,
            })
        })
        .collect();

    let mut paths: BTreeMap<(String, String, i64, u64), &[String]> = BTreeMap::new();
    for s in inp.shipments {
        let key = (
            s.mmsi.to_string(),
            s.path.last().cloned().unwrap_or_default(),
            s.month_index,
            s.rho.to_bits(),
        );
        paths.entry(key).or_insert(&s.path);
    }
    let top_triplets = inp
        .triplets
        .iter()
        .take(cfg.report.top_n)
        .map(|t| {
            let path = match t.kind {
                TripletKind::Shipment if t.path.is_empty() => paths
                    .get(&(
                        t.mmsi.clone(),
                        t.port_id.clone(),
                        t.month_index,
                        t.score.to_bits(),
                    ))
                    .map(|p| p.to_vec())
                    .unwrap_or_default(),
                _ => t.path.clone(),
            };
            ReportTriplet {
                rank: t.rank,
                mmsi: t.mmsi.clone(),
                port_id: t.port_id.clone(),
                month_index: t.month_index,
                month: fmt_month(t.month_index),
                score: t.score,
                kind: t.kind,
                path,
            }
        })
        .collect();

    let mut what_if = Vec::new();
    for scenario in &cfg.risk.what_if {
        let mut per_port: BTreeMap<&str, [f64; 4]> = BTreeMap::new();
        for r in inp.what_if.iter().filter(|r| r.scenario == scenario.name) {
            let acc = per_port.entry(&r.port_id).or_default();
            acc[0] += r.e1_base;
            acc[1] += r.e1;
            acc[2] += r.e_multi_base;
            acc[3] += r.e_multi;
        }
        let base: f64 = per_port.values().map(|a| a[2]).sum();
        let after: f64 = per_port.values().map(|a| a[3]).sum();
        what_if.push(WhatIfSummary {
            name: scenario.name.clone(),
            ports: per_port
                .iter()
                .map(|(p, a)| WhatIfPort {
                    port_id: p.to_string(),
                    e1_base: a[0],
                    e1: a[1],
                    e_multi_base: a[2],
                    e_multi: a[3],
                })
                .collect(),
            total_e_multi_base: base,
            total_e_multi: after,
            reduction: if base > 0.0 { 1.0 - after / base } else { 0.0 },
        });
    }

    Report {
        format_version: REPORT_FORMAT_VERSION,
        parameters: ReportParameters {
            gamma: cfg.risk.gamma,
            hops: cfg.risk.hops,
            path_hops: cfg.risk.path_hops,
            eta: cfg.kernel.eta,
            beta: cfg.kernel.beta,
            clamp: cfg.kernel.clamp,
            kernel_similarity: match cfg.inputs.scenario_climate {
                Some(_) => cfg.kernel_similarity,
                None => KernelSimilarity::Base,
            },
            tau: cfg.forecast.tau,
            horizon: cfg.forecast.horizon,
            lags: cfg.forecast.lags,
            residence_scale_hours: cfg.risk.residence_scale_hours,
            seed: cfg.seed,
        },
        input_sha256: inp.input_sha256,
        clusters: ClusterSummary { clusters, noise },
        ingest: inp.ingest.cloned(),
        forecast: inp.forecast.cloned(),
        zero_exposure: inp.exposure.iter().all(|r| r.e1 == 0.0 && r.e_multi == 0.0),
        peaks,
        triplet_count: inp.triplets.len(),
        top_triplets,
        exposure_series: series,
        what_if,
    }
}

pub fn render_text(r: &Report) -> String {
    let mut s = String::new();
    let p = &r.parameters;
    let _ = writeln!(s, "Pathway risk report");
    let _ = writeln!(
        s,
        "gamma={} hops={} path_hops={} eta={} beta={} clamp={} kernel_similarity={} tau={} horizon={} lags={} seed={}",
        p.gamma,
        p.hops,
        p.path_hops,
        p.eta,
        p.beta,
        p.clamp,
        p.kernel_similarity,
        p.tau,
        p.horizon,
        p.lags,
        p.seed
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "Inputs");
    for (name, hash) in &r.input_sha256 {
        let _ = writeln!(s, "  {name:<17} sha256 {hash}");
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Environmental clusters");
    for (label, ports) in &r.clusters.clusters {
        let _ = writeln!(s, "  cluster {label}: {}", ports.join(", "));
    }
    if !r.clusters.noise.is_empty() {
        let _ = writeln!(s, "  noise: {}", r.clusters.noise.join(", "));
    }
    if let Some(stats) = &r.ingest {
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "AIS: {} lines, {} positions, {} skipped",
            stats.lines,
            stats.positions,
            stats.skipped()
        );
    }
    if let Some(f) = &r.forecast {
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "Link forecast: {} samples over {} pairs ({} train, {} eval)",
            f.samples, f.pairs, f.train_samples, f.eval_samples
        );
        if let Some(m) = &f.ensemble_eval {
            let _ = writeln!(
                s,
                "  ensemble eval: log-loss {:.4}, accuracy {:.3}, AUC {:.3}",
                m.log_loss, m.accuracy, m.auc
            );
        }
    }
    let _ = writeln!(s);
    if r.zero_exposure {
        let _ = writeln!(s, "Exposure: zero exposure at every port and month.");
    } else {
        let _ = writeln!(s, "Peak exposure by port");
        let _ = writeln!(s, "  {:<8} {:<8} {:>10} {:>10}", "port", "month", "E1", "E_multi");
        for pk in &r.peaks {
            let _ = writeln!(
                s,
                "  {:<8} {:<8} {:>10.4} {:>10.4}",
                pk.port_id, pk.month, pk.e1, pk.e_multi
            );
        }
    }
    let _ = writeln!(s);
    if r.top_triplets.is_empty() {
        let _ = writeln!(s, "No triplets to rank.");
    } else {
        let _ = writeln!(
            s,
            "Top {} of {} vessel-port-month triplets",
            r.top_triplets.len(),
            r.triplet_count
        );
        let _ = writeln!(
            s,
            "  {:>4} {:<10} {:<6} {:<8} {:>8}  {:<15} path",
            "rank", "mmsi", "port", "month", "score", "kind"
        );
        for t in &r.top_triplets {
            let _ = writeln!(
                s,
                "  {:>4} {:<10} {:<6} {:<8} {:>8.5}  {:<15} {}",
                t.rank,
                t.mmsi,
                t.port_id,
                t.month,
                t.score,
                t.kind.as_str(),
                t.path.join(" > ")
            );
        }
    }
    for w in &r.what_if {
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "What-if {}: total multi-hop exposure {:.4} -> {:.4} ({:.1}% reduction)",
            w.name,
            w.total_e_multi_base,
            w.total_e_multi,
            100.0 * w.reduction
        );
        for port in w.ports.iter().filter(|p| p.e_multi != p.e_multi_base) {
            let _ = writeln!(
                s,
                "  {:<6} E1 {:.4} -> {:.4}  E_multi {:.4} -> {:.4}",
                port.port_id, port.e1_base, port.e1, port.e_multi_base, port.e_multi
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> ClusterLabeling {
        ClusterLabeling {
            ports: vec!["CNS".into(), "HFX".into(), "MIA".into()],
            labels: vec![1, 1, -1],
            stabilities: [(1, 2.0)].into_iter().collect(),
        }
    }

    #[test]
    fn zero_risk_report() {
        let cfg = PipelineConfig::default();
        let exposure: Vec<ExposureRow> = ["CNS", "HFX"]
            .iter()
            .map(|p| ExposureRow {
                port_id: p.to_string(),
                month_index: 24264,
                e1: 0.0,
                e_multi: 0.0,
            })
            .collect();
        let labels = labels();
        let r = build_report(ReportInputs {
            config: &cfg,
            input_sha256: BTreeMap::new(),
            labels: &labels,
            exposure: &exposure,
            triplets: &[],
            shipments: &[],
            what_if: &[],
            forecast: None,
            ingest: None,
        });
        assert!(r.zero_exposure);
        assert!(r.top_triplets.is_empty());
        let text = render_text(&r);
        assert!(text.contains("zero exposure at every port"));
        assert!(text.contains("No triplets"));
        assert_eq!(r.clusters.noise, vec!["MIA".to_string()]);
    }

    #[test]
    fn report_json_schema_round_trip() {
        let cfg = PipelineConfig::default();
        let exposure = vec![ExposureRow {
            port_id: "HFX".into(),
            month_index: 24267,
            e1: 0.5,
            e_multi: 0.7,
        }];
        let triplets = vec![RankedTriplet {
            rank: 1,
            mmsi: "316000001".into(),
            port_id: "HFX".into(),
            month_index: 24267,
            score: 0.9,
            kind: TripletKind::Shipment,
            path: Vec::new(),
        }];
        let shipments = vec![ShipmentScore {
            mmsi: 316000001,
            path: vec!["RTM".into(), "HFX".into()],
            month_index: 24267,
            rho: 0.9,
            voyage_factor: 0.95,
        }];
        let labels = labels();
        let r = build_report(ReportInputs {
            config: &cfg,
            input_sha256: BTreeMap::new(),
            labels: &labels,
            exposure: &exposure,
            triplets: &triplets,
            shipments: &shipments,
            what_if: &[],
            forecast: None,
            ingest: None,
        });
        assert_eq!(r.top_triplets[0].path, ["RTM", "HFX"]);
        assert_eq!(r.top_triplets[0].month, "2022-04");
        let json = serde_json::to_value(&r).unwrap();
        for key in [
            "format_version",
            "parameters",
            "input_sha256",
            "clusters",
            "zero_exposure",
            "peaks",
            "top_triplets",
            "exposure_series",
            "what_if",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let back: Report = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
        let mut extra = serde_json::to_value(&r).unwrap();
        extra["unexpected"] = serde_json::json!(1);
        assert!(serde_json::from_value::<Report>(extra).is_err());
    }
}
