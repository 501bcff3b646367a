use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use pathrisk::ais::read_nmea_lines;
use pathrisk::pipeline::artifacts;
use pathrisk::pipeline::fixture::generate_fixture;
use pathrisk::pipeline::report::Report;
use pathrisk::risk::TripletKind;

fn cli(args: &[&str], extra: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pathrisk"));
    cmd.args(args);
    for p in extra {
        cmd.arg(p);
    }
    cmd.output().expect("binary runs")
}

struct Shared {
    tmp: tempfile::TempDir,
    config: PathBuf,
}

impl Shared {
    fn out(&self) -> PathBuf {
        self.tmp.path().join("out")
    }
}

/// One fixture and one full run shared by every test in this file.
fn shared() -> &'static Shared {
    static CELL: OnceLock<Shared> = OnceLock::new();
    CELL.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let files = generate_fixture(&tmp.path().join("fixture"), 42).unwrap();
        let out = tmp.path().join("out");
        let o = cli(&["run", "--config"], &[&files.config, Path::new("--out"), &out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        Shared {
            config: files.config,
            tmp,
        }
    })
}

#[test]
fn fixture_run_writes_every_artifact() {
    let out = shared().out();
    for name in [
        artifacts::FEATURES,
        artifacts::CLUSTERS,
        artifacts::SIMILARITY,
        artifacts::KERNEL,
        artifacts::PORT_CALLS,
        artifacts::VOYAGES,
        artifacts::SNAPSHOTS,
        artifacts::PREDICTIONS,
        artifacts::EXPOSURE,
        artifacts::TRIPLETS,
        artifacts::REPORT_JSON,
        artifacts::REPORT_TXT,
        artifacts::MANIFEST,
    ] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let header = std::fs::read_to_string(out.join(artifacts::EXPOSURE)).unwrap();
    assert!(header.starts_with("# stage=risk params="));
    assert!(header.lines().nth(1).unwrap() == "port_id,month_index,E1,E_multi");
}

#[test]
fn report_matches_schema_and_leads_with_spring_halifax_arrival() {
    let text = std::fs::read_to_string(shared().out().join(artifacts::REPORT_JSON)).unwrap();
    let report: Report = serde_json::from_str(&text).unwrap();
    assert!(!report.zero_exposure);
    assert_eq!(report.parameters.gamma, 0.6);
    assert_eq!(report.input_sha256.len(), 4);
    let top = &report.top_triplets[0];
    assert_eq!(top.rank, 1);
    assert_eq!(top.kind, TripletKind::Shipment);
    assert_eq!(top.port_id, "HFX");
    assert_eq!(
        top.path[top.path.len() - 2..],
        ["RTM".to_string(), "HFX".to_string()]
    );
    assert!((3..=5).contains(&top.month_index.rem_euclid(12)), "{}", top.month);
}

#[test]
fn fixture_clusters_separate_cold_and_subtropical_ports() {
    let labels = artifacts::read_clusters(&shared().out().join(artifacts::CLUSTERS)).unwrap();
    let cold: Vec<i64> = ["HFX", "SYD", "CNS", "RTM", "GOT"]
        .iter()
        .map(|p| labels.label_of(p).unwrap())
        .collect();
    assert!(cold[0] > 0 && cold.iter().all(|&l| l == cold[0]));
    for p in ["MIA", "HAV", "LPA", "JED", "SSZ", "DUR"] {
        assert_ne!(labels.label_of(p).unwrap(), cold[0], "{p}");
    }
}

#[test]
fn warming_scenario_shifts_similarity_toward_subtropical_sources() {
    let ds = artifacts::read_matrix(&shared().out().join(artifacts::DELTA_SIMILARITY)).unwrap();
    assert!(ds.get("RTM", "HFX").unwrap().abs() < 1e-12);
    assert!(ds.get("MIA", "HFX").unwrap() > 0.0);
    assert!(ds.get("HFX", "MIA").unwrap() > 0.0);
}

#[test]
fn resuming_from_risk_reproduces_the_triplets() {
    let s = shared();
    let copy = s.tmp.path().join("resume");
    std::fs::create_dir_all(&copy).unwrap();
    for name in [
        artifacts::CLUSTERS,
        artifacts::SIMILARITY,
        artifacts::KERNEL,
        artifacts::DELTA_SIMILARITY,
        artifacts::FEATURES,
        artifacts::SCENARIO_FEATURES,
        artifacts::PORT_CALLS,
        artifacts::VOYAGES,
        artifacts::INGEST_STATS,
        artifacts::SNAPSHOTS,
        artifacts::MODEL,
        artifacts::FORECAST_SUMMARY,
        artifacts::PREDICTIONS,
    ] {
        std::fs::copy(s.out().join(name), copy.join(name)).unwrap();
    }
    let o = cli(
        &["run", "--from-stage", "risk", "--config"],
        &[&s.config, Path::new("--out"), &copy],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in [artifacts::TRIPLETS, artifacts::EXPOSURE, artifacts::REPORT_JSON] {
        assert_eq!(
            std::fs::read(copy.join(name)).unwrap(),
            std::fs::read(s.out().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn single_thread_run_matches_the_default_pool() {
    let s = shared();
    let out = s.tmp.path().join("one_thread");
    let o = cli(
        &["run", "--threads", "1", "--config"],
        &[&s.config, Path::new("--out"), &out],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in [
        artifacts::PREDICTIONS,
        artifacts::TRIPLETS,
        artifacts::REPORT_JSON,
    ] {
        assert_eq!(
            std::fs::read(out.join(name)).unwrap(),
            std::fs::read(s.out().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn report_without_upstream_artifacts_is_an_incomplete_run() {
    let s = shared();
    let empty = s.tmp.path().join("empty");
    let o = cli(&["report", "--config"], &[&s.config, Path::new("--out"), &empty]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("report"));
}

#[test]
fn missing_climate_file_fails_validation_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let files = generate_fixture(tmp.path(), 1).unwrap();
    std::fs::remove_file(&files.climate).unwrap();
    let o = cli(&["run", "--config"], &[&files.config]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("climate"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn out_of_domain_flag_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let files = generate_fixture(tmp.path(), 1).unwrap();
    let o = cli(&["cluster", "--threads", "0", "--config"], &[&files.config]);
    assert_eq!(o.status.code(), Some(2));
    let o = cli(
        &["cluster", "--from-stage", "nowhere", "--config"],
        &[&files.config],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fixture_command_writes_a_runnable_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("fx");
    let o = cli(&["fixture", "--seed", "9", "--out"], &[&dir]);
    assert!(o.status.success());
    let config = std::fs::read_to_string(dir.join("config.toml")).unwrap();
    assert!(config.contains("seed = 9"));
    for f in ["ports.csv", "climate.csv", "climate_warming.csv", "ais.csv"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
}

#[test]
fn golden_nmea_lines_through_the_ingest_reader() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/aivdm_golden.nmea");
    let text = std::fs::read_to_string(path).unwrap();
    let timed: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(k, l)| format!("{l},{}", 1_700_000_000 + 60 * k as i64))
        .collect();
    let (messages, stats) = read_nmea_lines(&timed);
    assert_eq!(stats.lines, 20);
    assert_eq!(stats.checksum_errors, 0);
    assert_eq!(stats.sentinel_dropped, 1);
    assert_eq!(stats.skipped_types, 3);
    assert_eq!(stats.positions, 15);
    assert_eq!(messages.len(), 15);
    let hfx = messages.iter().find(|m| m.mmsi == 316_001_234).unwrap();
    assert!((hfx.lat - 44.6488).abs() < 1e-4 && (hfx.lon + 63.5752).abs() < 1e-4);
    assert_eq!(hfx.timestamp, 1_700_000_000 + 3 * 60);

    let (untimed, stats) = read_nmea_lines(text.lines());
    assert!(untimed.is_empty());
    assert_eq!(stats.untimed, 16);
}

#[test]
fn kernel_similarity_flag_selects_the_base_climate() {
    let s = shared();
    let out = s.tmp.path().join("base_kernel");
    let o = cli(
        &["run", "--kernel-similarity", "base", "--config"],
        &[&s.config, Path::new("--out"), &out],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let base = artifacts::read_matrix(&out.join(artifacts::KERNEL)).unwrap();
    let scenario = artifacts::read_matrix(&s.out().join(artifacts::KERNEL)).unwrap();
    assert!((base.get("RTM", "HFX").unwrap() - scenario.get("RTM", "HFX").unwrap()).abs() < 1e-12);
    assert!(base.get("MIA", "HFX").unwrap() < scenario.get("MIA", "HFX").unwrap());
    let text = std::fs::read_to_string(out.join(artifacts::REPORT_JSON)).unwrap();
    let report: Report = serde_json::from_str(&text).unwrap();
    assert_eq!(report.parameters.kernel_similarity.to_string(), "base");
    let o = cli(
        &["cluster", "--kernel-similarity", "both", "--config"],
        &[&s.config],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn aggregate_months_flag_writes_rolling_snapshots() {
    let s = shared();
    let out = s.tmp.path().join("rolling");
    let o = cli(
        &["run", "--aggregate-months", "3", "--config"],
        &[&s.config, Path::new("--out"), &out],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rolling = std::fs::read_to_string(out.join(artifacts::SNAPSHOTS_ROLLING)).unwrap();
    assert!(rolling.starts_with("# stage=graph params="));
    assert!(rolling.lines().count() > 2);
    assert!(!s.out().join(artifacts::SNAPSHOTS_ROLLING).exists());
    let o = cli(&["graph", "--aggregate-months", "0", "--config"], &[&s.config]);
    assert_eq!(o.status.code(), Some(2));
}
