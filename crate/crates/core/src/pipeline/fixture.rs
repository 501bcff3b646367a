//! Synthetic Nova Scotia scenario: port registry, base and warming climate,
//! 24 months of decoded AIS, and a ready-to-run configuration.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ais::calls::haversine_km;
use crate::error::{Error, Result};
use crate::pipeline::artifacts::fmt_time;

/// 2022-01-01T00:00:00Z
pub const FIXTURE_START: i64 = 1_640_995_200;
/// 2024-01-01T00:00:00Z
pub const FIXTURE_END: i64 = 1_704_067_200;

const HOUR: i64 = 3600;
const DAY: i64 = 24 * HOUR;
const KM_PER_NM: f64 = 1.852;

/// Recipient ports of the Nova Scotia scenario.
pub const RECIPIENT_PORTS: [&str; 3] = ["CNS", "HFX", "SYD"];
pub const SUBTROPICAL_PORTS: [&str; 6] = ["DUR", "HAV", "JED", "LPA", "MIA", "SSZ"];

struct FixturePort {
    id: &'static str,
    name: &'static str,
    lat: f64,
    lon: f64,
    capacity: f64,
    /// `(mean, amplitude, peak month)` after hemisphere alignment.
    sst: (f64, f64, f64),
    salinity: (f64, f64, f64),
}

/// Temperate port built from the shared cold template plus
/// `(sst mean, sst amplitude, salinity mean)` offsets.
const fn cold(
    id: &'static str,
    name: &'static str,
    (lat, lon): (f64, f64),
    capacity: f64,
    (d_sst, d_amp, d_sal): (f64, f64, f64),
) -> FixturePort {
    FixturePort {
        id,
        name,
        lat,
        lon,
        capacity,
        sst: (9.0 + d_sst, 7.0 + d_amp, 7.5),
        salinity: (31.0 + d_sal, 0.5, 3.0),
    }
}

const PORTS: [FixturePort; 12] = [
    cold("HFX", "Halifax", (44.6488, -63.5752), 1.0, (0.0, 0.0, 0.0)),
    cold("CNS", "Canso", (45.3369, -60.9956), 0.2, (-0.4, 0.1, -0.15)),
    cold("SYD", "Sydney", (46.1368, -60.1942), 0.4, (-0.8, 0.2, -0.3)),
    cold("SJN", "Saint John", (45.2733, -66.0633), 0.6, (-0.3, -0.2, -0.45)),
    cold("RTM", "Rotterdam", (51.9244, 4.4777), 3.0, (0.9, -0.15, 0.2)),
    cold("GOT", "Gothenburg", (57.7089, 11.9746), 1.5, (0.0, 0.15, -0.7)),
    FixturePort {
        id: "MIA",
        name: "Miami",
        lat: 25.7617,
        lon: -80.1918,
        capacity: 1.5,
        sst: (26.8, 2.6, 8.8),
        salinity: (36.0, 0.30, 6.0),
    },
    FixturePort {
        id: "HAV",
        name: "Havana",
        lat: 23.1136,
        lon: -82.3666,
        capacity: 0.8,
        sst: (27.4, 2.3, 8.9),
        salinity: (36.3, 0.26, 6.1),
    },
    FixturePort {
        id: "LPA",
        name: "Las Palmas",
        lat: 28.1235,
        lon: -15.4363,
        capacity: 1.0,
        sst: (21.5, 2.8, 9.3),
        salinity: (36.9, 0.22, 6.6),
    },
    FixturePort {
        id: "JED",
        name: "Jeddah",
        lat: 21.4858,
        lon: 39.1925,
        capacity: 1.8,
        sst: (28.6, 3.1, 8.6),
        salinity: (39.1, 0.36, 6.4),
    },
    FixturePort {
        id: "SSZ",
        name: "Santos",
        lat: -23.9608,
        lon: -46.3336,
        capacity: 1.6,
        sst: (24.8, 2.5, 9.1),
        salinity: (35.3, 0.40, 5.8),
    },
    FixturePort {
        id: "DUR",
        name: "Durban",
        lat: -29.8587,
        lon: 31.0218,
        capacity: 1.4,
        sst: (23.2, 2.9, 9.0),
        salinity: (35.5, 0.32, 6.2),
    },
];

fn port(id: &str) -> &'static FixturePort {
    PORTS.iter().find(|p| p.id == id).expect("fixture port")
}

/// Monthly values in local calendar months; southern ports peak six months
/// away from their aligned peak.
fn monthly(lat: f64, (mean, amp, peak): (f64, f64, f64)) -> [f64; 12] {
    let local_peak = if lat < 0.0 { peak - 6.0 } else { peak };
    let mut out = [0.0; 12];
    for (t, v) in out.iter_mut().enumerate() {
        let t = t as f64;
        let x = mean
            + amp * (2.0 * PI * (t - local_peak) / 12.0).cos()
            + 0.12 * amp * (4.0 * PI * (t - local_peak - 1.5) / 12.0).cos();
        *v = (x * 100.0).round() / 100.0;
    }
    out
}

fn climate_csv(sst_shift: impl Fn(&FixturePort) -> f64) -> String {
    let mut s = String::from("port_id,variable,month,value\n");
    for p in &PORTS {
        let (m, a, k) = p.sst;
        let sst = monthly(p.lat, (m + sst_shift(p), a, k));
        let sal = monthly(p.lat, p.salinity);
        for (var, series) in [("salinity", sal), ("sst", sst)] {
            for (t, v) in series.iter().enumerate() {
                let _ = writeln!(s, "{},{var},{t},{v:.2}", p.id);
            }
        }
    }
    s
}

fn ports_csv() -> String {
    let mut s = String::from("port_id,name,latitude,longitude,capacity\n");
    for p in &PORTS {
        let _ = writeln!(s, "{},{},{},{},{}", p.id, p.name, p.lat, p.lon, p.capacity);
    }
    s
}

struct Row {
    mmsi: u32,
    timestamp: i64,
    lat: f64,
    lon: f64,
    sog: f64,
    cog: Option<f64>,
    unavailable: bool,
}

/// Appends position reports for one vessel while it moves between ports.
struct Track<'a> {
    mmsi: u32,
    t: i64,
    at: &'static FixturePort,
    rng: &'a mut ChaCha8Rng,
    rows: &'a mut Vec<Row>,
}

impl Track<'_> {
    fn moored(&mut self, hours: f64) {
        let end = self.t + (hours * HOUR as f64) as i64;
        let berth_lat = self.at.lat + self.rng.gen_range(-0.02..0.02);
        let berth_lon = self.at.lon + self.rng.gen_range(-0.02..0.02);
        while self.t <= end {
            let unavailable = self.rng.gen_bool(0.002);
            self.rows.push(Row {
                mmsi: self.mmsi,
                timestamp: self.t,
                lat: berth_lat + self.rng.gen_range(-0.0005..0.0005),
                lon: berth_lon + self.rng.gen_range(-0.0005..0.0005),
                sog: self.rng.gen_range(0.0..0.4),
                cog: None,
                unavailable,
            });
            self.t += HOUR;
        }
        self.t = end;
    }

    fn sail(&mut self, to: &'static FixturePort, knots: f64) {
        let from = self.at;
        let km = haversine_km(from.lat, from.lon, to.lat, to.lon);
        let hours = km / (knots * KM_PER_NM);
        let steps = (hours / 3.0).ceil().max(1.0) as i64;
        let step = (hours * HOUR as f64 / steps as f64) as i64;
        let cog = (to.lon - from.lon)
            .atan2(to.lat - from.lat)
            .to_degrees()
            .rem_euclid(360.0);
        for k in 1..steps {
            let f = k as f64 / steps as f64;
            self.rows.push(Row {
                mmsi: self.mmsi,
                timestamp: self.t + k * step,
                lat: from.lat + f * (to.lat - from.lat),
                lon: from.lon + f * (to.lon - from.lon),
                sog: knots + self.rng.gen_range(-0.5..0.5),
                cog: Some((cog * 10.0).round() / 10.0),
                unavailable: false,
            });
        }
        self.t += steps * step;
        self.at = to;
    }

    fn done(&self) -> bool {
        self.t >= FIXTURE_END
    }
}

fn vessel<'a>(mmsi: u32, start: i64, at: &str, rng: &'a mut ChaCha8Rng, rows: &'a mut Vec<Row>) -> Track<'a> {
    Track {
        mmsi,
        t: start,
        at: port(at),
        rng,
        rows,
    }
}

/// Repeats `route` (first entry is the starting port) until the fixture
/// window ends, then leaves the last port.
fn liner(
    mmsi: u32,
    start: i64,
    route: &[&str],
    dwell: (f64, f64),
    rng: &mut ChaCha8Rng,
    rows: &mut Vec<Row>,
) {
    let mut local = ChaCha8Rng::seed_from_u64(rng.gen());
    let mut tr = vessel(mmsi, start, route[0], &mut local, rows);
    'outer: loop {
        for next in route.iter().skip(1).chain(std::iter::once(&route[0])) {
            let h = tr.rng.gen_range(dwell.0..dwell.1);
            tr.moored(h);
            let knots = tr.rng.gen_range(13.5..15.5);
            tr.sail(port(next), knots);
            if tr.done() {
                break 'outer;
            }
        }
    }
}

/// Seasonal coastal service HFX -> CNS -> SYD -> HFX during August and September.
fn coastal(mmsi: u32, year: i32, offset_days: i64, rng: &mut ChaCha8Rng, rows: &mut Vec<Row>) {
    let start = month_start(year, 8) + offset_days * DAY;
    let end = month_start(year, 10) - 3 * DAY;
    let mut local = ChaCha8Rng::seed_from_u64(rng.gen());
    let mut tr = vessel(mmsi, start, "HFX", &mut local, rows);
    while tr.t < end {
        for next in ["CNS", "SYD", "HFX"] {
            let h = tr.rng.gen_range(20.0..30.0);
            tr.moored(h);
            tr.sail(port(next), 12.0);
        }
    }
    tr.moored(24.0);
    tr.sail(port("SJN"), 12.0);
    tr.moored(24.0);
}

/// Spring crossing RTM -> HFX with a long stay at Halifax, then back.
fn spring_visit(mmsi: u32, arrive_by: i64, stay_days: f64, rng: &mut ChaCha8Rng, rows: &mut Vec<Row>) {
    let mut local = ChaCha8Rng::seed_from_u64(rng.gen());
    let crossing =
        haversine_km(port("RTM").lat, port("RTM").lon, port("HFX").lat, port("HFX").lon) / (14.0 * KM_PER_NM);
    let start = arrive_by - (crossing * HOUR as f64) as i64 - 36 * HOUR;
    let mut tr = vessel(mmsi, start, "RTM", &mut local, rows);
    tr.moored(36.0);
    tr.sail(port("HFX"), 14.0);
    tr.moored(stay_days * 24.0);
    tr.sail(port("RTM"), 14.0);
    tr.moored(30.0);
}

fn month_start(year: i32, month: u32) -> i64 {
    chrono::NaiveDate::from_ymd_opt(year, month, 1)
        .expect("valid date")
        .and_hms_opt(0, 0, 0)
        .expect("valid time")
        .and_utc()
        .timestamp()
}

fn ais_csv(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let jitter = |rng: &mut ChaCha8Rng, days: i64| FIXTURE_START + days * DAY + rng.gen_range(0..12) * HOUR;

    for k in 0..4u32 {
        let s = jitter(&mut rng, 4 * k as i64);
        liner(
            244_000_101 + k,
            s,
            &["RTM", "HFX"],
            (24.0, 40.0),
            &mut rng,
            &mut rows,
        );
    }
    let s = jitter(&mut rng, 2);
    liner(
        316_000_201,
        s,
        &["RTM", "SJN", "HFX"],
        (22.0, 34.0),
        &mut rng,
        &mut rows,
    );
    let s = jitter(&mut rng, 9);
    liner(
        316_000_202,
        s,
        &["RTM", "SJN", "SYD"],
        (22.0, 34.0),
        &mut rng,
        &mut rows,
    );
    for k in 0..2u32 {
        let s = jitter(&mut rng, 3 * k as i64);
        liner(
            265_000_301 + k,
            s,
            &["GOT", "RTM"],
            (20.0, 30.0),
            &mut rng,
            &mut rows,
        );
    }
    let distractors: [(u32, [&str; 2]); 5] = [
        (367_000_401, ["MIA", "HFX"]),
        (323_000_402, ["HAV", "MIA"]),
        (224_000_403, ["LPA", "RTM"]),
        (403_000_404, ["JED", "DUR"]),
        (710_000_405, ["SSZ", "DUR"]),
    ];
    for (k, (mmsi, route)) in distractors.into_iter().enumerate() {
        let s = jitter(&mut rng, k as i64);
        liner(mmsi, s, &route, (24.0, 48.0), &mut rng, &mut rows);
    }

    for (y, year) in [2022, 2023].into_iter().enumerate() {
        let y = y as u32;
        for (k, month) in [4u32, 5, 6].into_iter().enumerate() {
            let arrive = month_start(year, month) + rng.gen_range(4..12) * DAY;
            let stay = rng.gen_range(24.0..34.0);
            spring_visit(316_000_501 + 10 * y + k as u32, arrive, stay, &mut rng, &mut rows);
        }
        for k in 0..3u32 {
            coastal(
                316_000_601 + 10 * y + k,
                year,
                2 + 5 * k as i64,
                &mut rng,
                &mut rows,
            );
        }
    }

    rows.retain(|r| r.timestamp >= FIXTURE_START && r.timestamp < FIXTURE_END);
    rows.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.mmsi.cmp(&b.mmsi)));
    let mut s = String::with_capacity(rows.len() * 64);
    s.push_str("mmsi,timestamp,lat,lon,sog,cog\n");
    for r in &rows {
        let (lat, lon) = if r.unavailable {
            (91.0, 181.0)
        } else {
            (r.lat, r.lon)
        };
        let cog = r.cog.map_or(String::new(), |c| format!("{c:.1}"));
        let _ = writeln!(
            s,
            "{},{},{lat:.5},{lon:.5},{:.1},{cog}",
            r.mmsi,
            fmt_time(r.timestamp),
            r.sog
        );
    }
    s
}

fn config_toml(seed: u64) -> String {
    format!(
        r#"# Nova Scotia synthetic scenario
seed = {seed}
output_dir = "out"

[inputs]
ports = "ports.csv"
climate = "climate.csv"
scenario_climate = "climate_warming.csv"
ais = "ais.csv"

[clustering]
min_cluster_size = 5
min_samples = 5

[kernel]
eta = 1.0
beta = 0.5
clamp = true

[calls]
radius_km = 10.0
sog_max_knots = 1.0
min_dwell_hours = 2.0
gap_split_hours = 6.0

[forecast]
lags = 3
horizon = 1
tau = 0.0
negative_ratio = 3.0
eval_months = 6
learning_rate = 0.5
epochs = 400
l2 = [0.0001, 0.1]
alphas = [0.5, 0.5]

[risk]
gamma = 0.6
hops = 3
path_hops = 2
residence_scale_hours = 48.0

[[risk.what_if]]
name = "halifax_inbound_closed"
inbound = "HFX"
multiplier = 0.0

[report]
top_n = 15
"#
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureFiles {
    pub ports: PathBuf,
    pub climate: PathBuf,
    pub scenario_climate: PathBuf,
    pub ais: PathBuf,
    pub config: PathBuf,
}

/// Writes the scenario into `dir`. Climate files do not depend on `seed`.
pub fn generate_fixture(dir: &Path, seed: u64) -> Result<FixtureFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = FixtureFiles {
        ports: dir.join("ports.csv"),
        climate: dir.join("climate.csv"),
        scenario_climate: dir.join("climate_warming.csv"),
        ais: dir.join("ais.csv"),
        config: dir.join("config.toml"),
    };
    let write = |p: &Path, text: String| std::fs::write(p, text).map_err(|e| Error::io(p, e));
    write(&files.ports, ports_csv())?;
    write(&files.climate, climate_csv(|_| 0.0))?;
    write(
        &files.scenario_climate,
        climate_csv(|p| if p.lat.abs() >= 40.0 { 2.5 } else { 1.0 }),
    )?;
    write(&files.ais, ais_csv(seed))?;
    write(&files.config, config_toml(seed))?;
    Ok(files)
}
