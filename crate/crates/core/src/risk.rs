//! Risk adjacency, exposure propagation, shipment scores and triplet ranking.

use std::cmp::Ordering;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{KernelMatrix, PortMatrix};

/// Marker in the mmsi column for port-month aggregate rows.
pub const AGGREGATE_MMSI: &str = "*";

#[derive(Debug, Clone, PartialEq)]
pub struct RiskAdjacency {
    pub ports: Vec<String>,
    pub values: Array2<f64>,
    pub month_index: i64,
}

impl RiskAdjacency {
    pub fn new(ports: Vec<String>, mut values: Array2<f64>, month_index: i64) -> Result<Self> {
        let n = ports.len();
        if values.dim() != (n, n) {
            return Err(Error::Dimension {
                expected: n,
                got: values.nrows(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!(
                "risk adjacency entry {v} is not a finite nonnegative value"
            )));
        }
        for i in 0..n {
            values[[i, i]] = 0.0;
        }
        Ok(Self {
            ports,
            values,
            month_index,
        })
    }

    pub fn len(&self) -> usize {
        self.ports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ports.is_empty()
    }

    pub fn index_of(&self, port_id: &str) -> Result<usize> {
        self.ports
            .iter()
            .position(|p| p == port_id)
            .ok_or_else(|| Error::Alignment(format!("port {port_id} not in risk adjacency")))
    }

    /// Nonzero entries in row-major order.
    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.values
            .indexed_iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|((i, j), &v)| (i, j, v))
            .collect()
    }
}

/// `A = Y ⊙ K` with a zero diagonal.
pub fn risk_adjacency(
    predicted: &PortMatrix,
    kernel: &KernelMatrix,
    month_index: i64,
) -> Result<RiskAdjacency> {
    predicted.check_aligned(kernel)?;
    if let Some(y) = predicted.values.iter().find(|y| !(0.0..=1.0).contains(*y)) {
        return Err(Error::Domain(format!("prediction {y} outside [0, 1]")));
    }
    RiskAdjacency::new(
        predicted.ports.clone(),
        &predicted.values * &kernel.values,
        month_index,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureVector {
    pub ports: Vec<String>,
    pub values: Vec<f64>,
    pub month_index: i64,
    pub gamma: f64,
    pub hops: usize,
}

impl ExposureVector {
    pub fn get(&self, port_id: &str) -> Option<f64> {
        self.ports
            .iter()
            .position(|p| p == port_id)
            .map(|k| self.values[k])
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("gamma must be in (0, 1], got {gamma}")));
    }
    Ok(())
}

/// Column sums of `A`.
pub fn one_hop_exposure(a: &RiskAdjacency) -> ExposureVector {
    multi_hop_exposure(a, 1.0, 1).expect("gamma 1 and one hop are valid")
}

/// `E = sum_{h=1..H} gamma^(h-1) (A^h)^T 1`, by repeated sparse
/// vector-matrix products.
pub fn multi_hop_exposure(a: &RiskAdjacency, gamma: f64, hops: usize) -> Result<ExposureVector> {
    check_gamma(gamma)?;
    if hops == 0 {
        return Err(Error::Domain("hops must be >= 1".into()));
    }
    let n = a.len();
    let edges = a.edges();
    let mut reach = vec![1.0; n];
    let mut exposure = vec![0.0; n];
    let mut decay = 1.0;
    for _ in 0..hops {
        let mut next = vec![0.0; n];
        for &(i, j, w) in &edges {
            next[j] += reach[i] * w;
        }
        for (e, v) in exposure.iter_mut().zip(&next) {
            *e += decay * v;
        }
        reach = next;
        decay *= gamma;
    }
    Ok(ExposureVector {
        ports: a.ports.clone(),
        values: exposure,
        month_index: a.month_index,
        gamma,
        hops,
    })
}

/// Copy of `a` with the listed `(from, to)` edges multiplied by `multiplier`.
pub fn what_if_reweight(
    a: &RiskAdjacency,
    edges: &[(String, String)],
    multiplier: f64,
) -> Result<RiskAdjacency> {
    if !(0.0..=1.0).contains(&multiplier) {
        return Err(Error::Domain(format!(
            "multiplier must be in [0, 1], got {multiplier}"
        )));
    }
    let mut out = a.clone();
    for (from, to) in edges {
        let (i, j) = (a.index_of(from)?, a.index_of(to)?);
        out.values[[i, j]] *= multiplier;
    }
    Ok(out)
}

/// All inbound edges of `port_id`.
pub fn inbound_edges(a: &RiskAdjacency, port_id: &str) -> Result<Vec<(String, String)>> {
    a.index_of(port_id)?;
    Ok(a.ports
        .iter()
        .filter(|p| *p != port_id)
        .map(|p| (p.clone(), port_id.to_string()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShipmentScore {
    pub mmsi: u32,
    pub path: Vec<String>,
    /// Arrival month at the last port of `path`.
    pub month_index: i64,
    pub rho: f64,
    pub voyage_factor: f64,
}

/// `rho = 1 - prod_h (1 - min(1, gamma^(h-1) kappa_h))`, then scaled by the
/// voyage factor and clamped to `[0, 1]`.
pub fn shipment_risk(
    mmsi: u32,
    path: &[String],
    month_index: i64,
    kernel: &KernelMatrix,
    gamma: f64,
    voyage_factor: f64,
) -> Result<ShipmentScore> {
    check_gamma(gamma)?;
    if !(voyage_factor > 0.0 && voyage_factor <= 1.0) {
        return Err(Error::Domain(format!(
            "voyage factor must be in (0, 1], got {voyage_factor}"
        )));
    }
    if path.len() < 2 {
        return Err(Error::Path(format!(
            "path needs at least two ports, got {}",
            path.len()
        )));
    }
    let mut risk: f64 = 0.0;
    let mut decay = 1.0;
    for hop in path.windows(2) {
        if hop[0] == hop[1] {
            return Err(Error::Path(format!("path repeats port {} consecutively", hop[0])));
        }
        let k = kernel.get(&hop[0], &hop[1])?;
        // r <- 1 - (1 - r)(1 - t), written so a single hop returns t exactly
        risk += (1.0 - risk) * (decay * k).min(1.0);
        decay *= gamma;
    }
    Ok(ShipmentScore {
        mmsi,
        path: path.to_vec(),
        month_index,
        rho: (risk * voyage_factor).clamp(0.0, 1.0),
        voyage_factor,
    })
}

/// Residence-time factor `1 - exp(-dwell / scale)`, floored so it stays in (0, 1].
pub fn residence_factor(dwell_hours: f64, scale_hours: f64) -> f64 {
    (1.0 - (-dwell_hours.max(0.0) / scale_hours).exp()).clamp(1e-6, 1.0)
}

/// Maps exposure onto `[0, 1)` so port aggregates rank alongside shipments.
pub fn aggregate_score(exposure: f64) -> f64 {
    1.0 - (-exposure).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletKind {
    Shipment,
    PortAggregate,
}

impl TripletKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Shipment => "shipment",
            Self::PortAggregate => "port_aggregate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTriplet {
    pub rank: usize,
    pub mmsi: String,
    pub port_id: String,
    pub month_index: i64,
    pub score: f64,
    pub kind: TripletKind,
    /// Port sequence for shipment rows.
    pub path: Vec<String>,
}

fn triplet_order(a: &RankedTriplet, b: &RankedTriplet) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.month_index.cmp(&b.month_index))
        .then_with(|| a.port_id.cmp(&b.port_id))
        .then_with(|| a.mmsi.cmp(&b.mmsi))
}

/// Shipment rows and port-month aggregates (scored by [`aggregate_score`] of
/// the multi-hop exposure), ranked by descending score. Zero scores are
/// omitted.
pub fn rank_triplets(exposures: &[ExposureVector], shipments: &[ShipmentScore]) -> Vec<RankedTriplet> {
    let mut rows: Vec<RankedTriplet> = Vec::new();
    for e in exposures {
        for (port, &v) in e.ports.iter().zip(&e.values) {
            rows.push(RankedTriplet {
                rank: 0,
                mmsi: AGGREGATE_MMSI.to_string(),
                port_id: port.clone(),
                month_index: e.month_index,
                score: aggregate_score(v),
                kind: TripletKind::PortAggregate,
                path: Vec::new(),
            });
        }
    }
    for s in shipments {
        rows.push(RankedTriplet {
            rank: 0,
            mmsi: s.mmsi.to_string(),
            port_id: s.path.last().cloned().unwrap_or_default(),
            month_index: s.month_index,
            score: s.rho,
            kind: TripletKind::Shipment,
            path: s.path.clone(),
        });
    }
    rows.retain(|r| r.score > 0.0);
    rows.sort_by(triplet_order);
    for (k, r) in rows.iter_mut().enumerate() {
        r.rank = k + 1;
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|k| format!("P{k}")).collect()
    }

    fn random_adjacency(rng: &mut ChaCha8Rng, n: usize, density: f64) -> RiskAdjacency {
        let v = Array2::from_shape_fn((n, n), |(i, j)| {
            if i != j && rng.gen_bool(density) {
                rng.gen_range(0.0..1.0)
            } else {
                0.0
            }
        });
        RiskAdjacency::new(ids(n), v, 0).unwrap()
    }

    /// Sum over every walk of length 1..=H ending at each node.
    fn walk_oracle(a: &RiskAdjacency, gamma: f64, hops: usize) -> Vec<f64> {
        let n = a.len();
        let mut out = vec![0.0; n];
        fn extend(
            a: &RiskAdjacency,
            node: usize,
            len: usize,
            weight: f64,
            gamma: f64,
            hops: usize,
            out: &mut [f64],
        ) {
            if len > 0 {
                out[node] += gamma.powi(len as i32 - 1) * weight;
            }
            if len == hops {
                return;
            }
            for next in 0..a.len() {
                let w = a.values[[node, next]];
                if w != 0.0 {
                    extend(a, next, len + 1, weight * w, gamma, hops, out);
                }
            }
        }
        for start in 0..n {
            extend(a, start, 0, 1.0, gamma, hops, &mut out);
        }
        out
    }

    #[test]
    fn chain_example() {
        let mut v = Array2::zeros((3, 3));
        v[[0, 1]] = 0.5;
        v[[1, 2]] = 0.5;
        let a = RiskAdjacency::new(ids(3), v, 0).unwrap();
        let e = multi_hop_exposure(&a, 0.6, 2).unwrap();
        assert_eq!(e.values[0], 0.0);
        assert_eq!(e.values[1], 0.5);
        assert!((e.values[2] - 0.65).abs() < 1e-15);
    }

    #[test]
    fn matches_walk_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..40 {
            let n = rng.gen_range(2..=8);
            let a = random_adjacency(&mut rng, n, 0.3);
            for gamma in [0.3, 0.6, 1.0] {
                for hops in 1..=4 {
                    let e = multi_hop_exposure(&a, gamma, hops).unwrap();
                    let oracle = walk_oracle(&a, gamma, hops);
                    for (x, y) in e.values.iter().zip(&oracle) {
                        assert!((x - y).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn one_hop_examples() {
        let a = RiskAdjacency::new(ids(4), Array2::zeros((4, 4)), 0).unwrap();
        assert!(one_hop_exposure(&a).values.iter().all(|&v| v == 0.0));
        let mut v = Array2::zeros((4, 4));
        v[[1, 3]] = 0.4;
        let a = RiskAdjacency::new(ids(4), v, 0).unwrap();
        assert_eq!(one_hop_exposure(&a).values, vec![0.0, 0.0, 0.0, 0.4]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_adjacency(&mut rng, 7, 0.5);
        let t = a.values.t().to_owned();
        let e1 = one_hop_exposure(&a);
        for r in 0..7 {
            assert!((e1.values[r] - t.row(r).sum()).abs() < 1e-12);
        }
        assert_eq!(e1.values, multi_hop_exposure(&a, 0.3, 1).unwrap().values);
    }

    #[test]
    fn adjacency_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = PortMatrix::new(ids(6), Array2::from_shape_fn((6, 6), |_| rng.gen_range(0.0..1.0))).unwrap();
        let k = PortMatrix::new(ids(6), Array2::from_shape_fn((6, 6), |_| rng.gen_range(0.0..1.5))).unwrap();
        let a = risk_adjacency(&y, &k, 3).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expected = if i == j {
                    0.0
                } else {
                    y.values[[i, j]] * k.values[[i, j]]
                };
                assert_eq!(a.values[[i, j]], expected);
            }
        }
        let zero = PortMatrix::new(ids(6), Array2::zeros((6, 6))).unwrap();
        assert!(risk_adjacency(&zero, &k, 0)
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 0.0));
        let ones = PortMatrix::new(ids(6), Array2::ones((6, 6))).unwrap();
        let a = risk_adjacency(&y, &ones, 0).unwrap();
        assert_eq!(a.values[[0, 1]], y.values[[0, 1]]);
        let other = PortMatrix::new(
            ids(5).into_iter().chain(["Z".into()]).collect(),
            Array2::ones((6, 6)),
        )
        .unwrap();
        assert!(matches!(risk_adjacency(&y, &other, 0), Err(Error::Alignment(_))));
    }

    fn kernel_with(pairs: &[(&str, &str, f64)]) -> KernelMatrix {
        let ports: Vec<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
        let mut v = Array2::ones((4, 4));
        for &(a, b, k) in pairs {
            let i = ports.iter().position(|p| p == a).unwrap();
            let j = ports.iter().position(|p| p == b).unwrap();
            v[[i, j]] = k;
        }
        PortMatrix::new(ports, v).unwrap()
    }

    fn path(p: &[&str]) -> Vec<String> {
        p.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn shipment_examples() {
        let k = kernel_with(&[("A", "B", 0.5), ("B", "C", 0.5), ("C", "D", 0.0), ("D", "A", 0.0)]);
        let s = shipment_risk(1, &path(&["A", "B", "C"]), 0, &k, 0.6, 1.0).unwrap();
        assert_eq!(s.rho, 0.65);
        let independent = 1.0 - (1.0 - 0.5) * (1.0 - 0.6 * 0.5);
        assert_eq!(s.rho, independent);
        let z = shipment_risk(1, &path(&["C", "D", "A"]), 0, &k, 0.6, 1.0).unwrap();
        assert_eq!(z.rho, 0.0);
        let k = kernel_with(&[("A", "B", 0.3)]);
        for gamma in [0.1, 0.6, 1.0] {
            assert_eq!(
                shipment_risk(1, &path(&["A", "B"]), 0, &k, gamma, 1.0)
                    .unwrap()
                    .rho,
                0.3
            );
        }
        assert!(matches!(
            shipment_risk(1, &path(&["A", "A"]), 0, &k, 0.6, 1.0),
            Err(Error::Path(_))
        ));
        assert!(matches!(
            shipment_risk(1, &path(&["A", "Q"]), 0, &k, 0.6, 1.0),
            Err(Error::Alignment(_))
        ));
        assert!(shipment_risk(1, &path(&["A", "B"]), 0, &k, 0.0, 1.0).is_err());
    }

    #[test]
    fn unclamped_kernel_hop_is_capped() {
        let k = kernel_with(&[("A", "B", 1.4)]);
        assert_eq!(
            shipment_risk(1, &path(&["A", "B"]), 0, &k, 0.6, 1.0).unwrap().rho,
            1.0
        );
        let s = shipment_risk(1, &path(&["A", "B"]), 0, &k, 0.6, 0.25).unwrap();
        assert_eq!(s.rho, 0.25);
    }

    #[test]
    fn reweight_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_adjacency(&mut rng, 6, 0.6);
        let same = what_if_reweight(&a, &inbound_edges(&a, "P2").unwrap(), 1.0).unwrap();
        assert_eq!(same, a);
        let cut = what_if_reweight(&a, &inbound_edges(&a, "P2").unwrap(), 0.0).unwrap();
        assert_eq!(one_hop_exposure(&cut).values[2], 0.0);
        let before = multi_hop_exposure(&a, 0.6, 3).unwrap();
        let half = what_if_reweight(&a, &[("P0".into(), "P1".into())], 0.5).unwrap();
        let after = multi_hop_exposure(&half, 0.6, 3).unwrap();
        assert!(before.values.iter().zip(&after.values).all(|(b, a)| a <= b));
        assert!(what_if_reweight(&a, &[("P0".into(), "X".into())], 0.5).is_err());
        assert!(what_if_reweight(&a, &[], 1.5).is_err());
    }

    fn shipment(mmsi: u32, port: &str, month: i64, rho: f64) -> ShipmentScore {
        ShipmentScore {
            mmsi,
            path: path(&["X", port]),
            month_index: month,
            rho,
            voyage_factor: 1.0,
        }
    }

    #[test]
    fn ranking_examples() {
        let r = rank_triplets(&[], &[shipment(5, "HFX", 1, 0.4)]);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].rank, 1);
        let r = rank_triplets(&[], &[shipment(5, "SYD", 3, 0.4), shipment(5, "HFX", 3, 0.4)]);
        assert_eq!(r[0].port_id, "HFX");
        let e = ExposureVector {
            ports: path(&["HFX", "SYD"]),
            values: vec![0.0, 0.0],
            month_index: 0,
            gamma: 0.6,
            hops: 3,
        };
        assert!(rank_triplets(&[e], &[]).is_empty());
    }

    #[test]
    fn ranking_matches_stable_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ports = ["CNS", "HFX", "SYD"];
        let scores: Vec<ShipmentScore> = (0..50)
            .map(|_| {
                shipment(
                    rng.gen_range(100..110),
                    ports[rng.gen_range(0..3)],
                    rng.gen_range(0..4),
                    rng.gen_range(1..6) as f64 / 10.0,
                )
            })
            .collect();
        let ranked = rank_triplets(&[], &scores);
        let mut keyed: Vec<(f64, i64, String, String)> = scores
            .iter()
            .map(|s| (-s.rho, s.month_index, s.path[1].clone(), s.mmsi.to_string()))
            .collect();
        keyed.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (r, k) in ranked.iter().zip(&keyed) {
            assert_eq!((-r.score, r.month_index, r.port_id.clone(), r.mmsi.clone()), *k);
        }
        assert!(ranked.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(ranked.iter().enumerate().all(|(k, r)| r.rank == k + 1));
    }

    proptest! {
        #[test]
        fn exposure_monotone_in_edges(seed in 0u64..300, bump in 0.01f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_adjacency(&mut rng, 6, 0.4);
            let (i, j) = (rng.gen_range(0..6), rng.gen_range(0..6));
            prop_assume!(i != j);
            let mut b = a.clone();
            b.values[[i, j]] += bump;
            let ea = multi_hop_exposure(&a, 0.6, 3).unwrap();
            let eb = multi_hop_exposure(&b, 0.6, 3).unwrap();
            for (x, y) in ea.values.iter().zip(&eb.values) {
                prop_assert!(y >= x);
            }
        }

        #[test]
        fn exposure_monotone_in_gamma(seed in 0u64..300, g in 0.05f64..0.95, hops in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_adjacency(&mut rng, 6, 0.4);
            let lo = multi_hop_exposure(&a, g, hops).unwrap();
            let hi = multi_hop_exposure(&a, (g + 0.05).min(1.0), hops).unwrap();
            for (x, y) in lo.values.iter().zip(&hi.values) {
                prop_assert!(y >= x);
            }
        }

        #[test]
        fn one_hop_is_linear(seed in 0u64..300, alpha in 0.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_adjacency(&mut rng, 5, 0.5);
            let scaled = RiskAdjacency::new(a.ports.clone(), &a.values * alpha, 0).unwrap();
            let e = one_hop_exposure(&a);
            let es = one_hop_exposure(&scaled);
            for (x, y) in e.values.iter().zip(&es.values) {
                prop_assert!((alpha * x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn rho_bounded_and_grows_with_hops(seed in 0u64..300, gamma in 0.05f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ports: Vec<String> = ids(5);
            let k = PortMatrix::new(ports.clone(), Array2::from_shape_fn((5, 5), |_| rng.gen_range(0.0..1.5))).unwrap();
            let mut p = vec![ports[rng.gen_range(0..5)].clone()];
            let mut prev = 0.0;
            for _ in 0..5 {
                let mut next = rng.gen_range(0..5);
                while ports[next] == *p.last().unwrap() {
                    next = rng.gen_range(0..5);
                }
                p.push(ports[next].clone());
                let rho = shipment_risk(1, &p, 0, &k, gamma, 1.0).unwrap().rho;
                prop_assert!((0.0..=1.0).contains(&rho));
                prop_assert!(rho >= prev);
                prev = rho;
            }
        }
    }
}
