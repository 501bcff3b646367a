//! Staged pipeline: climate features and clusters, similarity and kernel,
//! AIS ingest, monthly graphs, link forecast, risk, report.

pub mod artifacts;
pub mod config;
pub mod fixture;
pub mod report;

pub use config::{
    AisFormat, ForecastConfig, GraphConfig, Inputs, KernelSimilarity, PipelineConfig, RiskConfig, WhatIf,
};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ais::{self, calls::build_voyages, IngestStats, PortCall, Voyage};
use crate::climate::{
    dataset_variables, feature_layout, load_climate, port_features, standardize, FeatureVector,
};
use crate::clustering::{cluster, ClusterLabeling};
use crate::error::{Error, Result};
use crate::forecast::{
    assemble_dataset, check_no_leakage, chronological_split, ensemble, evaluate, predict, train_logistic,
    EdgeFeatureBuilder, EnsembleWeights, ExoTable, FeatureScaler, Metrics, ModelDocument,
    MODEL_FORMAT_VERSION,
};
use crate::io::{sha256_file, sha256_str};
use crate::mobility::{build_snapshots, Timeline};
use crate::registry::PortRegistry;
use crate::risk::{
    inbound_edges, multi_hop_exposure, one_hop_exposure, rank_triplets, residence_factor, risk_adjacency,
    shipment_risk, what_if_reweight, ExposureVector, RankedTriplet, ShipmentScore,
};
use crate::similarity::{delta_similarity, kernel, similarity_matrix, KernelMatrix, PortMatrix};

use artifacts as art;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Cluster,
    Similarity,
    Ingest,
    Graph,
    Forecast,
    Risk,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Cluster,
        Stage::Similarity,
        Stage::Ingest,
        Stage::Graph,
        Stage::Forecast,
        Stage::Risk,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Cluster => "cluster",
            Stage::Similarity => "similarity",
            Stage::Ingest => "ingest",
            Stage::Graph => "graph",
            Stage::Forecast => "forecast",
            Stage::Risk => "risk",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub ports: usize,
    pub messages_decoded: Option<u64>,
    pub messages_skipped: Option<u64>,
    pub calls: Option<usize>,
    pub voyages: Option<usize>,
    pub samples: Option<usize>,
    pub triplets: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub input_sha256: BTreeMap<String, String>,
    pub stages: Vec<StageTiming>,
    pub counts: RunCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberMetrics {
    pub l2: f64,
    pub final_loss: f64,
    pub eval: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSummary {
    pub samples: usize,
    pub pairs: usize,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub train_months: (i64, i64),
    pub eval_months: (i64, i64),
    pub members: Vec<MemberMetrics>,
    pub ensemble_eval: Option<Metrics>,
}

/// A pipeline invocation rooted at `config.output_dir`.
pub struct Pipeline {
    config: PipelineConfig,
    out: PathBuf,
    registry: Option<PortRegistry>,
    features: Option<(Vec<String>, Vec<FeatureVector>)>,
    scenario: Option<Vec<FeatureVector>>,
    labels: Option<ClusterLabeling>,
    similarity: Option<PortMatrix>,
    delta: Option<PortMatrix>,
    kernel: Option<KernelMatrix>,
    calls: Option<Vec<PortCall>>,
    voyages: Option<Vec<Voyage>>,
    timeline: Option<Timeline>,
    predictions: Option<BTreeMap<i64, PortMatrix>>,
    counts: RunCounts,
    timings: Vec<StageTiming>,
}

fn param_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("parameters serialize");
    sha256_str(&json)[..16].to_string()
}

impl Pipeline {
    /// Validates the configuration; no input file is opened.
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let out = config.output_dir.clone();
        Ok(Self {
            config,
            out,
            registry: None,
            features: None,
            scenario: None,
            labels: None,
            similarity: None,
            delta: None,
            kernel: None,
            calls: None,
            voyages: None,
            timeline: None,
            predictions: None,
            counts: RunCounts::default(),
            timings: Vec::new(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    /// Runs `from..=to`, loading earlier results from existing artifacts,
    /// then writes the manifest.
    pub fn run(&mut self, from: Stage, to: Stage) -> Result<RunManifest> {
        if from > to {
            return Err(Error::Config(format!("--from-stage {from} comes after {to}")));
        }
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let threads = self.config.threads;
        let body = |this: &mut Self| -> Result<()> {
            for stage in Stage::ALL.into_iter().filter(|s| (from..=to).contains(s)) {
                let started = Instant::now();
                log::info!("stage {stage}");
                this.run_stage(stage).map_err(|e| e.in_stage(stage.name()))?;
                this.timings.push(StageTiming {
                    stage,
                    seconds: started.elapsed().as_secs_f64(),
                });
            }
            Ok(())
        };
        match threads {
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
                pool.install(|| body(self))?;
            }
            None => body(self)?,
        }
        self.write_manifest()
    }

    fn run_stage(&mut self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Cluster => self.stage_cluster(),
            Stage::Similarity => self.stage_similarity(),
            Stage::Ingest => self.stage_ingest(),
            Stage::Graph => self.stage_graph(),
            Stage::Forecast => self.stage_forecast(),
            Stage::Risk => self.stage_risk(),
            Stage::Report => self.stage_report(),
        }
    }

    fn registry(&mut self) -> Result<&PortRegistry> {
        if self.registry.is_none() {
            let r = PortRegistry::load(&self.config.inputs.ports)?;
            self.counts.ports = r.len();
            self.registry = Some(r);
        }
        Ok(self.registry.as_ref().expect("loaded"))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn stage_cluster(&mut self) -> Result<()> {
        let cfg = self.config.clone();
        let registry = self.registry()?.clone();
        let records = load_climate(&cfg.inputs.climate, &registry)?;
        let names = feature_layout(&dataset_variables(&records));
        let (features, standardizer) = standardize(&port_features(&records)?)?;
        let labels = cluster(&features, &cfg.clustering)?;
        let hash = param_hash(&cfg.clustering);
        art::write_features(&self.path(art::FEATURES), "cluster", &hash, &names, &features)?;
        art::write_clusters(&self.path(art::CLUSTERS), &hash, &labels)?;
        if let Some(path) = &cfg.inputs.scenario_climate {
            let scenario_records = load_climate(path, &registry)?;
            if dataset_variables(&scenario_records) != dataset_variables(&records) {
                return Err(Error::Alignment(
                    "scenario climate has different variables than the base climate".into(),
                ));
            }
            let scenario = standardizer.transform_features(&port_features(&scenario_records)?)?;
            art::write_features(
                &self.path(art::SCENARIO_FEATURES),
                "cluster",
                &hash,
                &names,
                &scenario,
            )?;
            self.scenario = Some(scenario);
        }
        log::info!(
            "{} clusters, {} noise ports",
            labels.num_clusters(),
            labels.noise_count()
        );
        self.features = Some((names, features));
        self.labels = Some(labels);
        Ok(())
    }

    fn ensure_clusters(&mut self) -> Result<()> {
        if self.labels.is_none() {
            let p = art::require(&self.out, art::CLUSTERS)?;
            self.labels = Some(art::read_clusters(&p)?);
        }
        Ok(())
    }

    fn stage_similarity(&mut self) -> Result<()> {
        if self.features.is_none() {
            let p = art::require(&self.out, art::FEATURES)?;
            self.features = Some(art::read_features(&p)?);
            let sp = self.path(art::SCENARIO_FEATURES);
            if self.config.inputs.scenario_climate.is_some() {
                let sp = art::require(&self.out, art::SCENARIO_FEATURES).map(|_| sp)?;
                self.scenario = Some(art::read_features(&sp)?.1);
            }
        }
        self.ensure_clusters()?;
        let (_, features) = self.features.as_ref().expect("loaded");
        let s = similarity_matrix(features)?;
        let scenario_s = self
            .scenario
            .as_ref()
            .map(|scn| similarity_matrix(scn))
            .transpose()?;
        let delta = match &scenario_s {
            Some(scn) => delta_similarity(&s, scn)?,
            None => PortMatrix::new(s.ports.clone(), Array2::zeros(s.values.dim()))?,
        };
        let basis = match (self.config.kernel_similarity, &scenario_s) {
            (KernelSimilarity::Scenario, Some(scn)) => scn,
            _ => &s,
        };
        let k = kernel(basis, self.labels.as_ref().expect("loaded"), &self.config.kernel)?;
        let hash = param_hash(&(
            &self.config.clustering,
            &self.config.kernel,
            self.config.kernel_similarity,
        ));
        art::write_matrix(&self.path(art::SIMILARITY), "similarity", &hash, &s)?;
        art::write_matrix(&self.path(art::DELTA_SIMILARITY), "similarity", &hash, &delta)?;
        art::write_matrix(&self.path(art::KERNEL), "similarity", &hash, &k)?;
        self.similarity = Some(s);
        self.delta = Some(delta);
        self.kernel = Some(k);
        Ok(())
    }

    fn stage_ingest(&mut self) -> Result<()> {
        let cfg = self.config.clone();
        let registry = self.registry()?.clone();
        let (messages, stats) = match cfg.inputs.ais_format() {
            AisFormat::Nmea => ais::read_nmea(&cfg.inputs.ais)?,
            AisFormat::Csv => ais::read_decoded_csv(&cfg.inputs.ais)?,
        };
        if messages.is_empty() {
            return Err(Error::EmptyDataset("AIS position reports"));
        }
        let tracks = ais::group_tracks(messages);
        let (calls, voyages) = build_voyages(&tracks, &registry, &cfg.calls)?;
        log::info!(
            "{} positions from {} vessels, {} calls, {} voyages",
            stats.positions,
            tracks.len(),
            calls.len(),
            voyages.len()
        );
        let hash = param_hash(&cfg.calls);
        art::write_calls(&self.path(art::PORT_CALLS), &hash, &calls)?;
        art::write_voyages(&self.path(art::VOYAGES), &hash, &voyages)?;
        write_json(&self.path(art::INGEST_STATS), &stats)?;
        self.note_ingest(&stats);
        self.counts.calls = Some(calls.len());
        self.counts.voyages = Some(voyages.len());
        self.calls = Some(calls);
        self.voyages = Some(voyages);
        Ok(())
    }

    fn note_ingest(&mut self, stats: &IngestStats) {
        self.counts.messages_decoded = Some(stats.positions);
        self.counts.messages_skipped = Some(stats.skipped());
    }

    fn ensure_voyages(&mut self) -> Result<()> {
        if self.voyages.is_none() {
            let p = art::require(&self.out, art::VOYAGES)?;
            let v = art::read_voyages(&p)?;
            self.counts.voyages = Some(v.len());
            self.voyages = Some(v);
        }
        if self.calls.is_none() {
            let p = art::require(&self.out, art::PORT_CALLS)?;
            let c = art::read_calls(&p)?;
            self.counts.calls = Some(c.len());
            self.calls = Some(c);
        }
        Ok(())
    }

    fn stage_graph(&mut self) -> Result<()> {
        self.ensure_voyages()?;
        let registry = self.registry()?.clone();
        let timeline = build_snapshots(self.voyages.as_ref().expect("loaded"), &registry, None)?;
        if timeline.snapshots.is_empty() {
            return Err(Error::EmptyDataset("voyages"));
        }
        let hash = param_hash(&(&self.config.calls, &self.config.graph));
        art::write_snapshots(&self.path(art::SNAPSHOTS), &hash, &timeline)?;
        let window = self.config.graph.aggregate_months;
        if window > 1 {
            art::write_snapshots(
                &self.path(art::SNAPSHOTS_ROLLING),
                &hash,
                &timeline.rolling(window)?,
            )?;
        }
        self.timeline = Some(timeline);
        Ok(())
    }

    fn ensure_matrices(&mut self) -> Result<()> {
        if self.similarity.is_none() {
            self.similarity = Some(art::read_matrix(&art::require(&self.out, art::SIMILARITY)?)?);
            self.delta = Some(art::read_matrix(&art::require(
                &self.out,
                art::DELTA_SIMILARITY,
            )?)?);
            self.kernel = Some(art::read_matrix(&art::require(&self.out, art::KERNEL)?)?);
        }
        Ok(())
    }

    fn stage_forecast(&mut self) -> Result<()> {
        let cfg = self.config.clone();
        let registry = self.registry()?.clone();
        if self.timeline.is_none() {
            let p = art::require(&self.out, art::SNAPSHOTS)?;
            self.timeline = Some(art::read_snapshots(&p, &registry)?);
        }
        self.ensure_matrices()?;
        self.ensure_clusters()?;
        let exo = match &cfg.inputs.exogenous {
            Some(p) => Some(ExoTable::load(p, &registry)?),
            None => None,
        };
        let fc = &cfg.forecast;
        let builder = EdgeFeatureBuilder::new(
            self.timeline.as_ref().expect("loaded"),
            self.similarity.as_ref().expect("loaded"),
            self.delta.as_ref().expect("loaded"),
            self.labels.as_ref().expect("loaded"),
            &registry,
            exo.as_ref(),
            fc.dataset_params(cfg.seed),
        )?;
        let dataset = assemble_dataset(&builder)?;
        let (first, last) = builder.labeled_months()?;
        let horizon = fc.horizon as i64;
        let eval_start = last - fc.eval_months as i64 + 1;
        if eval_start - horizon - 1 < first {
            return Err(Error::Range(format!(
                "{} labeled months cannot hold {} evaluation months plus a training window",
                last - first + 1,
                fc.eval_months
            )));
        }
        let (train_idx, eval_idx) = chronological_split(&dataset.samples, eval_start);
        let train: Vec<_> = train_idx.iter().map(|&k| &dataset.samples[k]).collect();
        let eval: Vec<_> = eval_idx.iter().map(|&k| &dataset.samples[k]).collect();
        check_no_leakage(train.iter().copied(), eval.iter().copied())?;

        let rows: Vec<&[f64]> = train.iter().map(|s| s.features.as_slice()).collect();
        let scaler = FeatureScaler::fit(&dataset.layout, &rows)?;
        let scale = |set: &[&crate::forecast::EdgeSample]| -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
            let x = set
                .iter()
                .map(|s| scaler.transform(&s.features))
                .collect::<Result<Vec<_>>>()?;
            Ok((x, set.iter().map(|s| s.label).collect()))
        };
        let (x_train, y_train) = scale(&train)?;
        let (x_eval, y_eval) = scale(&eval)?;

        let members = fc
            .l2
            .iter()
            .enumerate()
            .map(|(k, &l2)| {
                train_logistic(
                    &x_train,
                    &y_train,
                    &fc.train_params(l2, cfg.seed.wrapping_add(k as u64)),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let alphas = EnsembleWeights::new(fc.alphas.clone())?;

        let eval_metrics = |preds: &[f64]| match evaluate(preds, &y_eval) {
            Ok(m) => Ok(Some(m)),
            Err(Error::DegenerateLabels(msg)) => {
                log::warn!("evaluation split is single-class ({msg}); metrics omitted");
                Ok(None)
            }
            Err(e) => Err(e),
        };
        let member_preds = members
            .iter()
            .map(|m| x_eval.iter().map(|x| predict(m, x)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let ensemble_preds = (0..x_eval.len())
            .map(|k| {
                let p: Vec<f64> = member_preds.iter().map(|mp| mp[k]).collect();
                ensemble(&p, &alphas)
            })
            .collect::<Result<Vec<_>>>()?;
        let summary = ForecastSummary {
            samples: dataset.samples.len(),
            pairs: dataset.pairs.len(),
            train_samples: train.len(),
            eval_samples: eval.len(),
            train_months: (first, eval_start - horizon - 1),
            eval_months: (eval_start, last),
            members: members
                .iter()
                .zip(&member_preds)
                .map(|(m, p)| {
                    Ok(MemberMetrics {
                        l2: m.l2,
                        final_loss: m.final_loss,
                        eval: eval_metrics(p)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            ensemble_eval: eval_metrics(&ensemble_preds)?,
        };

        let doc = ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            layout: dataset.layout.clone(),
            scaler,
            seed: cfg.seed,
            lags: fc.lags,
            horizon: fc.horizon,
            tau: fc.tau,
            members,
            alphas,
        };

        let (fs, fe) = builder.feature_months()?;
        let ports = registry.ids();
        let n = ports.len();
        let per_month = (fs..=fe)
            .into_par_iter()
            .map(|t| {
                let mut y = Array2::zeros((n, n));
                for &pair in &dataset.pairs {
                    y[[pair.0, pair.1]] = doc.predict_raw(&builder.features(pair, t)?)?;
                }
                Ok((t + horizon, PortMatrix::new(ports.clone(), y)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let predictions: BTreeMap<i64, PortMatrix> = per_month.into_iter().collect();

        let hash = param_hash(&(&cfg.forecast, cfg.seed));
        doc.save(&self.path(art::MODEL))?;
        write_json(&self.path(art::FORECAST_SUMMARY), &summary)?;
        art::write_predictions(&self.path(art::PREDICTIONS), &hash, &predictions)?;
        log::info!(
            "{} samples ({} train, {} eval), ensemble AUC {:?}",
            summary.samples,
            summary.train_samples,
            summary.eval_samples,
            summary.ensemble_eval.map(|m| m.auc)
        );
        self.counts.samples = Some(dataset.samples.len());
        self.predictions = Some(predictions);
        Ok(())
    }

    fn stage_risk(&mut self) -> Result<()> {
        let cfg = self.config.clone();
        let registry = self.registry()?.clone();
        if self.predictions.is_none() {
            let p = art::require(&self.out, art::PREDICTIONS)?;
            self.predictions = Some(art::read_predictions(&p, &registry)?);
        }
        if self.kernel.is_none() {
            self.kernel = Some(art::read_matrix(&art::require(&self.out, art::KERNEL)?)?);
        }
        self.ensure_voyages()?;
        let kernel = self.kernel.as_ref().expect("loaded");
        let predictions = self.predictions.as_ref().expect("loaded");
        let rc = &cfg.risk;

        let adjacency = predictions
            .par_iter()
            .map(|(&month, y)| risk_adjacency(y, kernel, month))
            .collect::<Result<Vec<_>>>()?;
        let exposures = adjacency
            .par_iter()
            .map(|a| Ok((one_hop_exposure(a), multi_hop_exposure(a, rc.gamma, rc.hops)?)))
            .collect::<Result<Vec<_>>>()?;
        let rows = exposure_rows(&exposures);

        let mut what_if_rows = Vec::new();
        for scenario in &rc.what_if {
            for (a, (base1, basem)) in adjacency.iter().zip(&exposures) {
                let mut edges = scenario.edges.clone();
                if let Some(port) = &scenario.inbound {
                    edges.extend(inbound_edges(a, port)?);
                }
                let changed = what_if_reweight(a, &edges, scenario.multiplier)?;
                let e1 = one_hop_exposure(&changed);
                let em = multi_hop_exposure(&changed, rc.gamma, rc.hops)?;
                for (k, port) in a.ports.iter().enumerate() {
                    what_if_rows.push(report::WhatIfRow {
                        scenario: scenario.name.clone(),
                        port_id: port.clone(),
                        month_index: a.month_index,
                        e1: e1.values[k],
                        e_multi: em.values[k],
                        e1_base: base1.values[k],
                        e_multi_base: basem.values[k],
                    });
                }
            }
        }

        let shipments = score_shipments(
            self.voyages.as_ref().expect("loaded"),
            self.calls.as_ref().expect("loaded"),
            kernel,
            rc,
        )?;
        let multi: Vec<ExposureVector> = exposures.iter().map(|(_, m)| m.clone()).collect();
        let triplets = rank_triplets(&multi, &shipments);

        let hash = param_hash(&(&cfg.risk, &cfg.forecast, &cfg.kernel, cfg.seed));
        art::write_exposure(&self.path(art::EXPOSURE), &hash, &rows)?;
        art::write_shipments(&self.path(art::SHIPMENTS), &hash, &shipments)?;
        write_triplets(&self.path(art::TRIPLETS), &hash, &triplets)?;
        let wi = self.path(art::WHAT_IF);
        if rc.what_if.is_empty() {
            if wi.exists() {
                std::fs::remove_file(&wi).map_err(|e| Error::io(&wi, e))?;
            }
        } else {
            report::write_what_if(&wi, &hash, &what_if_rows)?;
        }
        self.counts.triplets = Some(triplets.len());
        Ok(())
    }

    fn stage_report(&mut self) -> Result<()> {
        let cfg = self.config.clone();
        self.ensure_clusters()?;
        let exposure = art::read_exposure(&art::require(&self.out, art::EXPOSURE)?)?;
        let triplets = read_triplets(&art::require(&self.out, art::TRIPLETS)?)?;
        let shipments = art::read_shipments(&art::require(&self.out, art::SHIPMENTS)?)?;
        let what_if = if cfg.risk.what_if.is_empty() {
            Vec::new()
        } else {
            report::read_what_if(&art::require(&self.out, art::WHAT_IF)?)?
        };
        let forecast = read_json_opt::<ForecastSummary>(&self.path(art::FORECAST_SUMMARY))?;
        let ingest = read_json_opt::<IngestStats>(&self.path(art::INGEST_STATS))?;
        if let Some(stats) = &ingest {
            self.note_ingest(stats);
        }
        let report = report::build_report(report::ReportInputs {
            config: &cfg,
            input_sha256: input_hashes(&cfg)?,
            labels: self.labels.as_ref().expect("loaded"),
            exposure: &exposure,
            triplets: &triplets,
            shipments: &shipments,
            what_if: &what_if,
            forecast: forecast.as_ref(),
            ingest: ingest.as_ref(),
        });
        write_json(&self.path(art::REPORT_JSON), &report)?;
        let txt = self.path(art::REPORT_TXT);
        std::fs::write(&txt, report::render_text(&report)).map_err(|e| Error::io(&txt, e))?;
        report::write_exposure_series(&self.path(art::EXPOSURE_SERIES), &exposure)?;
        self.counts.triplets = Some(triplets.len());
        Ok(())
    }

    fn write_manifest(&self) -> Result<RunManifest> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: self.config.clone(),
            input_sha256: input_hashes(&self.config)?,
            stages: self.timings.clone(),
            counts: self.counts.clone(),
        };
        write_json(&self.path(art::MANIFEST), &manifest)?;
        Ok(manifest)
    }
}

/// Validates `config` and runs `from..=to`.
pub fn run_pipeline(config: PipelineConfig, from: Stage, to: Stage) -> Result<RunManifest> {
    Pipeline::new(config)?.run(from, to)
}

pub fn input_hashes(cfg: &PipelineConfig) -> Result<BTreeMap<String, String>> {
    cfg.inputs
        .named()
        .into_iter()
        .map(|(name, path)| Ok((name.to_string(), sha256_file(path)?)))
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json_opt<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>> {
    if !path.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

/// Rows ordered by port, then month.
fn exposure_rows(exposures: &[(ExposureVector, ExposureVector)]) -> Vec<art::ExposureRow> {
    let mut rows: Vec<art::ExposureRow> = exposures
        .iter()
        .flat_map(|(e1, em)| {
            e1.ports.iter().enumerate().map(move |(k, p)| art::ExposureRow {
                port_id: p.clone(),
                month_index: e1.month_index,
                e1: e1.values[k],
                e_multi: em.values[k],
            })
        })
        .collect();
    rows.sort_by(|a, b| a.port_id.cmp(&b.port_id).then(a.month_index.cmp(&b.month_index)));
    rows
}

/// Each voyage scored along the vessel's last `path_hops` voyages ending at
/// its destination, scaled by the dwell there.
pub fn score_shipments(
    voyages: &[Voyage],
    calls: &[PortCall],
    kernel: &KernelMatrix,
    rc: &RiskConfig,
) -> Result<Vec<ShipmentScore>> {
    let dwell: BTreeMap<(u32, &str, i64), f64> = calls
        .iter()
        .map(|c| ((c.mmsi, c.port_id.as_str(), c.arrival), c.dwell_hours))
        .collect();
    let mut by_vessel: BTreeMap<u32, Vec<&Voyage>> = BTreeMap::new();
    for v in voyages {
        by_vessel.entry(v.mmsi).or_default().push(v);
    }
    let mut out = Vec::with_capacity(voyages.len());
    for (mmsi, list) in by_vessel {
        for k in 0..list.len() {
            let mut start = k;
            while start > 0
                && k - start + 1 < rc.path_hops
                && list[start - 1].destination == list[start].origin
            {
                start -= 1;
            }
            let mut path = vec![list[start].origin.clone()];
            path.extend(list[start..=k].iter().map(|v| v.destination.clone()));
            let v = list[k];
            let hours = dwell
                .get(&(mmsi, v.destination.as_str(), v.arrive))
                .copied()
                .ok_or_else(|| {
                    Error::DataIntegrity(format!(
                        "no port call for mmsi {mmsi} arriving at {} at {}",
                        v.destination, v.arrive
                    ))
                })?;
            let factor = residence_factor(hours, rc.residence_scale_hours);
            out.push(shipment_risk(
                mmsi,
                &path,
                v.month_index,
                kernel,
                rc.gamma,
                factor,
            )?);
        }
    }
    Ok(out)
}

fn write_triplets(path: &Path, hash: &str, triplets: &[RankedTriplet]) -> Result<()> {
    let mut w = crate::io::ArtifactWriter::create(path, "risk", hash)?;
    w.row(["rank", "mmsi", "port_id", "month_index", "score", "kind"])?;
    for t in triplets {
        w.row([
            t.rank.to_string(),
            t.mmsi.clone(),
            t.port_id.clone(),
            t.month_index.to_string(),
            crate::io::fmt_f64(t.score),
            t.kind.as_str().to_string(),
        ])?;
    }
    w.finish()
}

pub fn read_triplets(path: &Path) -> Result<Vec<RankedTriplet>> {
    #[derive(Deserialize)]
    struct Row {
        rank: usize,
        mmsi: String,
        port_id: String,
        month_index: i64,
        score: String,
        kind: crate::risk::TripletKind,
    }
    let mut out = Vec::new();
    for (k, row) in crate::io::csv_reader(path)?.deserialize::<Row>().enumerate() {
        let line = k as u64 + 2;
        let row = row.map_err(|e| Error::from(e).at(path, line))?;
        out.push(RankedTriplet {
            rank: row.rank,
            mmsi: row.mmsi,
            port_id: row.port_id,
            month_index: row.month_index,
            score: crate::io::parse_f64(&row.score).map_err(|e| e.at(path, line))?,
            kind: row.kind,
            path: Vec::new(),
        });
    }
    Ok(out)
}
