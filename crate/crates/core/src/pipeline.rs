//! Stage orchestration shared by the CLI subcommands: each stage is a
//! pure function from config (plus prior artifacts) to new artifacts,
//! and the full pipeline is their composition. All files land under the
//! configured output directory; nothing here is time-stamped, so reruns
//! with identical config and seeds are byte-identical.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{allocate, AllocationPolicy, AllocationResult, ModelPredictor};
use crate::community::{louvain, size_summary, CommunityAssignment, CommunitySizeSummary};
use crate::config::RunConfig;
use crate::dataset::{
    generate_meetings, generate_owner_network, generate_synthetic_devices, load_devices,
    load_meetings, save_devices, save_meetings, DatasetBundle, Device, OwnerNetwork, TaskRequest,
};
use crate::learner::{
    evaluate, fit_preprocessor, grid_search, load_model, save_model, split_indices,
    train_with_choice, transform, GridSearchReport, HpChoice, MetricsReport, TrainedModel,
    Variant, VariantGrid,
};
use crate::oracle::{generate_experiences, load_experiences, save_experiences, SharingExperience};
use crate::social::{build_clor, build_sfor, build_sor, RelationKind, SocialGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate,
    BuildGraphs,
    Communities,
    Simulate,
    Train,
    Evaluate,
    Allocate,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Generate => "generate",
            Stage::BuildGraphs => "build-graphs",
            Stage::Communities => "communities",
            Stage::Simulate => "simulate",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Allocate => "allocate",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Error)]
#[error("stage {stage} failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: anyhow::Error,
}

fn at(stage: Stage) -> impl Fn(anyhow::Error) -> PipelineError {
    move |source| PipelineError { stage, source }
}

/// File layout of one run's output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub out_dir: PathBuf,
}

impl Artifacts {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Artifacts { out_dir: out_dir.into() }
    }

    fn path(&self, name: impl AsRef<Path>) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn devices_csv(&self) -> PathBuf {
        self.path("devices.csv")
    }
    pub fn owner_edges_csv(&self) -> PathBuf {
        self.path("owner_edges.csv")
    }
    pub fn meetings_csv(&self) -> PathBuf {
        self.path("meetings.csv")
    }
    pub fn graph_csv(&self, kind: RelationKind) -> PathBuf {
        self.path(format!("graph_{}.csv", kind.to_string().to_lowercase()))
    }
    pub fn communities_json(&self, kind: RelationKind) -> PathBuf {
        self.path(format!("communities_{}.json", kind.to_string().to_lowercase()))
    }
    pub fn community_summary_csv(&self) -> PathBuf {
        self.path("community_summary.csv")
    }
    pub fn experiences_csv(&self) -> PathBuf {
        self.path("experiences.csv")
    }
    pub fn grid_json(&self, variant: Variant) -> PathBuf {
        self.path(format!("grid_{variant}.json"))
    }
    pub fn model_json(&self, variant: Variant) -> PathBuf {
        self.path(format!("model_{variant}.json"))
    }
    pub fn metrics_json(&self) -> PathBuf {
        self.path("metrics.json")
    }
    pub fn pcd_samples_csv(&self, variant: Variant) -> PathBuf {
        self.path(format!("pcd_samples_{variant}.csv"))
    }
    pub fn pcd_cdf_csv(&self, variant: Variant) -> PathBuf {
        self.path(format!("pcd_cdf_{variant}.csv"))
    }
    pub fn type_frequency_csv(&self, kind: RelationKind) -> PathBuf {
        self.path(format!("type_frequency_{}.csv", kind.to_string().to_lowercase()))
    }
    pub fn allocation_json(&self) -> PathBuf {
        self.path("allocation.json")
    }
    pub fn manifest_json(&self) -> PathBuf {
        self.path("manifest.json")
    }

    fn ensure_dir(&self) -> anyhow::Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }
}

/// Generate (or ingest) the dataset bundle and persist it.
pub fn stage_generate(
    config: &RunConfig,
    artifacts: &Artifacts,
) -> Result<DatasetBundle, PipelineError> {
    let run = || -> anyhow::Result<DatasetBundle> {
        artifacts.ensure_dir()?;
        let devices = match &config.paths.devices {
            Some(path) => load_devices(path)?,
            None => generate_synthetic_devices(
                config.dataset.n_devices,
                config.dataset.n_owners,
                config.dataset.geo_box,
                config.seeds.devices(),
            )?,
        };
        let max_owner = devices.iter().map(|d| d.owner_id).max().unwrap_or(0);
        let n_owners = (config.dataset.n_owners as u32).max(max_owner + 1);
        let owner_network = generate_owner_network(
            n_owners,
            config.dataset.ws_k,
            config.dataset.ws_beta,
            config.seeds.owner_network(),
        )?;
        let meetings = match &config.paths.meetings {
            Some(path) => load_meetings(path)?,
            None => generate_meetings(&devices, config.dataset.days, config.seeds.meetings())?,
        };
        let bundle = DatasetBundle { devices, owner_network, meetings };
        bundle.validate()?;
        save_devices(artifacts.devices_csv(), &bundle.devices)?;
        save_meetings(artifacts.meetings_csv(), &bundle.meetings)?;
        save_owner_edges(artifacts.owner_edges_csv(), &bundle.owner_network)?;
        Ok(bundle)
    };
    run().map_err(at(Stage::Generate))
}

fn save_owner_edges(path: PathBuf, network: &OwnerNetwork) -> anyhow::Result<()> {
    let mut out = String::from("owner_a,owner_b\n");
    for (a, b) in network.edges() {
        out.push_str(&format!("{a},{b}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_bundle(config: &RunConfig, artifacts: &Artifacts) -> Result<DatasetBundle, PipelineError> {
    let run = || -> anyhow::Result<DatasetBundle> {
        let devices = load_devices(artifacts.devices_csv())?;
        let meetings = load_meetings(artifacts.meetings_csv())?;
        let max_owner = devices.iter().map(|d| d.owner_id).max().unwrap_or(0);
        let n_owners = (config.dataset.n_owners as u32).max(max_owner + 1);
        let mut owner_network = OwnerNetwork::new(n_owners);
        let text = fs::read_to_string(artifacts.owner_edges_csv())?;
        for line in text.lines().skip(1) {
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| anyhow::anyhow!("malformed owner edge row: {line}"))?;
            owner_network.add_edge(a.trim().parse()?, b.trim().parse()?);
        }
        let bundle = DatasetBundle { devices, owner_network, meetings };
        bundle.validate()?;
        Ok(bundle)
    };
    run().map_err(at(Stage::Generate))
}

/// The social relation graphs the pipeline evaluates: SFOR and SOR,
/// plus CLOR when enabled.
pub fn stage_build_graphs(
    config: &RunConfig,
    artifacts: &Artifacts,
    bundle: &DatasetBundle,
) -> Result<Vec<SocialGraph>, PipelineError> {
    let run = || -> anyhow::Result<Vec<SocialGraph>> {
        artifacts.ensure_dir()?;
        let mut graphs = Vec::new();
        if config.graphs.use_clor {
            graphs.push(build_clor(&bundle.devices, config.graphs.clor_threshold_m)?);
        }
        graphs.push(build_sfor(
            &bundle.devices,
            &bundle.owner_network,
            config.graphs.sfor_max_hops,
        )?);
        graphs.push(build_sor(
            &bundle.devices,
            &bundle.meetings,
            config.graphs.sor_min_meetings,
            config.graphs.sor_min_duration_min,
        )?);
        for graph in &graphs {
            graph.write_edge_csv(artifacts.graph_csv(graph.kind))?;
        }
        Ok(graphs)
    };
    run().map_err(at(Stage::BuildGraphs))
}

pub fn stage_communities(
    config: &RunConfig,
    artifacts: &Artifacts,
    graphs: &[SocialGraph],
) -> Result<Vec<CommunityAssignment>, PipelineError> {
    let run = || -> anyhow::Result<Vec<CommunityAssignment>> {
        artifacts.ensure_dir()?;
        let mut assignments = Vec::new();
        for graph in graphs {
            let assignment = louvain(graph, config.seeds.communities())?;
            let json = serde_json::to_string_pretty(&assignment)?;
            fs::write(artifacts.communities_json(graph.kind), json)?;
            assignments.push(assignment);
        }
        let summaries: Vec<CommunitySizeSummary> =
            assignments.iter().map(|a| size_summary(a, 4)).collect();
        let mut csv = String::from("relation,community,devices\n");
        for summary in &summaries {
            for (label, size) in &summary.communities {
                csv.push_str(&format!("{},{label},{size}\n", summary.kind));
            }
            csv.push_str(&format!("{},others,{}\n", summary.kind, summary.others_devices));
        }
        fs::write(artifacts.community_summary_csv(), csv)?;
        Ok(assignments)
    };
    run().map_err(at(Stage::Communities))
}

pub fn load_assignments(
    config: &RunConfig,
    artifacts: &Artifacts,
) -> Result<Vec<CommunityAssignment>, PipelineError> {
    let run = || -> anyhow::Result<Vec<CommunityAssignment>> {
        let mut kinds = Vec::new();
        if config.graphs.use_clor {
            kinds.push(RelationKind::Clor);
        }
        kinds.extend([RelationKind::Sfor, RelationKind::Sor]);
        let mut assignments = Vec::new();
        for kind in kinds {
            let path = artifacts.communities_json(kind);
            let text = fs::read_to_string(&path).map_err(|e| {
                anyhow::anyhow!("missing artifact {}: {e}", path.display())
            })?;
            assignments.push(serde_json::from_str(&text)?);
        }
        Ok(assignments)
    };
    run().map_err(at(Stage::Communities))
}

pub fn stage_simulate(
    config: &RunConfig,
    artifacts: &Artifacts,
    bundle: &DatasetBundle,
) -> Result<Vec<SharingExperience>, PipelineError> {
    let run = || -> anyhow::Result<Vec<SharingExperience>> {
        artifacts.ensure_dir()?;
        let experiences = generate_experiences(
            &bundle.devices,
            &config.experience_params(),
            config.seeds.experiences(),
        )?;
        save_experiences(artifacts.experiences_csv(), &experiences)?;
        Ok(experiences)
    };
    run().map_err(at(Stage::Simulate))
}

/// One trained variant with its tuning trace and held-out metrics.
#[derive(Debug)]
pub struct TrainedVariant {
    pub grid: GridSearchReport,
    pub model: TrainedModel,
    pub test_metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub best: HpChoice,
    pub cv_mean_pcd: f64,
    pub n_test: usize,
    pub mse: f64,
    pub mae: f64,
    pub raw_mse_s2: f64,
    pub raw_mae_s: f64,
    pub pcd: f64,
    pub share_below_5pct: f64,
}

/// metrics.json: everything needed to compare the variants, stamped
/// with the config fingerprint and seeds for exact reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub config_fingerprint: String,
    pub master_seed: u64,
    pub split_fraction: f64,
    pub n_experiences: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub variants: Vec<VariantSummary>,
}

pub fn stage_train(
    config: &RunConfig,
    artifacts: &Artifacts,
    experiences: &[SharingExperience],
    variants: &[Variant],
) -> Result<Vec<TrainedVariant>, PipelineError> {
    let run = || -> anyhow::Result<Vec<TrainedVariant>> {
        artifacts.ensure_dir()?;
        let (train_idx, test_idx) =
            split_indices(experiences.len(), config.learner.split_fraction, config.seeds.split())?;
        let train_rows: Vec<SharingExperience> =
            train_idx.iter().map(|&i| experiences[i].clone()).collect();
        let test_rows: Vec<SharingExperience> =
            test_idx.iter().map(|&i| experiences[i].clone()).collect();
        let schema = fit_preprocessor(&train_rows)?;
        let train_matrix = transform(&schema, &train_rows)?;
        let test_matrix = transform(&schema, &test_rows)?;

        let mut outputs = Vec::new();
        for &variant in variants {
            let grid_spec = match variant {
                Variant::DecisionTree => VariantGrid::DecisionTree(config.learner.dt.clone()),
                Variant::RandomForest => VariantGrid::RandomForest(config.learner.rf.clone()),
                Variant::GradientBoosting => {
                    VariantGrid::GradientBoosting(config.learner.gbr.clone())
                }
            };
            let grid = grid_search(
                &train_matrix,
                &grid_spec,
                config.learner.k_folds,
                config.seeds.training(),
            )?;
            let model = train_with_choice(&train_matrix, grid.best, config.seeds.training())?;
            let trained = TrainedModel::new(schema.clone(), model);
            let test_metrics = evaluate(&trained.model, &test_matrix)?;
            fs::write(artifacts.grid_json(variant), serde_json::to_string_pretty(&grid)?)?;
            save_model(artifacts.model_json(variant), &trained)?;
            outputs.push(TrainedVariant { grid, model: trained, test_metrics });
        }
        Ok(outputs)
    };
    run().map_err(at(Stage::Train))
}

pub fn stage_evaluate(
    config: &RunConfig,
    artifacts: &Artifacts,
    experiences: &[SharingExperience],
    trained: &[TrainedVariant],
) -> Result<MetricsFile, PipelineError> {
    let run = || -> anyhow::Result<MetricsFile> {
        artifacts.ensure_dir()?;
        let (train_idx, test_idx) =
            split_indices(experiences.len(), config.learner.split_fraction, config.seeds.split())?;
        let mut variants = Vec::new();
        for t in trained {
            let m = &t.test_metrics;
            let below = m.per_sample_pcd.iter().filter(|&&p| p < 5.0).count();
            variants.push(VariantSummary {
                variant: t.model.variant,
                best: t.grid.best,
                cv_mean_pcd: t
                    .grid
                    .cells
                    .iter()
                    .find(|c| c.hp == t.grid.best)
                    .map(|c| c.mean_pcd)
                    .unwrap_or(f64::NAN),
                n_test: m.n,
                mse: m.mse,
                mae: m.mae,
                raw_mse_s2: m.raw_mse,
                raw_mae_s: m.raw_mae,
                pcd: m.pcd,
                share_below_5pct: 100.0 * below as f64 / m.n as f64,
            });
            let mut csv = String::from("sample,pcd\n");
            for (i, p) in m.per_sample_pcd.iter().enumerate() {
                csv.push_str(&format!("{i},{p:.12}\n"));
            }
            fs::write(artifacts.pcd_samples_csv(t.model.variant), csv)?;
        }
        let metrics = MetricsFile {
            config_fingerprint: format!("{:016x}", config.fingerprint()),
            master_seed: config.seeds.master,
            split_fraction: config.learner.split_fraction,
            n_experiences: experiences.len(),
            n_train: train_idx.len(),
            n_test: test_idx.len(),
            variants,
        };
        fs::write(artifacts.metrics_json(), serde_json::to_string_pretty(&metrics)?)?;
        Ok(metrics)
    };
    run().map_err(at(Stage::Evaluate))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationFile {
    pub config_fingerprint: String,
    pub request: TaskRequest,
    pub result: AllocationResult,
}

/// Run one allocation with a trained model and persist it as JSON.
pub fn stage_allocate(
    config: &RunConfig,
    artifacts: &Artifacts,
    bundle: &DatasetBundle,
    assignments: &[CommunityAssignment],
    graphs: &[SocialGraph],
    model: &TrainedModel,
    request: &TaskRequest,
) -> Result<AllocationResult, PipelineError> {
    let run = || -> anyhow::Result<AllocationResult> {
        artifacts.ensure_dir()?;
        let refs: Vec<&CommunityAssignment> = assignments.iter().collect();
        let graph_refs: Vec<&SocialGraph> = graphs.iter().collect();
        let predictor = ModelPredictor { model, oracle: config.oracle };
        let result = allocate(
            request,
            bundle,
            &refs,
            &graph_refs,
            &predictor,
            AllocationPolicy {
                mode: config.allocation.mode,
                fallback_to_union: config.allocation.fallback_to_union,
            },
        )?;
        let file = AllocationFile {
            config_fingerprint: format!("{:016x}", config.fingerprint()),
            request: request.clone(),
            result: result.clone(),
        };
        fs::write(artifacts.allocation_json(), serde_json::to_string_pretty(&file)?)?;
        Ok(result)
    };
    run().map_err(at(Stage::Allocate))
}

/// Figure-data export: the per-community device-type frequency table
/// (small communities folded into "others") and each model's PCD CDF.
pub fn stage_report(
    config: &RunConfig,
    artifacts: &Artifacts,
    bundle: &DatasetBundle,
    assignments: &[CommunityAssignment],
    variants: &[Variant],
) -> Result<(), PipelineError> {
    let run = || -> anyhow::Result<()> {
        artifacts.ensure_dir()?;
        let _ = config;
        let by_id: BTreeMap<u32, &Device> = bundle.devices.iter().map(|d| (d.id, d)).collect();
        for assignment in assignments {
            let summary = size_summary(assignment, 4);
            let kept: Vec<u32> = summary.communities.iter().map(|&(label, _)| label).collect();
            // label -> type -> count; u32::MAX is the "others" bucket.
            let mut table: BTreeMap<u32, BTreeMap<&'static str, usize>> = BTreeMap::new();
            for (&device, &label) in &assignment.labels {
                let slot = if kept.contains(&label) { label } else { u32::MAX };
                let device_type = by_id
                    .get(&device)
                    .ok_or_else(|| anyhow::anyhow!("device {device} missing from bundle"))?
                    .device_type;
                *table.entry(slot).or_default().entry(device_type.as_str()).or_insert(0) += 1;
            }
            let mut csv = String::from("community");
            for t in crate::dataset::DeviceType::ALL {
                csv.push(',');
                csv.push_str(t.as_str());
            }
            csv.push_str(",total\n");
            for (label, counts) in &table {
                if *label == u32::MAX {
                    csv.push_str("others");
                } else {
                    csv.push_str(&label.to_string());
                }
                let mut total = 0;
                for t in crate::dataset::DeviceType::ALL {
                    let c = counts.get(t.as_str()).copied().unwrap_or(0);
                    total += c;
                    csv.push_str(&format!(",{c}"));
                }
                csv.push_str(&format!(",{total}\n"));
            }
            fs::write(artifacts.type_frequency_csv(assignment.kind), csv)?;
        }

        for &variant in variants {
            let path = artifacts.pcd_samples_csv(variant);
            let text = fs::read_to_string(&path).map_err(|e| {
                anyhow::anyhow!("missing artifact {}: {e}", path.display())
            })?;
            let mut samples: Vec<f64> = text
                .lines()
                .skip(1)
                .map(|line| {
                    line.split_once(',')
                        .ok_or_else(|| anyhow::anyhow!("malformed pcd row: {line}"))
                        .and_then(|(_, p)| p.parse::<f64>().map_err(Into::into))
                })
                .collect::<anyhow::Result<_>>()?;
            samples.sort_by(|a, b| a.partial_cmp(b).expect("finite pcd"));
            let n = samples.len();
            let mut csv = String::from("pcd,cumulative_pct\n");
            for (i, p) in samples.iter().enumerate() {
                csv.push_str(&format!("{p:.12},{:.8}\n", 100.0 * (i + 1) as f64 / n as f64));
            }
            fs::write(artifacts.pcd_cdf_csv(variant), csv)?;
        }
        Ok(())
    };
    run().map_err(at(Stage::Report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_fingerprint: String,
    pub seeds: ResolvedSeeds,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSeeds {
    pub master: u64,
    pub owner_network: u64,
    pub devices: u64,
    pub meetings: u64,
    pub communities: u64,
    pub experiences: u64,
    pub split: u64,
    pub training: u64,
}

impl ResolvedSeeds {
    pub fn from_config(config: &RunConfig) -> Self {
        ResolvedSeeds {
            master: config.seeds.master,
            owner_network: config.seeds.owner_network(),
            devices: config.seeds.devices(),
            meetings: config.seeds.meetings(),
            communities: config.seeds.communities(),
            experiences: config.seeds.experiences(),
            split: config.seeds.split(),
            training: config.seeds.training(),
        }
    }
}

pub fn write_manifest(
    config: &RunConfig,
    artifacts: &Artifacts,
    files: &[PathBuf],
) -> anyhow::Result<()> {
    let manifest = Manifest {
        config_fingerprint: format!("{:016x}", config.fingerprint()),
        seeds: ResolvedSeeds::from_config(config),
        artifacts: files
            .iter()
            .map(|p| {
                p.strip_prefix(&artifacts.out_dir)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
    };
    let mut file = fs::File::create(artifacts.manifest_json())?;
    writeln!(file, "{}", serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// The full composition: generate → graphs → communities → simulate →
/// train/evaluate → report → manifest.
pub fn run_pipeline(
    config: &RunConfig,
    variants: &[Variant],
) -> Result<MetricsFile, PipelineError> {
    let artifacts = Artifacts::new(&config.paths.out_dir);
    let bundle = stage_generate(config, &artifacts)?;
    let graphs = stage_build_graphs(config, &artifacts, &bundle)?;
    let assignments = stage_communities(config, &artifacts, &graphs)?;
    let experiences = stage_simulate(config, &artifacts, &bundle)?;
    let trained = stage_train(config, &artifacts, &experiences, variants)?;
    let metrics = stage_evaluate(config, &artifacts, &experiences, &trained)?;
    stage_report(config, &artifacts, &bundle, &assignments, variants)?;

    let mut files = vec![
        artifacts.devices_csv(),
        artifacts.owner_edges_csv(),
        artifacts.meetings_csv(),
        artifacts.community_summary_csv(),
        artifacts.experiences_csv(),
        artifacts.metrics_json(),
    ];
    for graph in &graphs {
        files.push(artifacts.graph_csv(graph.kind));
        files.push(artifacts.communities_json(graph.kind));
        files.push(artifacts.type_frequency_csv(graph.kind));
    }
    for &variant in variants {
        files.push(artifacts.grid_json(variant));
        files.push(artifacts.model_json(variant));
        files.push(artifacts.pcd_samples_csv(variant));
        files.push(artifacts.pcd_cdf_csv(variant));
    }
    write_manifest(config, &artifacts, &files)
        .map_err(at(Stage::Report))?;
    Ok(metrics)
}

pub fn load_experience_rows(
    artifacts: &Artifacts,
) -> Result<Vec<SharingExperience>, PipelineError> {
    load_experiences(artifacts.experiences_csv())
        .map_err(|e| PipelineError { stage: Stage::Simulate, source: e.into() })
}

pub fn load_trained_model(
    artifacts: &Artifacts,
    variant: Variant,
) -> Result<TrainedModel, PipelineError> {
    load_model(artifacts.model_json(variant))
        .map_err(|e| PipelineError { stage: Stage::Allocate, source: e.into() })
}
