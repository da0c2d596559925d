use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use siot_alloc::community::CandidateMode;
use siot_alloc::config::RunConfig;
use siot_alloc::dataset::TaskRequest;
use siot_alloc::learner::Variant;
use siot_alloc::pipeline::{
    self, load_assignments, load_bundle, load_experience_rows, load_trained_model, Artifacts,
};

#[derive(Debug, Parser)]
#[command(
    name = "siot-alloc",
    about = "Social-IoT edge-computer allocation: graphs, communities, RT models, matching",
    version
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Candidate-set mode override.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<CandidateMode>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

fn parse_mode(s: &str) -> Result<CandidateMode, String> {
    match s {
        "intersection" => Ok(CandidateMode::Intersection),
        "union" => Ok(CandidateMode::Union),
        other => Err(format!("unknown mode {other:?} (use intersection|union)")),
    }
}

fn parse_models(s: &str) -> Result<Variant, String> {
    match s {
        "dt" => Ok(Variant::DecisionTree),
        "rf" => Ok(Variant::RandomForest),
        "gbr" => Ok(Variant::GradientBoosting),
        other => Err(format!("unknown model {other:?} (use dt|rf|gbr)")),
    }
}

#[derive(Debug, Clone, Args)]
struct ModelSelection {
    /// Comma-separated model variants.
    #[arg(long, value_delimiter = ',', value_parser = parse_models,
          default_values = ["dt", "rf", "gbr"])]
    models: Vec<Variant>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize (or ingest) the device/owner/meeting dataset.
    Generate,
    /// Build the social relation graphs from the dataset artifacts.
    BuildGraphs,
    /// Detect communities on each relation graph.
    Communities,
    /// Simulate sharing experiences against the RT oracle.
    Simulate,
    /// Grid-search and train the selected model variants.
    Train(ModelSelection),
    /// Score trained models on the held-out split.
    Evaluate(ModelSelection),
    /// Allocate one task to the best-predicted edge computer.
    Allocate {
        #[arg(long)]
        requester: u32,
        /// Instruction count, millions.
        #[arg(long)]
        ic: f64,
        /// Message size, megabits.
        #[arg(long)]
        m: f64,
        #[arg(long, value_parser = parse_models, default_value = "gbr")]
        model: Variant,
    },
    /// Export figure data: community frequencies and PCD CDFs.
    Report(ModelSelection),
    /// Run every stage end to end.
    Pipeline(ModelSelection),
}

fn build_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seeds = siot_alloc::config::Seeds::from_master(seed);
    }
    if let Some(mode) = cli.mode {
        config.allocation.mode = mode;
    }
    if let Some(out) = &cli.out {
        config.paths.out_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli, config: &RunConfig) -> anyhow::Result<()> {
    let artifacts = Artifacts::new(&config.paths.out_dir);
    match &cli.command {
        Command::Generate => {
            let bundle = pipeline::stage_generate(config, &artifacts)?;
            println!(
                "generated {} devices, {} owner edges, {} meetings -> {}",
                bundle.devices.len(),
                bundle.owner_network.edge_count(),
                bundle.meetings.len(),
                config.paths.out_dir.display()
            );
        }
        Command::BuildGraphs => {
            let bundle = load_bundle(config, &artifacts)?;
            let graphs = pipeline::stage_build_graphs(config, &artifacts, &bundle)?;
            for g in &graphs {
                println!("{}: {} nodes, {} edges", g.kind, g.node_count(), g.edge_count());
            }
        }
        Command::Communities => {
            let bundle = load_bundle(config, &artifacts)?;
            let graphs = pipeline::stage_build_graphs(config, &artifacts, &bundle)?;
            let assignments = pipeline::stage_communities(config, &artifacts, &graphs)?;
            for a in &assignments {
                println!(
                    "{}: {} communities, modularity {:.4}",
                    a.kind,
                    a.community_sizes().len(),
                    a.modularity
                );
            }
        }
        Command::Simulate => {
            let bundle = load_bundle(config, &artifacts)?;
            let experiences = pipeline::stage_simulate(config, &artifacts, &bundle)?;
            let available = experiences.iter().filter(|e| e.observed_rt.is_available()).count();
            println!("simulated {} experiences ({} available)", experiences.len(), available);
        }
        Command::Train(selection) => {
            let experiences = load_experience_rows(&artifacts)?;
            let trained =
                pipeline::stage_train(config, &artifacts, &experiences, &selection.models)?;
            for t in &trained {
                println!("{}: cv best {:?}", t.model.variant, t.grid.best);
            }
        }
        Command::Evaluate(selection) => {
            let experiences = load_experience_rows(&artifacts)?;
            let trained =
                pipeline::stage_train(config, &artifacts, &experiences, &selection.models)?;
            let metrics = pipeline::stage_evaluate(config, &artifacts, &experiences, &trained)?;
            for v in &metrics.variants {
                println!(
                    "{}: pcd {:.3}%  mse {:.6}  mae {:.6}  <5% share {:.1}%",
                    v.variant, v.pcd, v.mse, v.mae, v.share_below_5pct
                );
            }
        }
        Command::Allocate { requester, ic, m, model } => {
            let bundle = load_bundle(config, &artifacts)?;
            let graphs = pipeline::stage_build_graphs(config, &artifacts, &bundle)?;
            let assignments = load_assignments(config, &artifacts)?;
            let trained = load_trained_model(&artifacts, *model)?;
            let request = TaskRequest {
                requester_id: *requester,
                instruction_count_mi: *ic,
                message_size_mb: *m,
            };
            request.validate()?;
            let result = pipeline::stage_allocate(
                config,
                &artifacts,
                &bundle,
                &assignments,
                &graphs,
                &trained,
                &request,
            )?;
            println!("{:>8} {:>12} {:>10} {:>10} {:>6} {:>6}", "edge", "rt_s", "cands", "avail", "sfor", "sor");
            println!("{}", result.table_row());
        }
        Command::Report(selection) => {
            let bundle = load_bundle(config, &artifacts)?;
            let assignments = load_assignments(config, &artifacts)?;
            pipeline::stage_report(config, &artifacts, &bundle, &assignments, &selection.models)?;
            println!("report artifacts written to {}", config.paths.out_dir.display());
        }
        Command::Pipeline(selection) => {
            let metrics = pipeline::run_pipeline(config, &selection.models)?;
            for v in &metrics.variants {
                println!(
                    "{}: pcd {:.3}%  mse {:.6}  mae {:.6}  <5% share {:.1}%",
                    v.variant, v.pcd, v.mse, v.mae, v.share_below_5pct
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let config = match build_config(&cli) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(1);
        }
    };
    match run(&cli, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
