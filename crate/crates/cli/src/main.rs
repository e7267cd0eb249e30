use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use ergnn_cli::{echo_config, ingest_dataset, parse_config_file};
use ergnn_core::harness::{
    run_filter_learning, run_node_classification, run_oracle_suite, run_theorem_check,
    sbm_classify_data, ClassifyData, ExperimentConfig, RunMetrics, Task,
};
use ergnn_core::spectral::TargetFilterKind;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ergnn",
    about = "Rational graph filter learning: explicit Chebyshev numerator, MLP denominator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a named spectral filter from processed signals on a grid graph.
    FilterLearn {
        /// key = value configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Target filter: low, high, band, reject, or comb.
        #[arg(long)]
        filter: Option<String>,
        /// Also write the metric records to this file as JSON lines.
        #[arg(long)]
        metrics_out: Option<PathBuf>,
    },
    /// Transductive node classification on a dataset or a synthetic SBM.
    Classify {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Edge list file, one `u v` pair per line.
        #[arg(long, requires = "features", requires = "labels")]
        edges: Option<PathBuf>,
        /// CSV feature file, one row per node.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Label file, one integer per line.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Generate the dataset instead; the only generator is `sbm`.
        #[arg(long, conflicts_with = "edges")]
        synthetic: Option<String>,
        /// Comma-separated block sizes for the SBM generator.
        #[arg(long)]
        blocks: Option<String>,
        #[arg(long)]
        p_in: Option<f64>,
        #[arg(long)]
        p_out: Option<f64>,
        /// Gaussian noise on the one-hot features of the SBM generator.
        #[arg(long)]
        feature_noise: Option<f64>,
        #[arg(long)]
        metrics_out: Option<PathBuf>,
    },
    /// Fit the best polynomial, then improve it by optimizing a denominator.
    TheoremCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        filter: Option<String>,
    },
    /// Run every cross-module oracle and gradient check.
    OracleSuite,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Option<PathBuf>, task: Task) -> Result<ExperimentConfig> {
    match path {
        Some(p) => parse_config_file(p, task),
        None => Ok(ExperimentConfig::defaults(task)),
    }
}

fn resolve_filter(flag: &Option<String>, cfg: &ExperimentConfig) -> Result<TargetFilterKind> {
    if let Some(name) = flag {
        return TargetFilterKind::parse(name)
            .ok_or_else(|| anyhow::anyhow!("unknown filter `{name}`"));
    }
    cfg.target_filter
        .clone()
        .ok_or_else(|| anyhow::anyhow!("no target filter: pass --filter or set `filter` in the config"))
}

fn emit(metrics: &RunMetrics, metrics_out: &Option<PathBuf>) -> Result<()> {
    print!("{}", metrics.jsonl());
    println!();
    print!("{}", metrics.summary_table());
    if let Some(path) = metrics_out {
        std::fs::write(path, metrics.jsonl())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::FilterLearn {
            config,
            filter,
            metrics_out,
        } => {
            let mut cfg = load_config(&config, Task::FilterLearning)?;
            cfg.target_filter = Some(resolve_filter(&filter, &cfg)?);
            eprint!("{}", echo_config(&cfg));
            let metrics = run_filter_learning(&cfg)?;
            emit(&metrics, &metrics_out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Classify {
            config,
            edges,
            features,
            labels,
            synthetic,
            blocks,
            p_in,
            p_out,
            feature_noise,
            metrics_out,
        } => {
            let mut cfg = load_config(&config, Task::NodeClassification)?;
            if let Some(list) = blocks {
                let parsed: Result<Vec<usize>, _> =
                    list.split(',').map(|s| s.trim().parse()).collect();
                cfg.sbm_blocks = parsed.map_err(|_| anyhow::anyhow!("invalid --blocks `{list}`"))?;
            }
            if let Some(p) = p_in {
                cfg.sbm_p_in = p;
            }
            if let Some(p) = p_out {
                cfg.sbm_p_out = p;
            }
            if let Some(s) = feature_noise {
                cfg.sbm_feature_noise = s;
            }
            eprint!("{}", echo_config(&cfg));

            let data: ClassifyData = match (&synthetic, &edges) {
                (Some(kind), _) if kind == "sbm" => {
                    let generator_seed = cfg.seeds.first().copied().unwrap_or(0);
                    sbm_classify_data(
                        &cfg.sbm_blocks,
                        cfg.sbm_p_in,
                        cfg.sbm_p_out,
                        cfg.sbm_feature_noise,
                        generator_seed,
                    )
                }
                (Some(kind), _) => bail!("unknown synthetic dataset `{kind}`"),
                (None, Some(edge_path)) => {
                    let feature_path = features
                        .as_ref()
                        .ok_or_else(|| anyhow::anyhow!("--features is required with --edges"))?;
                    let label_path = labels
                        .as_ref()
                        .ok_or_else(|| anyhow::anyhow!("--labels is required with --edges"))?;
                    let bundle =
                        ingest_dataset(edge_path, feature_path, Some(label_path.as_path()))?;
                    let labels = bundle.labels.expect("labels were requested");
                    let num_classes = bundle.class_count.expect("labels imply classes");
                    ClassifyData {
                        name: edge_path
                            .file_stem()
                            .map(|s| s.to_string_lossy().into_owned())
                            .unwrap_or_else(|| "dataset".to_string()),
                        graph: bundle.graph,
                        features: bundle.features,
                        labels,
                        num_classes,
                    }
                }
                (None, None) => bail!("pass either --synthetic sbm or --edges/--features/--labels"),
            };
            let metrics = run_node_classification(&data, &cfg)?;
            emit(&metrics, &metrics_out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::TheoremCheck { config, filter } => {
            let cfg = load_config(&config, Task::TheoremCheck)?;
            let kind = resolve_filter(&filter, &cfg)?;
            let report = run_theorem_check(
                &kind,
                cfg.k1,
                cfg.k2,
                cfg.theorem_grid_points,
                cfg.theorem_clamp,
                cfg.theorem_steps,
                cfg.lr,
            )?;
            println!("{}", report.summary());
            if report.rational_error <= report.poly_error {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error: rational fit did not reach the polynomial baseline");
                Ok(ExitCode::FAILURE)
            }
        }
        Command::OracleSuite => {
            let report = run_oracle_suite();
            print!("{}", report.summary());
            if report.all_passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
    }
}
