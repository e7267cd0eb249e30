//! Dataset ingestion, configuration parsing, and experiment dispatch for the
//! `ergnn` binary.
//!
//! All file formats are plain text: edge lists, CSV features, one label per
//! line, and `key = value` configuration. Unknown configuration keys are hard
//! errors; silent typos in hyperparameter names are the classic reproduction
//! failure.

#![forbid(unsafe_code)]

use anyhow::{anyhow, bail, Context, Result};
use ergnn_core::graph::{parse_edge_list, Graph};
use ergnn_core::harness::{ExperimentConfig, Task};
use ergnn_core::matrix::Matrix;
use ergnn_core::model::ModelVariant;
use ergnn_core::spectral::TargetFilterKind;
use std::path::Path;

/// A parsed dataset: graph, features, and optional labels.
#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub graph: Graph,
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
    pub class_count: Option<usize>,
}

/// Loads a dataset from an edge list, a CSV feature file, and optionally a
/// label file. The node count is inferred from the edge list as max index
/// plus one; every row count must agree with it.
pub fn ingest_dataset(
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<DatasetBundle> {
    let edge_text = std::fs::read_to_string(edge_path)
        .with_context(|| format!("reading {}", edge_path.display()))?;
    let (edges, num_nodes) =
        parse_edge_list(&edge_text, None, &edge_path.display().to_string())?;
    let graph = Graph::from_edges(&edges, num_nodes)?;

    let features = read_features(feature_path)?;
    if features.rows() != num_nodes {
        bail!(
            "{}: {} feature rows for a {}-node graph",
            feature_path.display(),
            features.rows(),
            num_nodes
        );
    }

    let (labels, class_count) = match label_path {
        Some(path) => {
            let labels = read_labels(path)?;
            if labels.len() != num_nodes {
                bail!(
                    "{}: {} labels for a {}-node graph",
                    path.display(),
                    labels.len(),
                    num_nodes
                );
            }
            let class_count = labels.iter().max().map_or(0, |&m| m + 1);
            (Some(labels), Some(class_count))
        }
        None => (None, None),
    };

    Ok(DatasetBundle {
        graph,
        features,
        labels,
        class_count,
    })
}

/// CSV of decimal reals, one row per node.
fn read_features(path: &Path) -> Result<Matrix> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let field = field.trim();
            let value: f64 = field.parse().map_err(|_| {
                anyhow!(
                    "{}:{}: invalid feature value `{}`",
                    path.display(),
                    lineno + 1,
                    field
                )
            })?;
            row.push(value);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => bail!(
                "{}:{}: row has {} columns, expected {}",
                path.display(),
                lineno + 1,
                row.len(),
                w
            ),
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no feature rows", path.display());
    }
    Ok(Matrix::from_rows(&rows))
}

/// One nonnegative integer per line.
fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut labels = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let label: usize = line.parse().map_err(|_| {
            anyhow!("{}:{}: invalid label `{}`", path.display(), lineno + 1, line)
        })?;
        labels.push(label);
    }
    Ok(labels)
}

/// Parses `key = value` configuration text over the defaults for a task.
/// Unknown keys are hard errors naming the key and line.
pub fn parse_config_text(text: &str, task: Task, source: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::defaults(task);
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{source}:{}: expected `key = value`, got `{line}`", lineno + 1);
        };
        let key = key.trim();
        let value = value.trim();
        apply_key(&mut cfg, key, value)
            .map_err(|e| anyhow!("{source}:{}: {e}", lineno + 1))?;
    }
    cfg.validate().map_err(|e| anyhow!("{source}: {e}"))?;
    Ok(cfg)
}

/// Reads and parses a configuration file; a missing `--config` means pure
/// defaults, handled by the caller.
pub fn parse_config_file(path: &Path, task: Task) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config_text(&text, task, &path.display().to_string())
}

fn apply_key(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| anyhow!("invalid value `{value}` for `{key}`"))
    }
    match key {
        "k1" => cfg.k1 = num(key, value)?,
        "k2" => cfg.k2 = num(key, value)?,
        "mlp_layers" => cfg.mlp_layers = num(key, value)?,
        "mlp_hidden" => cfg.mlp_hidden = num(key, value)?,
        "lr" => cfg.lr = num(key, value)?,
        "weight_decay" => cfg.weight_decay = num(key, value)?,
        "dropout" => cfg.dropout = num(key, value)?,
        "eta" => cfg.eta = num(key, value)?,
        "xi" => cfg.xi = num(key, value)?,
        "max_epochs" => cfg.max_epochs = num(key, value)?,
        "patience" => cfg.patience = num(key, value)?,
        "seeds" => {
            let seeds: Result<Vec<u64>> = value
                .split(',')
                .map(|s| num::<u64>("seeds", s.trim()))
                .collect();
            cfg.seeds = seeds?;
        }
        "filter" => {
            cfg.target_filter = Some(
                TargetFilterKind::parse(value)
                    .ok_or_else(|| anyhow!("unknown filter `{value}`"))?,
            );
        }
        "train_ratio" => cfg.split_ratios.0 = num(key, value)?,
        "val_ratio" => cfg.split_ratios.1 = num(key, value)?,
        "test_ratio" => cfg.split_ratios.2 = num(key, value)?,
        "grid_rows" => cfg.grid_rows = num(key, value)?,
        "grid_cols" => cfg.grid_cols = num(key, value)?,
        "variant" => {
            cfg.variant = ModelVariant::parse(value)
                .ok_or_else(|| anyhow!("unknown variant `{value}`"))?;
        }
        "detach_lr_target" => {
            cfg.detach_consistency_target = match value {
                "true" => true,
                "false" => false,
                _ => bail!("invalid value `{value}` for `detach_lr_target`"),
            };
        }
        "dense_eigen_limit" => cfg.dense_eigen_limit = num(key, value)?,
        "sbm_blocks" => {
            let blocks: Result<Vec<usize>> = value
                .split(',')
                .map(|s| num::<usize>("sbm_blocks", s.trim()))
                .collect();
            cfg.sbm_blocks = blocks?;
        }
        "sbm_p_in" => cfg.sbm_p_in = num(key, value)?,
        "sbm_p_out" => cfg.sbm_p_out = num(key, value)?,
        "sbm_feature_noise" => cfg.sbm_feature_noise = num(key, value)?,
        "theorem_grid_points" => cfg.theorem_grid_points = num(key, value)?,
        "theorem_clamp" => cfg.theorem_clamp = num(key, value)?,
        "theorem_steps" => cfg.theorem_steps = num(key, value)?,
        other => bail!("unknown configuration key `{other}`"),
    }
    Ok(())
}

/// The effective configuration in canonical `key = value` form; re-parsing
/// the echo reproduces the configuration exactly.
pub fn echo_config(cfg: &ExperimentConfig) -> String {
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
    let blocks: Vec<String> = cfg.sbm_blocks.iter().map(usize::to_string).collect();
    let mut out = String::new();
    out.push_str(&format!("# effective configuration ({})\n", cfg.task.name()));
    out.push_str(&format!("k1 = {}\n", cfg.k1));
    out.push_str(&format!("k2 = {}\n", cfg.k2));
    out.push_str(&format!("mlp_layers = {}\n", cfg.mlp_layers));
    out.push_str(&format!("mlp_hidden = {}\n", cfg.mlp_hidden));
    out.push_str(&format!("lr = {}\n", cfg.lr));
    out.push_str(&format!("weight_decay = {}\n", cfg.weight_decay));
    out.push_str(&format!("dropout = {}\n", cfg.dropout));
    out.push_str(&format!("eta = {}\n", cfg.eta));
    out.push_str(&format!("xi = {}\n", cfg.xi));
    out.push_str(&format!("max_epochs = {}\n", cfg.max_epochs));
    out.push_str(&format!("patience = {}\n", cfg.patience));
    out.push_str(&format!("seeds = {}\n", seeds.join(",")));
    if let Some(kind) = &cfg.target_filter {
        out.push_str(&format!("filter = {}\n", kind.name()));
    }
    out.push_str(&format!("train_ratio = {}\n", cfg.split_ratios.0));
    out.push_str(&format!("val_ratio = {}\n", cfg.split_ratios.1));
    out.push_str(&format!("test_ratio = {}\n", cfg.split_ratios.2));
    out.push_str(&format!("grid_rows = {}\n", cfg.grid_rows));
    out.push_str(&format!("grid_cols = {}\n", cfg.grid_cols));
    out.push_str(&format!("variant = {}\n", cfg.variant.name()));
    out.push_str(&format!("detach_lr_target = {}\n", cfg.detach_consistency_target));
    out.push_str(&format!("dense_eigen_limit = {}\n", cfg.dense_eigen_limit));
    out.push_str(&format!("sbm_blocks = {}\n", blocks.join(",")));
    out.push_str(&format!("sbm_p_in = {}\n", cfg.sbm_p_in));
    out.push_str(&format!("sbm_p_out = {}\n", cfg.sbm_p_out));
    out.push_str(&format!("sbm_feature_noise = {}\n", cfg.sbm_feature_noise));
    out.push_str(&format!("theorem_grid_points = {}\n", cfg.theorem_grid_points));
    out.push_str(&format!("theorem_clamp = {}\n", cfg.theorem_clamp));
    out.push_str(&format!("theorem_steps = {}\n", cfg.theorem_steps));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_echoes_full_defaults() {
        let cfg = parse_config_text("", Task::FilterLearning, "empty.cfg").unwrap();
        assert_eq!(cfg, ExperimentConfig::defaults(Task::FilterLearning));
        let echo = echo_config(&cfg);
        assert!(echo.contains("k1 = 10"));
        assert!(echo.contains("mlp_hidden = 64"));
        assert!(echo.contains("patience = 250"));
        assert!(echo.contains("max_epochs = 2000"));
    }

    #[test]
    fn single_override_keeps_other_defaults() {
        let cfg = parse_config_text("k1 = 4\n", Task::FilterLearning, "t.cfg").unwrap();
        assert_eq!(cfg.k1, 4);
        assert_eq!(cfg.k2, 10);
        assert_eq!(cfg.mlp_layers, 2);
    }

    #[test]
    fn misspelled_key_is_an_error_naming_the_key() {
        let err = parse_config_text("k1 = 4\nlearning_rate = 0.1\n", Task::FilterLearning, "t.cfg")
            .unwrap_err();
        let message = format!("{err:#}");
        assert!(message.contains("learning_rate"), "{message}");
        assert!(message.contains("t.cfg:2"), "{message}");
    }

    #[test]
    fn echo_round_trips_to_identical_config() {
        let text = "k1 = 7\nlr = 0.025\nseeds = 5,6,7\nfilter = comb\nvariant = numerator-only\ndropout = 0.15\n";
        let cfg = parse_config_text(text, Task::FilterLearning, "t.cfg").unwrap();
        let reparsed = parse_config_text(&echo_config(&cfg), Task::FilterLearning, "echo").unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn bad_values_report_the_line() {
        let err =
            parse_config_text("k1 = 4\nlr = fast\n", Task::FilterLearning, "t.cfg").unwrap_err();
        assert!(format!("{err:#}").contains("t.cfg:2"));
    }
}
