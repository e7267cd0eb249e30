//! Experiment orchestration: declarative run configuration, deterministic
//! splits, early stopping, and machine-readable metrics.
//!
//! Every piece of randomness in a run derives from the configured seeds, so
//! identical configurations reproduce identical metric records. Wall time is
//! measured for reporting but sits outside the determinism contract; the
//! deterministic view of a record strips it.

mod classification;
mod filter_learning;
mod oracle_suite;
mod theorem;

pub use classification::{run_node_classification, sbm_classify_data, ClassifyData};
pub use filter_learning::{run_filter_learning, run_filter_learning_in, GridContext};
pub use oracle_suite::{
    full_model_gradient_max_error, run_oracle_suite, spectral_equivalence_defect, OracleCheck,
    OracleReport,
};
pub use theorem::{run_theorem_check, TheoremReport};

use crate::graph::GraphError;
use crate::model::{ModelError, ModelVariant};
use crate::spectral::{SpectralError, TargetFilterKind};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("split `{0}` would be empty")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    FilterLearning,
    NodeClassification,
    TheoremCheck,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::FilterLearning => "filter-learning",
            Task::NodeClassification => "node-classification",
            Task::TheoremCheck => "theorem-check",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "filter-learning" => Some(Task::FilterLearning),
            "node-classification" => Some(Task::NodeClassification),
            "theorem-check" => Some(Task::TheoremCheck),
            _ => None,
        }
    }
}

/// Full declarative description of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub k1: usize,
    pub k2: usize,
    pub mlp_layers: usize,
    pub mlp_hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub eta: f64,
    pub xi: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
    pub target_filter: Option<TargetFilterKind>,
    pub split_ratios: (f64, f64, f64),
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub variant: ModelVariant,
    pub detach_consistency_target: bool,
    pub dense_eigen_limit: usize,
    pub sbm_blocks: Vec<usize>,
    pub sbm_p_in: f64,
    pub sbm_p_out: f64,
    pub sbm_feature_noise: f64,
    pub theorem_grid_points: usize,
    pub theorem_clamp: f64,
    pub theorem_steps: usize,
}

impl ExperimentConfig {
    /// Protocol defaults: K1 = K2 = 10, a 2-layer 64-unit MLP, early stopping
    /// 250 within 2000 epochs, unit trade-off weights, five seeds.
    pub fn defaults(task: Task) -> Self {
        Self {
            task,
            k1: 10,
            k2: 10,
            mlp_layers: 2,
            mlp_hidden: 64,
            lr: 0.01,
            weight_decay: 0.0,
            dropout: 0.0,
            eta: 1.0,
            xi: 1.0,
            max_epochs: 2000,
            patience: 250,
            seeds: vec![0, 1, 2, 3, 4],
            target_filter: None,
            split_ratios: (0.6, 0.2, 0.2),
            grid_rows: 30,
            grid_cols: 30,
            variant: ModelVariant::Ergnn,
            detach_consistency_target: false,
            dense_eigen_limit: crate::spectral::DEFAULT_DENSE_LIMIT,
            sbm_blocks: vec![200, 200],
            sbm_p_in: 0.02,
            sbm_p_out: 0.1,
            sbm_feature_noise: 1.0,
            theorem_grid_points: 2001,
            theorem_clamp: 1e-3,
            theorem_steps: 4000,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.patience > self.max_epochs {
            return Err(HarnessError::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(HarnessError::Config(
                "patience and max_epochs must be positive".to_string(),
            ));
        }
        let (a, b, c) = self.split_ratios;
        if (a + b + c - 1.0).abs() > 1e-9 {
            return Err(HarnessError::Config(format!(
                "split ratios {a}/{b}/{c} do not sum to 1"
            )));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".to_string()));
        }
        for p in [self.dropout] {
            if !(0.0..1.0).contains(&p) {
                return Err(HarnessError::Config(format!("dropout {p} outside [0, 1)")));
            }
        }
        if self.eta < 0.0 || self.xi < 0.0 {
            return Err(HarnessError::Config("eta and xi must be nonnegative".to_string()));
        }
        Ok(())
    }
}

/// Disjoint train/validation/test node sets covering every labeled node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMasks {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Floor-allocated split sizes with the remainder distributed in
/// train, validation, test order; the shuffle is a pure function of the seed.
pub fn make_splits(
    num_labeled: usize,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitMasks, HarnessError> {
    let n = num_labeled;
    let mut sizes = [
        (n as f64 * ratios.0).floor() as usize,
        (n as f64 * ratios.1).floor() as usize,
        (n as f64 * ratios.2).floor() as usize,
    ];
    // Hand leftover nodes out train-first, then validation, then test.
    let mut remainder = n - sizes.iter().sum::<usize>();
    let mut slot = 0;
    while remainder > 0 {
        sizes[slot % 3] += 1;
        slot += 1;
        remainder -= 1;
    }
    let [n_train, n_val, n_test] = sizes;
    if n_train == 0 {
        return Err(HarnessError::EmptySplit("train"));
    }
    if n_val == 0 {
        return Err(HarnessError::EmptySplit("val"));
    }
    if n_test == 0 {
        return Err(HarnessError::EmptySplit("test"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut train: Vec<usize> = order[..n_train].to_vec();
    let mut val: Vec<usize> = order[n_train..n_train + n_val].to_vec();
    let mut test: Vec<usize> = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitMasks { train, val, test })
}

/// One machine-readable record per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: String,
    pub target: String,
    pub variant: String,
    pub seed: u64,
    pub metric: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub wall_ms: u64,
}

impl RunRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    /// The record with wall time stripped; this is the view the determinism
    /// guarantee covers.
    pub fn deterministic_view(&self) -> String {
        let mut value = serde_json::to_value(self).expect("record serializes");
        value.as_object_mut().expect("record is an object").remove("wall_ms");
        serde_json::to_string(&value).expect("view serializes")
    }
}

/// Mean and sample standard deviation over the configured seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub task: String,
    pub target: String,
    pub variant: String,
    pub num_seeds: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug)]
pub struct RunMetrics {
    pub records: Vec<RunRecord>,
    pub aggregate: Aggregate,
    pub warnings: Vec<String>,
}

impl RunMetrics {
    pub fn from_records(records: Vec<RunRecord>, warnings: Vec<String>) -> Self {
        assert!(!records.is_empty(), "a run produces at least one record");
        let values: Vec<f64> = records.iter().map(|r| r.metric).collect();
        let (mean, std) = mean_and_sample_std(&values);
        let aggregate = Aggregate {
            task: records[0].task.clone(),
            target: records[0].target.clone(),
            variant: records[0].variant.clone(),
            num_seeds: records.len(),
            mean,
            std,
        };
        Self {
            records,
            aggregate,
            warnings,
        }
    }

    /// Line-delimited records followed by the aggregate line.
    pub fn jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&record.to_json_line());
            out.push('\n');
        }
        out.push_str(
            &serde_json::to_string(&serde_json::json!({ "aggregate": &self.aggregate }))
                .expect("aggregate serializes"),
        );
        out.push('\n');
        out
    }

    /// The deterministic views of all records, in seed order.
    pub fn deterministic_lines(&self) -> Vec<String> {
        self.records.iter().map(RunRecord::deterministic_view).collect()
    }

    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<20} {:<10} {:<15} {:>6} {:>14} {:>11} {:>11} {:>9}\n",
            "task", "target", "variant", "seed", "metric", "best_epoch", "epochs_run", "wall_ms"
        ));
        for r in &self.records {
            out.push_str(&format!(
                "{:<20} {:<10} {:<15} {:>6} {:>14.6} {:>11} {:>11} {:>9}\n",
                r.task, r.target, r.variant, r.seed, r.metric, r.best_epoch, r.epochs_run, r.wall_ms
            ));
        }
        out.push_str(&format!(
            "aggregate over {} seeds: mean {:.6} std {:.6}\n",
            self.aggregate.num_seeds, self.aggregate.mean, self.aggregate.std
        ));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

/// Two-pass mean and sample (n-1) standard deviation.
pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_divide_exactly_when_possible() {
        let s = make_splits(10, (0.6, 0.2, 0.2), 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));
    }

    #[test]
    fn split_remainder_goes_to_train_first() {
        let s = make_splits(11, (0.6, 0.2, 0.2), 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 2, 2));
    }

    #[test]
    fn splits_are_deterministic_and_disjoint() {
        let a = make_splits(50, (0.6, 0.2, 0.2), 42).unwrap();
        let b = make_splits(50, (0.6, 0.2, 0.2), 42).unwrap();
        assert_eq!(a, b);
        let c = make_splits(50, (0.6, 0.2, 0.2), 43).unwrap();
        assert_ne!(a, c);

        let mut all: Vec<usize> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn empty_split_is_an_error() {
        assert!(matches!(
            make_splits(3, (0.6, 0.2, 0.2), 0),
            Err(HarnessError::EmptySplit(_))
        ));
    }

    #[test]
    fn aggregate_uses_sample_std() {
        let (mean, std) = mean_and_sample_std(&[1.0, 2.0, 3.0, 4.0]);
        assert!((mean - 2.5).abs() < 1e-15);
        // Sample variance of 1..4 is 5/3.
        assert!((std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let (_, single) = mean_and_sample_std(&[7.0]);
        assert_eq!(single, 0.0);
    }

    #[test]
    fn deterministic_view_drops_wall_time_only() {
        let mut r = RunRecord {
            task: "filter-learning".to_string(),
            target: "low".to_string(),
            variant: "ergnn".to_string(),
            seed: 3,
            metric: 0.125,
            best_epoch: 17,
            epochs_run: 42,
            wall_ms: 999,
        };
        let v1 = r.deterministic_view();
        r.wall_ms = 1;
        assert_eq!(v1, r.deterministic_view());
        r.metric = 0.5;
        assert_ne!(v1, r.deterministic_view());
    }

    #[test]
    fn config_validation_catches_bad_ratios_and_patience() {
        let mut cfg = ExperimentConfig::defaults(Task::FilterLearning);
        cfg.split_ratios = (0.5, 0.2, 0.2);
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::defaults(Task::FilterLearning);
        cfg.patience = cfg.max_epochs + 1;
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::defaults(Task::TheoremCheck).validate().is_ok());
    }
}
