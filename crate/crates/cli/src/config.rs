//! Experiment configuration (TOML). Unknown keys are rejected everywhere.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use kstep::models::{ModelKind, ModelSpec};
use kstep::tasks::Task;
use kstep::trainer::{Estimator, OptimizerKind, Stage, TrainConfig};
use kstep::{ClipRange, Vocabulary};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArchConfig {
    Linear,
    Mlp1 { hidden_width: usize },
}

impl ArchConfig {
    pub fn kind(self) -> ModelKind {
        match self {
            ArchConfig::Linear => ModelKind::Linear,
            ArchConfig::Mlp1 { hidden_width } => ModelKind::Mlp1 { hidden_width },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    pub arch: ArchConfig,
    pub corpus_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentConfig {
    pub arch: ArchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredistillConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub grad_accum: usize,
    pub optimizer: OptimizerKind,
    pub eval_every: usize,
    pub clip: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_inputs: usize,
    pub validation_inputs: usize,
    pub test_inputs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub samples_per_input: usize,
    pub n_inputs: usize,
    pub kl_bucket_epochs: Vec<usize>,
    /// Replace the MDP with the synthetic iid construction.
    pub iid: bool,
    pub iid_samples: usize,
    pub iid_sigma2_sa: f64,
    pub iid_sigma2_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub vocab_size: usize,
    pub horizon: usize,
    pub window: usize,
    pub k_list: Vec<usize>,
    pub baselines: Vec<String>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub teacher: TeacherConfig,
    pub student: StudentConfig,
    pub predistill: PredistillConfig,
    pub rl: RlConfig,
    pub data: DataConfig,
    pub sweep: SweepConfig,
}

pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn default_config() -> Self {
        Self::parse(DEFAULT_CONFIG).expect("bundled default config is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let vocab = self.vocabulary()?;
        if self.k_list.is_empty() {
            return bad("k_list is empty".into());
        }
        if self.k_list.contains(&0) {
            return bad("k_list entries must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds is empty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        for b in &self.baselines {
            match Estimator::parse(b) {
                Ok(Estimator::MeanBaseline | Estimator::MinVarBaseline) => {}
                _ => return bad(format!("unknown baseline `{b}`")),
            }
        }
        if self.window == 0 || self.horizon == 0 {
            return bad("window and horizon must be at least 1".into());
        }
        match self.task {
            Task::Copy { length } | Task::Reverse { length } if vocab.size() < 4 || length == 0 => {
                return bad("copy/reverse needs length >= 1 and at least one content token".into())
            }
            _ => {}
        }
        kstep::tasks::TaskSampler::new(self.task, vocab).map_err(|e| CliError::Config(e.to_string()))?;
        if self.teacher.corpus_size == 0 {
            return bad("teacher.corpus_size must be at least 1".into());
        }
        if self.data.train_inputs == 0 || self.data.test_inputs == 0 {
            return bad("data.train_inputs and data.test_inputs must be at least 1".into());
        }
        if self.sweep.samples_per_input < 2 {
            return bad("sweep.samples_per_input must be at least 2".into());
        }
        if self.sweep.n_inputs == 0 || self.sweep.kl_bucket_epochs.is_empty() {
            return bad("sweep needs inputs and at least one kl bucket".into());
        }
        self.clip()?;
        for cfg in [self.predistill_config(0), self.rl_config(Estimator::Llmr, 0)] {
            cfg?.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.teacher.lr.is_nan() || self.teacher.lr <= 0.0 || self.teacher.batch_size == 0 {
            return bad("teacher.lr must be positive and teacher.batch_size at least 1".into());
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> CliResult<Vocabulary> {
        Vocabulary::with_size(self.vocab_size).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn teacher_spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.teacher.arch.kind(),
            window: self.window,
        }
    }

    pub fn student_spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.student.arch.kind(),
            window: self.window,
        }
    }

    /// Estimators compared by a K-sweep: one per K, then the baselines.
    pub fn methods(&self) -> Vec<Estimator> {
        let mut out: Vec<Estimator> = self.k_list.iter().map(|&k| Estimator::KStep(k)).collect();
        out.extend(self.baselines.iter().map(|b| Estimator::parse(b).expect("validated")));
        out
    }

    pub fn clip(&self) -> CliResult<ClipRange> {
        ClipRange::new(self.rl.clip[0], self.rl.clip[1]).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn predistill_config(&self, seed: u64) -> CliResult<TrainConfig> {
        Ok(TrainConfig {
            stage: Stage::Predistill,
            estimator: Estimator::Llmr,
            lr: self.predistill.lr,
            batch_size: self.predistill.batch_size,
            epochs: self.predistill.epochs,
            horizon: self.horizon,
            seed,
            ..TrainConfig::default()
        })
    }

    pub fn rl_config(&self, estimator: Estimator, seed: u64) -> CliResult<TrainConfig> {
        Ok(TrainConfig {
            stage: Stage::Rl,
            estimator,
            lr: self.rl.lr,
            batch_size: self.rl.batch_size,
            epochs: 0,
            iterations: self.rl.iterations,
            horizon: self.horizon,
            grad_accum: self.rl.grad_accum,
            seed,
            clip: self.clip()?,
            optimizer: self.rl.optimizer,
            eval_every: self.rl.eval_every,
        })
    }
}
