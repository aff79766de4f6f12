//! Bias and variance of the K-step return against the actual return, per K
//! and per pre-distillation level of the student.

use std::path::Path;

use kstep::exec::{self, stream_id, substream, Execution};
use kstep::models::LogitModel;
use kstep::returns::{self, IidConstruction, ReturnConfig};
use kstep::seqmdp::{rollout, Policy, RolloutMode, State, Trajectory};
use kstep::teacher::TeacherQ;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult, StageContext};
use crate::pipeline::{self, write_file, STREAM_SWEEP_INPUTS};

pub const BIAS_VARIANCE_HEADER: [&str; 9] = [
    "seed",
    "K",
    "kl_bucket",
    "measured_kl",
    "mean_bias",
    "mean_abs_bias",
    "mean_variance",
    "mean_var_actual",
    "n_inputs",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceRow {
    pub seed: u64,
    #[serde(rename = "K")]
    pub k: usize,
    /// Pre-distillation epochs of the student, or `iid`.
    pub kl_bucket: String,
    pub measured_kl: f64,
    pub mean_bias: f64,
    pub mean_abs_bias: f64,
    pub mean_variance: f64,
    pub mean_var_actual: f64,
    pub n_inputs: usize,
}

impl BiasVarianceRow {
    pub fn variance_ratio(&self) -> f64 {
        self.mean_variance / self.mean_var_actual
    }
}

const SAMPLE_MAJOR: u64 = 1 << 20;
const DIAGNOSTIC_INPUTS: usize = 4;

/// Mean `KL(student || teacher softmax)` over the visited states.
fn mean_kl(student: &LogitModel, teacher: &TeacherQ, samples: &[Vec<Trajectory>]) -> kstep::Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for traj in samples.iter().flatten() {
        for step in traj.steps() {
            total += student.forward(&step.state)?.kl(&teacher.distribution(&step.state)?);
            n += 1;
        }
    }
    Ok(total / n.max(1) as f64)
}

fn draw_samples(
    student: &LogitModel,
    inputs: &[State],
    per_input: usize,
    horizon: usize,
    seed: u64,
    bucket: usize,
) -> kstep::Result<Vec<Vec<Trajectory>>> {
    exec::map_indexed(inputs.len(), Execution::Parallel, |i| {
        let mut rng = substream(seed, stream_id(SAMPLE_MAJOR + bucket as u64, i as u64));
        (0..per_input)
            .map(|_| rollout(student, &inputs[i], horizon, RolloutMode::Sample, &mut rng))
            .collect::<kstep::Result<Vec<_>>>()
    })
    .into_iter()
    .collect()
}

pub struct SweepOutput {
    pub rows: Vec<BiasVarianceRow>,
    pub diagnostics: Vec<returns::DiagnosticRow>,
}

/// Sweep on the MDP for one seed.
pub fn sweep_seed(cfg: &ExperimentConfig, seed: u64) -> CliResult<SweepOutput> {
    let corpus = pipeline::gen_corpus(cfg, cfg.teacher.corpus_size, seed)?;
    let teacher = pipeline::fit_teacher(cfg, &corpus, seed)?;
    let inputs = pipeline::inputs(cfg, seed)?;
    let init = pipeline::init_student(cfg, seed)?;
    let sampler = pipeline::sampler(cfg)?;
    let sweep_inputs = sampler
        .sample_inputs(
            cfg.sweep.n_inputs,
            cfg.horizon + sampler.source_len(),
            &mut substream(seed, STREAM_SWEEP_INPUTS),
        )
        .stage("sweep-inputs", Some(seed))?;
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for (bucket, &epochs) in cfg.sweep.kl_bucket_epochs.iter().enumerate() {
        let student = pipeline::predistill(cfg, &init, &teacher, &inputs.data.train, epochs, seed)?;
        let samples = draw_samples(
            &student,
            &sweep_inputs,
            cfg.sweep.samples_per_input,
            cfg.horizon,
            seed,
            bucket,
        )
        .stage("sweep-sample", Some(seed))?;
        let kl = mean_kl(&student, &teacher, &samples).stage("sweep-kl", Some(seed))?;
        for &k in &cfg.k_list {
            let rc = ReturnConfig::new(k, cfg.clip()?).map_err(|e| CliError::Config(e.to_string()))?;
            let stats = exec::map_slice(&samples, Execution::Parallel, |trajs| {
                returns::estimator_stats(trajs, &teacher, &rc, 0, Execution::Sequential)
            })
            .into_iter()
            .collect::<kstep::Result<Vec<_>>>()
            .stage("sweep-stats", Some(seed))?;
            let n = stats.len() as f64;
            rows.push(BiasVarianceRow {
                seed,
                k,
                kl_bucket: epochs.to_string(),
                measured_kl: kl,
                mean_bias: stats.iter().map(|s| s.bias()).sum::<f64>() / n,
                mean_abs_bias: stats.iter().map(|s| s.bias().abs()).sum::<f64>() / n,
                mean_variance: stats.iter().map(|s| s.var_k_hat()).sum::<f64>() / n,
                mean_var_actual: stats.iter().map(|s| s.var_actual()).sum::<f64>() / n,
                n_inputs: stats.len(),
            });
            if bucket == 0 {
                for (i, trajs) in samples.iter().take(DIAGNOSTIC_INPUTS).enumerate() {
                    for (j, traj) in trajs.iter().enumerate() {
                        let est = returns::estimate(traj, &teacher, &rc).stage("sweep-diagnostics", Some(seed))?;
                        let id = i * cfg.sweep.samples_per_input + j;
                        diagnostics.extend(returns::diagnostic_rows(id, &est, k));
                    }
                }
            }
        }
    }
    Ok(SweepOutput { rows, diagnostics })
}

/// Sweep on the synthetic iid construction; one row per K.
pub fn sweep_iid(cfg: &ExperimentConfig, seed: u64) -> Vec<BiasVarianceRow> {
    let cons = IidConstruction {
        sigma2_sa: cfg.sweep.iid_sigma2_sa,
        sigma2_s: cfg.sweep.iid_sigma2_s,
        span: cfg.horizon,
    };
    let report = cons.measure(&cfg.k_list, cfg.sweep.iid_samples, seed, Execution::Parallel);
    cfg.k_list
        .iter()
        .zip(&report.k_hat)
        .map(|(&k, m)| {
            let bias = m.mean() - report.actual.mean();
            BiasVarianceRow {
                seed,
                k,
                kl_bucket: "iid".into(),
                measured_kl: 0.0,
                mean_bias: bias,
                mean_abs_bias: bias.abs(),
                mean_variance: m.sample_variance(),
                mean_var_actual: report.actual.sample_variance(),
                n_inputs: cfg.sweep.iid_samples,
            }
        })
        .collect()
}

pub fn bias_variance_csv(rows: &[BiasVarianceRow]) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(BIAS_VARIANCE_HEADER).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| CliError::io("<bias-variance>", e.into_error()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Stage {
        stage: "csv",
        seed: None,
        source: e.into(),
    }
}

/// Runs the sweep for every configured seed and writes
/// `bias_variance.csv` (and `diagnostics.csv` on the MDP).
pub fn sweep_bias_variance(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<BiasVarianceRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    if cfg.sweep.iid {
        for &seed in &cfg.seeds {
            rows.extend(sweep_iid(cfg, seed));
        }
    } else {
        let outputs = exec::map_slice(&cfg.seeds, Execution::Parallel, |&seed| sweep_seed(cfg, seed))
            .into_iter()
            .collect::<CliResult<Vec<_>>>()?;
        let mut buf = Vec::new();
        returns::write_diagnostics(&mut buf, &outputs[0].diagnostics).stage("diagnostics", None)?;
        write_file(&out.join("diagnostics.csv"), buf)?;
        for o in outputs {
            rows.extend(o.rows);
        }
    }
    write_file(&out.join("bias_variance.csv"), bias_variance_csv(&rows)?)?;
    Ok(rows)
}
