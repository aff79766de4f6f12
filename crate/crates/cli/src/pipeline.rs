//! Teacher fitting, pre-distillation and RL runs for every (method, seed).
//!
//! Layout under the output directory:
//!
//! ```text
//! config.toml                 resolved experiment config
//! metadata.json               wall-clock timestamps (the only non-deterministic file)
//! summary.csv                 one row per run
//! seed-<s>/corpus.txt
//! seed-<s>/teacher.json
//! runs/<method>-seed<s>/predistilled.json
//! runs/<method>-seed<s>/student.json
//! runs/<method>-seed<s>/trainlog.csv
//! runs/<method>-seed<s>/summary.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use kstep::exec::{self, substream, Execution};
use kstep::models::LogitModel;
use kstep::seqmdp::{State, Token};
use kstep::tasks::{self, TaskSampler};
use kstep::teacher::{fit_teacher_logged, TeacherQ};
use kstep::trainer::{self, Dataset, Estimator, TrainOutcome};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult, StageContext};

pub const STREAM_CORPUS: u64 = 1;
pub const STREAM_TEACHER: u64 = 2;
pub const STREAM_INPUTS: u64 = 3;
pub const STREAM_STUDENT: u64 = 4;
pub const STREAM_SWEEP_INPUTS: u64 = 5;

pub const SUMMARY_HEADER: [&str; 8] = [
    "method",
    "seed",
    "K",
    "best_validation",
    "test_return",
    "final_test_return",
    "predistilled_test_return",
    "final_mean_G",
];

pub fn sampler(cfg: &ExperimentConfig) -> CliResult<TaskSampler> {
    TaskSampler::new(cfg.task, cfg.vocabulary()?).map_err(|e| CliError::Config(e.to_string()))
}

fn max_len(cfg: &ExperimentConfig, sampler: &TaskSampler) -> usize {
    cfg.horizon + sampler.source_len()
}

pub fn gen_corpus(cfg: &ExperimentConfig, n: usize, seed: u64) -> CliResult<Vec<Vec<Token>>> {
    if n == 0 {
        return Err(CliError::Config("corpus size must be at least 1".into()));
    }
    let sampler = sampler(cfg)?;
    let mut rng = substream(seed, STREAM_CORPUS);
    Ok((0..n)
        .map(|_| sampler.sample_sequence(max_len(cfg, &sampler), &mut rng))
        .collect())
}

pub fn fit_teacher(cfg: &ExperimentConfig, corpus: &[Vec<Token>], seed: u64) -> CliResult<TeacherQ> {
    let sampler = sampler(cfg)?;
    let t = &cfg.teacher;
    fit_teacher_logged(
        cfg.vocabulary()?,
        corpus,
        sampler.source_len(),
        cfg.teacher_spec(),
        t.epochs,
        t.lr,
        t.batch_size,
        &mut substream(seed, STREAM_TEACHER),
    )
    .map(|(teacher, _)| teacher)
    .stage("fit-teacher", Some(seed))
}

#[derive(Debug, Clone)]
pub struct Inputs {
    pub data: Dataset,
    pub test: Vec<State>,
}

pub fn inputs(cfg: &ExperimentConfig, seed: u64) -> CliResult<Inputs> {
    let sampler = sampler(cfg)?;
    let mut rng = substream(seed, STREAM_INPUTS);
    let len = max_len(cfg, &sampler);
    let mut draw = |n| sampler.sample_inputs(n, len, &mut rng).stage("inputs", Some(seed));
    let train = draw(cfg.data.train_inputs)?;
    let validation = draw(cfg.data.validation_inputs)?;
    let test = draw(cfg.data.test_inputs)?;
    Ok(Inputs {
        data: Dataset { train, validation },
        test,
    })
}

pub fn init_student(cfg: &ExperimentConfig, seed: u64) -> CliResult<LogitModel> {
    LogitModel::from_spec(
        cfg.student_spec(),
        cfg.vocabulary()?,
        &mut substream(seed, STREAM_STUDENT),
    )
    .stage("init-student", Some(seed))
}

pub fn predistill(
    cfg: &ExperimentConfig,
    student: &LogitModel,
    teacher: &TeacherQ,
    inputs: &[State],
    epochs: usize,
    seed: u64,
) -> CliResult<LogitModel> {
    let mut tc = cfg.predistill_config(seed)?;
    tc.epochs = epochs;
    trainer::predistill(student, teacher, inputs, &tc)
        .map(|o| o.student)
        .stage("predistill", Some(seed))
}

/// Everything shared by the runs of one seed.
#[derive(Debug, Clone)]
pub struct SeedContext {
    pub seed: u64,
    pub corpus: Vec<Vec<Token>>,
    pub teacher: TeacherQ,
    pub inputs: Inputs,
    pub student_init: LogitModel,
    pub predistilled: LogitModel,
}

pub fn seed_context(cfg: &ExperimentConfig, seed: u64) -> CliResult<SeedContext> {
    let corpus = gen_corpus(cfg, cfg.teacher.corpus_size, seed)?;
    let teacher = fit_teacher(cfg, &corpus, seed)?;
    let inputs = inputs(cfg, seed)?;
    let student_init = init_student(cfg, seed)?;
    let predistilled = predistill(
        cfg,
        &student_init,
        &teacher,
        &inputs.data.train,
        cfg.predistill.epochs,
        seed,
    )?;
    Ok(SeedContext {
        seed,
        corpus,
        teacher,
        inputs,
        student_init,
        predistilled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub seed: u64,
    #[serde(rename = "K")]
    pub k: usize,
    /// Best greedy validation return seen during RL.
    pub best_validation: f64,
    /// Greedy test return of the best-validation checkpoint.
    pub test_return: f64,
    /// Greedy test return of the last iterate.
    pub final_test_return: f64,
    pub predistilled_test_return: f64,
    pub final_mean_g: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub summary: RunSummary,
    pub outcome: TrainOutcome,
}

pub fn run_method(cfg: &ExperimentConfig, ctx: &SeedContext, estimator: Estimator) -> CliResult<RunResult> {
    let seed = ctx.seed;
    let tc = cfg.rl_config(estimator, seed)?;
    let outcome = trainer::train(&ctx.predistilled, &ctx.teacher, &ctx.inputs.data, &tc).stage("rl", Some(seed))?;
    let eval = |m: &LogitModel| {
        trainer::greedy_eval(m, &ctx.teacher, &ctx.inputs.test, cfg.horizon, tc.clip).stage("eval", Some(seed))
    };
    let summary = RunSummary {
        method: estimator.label(),
        seed,
        k: estimator.segment(),
        best_validation: outcome.best_eval,
        test_return: eval(&outcome.best)?,
        final_test_return: eval(&outcome.student)?,
        predistilled_test_return: eval(&ctx.predistilled)?,
        final_mean_g: outcome.log.last().map_or(f64::NAN, |r| r.mean_return_actual),
    };
    Ok(RunResult { summary, outcome })
}

pub fn run_dir(out: &Path, estimator: Estimator, seed: u64) -> PathBuf {
    out.join("runs").join(format!("{}-seed{seed}", estimator.label()))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn write_model(path: &Path, model: &LogitModel) -> CliResult<()> {
    let text = model.to_checkpoint().to_string_pretty().stage("checkpoint", None)?;
    write_file(path, text)
}

pub fn write_trainlog(path: &Path, log: &[trainer::TrainRecord]) -> CliResult<()> {
    let mut buf = Vec::new();
    trainer::write_train_log(&mut buf, log).stage("trainlog", None)?;
    write_file(path, buf)
}

pub fn write_seed_artifacts(out: &Path, ctx: &SeedContext) -> CliResult<()> {
    let dir = out.join(format!("seed-{}", ctx.seed));
    write_file(&dir.join("corpus.txt"), tasks::format_corpus(&ctx.corpus))?;
    write_file(
        &dir.join("teacher.json"),
        ctx.teacher.to_json().stage("checkpoint", Some(ctx.seed))?,
    )
}

pub fn write_run_artifacts(out: &Path, ctx: &SeedContext, estimator: Estimator, run: &RunResult) -> CliResult<()> {
    let dir = run_dir(out, estimator, ctx.seed);
    write_model(&dir.join("predistilled.json"), &ctx.predistilled)?;
    write_model(&dir.join("student.json"), &run.outcome.best)?;
    write_trainlog(&dir.join("trainlog.csv"), &run.outcome.log)?;
    let json = serde_json::to_string_pretty(&run.summary).expect("summary serializes");
    write_file(&dir.join("summary.json"), json + "\n")
}

pub fn summary_csv(rows: &[RunSummary]) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in rows {
        w.serialize((
            &r.method,
            r.seed,
            r.k,
            r.best_validation,
            r.test_return,
            r.final_test_return,
            r.predistilled_test_return,
            r.final_mean_g,
        ))
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::io("<summary>", e.into_error()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Stage {
        stage: "csv",
        seed: None,
        source: e.into(),
    }
}

fn unix_time() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Fits one teacher per seed, then trains every method on every seed.
/// Runs execute concurrently on the global worker pool.
pub fn run_pipeline(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<RunSummary>> {
    cfg.validate()?;
    let started = unix_time();
    create_dir(out)?;
    write_file(&out.join("config.toml"), cfg.to_toml())?;
    let contexts = exec::map_slice(&cfg.seeds, Execution::Parallel, |&seed| seed_context(cfg, seed))
        .into_iter()
        .collect::<CliResult<Vec<_>>>()?;
    for ctx in &contexts {
        write_seed_artifacts(out, ctx)?;
    }
    let methods = cfg.methods();
    let jobs: Vec<(usize, Estimator)> = contexts
        .iter()
        .enumerate()
        .flat_map(|(i, _)| methods.iter().map(move |&m| (i, m)))
        .collect();
    let summaries = exec::map_slice(&jobs, Execution::Parallel, |&(i, m)| -> CliResult<RunSummary> {
        let run = run_method(cfg, &contexts[i], m)?;
        write_run_artifacts(out, &contexts[i], m, &run)?;
        Ok(run.summary)
    })
    .into_iter()
    .collect::<CliResult<Vec<_>>>()?;
    write_file(&out.join("summary.csv"), summary_csv(&summaries)?)?;
    let meta = serde_json::json!({ "started_unix": started, "finished_unix": unix_time() });
    write_file(&out.join("metadata.json"), meta.to_string() + "\n")?;
    Ok(summaries)
}
