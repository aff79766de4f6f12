use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use kstep::models::{Checkpoint, LogitModel};
use kstep::tasks;
use kstep::teacher::TeacherQ;
use kstep::trainer::Estimator;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult, StageContext};
use crate::{oracle_check, pipeline, plots, sweep};

#[derive(Debug, Parser)]
#[command(name = "kstep", version, about = "K-step return distillation experiments")]
pub struct Cli {
    /// Experiment config (TOML). Defaults to the bundled desk-scale config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory. Defaults to the config's `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for single-stage commands; restricts sweeps to this seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus, one eos-terminated sequence per line.
    GenCorpus {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Fit a teacher on a corpus file.
    FitTeacher {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Pre-distill a freshly initialized student from a teacher.
    Predistill {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// RL-train a student against a teacher.
    Train {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        student: PathBuf,
        /// k<K>, llmr, mean_baseline or minvar_baseline.
        #[arg(long, default_value = "k2")]
        estimator: String,
    },
    /// Full pipeline for every configured method and seed.
    SweepK,
    /// Bias and variance of the K-step return per K and KL bucket.
    SweepBiasVariance {
        /// Use the synthetic iid construction instead of the MDP.
        #[arg(long)]
        iid: bool,
    },
    /// Check estimators against exact enumeration on small instances.
    OracleCheck,
    /// Turn trainlog, summary or bias-variance CSVs into plot data.
    EmitPlots { csv: Vec<PathBuf> },
}

fn load_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default_config(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn load_teacher(path: &Path) -> CliResult<TeacherQ> {
    TeacherQ::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> CliResult<LogitModel> {
    Checkpoint::load(path)
        .and_then(|c| LogitModel::from_checkpoint(&c))
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn run(cli: Cli) -> CliResult<String> {
    kstep::exec::init_threads(cli.threads);
    let cfg = load_config(&cli)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let seed = cfg.seeds[0];
    match cli.command {
        Command::GenCorpus { n, file } => {
            let corpus = pipeline::gen_corpus(&cfg, n.unwrap_or(cfg.teacher.corpus_size), seed)?;
            let path = file.unwrap_or_else(|| out.join("corpus.txt"));
            pipeline::write_file(&path, tasks::format_corpus(&corpus))?;
            Ok(format!("wrote {} sequences to {}", corpus.len(), path.display()))
        }
        Command::FitTeacher { corpus } => {
            let seqs = tasks::read_corpus(&corpus, cfg.vocabulary()?).stage("read-corpus", Some(seed))?;
            let teacher = pipeline::fit_teacher(&cfg, &seqs, seed)?;
            let path = out.join("teacher.json");
            pipeline::write_file(&path, teacher.to_json().stage("checkpoint", Some(seed))?)?;
            Ok(format!("wrote {}", path.display()))
        }
        Command::Predistill { teacher, epochs } => {
            let teacher = load_teacher(&teacher)?;
            let inputs = pipeline::inputs(&cfg, seed)?;
            let init = pipeline::init_student(&cfg, seed)?;
            let student = pipeline::predistill(
                &cfg,
                &init,
                &teacher,
                &inputs.data.train,
                epochs.unwrap_or(cfg.predistill.epochs),
                seed,
            )?;
            let path = out.join("predistilled.json");
            pipeline::write_model(&path, &student)?;
            Ok(format!("wrote {}", path.display()))
        }
        Command::Train {
            teacher,
            student,
            estimator,
        } => {
            let estimator = Estimator::parse(&estimator).map_err(|e| CliError::Config(e.to_string()))?;
            let teacher = load_teacher(&teacher)?;
            let student = load_model(&student)?;
            let inputs = pipeline::inputs(&cfg, seed)?;
            let ctx = pipeline::SeedContext {
                seed,
                corpus: Vec::new(),
                teacher,
                inputs,
                student_init: student.clone(),
                predistilled: student,
            };
            let run = pipeline::run_method(&cfg, &ctx, estimator)?;
            pipeline::write_run_artifacts(&out, &ctx, estimator, &run)?;
            Ok(format!(
                "{}: test return {:.4}",
                pipeline::run_dir(&out, estimator, seed).display(),
                run.summary.test_return
            ))
        }
        Command::SweepK => {
            let rows = pipeline::run_pipeline(&cfg, &out)?;
            Ok(format!(
                "{} runs, summary at {}",
                rows.len(),
                out.join("summary.csv").display()
            ))
        }
        Command::SweepBiasVariance { iid } => {
            let mut cfg = cfg;
            cfg.sweep.iid |= iid;
            let rows = sweep::sweep_bias_variance(&cfg, &out)?;
            Ok(format!(
                "{} rows in {}",
                rows.len(),
                out.join("bias_variance.csv").display()
            ))
        }
        Command::OracleCheck => {
            let lines = oracle_check::oracle_report(seed)?;
            let text = oracle_check::format_text(&lines);
            oracle_check::write_report(&lines, &out)?;
            print!("{text}");
            oracle_check::verdict(&lines)?;
            Ok(format!("report at {}", out.join("oracle_report.csv").display()))
        }
        Command::EmitPlots { csv } => {
            let written = plots::emit_plots(&csv, &out)?;
            Ok(written
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join("\n"))
        }
    }
}
