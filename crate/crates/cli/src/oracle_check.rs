//! Small-instance self-check of the estimators against exact enumeration.

use std::path::Path;

use kstep::exec::substream;
use kstep::models::{LogitModel, ModelKind};
use kstep::oracle::{
    check_gradient, enumerate_trajectories, exact_moments, montecarlo_convergence, EnumerationSpec, ReportLine,
    GRADIENT_TOLERANCE, Z_FLAG,
};
use kstep::returns::ReturnConfig;
use kstep::seqmdp::{State, Vocabulary};
use kstep::teacher::TeacherQ;
use rand::Rng;

use crate::error::{CliError, CliResult, StageContext};
use crate::pipeline::write_file;

fn line(metric: impl Into<String>, value: f64, threshold: f64) -> ReportLine {
    ReportLine {
        metric: metric.into(),
        value,
        threshold,
        pass: value <= threshold,
    }
}

fn random_instance(
    seed: u64,
    kind: ModelKind,
    horizon: usize,
) -> kstep::Result<(EnumerationSpec, TeacherQ, LogitModel)> {
    let vocab = Vocabulary::with_size(3)?;
    let spec = EnumerationSpec::new(vocab, horizon, State::initial(vocab, &[])?)?;
    let mut rng = substream(seed, 0);
    let teacher = TeacherQ::tabular_complete(vocab, 2, |_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())?;
    let policy = LogitModel::init_uniform(kind, vocab, 2, &mut rng)?;
    let scaled = policy.params().iter().map(|p| p * 10.0).collect();
    Ok((spec, teacher, policy.with_params(scaled)?))
}

pub fn oracle_report(seed: u64) -> CliResult<Vec<ReportLine>> {
    let mut lines = Vec::new();
    for (name, kind) in [
        ("linear", ModelKind::Linear),
        ("mlp1", ModelKind::Mlp1 { hidden_width: 4 }),
    ] {
        let (spec, teacher, policy) = random_instance(seed, kind, 4).stage("oracle-setup", Some(seed))?;
        let total: f64 = enumerate_trajectories(&spec, &policy)
            .stage("enumerate", Some(seed))?
            .iter()
            .map(|x| x.1)
            .sum();
        lines.push(line(format!("{name}.probability_gap"), (total - 1.0).abs(), 1e-10));
        let grad = check_gradient(&policy, &spec, &teacher, &ReturnConfig::one_step(), 1e-5)
            .stage("check-gradient", Some(seed))?;
        lines.push(line(
            format!("{name}.gradient_max_error"),
            grad.max_error,
            GRADIENT_TOLERANCE,
        ));
        let m = exact_moments(&spec, &policy, &teacher, &ReturnConfig::one_step()).stage("moments", Some(seed))?;
        let b = m.steps.iter().map(|s| s.bias.abs()).fold(0.0, f64::max);
        lines.push(line(format!("{name}.k1_max_abs_bias"), b, 0.0));
    }
    let (spec, teacher, policy) = random_instance(seed, ModelKind::Linear, 4).stage("oracle-setup", Some(seed))?;
    for k in [2, 3] {
        let report = montecarlo_convergence(
            &policy,
            &spec,
            &teacher,
            &ReturnConfig::k(k).expect("K >= 1"),
            100_000,
            seed,
        )
        .stage("montecarlo", Some(seed))?;
        let z = report.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
        lines.push(line(format!("linear.k{k}.montecarlo_max_abs_z"), z, Z_FLAG));
    }
    Ok(lines)
}

pub fn format_text(lines: &[ReportLine]) -> String {
    lines
        .iter()
        .map(|l| {
            format!(
                "{:<32} {:>12.3e} <= {:<10.1e} {}\n",
                l.metric,
                l.value,
                l.threshold,
                if l.pass { "pass" } else { "FAIL" }
            )
        })
        .collect()
}

pub fn write_report(lines: &[ReportLine], out: &Path) -> CliResult<()> {
    let mut buf = Vec::new();
    kstep::oracle::write_report_csv(&mut buf, lines).stage("oracle-report", None)?;
    write_file(&out.join("oracle_report.csv"), buf)
}

/// Error naming every failed metric, if any.
pub fn verdict(lines: &[ReportLine]) -> CliResult<()> {
    let failed: Vec<_> = lines.iter().filter(|l| !l.pass).map(|l| l.metric.clone()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::OracleFailed(failed.join(", ")))
    }
}
