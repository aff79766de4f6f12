//! Exhaustive-enumeration and finite-difference oracles for small instances.
//!
//! Every maximal trajectory (eos-terminated or horizon-truncated) is listed
//! with its exact probability, so expectations, variances and the
//! policy-gradient can be computed as finite sums.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, substream, Execution};
use crate::models::LogitModel;
use crate::returns::{ReturnConfig, ReturnEstimate, StepValues};
use crate::seqmdp::{rollout, Policy, RolloutMode, State, Step, Trajectory, Vocabulary};
use crate::stats::Moments;
use crate::teacher::TeacherQ;
use crate::trainer::{self, Estimator};

pub const MAX_VOCAB: usize = 5;
pub const MAX_HORIZON: usize = 6;
pub const MAX_TRAJECTORIES: usize = 1_000_000;
/// Gradient coordinates smaller than this are compared in absolute terms.
pub const GRADIENT_ERROR_FLOOR: f64 = 1e-3;
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const Z_FLAG: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationSpec {
    pub vocab: Vocabulary,
    pub horizon: usize,
    pub initial: State,
}

impl EnumerationSpec {
    pub fn new(vocab: Vocabulary, horizon: usize, initial: State) -> Result<Self> {
        let spec = Self {
            vocab,
            horizon,
            initial,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab.size() > MAX_VOCAB {
            return Err(Error::SizeBoundExceeded(format!(
                "vocabulary {} > {MAX_VOCAB}",
                self.vocab.size()
            )));
        }
        if self.horizon == 0 || self.horizon > MAX_HORIZON {
            return Err(Error::SizeBoundExceeded(format!(
                "horizon {} outside 1..={MAX_HORIZON}",
                self.horizon
            )));
        }
        if self.initial.is_terminal() {
            return Err(Error::TerminalStep);
        }
        let count = self.trajectory_count();
        if count > MAX_TRAJECTORIES {
            return Err(Error::SizeBoundExceeded(format!("{count} trajectories")));
        }
        Ok(())
    }

    /// Number of maximal trajectories: each non-final step has `V - 1`
    /// continuing actions plus eos.
    pub fn trajectory_count(&self) -> usize {
        let cont = self.vocab.size() - 1;
        let mut total = 0;
        let mut prefixes = 1usize;
        for depth in 0..self.horizon {
            if depth + 1 == self.horizon {
                total += prefixes * self.vocab.size();
            } else {
                total += prefixes;
                prefixes *= cont;
            }
        }
        total
    }
}

/// All maximal trajectories with their probabilities under `policy`.
pub fn enumerate_trajectories<P: Policy + ?Sized>(
    spec: &EnumerationSpec,
    policy: &P,
) -> Result<Vec<(Trajectory, f64)>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.trajectory_count());
    let mut path = Vec::new();
    descend(spec, policy, spec.initial.clone(), 1.0, &mut path, &mut out)?;
    Ok(out)
}

fn descend<P: Policy + ?Sized>(
    spec: &EnumerationSpec,
    policy: &P,
    state: State,
    prob: f64,
    path: &mut Vec<Step>,
    out: &mut Vec<(Trajectory, f64)>,
) -> Result<()> {
    let dist = policy.distribution(&state)?;
    for a in 0..spec.vocab.size() {
        let p = prob * dist.probs()[a];
        path.push(Step {
            state: state.clone(),
            action: a,
            logprob: dist.log_prob(a),
        });
        let next = state.step(a)?;
        if next.is_terminal() || path.len() == spec.horizon {
            let scored: Vec<_> = path.iter().map(|s| (s.action, s.logprob)).collect();
            out.push((Trajectory::from_scored(&path[0].state, &scored)?, p));
        } else {
            descend(spec, policy, next, p, path, out)?;
        }
        path.pop();
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMoments {
    pub t: usize,
    /// Probability that the trajectory has a step `t`.
    pub mass: f64,
    pub expected_g: f64,
    pub expected_g_hat: f64,
    pub var_g: f64,
    pub var_g_hat: f64,
    /// `expected_g_hat - expected_g`.
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactMoments {
    /// Per-step moments, conditioned on the step existing.
    pub steps: Vec<StepMoments>,
    /// `Σ_τ p(τ) Σ_t Ĝ_t ∇log π(a_t|s_t)` with clipped `Ĝ`.
    pub exact_grad_j: Vec<f64>,
    /// Same with the unclipped actual return; equals `∇J`.
    pub exact_grad_j_actual: Vec<f64>,
    /// `J = Σ_τ p(τ) G_0(τ)`, unclipped.
    pub exact_j: f64,
}

struct Scored {
    prob: f64,
    est: ReturnEstimate,
    raw_actual: Vec<f64>,
    scores: Vec<Vec<f64>>,
}

fn score_all(
    spec: &EnumerationSpec,
    policy: &LogitModel,
    teacher: &TeacherQ,
    cfg: &ReturnConfig,
) -> Result<Vec<Scored>> {
    let trajs = enumerate_trajectories(spec, policy)?;
    exec::map_slice(&trajs, Execution::Parallel, |(traj, prob)| -> Result<Scored> {
        let values = StepValues::from_trajectory(traj, teacher)?;
        let scores = traj
            .steps()
            .iter()
            .map(|s| policy.grad_log_prob(&s.state, s.action))
            .collect::<Result<_>>()?;
        Ok(Scored {
            prob: *prob,
            est: ReturnEstimate::from_values(&values, cfg),
            raw_actual: values.actual(),
            scores,
        })
    })
    .into_iter()
    .collect()
}

/// Exact expected `J(θ)` by enumeration.
pub fn exact_objective(spec: &EnumerationSpec, policy: &LogitModel, teacher: &TeacherQ) -> Result<f64> {
    let mut j = 0.0;
    for (traj, p) in enumerate_trajectories(spec, policy)? {
        j += p * StepValues::from_trajectory(&traj, teacher)?.actual()[0];
    }
    Ok(j)
}

pub fn exact_moments(
    spec: &EnumerationSpec,
    policy: &LogitModel,
    teacher: &TeacherQ,
    cfg: &ReturnConfig,
) -> Result<ExactMoments> {
    let scored = score_all(spec, policy, teacher, cfg)?;
    let n = policy.num_params();
    let mut grad_hat = vec![0.0; n];
    let mut grad_actual = vec![0.0; n];
    let mut exact_j = 0.0;
    for s in &scored {
        exact_j += s.prob * s.raw_actual[0];
        for (t, score) in s.scores.iter().enumerate() {
            let (wh, wa) = (s.prob * s.est.g_hat[t], s.prob * s.raw_actual[t]);
            for i in 0..n {
                grad_hat[i] += wh * score[i];
                grad_actual[i] += wa * score[i];
            }
        }
    }
    let mut steps = Vec::new();
    for t in 0..spec.horizon {
        let live: Vec<&Scored> = scored.iter().filter(|s| s.est.g_hat.len() > t).collect();
        let mass: f64 = live.iter().map(|s| s.prob).sum();
        if live.is_empty() || mass <= 0.0 {
            break;
        }
        let mean = |f: &dyn Fn(&Scored) -> f64| live.iter().map(|s| s.prob * f(s)).sum::<f64>() / mass;
        let expected_g = mean(&|s| s.est.g_actual[t]);
        let expected_g_hat = mean(&|s| s.est.g_hat[t]);
        let var_g = mean(&|s| (s.est.g_actual[t] - expected_g).powi(2));
        let var_g_hat = mean(&|s| (s.est.g_hat[t] - expected_g_hat).powi(2));
        steps.push(StepMoments {
            t,
            mass,
            expected_g,
            expected_g_hat,
            var_g,
            var_g_hat,
            bias: expected_g_hat - expected_g,
        });
    }
    Ok(ExactMoments {
        steps,
        exact_grad_j: grad_hat,
        exact_grad_j_actual: grad_actual,
        exact_j,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `|a - f| / max(|a|, |f|, GRADIENT_ERROR_FLOOR)` per coordinate.
    pub errors: Vec<f64>,
    pub max_error: f64,
    pub passed: bool,
}

pub fn gradient_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_ERROR_FLOOR)
}

/// Exact `∇J` against central finite differences of the exact `J`.
pub fn check_gradient(
    policy: &LogitModel,
    spec: &EnumerationSpec,
    teacher: &TeacherQ,
    cfg: &ReturnConfig,
    fd_step: f64,
) -> Result<GradientReport> {
    let analytic = exact_moments(spec, policy, teacher, cfg)?.exact_grad_j_actual;
    let numeric = exec::map_indexed(policy.num_params(), Execution::Parallel, |i| -> Result<f64> {
        let mut plus = policy.params().to_vec();
        let mut minus = plus.clone();
        plus[i] += fd_step;
        minus[i] -= fd_step;
        let jp = exact_objective(spec, &policy.with_params(plus)?, teacher)?;
        let jm = exact_objective(spec, &policy.with_params(minus)?, teacher)?;
        Ok((jp - jm) / (2.0 * fd_step))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, f)| gradient_error(*a, *f))
        .collect();
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    Ok(GradientReport {
        passed: errors.iter().all(|e| e.is_finite()) && max_error < GRADIENT_TOLERANCE,
        analytic,
        numeric,
        errors,
        max_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub metric: String,
    pub estimate: f64,
    pub exact: f64,
    pub std_error: f64,
    pub z: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub n_samples: usize,
    pub rows: Vec<McRow>,
}

impl McReport {
    pub fn all_within(&self, z: f64) -> bool {
        self.rows.iter().all(|r| r.z.is_nan() || r.z.abs() <= z)
    }
}

fn z_score(estimate: f64, exact: f64, se: f64) -> f64 {
    if se > 0.0 {
        (estimate - exact) / se
    } else if se == 0.0 && estimate == exact {
        0.0
    } else if se == 0.0 {
        f64::INFINITY
    } else {
        f64::NAN
    }
}

fn row(metric: String, m: &Moments, exact: f64) -> McRow {
    let se = m.std_error();
    let z = z_score(m.mean(), exact, se);
    McRow {
        metric,
        estimate: m.mean(),
        exact,
        std_error: se,
        z,
        flagged: z.abs() > Z_FLAG,
    }
}

/// Sample means of `Ĝ_t` and of the K-step gradient estimator compared
/// with their enumeration values.
pub fn montecarlo_convergence(
    policy: &LogitModel,
    spec: &EnumerationSpec,
    teacher: &TeacherQ,
    cfg: &ReturnConfig,
    n_samples: usize,
    seed: u64,
) -> Result<McReport> {
    let exact = exact_moments(spec, policy, teacher, cfg)?;
    let n_params = policy.num_params();
    let horizon = spec.horizon;
    const CHUNK: usize = 4096;
    let chunks = n_samples.div_ceil(CHUNK);
    let parts = exec::map_indexed(
        chunks,
        Execution::Parallel,
        |c| -> Result<(Vec<Moments>, Vec<Moments>)> {
            let mut rng = substream(seed, c as u64);
            let mut g_hat = vec![Moments::new(); horizon];
            let mut grad = vec![Moments::new(); n_params];
            let mut sample = vec![0.0; n_params];
            for _ in 0..CHUNK.min(n_samples - c * CHUNK) {
                let traj = rollout(policy, &spec.initial, horizon, RolloutMode::Sample, &mut rng)?;
                let est = ReturnEstimate::from_values(&StepValues::from_trajectory(&traj, teacher)?, cfg);
                sample.iter_mut().for_each(|x| *x = 0.0);
                for (t, step) in traj.steps().iter().enumerate() {
                    g_hat[t].push(est.g_hat[t]);
                    policy.accumulate_grad_log_prob(&step.state, step.action, est.g_hat[t], &mut sample);
                }
                for (m, x) in grad.iter_mut().zip(&sample) {
                    m.push(*x);
                }
            }
            Ok((g_hat, grad))
        },
    );
    let mut g_hat = vec![Moments::new(); horizon];
    let mut grad = vec![Moments::new(); n_params];
    for part in parts {
        let (gh, gr) = part?;
        for (a, b) in g_hat.iter_mut().zip(&gh) {
            a.merge(b);
        }
        for (a, b) in grad.iter_mut().zip(&gr) {
            a.merge(b);
        }
    }
    let mut rows = Vec::new();
    for sm in &exact.steps {
        if g_hat[sm.t].count() > 0 {
            rows.push(row(format!("mean_ghat_t{}", sm.t), &g_hat[sm.t], sm.expected_g_hat));
        }
    }
    for (i, m) in grad.iter().enumerate() {
        rows.push(row(format!("grad_{i}"), m, exact.exact_grad_j[i]));
    }
    Ok(McReport { n_samples, rows })
}

/// Moments of the batch-mean gradient of a trainer estimator over
/// `n_batches` independent batches from the initial state.
#[allow(clippy::too_many_arguments)]
pub fn estimator_gradient_moments(
    policy: &LogitModel,
    spec: &EnumerationSpec,
    teacher: &TeacherQ,
    estimator: Estimator,
    cfg: &ReturnConfig,
    batch_size: usize,
    n_batches: usize,
    seed: u64,
) -> Result<Vec<Moments>> {
    const CHUNK: usize = 256;
    let chunks = n_batches.div_ceil(CHUNK);
    let inputs = vec![spec.initial.clone(); batch_size];
    let parts = exec::map_indexed(chunks, Execution::Parallel, |c| -> Result<Vec<Moments>> {
        let mut acc = vec![Moments::new(); policy.num_params()];
        for b in c * CHUNK..((c + 1) * CHUNK).min(n_batches) {
            let trajs = trainer::sample_batch(policy, &inputs, spec.horizon, seed, b as u64, Execution::Sequential)?;
            let bg = trainer::batch_gradient(policy, teacher, trajs, estimator, cfg.clip(), b, Execution::Sequential)?;
            for (m, x) in acc.iter_mut().zip(&bg.grad) {
                m.push(*x);
            }
        }
        Ok(acc)
    });
    let mut total = vec![Moments::new(); policy.num_params()];
    for p in parts {
        for (a, b) in total.iter_mut().zip(&p?) {
            a.merge(b);
        }
    }
    Ok(total)
}

/// One line of an oracle report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportLine {
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

pub const REPORT_HEADER: [&str; 4] = ["metric", "value", "threshold", "pass"];

pub fn write_report_csv<W: Write>(out: W, lines: &[ReportLine]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for l in lines {
        w.serialize(l)?;
    }
    w.flush().map_err(|e| Error::io("<report>", e))?;
    Ok(())
}
