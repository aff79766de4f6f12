//! Two-stage distillation: supervised pre-distillation on teacher-greedy
//! sequences, then REINFORCE driven by a pluggable per-step signal.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, stream_id, substream, Execution};
use crate::models::{LogitModel, OptimizerState};
use crate::returns::{ClipRange, ReturnConfig, StepValues};
use crate::seqmdp::{rollout, RolloutMode, State, Trajectory};
use crate::supervised::{self, Example};
use crate::teacher::TeacherQ;

/// Per-step learning signal used in the policy-gradient sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// K-step telescoped return.
    KStep(usize),
    /// One-step induced reward summed to the end (K = 1).
    Llmr,
    /// Actual return minus the mean return of the other batch members at the same step.
    MeanBaseline,
    /// Actual return minus the batch minimum-variance baseline.
    MinVarBaseline,
}

impl Estimator {
    /// Segment length used for the logged `Ĝ`.
    pub fn segment(&self) -> usize {
        match self {
            Estimator::KStep(k) => *k,
            _ => 1,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Estimator::KStep(k) => format!("k{k}"),
            Estimator::Llmr => "llmr".into(),
            Estimator::MeanBaseline => "mean_baseline".into(),
            Estimator::MinVarBaseline => "minvar_baseline".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "llmr" => Ok(Estimator::Llmr),
            "mean_baseline" => Ok(Estimator::MeanBaseline),
            "minvar_baseline" => Ok(Estimator::MinVarBaseline),
            _ => s
                .strip_prefix('k')
                .and_then(|k| k.parse().ok())
                .filter(|k| *k >= 1)
                .map(Estimator::KStep)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Predistill,
    #[default]
    Rl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub stage: Stage,
    pub estimator: Estimator,
    pub lr: f64,
    pub batch_size: usize,
    /// Pre-distillation epochs.
    pub epochs: usize,
    /// RL parameter updates.
    pub iterations: usize,
    pub horizon: usize,
    pub grad_accum: usize,
    pub seed: u64,
    pub clip: ClipRange,
    pub optimizer: OptimizerKind,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: Stage::Rl,
            estimator: Estimator::KStep(2),
            lr: 0.05,
            batch_size: 8,
            epochs: 5,
            iterations: 200,
            horizon: 16,
            grad_accum: 1,
            seed: 0,
            clip: ClipRange::default(),
            optimizer: OptimizerKind::Sgd,
            eval_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.grad_accum == 0 {
            return bad("grad_accum must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if let Estimator::KStep(0) = self.estimator {
            return bad("K must be at least 1");
        }
        Ok(())
    }

    pub fn return_config(&self) -> ReturnConfig {
        ReturnConfig::new(self.estimator.segment().max(1), self.clip).expect("validated K")
    }
}

/// Parameter update rule. Both variants ascend.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { step: u64, m: Vec<f64>, v: Vec<f64> },
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, num_params: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                step: 0,
                m: vec![0.0; num_params],
                v: vec![0.0; num_params],
            },
        }
    }

    pub fn step(&mut self, model: &mut LogitModel, grad: &[f64], lr: f64) -> Result<()> {
        match self {
            Optimizer::Sgd => model.ascend(grad, lr),
            Optimizer::Adam { step, m, v } => {
                if grad.len() != m.len() {
                    return Err(Error::LengthMismatch {
                        expected: m.len(),
                        actual: grad.len(),
                    });
                }
                *step += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*step as i32);
                let c2 = 1.0 - ADAM_BETA2.powi(*step as i32);
                let mut update = vec![0.0; grad.len()];
                for i in 0..grad.len() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                    update[i] = (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
                model.ascend(&update, lr)
            }
        }
    }

    pub fn state(&self) -> Option<OptimizerState> {
        match self {
            Optimizer::Sgd => None,
            Optimizer::Adam { step, m, v } => Some(OptimizerState {
                kind: "adam".into(),
                step: *step,
                first_moment: m.clone(),
                second_moment: v.clone(),
            }),
        }
    }
}

/// A sampled trajectory with its teacher values and score-function gradients.
#[derive(Debug, Clone)]
pub struct ScoredTrajectory {
    pub trajectory: Trajectory,
    pub values: StepValues,
    /// `grad log pi(a_t | s_t)` for each step.
    pub scores: Vec<Vec<f64>>,
    /// Sum of policy entropies over visited states.
    pub entropy_sum: f64,
}

impl ScoredTrajectory {
    pub fn new(student: &LogitModel, teacher: &TeacherQ, trajectory: Trajectory) -> Result<Self> {
        let values = StepValues::from_trajectory(&trajectory, teacher)?;
        let mut scores = Vec::with_capacity(trajectory.len());
        let mut entropy_sum = 0.0;
        for step in trajectory.steps() {
            let mut g = vec![0.0; student.num_params()];
            let dist = student.accumulate_grad_log_prob(&step.state, step.action, 1.0, &mut g);
            entropy_sum += dist.entropy();
            scores.push(g);
        }
        Ok(Self {
            trajectory,
            values,
            scores,
            entropy_sum,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectory.is_empty()
    }
}

/// Per-step signals for every trajectory of a batch.
pub fn batch_signals(batch: &[ScoredTrajectory], estimator: Estimator, clip: ClipRange) -> Vec<Vec<f64>> {
    let clipped_actual: Vec<Vec<f64>> = batch
        .iter()
        .map(|b| b.values.actual().into_iter().map(|g| clip.clip(g)).collect())
        .collect();
    match estimator {
        Estimator::KStep(k) => batch
            .iter()
            .map(|b| b.values.kstep(k).into_iter().map(|g| clip.clip(g)).collect())
            .collect(),
        Estimator::Llmr => clipped_actual,
        Estimator::MeanBaseline => {
            let max_len = batch.iter().map(|b| b.len()).max().unwrap_or(0);
            let mut sums = vec![0.0; max_len];
            let mut counts = vec![0usize; max_len];
            for g in &clipped_actual {
                for (t, x) in g.iter().enumerate() {
                    sums[t] += x;
                    counts[t] += 1;
                }
            }
            clipped_actual
                .iter()
                .map(|g| {
                    g.iter()
                        .enumerate()
                        .map(|(t, x)| {
                            let others = counts[t] - 1;
                            let b = if others == 0 {
                                0.0
                            } else {
                                (sums[t] - x) / others as f64
                            };
                            x - b
                        })
                        .collect()
                })
                .collect()
        }
        Estimator::MinVarBaseline => {
            let max_len = batch.iter().map(|b| b.len()).max().unwrap_or(0);
            let mut num = vec![0.0; max_len];
            let mut den = vec![0.0; max_len];
            let mut counts = vec![0usize; max_len];
            for (b, g) in batch.iter().zip(&clipped_actual) {
                for (t, score) in b.scores.iter().enumerate() {
                    let w2: f64 = score.iter().map(|x| x * x).sum();
                    num[t] += g[t] * w2;
                    den[t] += w2;
                    counts[t] += 1;
                }
            }
            clipped_actual
                .iter()
                .map(|g| {
                    g.iter()
                        .enumerate()
                        .map(|(t, x)| {
                            let b = if counts[t] < 2 || den[t] == 0.0 {
                                0.0
                            } else {
                                num[t] / den[t]
                            };
                            x - b
                        })
                        .collect()
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    /// `(1/B) Σ_i Σ_t signal_{t,i} grad log pi(a_{t,i} | s_{t,i})`.
    pub grad: Vec<f64>,
    pub mean_return_actual: f64,
    pub mean_return_khat: f64,
    pub mean_entropy: f64,
}

/// Policy-gradient estimate from an already-sampled batch.
pub fn batch_gradient(
    student: &LogitModel,
    teacher: &TeacherQ,
    trajectories: Vec<Trajectory>,
    estimator: Estimator,
    clip: ClipRange,
    iteration: usize,
    exec: Execution,
) -> Result<BatchGradient> {
    let scored: Vec<ScoredTrajectory> = exec::map_indexed(trajectories.len(), exec, |i| {
        ScoredTrajectory::new(student, teacher, trajectories[i].clone())
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let signals = batch_signals(&scored, estimator, clip);
    let n = scored.len().max(1) as f64;
    let mut grad = vec![0.0; student.num_params()];
    let mut contribution = vec![0.0; student.num_params()];
    for (i, (b, sig)) in scored.iter().zip(&signals).enumerate() {
        contribution.iter_mut().for_each(|c| *c = 0.0);
        for (score, s) in b.scores.iter().zip(sig) {
            for (c, x) in contribution.iter_mut().zip(score) {
                *c += s * x;
            }
        }
        if contribution.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteGradient {
                iteration,
                trajectory: i,
            });
        }
        for (g, c) in grad.iter_mut().zip(&contribution) {
            *g += c / n;
        }
    }
    let k = estimator.segment();
    let visited: usize = scored.iter().map(|b| b.len()).sum();
    Ok(BatchGradient {
        grad,
        mean_return_actual: scored.iter().map(|b| clip.clip(b.values.actual()[0])).sum::<f64>() / n,
        mean_return_khat: scored.iter().map(|b| clip.clip(b.values.kstep(k)[0])).sum::<f64>() / n,
        mean_entropy: scored.iter().map(|b| b.entropy_sum).sum::<f64>() / visited.max(1) as f64,
    })
}

/// Samples one trajectory per input from independent substreams.
pub fn sample_batch(
    student: &LogitModel,
    inputs: &[State],
    horizon: usize,
    seed: u64,
    batch_index: u64,
    exec: Execution,
) -> Result<Vec<Trajectory>> {
    exec::map_indexed(inputs.len(), exec, |i| {
        let mut rng = substream(seed, stream_id(batch_index, i as u64));
        rollout(student, &inputs[i], horizon, RolloutMode::Sample, &mut rng)
    })
    .into_iter()
    .collect()
}

/// One logged RL iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    #[serde(rename = "iter")]
    pub iteration: usize,
    #[serde(rename = "mean_G")]
    pub mean_return_actual: f64,
    #[serde(rename = "mean_Ghat")]
    pub mean_return_khat: f64,
    pub grad_norm: f64,
    #[serde(rename = "entropy")]
    pub policy_entropy: f64,
    /// Latest greedy validation return (refreshed every `eval_every` iterations).
    #[serde(rename = "eval_return")]
    pub eval_greedy_return: f64,
}

pub const TRAIN_LOG_HEADER: [&str; 6] = ["iter", "mean_G", "mean_Ghat", "grad_norm", "entropy", "eval_return"];

pub fn write_train_log<W: Write>(out: W, records: &[TrainRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRAIN_LOG_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<train log>", e))?;
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One REINFORCE update on a single batch.
pub fn reinforce_step(
    student: &LogitModel,
    teacher: &TeacherQ,
    inputs: &[State],
    cfg: &TrainConfig,
    iteration: usize,
    optimizer: &mut Optimizer,
) -> Result<(LogitModel, TrainRecord)> {
    cfg.validate()?;
    let trajs = sample_batch(
        student,
        inputs,
        cfg.horizon,
        cfg.seed,
        iteration as u64,
        Execution::Parallel,
    )?;
    let bg = batch_gradient(
        student,
        teacher,
        trajs,
        cfg.estimator,
        cfg.clip,
        iteration,
        Execution::Parallel,
    )?;
    let mut next = student.clone();
    optimizer.step(&mut next, &bg.grad, cfg.lr)?;
    Ok((
        next,
        TrainRecord {
            iteration,
            mean_return_actual: bg.mean_return_actual,
            mean_return_khat: bg.mean_return_khat,
            grad_norm: norm(&bg.grad),
            policy_entropy: bg.mean_entropy,
            eval_greedy_return: f64::NAN,
        },
    ))
}

/// Mean clipped actual return `G_0` of greedy rollouts.
pub fn greedy_eval(
    model: &LogitModel,
    teacher: &TeacherQ,
    inputs: &[State],
    horizon: usize,
    clip: ClipRange,
) -> Result<f64> {
    if inputs.is_empty() {
        return Ok(0.0);
    }
    let returns = exec::map_slice(inputs, Execution::Parallel, |s| -> Result<f64> {
        let traj = rollout(model, s, horizon, RolloutMode::Greedy, &mut substream(0, 0))?;
        Ok(clip.clip(StepValues::from_trajectory(&traj, teacher)?.actual()[0]))
    });
    let mut total = 0.0;
    for r in returns {
        total += r?;
    }
    Ok(total / inputs.len() as f64)
}

/// Teacher-greedy rollouts of every input, as next-token examples.
pub fn teacher_greedy_examples(teacher: &TeacherQ, inputs: &[State], horizon: usize) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for s in inputs {
        let traj = rollout(teacher, s, horizon, RolloutMode::Greedy, &mut substream(0, 0))?;
        out.extend(supervised::examples_from_trajectory(&traj));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredistillOutcome {
    pub student: LogitModel,
    /// Cross-entropy on the teacher sequences before training and after each epoch.
    pub losses: Vec<f64>,
}

/// Sequence-level distillation: cross-entropy on teacher-greedy outputs.
pub fn predistill(
    student: &LogitModel,
    teacher: &TeacherQ,
    inputs: &[State],
    cfg: &TrainConfig,
) -> Result<PredistillOutcome> {
    cfg.validate()?;
    if cfg.stage != Stage::Predistill {
        return Err(Error::InvalidConfig("predistill requires stage = predistill".into()));
    }
    let examples = teacher_greedy_examples(teacher, inputs, cfg.horizon)?;
    let mut model = student.clone();
    let mut rng = substream(cfg.seed, u64::MAX);
    let mut losses = vec![supervised::mean_cross_entropy(&model, &examples)];
    for _ in 0..cfg.epochs {
        supervised::sgd_epoch(&mut model, &examples, cfg.lr, cfg.batch_size, &mut rng)?;
        losses.push(supervised::mean_cross_entropy(&model, &examples));
    }
    Ok(PredistillOutcome { student: model, losses })
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<State>,
    pub validation: Vec<State>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub student: LogitModel,
    /// Student with the best greedy validation return seen.
    pub best: LogitModel,
    pub best_eval: f64,
    pub log: Vec<TrainRecord>,
    pub optimizer: Optimizer,
}

/// REINFORCE over shuffled batches with gradient accumulation.
pub fn train(student: &LogitModel, teacher: &TeacherQ, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.stage != Stage::Rl {
        return Err(Error::InvalidConfig("train requires stage = rl".into()));
    }
    if data.train.is_empty() {
        return Err(Error::InvalidConfig("training inputs are empty".into()));
    }
    let mut model = student.clone();
    let mut optimizer = Optimizer::new(cfg.optimizer, model.num_params());
    let mut log = Vec::with_capacity(cfg.iterations);
    if cfg.iterations == 0 {
        return Ok(TrainOutcome {
            best: model.clone(),
            best_eval: f64::NAN,
            student: model,
            log,
            optimizer,
        });
    }
    let mut best = model.clone();
    let mut best_eval = greedy_eval(&model, teacher, &data.validation, cfg.horizon, cfg.clip)?;
    let mut last_eval = best_eval;

    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch = 0u64;
    let mut micro = 0u64;
    let bs = cfg.batch_size.min(data.train.len());

    for iteration in 0..cfg.iterations {
        let mut grad = vec![0.0; model.num_params()];
        let (mut mean_g, mut mean_gh, mut entropy) = (0.0, 0.0, 0.0);
        for _ in 0..cfg.grad_accum {
            if cursor + bs > order.len() {
                order = (0..data.train.len()).collect();
                order.shuffle(&mut substream(cfg.seed, stream_id(u32::MAX as u64, epoch)));
                epoch += 1;
                cursor = 0;
            }
            let batch: Vec<State> = order[cursor..cursor + bs]
                .iter()
                .map(|&i| data.train[i].clone())
                .collect();
            cursor += bs;
            let trajs = sample_batch(&model, &batch, cfg.horizon, cfg.seed, micro, Execution::Parallel)?;
            micro += 1;
            let bg = batch_gradient(
                &model,
                teacher,
                trajs,
                cfg.estimator,
                cfg.clip,
                iteration,
                Execution::Parallel,
            )?;
            for (g, x) in grad.iter_mut().zip(&bg.grad) {
                *g += x / cfg.grad_accum as f64;
            }
            mean_g += bg.mean_return_actual / cfg.grad_accum as f64;
            mean_gh += bg.mean_return_khat / cfg.grad_accum as f64;
            entropy += bg.mean_entropy / cfg.grad_accum as f64;
        }
        optimizer.step(&mut model, &grad, cfg.lr)?;
        if (iteration + 1) % cfg.eval_every == 0 || iteration + 1 == cfg.iterations {
            last_eval = greedy_eval(&model, teacher, &data.validation, cfg.horizon, cfg.clip)?;
            if last_eval > best_eval {
                best_eval = last_eval;
                best = model.clone();
            }
        }
        log.push(TrainRecord {
            iteration,
            mean_return_actual: mean_g,
            mean_return_khat: mean_gh,
            grad_norm: norm(&grad),
            policy_entropy: entropy,
            eval_greedy_return: last_eval,
        });
    }
    Ok(TrainOutcome {
        student: model,
        best,
        best_eval,
        log,
        optimizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;
    use crate::seqmdp::Vocabulary;

    fn setup() -> (LogitModel, TeacherQ, Vec<State>) {
        let v = Vocabulary::with_size(4).unwrap();
        let student =
            LogitModel::init_uniform(ModelKind::Mlp1 { hidden_width: 4 }, v, 2, &mut substream(1, 0)).unwrap();
        let teacher =
            TeacherQ::from_model(LogitModel::init_uniform(ModelKind::Linear, v, 2, &mut substream(2, 0)).unwrap());
        let inputs = (0..4).map(|i| State::initial(v, &[2 + i % 2]).unwrap()).collect();
        (student, teacher, inputs)
    }

    #[test]
    fn estimator_labels_roundtrip() {
        for e in [
            Estimator::KStep(4),
            Estimator::Llmr,
            Estimator::MeanBaseline,
            Estimator::MinVarBaseline,
        ] {
            assert_eq!(Estimator::parse(&e.label()).unwrap(), e);
        }
        assert!(Estimator::parse("k0").is_err());
        assert!(Estimator::parse("ppo").is_err());
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let (student, teacher, inputs) = setup();
        let cfg = TrainConfig {
            lr: 0.0,
            horizon: 5,
            ..TrainConfig::default()
        };
        let (next, rec) = reinforce_step(&student, &teacher, &inputs, &cfg, 0, &mut Optimizer::Sgd).unwrap();
        assert_eq!(next, student);
        assert!(rec.mean_return_actual.is_finite());
        assert!(rec.grad_norm > 0.0);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let (student, teacher, inputs) = setup();
        let cfg = TrainConfig {
            iterations: 0,
            ..TrainConfig::default()
        };
        let data = Dataset {
            train: inputs.clone(),
            validation: inputs,
        };
        let out = train(&student, &teacher, &data, &cfg).unwrap();
        assert_eq!(out.student, student);
        assert!(out.log.is_empty());
    }

    #[test]
    fn mean_baseline_is_leave_one_out() {
        let (student, teacher, inputs) = setup();
        let trajs = sample_batch(&student, &inputs, 4, 3, 0, Execution::Sequential).unwrap();
        let scored: Vec<_> = trajs
            .into_iter()
            .map(|t| ScoredTrajectory::new(&student, &teacher, t).unwrap())
            .collect();
        let clip = ClipRange::default();
        let sig = batch_signals(&scored, Estimator::MeanBaseline, clip);
        let g: Vec<Vec<f64>> = scored.iter().map(|s| s.values.actual()).collect();
        for i in 0..scored.len() {
            let others: Vec<f64> = (0..scored.len()).filter(|&j| j != i).map(|j| g[j][0]).collect();
            let b = others.iter().sum::<f64>() / others.len() as f64;
            assert!((sig[i][0] - (g[i][0] - b)).abs() < 1e-12);
        }
        // single survivor: baseline 0
        let single = batch_signals(&scored[..1], Estimator::MeanBaseline, clip);
        assert_eq!(single[0], g[0]);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let (mut student, _, _) = setup();
        let before = student.clone();
        let n = student.num_params();
        let mut opt = Optimizer::new(OptimizerKind::Adam, n);
        let grad: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 2.0 } else { -0.5 }).collect();
        opt.step(&mut student, &grad, 0.01).unwrap();
        for ((after, before), g) in student.params().iter().zip(before.params()).zip(&grad) {
            assert!((after - before - 0.01 * g.signum()).abs() < 1e-8);
        }
        assert_eq!(opt.state().unwrap().step, 1);
    }

    #[test]
    fn stage_is_enforced() {
        let (student, teacher, inputs) = setup();
        let cfg = TrainConfig::default();
        assert!(predistill(&student, &teacher, &inputs, &cfg).is_err());
    }
}
