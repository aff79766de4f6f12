mod common;

use kstep::exec::{substream, Execution};
use kstep::models::{LogitModel, ModelKind};
use kstep::oracle::{estimator_gradient_moments, exact_moments, EnumerationSpec};
use kstep::returns::ReturnConfig;
use kstep::seqmdp::{rollout, RolloutMode, State, Vocabulary};
use kstep::teacher::TeacherQ;
use kstep::trainer::{
    predistill, reinforce_step, sample_batch, train, write_train_log, Dataset, Estimator, Optimizer, OptimizerKind,
    Stage, TrainConfig, TRAIN_LOG_HEADER,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vocab() -> Vocabulary {
    Vocabulary::with_size(5).unwrap()
}

fn inputs(n: usize) -> Vec<State> {
    (0..n).map(|i| State::initial(vocab(), &[2 + i % 3]).unwrap()).collect()
}

fn model_teacher(seed: u64) -> TeacherQ {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TeacherQ::from_model(common::random_model(
        ModelKind::Mlp1 { hidden_width: 6 },
        vocab(),
        2,
        1.5,
        &mut rng,
    ))
}

fn rl_cfg(estimator: Estimator) -> TrainConfig {
    TrainConfig {
        estimator,
        horizon: 6,
        batch_size: 4,
        iterations: 12,
        eval_every: 5,
        lr: 0.1,
        ..TrainConfig::default()
    }
}

fn pd_cfg(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        stage: Stage::Predistill,
        epochs,
        lr,
        batch_size: 4,
        horizon: 6,
        ..TrainConfig::default()
    }
}

#[test]
fn self_distillation_fixed_point() {
    let teacher = model_teacher(1);
    let student = teacher.model().unwrap().clone();
    let out = predistill(&student, &teacher, &inputs(6), &pd_cfg(1, 0.05)).unwrap();
    let teacher_ce = kstep::supervised::mean_cross_entropy(
        teacher.model().unwrap(),
        &kstep::trainer::teacher_greedy_examples(&teacher, &inputs(6), 6).unwrap(),
    );
    assert_eq!(out.losses[0], teacher_ce);
    assert!(out.losses[1] <= out.losses[0] + 1e-6);
}

#[test]
fn predistill_overfits_one_input() {
    let teacher = model_teacher(2);
    let student =
        LogitModel::init_uniform(ModelKind::Mlp1 { hidden_width: 8 }, vocab(), 2, &mut substream(3, 0)).unwrap();
    let input = inputs(1);
    let out = predistill(&student, &teacher, &input, &pd_cfg(400, 0.5)).unwrap();
    let mut rng = substream(0, 0);
    let a = rollout(&out.student, &input[0], 6, RolloutMode::Greedy, &mut rng).unwrap();
    let b = rollout(&teacher, &input[0], 6, RolloutMode::Greedy, &mut rng).unwrap();
    assert_eq!(a.actions(), b.actions());
}

#[test]
fn predistill_zero_epochs() {
    let teacher = model_teacher(2);
    let student = LogitModel::init_uniform(ModelKind::Linear, vocab(), 2, &mut substream(3, 0)).unwrap();
    let out = predistill(&student, &teacher, &inputs(3), &pd_cfg(0, 0.5)).unwrap();
    assert_eq!(out.student, student);
    assert_eq!(out.losses.len(), 1);
}

/// Teacher and student both strongly prefer token 3; sampled trajectories are
/// the greedy run of 3s with overwhelming probability.
#[test]
fn greedy_batches_update_identically_for_every_k() {
    let v = vocab();
    let teacher =
        TeacherQ::tabular_complete(v, 2, |ctx| vec![0.25, -0.5, 0.5 * ctx[1] as f64 - 1.0, 3.0, 0.75]).unwrap();
    let kind = ModelKind::Linear;
    let mut params = vec![0.0; kind.param_count(5, 2)];
    let n = params.len();
    params[n - 5 + 3] = 40.0;
    let student = LogitModel::new(kind, v, 2, params).unwrap();
    let batch = inputs(4);
    let mut reference = None;
    for est in [
        Estimator::Llmr,
        Estimator::KStep(2),
        Estimator::KStep(4),
        Estimator::KStep(8),
    ] {
        let cfg = rl_cfg(est);
        let (next, rec) = reinforce_step(&student, &teacher, &batch, &cfg, 0, &mut Optimizer::Sgd).unwrap();
        assert_eq!(rec.mean_return_actual, rec.mean_return_khat);
        match &reference {
            None => reference = Some(next),
            Some(r) => {
                for (a, b) in r.params().iter().zip(next.params()) {
                    assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn one_step_mdp_matches_expected_update() {
    let v = Vocabulary::new(2, 1, 0).unwrap();
    let spec = EnumerationSpec::new(v, 1, State::initial(v, &[]).unwrap()).unwrap();
    let teacher = TeacherQ::tabular_complete(v, 1, |_| vec![0.8, -0.3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let student = common::random_model(ModelKind::Linear, v, 1, 1.0, &mut rng);
    let cfg = ReturnConfig::one_step();
    let exact = exact_moments(&spec, &student, &teacher, &cfg)
        .unwrap()
        .exact_grad_j_actual;
    // analytic sum over the two actions
    let s0 = &spec.initial;
    let dist = student.forward(s0).unwrap();
    let mut analytic = vec![0.0; student.num_params()];
    for (a, g) in [(0usize, 0.8), (1, -0.3)] {
        for (t, x) in analytic.iter_mut().zip(student.grad_log_prob(s0, a).unwrap()) {
            *t += dist.probs()[a] * g * x;
        }
    }
    for (a, b) in analytic.iter().zip(&exact) {
        assert!((a - b).abs() < 1e-15);
    }
    let mc = estimator_gradient_moments(&student, &spec, &teacher, Estimator::Llmr, &cfg, 1, 100_000, 7).unwrap();
    for (i, m) in mc.iter().enumerate() {
        if m.std_error() > 0.0 {
            assert!(((m.mean() - exact[i]) / m.std_error()).abs() <= 3.0, "coordinate {i}");
        } else {
            assert!((m.mean() - exact[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_lr_keeps_parameters_and_logs_returns() {
    let teacher = model_teacher(4);
    let student = LogitModel::init_uniform(ModelKind::Linear, vocab(), 2, &mut substream(5, 0)).unwrap();
    let cfg = TrainConfig {
        lr: 0.0,
        ..rl_cfg(Estimator::KStep(2))
    };
    let (next, rec) = reinforce_step(&student, &teacher, &inputs(4), &cfg, 0, &mut Optimizer::Sgd).unwrap();
    assert_eq!(next, student);
    assert!(rec.mean_return_actual.is_finite() && rec.grad_norm > 0.0);
}

#[test]
fn estimators_share_rollouts() {
    let teacher = model_teacher(6);
    let student = LogitModel::init_uniform(ModelKind::Linear, vocab(), 2, &mut substream(7, 0)).unwrap();
    let data = Dataset {
        train: inputs(8),
        validation: inputs(3),
    };
    let logs: Vec<Vec<f64>> = [
        Estimator::Llmr,
        Estimator::KStep(4),
        Estimator::MeanBaseline,
        Estimator::MinVarBaseline,
    ]
    .into_iter()
    .map(|est| {
        let cfg = TrainConfig { lr: 0.0, ..rl_cfg(est) };
        train(&student, &teacher, &data, &cfg)
            .unwrap()
            .log
            .iter()
            .map(|r| r.mean_return_actual)
            .collect()
    })
    .collect();
    assert!(logs.windows(2).all(|w| w[0] == w[1]));
    let a = sample_batch(&student, &data.train, 6, 3, 9, Execution::Parallel).unwrap();
    let b = sample_batch(&student, &data.train, 6, 3, 9, Execution::Sequential).unwrap();
    assert_eq!(a, b);
}

#[test]
fn train_is_deterministic_and_finite() {
    let teacher = model_teacher(8);
    let student =
        LogitModel::init_uniform(ModelKind::Mlp1 { hidden_width: 4 }, vocab(), 2, &mut substream(9, 0)).unwrap();
    let data = Dataset {
        train: inputs(10),
        validation: inputs(4),
    };
    for est in [Estimator::KStep(2), Estimator::MeanBaseline, Estimator::MinVarBaseline] {
        for optimizer in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let cfg = TrainConfig {
                optimizer,
                grad_accum: 2,
                ..rl_cfg(est)
            };
            let a = train(&student, &teacher, &data, &cfg).unwrap();
            let b = train(&student, &teacher, &data, &cfg).unwrap();
            let (mut ca, mut cb) = (Vec::new(), Vec::new());
            write_train_log(&mut ca, &a.log).unwrap();
            write_train_log(&mut cb, &b.log).unwrap();
            assert_eq!(ca, cb);
            assert_eq!(a.student, b.student);
            assert_eq!(a.log.len(), 12);
            for r in &a.log {
                let vals = [
                    r.mean_return_actual,
                    r.mean_return_khat,
                    r.grad_norm,
                    r.policy_entropy,
                    r.eval_greedy_return,
                ];
                assert!(vals.iter().all(|x| x.is_finite()));
            }
            let header = String::from_utf8(ca).unwrap();
            assert_eq!(header.lines().next().unwrap(), TRAIN_LOG_HEADER.join(","));
        }
    }
}

#[test]
fn zero_iterations_returns_input() {
    let teacher = model_teacher(8);
    let student = LogitModel::init_uniform(ModelKind::Linear, vocab(), 2, &mut substream(9, 0)).unwrap();
    let data = Dataset {
        train: inputs(2),
        validation: inputs(2),
    };
    let out = train(
        &student,
        &teacher,
        &data,
        &TrainConfig {
            iterations: 0,
            ..rl_cfg(Estimator::Llmr)
        },
    )
    .unwrap();
    assert_eq!(out.student, student);
    assert!(out.log.is_empty());
}
