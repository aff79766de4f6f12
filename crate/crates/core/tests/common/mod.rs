#![allow(dead_code)]

use kstep::models::{LogitModel, ModelKind};
use kstep::seqmdp::{State, Token, Trajectory, Vocabulary};
use kstep::teacher::TeacherQ;
use rand::Rng;

/// Tabular teacher over every context, Q-values uniform in `[-scale, scale]`.
pub fn random_tabular<R: Rng>(vocab: Vocabulary, window: usize, scale: f64, rng: &mut R) -> TeacherQ {
    TeacherQ::tabular_complete(vocab, window, |_| {
        (0..vocab.size()).map(|_| rng.random_range(-scale..scale)).collect()
    })
    .unwrap()
}

pub fn random_model<R: Rng>(kind: ModelKind, vocab: Vocabulary, window: usize, scale: f64, rng: &mut R) -> LogitModel {
    let n = kind.param_count(vocab.size(), window);
    let params = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    LogitModel::new(kind, vocab, window, params).unwrap()
}

/// Uniformly random actions, stopping at eos or after `horizon` steps.
pub fn random_trajectory<R: Rng>(vocab: Vocabulary, horizon: usize, rng: &mut R) -> Trajectory {
    let initial = State::initial(vocab, &[]).unwrap();
    let mut actions = Vec::new();
    while actions.len() < horizon {
        let a: Token = rng.random_range(0..vocab.size());
        actions.push(a);
        if a == vocab.eos() {
            break;
        }
    }
    Trajectory::from_actions(&initial, &actions).unwrap()
}

/// Random actions drawn from content tokens only, exactly `len` steps.
pub fn random_fixed_length<R: Rng>(vocab: Vocabulary, len: usize, rng: &mut R) -> Trajectory {
    let initial = State::initial(vocab, &[]).unwrap();
    let actions: Vec<Token> = (0..len)
        .map(|_| loop {
            let a = rng.random_range(0..vocab.size());
            if a != vocab.eos() {
                break a;
            }
        })
        .collect();
    Trajectory::from_actions(&initial, &actions).unwrap()
}

/// Trajectory whose every action is the teacher's argmax, up to `horizon` steps.
pub fn greedy_trajectory(teacher: &TeacherQ, horizon: usize) -> Trajectory {
    let vocab = teacher.vocabulary();
    let mut state = State::initial(vocab, &[]).unwrap();
    let initial = state.clone();
    let mut actions = Vec::new();
    while actions.len() < horizon {
        let q = teacher.q_values(&state).unwrap();
        let a = kstep::models::argmax(&q);
        actions.push(a);
        state = state.step(a).unwrap();
        if state.is_terminal() {
            break;
        }
    }
    Trajectory::from_actions(&initial, &actions).unwrap()
}
