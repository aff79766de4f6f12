//! Next-token cross-entropy training, shared by teacher fitting and
//! pre-distillation.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::models::LogitModel;
use crate::seqmdp::{State, Token, Trajectory, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub state: State,
    pub target: Token,
}

/// Splits an eos-terminated sequence (without bos) into next-token examples.
/// The first `source_len` tokens are conditioning and are not predicted.
pub fn examples_from_sequence(vocab: Vocabulary, sequence: &[Token], source_len: usize) -> Result<Vec<Example>> {
    let bad = |reason: &str| Error::InvalidSequence {
        index: 0,
        reason: reason.to_string(),
    };
    if sequence.last() != Some(&vocab.eos()) {
        return Err(bad("does not end with eos"));
    }
    if source_len >= sequence.len() {
        return Err(bad("conditioning covers the whole sequence"));
    }
    let mut state = State::initial(vocab, &sequence[..source_len])?;
    let mut out = Vec::with_capacity(sequence.len() - source_len);
    for (i, &tok) in sequence[source_len..].iter().enumerate() {
        if state.is_terminal() {
            return Err(bad(&format!("eos before the end (position {})", source_len + i)));
        }
        let next = state.step(tok)?;
        out.push(Example { state, target: tok });
        state = next;
    }
    Ok(out)
}

/// Examples reproducing the actions of a trajectory.
pub fn examples_from_trajectory(traj: &Trajectory) -> Vec<Example> {
    traj.steps()
        .iter()
        .map(|s| Example {
            state: s.state.clone(),
            target: s.action,
        })
        .collect()
}

pub fn mean_cross_entropy(model: &LogitModel, examples: &[Example]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let total: f64 = examples
        .iter()
        .map(|e| -crate::models::PolicyDistribution::from_logits(model.logits_for(&e.state)).log_prob(e.target))
        .sum();
    total / examples.len() as f64
}

/// One shuffled pass of minibatch SGD on cross-entropy.
/// Returns the mean loss of the minibatches as they were visited.
pub fn sgd_epoch<R: Rng + ?Sized>(
    model: &mut LogitModel,
    examples: &[Example],
    lr: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    let mut grad = vec![0.0; model.num_params()];
    let mut loss = 0.0;
    for chunk in order.chunks(batch_size) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / chunk.len() as f64;
        for &i in chunk {
            let e = &examples[i];
            // grad of log pi(target) is minus the cross-entropy gradient
            let dist = model.accumulate_grad_log_prob(&e.state, e.target, scale, &mut grad);
            loss -= dist.log_prob(e.target);
        }
        model.ascend(&grad, lr)?;
    }
    Ok(if examples.is_empty() {
        0.0
    } else {
        loss / examples.len() as f64
    })
}
