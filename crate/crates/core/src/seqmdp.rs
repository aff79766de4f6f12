//! Deterministic sequence-generation MDP.
//!
//! A state is a token prefix (bos, optional conditioning tokens, then the
//! generated tokens); an action is a vocabulary token; the transition
//! appends the action. A prefix ending in eos is terminal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::PolicyDistribution;

pub type Token = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vocabulary {
    size: usize,
    eos: Token,
    bos: Token,
}

impl Vocabulary {
    pub fn new(size: usize, eos: Token, bos: Token) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidVocabulary(format!("size {size} < 2")));
        }
        if eos == bos {
            return Err(Error::InvalidVocabulary("eos and bos coincide".into()));
        }
        if eos >= size || bos >= size {
            return Err(Error::InvalidVocabulary(format!(
                "eos {eos} / bos {bos} outside 0..{size}"
            )));
        }
        Ok(Self { size, eos, bos })
    }

    /// Vocabulary with `bos = 0` and `eos = 1`, the layout used by the tasks.
    pub fn with_size(size: usize) -> Result<Self> {
        Self::new(size, 1, 0)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn eos(&self) -> Token {
        self.eos
    }

    pub fn bos(&self) -> Token {
        self.bos
    }

    pub fn check(&self, token: Token) -> Result<()> {
        if token < self.size {
            Ok(())
        } else {
            Err(Error::TokenOutOfRange { token, size: self.size })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct State {
    vocab: Vocabulary,
    prefix: Vec<Token>,
    prompt_len: usize,
}

impl State {
    /// Initial state `[bos, source...]`. Conditioning tokens may not contain eos.
    pub fn initial(vocab: Vocabulary, source: &[Token]) -> Result<Self> {
        for &t in source {
            vocab.check(t)?;
            if t == vocab.eos() {
                return Err(Error::InvalidConfig("conditioning source contains eos".into()));
            }
        }
        let mut prefix = Vec::with_capacity(source.len() + 1);
        prefix.push(vocab.bos());
        prefix.extend_from_slice(source);
        let prompt_len = prefix.len();
        Ok(Self {
            vocab,
            prefix,
            prompt_len,
        })
    }

    pub fn vocab(&self) -> Vocabulary {
        self.vocab
    }

    pub fn prefix(&self) -> &[Token] {
        &self.prefix
    }

    /// Conditioning part of the prefix, without bos.
    pub fn source(&self) -> &[Token] {
        &self.prefix[1..self.prompt_len]
    }

    /// Tokens generated so far.
    pub fn generated(&self) -> &[Token] {
        &self.prefix[self.prompt_len..]
    }

    /// Number of generated tokens.
    pub fn length(&self) -> usize {
        self.prefix.len() - self.prompt_len
    }

    pub fn is_terminal(&self) -> bool {
        self.length() > 0 && self.prefix.last() == Some(&self.vocab.eos())
    }

    pub fn step(&self, action: Token) -> Result<State> {
        if self.is_terminal() {
            return Err(Error::TerminalStep);
        }
        self.vocab.check(action)?;
        let mut prefix = Vec::with_capacity(self.prefix.len() + 1);
        prefix.extend_from_slice(&self.prefix);
        prefix.push(action);
        Ok(State {
            vocab: self.vocab,
            prefix,
            prompt_len: self.prompt_len,
        })
    }

    /// Last `window` tokens of the prefix, left-padded with bos.
    pub fn context(&self, window: usize) -> Vec<Token> {
        let mut ctx = vec![self.vocab.bos(); window];
        let take = window.min(self.prefix.len());
        ctx[window - take..].copy_from_slice(&self.prefix[self.prefix.len() - take..]);
        ctx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: State,
    pub action: Token,
    pub logprob: f64,
}

/// One episode: steps `0..=T` where `T = len() - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    steps: Vec<Step>,
    terminal: State,
}

impl Trajectory {
    /// Replays `actions` from `initial`; log-probabilities are recorded as 0.
    pub fn from_actions(initial: &State, actions: &[Token]) -> Result<Self> {
        Self::from_scored_actions(initial, actions.iter().map(|&a| (a, 0.0)))
    }

    /// Replays `actions` and scores each step under `policy`.
    pub fn from_actions_with_policy<P: Policy + ?Sized>(
        initial: &State,
        actions: &[Token],
        policy: &P,
    ) -> Result<Self> {
        let mut steps = Vec::with_capacity(actions.len());
        let mut state = initial.clone();
        for &a in actions {
            let dist = policy.distribution(&state)?;
            let next = state.step(a)?;
            steps.push(Step {
                state,
                action: a,
                logprob: dist.log_prob(a),
            });
            state = next;
        }
        Self::assemble(steps, state)
    }

    /// Replays `(action, log-probability)` pairs.
    pub fn from_scored(initial: &State, actions: &[(Token, f64)]) -> Result<Self> {
        Self::from_scored_actions(initial, actions.iter().copied())
    }

    fn from_scored_actions(initial: &State, actions: impl IntoIterator<Item = (Token, f64)>) -> Result<Self> {
        let mut steps = Vec::new();
        let mut state = initial.clone();
        for (a, logprob) in actions {
            let next = state.step(a)?;
            steps.push(Step {
                state,
                action: a,
                logprob,
            });
            state = next;
        }
        Self::assemble(steps, state)
    }

    fn assemble(steps: Vec<Step>, terminal: State) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidConfig("trajectory needs at least one step".into()));
        }
        Ok(Self { steps, terminal })
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Number of steps (`T + 1`).
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn initial(&self) -> &State {
        &self.steps[0].state
    }

    pub fn terminal_state(&self) -> &State {
        &self.terminal
    }

    pub fn actions(&self) -> Vec<Token> {
        self.steps.iter().map(|s| s.action).collect()
    }

    pub fn ends_with_eos(&self) -> bool {
        self.terminal.is_terminal()
    }

    pub fn log_prob(&self) -> f64 {
        self.steps.iter().map(|s| s.logprob).sum()
    }

    /// Checks the trajectory invariants against a horizon.
    pub fn validate(&self, horizon: usize) -> Result<()> {
        let bad = |r: &str| Err(Error::InvalidConfig(format!("invalid trajectory: {r}")));
        for w in self.steps.windows(2) {
            if w[0].state.step(w[0].action)? != w[1].state {
                return bad("transition mismatch");
            }
        }
        let last = self.steps.last().expect("non-empty");
        if last.state.step(last.action)? != self.terminal {
            return bad("terminal state mismatch");
        }
        if self.len() > horizon {
            return bad("longer than horizon");
        }
        if self.len() < horizon && !self.ends_with_eos() {
            return bad("ends before horizon without eos");
        }
        if self.steps.iter().any(|s| !s.logprob.is_finite() || s.logprob > 0.0) {
            return bad("log-probability not finite or positive");
        }
        Ok(())
    }
}

/// Anything that maps a state to next-token logits.
pub trait Policy: Sync {
    fn vocab(&self) -> Vocabulary;

    fn logits(&self, state: &State) -> Result<Vec<f64>>;

    fn distribution(&self, state: &State) -> Result<PolicyDistribution> {
        Ok(PolicyDistribution::from_logits(self.logits(state)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    Sample,
    Greedy,
}

/// Generates one episode, stopping at eos or after `horizon` actions.
pub fn rollout<P, R>(policy: &P, initial: &State, horizon: usize, mode: RolloutMode, rng: &mut R) -> Result<Trajectory>
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    if initial.is_terminal() {
        return Err(Error::TerminalStep);
    }
    let mut steps = Vec::with_capacity(horizon);
    let mut state = initial.clone();
    for _ in 0..horizon {
        let dist = policy.distribution(&state)?;
        let action = match mode {
            RolloutMode::Greedy => dist.argmax(),
            RolloutMode::Sample => dist.sample(rng),
        };
        let next = state.step(action)?;
        steps.push(Step {
            state,
            action,
            logprob: dist.log_prob(action),
        });
        state = next;
        if state.is_terminal() {
            break;
        }
    }
    Trajectory::assemble(steps, state)
}
