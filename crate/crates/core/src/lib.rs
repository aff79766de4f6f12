//! K-step telescoped return estimation for reinforcement-learning based
//! distillation of autoregressive sequence policies.
//!
//! A frozen teacher's pre-softmax logits are read as Q-values. Inverting the
//! Bellman optimality equation turns them into a step-wise reward, and the
//! student is trained with REINFORCE. Instead of the full reward sum, the
//! student may be trained on a K-step return that telescopes the Q-value
//! differences over segments of `K` steps, trading a bounded bias for lower
//! variance.
//!
//! The crate is organised bottom-up:
//!
//! * [`seqmdp`]: token-prefix states, deterministic transitions, rollouts.
//! * [`models`]: small logit models with closed-form log-softmax gradients.
//! * [`teacher`]: teacher Q-value sources and the induced reward.
//! * [`returns`]: actual return, K-step return, implied baseline, statistics.
//! * [`trainer`]: pre-distillation and REINFORCE with pluggable estimators.
//! * [`oracle`]: exhaustive enumeration and finite-difference oracles.
//! * [`tasks`]: synthetic corpora (Markov chain, copy, reverse).

pub mod error;
pub mod exec;
pub mod models;
pub mod oracle;
pub mod returns;
pub mod seqmdp;
pub mod stats;
pub mod supervised;
pub mod tasks;
pub mod teacher;
pub mod trainer;

pub use error::{Error, Result};
pub use models::{LogitModel, ModelKind, PolicyDistribution};
pub use returns::{ClipRange, ReturnConfig, ReturnEstimate};
pub use seqmdp::{Policy, RolloutMode, State, Token, Trajectory, Vocabulary};
pub use teacher::{InducedReward, TeacherQ};
