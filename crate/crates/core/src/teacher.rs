//! Teacher Q-value sources and the reward induced from them.
//!
//! Teacher logits are read as Q-values. Inverting the Bellman optimality
//! equation gives `r(s, a) = q(s, a) - max_a' q(s', a')`, with the
//! continuation of a terminal state taken as zero.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Checkpoint, LogitModel, ModelSpec};
use crate::seqmdp::{Policy, State, Token, Vocabulary};
use crate::supervised::{self, Example};

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Tabular(BTreeMap<Vec<Token>, Vec<f64>>),
    Model(LogitModel),
}

/// Frozen Q-value source. No method takes `&mut self`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherQ {
    vocab: Vocabulary,
    window: usize,
    source: Source,
}

impl TeacherQ {
    /// Tabular teacher keyed by the last `window` tokens (bos-padded).
    pub fn tabular(vocab: Vocabulary, window: usize, table: BTreeMap<Vec<Token>, Vec<f64>>) -> Result<Self> {
        for (ctx, row) in &table {
            if ctx.len() != window {
                return Err(Error::InvalidConfig(format!(
                    "context {ctx:?} does not have window {window}"
                )));
            }
            for &t in ctx {
                vocab.check(t)?;
            }
            if row.len() != vocab.size() {
                return Err(Error::LengthMismatch {
                    expected: vocab.size(),
                    actual: row.len(),
                });
            }
            if row.iter().any(|q| !q.is_finite()) {
                return Err(Error::NonFiniteParameters);
            }
        }
        Ok(Self {
            vocab,
            window,
            source: Source::Tabular(table),
        })
    }

    /// Tabular teacher defined on every possible context, filled by `f`.
    pub fn tabular_complete<F>(vocab: Vocabulary, window: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[Token]) -> Vec<f64>,
    {
        let mut table = BTreeMap::new();
        let v = vocab.size();
        let total = v
            .checked_pow(window as u32)
            .ok_or_else(|| Error::SizeBoundExceeded("tabular context count overflows".into()))?;
        for mut code in 0..total {
            let mut ctx = vec![0; window];
            for slot in (0..window).rev() {
                ctx[slot] = code % v;
                code /= v;
            }
            let row = f(&ctx);
            table.insert(ctx, row);
        }
        Self::tabular(vocab, window, table)
    }

    pub fn from_model(model: LogitModel) -> Self {
        Self {
            vocab: model.vocabulary(),
            window: model.window(),
            source: Source::Model(model),
        }
    }

    pub fn vocabulary(&self) -> Vocabulary {
        self.vocab
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn model(&self) -> Option<&LogitModel> {
        match &self.source {
            Source::Model(m) => Some(m),
            Source::Tabular(_) => None,
        }
    }

    /// Full Q-value row at a non-terminal state.
    pub fn q_values(&self, state: &State) -> Result<Vec<f64>> {
        if state.is_terminal() {
            return Err(Error::TerminalStep);
        }
        match &self.source {
            Source::Model(m) => Ok(m.logits_for(state)),
            Source::Tabular(table) => {
                let ctx = state.context(self.window);
                table.get(&ctx).cloned().ok_or(Error::MissingContext(ctx))
            }
        }
    }

    pub fn q_value(&self, state: &State, action: Token) -> Result<f64> {
        self.vocab.check(action)?;
        Ok(self.q_values(state)?[action])
    }

    /// `max_a q(s, a)`, or 0 for a terminal state.
    pub fn max_q(&self, state: &State) -> Result<f64> {
        if state.is_terminal() {
            return Ok(0.0);
        }
        Ok(self.q_values(state)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn to_document(&self) -> Result<TeacherDocument> {
        match &self.source {
            Source::Model(m) => {
                let mut ck = m.to_checkpoint();
                ck.frozen = Some(true);
                Ok(TeacherDocument::Model(ck))
            }
            Source::Tabular(table) => Ok(TeacherDocument::Tabular(TabularDocument {
                format_version: crate::models::FORMAT_VERSION,
                vocab_size: self.vocab.size(),
                eos_id: self.vocab.eos(),
                bos_id: self.vocab.bos(),
                window: self.window,
                frozen: true,
                table: table.iter().map(|(ctx, row)| (context_key(ctx), row.clone())).collect(),
            })),
        }
    }

    pub fn from_document(doc: &TeacherDocument) -> Result<Self> {
        match doc {
            TeacherDocument::Model(ck) => Ok(Self::from_model(LogitModel::from_checkpoint(ck)?)),
            TeacherDocument::Tabular(t) => {
                let vocab = Vocabulary::new(t.vocab_size, t.eos_id, t.bos_id)?;
                let mut table = BTreeMap::new();
                for (key, row) in &t.table {
                    table.insert(parse_context_key(key)?, row.clone());
                }
                Self::tabular(vocab, t.window, table)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document()?)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// The teacher acts as a Boltzmann policy over its own Q-values.
impl Policy for TeacherQ {
    fn vocab(&self) -> Vocabulary {
        self.vocab
    }

    fn logits(&self, state: &State) -> Result<Vec<f64>> {
        self.q_values(state)
    }
}

fn context_key(ctx: &[Token]) -> String {
    ctx.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_context_key(key: &str) -> Result<Vec<Token>> {
    key.split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Checkpoint(format!("bad context key {key:?}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularDocument {
    pub format_version: u32,
    pub vocab_size: usize,
    pub eos_id: Token,
    pub bos_id: Token,
    pub window: usize,
    pub frozen: bool,
    pub table: BTreeMap<String, Vec<f64>>,
}

/// Serialized teacher: a frozen model checkpoint or a context table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TeacherDocument {
    Model(Checkpoint),
    Tabular(TabularDocument),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipRange {
    pub lo: f64,
    pub hi: f64,
}

impl ClipRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidConfig(format!("clip range [{lo}, {hi}] is empty")));
        }
        Ok(Self { lo, hi })
    }

    pub fn clip(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

impl Default for ClipRange {
    fn default() -> Self {
        Self { lo: -100.0, hi: 100.0 }
    }
}

/// Step-wise reward `clip(q(s,a) - max_a' q(s',a'))`.
#[derive(Debug, Clone, Copy)]
pub struct InducedReward<'a> {
    pub teacher: &'a TeacherQ,
    pub clip: ClipRange,
}

impl<'a> InducedReward<'a> {
    pub fn new(teacher: &'a TeacherQ, clip: ClipRange) -> Self {
        Self { teacher, clip }
    }

    pub fn reward(&self, state: &State, action: Token, next: &State) -> Result<f64> {
        if &state.step(action)? != next {
            return Err(Error::TransitionMismatch);
        }
        let raw = self.teacher.q_value(state, action)? - self.teacher.max_q(next)?;
        Ok(self.clip.clip(raw))
    }
}

/// Training log of [`fit_teacher_logged`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitLog {
    /// Corpus cross-entropy before training and after each epoch.
    pub losses: Vec<f64>,
}

/// Trains a logit model by next-token cross-entropy and freezes it.
/// Sequences exclude bos and must end with eos.
pub fn fit_teacher<R: Rng + ?Sized>(
    vocab: Vocabulary,
    corpus: &[Vec<Token>],
    arch: ModelSpec,
    epochs: usize,
    lr: f64,
    rng: &mut R,
) -> Result<TeacherQ> {
    fit_teacher_logged(vocab, corpus, 0, arch, epochs, lr, 32, rng).map(|(t, _)| t)
}

#[allow(clippy::too_many_arguments)]
pub fn fit_teacher_logged<R: Rng + ?Sized>(
    vocab: Vocabulary,
    corpus: &[Vec<Token>],
    source_len: usize,
    arch: ModelSpec,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<(TeacherQ, FitLog)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut examples: Vec<Example> = Vec::new();
    for (index, seq) in corpus.iter().enumerate() {
        let ex = supervised::examples_from_sequence(vocab, seq, source_len).map_err(|e| match e {
            Error::InvalidSequence { reason, .. } => Error::InvalidSequence { index, reason },
            other => other,
        })?;
        examples.extend(ex);
    }
    let mut model = LogitModel::from_spec(arch, vocab, rng)?;
    let mut losses = vec![supervised::mean_cross_entropy(&model, &examples)];
    for _ in 0..epochs {
        supervised::sgd_epoch(&mut model, &examples, lr, batch_size, rng)?;
        losses.push(supervised::mean_cross_entropy(&model, &examples));
    }
    Ok((TeacherQ::from_model(model), FitLog { losses }))
}
