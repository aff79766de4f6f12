//! Synthetic sequence tasks and the corpus file format.
//!
//! Token layout: bos = 0, eos = 1. Copy and reverse reserve 2 as the
//! separator between source and target.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::substream;
use crate::seqmdp::{State, Token, Vocabulary};

pub const SEPARATOR: Token = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    MarkovChain { order: usize, transition_seed: u64 },
    Copy { length: usize },
    Reverse { length: usize },
}

/// Order-`o` chain over content tokens and eos, keyed by the last `o`
/// tokens (bos-padded).
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    order: usize,
    vocab: Vocabulary,
    rows: BTreeMap<Vec<Token>, Vec<f64>>,
}

impl MarkovChain {
    pub fn random(vocab: Vocabulary, order: usize, seed: u64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidConfig("markov order must be at least 1".into()));
        }
        if vocab.size() < 3 || vocab.bos() != 0 || vocab.eos() != 1 {
            return Err(Error::InvalidConfig(
                "markov task needs bos=0, eos=1 and at least one content token".into(),
            ));
        }
        let mut rng = substream(seed, 0);
        let alphabet: Vec<Token> = std::iter::once(vocab.bos()).chain(2..vocab.size()).collect();
        let mut rows = BTreeMap::new();
        let count = alphabet.len().pow(order as u32);
        for mut code in 0..count {
            let mut ctx = vec![0; order];
            for slot in (0..order).rev() {
                ctx[slot] = alphabet[code % alphabet.len()];
                code /= alphabet.len();
            }
            // bos may only appear as left padding
            if ctx.windows(2).any(|w| w[0] != vocab.bos() && w[1] == vocab.bos()) {
                continue;
            }
            let at_start = ctx.iter().all(|&t| t == vocab.bos());
            let p_eos = if at_start { 0.0 } else { rng.random_range(0.05..0.2) };
            let weights: Vec<f64> = (2..vocab.size())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (2.0 * z).exp()
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut row = vec![0.0; vocab.size()];
            row[vocab.eos()] = p_eos;
            for (t, w) in (2..vocab.size()).zip(weights) {
                row[t] = (1.0 - p_eos) * w / total;
            }
            rows.insert(ctx, row);
        }
        Ok(Self { order, vocab, rows })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Next-token distribution after `prefix` (bos-led, as in [`State::prefix`]).
    pub fn row(&self, prefix: &[Token]) -> &[f64] {
        let mut ctx = vec![self.vocab.bos(); self.order];
        let take = self.order.min(prefix.len());
        ctx[self.order - take..].copy_from_slice(&prefix[prefix.len() - take..]);
        &self.rows[&ctx]
    }

    pub fn rows(&self) -> &BTreeMap<Vec<Token>, Vec<f64>> {
        &self.rows
    }

    /// One eos-terminated sequence of at most `max_len` tokens.
    pub fn sample<R: Rng + ?Sized>(&self, max_len: usize, rng: &mut R) -> Vec<Token> {
        let mut prefix = vec![self.vocab.bos()];
        loop {
            if prefix.len() == max_len {
                prefix.push(self.vocab.eos());
                break;
            }
            let row = self.row(&prefix);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut next = self.vocab.eos();
            for (t, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    next = t;
                    break;
                }
            }
            prefix.push(next);
            if next == self.vocab.eos() {
                break;
            }
        }
        prefix.split_off(1)
    }
}

/// A task bound to a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSampler {
    task: Task,
    vocab: Vocabulary,
    chain: Option<MarkovChain>,
}

impl TaskSampler {
    pub fn new(task: Task, vocab: Vocabulary) -> Result<Self> {
        let chain = match task {
            Task::MarkovChain { order, transition_seed } => Some(MarkovChain::random(vocab, order, transition_seed)?),
            Task::Copy { length } | Task::Reverse { length } => {
                if vocab.size() < 4 || vocab.bos() != 0 || vocab.eos() != 1 {
                    return Err(Error::InvalidConfig(
                        "copy/reverse need bos=0, eos=1, separator=2 and a content token".into(),
                    ));
                }
                if length == 0 {
                    return Err(Error::InvalidConfig("source length must be at least 1".into()));
                }
                None
            }
        };
        Ok(Self { task, vocab, chain })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn vocabulary(&self) -> Vocabulary {
        self.vocab
    }

    pub fn chain(&self) -> Option<&MarkovChain> {
        self.chain.as_ref()
    }

    /// Number of leading conditioning tokens in each sequence.
    pub fn source_len(&self) -> usize {
        match self.task {
            Task::MarkovChain { .. } => 1,
            Task::Copy { length } | Task::Reverse { length } => length + 1,
        }
    }

    /// One corpus sequence. `max_len` caps markov sequences (eos included).
    pub fn sample_sequence<R: Rng + ?Sized>(&self, max_len: usize, rng: &mut R) -> Vec<Token> {
        match self.task {
            Task::MarkovChain { .. } => self
                .chain
                .as_ref()
                .expect("markov task has a chain")
                .sample(max_len.max(2), rng),
            Task::Copy { length } | Task::Reverse { length } => {
                let src: Vec<Token> = (0..length).map(|_| rng.random_range(3..self.vocab.size())).collect();
                let mut seq = src.clone();
                seq.push(SEPARATOR);
                if matches!(self.task, Task::Reverse { .. }) {
                    seq.extend(src.iter().rev());
                } else {
                    seq.extend(&src);
                }
                seq.push(self.vocab.eos());
                seq
            }
        }
    }

    /// Initial RL state conditioned on the source part of `sequence`.
    pub fn input_state(&self, sequence: &[Token]) -> Result<State> {
        let n = self.source_len();
        if sequence.len() <= n {
            return Err(Error::InvalidSequence {
                index: 0,
                reason: "shorter than its conditioning prefix".into(),
            });
        }
        State::initial(self.vocab, &sequence[..n])
    }

    pub fn sample_inputs<R: Rng + ?Sized>(&self, n: usize, max_len: usize, rng: &mut R) -> Result<Vec<State>> {
        (0..n)
            .map(|_| {
                let seq = loop {
                    let s = self.sample_sequence(max_len, rng);
                    if s.len() > self.source_len() {
                        break s;
                    }
                };
                self.input_state(&seq)
            })
            .collect()
    }
}

pub fn format_corpus(corpus: &[Vec<Token>]) -> String {
    let mut out = String::new();
    for seq in corpus {
        let line: Vec<String> = seq.iter().map(|t| t.to_string()).collect();
        writeln!(out, "{}", line.join(" ")).expect("string write");
    }
    out
}

pub fn parse_corpus(text: &str, vocab: Vocabulary) -> Result<Vec<Vec<Token>>> {
    let mut corpus = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let seq: Vec<Token> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<Token>().map_err(|_| Error::InvalidSequence {
                    index,
                    reason: format!("bad token {t:?}"),
                })
            })
            .collect::<Result<_>>()?;
        for &t in &seq {
            vocab.check(t)?;
        }
        if seq.last() != Some(&vocab.eos()) {
            return Err(Error::InvalidSequence {
                index,
                reason: "does not end with eos".into(),
            });
        }
        corpus.push(seq);
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(corpus)
}

pub fn write_corpus(path: &Path, corpus: &[Vec<Token>]) -> Result<()> {
    std::fs::write(path, format_corpus(corpus)).map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: &Path, vocab: Vocabulary) -> Result<Vec<Vec<Token>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, vocab)
}
