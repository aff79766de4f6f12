//! Small differentiable logit models over fixed-width token contexts.
//!
//! Inputs are the concatenated one-hot codes of the last `window` tokens of
//! the prefix. Gradients of log-softmax are computed in closed form.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqmdp::{Policy, State, Token, Vocabulary};

pub const DEFAULT_WINDOW: usize = 3;
pub const FORMAT_VERSION: u32 = 1;

/// Softmax distribution over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDistribution {
    logits: Vec<f64>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl PolicyDistribution {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        let log_probs: Vec<f64> = logits.iter().map(|z| z - lse).collect();
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Self {
            logits,
            probs,
            log_probs,
        }
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_prob(&self, a: Token) -> f64 {
        self.log_probs[a]
    }

    /// Index of the largest logit; ties go to the lowest index.
    pub fn argmax(&self) -> Token {
        argmax(&self.logits)
    }

    /// Inverse-CDF sample from one uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Token {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding left u above the accumulated mass
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .zip(&self.log_probs)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, l)| -p * l)
            .sum()
    }

    /// KL(self || other).
    pub fn kl(&self, other: &PolicyDistribution) -> f64 {
        self.probs
            .iter()
            .zip(self.log_probs.iter().zip(&other.log_probs))
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, (a, b))| p * (a - b))
            .sum()
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Active one-hot positions of the context window, one per slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextEncoding {
    window: usize,
    vocab_size: usize,
    active: Vec<usize>,
}

impl ContextEncoding {
    pub fn new(state: &State, window: usize) -> Self {
        let vocab_size = state.vocab().size();
        let active = state
            .context(window)
            .into_iter()
            .enumerate()
            .map(|(slot, tok)| slot * vocab_size + tok)
            .collect();
        Self {
            window,
            vocab_size,
            active,
        }
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn dim(&self) -> usize {
        self.window * self.vocab_size
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        for &i in &self.active {
            v[i] = 1.0;
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    Mlp1 { hidden_width: usize },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Mlp1 { .. } => "mlp1",
        }
    }

    pub fn hidden_width(&self) -> usize {
        match self {
            ModelKind::Linear => 0,
            ModelKind::Mlp1 { hidden_width } => *hidden_width,
        }
    }

    pub fn param_count(&self, vocab_size: usize, window: usize) -> usize {
        let input = vocab_size * window;
        match *self {
            ModelKind::Linear => vocab_size * input + vocab_size,
            ModelKind::Mlp1 { hidden_width: h } => h * input + h + vocab_size * h + vocab_size,
        }
    }
}

/// Architecture description, independent of parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub window: usize,
}

/// Logit model with a flat parameter vector.
///
/// Layouts (row-major):
/// * linear: `W [V x nV]`, `b [V]`
/// * mlp1: `W1 [H x nV]`, `b1 [H]`, `W2 [V x H]`, `b2 [V]`, tanh hidden units.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitModel {
    kind: ModelKind,
    vocab: Vocabulary,
    window: usize,
    params: Vec<f64>,
}

struct Activations {
    logits: Vec<f64>,
    hidden: Vec<f64>,
}

impl LogitModel {
    pub fn new(kind: ModelKind, vocab: Vocabulary, window: usize, params: Vec<f64>) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidConfig("window must be at least 1".into()));
        }
        if let ModelKind::Mlp1 { hidden_width: 0 } = kind {
            return Err(Error::InvalidConfig("hidden width must be at least 1".into()));
        }
        let expected = kind.param_count(vocab.size(), window);
        if params.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteParameters);
        }
        Ok(Self {
            kind,
            vocab,
            window,
            params,
        })
    }

    pub fn zeros(kind: ModelKind, vocab: Vocabulary, window: usize) -> Result<Self> {
        let n = kind.param_count(vocab.size(), window);
        Self::new(kind, vocab, window, vec![0.0; n])
    }

    /// Parameters drawn iid from uniform(-0.1, 0.1).
    pub fn init_uniform<R: Rng + ?Sized>(
        kind: ModelKind,
        vocab: Vocabulary,
        window: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let n = kind.param_count(vocab.size(), window);
        let params = (0..n).map(|_| rng.random_range(-0.1..0.1)).collect();
        Self::new(kind, vocab, window, params)
    }

    pub fn from_spec<R: Rng + ?Sized>(spec: ModelSpec, vocab: Vocabulary, rng: &mut R) -> Result<Self> {
        Self::init_uniform(spec.kind, vocab, spec.window, rng)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn vocabulary(&self) -> Vocabulary {
        self.vocab
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.kind,
            window: self.window,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        Self::new(self.kind, self.vocab, self.window, params)
    }

    fn input_dim(&self) -> usize {
        self.window * self.vocab.size()
    }

    fn activations(&self, ctx: &ContextEncoding) -> Activations {
        let v = self.vocab.size();
        let d = self.input_dim();
        let p = &self.params;
        match self.kind {
            ModelKind::Linear => {
                let bias = &p[v * d..];
                let logits = (0..v)
                    .map(|a| bias[a] + ctx.active().iter().map(|&i| p[a * d + i]).sum::<f64>())
                    .collect();
                Activations {
                    logits,
                    hidden: Vec::new(),
                }
            }
            ModelKind::Mlp1 { hidden_width: h } => {
                let b1 = &p[h * d..h * d + h];
                let w2 = &p[h * d + h..h * d + h + v * h];
                let b2 = &p[h * d + h + v * h..];
                let hidden: Vec<f64> = (0..h)
                    .map(|k| (b1[k] + ctx.active().iter().map(|&i| p[k * d + i]).sum::<f64>()).tanh())
                    .collect();
                let logits = (0..v)
                    .map(|a| {
                        b2[a]
                            + w2[a * h..(a + 1) * h]
                                .iter()
                                .zip(&hidden)
                                .map(|(w, x)| w * x)
                                .sum::<f64>()
                    })
                    .collect();
                Activations { logits, hidden }
            }
        }
    }

    pub fn logits_for(&self, state: &State) -> Vec<f64> {
        self.activations(&ContextEncoding::new(state, self.window)).logits
    }

    /// Softmax distribution at `state`.
    pub fn forward(&self, state: &State) -> Result<PolicyDistribution> {
        if state.is_terminal() {
            return Err(Error::TerminalStep);
        }
        Ok(PolicyDistribution::from_logits(self.logits_for(state)))
    }

    /// Adds `scale * d(dlogits . z)/d(theta)` into `grad`.
    pub fn accumulate_logit_grad(&self, state: &State, dlogits: &[f64], scale: f64, grad: &mut [f64]) {
        let ctx = ContextEncoding::new(state, self.window);
        let act = self.activations(&ctx);
        self.backprop(&ctx, &act, dlogits, scale, grad);
    }

    fn backprop(&self, ctx: &ContextEncoding, act: &Activations, dlogits: &[f64], scale: f64, grad: &mut [f64]) {
        let v = self.vocab.size();
        let d = self.input_dim();
        match self.kind {
            ModelKind::Linear => {
                for a in 0..v {
                    let g = scale * dlogits[a];
                    for &i in ctx.active() {
                        grad[a * d + i] += g;
                    }
                    grad[v * d + a] += g;
                }
            }
            ModelKind::Mlp1 { hidden_width: h } => {
                let w2_off = h * d + h;
                let b2_off = w2_off + v * h;
                let w2 = &self.params[w2_off..b2_off];
                for a in 0..v {
                    let g = scale * dlogits[a];
                    for k in 0..h {
                        grad[w2_off + a * h + k] += g * act.hidden[k];
                    }
                    grad[b2_off + a] += g;
                }
                for k in 0..h {
                    let dh: f64 = (0..v).map(|a| w2[a * h + k] * dlogits[a]).sum();
                    let dpre = scale * dh * (1.0 - act.hidden[k] * act.hidden[k]);
                    for &i in ctx.active() {
                        grad[k * d + i] += dpre;
                    }
                    grad[h * d + k] += dpre;
                }
            }
        }
    }

    /// Adds `scale * grad log pi(a|s)` into `grad` and returns the distribution at `s`.
    pub fn accumulate_grad_log_prob(
        &self,
        state: &State,
        action: Token,
        scale: f64,
        grad: &mut [f64],
    ) -> PolicyDistribution {
        let ctx = ContextEncoding::new(state, self.window);
        let act = self.activations(&ctx);
        let dist = PolicyDistribution::from_logits(act.logits.clone());
        let mut delta: Vec<f64> = dist.probs().iter().map(|p| -p).collect();
        delta[action] += 1.0;
        self.backprop(&ctx, &act, &delta, scale, grad);
        dist
    }

    /// Analytic `d log pi(a|s) / d theta`.
    pub fn grad_log_prob(&self, state: &State, action: Token) -> Result<Vec<f64>> {
        if state.is_terminal() {
            return Err(Error::TerminalStep);
        }
        self.vocab.check(action)?;
        let mut g = vec![0.0; self.params.len()];
        self.accumulate_grad_log_prob(state, action, 1.0, &mut g);
        Ok(g)
    }

    /// `theta + lr * g` (ascent).
    pub fn apply_update(&self, g: &[f64], lr: f64) -> Result<Self> {
        let mut next = self.clone();
        next.ascend(g, lr)?;
        Ok(next)
    }

    pub fn ascend(&mut self, g: &[f64], lr: f64) -> Result<()> {
        if g.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                expected: self.params.len(),
                actual: g.len(),
            });
        }
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {lr} must be >= 0")));
        }
        for (p, gi) in self.params.iter_mut().zip(g) {
            *p += lr * gi;
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteParameters);
        }
        Ok(())
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: FORMAT_VERSION,
            kind: self.kind.name().to_string(),
            vocab_size: self.vocab.size(),
            eos_id: self.vocab.eos(),
            bos_id: self.vocab.bos(),
            window: self.window,
            hidden_width: self.kind.hidden_width(),
            parameters: self.params.clone(),
            frozen: None,
            optimizer: None,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {}",
                ck.format_version
            )));
        }
        let kind = match ck.kind.as_str() {
            "linear" => ModelKind::Linear,
            "mlp1" => ModelKind::Mlp1 {
                hidden_width: ck.hidden_width,
            },
            other => return Err(Error::Checkpoint(format!("unknown model kind {other:?}"))),
        };
        let vocab = Vocabulary::new(ck.vocab_size, ck.eos_id, ck.bos_id)?;
        Self::new(kind, vocab, ck.window, ck.parameters.clone())
    }
}

impl Policy for LogitModel {
    fn vocab(&self) -> Vocabulary {
        self.vocab
    }

    fn logits(&self, state: &State) -> Result<Vec<f64>> {
        if state.is_terminal() {
            return Err(Error::TerminalStep);
        }
        Ok(self.logits_for(state))
    }
}

/// Adaptive-moment optimizer state stored alongside a student checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerState {
    pub kind: String,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

/// On-disk model document. Floats are written in shortest round-trip form,
/// so reading a checkpoint back reproduces every parameter bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: String,
    pub vocab_size: usize,
    pub eos_id: Token,
    pub bos_id: Token,
    pub window: usize,
    pub hidden_width: usize,
    pub parameters: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn to_string_pretty(&self) -> Result<String> {
        if self.parameters.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteParameters);
        }
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string_pretty()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::substream;

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::new(n, n - 1, 0).unwrap()
    }

    #[test]
    fn zero_linear_is_uniform() {
        let m = LogitModel::zeros(ModelKind::Linear, vocab(4), 3).unwrap();
        let s = State::initial(vocab(4), &[]).unwrap();
        let d = m.forward(&s).unwrap();
        for p in d.probs() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_arithmetic() {
        let d = PolicyDistribution::from_logits(vec![0.0, 2f64.ln(), 0.0]);
        let want = [0.25, 0.5, 0.25];
        for (p, w) in d.probs().iter().zip(want) {
            assert!((p - w).abs() < 1e-15);
        }
    }

    #[test]
    fn mlp_probs_normalised() {
        let v = vocab(6);
        let m = LogitModel::init_uniform(ModelKind::Mlp1 { hidden_width: 8 }, v, 3, &mut substream(1, 0)).unwrap();
        let s = State::initial(v, &[2, 3]).unwrap().step(4).unwrap();
        let d = m.forward(&s).unwrap();
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d.probs().iter().all(|p| *p > 0.0));
    }

    #[test]
    fn bias_gradient_at_uniform() {
        let v = Vocabulary::new(2, 1, 0).unwrap();
        let m = LogitModel::zeros(ModelKind::Linear, v, 1).unwrap();
        let s = State::initial(v, &[]).unwrap();
        let g = m.grad_log_prob(&s, 0).unwrap();
        // W is [2 x 2], bias follows
        assert_eq!(&g[4..], &[0.5, -0.5]);
        // context [bos] activates column 0 only
        assert_eq!(&g[..4], &[0.5, 0.0, -0.5, 0.0]);
    }

    #[test]
    fn update_arithmetic() {
        let v = Vocabulary::new(2, 1, 0).unwrap();
        let mut m = LogitModel::zeros(ModelKind::Linear, v, 1).unwrap();
        m.params_mut().copy_from_slice(&[1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let g = [1.0, -1.0, 0.0, 0.0, 0.0, 0.0];
        let m2 = m.apply_update(&g, 0.5).unwrap();
        assert_eq!(&m2.params()[..2], &[1.5, 1.5]);
        assert_eq!(m.apply_update(&[0.0; 6], 0.5).unwrap(), m);
        assert!(matches!(
            m.apply_update(&[0.0; 3], 0.5),
            Err(Error::LengthMismatch { expected: 6, actual: 3 })
        ));
    }

    #[test]
    fn update_linearity() {
        let v = vocab(3);
        let m = LogitModel::init_uniform(ModelKind::Linear, v, 2, &mut substream(3, 0)).unwrap();
        let n = m.num_params();
        let g1: Vec<f64> = (0..n).map(|i| i as f64 * 0.25).collect();
        let g2: Vec<f64> = (0..n).map(|i| 1.0 - i as f64 * 0.5).collect();
        let sum: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();
        let seq = m.apply_update(&g1, 0.1).unwrap().apply_update(&g2, 0.1).unwrap();
        let once = m.apply_update(&sum, 0.1).unwrap();
        for (a, b) in seq.params().iter().zip(once.params()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let v = vocab(3);
        let n = ModelKind::Linear.param_count(3, 1);
        let mut p = vec![0.0; n];
        p[0] = f64::NAN;
        assert!(matches!(
            LogitModel::new(ModelKind::Linear, v, 1, p),
            Err(Error::NonFiniteParameters)
        ));
        assert!(LogitModel::new(ModelKind::Linear, v, 1, vec![0.0; n + 1]).is_err());
    }

    #[test]
    fn forward_rejects_terminal() {
        let v = vocab(3);
        let m = LogitModel::zeros(ModelKind::Linear, v, 1).unwrap();
        let s = State::initial(v, &[]).unwrap().step(2).unwrap();
        assert!(m.forward(&s).is_err());
    }

    #[test]
    fn encoding_has_one_hot_per_slot() {
        let v = vocab(5);
        let s = State::initial(v, &[3]).unwrap();
        let e = ContextEncoding::new(&s, 3);
        let dense = e.to_dense();
        assert_eq!(dense.len(), 15);
        assert_eq!(dense.iter().filter(|x| **x == 1.0).count(), 3);
        assert_eq!(e.active(), &[0, 5, 13]);
    }

    #[test]
    fn checkpoint_roundtrip_exact() {
        let v = vocab(5);
        let m = LogitModel::init_uniform(ModelKind::Mlp1 { hidden_width: 4 }, v, 2, &mut substream(5, 0)).unwrap();
        let text = m.to_checkpoint().to_string_pretty().unwrap();
        let back = LogitModel::from_checkpoint(&Checkpoint::parse(&text).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(text.contains("\"format_version\": 1"));
    }

    #[test]
    fn checkpoint_rejects_unknown_fields() {
        let v = vocab(3);
        let m = LogitModel::zeros(ModelKind::Linear, v, 1).unwrap();
        let mut json: serde_json::Value = serde_json::from_str(&m.to_checkpoint().to_string_pretty().unwrap()).unwrap();
        json["surprise"] = serde_json::json!(1);
        assert!(Checkpoint::parse(&json.to_string()).is_err());
    }
}
