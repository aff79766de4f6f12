//! Return estimators: the actual return `G_t`, the K-step return `Ĝ_t`,
//! the baseline they imply, and per-step estimator statistics.
//!
//! With `q_t = q(s_t, a_t)` and `m_j = max_a q(s_j, a)`, for a trajectory
//! with last index `T`:
//!
//! ```text
//! G_T = q_T                      G_t = (q_t - m_{t+1}) + G_{t+1}
//! Ĝ_T = q_T
//! Ĝ_t = (q_t - m_{t+1}) + Ĝ_{t+1}    if T - t < K
//! Ĝ_t = (q_t - m_{t+K}) + Ĝ_{t+K}    otherwise
//! ```
//!
//! The last step carries its raw Q-value whether the episode ended with eos
//! or at the horizon.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::seqmdp::Trajectory;
use crate::stats::Moments;
use crate::teacher::TeacherQ;

pub use crate::teacher::ClipRange;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnConfig {
    k: usize,
    clip: ClipRange,
}

impl ReturnConfig {
    pub fn new(k: usize, clip: ClipRange) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        Ok(Self { k, clip })
    }

    /// K-step config with the default clip range.
    pub fn k(k: usize) -> Result<Self> {
        Self::new(k, ClipRange::default())
    }

    /// The one-step estimator (K = 1).
    pub fn one_step() -> Self {
        Self {
            k: 1,
            clip: ClipRange::default(),
        }
    }

    pub fn segment(&self) -> usize {
        self.k
    }

    pub fn clip(&self) -> ClipRange {
        self.clip
    }
}

/// Teacher quantities along one trajectory: `q[t] = q(s_t, a_t)` and
/// `state_max[t] = max_a q(s_t, a)` for `t` in `0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepValues {
    q: Vec<f64>,
    state_max: Vec<f64>,
}

impl StepValues {
    pub fn new(q: Vec<f64>, state_max: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::InvalidConfig("empty step values".into()));
        }
        if q.len() != state_max.len() {
            return Err(Error::LengthMismatch {
                expected: q.len(),
                actual: state_max.len(),
            });
        }
        Ok(Self { q, state_max })
    }

    pub fn from_trajectory(traj: &Trajectory, teacher: &TeacherQ) -> Result<Self> {
        let mut q = Vec::with_capacity(traj.len());
        let mut state_max = Vec::with_capacity(traj.len());
        for step in traj.steps() {
            let row = teacher.q_values(&step.state)?;
            q.push(row[step.action]);
            state_max.push(row.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        Ok(Self { q, state_max })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn state_max(&self) -> &[f64] {
        &self.state_max
    }

    /// Unclipped `G_t` for every step.
    pub fn actual(&self) -> Vec<f64> {
        let last = self.q.len() - 1;
        let mut g = vec![0.0; self.q.len()];
        g[last] = self.q[last];
        for t in (0..last).rev() {
            g[t] = (self.q[t] - self.state_max[t + 1]) + g[t + 1];
        }
        g
    }

    /// Unclipped `Ĝ_t` for every step, one backward pass.
    pub fn kstep(&self, k: usize) -> Vec<f64> {
        let last = self.q.len() - 1;
        let mut g = vec![0.0; self.q.len()];
        g[last] = self.q[last];
        for t in (0..last).rev() {
            let jump = if last - t < k { 1 } else { k };
            g[t] = (self.q[t] - self.state_max[t + jump]) + g[t + jump];
        }
        g
    }
}

fn clip_all(values: &mut [f64], clip: ClipRange) {
    for v in values {
        *v = clip.clip(*v);
    }
}

/// Actual return `G_t`, clipped to the default range like `kstep_return`.
pub fn actual_return(traj: &Trajectory, teacher: &TeacherQ) -> Result<Vec<f64>> {
    let mut g = actual_return_raw(traj, teacher)?;
    clip_all(&mut g, ClipRange::default());
    Ok(g)
}

pub fn actual_return_raw(traj: &Trajectory, teacher: &TeacherQ) -> Result<Vec<f64>> {
    Ok(StepValues::from_trajectory(traj, teacher)?.actual())
}

/// Unclipped K-step return.
pub fn kstep_return_raw(traj: &Trajectory, teacher: &TeacherQ, cfg: &ReturnConfig) -> Result<Vec<f64>> {
    Ok(StepValues::from_trajectory(traj, teacher)?.kstep(cfg.k))
}

/// K-step return, each entry clipped to the configured range.
pub fn kstep_return(traj: &Trajectory, teacher: &TeacherQ, cfg: &ReturnConfig) -> Result<Vec<f64>> {
    let mut g = kstep_return_raw(traj, teacher, cfg)?;
    clip_all(&mut g, cfg.clip);
    Ok(g)
}

/// `b_t = G_t - Ĝ_t` before clipping. Zero for K = 1 and whenever every action
/// after step `t` is teacher-greedy.
pub fn implied_baseline(traj: &Trajectory, teacher: &TeacherQ, cfg: &ReturnConfig) -> Result<Vec<f64>> {
    let v = StepValues::from_trajectory(traj, teacher)?;
    Ok(baseline_of(&v, cfg.k))
}

fn baseline_of(v: &StepValues, k: usize) -> Vec<f64> {
    v.actual().into_iter().zip(v.kstep(k)).map(|(g, gh)| g - gh).collect()
}

/// Per-step learning signals and diagnostics for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnEstimate {
    /// Clipped `Ĝ_t`.
    pub g_hat: Vec<f64>,
    /// Clipped `G_t`.
    pub g_actual: Vec<f64>,
    /// `G_t - Ĝ_t` before clipping.
    pub baseline: Vec<f64>,
}

impl ReturnEstimate {
    pub fn from_values(v: &StepValues, cfg: &ReturnConfig) -> Self {
        let mut g_actual = v.actual();
        let mut g_hat = v.kstep(cfg.k);
        let baseline = g_actual.iter().zip(&g_hat).map(|(g, gh)| g - gh).collect();
        clip_all(&mut g_actual, cfg.clip);
        clip_all(&mut g_hat, cfg.clip);
        Self {
            g_hat,
            g_actual,
            baseline,
        }
    }
}

pub fn estimate(traj: &Trajectory, teacher: &TeacherQ, cfg: &ReturnConfig) -> Result<ReturnEstimate> {
    Ok(ReturnEstimate::from_values(
        &StepValues::from_trajectory(traj, teacher)?,
        cfg,
    ))
}

/// Sample statistics of `Ĝ_t` and `G_t` at one step across trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorStats {
    pub k_hat: Moments,
    pub actual: Moments,
    /// Moments of `Ĝ_t - G_t`.
    pub difference: Moments,
}

impl EstimatorStats {
    pub fn count(&self) -> u64 {
        self.actual.count()
    }

    pub fn mean_k_hat(&self) -> f64 {
        self.k_hat.mean()
    }

    pub fn var_k_hat(&self) -> f64 {
        self.k_hat.sample_variance()
    }

    pub fn mean_actual(&self) -> f64 {
        self.actual.mean()
    }

    pub fn var_actual(&self) -> f64 {
        self.actual.sample_variance()
    }

    /// Sample-mean estimate of `E[Ĝ_t - G_t]`.
    pub fn bias(&self) -> f64 {
        self.difference.mean()
    }

    fn merge(&mut self, other: &EstimatorStats) {
        self.k_hat.merge(&other.k_hat);
        self.actual.merge(&other.actual);
        self.difference.merge(&other.difference);
    }
}

const STATS_SHARD: usize = 256;

pub fn estimator_stats(
    trajs: &[Trajectory],
    teacher: &TeacherQ,
    cfg: &ReturnConfig,
    at_step: usize,
    exec: Execution,
) -> Result<EstimatorStats> {
    if trajs.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: trajs.len(),
        });
    }
    if let Some((index, t)) = trajs.iter().enumerate().find(|(_, t)| t.len() <= at_step) {
        return Err(Error::StepOutOfRange {
            index,
            len: t.len(),
            step: at_step,
        });
    }
    let shards = trajs.len().div_ceil(STATS_SHARD);
    let parts = exec::map_indexed(shards, exec, |s| -> Result<EstimatorStats> {
        let mut st = EstimatorStats {
            k_hat: Moments::new(),
            actual: Moments::new(),
            difference: Moments::new(),
        };
        let end = ((s + 1) * STATS_SHARD).min(trajs.len());
        for traj in &trajs[s * STATS_SHARD..end] {
            let est = estimate(traj, teacher, cfg)?;
            let (gh, g) = (est.g_hat[at_step], est.g_actual[at_step]);
            st.k_hat.push(gh);
            st.actual.push(g);
            st.difference.push(gh - g);
        }
        Ok(st)
    });
    let mut parts = parts.into_iter();
    let mut total = parts.next().expect("at least one shard")?;
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// One diagnostics CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub traj_id: usize,
    pub t: usize,
    pub g_actual: f64,
    pub g_hat: f64,
    pub baseline: f64,
    #[serde(rename = "K")]
    pub k: usize,
}

pub const DIAGNOSTICS_HEADER: [&str; 6] = ["traj_id", "t", "g_actual", "g_hat", "baseline", "K"];

pub fn diagnostic_rows(traj_id: usize, est: &ReturnEstimate, k: usize) -> Vec<DiagnosticRow> {
    (0..est.g_hat.len())
        .map(|t| DiagnosticRow {
            traj_id,
            t,
            g_actual: est.g_actual[t],
            g_hat: est.g_hat[t],
            baseline: est.baseline[t],
            k,
        })
        .collect()
}

pub fn write_diagnostics<W: Write>(out: W, rows: &[DiagnosticRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(DIAGNOSTICS_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<diagnostics>", e))?;
    Ok(())
}

/// Synthetic returns whose step terms are independent Gaussians.
///
/// `G = Σ_{i<span} (Q_i - M_{i+1})` and, for segment length `K`,
/// `Ĝ = Σ_{i=0}^{⌊(span-1)/K⌋} (Q_{iK} - M_{(i+1)K})`, with every `Q_j`
/// drawn from N(0, σ²_{S,A}) and every `M_j` from N(0, σ²_S). Under this
/// construction `Var[G] = span (σ²_{S,A} + σ²_S)` and
/// `Var[Ĝ] = (⌊(span-1)/K⌋ + 1)(σ²_{S,A} + σ²_S)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IidConstruction {
    pub sigma2_sa: f64,
    pub sigma2_s: f64,
    /// Number of remaining steps `T - t + 1`.
    pub span: usize,
}

impl IidConstruction {
    pub fn predicted_var_actual(&self) -> f64 {
        self.span as f64 * (self.sigma2_sa + self.sigma2_s)
    }

    pub fn predicted_var_kstep(&self, k: usize) -> f64 {
        ((self.span - 1) / k + 1) as f64 * (self.sigma2_sa + self.sigma2_s)
    }

    /// Draws one sample; writes `Ĝ` for each `ks[i]` into `out[i]` and returns `G`.
    pub fn sample<R: Rng + ?Sized>(&self, ks: &[usize], rng: &mut R, out: &mut [f64]) -> f64 {
        let max_k = ks.iter().copied().max().unwrap_or(1);
        let q_dist = Normal::new(0.0, self.sigma2_sa.sqrt()).expect("finite sigma");
        let m_dist = Normal::new(0.0, self.sigma2_s.sqrt()).expect("finite sigma");
        let q: Vec<f64> = (0..self.span).map(|_| q_dist.sample(rng)).collect();
        let m: Vec<f64> = (0..self.span + max_k).map(|_| m_dist.sample(rng)).collect();
        let g = (0..self.span).map(|i| q[i] - m[i + 1]).sum();
        for (slot, &k) in out.iter_mut().zip(ks) {
            *slot = (0..=(self.span - 1) / k).map(|i| q[i * k] - m[(i + 1) * k]).sum();
        }
        g
    }

    /// Monte-Carlo moments of `G` and of `Ĝ` for each K.
    pub fn measure(&self, ks: &[usize], n_samples: usize, seed: u64, exec: Execution) -> IidReport {
        const CHUNK: usize = 8192;
        let chunks = n_samples.div_ceil(CHUNK);
        let parts = exec::map_indexed(chunks, exec, |c| {
            let mut rng = exec::substream(seed, c as u64);
            let mut actual = Moments::new();
            let mut k_hat = vec![Moments::new(); ks.len()];
            let mut buf = vec![0.0; ks.len()];
            let count = CHUNK.min(n_samples - c * CHUNK);
            for _ in 0..count {
                actual.push(self.sample(ks, &mut rng, &mut buf));
                for (m, x) in k_hat.iter_mut().zip(&buf) {
                    m.push(*x);
                }
            }
            (actual, k_hat)
        });
        let mut actual = Moments::new();
        let mut k_hat = vec![Moments::new(); ks.len()];
        for (a, kh) in &parts {
            actual.merge(a);
            for (m, x) in k_hat.iter_mut().zip(kh) {
                m.merge(x);
            }
        }
        IidReport {
            ks: ks.to_vec(),
            actual,
            k_hat,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IidReport {
    pub ks: Vec<usize>,
    pub actual: Moments,
    pub k_hat: Vec<Moments>,
}
