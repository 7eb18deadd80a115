//! Recurrent actor-critic controller.
//!
//! A single-layer GRU walks the flattened decision sequence. At step `t` it
//! reads the token of the decision taken at `t - 1` (a start token at `t = 0`),
//! and per-dimension heads turn its hidden state into categorical logits. A
//! shared value head estimates the terminal reward from every step.
//!
//! One architecture is one episode; the terminal reward is broadcast as the
//! return of every step. Updates use the clipped surrogate objective with a
//! squared-error value loss and an entropy bonus, optimized with Adam.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;
use crate::space::SearchSpaceDef;

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("trajectory {0} has a missing or non-finite reward")]
    NonFiniteReward(usize),
    #[error("update batch is empty")]
    DegenerateBatch,
    #[error("trajectory {index} has length {got}, policy expects {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("invalid controller configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub hidden: usize,
    pub clip_ratio: f64,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub normalize_advantages: bool,
    /// Gradient steps per generation, each on a contiguous slice of the batch.
    pub minibatches: usize,
    /// Global gradient-norm clip; 0 disables it.
    pub max_grad_norm: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub init_seed: u64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            clip_ratio: 0.2,
            learning_rate: 0.01,
            entropy_coef: 0.0,
            value_coef: 0.5,
            normalize_advantages: true,
            minibatches: 1,
            max_grad_norm: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            init_seed: 0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |m: &str| Err(ControllerError::Invalid(m.into()));
        if self.hidden == 0 {
            return bad("hidden must be >= 1");
        }
        if !(self.clip_ratio >= 0.0) {
            return bad("clip_ratio must be >= 0");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return bad("loss coefficients must be >= 0");
        }
        if self.minibatches == 0 {
            return bad("minibatches must be >= 1");
        }
        Ok(())
    }
}

/// Offsets of each parameter group inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Layout {
    hidden: usize,
    /// `(E + 1) x 3H`; row 0 is the start token.
    tok: usize,
    uz: usize,
    ur: usize,
    un: usize,
    bhn: usize,
    head_w: Vec<usize>,
    head_b: Vec<usize>,
    value_w: usize,
    value_b: usize,
    len: usize,
}

impl Layout {
    fn new(cards: &[usize], hidden: usize) -> Self {
        let tokens = 1 + cards.iter().sum::<usize>();
        let h = hidden;
        let mut n = 0;
        let mut take = |k: usize| {
            let o = n;
            n += k;
            o
        };
        let tok = take(tokens * 3 * h);
        let uz = take(h * h);
        let ur = take(h * h);
        let un = take(h * h);
        let bhn = take(h);
        let mut head_w = Vec::with_capacity(cards.len());
        let mut head_b = Vec::with_capacity(cards.len());
        for &k in cards {
            head_w.push(take(k * h));
            head_b.push(take(k));
        }
        let value_w = take(h);
        let value_b = take(1);
        Self {
            hidden,
            tok,
            uz,
            ur,
            un,
            bhn,
            head_w,
            head_b,
            value_w,
            value_b,
            len: n,
        }
    }
}

/// One sampled architecture with everything the update needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub decisions: Vec<usize>,
    /// Log-probability of each decision under the sampling policy.
    pub log_probs: Vec<f64>,
    /// Value estimate at each step under the sampling policy.
    pub values: Vec<f64>,
    pub reward: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub mean_reward: f64,
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Loss components and gradient at the current parameters.
#[derive(Clone, Debug)]
pub struct LossBreakdown {
    pub total: f64,
    pub surrogate: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub grad: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    cfg: ControllerConfig,
    cards: Vec<usize>,
    /// First token index of each dimension's values.
    token_base: Vec<usize>,
    layout: Layout,
    params: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    adam_t: u64,
}

#[derive(Clone, Debug)]
struct StepCache {
    token: usize,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    /// `U_n h_prev + b_hn`
    un_h: Vec<f64>,
    h: Vec<f64>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    value: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn matvec(p: &[f64], off: usize, rows: usize, x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|r| {
            p[off + r * cols..off + (r + 1) * cols]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// `dW += dy x^T`, `dx += W^T dy`.
fn matvec_backward(p: &[f64], g: &mut [f64], off: usize, x: &[f64], dy: &[f64], dx: &mut [f64]) {
    let cols = x.len();
    for (r, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let base = off + r * cols;
        for c in 0..cols {
            g[base + c] += d * x[c];
            dx[c] += d * p[base + c];
        }
    }
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
    z.iter().map(|v| v - lse).collect()
}

fn entropy_of(probs: &[f64], log_probs: &[f64]) -> f64 {
    -probs
        .iter()
        .zip(log_probs)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, l)| p * l)
        .sum::<f64>()
}

impl PolicyState {
    pub fn new(space: &SearchSpaceDef, cfg: ControllerConfig) -> Result<Self, ControllerError> {
        Self::with_cardinalities(space.cardinalities(), cfg)
    }

    /// Policy over an explicit list of dimension cardinalities.
    pub fn with_cardinalities(
        cards: Vec<usize>,
        cfg: ControllerConfig,
    ) -> Result<Self, ControllerError> {
        cfg.validate()?;
        if cards.is_empty() || cards.contains(&0) {
            return Err(ControllerError::Invalid(
                "every dimension needs a non-empty catalog".into(),
            ));
        }
        let layout = Layout::new(&cards, cfg.hidden);
        let mut token_base = Vec::with_capacity(cards.len());
        let mut next = 1;
        for &k in &cards {
            token_base.push(next);
            next += k;
        }
        let mut params = vec![0.0; layout.len];
        let bound = 1.0 / (cfg.hidden as f64).sqrt();
        let mut rng = seed::rng(seed::derive(cfg.init_seed, &[seed::stream::INIT]));
        // recurrent weights and token inputs; heads and value start at zero
        for v in &mut params[layout.tok..layout.bhn] {
            *v = rng.random_range(-bound..bound);
        }
        let n = layout.len;
        Ok(Self {
            cfg,
            cards,
            token_base,
            layout,
            params,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            adam_t: 0,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn num_steps(&self) -> usize {
        self.cards.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Bias of the output head for dimension `dim`.
    pub fn head_bias_mut(&mut self, dim: usize) -> &mut [f64] {
        let r = self.head_bias_range(dim);
        &mut self.params[r]
    }

    pub fn head_bias_range(&self, dim: usize) -> std::ops::Range<usize> {
        let o = self.layout.head_b[dim];
        o..o + self.cards[dim]
    }

    /// Range of the actor-only parameters (heads), for tests that isolate them.
    pub fn head_param_range(&self) -> std::ops::Range<usize> {
        self.layout.head_w[0]..self.layout.value_w
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Checks that a deserialized policy is internally consistent.
    pub fn validate(&self) -> Result<(), ControllerError> {
        self.cfg.validate()?;
        let expect = Layout::new(&self.cards, self.cfg.hidden);
        if expect != self.layout
            || self.params.len() != expect.len
            || self.adam_m.len() != expect.len
            || self.adam_v.len() != expect.len
        {
            return Err(ControllerError::Invalid(
                "parameter layout does not match cardinalities".into(),
            ));
        }
        Ok(())
    }

    fn step(&self, h_prev: &[f64], token: usize, dim: usize) -> StepCache {
        let h = self.layout.hidden;
        let p = &self.params;
        let tok = &p[self.layout.tok + token * 3 * h..self.layout.tok + (token + 1) * 3 * h];
        let uz_h = matvec(p, self.layout.uz, h, h_prev);
        let ur_h = matvec(p, self.layout.ur, h, h_prev);
        let mut un_h = matvec(p, self.layout.un, h, h_prev);
        un_h.iter_mut()
            .zip(&p[self.layout.bhn..self.layout.bhn + h])
            .for_each(|(a, b)| *a += b);
        let z: Vec<f64> = (0..h).map(|i| sigmoid(tok[i] + uz_h[i])).collect();
        let r: Vec<f64> = (0..h).map(|i| sigmoid(tok[h + i] + ur_h[i])).collect();
        let n: Vec<f64> = (0..h)
            .map(|i| (tok[2 * h + i] + r[i] * un_h[i]).tanh())
            .collect();
        let hn: Vec<f64> = (0..h)
            .map(|i| (1.0 - z[i]) * n[i] + z[i] * h_prev[i])
            .collect();
        let mut logits = matvec(p, self.layout.head_w[dim], self.cards[dim], &hn);
        let hb = self.layout.head_b[dim];
        logits
            .iter_mut()
            .enumerate()
            .for_each(|(j, l)| *l += p[hb + j]);
        let log_probs = log_softmax(&logits);
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        let value = p[self.layout.value_w..self.layout.value_w + h]
            .iter()
            .zip(&hn)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + p[self.layout.value_b];
        StepCache {
            token,
            h_prev: h_prev.to_vec(),
            z,
            r,
            n,
            un_h,
            h: hn,
            probs,
            log_probs,
            value,
        }
    }

    /// Runs the recurrence along `decisions`, or samples them when `rng` is given.
    fn unroll(
        &self,
        decisions: Option<&[usize]>,
        mut rng: Option<&mut seed::Rng>,
    ) -> Vec<(StepCache, usize)> {
        let mut h = vec![0.0; self.layout.hidden];
        let mut token = 0;
        let mut out = Vec::with_capacity(self.cards.len());
        for dim in 0..self.cards.len() {
            let c = self.step(&h, token, dim);
            let a = match (decisions, rng.as_deref_mut()) {
                (Some(d), _) => d[dim],
                (None, Some(rng)) => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = c.probs.len() - 1;
                    for (j, p) in c.probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            pick = j;
                            break;
                        }
                    }
                    pick
                }
                (None, None) => unreachable!("unroll needs decisions or an rng"),
            };
            token = self.token_base[dim] + a;
            h = c.h.clone();
            out.push((c, a));
        }
        out
    }

    /// Samples `n` decision sequences autoregressively. Candidate `j` draws
    /// from its own stream derived from `(rng_seed, j)`.
    pub fn sample_batch(&self, n: usize, rng_seed: u64) -> Vec<Trajectory> {
        (0..n)
            .map(|j| {
                let mut rng = seed::rng(seed::derive(rng_seed, &[seed::stream::SAMPLE, j as u64]));
                let steps = self.unroll(None, Some(&mut rng));
                Trajectory {
                    decisions: steps.iter().map(|(_, a)| *a).collect(),
                    log_probs: steps.iter().map(|(c, a)| c.log_probs[*a]).collect(),
                    values: steps.iter().map(|(c, _)| c.value).collect(),
                    reward: None,
                }
            })
            .collect()
    }

    /// Monte-Carlo mean per-step entropy (nats) along sampled sequences.
    pub fn policy_entropy(&self, n_probe: usize, rng_seed: u64) -> f64 {
        let n_probe = n_probe.max(1);
        let mut total = 0.0;
        for j in 0..n_probe {
            let mut rng = seed::rng(seed::derive(rng_seed, &[seed::stream::PROBE, j as u64]));
            for (c, _) in self.unroll(None, Some(&mut rng)) {
                total += entropy_of(&c.probs, &c.log_probs);
            }
        }
        total / (n_probe * self.cards.len()) as f64
    }

    /// Per-step action probabilities along a fixed decision sequence.
    pub fn step_probabilities(&self, decisions: &[usize]) -> Vec<Vec<f64>> {
        self.unroll(Some(decisions), None)
            .into_iter()
            .map(|(c, _)| c.probs)
            .collect()
    }

    /// `A = R - V(s_t)` per step, optionally normalized over the whole batch.
    pub fn advantages(&self, batch: &[Trajectory]) -> Vec<Vec<f64>> {
        let mut adv: Vec<Vec<f64>> = batch
            .iter()
            .map(|t| {
                let r = t.reward.unwrap_or(f64::NAN);
                t.values.iter().map(|v| r - v).collect()
            })
            .collect();
        if self.cfg.normalize_advantages {
            let all: Vec<f64> = adv.iter().flatten().copied().collect();
            let n = all.len() as f64;
            let mean = all.iter().sum::<f64>() / n;
            let var = all.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt().max(1e-8);
            adv.iter_mut()
                .flatten()
                .for_each(|a| *a = (*a - mean) / std);
        }
        adv
    }

    /// Loss and its gradient for `batch` at the current parameters:
    ///
    /// ```text
    /// L = mean_t [ -min(rho A, clip(rho, 1 - eps, 1 + eps) A) + c_v (V - R)^2 - c_e H ]
    /// ```
    ///
    /// `rho` is taken against the log-probabilities stored in each trajectory.
    pub fn loss_and_grad(&self, batch: &[Trajectory], advantages: &[Vec<f64>]) -> LossBreakdown {
        let mut grad = vec![0.0; self.params.len()];
        let m = (batch.len() * self.cards.len()) as f64;
        let eps = self.cfg.clip_ratio;
        let (cv, ce) = (self.cfg.value_coef, self.cfg.entropy_coef);
        let (mut surr_sum, mut val_sum, mut ent_sum, mut clipped) = (0.0, 0.0, 0.0, 0usize);
        let h = self.layout.hidden;
        let p = &self.params;

        for (traj, adv) in batch.iter().zip(advantages) {
            let r = traj.reward.expect("rewards checked by caller");
            let steps = self.unroll(Some(&traj.decisions), None);
            let mut dh_next = vec![0.0; h];
            for (t, (c, a)) in steps.iter().enumerate().rev() {
                let a = *a;
                let ratio = (c.log_probs[a] - traj.log_probs[t]).exp();
                let adv_t = adv[t];
                let unclipped = ratio * adv_t;
                let clipped_ratio = ratio.clamp(1.0 - eps, 1.0 + eps);
                surr_sum += unclipped.min(clipped_ratio * adv_t);
                let clip_active =
                    (adv_t > 0.0 && ratio > 1.0 + eps) || (adv_t < 0.0 && ratio < 1.0 - eps);
                if clip_active {
                    clipped += 1;
                }
                let ent = entropy_of(&c.probs, &c.log_probs);
                ent_sum += ent;
                val_sum += (c.value - r).powi(2);

                let k = self.cards[t];
                let mut dlogits = vec![0.0; k];
                if !clip_active {
                    let s = -adv_t * ratio / m;
                    for (j, d) in dlogits.iter_mut().enumerate() {
                        let ind = if j == a { 1.0 } else { 0.0 };
                        *d += s * (ind - c.probs[j]);
                    }
                }
                if ce != 0.0 {
                    for (j, d) in dlogits.iter_mut().enumerate() {
                        if c.probs[j] > 0.0 {
                            *d += ce * c.probs[j] * (c.log_probs[j] + ent) / m;
                        }
                    }
                }
                let dv = 2.0 * cv * (c.value - r) / m;

                let mut dh = dh_next.clone();
                matvec_backward(p, &mut grad, self.layout.head_w[t], &c.h, &dlogits, &mut dh);
                let hb = self.layout.head_b[t];
                dlogits
                    .iter()
                    .enumerate()
                    .for_each(|(j, d)| grad[hb + j] += d);
                for i in 0..h {
                    grad[self.layout.value_w + i] += dv * c.h[i];
                    dh[i] += dv * p[self.layout.value_w + i];
                }
                grad[self.layout.value_b] += dv;

                dh_next = self.gru_backward(c, &dh, &mut grad);
            }
        }
        let surrogate = -surr_sum / m;
        let value = val_sum / m;
        let entropy = ent_sum / m;
        LossBreakdown {
            total: surrogate + cv * value - ce * entropy,
            surrogate,
            value,
            entropy,
            clip_fraction: clipped as f64 / m,
            grad,
        }
    }

    fn gru_backward(&self, c: &StepCache, dh: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let h = self.layout.hidden;
        let p = &self.params;
        let tok = self.layout.tok + c.token * 3 * h;
        let mut dh_prev: Vec<f64> = (0..h).map(|i| dh[i] * c.z[i]).collect();
        let mut dpre_z = vec![0.0; h];
        let mut dpre_r = vec![0.0; h];
        let mut dun = vec![0.0; h];
        for i in 0..h {
            let dn = dh[i] * (1.0 - c.z[i]);
            let dz = dh[i] * (c.h_prev[i] - c.n[i]);
            let dpre_n = dn * (1.0 - c.n[i] * c.n[i]);
            grad[tok + 2 * h + i] += dpre_n;
            dun[i] = dpre_n * c.r[i];
            let dr = dpre_n * c.un_h[i];
            dpre_r[i] = dr * c.r[i] * (1.0 - c.r[i]);
            dpre_z[i] = dz * c.z[i] * (1.0 - c.z[i]);
            grad[tok + h + i] += dpre_r[i];
            grad[tok + i] += dpre_z[i];
            grad[self.layout.bhn + i] += dun[i];
        }
        matvec_backward(p, grad, self.layout.un, &c.h_prev, &dun, &mut dh_prev);
        matvec_backward(p, grad, self.layout.ur, &c.h_prev, &dpre_r, &mut dh_prev);
        matvec_backward(p, grad, self.layout.uz, &c.h_prev, &dpre_z, &mut dh_prev);
        dh_prev
    }

    fn check_batch(&self, batch: &[Trajectory]) -> Result<(), ControllerError> {
        if batch.is_empty() {
            return Err(ControllerError::DegenerateBatch);
        }
        for (i, t) in batch.iter().enumerate() {
            let d = self.cards.len();
            if t.decisions.len() != d || t.log_probs.len() != d || t.values.len() != d {
                return Err(ControllerError::LengthMismatch {
                    index: i,
                    expected: d,
                    got: t.decisions.len(),
                });
            }
            if t.decisions.iter().zip(&self.cards).any(|(a, k)| a >= k) {
                return Err(ControllerError::Invalid(format!(
                    "trajectory {i} has an out-of-catalog decision"
                )));
            }
            match t.reward {
                Some(r) if r.is_finite() => {}
                _ => return Err(ControllerError::NonFiniteReward(i)),
            }
        }
        Ok(())
    }

    /// One clipped policy-gradient update over `batch`.
    pub fn ppo_update(&mut self, batch: &[Trajectory]) -> Result<UpdateStats, ControllerError> {
        self.check_batch(batch)?;
        let adv = self.advantages(batch);
        let parts = self.cfg.minibatches.min(batch.len());
        let chunk = batch.len().div_ceil(parts);
        let mut stats = UpdateStats {
            mean_reward: batch.iter().map(|t| t.reward.unwrap()).sum::<f64>() / batch.len() as f64,
            ..UpdateStats::default()
        };
        let mut used = 0.0;
        for (b, a) in batch.chunks(chunk).zip(adv.chunks(chunk)) {
            let lb = self.loss_and_grad(b, a);
            let w = b.len() as f64 / batch.len() as f64;
            stats.surrogate_loss += w * lb.surrogate;
            stats.value_loss += w * lb.value;
            stats.entropy += w * lb.entropy;
            stats.clip_fraction += w * lb.clip_fraction;
            used += w;
            self.adam_step(lb.grad);
        }
        debug_assert!((used - 1.0).abs() < 1e-9);
        if !self.all_finite() {
            return Err(ControllerError::Invalid(
                "update produced non-finite parameters".into(),
            ));
        }
        Ok(stats)
    }

    fn adam_step(&mut self, mut grad: Vec<f64>) {
        if self.cfg.max_grad_norm > 0.0 {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > self.cfg.max_grad_norm {
                let s = self.cfg.max_grad_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        self.adam_t += 1;
        let (b1, b2) = (self.cfg.adam_beta1, self.cfg.adam_beta2);
        let bc1 = 1.0 - b1.powi(self.adam_t as i32);
        let bc2 = 1.0 - b2.powi(self.adam_t as i32);
        let lr = self.cfg.learning_rate;
        for i in 0..self.params.len() {
            let g = grad[i];
            self.adam_m[i] = b1 * self.adam_m[i] + (1.0 - b1) * g;
            self.adam_v[i] = b2 * self.adam_v[i] + (1.0 - b2) * g * g;
            let mh = self.adam_m[i] / bc1;
            let vh = self.adam_v[i] / bc2;
            self.params[i] -= lr * mh / (vh.sqrt() + self.cfg.adam_eps);
        }
    }
}
