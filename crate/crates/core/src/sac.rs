//! Soft actor-critic: replay buffer, twin soft-Q regression toward an EMA
//! target, reparameterized squashed-Gaussian policy and automatic
//! temperature tuning.

use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{DoorEnv, EnvConfig, EPISODE_STEPS};
use crate::error::{Error, Result};
use crate::eval::{evaluate, DeterministicPolicy};
use crate::neural::{
    clamp_log_std, log_one_minus_tanh_sq, standard_normal_vec, Adam, Checkpoint, Mlp, LOG_STD_MAX, LOG_STD_MIN,
};
use crate::seeding::{derive_seed, stream, StreamRng};
use crate::worldgen::WorldSpec;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

const TAG_INIT: u64 = 11;
const TAG_COLLECT: u64 = 12;
const TAG_TRAIN: u64 = 13;
const TAG_PROBE: u64 = 14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub gamma: f64,
    pub lr_policy: f64,
    pub lr_q: f64,
    pub lr_alpha: f64,
    pub tau: f64,
    pub target_update_period: usize,
    pub auto_entropy: bool,
    pub init_alpha: f64,
    /// Defaults to minus the action dimension.
    pub target_entropy: Option<f64>,
    pub batch: usize,
    pub episodes_per_epoch: usize,
    pub episode_steps: usize,
    pub grad_steps_per_env_step: usize,
    pub twin_q: bool,
    pub replay_capacity: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr_policy: 1e-3,
            lr_q: 1e-3,
            lr_alpha: 1e-3,
            tau: 0.005,
            target_update_period: 1,
            auto_entropy: true,
            init_alpha: 1.0,
            target_entropy: None,
            batch: 256,
            episodes_per_epoch: 10,
            episode_steps: EPISODE_STEPS,
            grad_steps_per_env_step: 1,
            twin_q: true,
            replay_capacity: 1_000_000,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Range {
                field: "sac.tau".into(),
                value: self.tau,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Range {
                field: "sac.gamma".into(),
                value: self.gamma,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if !(self.init_alpha > 0.0) {
            return Err(Error::Contract("sac.init_alpha must be positive".into()));
        }
        for (name, v) in [
            ("batch", self.batch),
            ("episodes_per_epoch", self.episodes_per_epoch),
            ("episode_steps", self.episode_steps),
            ("target_update_period", self.target_update_period),
            ("replay_capacity", self.replay_capacity),
        ] {
            if v == 0 {
                return Err(Error::Contract(format!("sac.{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn target_entropy_for(&self, act_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(act_dim as f64))
    }
}

/// Fixed-capacity FIFO of transitions stored in flat arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_obs: Vec<f64>,
    dones: Vec<bool>,
    cursor: usize,
}

/// A sampled minibatch, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SacBatch {
    pub n: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub dones: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        Self {
            capacity,
            obs_dim,
            act_dim,
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_obs: Vec::new(),
            dones: Vec::new(),
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends a transition, overwriting the oldest once full.
    pub fn push(&mut self, obs: &[f64], action: &[f64], reward: f64, next_obs: &[f64], done: bool) {
        let (od, ad) = (self.obs_dim, self.act_dim);
        assert!(obs.len() == od && next_obs.len() == od && action.len() == ad, "transition shape");
        if self.len() < self.capacity {
            self.obs.extend_from_slice(obs);
            self.actions.extend_from_slice(action);
            self.rewards.push(reward);
            self.next_obs.extend_from_slice(next_obs);
            self.dones.push(done);
        } else {
            let i = self.cursor;
            self.obs[i * od..(i + 1) * od].copy_from_slice(obs);
            self.actions[i * ad..(i + 1) * ad].copy_from_slice(action);
            self.rewards[i] = reward;
            self.next_obs[i * od..(i + 1) * od].copy_from_slice(next_obs);
            self.dones[i] = done;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Observation of slot `i` in storage order.
    pub fn obs_at(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    /// Slots from oldest to newest.
    pub fn chronological(&self) -> impl Iterator<Item = usize> + '_ {
        let start = if self.len() < self.capacity { 0 } else { self.cursor };
        (0..self.len()).map(move |k| (start + k) % self.len())
    }

    /// Uniform sampling with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<SacBatch> {
        if self.len() < batch || self.is_empty() {
            return Err(Error::Contract(format!(
                "replay buffer holds {} transitions, batch needs {batch}",
                self.len()
            )));
        }
        let (od, ad) = (self.obs_dim, self.act_dim);
        let mut b = SacBatch {
            n: batch,
            obs: Vec::with_capacity(batch * od),
            actions: Vec::with_capacity(batch * ad),
            rewards: Vec::with_capacity(batch),
            next_obs: Vec::with_capacity(batch * od),
            dones: Vec::with_capacity(batch),
        };
        for _ in 0..batch {
            let i = rng.random_range(0..self.len());
            b.obs.extend_from_slice(&self.obs[i * od..(i + 1) * od]);
            b.actions.extend_from_slice(&self.actions[i * ad..(i + 1) * ad]);
            b.rewards.push(self.rewards[i]);
            b.next_obs.extend_from_slice(&self.next_obs[i * od..(i + 1) * od]);
            b.dones.push(self.dones[i]);
        }
        Ok(b)
    }
}

/// Action-value function that can report its gradient in the action.
pub trait Critic: Sync {
    /// Q values of a batch and `dQ/da`, both row-major.
    fn q_and_action_grad(&self, obs: &[f64], actions: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)>;
}

fn concat_inputs(obs: &[f64], actions: &[f64], n: usize) -> Vec<f64> {
    let od = obs.len() / n.max(1);
    let ad = actions.len() / n.max(1);
    let mut x = Vec::with_capacity(n * (od + ad));
    for s in 0..n {
        x.extend_from_slice(&obs[s * od..(s + 1) * od]);
        x.extend_from_slice(&actions[s * ad..(s + 1) * ad]);
    }
    x
}

/// Element-wise minimum over one or two Q networks.
pub struct MinCritic<'a> {
    pub heads: Vec<&'a Mlp>,
}

impl MinCritic<'_> {
    pub fn q_values(&self, obs: &[f64], actions: &[f64], n: usize) -> Result<Vec<f64>> {
        let x = concat_inputs(obs, actions, n);
        let mut best = vec![f64::INFINITY; n];
        for head in &self.heads {
            let q = head.forward_batch(&x, n)?;
            for (b, v) in best.iter_mut().zip(q.output()) {
                *b = b.min(*v);
            }
        }
        Ok(best)
    }
}

impl Critic for MinCritic<'_> {
    fn q_and_action_grad(&self, obs: &[f64], actions: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = concat_inputs(obs, actions, n);
        let ad = actions.len() / n;
        let od = obs.len() / n;
        let caches = self
            .heads
            .iter()
            .map(|h| h.forward_batch(&x, n))
            .collect::<Result<Vec<_>>>()?;
        let mut choice = vec![0usize; n];
        let mut q = vec![0.0; n];
        for s in 0..n {
            let mut best = caches[0].output()[s];
            for (h, c) in caches.iter().enumerate().skip(1) {
                if c.output()[s] < best {
                    best = c.output()[s];
                    choice[s] = h;
                }
            }
            q[s] = best;
        }
        let mut dq_da = vec![0.0; n * ad];
        for (h, head) in self.heads.iter().enumerate() {
            let dy: Vec<f64> = choice.iter().map(|&c| if c == h { 1.0 } else { 0.0 }).collect();
            if dy.iter().all(|&d| d == 0.0) {
                continue;
            }
            let mut scratch = vec![0.0; head.n_params()];
            let dx = head.backward(&caches[h], &dy, &mut scratch);
            for s in 0..n {
                for j in 0..ad {
                    dq_da[s * ad + j] += dx[s * (od + ad) + od + j];
                }
            }
        }
        Ok((q, dq_da))
    }
}

/// Reparameterized draw from the squashed-Gaussian head.
#[derive(Clone, Debug)]
pub struct PolicySample {
    pub n: usize,
    pub act_dim: usize,
    pub mean: Vec<f64>,
    /// Head output before clamping.
    pub raw_log_std: Vec<f64>,
    pub log_std: Vec<f64>,
    pub eps: Vec<f64>,
    pub pre_tanh: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
}

/// Splits the head output into mean and log-std and applies the
/// reparameterization `u = μ + σ·ε`, `a = tanh(u)`.
pub fn squashed_sample(head: &[f64], n: usize, act_dim: usize, eps: &[f64]) -> PolicySample {
    let mut s = PolicySample {
        n,
        act_dim,
        mean: Vec::with_capacity(n * act_dim),
        raw_log_std: Vec::with_capacity(n * act_dim),
        log_std: Vec::with_capacity(n * act_dim),
        eps: eps.to_vec(),
        pre_tanh: Vec::with_capacity(n * act_dim),
        actions: Vec::with_capacity(n * act_dim),
        log_probs: Vec::with_capacity(n),
    };
    for k in 0..n {
        let row = &head[k * 2 * act_dim..(k + 1) * 2 * act_dim];
        let mut lp = 0.0;
        for j in 0..act_dim {
            let mu = row[j];
            let raw = row[act_dim + j];
            let ls = clamp_log_std(raw);
            let e = eps[k * act_dim + j];
            let u = mu + ls.exp() * e;
            lp += -0.5 * e * e - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u);
            s.mean.push(mu);
            s.raw_log_std.push(raw);
            s.log_std.push(ls);
            s.pre_tanh.push(u);
            s.actions.push(u.tanh());
        }
        s.log_probs.push(lp);
    }
    s
}

/// Soft Bellman target `r + γ(1-done)(Q̄(s',a') - α·logπ(a'|s'))`.
pub fn soft_target(reward: f64, done: bool, q_next: f64, alpha: f64, log_prob_next: f64, gamma: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * (q_next - alpha * log_prob_next)
    }
}

/// Loss of the policy heads and its gradient with respect to them.
pub struct HeadLoss {
    pub loss: f64,
    pub d_head: Vec<f64>,
    pub log_probs: Vec<f64>,
}

/// `mean[α·logπ(a|s) - Q(s,a)]` with `a` reparameterized from the heads.
pub fn policy_loss_heads(head: &[f64], obs: &[f64], n: usize, act_dim: usize, eps: &[f64], critic: &dyn Critic, alpha: f64) -> Result<HeadLoss> {
    let smp = squashed_sample(head, n, act_dim, eps);
    let (q, dq_da) = critic.q_and_action_grad(obs, &smp.actions, n)?;
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut d_head = vec![0.0; n * 2 * act_dim];
    for k in 0..n {
        loss += (alpha * smp.log_probs[k] - q[k]) * inv;
        for j in 0..act_dim {
            let i = k * act_dim + j;
            let u = smp.pre_tanh[i];
            let a = smp.actions[i];
            let sigma_eps = smp.log_std[i].exp() * smp.eps[i];
            // d logπ / du through the squash correction; the Gaussian term
            // depends on the log-std only.
            let dlogp_du = 2.0 * u.tanh();
            let dq_du = dq_da[i] * (1.0 - a * a);
            let dl_du = alpha * dlogp_du - dq_du;
            d_head[k * 2 * act_dim + j] = dl_du * inv;
            let raw = smp.raw_log_std[i];
            if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                d_head[k * 2 * act_dim + act_dim + j] = (dl_du * sigma_eps - alpha) * inv;
            }
        }
    }
    Ok(HeadLoss {
        loss,
        d_head,
        log_probs: smp.log_probs,
    })
}

/// Policy loss and gradient for the full network.
pub fn policy_loss(policy: &Mlp, critic: &dyn Critic, obs: &[f64], n: usize, alpha: f64, eps: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let act_dim = policy.output_dim() / 2;
    let cache = policy.forward_batch(obs, n)?;
    let hl = policy_loss_heads(cache.output(), obs, n, act_dim, eps, critic, alpha)?;
    let mut grad = vec![0.0; policy.n_params()];
    policy.backward_params(&cache, &hl.d_head, &mut grad);
    Ok((hl.loss, grad, hl.log_probs))
}

/// Twin-Q agent state.
#[derive(Clone, Debug, PartialEq)]
pub struct SacAgent {
    pub policy: Mlp,
    pub q: Vec<Mlp>,
    pub q_target: Vec<Mlp>,
    pub log_alpha: f64,
}

pub struct QLoss {
    pub losses: Vec<f64>,
    pub targets: Vec<f64>,
    pub grads: Vec<Vec<f64>>,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, cfg: &SacConfig, rng: &mut R) -> Result<Self> {
        let policy = Mlp::init(&Mlp::standard_sizes(obs_dim, 2 * act_dim), 0.01, rng)?;
        let heads = if cfg.twin_q { 2 } else { 1 };
        let q = (0..heads)
            .map(|_| Mlp::init(&Mlp::standard_sizes(obs_dim + act_dim, 1), 1.0, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            policy,
            q_target: q.clone(),
            q,
            log_alpha: cfg.init_alpha.ln(),
        })
    }

    pub fn act_dim(&self) -> usize {
        self.policy.output_dim() / 2
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Stochastic action for data collection.
    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let head = self.policy.forward(obs)?;
        let eps = standard_normal_vec(rng, self.act_dim());
        Ok(squashed_sample(&head, 1, self.act_dim(), &eps).actions)
    }

    /// Soft-Q regression loss for every head; `eps_next` drives the
    /// next-state policy sample.
    pub fn q_loss(&self, batch: &SacBatch, alpha: f64, gamma: f64, eps_next: &[f64]) -> Result<QLoss> {
        let n = batch.n;
        let ad = self.act_dim();
        let head = self.policy.forward_batch(&batch.next_obs, n)?;
        let next = squashed_sample(head.output(), n, ad, eps_next);
        let targ = MinCritic {
            heads: self.q_target.iter().collect(),
        };
        let q_next = targ.q_values(&batch.next_obs, &next.actions, n)?;
        let targets: Vec<f64> = (0..n)
            .map(|k| soft_target(batch.rewards[k], batch.dones[k], q_next[k], alpha, next.log_probs[k], gamma))
            .collect();
        let x = concat_inputs(&batch.obs, &batch.actions, n);
        let mut losses = Vec::with_capacity(self.q.len());
        let mut grads = Vec::with_capacity(self.q.len());
        for net in &self.q {
            let c = net.forward_batch(&x, n)?;
            let mut loss = 0.0;
            let mut dy = vec![0.0; n];
            for k in 0..n {
                let err = c.output()[k] - targets[k];
                loss += 0.5 * err * err / n as f64;
                dy[k] = err / n as f64;
            }
            let mut g = vec![0.0; net.n_params()];
            net.backward_params(&c, &dy, &mut g);
            losses.push(loss);
            grads.push(g);
        }
        Ok(QLoss { losses, targets, grads })
    }

    pub fn deterministic_policy(&self, label: &str) -> DeterministicPolicy {
        DeterministicPolicy {
            net: self.policy.clone(),
            obs_rms: None,
            squashed: true,
            action_dim: self.act_dim(),
            label: label.into(),
        }
    }

    pub fn to_checkpoint(&self, step: u64, env: &EnvConfig) -> Checkpoint {
        let mut ck = Checkpoint::new("sac", step);
        ck.put_mlp("policy", &self.policy);
        for (i, (q, t)) in self.q.iter().zip(&self.q_target).enumerate() {
            ck.put_mlp(&format!("q{}", i + 1), q);
            ck.put_mlp(&format!("q{}_target", i + 1), t);
        }
        ck.put_vec("log_alpha", vec![1], &[self.log_alpha]);
        ck.set_meta("arm", env.arm.name());
        ck.set_meta("knob_mode", env.mode.label());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.algorithm != "sac" {
            return Err(Error::Checkpoint(format!("expected a sac checkpoint, found `{}`", ck.algorithm)));
        }
        let policy = ck.mlp("policy")?;
        let mut q = Vec::new();
        let mut q_target = Vec::new();
        for i in 1..=2 {
            let name = format!("q{i}");
            if ck.sizes.contains_key(&name) {
                q.push(ck.mlp(&name)?);
                q_target.push(ck.mlp(&format!("{name}_target"))?);
            }
        }
        if q.is_empty() {
            return Err(Error::Checkpoint("sac checkpoint has no Q networks".into()));
        }
        Ok(Self {
            policy,
            q,
            q_target,
            log_alpha: ck.vec("log_alpha")?[0],
        })
    }
}

/// Gradient step on `J(α) = mean[-α(logπ + H̄)]` in `log α`.
pub fn temperature_grad(log_alpha: f64, log_probs: &[f64], target_entropy: f64) -> f64 {
    let mean = log_probs.iter().sum::<f64>() / log_probs.len() as f64;
    -log_alpha.exp() * (mean + target_entropy)
}

/// Plain gradient-descent temperature update.
pub fn temperature_update(log_alpha: f64, log_probs: &[f64], target_entropy: f64, lr: f64) -> f64 {
    log_alpha - lr * temperature_grad(log_alpha, log_probs, target_entropy)
}

/// `θ̄ ← (1-τ)θ̄ + τθ`.
pub fn target_update(target: &mut [f64], online: &[f64], tau: f64) {
    assert_eq!(target.len(), online.len(), "target and online shapes");
    for (t, o) in target.iter_mut().zip(online) {
        *t = (1.0 - tau) * *t + tau * o;
    }
}

/// Optimizers of one agent.
pub struct SacOptimizers {
    pub policy: Adam,
    pub q: Vec<Adam>,
    pub alpha: Adam,
}

impl SacOptimizers {
    pub fn new(agent: &SacAgent) -> Self {
        Self {
            policy: Adam::new(agent.policy.n_params()),
            q: agent.q.iter().map(|q| Adam::new(q.n_params())).collect(),
            alpha: Adam::new(1),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SacStepStats {
    pub q_loss: f64,
    pub policy_loss: f64,
    pub alpha: f64,
}

/// One gradient step: Q heads, policy, temperature, then targets.
pub fn sac_gradient_step(
    agent: &mut SacAgent,
    opts: &mut SacOptimizers,
    batch: &SacBatch,
    cfg: &SacConfig,
    step: u64,
    rng: &mut StreamRng,
) -> Result<SacStepStats> {
    let n = batch.n;
    let ad = agent.act_dim();
    let alpha = agent.alpha();
    let eps_next = standard_normal_vec(rng, n * ad);
    let ql = agent.q_loss(batch, alpha, cfg.gamma, &eps_next)?;
    for (i, g) in ql.grads.iter().enumerate() {
        opts.q[i].step(&mut [agent.q[i].params_mut()], &[g], cfg.lr_q, None)?;
    }
    let eps = standard_normal_vec(rng, n * ad);
    let critic = MinCritic {
        heads: agent.q.iter().collect(),
    };
    let (p_loss, p_grad, log_probs) = policy_loss(&agent.policy, &critic, &batch.obs, n, alpha, &eps)?;
    opts.policy.step(&mut [agent.policy.params_mut()], &[&p_grad], cfg.lr_policy, None)?;
    if cfg.auto_entropy {
        let g = temperature_grad(agent.log_alpha, &log_probs, cfg.target_entropy_for(ad));
        let mut la = [agent.log_alpha];
        opts.alpha.step(&mut [&mut la[..]], &[&[g]], cfg.lr_alpha, None)?;
        agent.log_alpha = la[0];
    }
    if step.is_multiple_of(cfg.target_update_period as u64) {
        for (t, q) in agent.q_target.iter_mut().zip(&agent.q) {
            target_update(t.params_mut(), q.params(), cfg.tau);
        }
    }
    let q_loss = ql.losses.iter().sum::<f64>() / ql.losses.len() as f64;
    if !q_loss.is_finite() || !p_loss.is_finite() {
        return Err(Error::NumericalBlowup {
            quantity: "sac loss".into(),
            value: if q_loss.is_finite() { p_loss } else { q_loss },
        });
    }
    Ok(SacStepStats {
        q_loss,
        policy_loss: p_loss,
        alpha: agent.alpha(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacTrainConfig {
    pub sac: SacConfig,
    pub env: EnvConfig,
    pub epochs: usize,
    pub seed: u64,
    pub probe_every: usize,
    pub checkpoint_every: usize,
}

impl Default for SacTrainConfig {
    fn default() -> Self {
        Self {
            sac: SacConfig::default(),
            env: EnvConfig::default(),
            epochs: 100,
            seed: 0,
            probe_every: 1,
            checkpoint_every: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SacLogRow {
    pub epoch: usize,
    pub env_steps: usize,
    pub mean_reward: f64,
    pub probe_asr: Option<f64>,
    pub q_loss: f64,
    pub policy_loss: f64,
    pub alpha: f64,
}

pub const SAC_LOG_HEADER: &str = "epoch,env_steps,mean_reward,probe_asr,q_loss,policy_loss,alpha";

impl SacLogRow {
    pub fn csv_line(&self) -> String {
        let probe = self.probe_asr.map(|p| format!("{p:.4}")).unwrap_or_default();
        format!(
            "{},{},{:.6},{},{:.6},{:.6},{:.6}",
            self.epoch, self.env_steps, self.mean_reward, probe, self.q_loss, self.policy_loss, self.alpha
        )
    }
}

pub fn format_log(rows: &[SacLogRow]) -> String {
    let mut out = String::from(SAC_LOG_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

pub struct SacRun {
    pub agent: SacAgent,
    pub replay: ReplayBuffer,
    pub log: Vec<SacLogRow>,
    pub checkpoints: Vec<PathBuf>,
}

/// Single-worker loop: each epoch collects episodes into replay, then takes
/// one gradient step per collected transition.
pub fn train_sac(
    cfg: &SacTrainConfig,
    train_worlds: &[WorldSpec],
    probe_worlds: &[WorldSpec],
    out: Option<&Path>,
    mut on_epoch: impl FnMut(&SacLogRow) -> ControlFlow<()>,
) -> Result<SacRun> {
    cfg.sac.validate()?;
    if train_worlds.is_empty() {
        return Err(Error::Contract("training needs at least one world".into()));
    }
    let (od, ad) = (cfg.env.obs_dim(), cfg.env.action_dim());
    let mut agent = SacAgent::new(od, ad, &cfg.sac, &mut stream(derive_seed(cfg.seed, &[TAG_INIT])))?;
    let mut opts = SacOptimizers::new(&agent);
    let mut replay = ReplayBuffer::new(cfg.sac.replay_capacity, od, ad);
    let mut env_cfg = cfg.env.clone();
    env_cfg.max_steps = cfg.sac.episode_steps;
    env_cfg.terminate_on_success = false;
    let mut collect_rng = stream(derive_seed(cfg.seed, &[TAG_COLLECT]));
    let mut train_rng = stream(derive_seed(cfg.seed, &[TAG_TRAIN]));
    let mut checkpoints = Vec::new();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut env_steps = 0usize;
    let mut grad_steps = 0u64;
    for epoch in 1..=cfg.epochs {
        let mut total_reward = 0.0;
        let mut collected = 0usize;
        for _ in 0..cfg.sac.episodes_per_epoch {
            let world = &train_worlds[collect_rng.random_range(0..train_worlds.len())];
            let mut env = DoorEnv::new(world, env_cfg.clone())?;
            let mut obs = env.reset(collect_rng.random());
            while !env.is_done() {
                let action = agent.sample_action(&obs, &mut collect_rng)?;
                let step = env.step(&action).map_err(|e| Error::Episode {
                    world_id: world.world_id.clone(),
                    source: Box::new(e),
                })?;
                // Time-limit ends are truncations, not terminal states.
                replay.push(&obs, &action, step.reward, &step.observation, false);
                total_reward += step.reward;
                obs = step.observation;
                collected += 1;
            }
        }
        env_steps += collected;
        let mut sums = SacStepStats::default();
        let mut taken = 0usize;
        for _ in 0..collected * cfg.sac.grad_steps_per_env_step {
            if replay.len() < cfg.sac.batch {
                break;
            }
            let batch = replay.sample(cfg.sac.batch, &mut train_rng)?;
            grad_steps += 1;
            let s = sac_gradient_step(&mut agent, &mut opts, &batch, &cfg.sac, grad_steps, &mut train_rng)?;
            sums.q_loss += s.q_loss;
            sums.policy_loss += s.policy_loss;
            taken += 1;
        }
        let denom = taken.max(1) as f64;
        let probe_asr = if cfg.probe_every > 0 && !probe_worlds.is_empty() && epoch % cfg.probe_every == 0 {
            let policy = agent.deterministic_policy("probe");
            Some(evaluate(&policy, probe_worlds, &env_cfg, derive_seed(cfg.seed, &[TAG_PROBE]), 1)?.r_asr)
        } else {
            None
        };
        let row = SacLogRow {
            epoch,
            env_steps,
            mean_reward: total_reward / cfg.sac.episodes_per_epoch as f64,
            probe_asr,
            q_loss: sums.q_loss / denom,
            policy_loss: sums.policy_loss / denom,
            alpha: agent.alpha(),
        };
        let flow = on_epoch(&row);
        log.push(row);
        let last = epoch == cfg.epochs || flow.is_break();
        if let Some(dir) = out {
            if last || (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
                let path = dir.join(crate::ppo::checkpoint_name(epoch));
                agent.to_checkpoint(epoch as u64, &cfg.env).write(&path)?;
                checkpoints.push(path);
            }
            let path = dir.join("train_log.csv");
            std::fs::write(&path, format_log(&log)).map_err(|e| Error::io(&path, e))?;
        }
        if last {
            break;
        }
    }
    Ok(SacRun {
        agent,
        replay,
        log,
        checkpoints,
    })
}
