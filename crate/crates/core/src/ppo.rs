//! Synchronous-worker PPO with GAE, a clipped surrogate and a separate value
//! network.
//!
//! Rollouts run one rayon task per worker; each worker owns its RNG stream
//! keyed by `(run_seed, update, worker)`, so buffers are identical for any
//! thread count. Minibatch gradients are computed over fixed sample chunks
//! and summed in chunk order.

use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{DoorEnv, EnvConfig, KnobEstimateMode, EPISODE_STEPS};
use crate::error::{Error, Result};
use crate::eval::{evaluate, DeterministicPolicy, OBS_CLIP};
use crate::neural::{
    gaussian_entropy, gaussian_log_prob, standard_normal_vec, Adam, Checkpoint, Mlp, RunningMeanStd,
};
use crate::seeding::{derive_seed, stream};
use crate::worldgen::WorldSpec;

/// Samples per gradient chunk inside a minibatch.
const GRAD_CHUNK: usize = 64;
/// Clip applied to scaled rewards.
const REWARD_CLIP: f64 = 10.0;

/// Stream tags mixed into derived seeds.
const TAG_ROLLOUT: u64 = 1;
const TAG_SHUFFLE: u64 = 2;
const TAG_INIT: u64 = 3;
const TAG_PROBE: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub workers: usize,
    pub episodes_per_worker: usize,
    pub episode_steps: usize,
    pub minibatch: usize,
    pub clip_eps: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub entropy_coef: f64,
    pub value_loss_coef: f64,
    pub max_grad_norm: f64,
    /// Standardize observations with running statistics.
    pub normalize_obs: bool,
    /// Scale rewards by the running std of the discounted return.
    pub normalize_reward: bool,
    pub init_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            workers: 8,
            episodes_per_worker: 8,
            episode_steps: EPISODE_STEPS,
            minibatch: 256,
            clip_eps: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            lr: 1e-3,
            epochs: 10,
            entropy_coef: 0.0,
            value_loss_coef: 0.5,
            max_grad_norm: 0.5,
            normalize_obs: true,
            normalize_reward: true,
            init_log_std: 0.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("workers", self.workers),
            ("episodes_per_worker", self.episodes_per_worker),
            ("episode_steps", self.episode_steps),
            ("minibatch", self.minibatch),
            ("epochs", self.epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Contract(format!("ppo.{name} must be positive")));
            }
        }
        let ranged = [
            ("clip_eps", self.clip_eps, 0.0, f64::INFINITY),
            ("gamma", self.gamma, 0.0, 1.0),
            ("gae_lambda", self.gae_lambda, 0.0, 1.0),
            ("lr", self.lr, 0.0, 1.0),
            ("entropy_coef", self.entropy_coef, 0.0, f64::INFINITY),
            ("value_loss_coef", self.value_loss_coef, 0.0, f64::INFINITY),
            ("max_grad_norm", self.max_grad_norm, 0.0, f64::INFINITY),
        ];
        for (name, v, lo, hi) in ranged {
            if !(v >= lo && v <= hi) || v.is_nan() {
                return Err(Error::Range {
                    field: format!("ppo.{name}"),
                    value: v,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    pub fn transitions_per_update(&self) -> usize {
        self.workers * self.episodes_per_worker * self.episode_steps
    }
}

/// Gaussian policy with state-independent log-std plus a value network.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorCritic {
    pub policy: Mlp,
    pub log_std: Vec<f64>,
    pub value: Mlp,
    pub obs_rms: Option<RunningMeanStd>,
    pub ret_rms: Option<RunningMeanStd>,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, cfg: &PpoConfig, rng: &mut R) -> Result<Self> {
        Ok(Self {
            policy: Mlp::init(&Mlp::standard_sizes(obs_dim, act_dim), 0.01, rng)?,
            log_std: vec![cfg.init_log_std; act_dim],
            value: Mlp::init(&Mlp::standard_sizes(obs_dim, 1), 1.0, rng)?,
            obs_rms: cfg.normalize_obs.then(|| RunningMeanStd::new(obs_dim)),
            ret_rms: cfg.normalize_reward.then(|| RunningMeanStd::new(1)),
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.policy.output_dim()
    }

    pub fn n_params(&self) -> usize {
        self.policy.n_params() + self.log_std.len() + self.value.n_params()
    }

    pub fn normalize_obs(&self, raw: &[f64]) -> Vec<f64> {
        let mut x = raw.to_vec();
        if let Some(rms) = &self.obs_rms {
            rms.normalize(&mut x, OBS_CLIP);
        }
        x
    }

    pub fn deterministic_policy(&self, label: &str) -> DeterministicPolicy {
        DeterministicPolicy {
            net: self.policy.clone(),
            obs_rms: self.obs_rms.clone(),
            squashed: false,
            action_dim: self.act_dim(),
            label: label.into(),
        }
    }

    pub fn to_checkpoint(&self, step: u64, env: &EnvConfig, opt: Option<&Adam>) -> Checkpoint {
        let mut ck = Checkpoint::new("ppo", step);
        ck.put_mlp("policy", &self.policy);
        ck.put_mlp("value", &self.value);
        ck.put_vec("log_std", vec![self.log_std.len()], &self.log_std);
        if let Some(rms) = &self.obs_rms {
            ck.put_vec("obs_rms.mean", vec![rms.mean.len()], &rms.mean);
            ck.put_vec("obs_rms.var", vec![rms.var.len()], &rms.var);
            ck.put_vec("obs_rms.count", vec![1], &[rms.count]);
        }
        if let Some(rms) = &self.ret_rms {
            ck.put_vec("ret_rms.mean", vec![1], &rms.mean);
            ck.put_vec("ret_rms.var", vec![1], &rms.var);
            ck.put_vec("ret_rms.count", vec![1], &[rms.count]);
        }
        if let Some(opt) = opt {
            ck.put_vec("adam.m", vec![opt.m.len()], &opt.m);
            ck.put_vec("adam.v", vec![opt.v.len()], &opt.v);
            ck.set_meta("adam_step", opt.step);
        }
        ck.set_meta("arm", env.arm.name());
        ck.set_meta("knob_mode", env.mode.label());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.algorithm != "ppo" {
            return Err(Error::Checkpoint(format!("expected a ppo checkpoint, found `{}`", ck.algorithm)));
        }
        let policy = ck.mlp("policy")?;
        let value = ck.mlp("value")?;
        let log_std = ck.vec("log_std")?;
        if log_std.len() != policy.output_dim() || value.input_dim() != policy.input_dim() {
            return Err(Error::Checkpoint("policy, value and log-std shapes disagree".into()));
        }
        let obs_rms = if ck.has("obs_rms.mean") {
            Some(RunningMeanStd {
                mean: ck.vec("obs_rms.mean")?,
                var: ck.vec("obs_rms.var")?,
                count: ck.vec("obs_rms.count")?[0],
            })
        } else {
            None
        };
        let ret_rms = if ck.has("ret_rms.var") {
            Some(RunningMeanStd {
                mean: ck.vec("ret_rms.mean")?,
                var: ck.vec("ret_rms.var")?,
                count: ck.vec("ret_rms.count")?[0],
            })
        } else {
            None
        };
        Ok(Self {
            policy,
            log_std,
            value,
            obs_rms,
            ret_rms,
        })
    }
}

/// Transitions of one update, laid out episode by episode in worker order.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBuffer {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub episode_steps: usize,
    /// Raw observations, used to refresh the normalization statistics.
    pub raw_obs: Vec<f64>,
    /// Observations as fed to the networks.
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// Environment rewards.
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of the state after the last step of each episode.
    pub bootstrap_values: Vec<f64>,
    pub world_ids: Vec<String>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn episodes(&self) -> usize {
        self.bootstrap_values.len()
    }

    /// Mean undiscounted episode return.
    pub fn mean_episode_reward(&self) -> f64 {
        if self.episodes() == 0 {
            return 0.0;
        }
        self.rewards.iter().sum::<f64>() / self.episodes() as f64
    }

    fn empty(obs_dim: usize, act_dim: usize, episode_steps: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            episode_steps,
            raw_obs: Vec::new(),
            obs: Vec::new(),
            actions: Vec::new(),
            log_probs: Vec::new(),
            rewards: Vec::new(),
            values: Vec::new(),
            dones: Vec::new(),
            bootstrap_values: Vec::new(),
            world_ids: Vec::new(),
            advantages: Vec::new(),
            value_targets: Vec::new(),
        }
    }

    fn append(&mut self, other: RolloutBuffer) {
        self.raw_obs.extend(other.raw_obs);
        self.obs.extend(other.obs);
        self.actions.extend(other.actions);
        self.log_probs.extend(other.log_probs);
        self.rewards.extend(other.rewards);
        self.values.extend(other.values);
        self.dones.extend(other.dones);
        self.bootstrap_values.extend(other.bootstrap_values);
        self.world_ids.extend(other.world_ids);
    }
}

/// Episode-local GAE. `values` holds `V(s_0..s_T)`, the last entry being the
/// bootstrap value; `dones[t]` marks `s_{t+1}` as terminal.
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let t_len = rewards.len();
    assert_eq!(values.len(), t_len + 1, "values need a bootstrap entry");
    assert_eq!(dones.len(), t_len, "one done flag per reward");
    let mut adv = vec![0.0; t_len];
    let mut next = 0.0;
    for t in (0..t_len).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, targets)
}

fn worker_rollout(
    ac: &ActorCritic,
    worlds: &[WorldSpec],
    cfg: &PpoConfig,
    env_cfg: &EnvConfig,
    run_seed: u64,
    update: u64,
    worker: u64,
) -> Result<RolloutBuffer> {
    let (obs_dim, act_dim) = (ac.obs_dim(), ac.act_dim());
    let mut buf = RolloutBuffer::empty(obs_dim, act_dim, cfg.episode_steps);
    let mut rng = stream(derive_seed(run_seed, &[TAG_ROLLOUT, update, worker]));
    let mut env_cfg = env_cfg.clone();
    env_cfg.max_steps = cfg.episode_steps;
    env_cfg.terminate_on_success = false;
    let std: Vec<f64> = ac.log_std.iter().map(|l| l.exp()).collect();
    for _ in 0..cfg.episodes_per_worker {
        let world = &worlds[rng.random_range(0..worlds.len())];
        let mut env = DoorEnv::new(world, env_cfg.clone())?;
        let mut raw = env.reset(rng.random());
        buf.world_ids.push(world.world_id.clone());
        for t in 0..cfg.episode_steps {
            let x = ac.normalize_obs(&raw);
            let mean = ac.policy.forward(&x)?;
            let value = ac.value.forward(&x)?[0];
            let z = standard_normal_vec(&mut rng, act_dim);
            let action: Vec<f64> = (0..act_dim).map(|i| mean[i] + std[i] * z[i]).collect();
            let out = env.step(&action).map_err(|e| match e {
                Error::Episode { .. } => e,
                other => Error::Episode {
                    world_id: world.world_id.clone(),
                    source: Box::new(other),
                },
            })?;
            buf.log_probs.push(gaussian_log_prob(&mean, &ac.log_std, &action));
            buf.raw_obs.extend_from_slice(&raw);
            buf.obs.extend(x);
            buf.actions.extend(action);
            buf.rewards.push(out.reward);
            buf.values.push(value);
            // Episodes end on the time limit only; the tail is bootstrapped.
            buf.dones.push(false);
            raw = out.observation;
            debug_assert!(t + 1 < cfg.episode_steps || out.done);
        }
        let x = ac.normalize_obs(&raw);
        buf.bootstrap_values.push(ac.value.forward(&x)?[0]);
    }
    Ok(buf)
}

/// Collects `workers x episodes_per_worker` episodes with a frozen snapshot of
/// the policy. Worlds are drawn uniformly from `worlds` by each worker's
/// stream.
pub fn collect_rollouts(
    ac: &ActorCritic,
    worlds: &[WorldSpec],
    cfg: &PpoConfig,
    env_cfg: &EnvConfig,
    run_seed: u64,
    update: u64,
) -> Result<RolloutBuffer> {
    if worlds.is_empty() {
        return Err(Error::Contract("training needs at least one world".into()));
    }
    if env_cfg.obs_dim() != ac.obs_dim() || env_cfg.action_dim() != ac.act_dim() {
        return Err(Error::Contract("policy shape does not match the environment".into()));
    }
    let parts = (0..cfg.workers as u64)
        .into_par_iter()
        .map(|w| worker_rollout(ac, worlds, cfg, env_cfg, run_seed, update, w))
        .collect::<Result<Vec<_>>>()?;
    let mut buf = RolloutBuffer::empty(ac.obs_dim(), ac.act_dim(), cfg.episode_steps);
    for p in parts {
        buf.append(p);
    }
    Ok(buf)
}

/// Refreshes the return statistics with this rollout and returns the rewards
/// the update should use.
fn scaled_rewards(buf: &RolloutBuffer, ret_rms: Option<&mut RunningMeanStd>, gamma: f64) -> Vec<f64> {
    let Some(rms) = ret_rms else {
        return buf.rewards.clone();
    };
    let mut returns = Vec::with_capacity(buf.len());
    for ep in buf.rewards.chunks(buf.episode_steps) {
        let mut ret = 0.0;
        for r in ep {
            ret = ret * gamma + r;
            returns.push(ret);
        }
    }
    rms.update(&returns, returns.len());
    let scale = 1.0 / (rms.var[0] + 1e-8).sqrt();
    buf.rewards.iter().map(|r| (r * scale).clamp(-REWARD_CLIP, REWARD_CLIP)).collect()
}

/// Fills advantages and value targets episode by episode.
pub fn finish_rollout(buf: &mut RolloutBuffer, rewards: &[f64], gamma: f64, lambda: f64) {
    let n = buf.episode_steps;
    buf.advantages.clear();
    buf.value_targets.clear();
    for e in 0..buf.episodes() {
        let r = &rewards[e * n..(e + 1) * n];
        let mut v = buf.values[e * n..(e + 1) * n].to_vec();
        v.push(buf.bootstrap_values[e]);
        let (adv, tgt) = compute_gae(r, &v, &buf.dones[e * n..(e + 1) * n], gamma, lambda);
        buf.advantages.extend(adv);
        buf.value_targets.extend(tgt);
    }
}

/// Standardizes in place; returns the pre-normalization mean and std.
pub fn normalize_advantages(adv: &mut [f64]) -> (f64, f64) {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let inv = if std > 0.0 { 1.0 / std } else { 1.0 };
    for a in adv.iter_mut() {
        *a = (*a - mean) * inv;
    }
    (mean, std)
}

/// Per-sample clipped surrogate `min(r·A, clip(r, 1-ε, 1+ε)·A)` and whether
/// the unclipped branch is the active one.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> (f64, bool) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

/// Gradients of the minibatch loss with respect to every parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct PpoGrads {
    pub policy: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: Vec<f64>,
}

impl PpoGrads {
    fn zeros(ac: &ActorCritic) -> Self {
        Self {
            policy: vec![0.0; ac.policy.n_params()],
            log_std: vec![0.0; ac.log_std.len()],
            value: vec![0.0; ac.value.n_params()],
        }
    }

    fn add(&mut self, o: &PpoGrads) {
        for (a, b) in self.policy.iter_mut().zip(&o.policy) {
            *a += b;
        }
        for (a, b) in self.log_std.iter_mut().zip(&o.log_std) {
            *a += b;
        }
        for (a, b) in self.value.iter_mut().zip(&o.value) {
            *a += b;
        }
    }
}

/// Loss terms of one minibatch, each a batch mean.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
}

impl LossParts {
    fn add(&mut self, o: &LossParts) {
        self.surrogate += o.surrogate;
        self.value_loss += o.value_loss;
        self.entropy += o.entropy;
        self.mean_ratio += o.mean_ratio;
        self.clip_frac += o.clip_frac;
        self.approx_kl += o.approx_kl;
    }

    /// Minimized objective.
    pub fn total(&self, cfg: &PpoConfig) -> f64 {
        -self.surrogate + cfg.value_loss_coef * self.value_loss - cfg.entropy_coef * self.entropy
    }
}

/// Minibatch view: indices into a buffer.
pub struct Batch<'a> {
    pub buf: &'a RolloutBuffer,
    pub idx: &'a [usize],
}

fn chunk_loss_grad(ac: &ActorCritic, buf: &RolloutBuffer, idx: &[usize], total: usize, cfg: &PpoConfig) -> Result<(LossParts, PpoGrads)> {
    let (od, ad) = (buf.obs_dim, buf.act_dim);
    let n = idx.len();
    let mut x = Vec::with_capacity(n * od);
    for &i in idx {
        x.extend_from_slice(&buf.obs[i * od..(i + 1) * od]);
    }
    let pc = ac.policy.forward_batch(&x, n)?;
    let vc = ac.value.forward_batch(&x, n)?;
    let inv_b = 1.0 / total as f64;
    let mut parts = LossParts::default();
    let mut grads = PpoGrads::zeros(ac);
    let mut d_mean = vec![0.0; n * ad];
    let mut d_value = vec![0.0; n];
    let inv_std: Vec<f64> = ac.log_std.iter().map(|l| (-l).exp()).collect();
    for (k, &i) in idx.iter().enumerate() {
        let mean = &pc.output()[k * ad..(k + 1) * ad];
        let a = &buf.actions[i * ad..(i + 1) * ad];
        let lp = gaussian_log_prob(mean, &ac.log_std, a);
        let log_ratio = lp - buf.log_probs[i];
        let ratio = log_ratio.exp();
        let adv = buf.advantages[i];
        let (surr, unclipped) = clipped_surrogate(ratio, adv, cfg.clip_eps);
        parts.surrogate += surr * inv_b;
        parts.mean_ratio += ratio * inv_b;
        parts.approx_kl += ((ratio - 1.0) - log_ratio) * inv_b;
        if (ratio - 1.0).abs() > cfg.clip_eps {
            parts.clip_frac += inv_b;
        }
        if unclipped {
            // d(-r·A)/d logπ = -r·A
            let c = -ratio * adv * inv_b;
            for j in 0..ad {
                let zj = (a[j] - mean[j]) * inv_std[j];
                d_mean[k * ad + j] = c * zj * inv_std[j];
                grads.log_std[j] += c * (zj * zj - 1.0);
            }
        }
        let v = vc.output()[k];
        let err = v - buf.value_targets[i];
        parts.value_loss += err * err * inv_b;
        d_value[k] = cfg.value_loss_coef * 2.0 * err * inv_b;
    }
    let ent = gaussian_entropy(&ac.log_std);
    parts.entropy = ent * n as f64 * inv_b;
    for g in grads.log_std.iter_mut() {
        *g -= cfg.entropy_coef * n as f64 * inv_b;
    }
    ac.policy.backward_params(&pc, &d_mean, &mut grads.policy);
    ac.value.backward_params(&vc, &d_value, &mut grads.value);
    Ok((parts, grads))
}

/// Loss and gradient of one minibatch. Chunks of fixed size are processed in
/// parallel and reduced in order.
pub fn ppo_loss_grad(ac: &ActorCritic, batch: &Batch<'_>, cfg: &PpoConfig) -> Result<(LossParts, PpoGrads)> {
    let total = batch.idx.len();
    let parts = batch
        .idx
        .par_chunks(GRAD_CHUNK)
        .map(|c| chunk_loss_grad(ac, batch.buf, c, total, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut loss = LossParts::default();
    let mut grads = PpoGrads::zeros(ac);
    for (l, g) in &parts {
        loss.add(l);
        grads.add(g);
    }
    Ok((loss, grads))
}

/// Summary of one update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
    pub adv_mean: f64,
    pub adv_std: f64,
    pub grad_norm: f64,
}

/// `epochs` passes over shuffled minibatches of a finished buffer.
pub fn ppo_update<R: Rng + ?Sized>(
    ac: &mut ActorCritic,
    opt: &mut Adam,
    buf: &mut RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    if buf.advantages.len() != buf.len() || buf.is_empty() {
        return Err(Error::Contract("rollout buffer has no advantages".into()));
    }
    let (adv_mean, adv_std) = normalize_advantages(&mut buf.advantages);
    let mut order: Vec<usize> = (0..buf.len()).collect();
    let mut stats = UpdateStats {
        adv_mean,
        adv_std,
        ..Default::default()
    };
    let mut batches = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for idx in order.chunks(cfg.minibatch) {
            let (loss, grads) = ppo_loss_grad(ac, &Batch { buf, idx }, cfg)?;
            let total = loss.total(cfg);
            if !total.is_finite() {
                return Err(Error::NumericalBlowup {
                    quantity: format!(
                        "ppo loss (surrogate {}, value {}, ratio {})",
                        loss.surrogate, loss.value_loss, loss.mean_ratio
                    ),
                    value: total,
                });
            }
            let norm = opt.step(
                &mut [ac.policy.params_mut(), &mut ac.log_std[..], ac.value.params_mut()],
                &[&grads.policy, &grads.log_std, &grads.value],
                cfg.lr,
                Some(cfg.max_grad_norm),
            )?;
            stats.policy_loss -= loss.surrogate;
            stats.value_loss += loss.value_loss;
            stats.entropy += loss.entropy;
            stats.mean_ratio += loss.mean_ratio;
            stats.clip_frac += loss.clip_frac;
            stats.approx_kl += loss.approx_kl;
            stats.grad_norm += norm;
            batches += 1;
        }
    }
    let nb = batches as f64;
    stats.policy_loss /= nb;
    stats.value_loss /= nb;
    stats.entropy /= nb;
    stats.mean_ratio /= nb;
    stats.clip_frac /= nb;
    stats.approx_kl /= nb;
    stats.grad_norm /= nb;
    Ok(stats)
}

/// Ground truth for the first `switch_after` updates, noisy estimates after.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Curriculum {
    pub switch_after: usize,
    pub noisy: KnobEstimateMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoTrainConfig {
    pub ppo: PpoConfig,
    pub env: EnvConfig,
    pub updates: usize,
    pub seed: u64,
    pub curriculum: Option<Curriculum>,
    /// Probe the deterministic policy every this many updates (0 disables).
    pub probe_every: usize,
    /// Write a checkpoint every this many updates when an output directory is
    /// given; the final checkpoint is always written.
    pub checkpoint_every: usize,
}

impl Default for PpoTrainConfig {
    fn default() -> Self {
        Self {
            ppo: PpoConfig::default(),
            env: EnvConfig::default(),
            updates: 150,
            seed: 0,
            curriculum: None,
            probe_every: 1,
            checkpoint_every: 1,
        }
    }
}

impl PpoTrainConfig {
    /// Estimate mode used while collecting update `update` (1-based).
    pub fn mode_for(&self, update: usize) -> KnobEstimateMode {
        match &self.curriculum {
            Some(c) if update > c.switch_after => c.noisy.clone(),
            _ => self.env.mode.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoLogRow {
    pub update: usize,
    pub steps: usize,
    pub mean_reward: f64,
    pub probe_asr: Option<f64>,
    pub clip_frac: f64,
    pub value_loss: f64,
    pub knob_mode: String,
}

pub const PPO_LOG_HEADER: &str = "update,steps,mean_reward,probe_asr,clip_frac,value_loss,knob_mode";

impl PpoLogRow {
    pub fn csv_line(&self) -> String {
        let probe = self.probe_asr.map(|p| format!("{p:.4}")).unwrap_or_default();
        format!(
            "{},{},{:.6},{},{:.6},{:.6},{}",
            self.update, self.steps, self.mean_reward, probe, self.clip_frac, self.value_loss, self.knob_mode
        )
    }
}

pub fn format_log(rows: &[PpoLogRow]) -> String {
    let mut out = String::from(PPO_LOG_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

pub struct PpoRun {
    pub model: ActorCritic,
    pub log: Vec<PpoLogRow>,
    pub checkpoints: Vec<PathBuf>,
    pub stats: Vec<UpdateStats>,
}

impl PpoRun {
    pub fn best_probe_asr(&self) -> Option<f64> {
        self.log.iter().filter_map(|r| r.probe_asr).reduce(f64::max)
    }
}

pub fn checkpoint_name(update: usize) -> String {
    format!("checkpoint_{update:05}.json")
}

/// Collect/update loop. With `out` set, writes `train_log.csv` and
/// checkpoints there. `on_update` sees each log row as it is produced and
/// may stop the run early.
pub fn train_ppo(
    cfg: &PpoTrainConfig,
    train_worlds: &[WorldSpec],
    probe_worlds: &[WorldSpec],
    out: Option<&Path>,
    mut on_update: impl FnMut(&PpoLogRow) -> ControlFlow<()>,
) -> Result<PpoRun> {
    cfg.ppo.validate()?;
    if train_worlds.is_empty() {
        return Err(Error::Contract("training needs at least one world".into()));
    }
    let mut init_rng = stream(derive_seed(cfg.seed, &[TAG_INIT]));
    let mut ac = ActorCritic::new(cfg.env.obs_dim(), cfg.env.action_dim(), &cfg.ppo, &mut init_rng)?;
    let mut opt = Adam::new(ac.n_params());
    let mut checkpoints = Vec::new();
    let save = |ac: &ActorCritic, opt: &Adam, update: usize, env: &EnvConfig, list: &mut Vec<PathBuf>| -> Result<()> {
        if let Some(dir) = out {
            let path = dir.join(checkpoint_name(update));
            ac.to_checkpoint(update as u64, env, Some(opt)).write(&path)?;
            list.push(path);
        }
        Ok(())
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut log = Vec::with_capacity(cfg.updates);
    let mut all_stats = Vec::with_capacity(cfg.updates);
    for update in 1..=cfg.updates {
        let mut env_cfg = cfg.env.clone();
        env_cfg.mode = cfg.mode_for(update);
        let mut buf = collect_rollouts(&ac, train_worlds, &cfg.ppo, &env_cfg, cfg.seed, update as u64)?;
        let rewards = scaled_rewards(&buf, ac.ret_rms.as_mut(), cfg.ppo.gamma);
        finish_rollout(&mut buf, &rewards, cfg.ppo.gamma, cfg.ppo.gae_lambda);
        let mut shuffle_rng = stream(derive_seed(cfg.seed, &[TAG_SHUFFLE, update as u64]));
        let stats = ppo_update(&mut ac, &mut opt, &mut buf, &cfg.ppo, &mut shuffle_rng)?;
        if let Some(rms) = ac.obs_rms.as_mut() {
            rms.update(&buf.raw_obs, buf.len());
        }
        let probe_asr = if cfg.probe_every > 0 && !probe_worlds.is_empty() && update % cfg.probe_every == 0 {
            let policy = ac.deterministic_policy("probe");
            let probe_seed = derive_seed(cfg.seed, &[TAG_PROBE]);
            Some(evaluate(&policy, probe_worlds, &env_cfg, probe_seed, 1)?.r_asr)
        } else {
            None
        };
        let row = PpoLogRow {
            update,
            steps: update * cfg.ppo.transitions_per_update(),
            mean_reward: buf.mean_episode_reward(),
            probe_asr,
            clip_frac: stats.clip_frac,
            value_loss: stats.value_loss,
            knob_mode: env_cfg.mode.label(),
        };
        let flow = on_update(&row);
        log.push(row);
        all_stats.push(stats);
        let last = update == cfg.updates || flow.is_break();
        if last || (cfg.checkpoint_every > 0 && update % cfg.checkpoint_every == 0) {
            save(&ac, &opt, update, &env_cfg, &mut checkpoints)?;
        }
        if let Some(dir) = out {
            let path = dir.join("train_log.csv");
            std::fs::write(&path, format_log(&log)).map_err(|e| Error::io(&path, e))?;
        }
        if last {
            break;
        }
    }
    Ok(PpoRun {
        model: ac,
        log,
        checkpoints,
        stats: all_stats,
    })
}
