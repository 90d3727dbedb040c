//! PPO actor-critic over continuous perturbations.
//!
//! Gaussian policy with a state-independent learnable log-std, tanh MLP
//! torsos for the mean and value heads, clipped surrogate objective,
//! GAE advantages, and Adam updates. Everything is seeded and
//! deterministic end to end.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::ExplorerEnv;
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, Adam, Mlp};

const LN_2PI: f64 = 1.837877066409345; // ln(2*pi)

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub total_timesteps: usize,
    pub n_envs: usize,
    /// Rollout length per environment between updates.
    pub n_steps: usize,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_timesteps: 20_000,
            n_envs: 4,
            n_steps: 1024,
            minibatch_size: 64,
            epochs: 10,
            learning_rate: 3e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_timesteps == 0 {
            return Err(Error::InvalidInput("nothing to train: total_timesteps is 0".into()));
        }
        if self.n_envs == 0 || self.n_steps == 0 || self.minibatch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidInput("n_envs, n_steps, minibatch_size, epochs must be positive".into()));
        }
        if self.total_timesteps < self.n_envs * self.n_steps {
            return Err(Error::InvalidInput(format!(
                "total_timesteps ({}) must be at least n_envs * n_steps ({})",
                self.total_timesteps,
                self.n_envs * self.n_steps
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidInput("gamma must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::InvalidInput("gae_lambda must be in [0, 1]".into()));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("clip_range", self.clip_range),
            ("value_coef", self.value_coef),
            ("entropy_coef", self.entropy_coef),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Actor-critic parameters: policy mean MLP + learnable log-std vector,
/// and a value MLP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentModel {
    pub input_dim: usize,
    pub hidden: usize,
    pub action_scale: f64,
    pub policy: Mlp,
    pub log_std: Vec<f64>,
    pub value: Mlp,
}

impl AgentModel {
    pub fn new<R: Rng>(input_dim: usize, hidden: usize, action_scale: f64, rng: &mut R) -> Self {
        let dims = [input_dim, hidden, hidden, input_dim];
        let vdims = [input_dim, hidden, hidden, 1];
        AgentModel {
            input_dim,
            hidden,
            action_scale,
            policy: Mlp::new(&dims, 0.01, rng),
            log_std: vec![0.0; input_dim],
            value: Mlp::new(&vdims, 1.0, rng),
        }
    }

    pub fn policy_forward(&self, state: &[f64]) -> (Vec<f64>, &[f64]) {
        (self.policy.forward(state), &self.log_std)
    }

    pub fn value_forward(&self, state: &[f64]) -> f64 {
        self.value.forward(state)[0]
    }

    pub fn sample_action<R: Rng>(&self, state: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
        let (mean, log_std) = self.policy_forward(state);
        let action: Vec<f64> = mean
            .iter()
            .zip(log_std)
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = gaussian_log_prob(&mean, log_std, &action);
        (action, lp)
    }

    /// Policy mean clamped to the action box; no sampling.
    pub fn predict_deterministic(&self, state: &[f64]) -> Vec<f64> {
        self.policy
            .forward(state)
            .into_iter()
            .map(|m| m.clamp(-self.action_scale, self.action_scale))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.policy.param_count() + self.log_std.len() + self.value.param_count()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.policy.append_params(&mut out);
        out.extend_from_slice(&self.log_std);
        self.value.append_params(&mut out);
        out
    }

    pub fn load_flat_params(&mut self, flat: &[f64]) {
        let off = self.policy.load_params(flat, 0);
        let n = self.log_std.len();
        self.log_std.copy_from_slice(&flat[off..off + n]);
        self.value.load_params(flat, off + n);
    }

    pub fn all_finite(&self) -> bool {
        self.flat_params().iter().all(|p| p.is_finite())
    }
}

/// Diagonal-Gaussian log density of `action` under (mean, log_std).
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let sigma = ls.exp();
            let z = (a - m) / sigma;
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

/// Entropy of the diagonal Gaussian (state-independent).
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (LN_2PI + 1.0)).sum()
}

/// One rollout's worth of experience across all environments.
/// All per-step vectors are indexed `[env][t]`.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub states: Vec<Vec<Vec<f64>>>,
    pub actions: Vec<Vec<Vec<f64>>>,
    pub log_probs: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub dones: Vec<Vec<bool>>,
    pub advantages: Vec<Vec<f64>>,
    pub returns: Vec<Vec<f64>>,
}

/// delta_t = r_t + gamma*V(s_{t+1})*(1-done_t) - V(s_t);
/// A_t = delta_t + gamma*lambda*(1-done_t)*A_{t+1}, computed backward.
/// Returns (advantages, returns) with returns = advantages + values.
pub fn compute_gae(
    rewards: &[Vec<f64>],
    values: &[Vec<f64>],
    dones: &[Vec<bool>],
    last_values: &[f64],
    gamma: f64,
    gae_lambda: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n_envs = rewards.len();
    let mut advantages = vec![Vec::new(); n_envs];
    let mut returns = vec![Vec::new(); n_envs];
    for e in 0..n_envs {
        let n = rewards[e].len();
        let mut adv = vec![0.0; n];
        let mut next_adv = 0.0;
        for t in (0..n).rev() {
            let not_done = if dones[e][t] { 0.0 } else { 1.0 };
            let next_value = if t + 1 < n { values[e][t + 1] } else { last_values[e] };
            let delta = rewards[e][t] + gamma * next_value * not_done - values[e][t];
            next_adv = delta + gamma * gae_lambda * not_done * next_adv;
            adv[t] = next_adv;
        }
        returns[e] = adv.iter().zip(&values[e]).map(|(a, v)| a + v).collect();
        advantages[e] = adv;
    }
    (advantages, returns)
}

/// Flattened training sample.
pub struct Sample<'a> {
    pub state: &'a [f64],
    pub action: &'a [f64],
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LossStats {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

fn loss_terms(model: &AgentModel, samples: &[Sample<'_>], clip: f64) -> (f64, f64, f64, f64) {
    let n = samples.len() as f64;
    let mut policy_loss = 0.0;
    let mut value_loss = 0.0;
    let mut clipped = 0usize;
    for s in samples {
        let (mean, log_std) = model.policy_forward(s.state);
        let lp = gaussian_log_prob(&mean, log_std, s.action);
        let ratio = (lp - s.old_log_prob).exp();
        let unclipped = ratio * s.advantage;
        let clipped_term = ratio.clamp(1.0 - clip, 1.0 + clip) * s.advantage;
        policy_loss += -unclipped.min(clipped_term);
        if (ratio - 1.0).abs() > clip {
            clipped += 1;
        }
        let v = model.value_forward(s.state);
        let err = v - s.ret;
        value_loss += err * err;
    }
    (
        policy_loss / n,
        value_loss / n,
        gaussian_entropy(&model.log_std),
        clipped as f64 / n,
    )
}

/// Forward-only PPO objective; the finite-difference oracle in the tests
/// perturbs flat parameters against this.
pub fn compute_loss(model: &AgentModel, samples: &[Sample<'_>], cfg: &TrainConfig) -> LossStats {
    let (policy_loss, value_loss, entropy, clip_fraction) = loss_terms(model, samples, cfg.clip_range);
    LossStats {
        total: policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy,
        policy_loss,
        value_loss,
        entropy,
        clip_fraction,
    }
}

/// Computes the PPO loss and accumulates analytic gradients into the
/// model's layers. Returns the loss stats and the flat gradient vector.
pub fn compute_loss_and_grad(
    model: &mut AgentModel,
    samples: &[Sample<'_>],
    cfg: &TrainConfig,
) -> (LossStats, Vec<f64>) {
    model.policy.zero_grads();
    model.value.zero_grads();
    let mut g_log_std = vec![0.0; model.log_std.len()];
    let n = samples.len() as f64;

    let mut policy_loss = 0.0;
    let mut value_loss = 0.0;
    let mut clipped = 0usize;

    for s in samples {
        let pcache = model.policy.forward_cached(s.state);
        let mean = pcache.output().to_vec();
        let lp = gaussian_log_prob(&mean, &model.log_std, s.action);
        let ratio = (lp - s.old_log_prob).exp();
        let unclipped = ratio * s.advantage;
        let clipped_term = ratio.clamp(1.0 - cfg.clip_range, 1.0 + cfg.clip_range) * s.advantage;
        policy_loss += -unclipped.min(clipped_term);
        if (ratio - 1.0).abs() > cfg.clip_range {
            clipped += 1;
        }

        // gradient flows only when the unclipped branch is selected by min
        let d_loss_d_lp = if unclipped <= clipped_term {
            -s.advantage * ratio / n
        } else if (ratio - 1.0).abs() <= cfg.clip_range {
            // clip is the identity here, same gradient
            -s.advantage * ratio / n
        } else {
            0.0
        };
        if d_loss_d_lp != 0.0 {
            let grad_mean: Vec<f64> = mean
                .iter()
                .zip(&model.log_std)
                .zip(s.action)
                .map(|((m, ls), a)| {
                    let var = (2.0 * ls).exp();
                    d_loss_d_lp * (a - m) / var
                })
                .collect();
            model.policy.backward(&pcache, &grad_mean);
            for (i, ((m, ls), a)) in mean.iter().zip(&model.log_std).zip(s.action).enumerate() {
                let var = (2.0 * ls).exp();
                let d_lp_d_ls = (a - m) * (a - m) / var - 1.0;
                g_log_std[i] += d_loss_d_lp * d_lp_d_ls;
            }
        }

        let vcache = model.value.forward_cached(s.state);
        let v = vcache.output()[0];
        let err = v - s.ret;
        value_loss += err * err;
        model.value.backward(&vcache, &[cfg.value_coef * 2.0 * err / n]);
    }

    // entropy bonus only touches log_std
    for g in &mut g_log_std {
        *g -= cfg.entropy_coef;
    }

    let mut grads = Vec::with_capacity(model.param_count());
    model.policy.append_grads(&mut grads);
    grads.extend_from_slice(&g_log_std);
    model.value.append_grads(&mut grads);

    let policy_loss = policy_loss / n;
    let value_loss = value_loss / n;
    let entropy = gaussian_entropy(&model.log_std);
    let stats = LossStats {
        total: policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy,
        policy_loss,
        value_loss,
        entropy,
        clip_fraction: clipped as f64 / n,
    };
    (stats, grads)
}

/// One PPO update over a filled rollout buffer: `epochs` passes of
/// shuffled minibatches with advantage normalization over the batch.
pub fn ppo_update<R: Rng>(
    model: &mut AgentModel,
    buffer: &RolloutBuffer,
    cfg: &TrainConfig,
    adam: &mut Adam,
    rng: &mut R,
) -> Result<LossStats> {
    let n_envs = buffer.states.len();
    let mut flat_states: Vec<&[f64]> = Vec::new();
    let mut flat_actions: Vec<&[f64]> = Vec::new();
    let mut flat_old_lp = Vec::new();
    let mut flat_adv = Vec::new();
    let mut flat_ret = Vec::new();
    for e in 0..n_envs {
        for t in 0..buffer.states[e].len() {
            flat_states.push(&buffer.states[e][t]);
            flat_actions.push(&buffer.actions[e][t]);
            flat_old_lp.push(buffer.log_probs[e][t]);
            flat_adv.push(buffer.advantages[e][t]);
            flat_ret.push(buffer.returns[e][t]);
        }
    }
    let n = flat_states.len();

    // normalize advantages over the update batch
    let mean = flat_adv.iter().sum::<f64>() / n as f64;
    let var = flat_adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(1e-8);
    for a in &mut flat_adv {
        *a = (*a - mean) / std;
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut last = LossStats::default();
    for _ in 0..cfg.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(cfg.minibatch_size) {
            let samples: Vec<Sample<'_>> = chunk
                .iter()
                .map(|&i| Sample {
                    state: flat_states[i],
                    action: flat_actions[i],
                    old_log_prob: flat_old_lp[i],
                    advantage: flat_adv[i],
                    ret: flat_ret[i],
                })
                .collect();
            let (stats, mut grads) = compute_loss_and_grad(model, &samples, cfg);
            if !stats.total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "PPO loss is not finite: policy={} value={} entropy={}",
                    stats.policy_loss, stats.value_loss, stats.entropy
                )));
            }
            clip_grad_norm(&mut grads, cfg.max_grad_norm);
            let mut params = model.flat_params();
            adam.step(&mut params, &grads);
            model.load_flat_params(&params);
            last = stats;
        }
    }
    if !model.all_finite() {
        return Err(Error::NonFinite("model parameters diverged after update".into()));
    }
    Ok(last)
}

/// Per-rollout training metrics, one line of the metrics log each.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutMetrics {
    pub rollout_idx: usize,
    pub timesteps: usize,
    pub mean_ep_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

pub fn format_metrics_log(metrics: &[RolloutMetrics]) -> String {
    let mut out = String::from("rollout_idx,timesteps,mean_ep_reward,policy_loss,value_loss\n");
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            m.rollout_idx, m.timesteps, m.mean_ep_reward, m.policy_loss, m.value_loss
        ));
    }
    out
}

/// Environment parameters the trainer needs beyond the system itself.
#[derive(Debug, Clone, Copy)]
pub struct EnvSpec {
    pub action_scale: f64,
    pub max_steps: usize,
}

/// Full training run: alternates rollout collection across `n_envs`
/// parallel environments with PPO updates until the timestep budget is
/// consumed.
pub fn train(
    system: &dyn crate::blackbox::SystemUnderTest,
    env_spec: EnvSpec,
    cfg: &TrainConfig,
    hidden: usize,
) -> Result<(AgentModel, Vec<RolloutMetrics>)> {
    cfg.validate()?;
    let input_dim = system.input_dim();

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = AgentModel::new(input_dim, hidden, env_spec.action_scale, &mut init_rng);
    let mut adam = Adam::new(model.param_count(), cfg.learning_rate);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));

    let mut envs: Vec<ExplorerEnv<'_>> = (0..cfg.n_envs)
        .map(|_| ExplorerEnv::new(system, env_spec.action_scale, env_spec.max_steps))
        .collect::<Result<_>>()?;
    let mut env_rngs: Vec<ChaCha8Rng> = (0..cfg.n_envs)
        .map(|i| ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1000 + i as u64)))
        .collect();
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_envs);
    for (env, rng) in envs.iter_mut().zip(&mut env_rngs) {
        states.push(env.reset(rng)?);
    }
    let mut ep_rewards = vec![0.0f64; cfg.n_envs];

    let mut metrics = Vec::new();
    let mut timesteps_done = 0usize;
    let mut rollout_idx = 0usize;

    while timesteps_done < cfg.total_timesteps {
        let mut buffer = RolloutBuffer {
            states: vec![Vec::with_capacity(cfg.n_steps); cfg.n_envs],
            actions: vec![Vec::with_capacity(cfg.n_steps); cfg.n_envs],
            log_probs: vec![Vec::with_capacity(cfg.n_steps); cfg.n_envs],
            rewards: vec![Vec::with_capacity(cfg.n_steps); cfg.n_envs],
            values: vec![Vec::with_capacity(cfg.n_steps); cfg.n_envs],
            dones: vec![Vec::with_capacity(cfg.n_steps); cfg.n_envs],
            ..Default::default()
        };
        let mut finished_episodes: Vec<f64> = Vec::new();

        for _ in 0..cfg.n_steps {
            for e in 0..cfg.n_envs {
                let state = states[e].clone();
                let (action, log_prob) = model.sample_action(&state, &mut sample_rng);
                let value = model.value_forward(&state);
                let step = envs[e].step(&action)?;
                ep_rewards[e] += step.reward;

                buffer.states[e].push(state);
                buffer.actions[e].push(action);
                buffer.log_probs[e].push(log_prob);
                buffer.rewards[e].push(step.reward);
                buffer.values[e].push(value);
                buffer.dones[e].push(step.done);

                if step.done {
                    finished_episodes.push(ep_rewards[e]);
                    ep_rewards[e] = 0.0;
                    states[e] = envs[e].reset(&mut env_rngs[e])?;
                } else {
                    states[e] = step.next_state;
                }
            }
        }
        timesteps_done += cfg.n_envs * cfg.n_steps;

        let last_values: Vec<f64> = states.iter().map(|s| model.value_forward(s)).collect();
        let (advantages, returns) = compute_gae(
            &buffer.rewards,
            &buffer.values,
            &buffer.dones,
            &last_values,
            cfg.gamma,
            cfg.gae_lambda,
        );
        buffer.advantages = advantages;
        buffer.returns = returns;

        let stats = ppo_update(&mut model, &buffer, cfg, &mut adam, &mut shuffle_rng)?;

        let mean_ep_reward = if finished_episodes.is_empty() {
            f64::NAN
        } else {
            finished_episodes.iter().sum::<f64>() / finished_episodes.len() as f64
        };
        metrics.push(RolloutMetrics {
            rollout_idx,
            timesteps: timesteps_done,
            mean_ep_reward,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
        });
        rollout_idx += 1;
    }

    Ok((model, metrics))
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub system_name: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub model: AgentModel,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let json = serde_json::to_string(ckpt).map_err(|e| Error::Other(e.to_string()))?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(json.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let data =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let ckpt: Checkpoint =
        serde_json::from_str(&data).map_err(|e| Error::Other(format!("bad checkpoint: {e}")))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Other(format!(
            "unsupported checkpoint version {}",
            ckpt.version
        )));
    }
    if !ckpt.model.all_finite() {
        return Err(Error::NonFinite("checkpoint contains non-finite parameters".into()));
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::make_system_1_threshold;

    fn small_model(seed: u64) -> AgentModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AgentModel::new(2, 8, 1.0, &mut rng)
    }

    #[test]
    fn policy_forward_is_pure_and_seed_dependent() {
        let m = small_model(0);
        let s = [0.4, -0.2];
        assert_eq!(m.policy_forward(&s).0, m.policy_forward(&s).0);
        let m2 = small_model(1);
        assert_ne!(m.policy_forward(&s).0, m2.policy_forward(&s).0);
    }

    #[test]
    fn zeroed_heads_give_zero_outputs() {
        let mut m = small_model(0);
        let last = m.policy.layers.len() - 1;
        m.policy.layers[last].w.iter_mut().for_each(|w| *w = 0.0);
        m.policy.layers[last].b.iter_mut().for_each(|b| *b = 0.0);
        let vlast = m.value.layers.len() - 1;
        m.value.layers[vlast].w.iter_mut().for_each(|w| *w = 0.0);
        m.value.layers[vlast].b.iter_mut().for_each(|b| *b = 0.0);
        assert_eq!(m.policy_forward(&[0.3, 0.9]).0, vec![0.0, 0.0]);
        assert_eq!(m.value_forward(&[0.3, 0.9]), 0.0);
        assert_eq!(m.predict_deterministic(&[0.3, 0.9]), vec![0.0, 0.0]);
    }

    #[test]
    fn log_prob_at_the_mean() {
        let mean = [0.5, -0.5];
        let log_std = [0.1, -0.3];
        let lp = gaussian_log_prob(&mean, &log_std, &mean);
        let expected: f64 = log_std.iter().map(|ls| -ls - 0.5 * LN_2PI).sum();
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn sample_mean_approaches_policy_mean() {
        let m = small_model(3);
        let s = [0.1, 0.7];
        let (mu, log_std) = m.policy_forward(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let mut sums = [0.0; 2];
        for _ in 0..n {
            let (a, _) = m.sample_action(&s, &mut rng);
            sums[0] += a[0];
            sums[1] += a[1];
        }
        for i in 0..2 {
            let emp = sums[i] / n as f64;
            let tol = 3.0 * log_std[i].exp() / (n as f64).sqrt();
            assert!((emp - mu[i]).abs() < tol, "dim {i}: emp={emp} mu={}", mu[i]);
        }
    }

    #[test]
    fn log_prob_density_integrates_to_one() {
        // 1-D quadrature of exp(log_prob) over a wide grid
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = AgentModel::new(1, 8, 1.0, &mut rng);
        let s = [0.2];
        let (mu, log_std) = m.policy_forward(&s);
        let sigma = log_std[0].exp();
        let (lo, hi) = (mu[0] - 10.0 * sigma, mu[0] + 10.0 * sigma);
        let steps = 20_000;
        let h = (hi - lo) / steps as f64;
        let mut integral = 0.0;
        for i in 0..=steps {
            let a = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            integral += w * gaussian_log_prob(&mu, log_std, &[a]).exp() * h;
        }
        assert!((integral - 1.0).abs() < 1e-3, "integral = {integral}");
    }

    #[test]
    fn gae_lambda_zero_is_one_step_td() {
        let rewards = vec![vec![0.0, 1.0, 0.0]];
        let values = vec![vec![0.5, 0.2, 0.8]];
        let dones = vec![vec![false, false, false]];
        let last = [0.3];
        let (adv, ret) = compute_gae(&rewards, &values, &dones, &last, 0.99, 0.0);
        for t in 0..3 {
            let next_v = if t + 1 < 3 { values[0][t + 1] } else { last[0] };
            let delta = rewards[0][t] + 0.99 * next_v - values[0][t];
            assert!((adv[0][t] - delta).abs() < 1e-12);
            assert!((ret[0][t] - (delta + values[0][t])).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_zero_inputs_give_zero_advantages() {
        let rewards = vec![vec![0.0; 4]];
        let values = vec![vec![0.0; 4]];
        let dones = vec![vec![false; 4]];
        let (adv, _) = compute_gae(&rewards, &values, &dones, &[0.0], 0.99, 0.95);
        assert!(adv[0].iter().all(|a| *a == 0.0));
    }

    #[test]
    fn gae_single_terminal_transition() {
        let (adv, ret) = compute_gae(
            &[vec![1.0]],
            &[vec![0.0]],
            &[vec![true]],
            &[123.0], // masked out by the done flag
            0.99,
            0.95,
        );
        assert_eq!(adv[0][0], 1.0);
        assert_eq!(ret[0][0], 1.0);
    }

    #[test]
    fn first_update_ratios_are_one() {
        // old log probs computed from the current model => rho == 1,
        // unclipped and clipped terms coincide, nothing is clipped
        let m = small_model(7);
        let cfg = TrainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut samples_data = Vec::new();
        for _ in 0..16 {
            let state: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (action, lp) = m.sample_action(&state, &mut rng);
            samples_data.push((state, action, lp));
        }
        let samples: Vec<Sample<'_>> = samples_data
            .iter()
            .map(|(s, a, lp)| Sample {
                state: s,
                action: a,
                old_log_prob: *lp,
                advantage: 1.0,
                ret: 0.0,
            })
            .collect();
        let stats = compute_loss(&m, &samples, &cfg);
        assert_eq!(stats.clip_fraction, 0.0);
        assert!((stats.policy_loss - (-1.0)).abs() < 1e-9); // -mean(rho * 1.0) = -1
    }

    #[test]
    fn ppo_gradient_matches_finite_differences() {
        let cfg = TrainConfig {
            entropy_coef: 0.01,
            ..TrainConfig::default()
        };
        for trial in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
            let mut model = AgentModel::new(2, 4, 1.0, &mut rng);
            // old log probs from a nearby model so ratios differ from 1
            // but stay inside the clip band (the kink at 1 +/- eps)
            let mut old_model = model.clone();
            let mut p = old_model.flat_params();
            for v in &mut p {
                *v += rng.gen_range(-0.005..0.005);
            }
            old_model.load_flat_params(&p);

            let mut data = Vec::new();
            for _ in 0..8 {
                let state: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let (action, _) = model.sample_action(&state, &mut rng);
                let (om, ols) = old_model.policy_forward(&state);
                let old_lp = gaussian_log_prob(&om, ols, &action);
                let adv = rng.gen_range(-1.0..1.0);
                let ret = rng.gen_range(-1.0..1.0);
                data.push((state, action, old_lp, adv, ret));
            }
            let samples: Vec<Sample<'_>> = data
                .iter()
                .map(|(s, a, lp, adv, ret)| Sample {
                    state: s,
                    action: a,
                    old_log_prob: *lp,
                    advantage: *adv,
                    ret: *ret,
                })
                .collect();

            let (_, analytic) = compute_loss_and_grad(&mut model, &samples, &cfg);
            let params = model.flat_params();
            let h = 1e-5;
            for i in 0..params.len() {
                let mut probe = model.clone();
                let mut p = params.clone();
                p[i] += h;
                probe.load_flat_params(&p);
                let lp = compute_loss(&probe, &samples, &cfg).total;
                p[i] -= 2.0 * h;
                probe.load_flat_params(&p);
                let lm = compute_loss(&probe, &samples, &cfg).total;
                let fd = (lp - lm) / (2.0 * h);
                let denom = fd.abs().max(analytic[i].abs()).max(1e-6);
                assert!(
                    (fd - analytic[i]).abs() / denom < 1e-4,
                    "trial {trial} param {i}: fd={fd} analytic={}",
                    analytic[i]
                );
            }
        }
    }

    #[test]
    fn train_update_count_and_determinism() {
        let sys = make_system_1_threshold();
        let cfg = TrainConfig {
            total_timesteps: 128,
            n_envs: 4,
            n_steps: 16,
            minibatch_size: 16,
            epochs: 2,
            seed: 42,
            ..TrainConfig::default()
        };
        let spec = EnvSpec {
            action_scale: 1.0,
            max_steps: 10,
        };
        let (m1, metrics) = train(sys.as_ref(), spec, &cfg, 8).unwrap();
        assert_eq!(metrics.len(), 2); // 128 / (4*16) = 2 update phases
        let (m2, metrics2) = train(sys.as_ref(), spec, &cfg, 8).unwrap();
        assert_eq!(
            serde_json::to_string(&m1).unwrap(),
            serde_json::to_string(&m2).unwrap()
        );
        assert_eq!(format_metrics_log(&metrics), format_metrics_log(&metrics2));
    }

    #[test]
    fn zero_timesteps_is_an_error() {
        let cfg = TrainConfig {
            total_timesteps: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = small_model(2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION,
            system_name: "system_1_threshold".into(),
            seed: 9,
            config: TrainConfig::default(),
            model: model.clone(),
        };
        save_checkpoint(&path, &ckpt).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.seed, 9);
        assert_eq!(loaded.model.flat_params(), model.flat_params());
    }

    #[test]
    fn predict_deterministic_is_clamped_and_repeatable() {
        let mut m = small_model(4);
        let last = m.policy.layers.len() - 1;
        for b in &mut m.policy.layers[last].b {
            *b = 100.0;
        }
        let a = m.predict_deterministic(&[0.0, 0.0]);
        assert_eq!(a, vec![1.0, 1.0]);
        assert_eq!(m.predict_deterministic(&[0.0, 0.0]), a);
    }
}
