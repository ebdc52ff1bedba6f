//! PPO with generalized advantage estimation, Adam, and the training loop.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gnn::{embed, embed_backward, TaskGraph};
use super::policy::{
    masked_log_softmax, policy_backward, policy_forward, select_action, ModelDims, Observation,
    PolicyModel,
};
use super::rollout::Rollout;
use super::NnError;
use crate::env::EnvConfig;
use crate::model::{System, Workflow};
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub context: usize,
    /// Per-action logit terms are added when `tasks * nodes` is at most this.
    pub dense_limit: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 32,
            layers: 2,
            context: 32,
            dense_limit: 4096,
        }
    }
}

impl ModelConfig {
    pub fn dims(&self, problem: &Problem) -> ModelDims {
        let (tasks, nodes) = (problem.n_tasks(), problem.n_nodes());
        ModelDims {
            tasks,
            nodes,
            hidden: self.hidden,
            layers: self.layers,
            context: self.context,
            dense: tasks * nodes <= self.dense_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub episodes: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub seed: u64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    pub normalize_advantages: bool,
    /// Return the parameters with the best greedy makespan seen during training.
    pub keep_best: bool,
    /// Greedy evaluation period in episodes (when `keep_best`).
    pub eval_every: usize,
    /// Stop once a greedy rollout reaches this makespan.
    pub target_makespan: Option<f64>,
    pub model: ModelConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            learning_rate: 3e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 8,
            minibatches: 4,
            episodes: 500,
            entropy_coef: 0.01,
            value_coef: 0.5,
            seed: 0,
            max_grad_norm: Some(0.5),
            normalize_advantages: true,
            keep_best: true,
            eval_every: 1,
            target_makespan: None,
            model: ModelConfig::default(),
        }
    }
}

impl PpoConfig {
    pub fn check(&self) -> Result<(), NnError> {
        let bad = |what: &str| Err(NnError::InvalidConfig(format!("need {what}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("lambda in [0, 1]");
        }
        if !(self.clip > 0.0) || self.epochs == 0 || self.minibatches == 0 || self.eval_every == 0 {
            return bad("clip > 0 and positive epochs, minibatches, eval period");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    /// Index into `obs.actions`.
    pub action: usize,
    pub logp: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gae {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// `delta_t = r_t + gamma * v_{t+1} - v_t` and `A_t = delta_t + gamma * lambda * A_{t+1}`,
/// with the bootstrap value zero after a terminal step and after the last step.
/// Returns are `A_t + v_t`.
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Gae {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n);
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let terminal = dones[t] || t + 1 == n;
        let next_value = if terminal { 0.0 } else { values[t + 1] };
        let carry = if terminal { 0.0 } else { next_adv };
        let delta = rewards[t] + gamma * next_value - values[t];
        advantages[t] = delta + gamma * lambda * carry;
        next_adv = advantages[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Gae {
        advantages,
        returns,
    }
}

/// Shifts to zero mean and scales to unit variance; left as is when the spread is
/// negligible.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-8 {
        return;
    }
    for a in adv.iter_mut() {
        *a = (*a - mean) / std;
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One update of the concatenation `encoder | heads`.
    pub fn step(&mut self, model: &mut PolicyModel, g_enc: &[f64], g_heads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let params = model.encoder.data.iter_mut().chain(model.heads.iter_mut());
        let grads = g_enc.iter().chain(g_heads);
        for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateMetrics {
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub minibatches: usize,
}

struct SampleGrad {
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    ratio: f64,
    clipped: bool,
}

fn sample_grad(
    model: &PolicyModel,
    graph: &TaskGraph,
    tr: &Transition,
    advantage: f64,
    ret: f64,
    config: &PpoConfig,
    scale: f64,
    g_enc: &mut [f64],
    g_heads: &mut [f64],
) -> Result<SampleGrad, NnError> {
    let trace = embed(graph, &model.encoder)?;
    let emb = trace.embedding();
    let fwd = policy_forward(model, &tr.obs, emb, true);
    let all = vec![true; fwd.logits.len()];
    let logp = masked_log_softmax(&fwd.logits, &all)?;
    let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    let entropy = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
    let ratio = (logp[tr.action] - tr.logp).exp();
    let clipped_ratio = ratio.clamp(1.0 - config.clip, 1.0 + config.clip);
    let policy_loss = -(ratio * advantage).min(clipped_ratio * advantage);
    let value_loss = (fwd.value - ret).powi(2);

    let flows = if advantage >= 0.0 {
        ratio <= 1.0 + config.clip
    } else {
        ratio >= 1.0 - config.clip
    };
    let d_logp = if flows { -ratio * advantage * scale } else { 0.0 };
    let d_logits: Vec<f64> = probs
        .iter()
        .zip(&logp)
        .enumerate()
        .map(|(k, (p, l))| {
            let onehot = if k == tr.action { 1.0 } else { 0.0 };
            d_logp * (onehot - p) + config.entropy_coef * scale * p * (l + entropy)
        })
        .collect();
    let d_value = config.value_coef * 2.0 * (fwd.value - ret) * scale;
    let mut d_emb = vec![0.0; emb.len()];
    policy_backward(model, &tr.obs, emb, &fwd, &d_logits, d_value, g_heads, &mut d_emb);
    embed_backward(graph, &model.encoder, &trace, &d_emb, g_enc);
    Ok(SampleGrad {
        policy_loss,
        value_loss,
        entropy,
        ratio,
        clipped: (ratio - 1.0).abs() > config.clip,
    })
}

/// `K` epochs over shuffled minibatches of `buffer`, minimizing
/// `-L_clip - entropy_coef * H + value_coef * (v - G)^2` (batch means).
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    model: &mut PolicyModel,
    adam: &mut Adam,
    base_graph: &TaskGraph,
    buffer: &[Transition],
    advantages: &[f64],
    returns: &[f64],
    config: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateMetrics, NnError> {
    assert!(!buffer.is_empty(), "empty buffer");
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let chunk = buffer.len().div_ceil(config.minibatches);
    let mut g_enc = vec![0.0; model.encoder.data.len()];
    let mut g_heads = vec![0.0; model.heads.len()];
    let mut metrics = UpdateMetrics::default();
    let mut samples = 0usize;
    let mut graph = base_graph.clone();
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        for (mb, batch) in order.chunks(chunk).enumerate() {
            g_enc.fill(0.0);
            g_heads.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &i in batch {
                let tr = &buffer[i];
                for (t, &a) in tr.obs.assigned.iter().enumerate() {
                    graph.set_assigned(t, a);
                }
                let s = sample_grad(
                    model, &graph, tr, advantages[i], returns[i], config, scale, &mut g_enc,
                    &mut g_heads,
                )?;
                loss += scale
                    * (s.policy_loss - config.entropy_coef * s.entropy
                        + config.value_coef * s.value_loss);
                metrics.mean_ratio += s.ratio;
                metrics.clip_fraction += s.clipped as u8 as f64;
                metrics.policy_loss += s.policy_loss;
                metrics.value_loss += s.value_loss;
                metrics.entropy += s.entropy;
                samples += 1;
            }
            if !loss.is_finite() || g_enc.iter().chain(&g_heads).any(|g| !g.is_finite()) {
                return Err(NnError::NonFiniteLoss {
                    epoch,
                    minibatch: mb,
                });
            }
            if let Some(cap) = config.max_grad_norm {
                let norm = g_enc.iter().chain(&g_heads).map(|g| g * g).sum::<f64>().sqrt();
                if norm > cap {
                    let f = cap / norm;
                    g_enc.iter_mut().chain(g_heads.iter_mut()).for_each(|g| *g *= f);
                }
            }
            adam.step(model, &g_enc, &g_heads);
            metrics.minibatches += 1;
        }
    }
    let n = samples as f64;
    metrics.mean_ratio /= n;
    metrics.clip_fraction /= n;
    metrics.policy_loss /= n;
    metrics.value_loss /= n;
    metrics.entropy /= n;
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub reward: f64,
    pub makespan: f64,
    pub greedy_makespan: Option<f64>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
    pub best_greedy: Option<f64>,
    pub best_episode: Option<usize>,
}

impl TrainingLog {
    /// Columns `episode,reward,makespan,greedy_makespan,elapsed_s`; only the last is
    /// timing-dependent.
    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "reward", "makespan", "greedy_makespan", "elapsed_s"])?;
        for e in &self.episodes {
            w.write_record([
                e.episode.to_string(),
                format!("{:.6}", e.reward),
                format!("{:.6}", e.makespan),
                e.greedy_makespan.map_or(String::new(), |g| format!("{g:.6}")),
                format!("{:.6}", e.elapsed_s),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn mean_reward(&self, range: std::ops::Range<usize>) -> f64 {
        let slice = &self.episodes[range];
        slice.iter().map(|e| e.reward).sum::<f64>() / slice.len().max(1) as f64
    }
}

/// Trains a fresh model on one instance. Each episode is a masked sampled rollout
/// followed by one PPO update on that episode's transitions.
pub fn train(
    system: &System,
    workflow: &Workflow,
    env_config: &EnvConfig,
    config: &PpoConfig,
) -> Result<(PolicyModel, TrainingLog), NnError> {
    config.check()?;
    let problem = Problem::new(system, workflow);
    if let Some(t) = problem.unplaceable_task() {
        return Err(NnError::Infeasible {
            task: problem.task(t).id.clone(),
        });
    }
    let mut model = PolicyModel::new(config.model.dims(&problem), config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(model.n_params(), config.learning_rate);
    let mut log = TrainingLog::default();
    let mut best: Option<PolicyModel> = None;
    let started = Instant::now();

    for episode in 1..=config.episodes {
        let (buffer, base_graph, makespan) = {
            let mut rollout = Rollout::new(&model, problem.clone(), env_config.clone())?;
            let mut buffer = Vec::with_capacity(problem.n_tasks());
            while !rollout.env().is_done() {
                let obs = rollout.observe();
                let fwd = policy_forward(&model, &obs, rollout.embedding(), true);
                let all = vec![true; fwd.logits.len()];
                let (a, logp) = select_action(&fwd.logits, &all, &mut rng)?;
                let (t, j) = obs.actions[a];
                let step = rollout.apply(t, j)?;
                buffer.push(Transition {
                    obs,
                    action: a,
                    logp,
                    value: fwd.value,
                    reward: step.reward,
                    done: step.done,
                });
            }
            (buffer, rollout.base_graph().clone(), rollout.env().state().makespan)
        };
        let rewards: Vec<f64> = buffer.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = buffer.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = buffer.iter().map(|t| t.done).collect();
        let Gae {
            mut advantages,
            returns,
        } = compute_gae(&rewards, &values, &dones, config.gamma, config.gae_lambda);
        if config.normalize_advantages {
            normalize_advantages(&mut advantages);
        }
        if !buffer.is_empty() {
            ppo_update(
                &mut model, &mut adam, &base_graph, &buffer, &advantages, &returns, config, &mut rng,
            )?;
        }
        model.episodes_trained = episode as u64;

        let mut greedy_makespan = None;
        if config.keep_best && episode % config.eval_every == 0 {
            let mut r = Rollout::new(&model, problem.clone(), env_config.clone())?;
            let g = r.run_greedy()?.makespan;
            greedy_makespan = Some(g);
            if log.best_greedy.is_none_or(|b| g < b) {
                log.best_greedy = Some(g);
                log.best_episode = Some(episode);
                best = Some(model.clone());
            }
        }
        log.episodes.push(EpisodeLog {
            episode,
            reward: rewards.iter().sum(),
            makespan,
            greedy_makespan,
            elapsed_s: started.elapsed().as_secs_f64(),
        });
        if let (Some(target), Some(g)) = (config.target_makespan, greedy_makespan) {
            if g <= target + 1e-9 * target.abs().max(1.0) {
                break;
            }
        }
    }
    Ok((best.unwrap_or(model), log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn gae_by_hand() {
        // delta = [1.0, 1.75, 1.5]; A2 = 1.5, A1 = 1.75 + 0.25 * 1.5, A0 = 1 + 0.25 * A1.
        let g = compute_gae(&[1.0, 2.0, 3.0], &[0.5, 1.0, 1.5], &[false, false, true], 0.5, 0.5);
        assert!(close(&g.advantages, &[1.53125, 2.125, 1.5]));
        assert!(close(&g.returns, &[2.03125, 3.125, 3.0]));
    }

    #[test]
    fn gae_single_terminal_step() {
        let g = compute_gae(&[1.0], &[0.0], &[true], 0.9, 0.95);
        assert_eq!((g.advantages[0], g.returns[0]), (1.0, 1.0));
    }

    #[test]
    fn gae_lambda_extremes() {
        let r = [0.3, -1.0, 2.0, 0.5];
        let v = [0.1, 0.4, -0.2, 0.7];
        let d = [false, false, false, true];
        let gamma = 0.9;
        let td = compute_gae(&r, &v, &d, gamma, 0.0);
        for t in 0..4 {
            let next = if t == 3 { 0.0 } else { v[t + 1] };
            assert_eq!(td.advantages[t], r[t] + gamma * next - v[t]);
        }
        let mc = compute_gae(&r, &v, &d, gamma, 1.0);
        for t in 0..4 {
            let ret: f64 = (t..4).map(|k| gamma.powi((k - t) as i32) * r[k]).sum();
            assert!((mc.advantages[t] - (ret - v[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization() {
        let mut a = vec![1.0, 2.0, 3.0];
        normalize_advantages(&mut a);
        assert!(a.iter().sum::<f64>().abs() < 1e-12);
        let var = a.iter().map(|x| x * x).sum::<f64>() / 3.0;
        assert!((var - 1.0).abs() < 1e-12);
        let mut flat = vec![2.0, 2.0];
        normalize_advantages(&mut flat);
        assert_eq!(flat, [2.0, 2.0]);
    }

    fn tiny() -> (System, Workflow) {
        let b = crate::ingest::generate_synthetic(2, 5, 3);
        (b.system, b.workflows.into_iter().next().unwrap())
    }

    fn buffer_for(model: &PolicyModel, problem: &Problem) -> (Vec<Transition>, TaskGraph) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut r = Rollout::new(model, problem.clone(), EnvConfig::default()).unwrap();
        let mut buf = Vec::new();
        while !r.env().is_done() {
            let obs = r.observe();
            let fwd = policy_forward(model, &obs, r.embedding(), true);
            let all = vec![true; fwd.logits.len()];
            let (a, logp) = select_action(&fwd.logits, &all, &mut rng).unwrap();
            let (t, j) = obs.actions[a];
            let s = r.apply(t, j).unwrap();
            buf.push(Transition {
                obs,
                action: a,
                logp,
                value: fwd.value,
                reward: s.reward,
                done: s.done,
            });
        }
        (buf, r.base_graph().clone())
    }

    fn small_model(problem: &Problem) -> PolicyModel {
        let cfg = ModelConfig {
            hidden: 6,
            layers: 2,
            context: 5,
            dense_limit: 4096,
        };
        PolicyModel::new(cfg.dims(problem), 2)
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let (s, w) = tiny();
        let p = Problem::new(&s, &w);
        let mut model = small_model(&p);
        let before = model.clone();
        let (buf, graph) = buffer_for(&model, &p);
        let adv: Vec<f64> = (0..buf.len()).map(|i| i as f64 - 2.0).collect();
        let ret = vec![1.0; buf.len()];
        let cfg = PpoConfig {
            learning_rate: 0.0,
            ..PpoConfig::default()
        };
        let mut adam = Adam::new(model.n_params(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = ppo_update(&mut model, &mut adam, &graph, &buf, &adv, &ret, &cfg, &mut rng).unwrap();
        assert_eq!(model, before);
        assert!(m.policy_loss.is_finite() && m.value_loss.is_finite());
        // Same parameters as the rollout: every ratio is exactly one.
        assert_eq!(m.mean_ratio, 1.0);
    }

    #[test]
    fn zero_advantages_leave_the_actor_unchanged() {
        let (s, w) = tiny();
        let p = Problem::new(&s, &w);
        let mut model = small_model(&p);
        let before = model.clone();
        let (buf, graph) = buffer_for(&model, &p);
        let adv = vec![0.0; buf.len()];
        let ret = vec![3.0; buf.len()];
        let cfg = PpoConfig {
            entropy_coef: 0.0,
            learning_rate: 1e-2,
            ..PpoConfig::default()
        };
        let mut adam = Adam::new(model.n_params(), cfg.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = ppo_update(&mut model, &mut adam, &graph, &buf, &adv, &ret, &cfg, &mut rng).unwrap();
        assert_eq!(m.policy_loss, 0.0);
        let critic = model.layout().critic();
        assert_eq!(model.encoder, before.encoder);
        assert_eq!(model.heads[..critic.start], before.heads[..critic.start]);
        assert_ne!(model.heads[critic.clone()], before.heads[critic]);
    }

    #[test]
    fn clipped_samples_carry_no_policy_gradient() {
        let (s, w) = tiny();
        let p = Problem::new(&s, &w);
        let mut model = small_model(&p);
        let before = model.clone();
        let (mut buf, graph) = buffer_for(&model, &p);
        // Old probabilities half the current ones: ratio 2 everywhere.
        for t in &mut buf {
            t.logp -= std::f64::consts::LN_2;
        }
        let adv = vec![1.0; buf.len()];
        let ret = vec![0.0; buf.len()];
        let cfg = PpoConfig {
            entropy_coef: 0.0,
            value_coef: 0.0,
            epochs: 1,
            learning_rate: 1e-2,
            ..PpoConfig::default()
        };
        let mut adam = Adam::new(model.n_params(), cfg.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = ppo_update(&mut model, &mut adam, &graph, &buf, &adv, &ret, &cfg, &mut rng).unwrap();
        assert_eq!(m.clip_fraction, 1.0);
        assert!((m.mean_ratio - 2.0).abs() < 1e-9);
        assert_eq!(model, before);
    }

    #[test]
    fn full_loss_gradient_matches_finite_differences() {
        let (s, w) = tiny();
        let p = Problem::new(&s, &w);
        let model = small_model(&p);
        let (buf, base) = buffer_for(&model, &p);
        let tr = {
            let mut t = buf[1].clone();
            t.logp -= 0.05;
            t
        };
        let mut graph = base.clone();
        for (i, &a) in tr.obs.assigned.iter().enumerate() {
            graph.set_assigned(i, a);
        }
        let cfg = PpoConfig::default();
        let (adv, ret) = (0.8, 1.7);
        let loss = |m: &PolicyModel| {
            let mut ge = vec![0.0; m.encoder.data.len()];
            let mut gh = vec![0.0; m.heads.len()];
            let s = sample_grad(m, &graph, &tr, adv, ret, &cfg, 1.0, &mut ge, &mut gh).unwrap();
            s.policy_loss - cfg.entropy_coef * s.entropy + cfg.value_coef * s.value_loss
        };
        let mut ge = vec![0.0; model.encoder.data.len()];
        let mut gh = vec![0.0; model.heads.len()];
        sample_grad(&model, &graph, &tr, adv, ret, &cfg, 1.0, &mut ge, &mut gh).unwrap();
        let eps = 1e-6;
        let mut num_h = vec![0.0; gh.len()];
        for k in 0..gh.len() {
            let (mut a, mut b) = (model.clone(), model.clone());
            a.heads[k] += eps;
            b.heads[k] -= eps;
            num_h[k] = (loss(&a) - loss(&b)) / (2.0 * eps);
        }
        // The value term also depends on the encoder through the forward pass, but its
        // gradient is detached; compare the encoder against the actor-only loss.
        let actor_loss = |m: &PolicyModel| {
            let c = PpoConfig {
                value_coef: 0.0,
                ..cfg.clone()
            };
            let mut ge = vec![0.0; m.encoder.data.len()];
            let mut gh = vec![0.0; m.heads.len()];
            let s = sample_grad(m, &graph, &tr, adv, ret, &c, 1.0, &mut ge, &mut gh).unwrap();
            s.policy_loss - c.entropy_coef * s.entropy
        };
        let mut num_e = vec![0.0; ge.len()];
        for k in 0..ge.len() {
            let (mut a, mut b) = (model.clone(), model.clone());
            a.encoder.data[k] += eps;
            b.encoder.data[k] -= eps;
            num_e[k] = (actor_loss(&a) - actor_loss(&b)) / (2.0 * eps);
        }
        let rel = crate::nn::policy::tests::rel_err;
        assert!(rel(&gh, &num_h) < 1e-4, "heads {}", rel(&gh, &num_h));
        assert!(rel(&ge, &num_e) < 1e-4, "encoder {}", rel(&ge, &num_e));
    }

    #[test]
    fn zero_episodes() {
        let (s, w) = tiny();
        let cfg = PpoConfig {
            episodes: 0,
            ..PpoConfig::default()
        };
        let (model, log) = train(&s, &w, &EnvConfig::default(), &cfg).unwrap();
        assert!(log.episodes.is_empty());
        let p = Problem::new(&s, &w);
        assert_eq!(model, PolicyModel::new(cfg.model.dims(&p), cfg.seed));
    }

    #[test]
    fn training_is_deterministic() {
        let (s, w) = tiny();
        let cfg = PpoConfig {
            episodes: 6,
            seed: 4,
            ..PpoConfig::default()
        };
        let (m1, l1) = train(&s, &w, &EnvConfig::default(), &cfg).unwrap();
        let (m2, l2) = train(&s, &w, &EnvConfig::default(), &cfg).unwrap();
        assert_eq!(m1, m2);
        let strip = |l: &TrainingLog| -> Vec<(usize, f64, f64, Option<f64>)> {
            l.episodes.iter().map(|e| (e.episode, e.reward, e.makespan, e.greedy_makespan)).collect()
        };
        assert_eq!(strip(&l1), strip(&l2));
        assert_eq!(l1.episodes.len(), 6);
    }
}
