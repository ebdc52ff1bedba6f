//! Actor-critic heads over the augmented state.
//!
//! State vector `s = assigned flags (M) | node frontiers (N) | mean embedding (H) |
//! embeddings of the lowest-index ready tasks (4H)`. With context `c = tanh(W_c s + b_c)`
//! the logit of a valid action `(i, j)` is
//!
//! ```text
//! z_ij = e_i . (P c + p) + e_i . (Q g_j) + r . g_j + w . phi_ij  [+ D_ij . c + d_ij]
//! ```
//!
//! where `g_j` are node features and `phi_ij` pair features. The bracketed per-action
//! term exists only for small instances. The critic reads the same state through its
//! own hidden layer and does not backpropagate into the encoder.

use std::ops::Range;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gnn::{init_params, EncoderParams, FEATURE_DIM};
use super::{dot, matvec_acc, matvec_backward, uniform_fill, NnError};
use crate::problem::Problem;

pub const READY_SLOTS: usize = 4;
/// Cores, memory, speed, transfer rate, frontier.
pub const NODE_FEATURES: usize = 5;
/// Duration on the node, finish time if placed now.
pub const PAIR_FEATURES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub tasks: usize,
    pub nodes: usize,
    pub hidden: usize,
    pub layers: usize,
    pub context: usize,
    pub dense: bool,
}

impl ModelDims {
    pub fn state_dim(&self) -> usize {
        self.tasks + self.nodes + self.hidden * (1 + READY_SLOTS)
    }
}

/// Offsets of each head block inside [`PolicyModel::heads`], in storage order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadLayout {
    pub w_c: Range<usize>,
    pub b_c: Range<usize>,
    pub p_mat: Range<usize>,
    pub p_vec: Range<usize>,
    pub q_mat: Range<usize>,
    pub r_vec: Range<usize>,
    pub w_pair: Range<usize>,
    pub d_mat: Range<usize>,
    pub d_vec: Range<usize>,
    pub w_v: Range<usize>,
    pub b_v: Range<usize>,
    pub u_v: Range<usize>,
    pub v_0: Range<usize>,
    pub total: usize,
}

impl HeadLayout {
    pub fn new(d: &ModelDims) -> Self {
        let (s, k, h) = (d.state_dim(), d.context, d.hidden);
        let actions = if d.dense { d.tasks * d.nodes } else { 0 };
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let w_c = take(k * s);
        let b_c = take(k);
        let p_mat = take(h * k);
        let p_vec = take(h);
        let q_mat = take(h * NODE_FEATURES);
        let r_vec = take(NODE_FEATURES);
        let w_pair = take(PAIR_FEATURES);
        let d_mat = take(actions * k);
        let d_vec = take(actions);
        let w_v = take(k * s);
        let b_v = take(k);
        let u_v = take(k);
        let v_0 = take(1);
        HeadLayout {
            w_c,
            b_c,
            p_mat,
            p_vec,
            q_mat,
            r_vec,
            w_pair,
            d_mat,
            d_vec,
            w_v,
            b_v,
            u_v,
            v_0,
            total: at,
        }
    }

    /// Blocks that belong to the critic.
    pub fn critic(&self) -> Range<usize> {
        self.w_v.start..self.total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub dims: ModelDims,
    pub seed: u64,
    pub episodes_trained: u64,
    pub encoder: EncoderParams,
    pub heads: Vec<f64>,
}

impl PolicyModel {
    pub fn new(dims: ModelDims, seed: u64) -> Self {
        let encoder = init_params(seed, FEATURE_DIM, dims.hidden, dims.layers);
        let layout = HeadLayout::new(&dims);
        let mut heads = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let s = dims.state_dim() as f64;
        let k = dims.context as f64;
        uniform_fill(&mut rng, &mut heads[layout.w_c.start..layout.b_c.end], 1.0 / s.sqrt());
        uniform_fill(&mut rng, &mut heads[layout.p_mat.start..layout.p_vec.end], 1.0 / k.sqrt());
        uniform_fill(&mut rng, &mut heads[layout.q_mat.clone()], 1.0 / (NODE_FEATURES as f64).sqrt());
        uniform_fill(&mut rng, &mut heads[layout.w_v.start..layout.b_v.end], 1.0 / s.sqrt());
        uniform_fill(&mut rng, &mut heads[layout.u_v.clone()], 1.0 / k.sqrt());
        PolicyModel {
            dims,
            seed,
            episodes_trained: 0,
            encoder,
            heads,
        }
    }

    pub fn layout(&self) -> HeadLayout {
        HeadLayout::new(&self.dims)
    }

    pub fn n_params(&self) -> usize {
        self.encoder.data.len() + self.heads.len()
    }

    pub fn check_shape(&self, problem: &Problem) -> Result<(), NnError> {
        let found = (problem.n_tasks(), problem.n_nodes());
        let expected = (self.dims.tasks, self.dims.nodes);
        if found != expected {
            return Err(NnError::ShapeMismatch {
                expected: format!("{} tasks x {} nodes", expected.0, expected.1),
                found: format!("{} tasks x {} nodes", found.0, found.1),
            });
        }
        Ok(())
    }
}

/// Everything the policy reads besides the embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub assigned: Vec<bool>,
    /// Assigned flags then normalized node frontiers (`M + N`).
    pub prefix: Vec<f64>,
    /// Lowest-index ready tasks, at most [`READY_SLOTS`].
    pub slots: Vec<usize>,
    /// Row-major `N x NODE_FEATURES`.
    pub node_feats: Vec<f64>,
    /// Valid `(task, node)` pairs; the policy only scores these.
    pub actions: Vec<(usize, usize)>,
    pub pair_feats: Vec<[f64; PAIR_FEATURES]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyForward {
    pub state: Vec<f64>,
    pub context: Vec<f64>,
    pub query: Vec<f64>,
    /// `Q^T e_i` per task (`NODE_FEATURES` values each), zero for tasks without
    /// actions.
    pub task_proj: Vec<f64>,
    pub logits: Vec<f64>,
    pub critic_hidden: Vec<f64>,
    pub value: f64,
}

fn state_vector(dims: &ModelDims, obs: &Observation, emb: &[f64]) -> Vec<f64> {
    let (m, h) = (dims.tasks, dims.hidden);
    let mut s = Vec::with_capacity(dims.state_dim());
    s.extend_from_slice(&obs.prefix);
    let mut pooled = vec![0.0; h];
    for i in 0..m {
        for (p, e) in pooled.iter_mut().zip(&emb[i * h..(i + 1) * h]) {
            *p += e;
        }
    }
    s.extend(pooled.iter().map(|p| p / m.max(1) as f64));
    for k in 0..READY_SLOTS {
        match obs.slots.get(k) {
            Some(&i) => s.extend_from_slice(&emb[i * h..(i + 1) * h]),
            None => s.extend(std::iter::repeat_n(0.0, h)),
        }
    }
    s
}

/// Scores every action in `obs.actions`; computes the value when `with_value`.
pub fn policy_forward(
    model: &PolicyModel,
    obs: &Observation,
    emb: &[f64],
    with_value: bool,
) -> PolicyForward {
    let d = &model.dims;
    let l = model.layout();
    let w = &model.heads;
    let (h, k, n) = (d.hidden, d.context, d.nodes);
    let state = state_vector(d, obs, emb);

    let mut context = w[l.b_c.clone()].to_vec();
    matvec_acc(&w[l.w_c.clone()], &state, &mut context);
    for c in context.iter_mut() {
        *c = c.tanh();
    }
    let mut query = w[l.p_vec.clone()].to_vec();
    matvec_acc(&w[l.p_mat.clone()], &context, &mut query);

    let node_bias: Vec<f64> = (0..n)
        .map(|j| dot(&w[l.r_vec.clone()], &obs.node_feats[j * NODE_FEATURES..(j + 1) * NODE_FEATURES]))
        .collect();
    let q = &w[l.q_mat.clone()];
    let w_pair = &w[l.w_pair.clone()];
    let mut task_proj = vec![0.0; d.tasks * NODE_FEATURES];
    let mut task_score: Vec<Option<f64>> = vec![None; d.tasks];
    let logits = obs
        .actions
        .iter()
        .zip(&obs.pair_feats)
        .map(|(&(i, j), phi)| {
            let e = &emb[i * h..(i + 1) * h];
            let u = &mut task_proj[i * NODE_FEATURES..(i + 1) * NODE_FEATURES];
            let ts = *task_score[i].get_or_insert_with(|| {
                for (x, ex) in e.iter().enumerate() {
                    for (f, uf) in u.iter_mut().enumerate() {
                        *uf += q[x * NODE_FEATURES + f] * ex;
                    }
                }
                dot(e, &query)
            });
            let g = &obs.node_feats[j * NODE_FEATURES..(j + 1) * NODE_FEATURES];
            let mut z = ts + dot(u, g) + node_bias[j] + dot(w_pair, phi);
            if d.dense {
                let a = i * n + j;
                z += dot(&w[l.d_mat.start + a * k..l.d_mat.start + (a + 1) * k], &context)
                    + w[l.d_vec.start + a];
            }
            z
        })
        .collect();

    let (critic_hidden, value) = if with_value {
        let mut hv = w[l.b_v.clone()].to_vec();
        matvec_acc(&w[l.w_v.clone()], &state, &mut hv);
        for v in hv.iter_mut() {
            *v = v.tanh();
        }
        let value = dot(&w[l.u_v.clone()], &hv) + w[l.v_0.start];
        (hv, value)
    } else {
        (Vec::new(), 0.0)
    };
    PolicyForward {
        state,
        context,
        query,
        task_proj,
        logits,
        critic_hidden,
        value,
    }
}

/// Accumulates head gradients into `g_heads` and embedding gradients into `d_emb`
/// given `d_logits` (per action) and `d_value`.
pub fn policy_backward(
    model: &PolicyModel,
    obs: &Observation,
    emb: &[f64],
    fwd: &PolicyForward,
    d_logits: &[f64],
    d_value: f64,
    g_heads: &mut [f64],
    d_emb: &mut [f64],
) {
    let d = &model.dims;
    let l = model.layout();
    let w = &model.heads;
    let (m, h, k, n) = (d.tasks, d.hidden, d.context, d.nodes);

    let mut d_context = vec![0.0; k];
    let mut d_query = vec![0.0; h];
    let mut d_task_node = vec![0.0; m * NODE_FEATURES];
    let mut d_node_bias = vec![0.0; n];
    let mut d_task_score = vec![0.0; m];
    for ((&(i, j), phi), &dz) in obs.actions.iter().zip(&obs.pair_feats).zip(d_logits) {
        if dz == 0.0 {
            continue;
        }
        d_task_score[i] += dz;
        let g = &obs.node_feats[j * NODE_FEATURES..(j + 1) * NODE_FEATURES];
        for (dt, gf) in d_task_node[i * NODE_FEATURES..(i + 1) * NODE_FEATURES].iter_mut().zip(g) {
            *dt += dz * gf;
        }
        d_node_bias[j] += dz;
        for (g, p) in g_heads[l.w_pair.clone()].iter_mut().zip(phi) {
            *g += dz * p;
        }
        if d.dense {
            let a = i * n + j;
            let row = l.d_mat.start + a * k..l.d_mat.start + (a + 1) * k;
            for x in 0..k {
                d_context[x] += dz * w[row.start + x];
            }
            for (g, c) in g_heads[row].iter_mut().zip(&fwd.context) {
                *g += dz * c;
            }
            g_heads[l.d_vec.start + a] += dz;
        }
    }
    for i in 0..m {
        let ds = d_task_score[i];
        if ds == 0.0 {
            continue;
        }
        for x in 0..h {
            d_query[x] += ds * emb[i * h + x];
            d_emb[i * h + x] += ds * fwd.query[x];
        }
    }
    // e_i^T Q g_j summed over actions: with G_i = sum_j dz g_j, dQ += e_i G_i^T and
    // de_i += Q G_i.
    for i in 0..m {
        let gi = &d_task_node[i * NODE_FEATURES..(i + 1) * NODE_FEATURES];
        if gi.iter().all(|&v| v == 0.0) {
            continue;
        }
        let e = &emb[i * h..(i + 1) * h];
        matvec_backward(&w[l.q_mat.clone()], gi, e, &mut g_heads[l.q_mat.clone()], None);
        matvec_acc(&w[l.q_mat.clone()], gi, &mut d_emb[i * h..(i + 1) * h]);
    }
    for j in 0..n {
        let g = &obs.node_feats[j * NODE_FEATURES..(j + 1) * NODE_FEATURES];
        for (gr, gv) in g_heads[l.r_vec.clone()].iter_mut().zip(g) {
            *gr += d_node_bias[j] * gv;
        }
    }
    for (g, dq) in g_heads[l.p_vec.clone()].iter_mut().zip(&d_query) {
        *g += dq;
    }
    matvec_backward(
        &w[l.p_mat.clone()],
        &fwd.context,
        &d_query,
        &mut g_heads[l.p_mat.clone()],
        Some(&mut d_context),
    );

    let d_pre: Vec<f64> = d_context
        .iter()
        .zip(&fwd.context)
        .map(|(dc, c)| dc * (1.0 - c * c))
        .collect();
    for (g, v) in g_heads[l.b_c.clone()].iter_mut().zip(&d_pre) {
        *g += v;
    }
    let mut d_state = vec![0.0; fwd.state.len()];
    matvec_backward(
        &w[l.w_c.clone()],
        &fwd.state,
        &d_pre,
        &mut g_heads[l.w_c.clone()],
        Some(&mut d_state),
    );
    let pool = m + n;
    if m > 0 {
        for i in 0..m {
            for x in 0..h {
                d_emb[i * h + x] += d_state[pool + x] / m as f64;
            }
        }
    }
    for (slot, &i) in obs.slots.iter().enumerate().take(READY_SLOTS) {
        let base = pool + h * (1 + slot);
        for x in 0..h {
            d_emb[i * h + x] += d_state[base + x];
        }
    }

    if d_value != 0.0 {
        let hv = &fwd.critic_hidden;
        for (g, v) in g_heads[l.u_v.clone()].iter_mut().zip(hv) {
            *g += d_value * v;
        }
        g_heads[l.v_0.start] += d_value;
        let d_pre: Vec<f64> = w[l.u_v.clone()]
            .iter()
            .zip(hv)
            .map(|(u, v)| d_value * u * (1.0 - v * v))
            .collect();
        for (g, v) in g_heads[l.b_v.clone()].iter_mut().zip(&d_pre) {
            *g += v;
        }
        matvec_backward(&w[l.w_v.clone()], &fwd.state, &d_pre, &mut g_heads[l.w_v.clone()], None);
    }
}

/// Log-probabilities of a softmax restricted to `mask`; masked entries are `-inf`.
pub fn masked_log_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>, NnError> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(z, _)| *z)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(NnError::NoValidAction);
    }
    let sum: f64 = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(z, _)| (z - max).exp())
        .sum();
    let lse = max + sum.ln();
    Ok(logits
        .iter()
        .zip(mask)
        .map(|(z, &m)| if m { z - lse } else { f64::NEG_INFINITY })
        .collect())
}

/// Samples from the masked softmax and returns `(action, log-probability)`. Masked
/// entries are never drawn.
pub fn select_action(
    logits: &[f64],
    mask: &[bool],
    rng: &mut impl Rng,
) -> Result<(usize, f64), NnError> {
    let logp = masked_log_softmax(logits, mask)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (a, &lp) in logp.iter().enumerate() {
        if !mask[a] {
            continue;
        }
        acc += lp.exp();
        last = Some(a);
        if u < acc {
            return Ok((a, lp));
        }
    }
    let a = last.expect("at least one valid entry");
    Ok((a, logp[a]))
}

/// Index of the largest logit; the first wins ties.
pub fn greedy_action(logits: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (a, &z) in logits.iter().enumerate() {
        if best.is_none_or(|(_, b)| z > b) {
            best = Some((a, z));
        }
    }
    best.map(|(a, _)| a)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::nn::gnn::{build_task_graph, embed, embed_backward};

    #[test]
    fn forced_choice() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (a, lp) = select_action(&[3.0, -1.0, 7.0], &[false, true, false], &mut rng).unwrap();
        assert_eq!((a, lp), (1, 0.0));
    }

    #[test]
    fn all_masked() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&[1.0, 2.0], &[false, false], &mut rng), Err(NnError::NoValidAction));
    }

    #[test]
    fn uniform_over_valid_entries() {
        // Chi-square with 4 degrees of freedom; 13.28 is the 0.01 critical value.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mask = [true, false, true, true, false, true, true];
        let mut counts = [0usize; 7];
        let draws = 10_000;
        for _ in 0..draws {
            counts[select_action(&[0.0; 7], &mask, &mut rng).unwrap().0] += 1;
        }
        assert_eq!(counts[1] + counts[4], 0);
        let expected = draws as f64 / 5.0;
        let chi2: f64 = counts
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(&c, _)| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 13.28, "chi2 = {chi2}");
    }

    #[test]
    fn greedy_prefers_first_of_ties() {
        assert_eq!(greedy_action(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(greedy_action(&[]), None);
    }

    fn small_obs(problem: &Problem) -> Observation {
        let (m, n) = (problem.n_tasks(), problem.n_nodes());
        let mut assigned = vec![false; m];
        assigned[0] = true;
        let mut prefix: Vec<f64> = assigned.iter().map(|&a| a as u8 as f64).collect();
        prefix.extend((0..n).map(|j| 0.1 * j as f64));
        let node_feats = (0..n * NODE_FEATURES).map(|x| 0.05 * x as f64).collect();
        let actions: Vec<(usize, usize)> = [1, 2, 4].iter().flat_map(|&i| (0..n).map(move |j| (i, j))).collect();
        let pair_feats = actions
            .iter()
            .map(|&(i, j)| [0.2 + 0.1 * i as f64, 0.3 * j as f64])
            .collect();
        Observation {
            assigned,
            prefix,
            slots: vec![1, 2, 4],
            node_feats,
            actions,
            pair_feats,
        }
    }

    /// Central differences on a scalar mixing all logits and the value.
    #[test]
    fn head_and_encoder_gradients() {
        let b = crate::ingest::generate_synthetic(3, 6, 4);
        let problem = Problem::new(&b.system, &b.workflows[0]);
        let dims = ModelDims {
            tasks: 6,
            nodes: 3,
            hidden: 5,
            layers: 2,
            context: 4,
            dense: true,
        };
        let mut model = PolicyModel::new(dims, 3);
        // Move the zero-initialized blocks off zero so their gradients are exercised.
        let l = model.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in l.w_pair.start..l.d_vec.end {
            model.heads[i] = rng.random_range(-0.5..0.5);
        }
        let obs = small_obs(&problem);
        let graph = build_task_graph(&problem, &obs.assigned);
        let coef: Vec<f64> = (0..obs.actions.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dv = 0.7;
        let loss = |model: &PolicyModel| {
            let e = embed(&graph, &model.encoder).unwrap();
            let f = policy_forward(model, &obs, e.embedding(), true);
            dot(&f.logits, &coef) + dv * f.value
        };
        let trace = embed(&graph, &model.encoder).unwrap();
        let fwd = policy_forward(&model, &obs, trace.embedding(), true);
        let mut g_heads = vec![0.0; model.heads.len()];
        let mut d_emb = vec![0.0; trace.embedding().len()];
        policy_backward(&model, &obs, trace.embedding(), &fwd, &coef, dv, &mut g_heads, &mut d_emb);
        // The critic is detached: only actor terms reach the encoder.
        let mut g_enc = vec![0.0; model.encoder.data.len()];
        embed_backward(&graph, &model.encoder, &trace, &d_emb, &mut g_enc);

        let eps = 1e-6;
        let numeric_heads: Vec<f64> = (0..model.heads.len())
            .map(|k| {
                let mut mp = model.clone();
                mp.heads[k] += eps;
                let mut mm = model.clone();
                mm.heads[k] -= eps;
                (loss(&mp) - loss(&mm)) / (2.0 * eps)
            })
            .collect();
        assert!(rel_err(&g_heads, &numeric_heads) < 1e-4);

        let actor_only = |model: &PolicyModel| {
            let e = embed(&graph, &model.encoder).unwrap();
            dot(&policy_forward(model, &obs, e.embedding(), false).logits, &coef)
        };
        let numeric_enc: Vec<f64> = (0..model.encoder.data.len())
            .map(|k| {
                let mut mp = model.clone();
                mp.encoder.data[k] += eps;
                let mut mm = model.clone();
                mm.encoder.data[k] -= eps;
                (actor_only(&mp) - actor_only(&mm)) / (2.0 * eps)
            })
            .collect();
        assert!(rel_err(&g_enc, &numeric_enc) < 1e-4);
    }

    pub(crate) fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
        diff / norm.max(1e-300)
    }
}
