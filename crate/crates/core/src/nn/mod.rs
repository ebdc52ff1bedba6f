//! Graph encoder, masked actor-critic policy, PPO training and model files.
//!
//! Parameters live in flat `f64` buffers with fixed layouts. All kernels are written
//! row by row so a partially recomputed embedding is bitwise equal to a full one.

mod gnn;
mod persist;
mod policy;
mod ppo;
mod rollout;

use thiserror::Error;

pub use gnn::{
    build_task_graph, embed, embed_backward, init_params, EncoderParams, EncoderTrace,
    FeatureNorms, IncrementalEncoder, TaskGraph, FEATURE_DIM,
};
pub use persist::{load_model, model_from_bytes, model_to_bytes, save_model, FORMAT_VERSION};
pub use policy::{
    greedy_action, masked_log_softmax, policy_backward, policy_forward, select_action,
    HeadLayout, ModelDims, Observation, PolicyForward, PolicyModel, NODE_FEATURES,
    PAIR_FEATURES, READY_SLOTS,
};
pub use ppo::{
    compute_gae, normalize_advantages, ppo_update, train, Adam, EpisodeLog, Gae, ModelConfig,
    PpoConfig, TrainingLog, Transition, UpdateMetrics,
};
pub use rollout::{infer_schedule, Rollout};

use crate::env::EnvError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("infeasible: task {task:?} fits no node")]
    Infeasible { task: String },
    #[error("no valid action: the mask is all false")]
    NoValidAction,
    #[error("non-finite loss in minibatch {minibatch} of epoch {epoch}")]
    NonFiniteLoss { epoch: usize, minibatch: usize },
    #[error("bad model file: {0}")]
    Format(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Four interleaved partial sums so the loop vectorizes; the summation order is
/// fixed, which keeps results reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[2]) + (acc[1] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `out[r] += sum_k w[r * x.len() + k] * x[k]` for a row-major weight block.
#[inline]
pub(crate) fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o += dot(&w[r * n..(r + 1) * n], x);
    }
}

/// `gw += outer(dy, x)` and `dx += w^T dy` for `y = w x`.
#[inline]
pub(crate) fn matvec_backward(
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    gw: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let n = x.len();
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for (gwk, xk) in gw[r * n..(r + 1) * n].iter_mut().zip(x) {
            *gwk += g * xk;
        }
    }
    if let Some(dx) = dx {
        for (r, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (dxk, wk) in dx.iter_mut().zip(&w[r * n..(r + 1) * n]) {
                *dxk += g * wk;
            }
        }
    }
}

pub(crate) fn uniform_fill(rng: &mut impl rand::Rng, out: &mut [f64], bound: f64) {
    for v in out {
        *v = rng.random_range(-bound..=bound);
    }
}
