//! Message passing over the task DAG.
//!
//! Layer update: `h_i' = tanh(W_self h_i + W_fwd mean(h_pred) + W_bwd mean(h_succ) + b)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{matvec_acc, matvec_backward, uniform_fill, NnError};
use crate::problem::Problem;

/// Per-task input features: cores, memory, mean duration, F1..F8 tags, any other
/// tag, assigned flag, in-degree, out-degree.
pub const FEATURE_DIM: usize = 15;
const TAGS: [&str; 8] = ["F1", "F2", "F3", "F4", "F5", "F6", "F7", "F8"];
const ASSIGNED: usize = 12;

/// Instance-derived divisors used to scale raw features into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureNorms {
    pub max_cores: f64,
    pub max_memory: f64,
    pub max_duration: f64,
    pub max_in: f64,
    pub max_out: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskGraph {
    features: Vec<f64>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    pub norms: FeatureNorms,
}

fn safe(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        1.0
    }
}

impl TaskGraph {
    /// Builds a graph from raw parts; `features` is row-major `preds.len() x FEATURE_DIM`.
    pub fn from_parts(
        features: Vec<f64>,
        preds: Vec<Vec<usize>>,
        norms: FeatureNorms,
    ) -> Self {
        assert_eq!(features.len(), preds.len() * FEATURE_DIM);
        let mut succs = vec![Vec::new(); preds.len()];
        for (i, ps) in preds.iter().enumerate() {
            for &p in ps {
                succs[p].push(i);
            }
        }
        TaskGraph {
            features,
            preds,
            succs,
            norms,
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.preds.len()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * FEATURE_DIM..(i + 1) * FEATURE_DIM]
    }

    pub fn preds(&self, i: usize) -> &[usize] {
        &self.preds[i]
    }

    pub fn succs(&self, i: usize) -> &[usize] {
        &self.succs[i]
    }

    pub fn forward_edges(&self) -> usize {
        self.preds.iter().map(Vec::len).sum()
    }

    pub fn assigned(&self, i: usize) -> bool {
        self.features[i * FEATURE_DIM + ASSIGNED] != 0.0
    }

    pub fn set_assigned(&mut self, i: usize, assigned: bool) {
        self.features[i * FEATURE_DIM + ASSIGNED] = if assigned { 1.0 } else { 0.0 };
    }

    /// Reorders tasks so that new task `k` is old task `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> TaskGraph {
        let mut inv = vec![0; perm.len()];
        for (k, &old) in perm.iter().enumerate() {
            inv[old] = k;
        }
        let features = perm.iter().flat_map(|&old| self.row(old).iter().copied()).collect();
        let preds = perm
            .iter()
            .map(|&old| self.preds[old].iter().map(|&p| inv[p]).collect())
            .collect();
        TaskGraph::from_parts(features, preds, self.norms)
    }
}

pub fn build_task_graph(problem: &Problem, assigned: &[bool]) -> TaskGraph {
    let m = problem.n_tasks();
    let nn = problem.n_nodes().max(1) as f64;
    let mean_dur: Vec<f64> = (0..m)
        .map(|t| (0..problem.n_nodes()).map(|n| problem.duration(t, n)).sum::<f64>() / nn)
        .collect();
    let fold_max = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0, f64::max);
    let norms = FeatureNorms {
        max_cores: safe(fold_max(&mut (0..m).map(|t| problem.task(t).cores as f64))),
        max_memory: safe(fold_max(&mut (0..m).map(|t| problem.task(t).memory_required))),
        max_duration: safe(fold_max(&mut mean_dur.iter().copied())),
        max_in: safe(fold_max(&mut (0..m).map(|t| problem.preds(t).len() as f64))),
        max_out: safe(fold_max(&mut (0..m).map(|t| problem.succs(t).len() as f64))),
    };
    let mut features = vec![0.0; m * FEATURE_DIM];
    for t in 0..m {
        let task = problem.task(t);
        let row = &mut features[t * FEATURE_DIM..(t + 1) * FEATURE_DIM];
        row[0] = task.cores as f64 / norms.max_cores;
        row[1] = task.memory_required / norms.max_memory;
        row[2] = mean_dur[t] / norms.max_duration;
        for f in &task.features {
            match TAGS.iter().position(|tag| tag == f) {
                Some(k) => row[3 + k] = 1.0,
                None => row[11] = 1.0,
            }
        }
        row[ASSIGNED] = if assigned[t] { 1.0 } else { 0.0 };
        row[13] = problem.preds(t).len() as f64 / norms.max_in;
        row[14] = problem.succs(t).len() as f64 / norms.max_out;
    }
    let preds = (0..m).map(|t| problem.preds(t).to_vec()).collect();
    TaskGraph::from_parts(features, preds, norms)
}

/// Encoder weights. Layer `l` holds `W_self`, `W_fwd`, `W_bwd` (each `hidden x in_l`,
/// row-major) followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub data: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(input_dim: usize, hidden: usize, layers: usize) -> Self {
        let mut p = EncoderParams {
            input_dim,
            hidden,
            layers,
            data: Vec::new(),
        };
        p.data = vec![0.0; p.expected_len()];
        p
    }

    fn in_dim(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim
        } else {
            self.hidden
        }
    }

    fn layer_len(&self, l: usize) -> usize {
        3 * self.hidden * self.in_dim(l) + self.hidden
    }

    pub fn expected_len(&self) -> usize {
        (0..self.layers).map(|l| self.layer_len(l)).sum()
    }

    fn layer_offset(&self, l: usize) -> usize {
        (0..l).map(|k| self.layer_len(k)).sum()
    }

    /// `(W_self, W_fwd, W_bwd, b)` slices of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (o, w) = (self.layer_offset(l), self.hidden * self.in_dim(l));
        let d = &self.data;
        (
            &d[o..o + w],
            &d[o + w..o + 2 * w],
            &d[o + 2 * w..o + 3 * w],
            &d[o + 3 * w..o + 3 * w + self.hidden],
        )
    }
}

/// Uniform in `±1/sqrt(fan_in)` for every weight and bias.
pub fn init_params(seed: u64, input_dim: usize, hidden: usize, layers: usize) -> EncoderParams {
    assert!(input_dim >= 1 && hidden >= 1 && layers >= 1, "dimensions must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = EncoderParams::zeros(input_dim, hidden, layers);
    let mut o = 0;
    for l in 0..layers {
        let len = p.layer_len(l);
        let bound = 1.0 / (p.in_dim(l) as f64).sqrt();
        uniform_fill(&mut rng, &mut p.data[o..o + len], bound);
        o += len;
    }
    p
}

fn mean_into(rows: &[f64], dim: usize, idx: &[usize], out: &mut [f64]) {
    out.fill(0.0);
    for &j in idx {
        for (o, x) in out.iter_mut().zip(&rows[j * dim..(j + 1) * dim]) {
            *o += x;
        }
    }
    let k = idx.len() as f64;
    for o in out.iter_mut() {
        *o /= k;
    }
}

struct Scratch {
    fwd: Vec<f64>,
    bwd: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Scratch {
            fwd: vec![0.0; dim],
            bwd: vec![0.0; dim],
        }
    }
}

fn layer_row(
    params: &EncoderParams,
    l: usize,
    input: &[f64],
    graph: &TaskGraph,
    i: usize,
    scratch: &mut Scratch,
    out: &mut [f64],
) {
    let d = params.in_dim(l);
    let (ws, wf, wb, b) = params.layer(l);
    out.copy_from_slice(b);
    matvec_acc(ws, &input[i * d..(i + 1) * d], out);
    let preds = graph.preds(i);
    if !preds.is_empty() {
        mean_into(input, d, preds, &mut scratch.fwd[..d]);
        matvec_acc(wf, &scratch.fwd[..d], out);
    }
    let succs = graph.succs(i);
    if !succs.is_empty() {
        mean_into(input, d, succs, &mut scratch.bwd[..d]);
        matvec_acc(wb, &scratch.bwd[..d], out);
    }
    for o in out.iter_mut() {
        *o = o.tanh();
    }
}

fn check(graph: &TaskGraph, params: &EncoderParams) -> Result<(), NnError> {
    if params.input_dim != FEATURE_DIM || params.data.len() != params.expected_len() {
        return Err(NnError::ShapeMismatch {
            expected: format!("encoder input {FEATURE_DIM}, {} weights", params.expected_len()),
            found: format!("encoder input {}, {} weights", params.input_dim, params.data.len()),
        });
    }
    debug_assert_eq!(graph.features.len(), graph.n_tasks() * FEATURE_DIM);
    Ok(())
}

/// Activations of every layer, row-major `M x hidden` each.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderTrace {
    pub outputs: Vec<Vec<f64>>,
    pub hidden: usize,
}

impl EncoderTrace {
    pub fn embedding(&self) -> &[f64] {
        self.outputs.last().map_or(&[], Vec::as_slice)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.embedding()[i * self.hidden..(i + 1) * self.hidden]
    }
}

pub fn embed(graph: &TaskGraph, params: &EncoderParams) -> Result<EncoderTrace, NnError> {
    check(graph, params)?;
    let (m, h) = (graph.n_tasks(), params.hidden);
    let mut scratch = Scratch::new(FEATURE_DIM.max(h));
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(params.layers);
    for l in 0..params.layers {
        let mut out = vec![0.0; m * h];
        let input = if l == 0 { graph.features() } else { &outputs[l - 1] };
        for i in 0..m {
            layer_row(params, l, input, graph, i, &mut scratch, &mut out[i * h..(i + 1) * h]);
        }
        outputs.push(out);
    }
    Ok(EncoderTrace { outputs, hidden: h })
}

/// Accumulates into `grad` the gradient of a loss whose derivative with respect to
/// the final embedding is `d_emb`.
pub fn embed_backward(
    graph: &TaskGraph,
    params: &EncoderParams,
    trace: &EncoderTrace,
    d_emb: &[f64],
    grad: &mut [f64],
) {
    let (m, h) = (graph.n_tasks(), params.hidden);
    let mut d_out = d_emb.to_vec();
    let mut agg = vec![0.0; FEATURE_DIM.max(h)];
    let mut tmp = vec![0.0; FEATURE_DIM.max(h)];
    for l in (0..params.layers).rev() {
        let d = params.in_dim(l);
        let (ws, wf, wb, _) = params.layer(l);
        let o = params.layer_offset(l);
        let w = h * d;
        let input: &[f64] = if l == 0 { graph.features() } else { &trace.outputs[l - 1] };
        let out = &trace.outputs[l];
        let mut d_in = vec![0.0; if l > 0 { m * d } else { 0 }];
        for i in 0..m {
            let da: Vec<f64> = (0..h)
                .map(|k| d_out[i * h + k] * (1.0 - out[i * h + k] * out[i * h + k]))
                .collect();
            if da.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (g, v) in grad[o + 3 * w..o + 3 * w + h].iter_mut().zip(&da) {
                *g += v;
            }
            let x = &input[i * d..(i + 1) * d];
            let (gs, rest) = grad[o..o + 3 * w].split_at_mut(w);
            let (gf, gb) = rest.split_at_mut(w);
            if l > 0 {
                matvec_backward(ws, x, &da, gs, Some(&mut d_in[i * d..(i + 1) * d]));
            } else {
                matvec_backward(ws, x, &da, gs, None);
            }
            for (idx, wmat, gmat) in [(graph.preds(i), wf, &mut *gf), (graph.succs(i), wb, &mut *gb)] {
                if idx.is_empty() {
                    continue;
                }
                mean_into(input, d, idx, &mut agg[..d]);
                tmp[..d].fill(0.0);
                matvec_backward(wmat, &agg[..d], &da, gmat, Some(&mut tmp[..d]));
                if l > 0 {
                    let k = idx.len() as f64;
                    for &j in idx {
                        for (t, v) in d_in[j * d..(j + 1) * d].iter_mut().zip(&tmp[..d]) {
                            *t += v / k;
                        }
                    }
                }
            }
        }
        d_out = d_in;
    }
}

/// Keeps per-layer activations and recomputes only rows reachable from changed
/// inputs. Results are bitwise equal to [`embed`].
#[derive(Debug, Clone)]
pub struct IncrementalEncoder {
    trace: EncoderTrace,
    dirty: Vec<bool>,
    scratch_rows: Vec<usize>,
}

impl IncrementalEncoder {
    pub fn new(graph: &TaskGraph, params: &EncoderParams) -> Result<Self, NnError> {
        Ok(IncrementalEncoder {
            trace: embed(graph, params)?,
            dirty: vec![false; graph.n_tasks()],
            scratch_rows: Vec::new(),
        })
    }

    pub fn trace(&self) -> &EncoderTrace {
        &self.trace
    }

    pub fn embedding(&self) -> &[f64] {
        self.trace.embedding()
    }

    /// Refreshes after the input rows in `changed` were modified.
    pub fn update(&mut self, graph: &TaskGraph, params: &EncoderParams, changed: &[usize]) {
        let h = params.hidden;
        let mut scratch = Scratch::new(FEATURE_DIM.max(h));
        let mut rows: Vec<usize> = changed.to_vec();
        for &i in &rows {
            self.dirty[i] = true;
        }
        let mut out = vec![0.0; h];
        for l in 0..params.layers {
            // Rows of layer l that read any changed row of layer l - 1.
            self.scratch_rows.clear();
            for &i in &rows {
                for &j in graph.preds(i).iter().chain(graph.succs(i)) {
                    if !self.dirty[j] {
                        self.dirty[j] = true;
                        self.scratch_rows.push(j);
                    }
                }
            }
            rows.extend_from_slice(&self.scratch_rows);
            let (before, after) = self.trace.outputs.split_at_mut(l);
            let input: &[f64] = if l == 0 { graph.features() } else { &before[l - 1] };
            for &i in &rows {
                layer_row(params, l, input, graph, i, &mut scratch, &mut out);
                after[0][i * h..(i + 1) * h].copy_from_slice(&out);
            }
        }
        for &i in &rows {
            self.dirty[i] = false;
        }
    }
}
