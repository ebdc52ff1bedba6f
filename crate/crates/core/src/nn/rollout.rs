//! Drives the environment for a policy: builds observations incrementally and runs
//! greedy inference.

use super::gnn::{build_task_graph, IncrementalEncoder, TaskGraph};
use super::policy::{
    greedy_action, policy_forward, Observation, PolicyModel, NODE_FEATURES, PAIR_FEATURES,
    READY_SLOTS,
};
use super::NnError;
use crate::env::{EnvConfig, EnvError, SchedEnv, StepResult};
use crate::model::{Schedule, System, Workflow};
use crate::problem::Problem;

/// An environment plus the cached policy inputs that change little per step:
/// embeddings (only rows near the newly assigned task are recomputed) and pair
/// features (only the column of the node that received a task is refreshed).
#[derive(Debug, Clone)]
pub struct Rollout<'m> {
    model: &'m PolicyModel,
    env: SchedEnv,
    base_graph: TaskGraph,
    graph: TaskGraph,
    encoder: IncrementalEncoder,
    time_scale: f64,
    max_duration: f64,
    node_static: Vec<f64>,
    frontier: Vec<f64>,
    pairs: Vec<Vec<Option<[f64; PAIR_FEATURES]>>>,
}

fn positive(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        1.0
    }
}

impl<'m> Rollout<'m> {
    pub fn new(model: &'m PolicyModel, problem: Problem, config: EnvConfig) -> Result<Self, NnError> {
        model.check_shape(&problem)?;
        let (m, n) = (problem.n_tasks(), problem.n_nodes());
        let base_graph = build_task_graph(&problem, &vec![false; m]);
        let encoder = IncrementalEncoder::new(&base_graph, &model.encoder)?;

        let mean: Vec<f64> = (0..m)
            .map(|t| (0..n).map(|j| problem.duration(t, j)).sum::<f64>() / n as f64)
            .collect();
        let time_scale =
            positive(mean.iter().sum::<f64>() / n as f64 + mean.iter().copied().fold(0.0, f64::max));
        let max_duration = positive(
            (0..m)
                .flat_map(|t| (0..n).map(move |j| (t, j)))
                .map(|(t, j)| problem.duration(t, j))
                .fold(0.0, f64::max),
        );
        let sys = problem.system();
        let col_max = |f: &dyn Fn(usize) -> f64| positive((0..n).map(f).fold(0.0, f64::max));
        let maxima = [
            col_max(&|j| sys.node_at(j).cores as f64),
            col_max(&|j| sys.node_at(j).memory),
            col_max(&|j| sys.node_at(j).processing_speed),
            col_max(&|j| sys.node_at(j).data_transfer_rate),
        ];
        let node_static = (0..n)
            .flat_map(|j| {
                let node = sys.node_at(j);
                [
                    node.cores as f64 / maxima[0],
                    node.memory / maxima[1],
                    node.processing_speed / maxima[2],
                    node.data_transfer_rate / maxima[3],
                ]
            })
            .collect();

        let env = SchedEnv::from_problem(problem, config)?;
        let mut r = Rollout {
            model,
            env,
            graph: base_graph.clone(),
            base_graph,
            encoder,
            time_scale,
            max_duration,
            node_static,
            frontier: vec![0.0; n],
            pairs: vec![Vec::new(); m],
        };
        r.refresh_ready_rows();
        Ok(r)
    }

    pub fn reset(&mut self) {
        self.env.reset();
        self.graph = self.base_graph.clone();
        self.encoder = IncrementalEncoder::new(&self.graph, &self.model.encoder)
            .expect("shape checked at construction");
        self.frontier.fill(0.0);
        self.pairs.iter_mut().for_each(Vec::clear);
        self.refresh_ready_rows();
    }

    pub fn env(&self) -> &SchedEnv {
        &self.env
    }

    /// Task graph with all assigned flags cleared.
    pub fn base_graph(&self) -> &TaskGraph {
        &self.base_graph
    }

    pub fn embedding(&self) -> &[f64] {
        self.encoder.embedding()
    }

    fn pair(&self, t: usize, j: usize) -> Option<[f64; PAIR_FEATURES]> {
        if !self.env.is_valid(t, j) {
            return None;
        }
        let d = self.env.problem().duration(t, j);
        let start = self.env.earliest_feasible_start(t, j)?;
        Some([d / self.max_duration, (start + d) / self.time_scale])
    }

    fn refresh_ready_rows(&mut self) {
        let n = self.env.problem().n_nodes();
        let fresh: Vec<usize> = self
            .env
            .ready_tasks()
            .iter()
            .copied()
            .filter(|&t| self.pairs[t].is_empty())
            .collect();
        for t in fresh {
            self.pairs[t] = (0..n).map(|j| self.pair(t, j)).collect();
        }
    }

    pub fn observe(&self) -> Observation {
        let p = self.env.problem();
        let (m, n) = (p.n_tasks(), p.n_nodes());
        let mut ready = self.env.ready_tasks().to_vec();
        ready.sort_unstable();
        let assigned = self.env.state().assigned.clone();
        let mut prefix: Vec<f64> = assigned.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
        prefix.extend(self.frontier.iter().map(|f| f / self.time_scale));
        let mut node_feats = Vec::with_capacity(n * NODE_FEATURES);
        for j in 0..n {
            node_feats.extend_from_slice(&self.node_static[j * 4..(j + 1) * 4]);
            node_feats.push(self.frontier[j] / self.time_scale);
        }
        let mut actions = Vec::with_capacity(ready.len() * n);
        let mut pair_feats = Vec::with_capacity(ready.len() * n);
        for &t in &ready {
            for (j, phi) in self.pairs[t].iter().enumerate() {
                if let Some(phi) = phi {
                    actions.push((t, j));
                    pair_feats.push(*phi);
                }
            }
        }
        debug_assert!(actions.iter().all(|&(t, j)| t < m && self.env.is_valid(t, j)));
        Observation {
            assigned,
            prefix,
            slots: ready.into_iter().take(READY_SLOTS).collect(),
            node_feats,
            actions,
            pair_feats,
        }
    }

    /// Steps the environment and refreshes caches after a valid placement.
    pub fn apply(&mut self, task: usize, node: usize) -> Result<StepResult, NnError> {
        let result = self.env.step(task, node)?;
        if result.info.is_valid() {
            self.graph.set_assigned(task, true);
            self.encoder.update(&self.graph, &self.model.encoder, &[task]);
            self.frontier[node] = self.env.state().books[node].frontier();
            self.pairs[task].clear();
            let ready: Vec<usize> = self.env.ready_tasks().to_vec();
            for t in ready {
                if !self.pairs[t].is_empty() {
                    self.pairs[t][node] = self.pair(t, node);
                }
            }
            self.refresh_ready_rows();
        }
        Ok(result)
    }

    /// Argmax rollout from the current state to completion.
    pub fn run_greedy(&mut self) -> Result<Schedule, NnError> {
        while !self.env.is_done() {
            let obs = self.observe();
            if obs.actions.is_empty() {
                return Err(incomplete(&self.env));
            }
            let fwd = policy_forward(self.model, &obs, self.encoder.embedding(), false);
            let a = greedy_action(&fwd.logits).expect("nonempty");
            let (t, j) = obs.actions[a];
            self.apply(t, j)?;
        }
        Ok(self.env.extract_schedule()?)
    }
}

fn incomplete(env: &SchedEnv) -> NnError {
    NnError::Env(EnvError::IncompleteEpisode {
        assigned: env.n_assigned(),
        total: env.problem().n_tasks(),
    })
}

/// Greedy masked inference: at each step the highest-scoring valid action.
pub fn infer_schedule(
    model: &PolicyModel,
    system: &System,
    workflow: &Workflow,
    env_config: &EnvConfig,
) -> Result<Schedule, NnError> {
    let problem = Problem::new(system, workflow);
    let mut rollout = Rollout::new(model, problem, env_config.clone())?;
    rollout.run_greedy()
}
