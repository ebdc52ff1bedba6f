//! Single-environment scheduling MDP.
//!
//! An action is a `(task, node)` pair. Valid actions place the task at its earliest
//! feasible start on the node (the same placement rule the exact solver branches on);
//! invalid ones are penalized and change nothing but the step counter.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::book::{Interval, NodeBook};
use crate::model::{Method, Schedule, ScheduleEntry, System, Workflow};
use crate::problem::Problem;

/// Reward constants. Penalties are stored as the (negative) amount added.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConstants {
    pub already_assigned: f64,
    pub dependency: f64,
    pub feature: f64,
    pub concurrency: f64,
    pub timeout_base: f64,
    pub timeout_per_task: f64,
    pub success_base: f64,
    pub completion_base: f64,
    /// Multiplier on `1 - task.cores / node.cores`.
    pub resource_weight: f64,
}

impl Default for RewardConstants {
    fn default() -> Self {
        RewardConstants {
            already_assigned: -5.0,
            dependency: -20.0,
            feature: -5.0,
            concurrency: -5.0,
            timeout_base: -50.0,
            timeout_per_task: -10.0,
            success_base: 15.0,
            completion_base: 30.0,
            resource_weight: 1.0,
        }
    }
}

/// Whether duration and makespan terms are divided by the mean task duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardNorm {
    /// Normalize when the mean duration exceeds the success constant.
    #[default]
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// `None` means four times the task count.
    pub max_steps: Option<u64>,
    pub rewards: RewardConstants,
    /// Include transfer delays from predecessors on other nodes.
    pub dtt: bool,
    pub reward_norm: RewardNorm,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            max_steps: None,
            rewards: RewardConstants::default(),
            dtt: true,
            reward_norm: RewardNorm::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("action ({task}, {node}) out of range for {tasks} tasks x {nodes} nodes")]
    IndexOutOfRange {
        task: usize,
        node: usize,
        tasks: usize,
        nodes: usize,
    },
    #[error("max_steps {max_steps} is below the task count {tasks}")]
    StepBudget { max_steps: u64, tasks: usize },
    #[error("episode is over; call reset")]
    EpisodeOver,
    #[error("episode incomplete: {assigned} of {total} tasks assigned")]
    IncompleteEpisode { assigned: usize, total: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub node: usize,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub assigned: Vec<bool>,
    pub books: Vec<NodeBook>,
    pub assignments: Vec<Option<Assignment>>,
    pub makespan: f64,
    pub current_step: u64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepInfo {
    Assigned { node: usize, start: f64, end: f64 },
    AlreadyAssigned,
    DependencyUnmet,
    FeatureMismatch,
    Capacity,
    Timeout { unassigned: usize },
}

impl StepInfo {
    pub fn is_valid(&self) -> bool {
        matches!(self, StepInfo::Assigned { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub step: u64,
    pub action: (usize, usize),
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
pub struct SchedEnv {
    problem: Problem,
    config: EnvConfig,
    max_steps: u64,
    scale: f64,
    state: EnvState,
    missing: Vec<usize>,
    n_assigned: usize,
    mask: Vec<bool>,
    ready: Vec<usize>,
    load: Vec<f64>,
    trace: Option<Vec<TraceRecord>>,
}

impl SchedEnv {
    pub fn new(system: &System, workflow: &Workflow, config: EnvConfig) -> Result<Self, EnvError> {
        Self::from_problem(Problem::new(system, workflow), config)
    }

    pub fn from_problem(problem: Problem, config: EnvConfig) -> Result<Self, EnvError> {
        let m = problem.n_tasks();
        let max_steps = config.max_steps.unwrap_or(4 * m as u64).max(1);
        if max_steps < m as u64 {
            return Err(EnvError::StepBudget { max_steps, tasks: m });
        }
        let mean = if m == 0 {
            1.0
        } else {
            (0..m).map(|t| problem.task(t).durations.mean()).sum::<f64>() / m as f64
        };
        let normalize = match config.reward_norm {
            RewardNorm::On => true,
            RewardNorm::Off => false,
            RewardNorm::Auto => mean > config.rewards.success_base,
        };
        let scale = if normalize && mean > 0.0 { mean } else { 1.0 };
        let mut env = SchedEnv {
            config,
            max_steps,
            scale,
            state: EnvState {
                assigned: vec![],
                books: vec![],
                assignments: vec![],
                makespan: 0.0,
                current_step: 0,
                done: false,
            },
            missing: vec![],
            n_assigned: 0,
            mask: vec![],
            ready: vec![],
            load: vec![],
            trace: None,
            problem,
        };
        env.reset();
        Ok(env)
    }

    pub fn reset(&mut self) -> &EnvState {
        let p = &self.problem;
        let (m, n) = (p.n_tasks(), p.n_nodes());
        self.state = EnvState {
            assigned: vec![false; m],
            books: vec![NodeBook::new(); n],
            assignments: vec![None; m],
            makespan: 0.0,
            current_step: 0,
            done: m == 0,
        };
        self.missing = (0..m).map(|t| p.preds(t).len()).collect();
        self.n_assigned = 0;
        self.ready = (0..m).filter(|&t| self.missing[t] == 0).collect();
        self.mask = vec![false; m * n];
        for &t in &self.ready {
            for j in 0..n {
                self.mask[t * n + j] = p.fits(t, j);
            }
        }
        self.load = vec![0.0; n];
        if let Some(tr) = &mut self.trace {
            tr.clear();
        }
        &self.state
    }

    /// Starts recording every step; cleared on reset.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Writes the recorded steps as one JSON object per line.
    pub fn write_trace_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for r in self.trace() {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn max_steps(&self) -> u64 {
        self.max_steps
    }

    /// Divisor applied to duration and makespan reward terms.
    pub fn reward_scale(&self) -> f64 {
        self.scale
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.done
    }

    pub fn n_assigned(&self) -> usize {
        self.n_assigned
    }

    /// Unassigned tasks whose dependencies are all assigned, in no particular order.
    pub fn ready_tasks(&self) -> &[usize] {
        &self.ready
    }

    /// Busy core-time per core on each node.
    pub fn node_loads(&self) -> &[f64] {
        &self.load
    }

    /// Row-major `M x N` validity mask.
    pub fn valid_action_mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_valid(&self, task: usize, node: usize) -> bool {
        self.mask[task * self.problem.n_nodes() + node]
    }

    /// Time at which `task`'s inputs are available on `node`. All dependencies must be
    /// assigned.
    pub fn ready_time(&self, task: usize, node: usize) -> f64 {
        let p = &self.problem;
        p.preds(task)
            .iter()
            .map(|&q| {
                let a = self.state.assignments[q].expect("dependency assigned");
                let dtt = if self.config.dtt { p.transfer(q, a.node, node) } else { 0.0 };
                a.end + dtt
            })
            .fold(0.0, f64::max)
    }

    /// Earliest feasible start of `task` on `node`, or `None` when the task alone
    /// exceeds the node's capacity. All dependencies must be assigned.
    pub fn earliest_feasible_start(&self, task: usize, node: usize) -> Option<f64> {
        let p = &self.problem;
        let t = p.task(task);
        self.state.books[node].earliest_start(
            self.ready_time(task, node),
            p.duration(task, node),
            t.cores,
            t.memory_required,
            p.capacity(node),
        )
    }

    pub fn step(&mut self, task: usize, node: usize) -> Result<StepResult, EnvError> {
        let (m, n) = (self.problem.n_tasks(), self.problem.n_nodes());
        if task >= m || node >= n {
            return Err(EnvError::IndexOutOfRange {
                task,
                node,
                tasks: m,
                nodes: n,
            });
        }
        if self.state.done {
            return Err(EnvError::EpisodeOver);
        }
        let result = self.transition(task, node);
        if let Some(tr) = &mut self.trace {
            tr.push(TraceRecord {
                step: self.state.current_step,
                action: (task, node),
                reward: result.reward,
                done: result.done,
                info: result.info,
            });
        }
        Ok(result)
    }

    fn transition(&mut self, task: usize, node: usize) -> StepResult {
        let r = self.config.rewards;
        self.state.current_step += 1;
        if self.state.current_step >= self.max_steps {
            self.state.done = true;
            let unassigned = self.problem.n_tasks() - self.n_assigned;
            return StepResult {
                reward: r.timeout_base + r.timeout_per_task * unassigned as f64,
                done: true,
                info: StepInfo::Timeout { unassigned },
            };
        }
        let penalty = |reward, info| StepResult {
            reward,
            done: false,
            info,
        };
        if self.state.assigned[task] {
            return penalty(r.already_assigned, StepInfo::AlreadyAssigned);
        }
        if self.missing[task] > 0 {
            return penalty(r.dependency, StepInfo::DependencyUnmet);
        }
        if !self.problem.features_ok(task, node) {
            return penalty(r.feature, StepInfo::FeatureMismatch);
        }
        let Some(start) = self.earliest_feasible_start(task, node) else {
            return penalty(r.concurrency, StepInfo::Capacity);
        };

        let p = &self.problem;
        let duration = p.duration(task, node);
        let end = start + duration;
        let t = p.task(task);
        let node_cores = p.system().node_at(node).cores;
        self.state.books[node].insert(Interval {
            start,
            end,
            cores: t.cores,
            memory: t.memory_required,
        });
        if node_cores > 0 {
            self.load[node] += duration * t.cores as f64 / node_cores as f64;
        }
        self.state.assignments[task] = Some(Assignment { node, start, end });
        self.state.assigned[task] = true;
        self.state.makespan = self.state.makespan.max(end);
        self.n_assigned += 1;
        debug_assert!(book_respects_capacity(&self.state.books[node], p.capacity(node)));

        let nn = p.n_nodes();
        self.mask[task * nn..(task + 1) * nn].fill(false);
        if let Some(pos) = self.ready.iter().position(|&x| x == task) {
            self.ready.swap_remove(pos);
        }
        for &s in p.succs(task) {
            self.missing[s] -= 1;
            if self.missing[s] == 0 {
                self.ready.push(s);
                for j in 0..nn {
                    self.mask[s * nn + j] = p.fits(s, j);
                }
            }
        }

        let resource_factor = if node_cores > 0 {
            1.0 - t.cores as f64 / node_cores as f64
        } else {
            0.0
        };
        let mut reward =
            r.success_base - duration / self.scale + r.resource_weight * resource_factor;
        let done = self.n_assigned == p.n_tasks();
        if done {
            self.state.done = true;
            reward += r.completion_base - self.state.makespan / self.scale;
        }
        StepResult {
            reward,
            done,
            info: StepInfo::Assigned { node, start, end },
        }
    }

    pub fn extract_schedule(&self) -> Result<Schedule, EnvError> {
        let p = &self.problem;
        if self.n_assigned < p.n_tasks() {
            return Err(EnvError::IncompleteEpisode {
                assigned: self.n_assigned,
                total: p.n_tasks(),
            });
        }
        Ok(Schedule::from_entries(
            self.state.assignments.iter().enumerate().map(|(t, a)| {
                let a = a.expect("all assigned");
                ScheduleEntry {
                    task_id: p.task(t).id.clone(),
                    node_id: p.system().node_at(a.node).id.clone(),
                    start: a.start,
                    end: a.end,
                }
            }),
            Method::GnnRl,
        ))
    }
}

fn book_respects_capacity(book: &NodeBook, cap: crate::book::Capacity) -> bool {
    book.intervals().iter().all(|iv| {
        let (c, m) = book.usage_at(iv.start);
        c <= cap.cores as u64 && crate::book::within(m, cap.memory)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Node, Task};
    use crate::validate::validate_schedule;
    use rand::seq::IndexedRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain_env() -> SchedEnv {
        let system = System::new(vec![
            Node::new("a", 4, 16.0).with_features(["F1"]),
            Node::new("b", 2, 16.0),
        ])
        .unwrap();
        let w = Workflow::new(
            "w",
            vec![
                Task::new("A", 4.0).with_cores(2),
                Task::new("B", 8.0).with_cores(2).after(["A"]).with_features(["F1"]),
            ],
        )
        .unwrap();
        SchedEnv::new(&system, &w, EnvConfig::default()).unwrap()
    }

    #[test]
    fn reset_state() {
        let mut env = chain_env();
        assert_eq!(env.state().assigned, [false, false]);
        assert_eq!(env.valid_action_mask(), [true, true, false, false]);
        let first = env.state().clone();
        env.step(0, 0).unwrap();
        env.reset();
        assert_eq!(env.state(), &first);
        assert_eq!(env.max_steps(), 8);
    }

    #[test]
    fn penalties_leave_assignments_alone() {
        let mut env = chain_env();
        let r = env.step(1, 0).unwrap();
        assert_eq!((r.reward, r.info), (-20.0, StepInfo::DependencyUnmet));
        let r = env.step(0, 0).unwrap();
        assert_eq!(r.reward, 15.0 - 4.0 + 0.5);
        let before = env.state().assignments.clone();
        let r = env.step(0, 1).unwrap();
        assert_eq!((r.reward, r.info), (-5.0, StepInfo::AlreadyAssigned));
        let r = env.step(1, 1).unwrap();
        assert_eq!((r.reward, r.info), (-5.0, StepInfo::FeatureMismatch));
        assert_eq!(env.state().assignments, before);
        assert_eq!(env.state().current_step, 4);
    }

    #[test]
    fn completion_bonus() {
        let mut env = chain_env();
        env.step(0, 0).unwrap();
        let r = env.step(1, 0).unwrap();
        assert!(r.done);
        assert_eq!(env.state().makespan, 12.0);
        // 15 - 8 + 0.5 for the placement, 30 - 12 for completion.
        assert_eq!(r.reward, 7.5 + 18.0);
        assert_eq!(env.valid_action_mask(), [false; 4]);
        assert_eq!(env.step(0, 0), Err(EnvError::EpisodeOver));
        let s = env.extract_schedule().unwrap();
        assert_eq!(s.method, Method::GnnRl);
        assert_eq!(s.makespan, 12.0);
    }

    #[test]
    fn capacity_penalty() {
        let system = System::new(vec![Node::new("a", 1, 16.0), Node::new("b", 4, 16.0)]).unwrap();
        let w = Workflow::new("w", vec![Task::new("A", 1.0).with_cores(2)]).unwrap();
        let mut env = SchedEnv::new(&system, &w, EnvConfig::default()).unwrap();
        assert_eq!(env.valid_action_mask(), [false, true]);
        let r = env.step(0, 0).unwrap();
        assert_eq!((r.reward, r.info), (-5.0, StepInfo::Capacity));
    }

    #[test]
    fn timeout() {
        let system = System::new(vec![Node::new("a", 4, 16.0)]).unwrap();
        let w = Workflow::new("w", vec![Task::new("A", 1.0), Task::new("B", 1.0)]).unwrap();
        let config = EnvConfig {
            max_steps: Some(2),
            ..EnvConfig::default()
        };
        let mut env = SchedEnv::new(&system, &w, config).unwrap();
        env.step(0, 0).unwrap();
        let r = env.step(0, 0).unwrap();
        assert!(r.done);
        assert_eq!(r.reward, -60.0);
        assert_eq!(r.info, StepInfo::Timeout { unassigned: 1 });
        let bad = EnvConfig {
            max_steps: Some(1),
            ..EnvConfig::default()
        };
        assert!(matches!(
            SchedEnv::new(&system, &w, bad),
            Err(EnvError::StepBudget { .. })
        ));
    }

    #[test]
    fn out_of_range() {
        let mut env = chain_env();
        assert!(matches!(env.step(2, 0), Err(EnvError::IndexOutOfRange { .. })));
        assert_eq!(env.state().current_step, 0);
    }

    #[test]
    fn empty_workflow_is_done() {
        let system = System::new(vec![Node::new("a", 4, 16.0)]).unwrap();
        let w = Workflow::new("w", vec![]).unwrap();
        let env = SchedEnv::new(&system, &w, EnvConfig::default()).unwrap();
        assert!(env.is_done());
        assert_eq!(env.extract_schedule().unwrap().makespan, 0.0);
    }

    #[test]
    fn earliest_start_waits_for_full_node() {
        let system = System::new(vec![Node::new("a", 2, 16.0)]).unwrap();
        let w = Workflow::new("w", vec![Task::new("A", 10.0).with_cores(2), Task::new("B", 1.0)])
            .unwrap();
        let mut env = SchedEnv::new(&system, &w, EnvConfig::default()).unwrap();
        assert_eq!(env.earliest_feasible_start(1, 0), Some(0.0));
        env.step(0, 0).unwrap();
        assert_eq!(env.earliest_feasible_start(1, 0), Some(10.0));
    }

    #[test]
    fn transfer_delay_toggle() {
        let system = System::new(vec![
            Node::new("a", 1, 16.0).with_transfer_rate(2.0),
            Node::new("b", 1, 16.0).with_transfer_rate(4.0),
        ])
        .unwrap();
        let w = Workflow::new(
            "w",
            vec![Task::new("A", 1.0).with_data(6.0), Task::new("B", 1.0).after(["A"])],
        )
        .unwrap();
        let mut env = SchedEnv::new(&system, &w, EnvConfig::default()).unwrap();
        env.step(0, 0).unwrap();
        assert_eq!(env.earliest_feasible_start(1, 1), Some(4.0));
        assert_eq!(env.earliest_feasible_start(1, 0), Some(1.0));
        let off = EnvConfig {
            dtt: false,
            ..EnvConfig::default()
        };
        let mut env = SchedEnv::new(&system, &w, off).unwrap();
        env.step(0, 0).unwrap();
        assert_eq!(env.earliest_feasible_start(1, 1), Some(1.0));
    }

    #[test]
    fn normalization() {
        let system = System::new(vec![Node::new("a", 4, 16.0)]).unwrap();
        let w = Workflow::new("w", vec![Task::new("A", 100.0).with_cores(4)]).unwrap();
        let mut env = SchedEnv::new(&system, &w, EnvConfig::default()).unwrap();
        assert_eq!(env.reward_scale(), 100.0);
        assert_eq!(env.step(0, 0).unwrap().reward, 15.0 - 1.0 + 30.0 - 1.0);
        let raw = EnvConfig {
            reward_norm: RewardNorm::Off,
            ..EnvConfig::default()
        };
        let mut env = SchedEnv::new(&system, &w, raw).unwrap();
        assert_eq!(env.step(0, 0).unwrap().reward, 15.0 - 100.0 + 30.0 - 100.0);
    }

    #[test]
    fn trace_lines() {
        let mut env = chain_env();
        env.enable_trace();
        env.step(1, 0).unwrap();
        env.step(0, 0).unwrap();
        let mut out = Vec::new();
        env.write_trace_jsonl(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            r#"{"step":1,"action":[1,0],"reward":-20.0,"done":false,"info":{"kind":"dependency_unmet"}}"#
        );
    }

    #[test]
    fn random_masked_rollouts_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..30 {
            let b = crate::ingest::generate_synthetic(4, 25, seed);
            let mut env = SchedEnv::new(&b.system, &b.workflows[0], EnvConfig::default()).unwrap();
            let n = env.problem().n_nodes();
            while !env.is_done() {
                let valid: Vec<usize> = (0..env.valid_action_mask().len())
                    .filter(|&i| env.valid_action_mask()[i])
                    .collect();
                let a = *valid.choose(&mut rng).unwrap();
                assert!(env.step(a / n, a % n).unwrap().info.is_valid());
            }
            let s = env.extract_schedule().unwrap();
            let report = validate_schedule(&s, &b.workflows[0], &b.system).unwrap();
            assert!(report.is_clean(), "{:?}", report.violations);
        }
    }
}
