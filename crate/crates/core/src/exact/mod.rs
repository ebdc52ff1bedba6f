//! Exact solving over list schedules.
//!
//! The search space is every way to build a schedule by repeatedly picking a ready
//! task and a node and placing the task at its earliest feasible start on that node
//! (capacity-aware, gaps may be backfilled, transfer delays apply across nodes).
//! [`solve_exact`] explores it with depth-first branch-and-bound;
//! [`brute_force_oracle`] enumerates it exhaustively for small instances.

mod oracle;

use std::collections::HashSet;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use oracle::{brute_force_oracle, OracleError, ORACLE_MAX_NODES, ORACLE_MAX_TASKS};

use crate::book::{Interval, NodeBook};
use crate::model::{Method, Schedule, ScheduleEntry, System, Workflow};
use crate::problem::Problem;

/// Weights of `alpha * sum(usage) + beta * makespan`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            alpha: 0.0,
            beta: 1.0,
        }
    }
}

impl ObjectiveWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ExactError> {
        if !(alpha >= 0.0 && beta >= 0.0 && alpha + beta > 0.0) {
            return Err(ExactError::BadWeights { alpha, beta });
        }
        Ok(ObjectiveWeights { alpha, beta })
    }
}

pub const DEFAULT_TIME_LIMIT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// The time limit hit first; the schedule is the best found, optimality unproven.
    TimedOut,
}

#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub schedule: Schedule,
    pub objective: f64,
    pub status: SolveStatus,
    pub nodes_explored: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExactError {
    #[error("infeasible: task {task:?} fits no node")]
    Infeasible { task: String },
    #[error("objective weights must be non-negative with a positive sum (alpha={alpha}, beta={beta})")]
    BadWeights { alpha: f64, beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub node: usize,
    pub start: f64,
    pub end: f64,
}

/// A partial list schedule: a prefix of placements plus the node books they fill.
#[derive(Debug, Clone)]
pub struct SearchNode<'p> {
    problem: &'p Problem,
    books: Vec<NodeBook>,
    placed: Vec<Option<Placement>>,
    stack: Vec<usize>,
    makespans: Vec<f64>,
    missing: Vec<usize>,
}

impl<'p> SearchNode<'p> {
    pub fn new(problem: &'p Problem) -> Self {
        SearchNode {
            problem,
            books: vec![NodeBook::new(); problem.n_nodes()],
            placed: vec![None; problem.n_tasks()],
            stack: Vec::with_capacity(problem.n_tasks()),
            makespans: vec![0.0],
            missing: (0..problem.n_tasks()).map(|t| problem.preds(t).len()).collect(),
        }
    }

    pub fn problem(&self) -> &'p Problem {
        self.problem
    }

    pub fn placement(&self, t: usize) -> Option<Placement> {
        self.placed[t]
    }

    pub fn is_complete(&self) -> bool {
        self.stack.len() == self.problem.n_tasks()
    }

    pub fn makespan(&self) -> f64 {
        *self.makespans.last().unwrap()
    }

    /// Unplaced tasks whose predecessors are all placed, ascending index.
    pub fn ready_tasks(&self) -> Vec<usize> {
        (0..self.problem.n_tasks())
            .filter(|&t| self.placed[t].is_none() && self.missing[t] == 0)
            .collect()
    }

    /// Earliest start of ready task `t` on node `n`, or `None` when it does not fit.
    pub fn earliest(&self, t: usize, n: usize) -> Option<Placement> {
        let p = self.problem;
        if !p.fits(t, n) {
            return None;
        }
        let ready = p
            .preds(t)
            .iter()
            .map(|&q| {
                let pl = self.placed[q].expect("predecessor placed");
                pl.end + p.transfer(q, pl.node, n)
            })
            .fold(0.0, f64::max);
        let task = p.task(t);
        let duration = p.duration(t, n);
        let start = self.books[n].earliest_start(
            ready,
            duration,
            task.cores,
            task.memory_required,
            p.capacity(n),
        )?;
        Some(Placement {
            node: n,
            start,
            end: start + duration,
        })
    }

    pub fn place(&mut self, t: usize, pl: Placement) {
        let task = self.problem.task(t);
        self.books[pl.node].insert(Interval {
            start: pl.start,
            end: pl.end,
            cores: task.cores,
            memory: task.memory_required,
        });
        self.placed[t] = Some(pl);
        self.stack.push(t);
        self.makespans.push(self.makespan().max(pl.end));
        for &s in self.problem.succs(t) {
            self.missing[s] -= 1;
        }
    }

    /// Reverts the most recent placement.
    pub fn undo(&mut self) {
        let t = self.stack.pop().expect("nothing to undo");
        let pl = self.placed[t].take().unwrap();
        self.books[pl.node].pop();
        self.makespans.pop();
        for &s in self.problem.succs(t) {
            self.missing[s] += 1;
        }
    }

    fn key(&self) -> Box<[u64]> {
        self.placed
            .iter()
            .flat_map(|p| match p {
                Some(pl) => [pl.node as u64, pl.start.to_bits()],
                None => [u64::MAX, 0],
            })
            .collect()
    }

    fn to_schedule(&self) -> Schedule {
        let p = self.problem;
        Schedule::from_entries(
            self.placed.iter().enumerate().map(|(t, pl)| {
                let pl = pl.expect("complete");
                ScheduleEntry {
                    task_id: p.task(t).id.clone(),
                    node_id: p.system().node_at(pl.node).id.clone(),
                    start: pl.start,
                    end: pl.end,
                }
            }),
            Method::Exact,
        )
    }
}

/// Admissible makespan bound for any completion of `node`: the larger of the current
/// makespan, a critical-path bound over unplaced tasks (minimum duration per task,
/// transfers from placed predecessors), and total core-time over total cores.
pub fn lower_bound(node: &SearchNode<'_>) -> f64 {
    let p = node.problem;
    let mut bound = node.makespan();

    let mut finish = vec![0.0; p.n_tasks()];
    for &t in p.topo() {
        if let Some(pl) = node.placed[t] {
            finish[t] = pl.end;
            continue;
        }
        let mut best = f64::INFINITY;
        for n in (0..p.n_nodes()).filter(|&n| p.fits(t, n)) {
            let ready = p
                .preds(t)
                .iter()
                .map(|&q| match node.placed[q] {
                    Some(pl) => pl.end + p.transfer(q, pl.node, n),
                    None => finish[q],
                })
                .fold(0.0, f64::max);
            best = best.min(ready + p.duration(t, n));
        }
        finish[t] = best;
        bound = bound.max(best);
    }

    let total_cores: u64 = p.system().nodes().map(|n| n.cores as u64).sum();
    if total_cores > 0 {
        let work: f64 = (0..p.n_tasks())
            .map(|t| {
                let d = match node.placed[t] {
                    Some(pl) => pl.end - pl.start,
                    None => p.min_duration(t),
                };
                p.task(t).cores as f64 * d
            })
            .sum();
        bound = bound.max(work / total_cores as f64);
    }
    bound
}

const SEEN_CAP: usize = 400_000;

struct Search<'p> {
    deadline: Instant,
    timed_out: bool,
    explored: u64,
    best: Option<(f64, Schedule)>,
    seen: HashSet<Box<[u64]>>,
    stop_at_first: bool,
    _p: std::marker::PhantomData<&'p ()>,
}

impl<'p> Search<'p> {
    fn out_of_time(&mut self) -> bool {
        if self.timed_out {
            return true;
        }
        if self.explored.is_multiple_of(512) && self.best.is_some() && Instant::now() >= self.deadline {
            self.timed_out = true;
        }
        self.timed_out
    }

    fn dfs(&mut self, node: &mut SearchNode<'p>) {
        self.explored += 1;
        if node.is_complete() {
            let m = node.makespan();
            if self.best.as_ref().is_none_or(|(b, _)| m < *b) {
                self.best = Some((m, node.to_schedule()));
            }
            return;
        }
        if self.out_of_time() {
            return;
        }
        if let Some((b, _)) = &self.best {
            if self.stop_at_first || lower_bound(node) >= *b {
                return;
            }
        }
        if self.seen.len() < SEEN_CAP && !self.seen.insert(node.key()) {
            return;
        }
        let mut children: Vec<(usize, Placement)> = node
            .ready_tasks()
            .into_iter()
            .flat_map(|t| (0..node.problem.n_nodes()).map(move |n| (t, n)))
            .filter_map(|(t, n)| node.earliest(t, n).map(|pl| (t, pl)))
            .collect();
        children.sort_by(|a, b| a.1.end.total_cmp(&b.1.end));
        for (t, pl) in children {
            node.place(t, pl);
            self.dfs(node);
            node.undo();
            if self.timed_out {
                return;
            }
        }
    }
}

/// Minimizes `alpha * sum(cores) + beta * makespan` over list schedules.
///
/// The usage term is the same for every complete assignment, so with `beta > 0` the
/// search minimizes makespan and with `beta == 0` the first complete schedule is
/// optimal.
pub fn solve_exact(
    system: &System,
    workflow: &Workflow,
    weights: ObjectiveWeights,
    time_limit: Duration,
) -> Result<ExactSolution, ExactError> {
    let problem = Problem::new(system, workflow);
    solve_problem(&problem, weights, time_limit)
}

pub fn solve_problem(
    problem: &Problem,
    weights: ObjectiveWeights,
    time_limit: Duration,
) -> Result<ExactSolution, ExactError> {
    if let Some(t) = problem.unplaceable_task() {
        return Err(ExactError::Infeasible {
            task: problem.task(t).id.clone(),
        });
    }
    let usage: f64 = (0..problem.n_tasks()).map(|t| problem.task(t).cores as f64).sum();
    let mut search = Search {
        deadline: Instant::now() + time_limit,
        timed_out: false,
        explored: 0,
        best: None,
        seen: HashSet::new(),
        stop_at_first: weights.beta == 0.0,
        _p: std::marker::PhantomData,
    };
    let mut root = SearchNode::new(problem);
    search.dfs(&mut root);
    let (makespan, schedule) = search.best.expect("a feasible instance has a list schedule");
    Ok(ExactSolution {
        schedule,
        objective: weights.alpha * usage + weights.beta * makespan,
        status: if search.timed_out {
            SolveStatus::TimedOut
        } else {
            SolveStatus::Optimal
        },
        nodes_explored: search.explored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Node, Task};
    use crate::validate::validate_schedule;

    fn unit_nodes(k: usize, cores: u32) -> System {
        System::new((0..k).map(|i| Node::new(format!("n{i}"), cores, 16.0)).collect()).unwrap()
    }

    #[test]
    fn single_task() {
        let w = Workflow::new("w", vec![Task::new("A", 10.0)]).unwrap();
        let s = solve_exact(&unit_nodes(1, 4), &w, ObjectiveWeights::default(), DEFAULT_TIME_LIMIT)
            .unwrap();
        assert_eq!(s.schedule.makespan, 10.0);
        assert_eq!(s.status, SolveStatus::Optimal);
    }

    #[test]
    fn infeasible_feature() {
        let system = System::new(vec![Node::new("a", 4, 4.0).with_features(["F1"])]).unwrap();
        let w = Workflow::new("w", vec![Task::new("A", 1.0).with_features(["F9"])]).unwrap();
        let err = solve_exact(&system, &w, ObjectiveWeights::default(), DEFAULT_TIME_LIMIT)
            .unwrap_err();
        assert_eq!(err, ExactError::Infeasible { task: "A".into() });
    }

    #[test]
    fn weights_are_checked() {
        assert!(ObjectiveWeights::new(0.0, 0.0).is_err());
        assert!(ObjectiveWeights::new(-1.0, 1.0).is_err());
        assert!(ObjectiveWeights::new(0.5, 0.0).is_ok());
    }

    #[test]
    fn avoids_transfer_when_cheaper() {
        // B waits 10 for the transfer if it runs elsewhere; staying is faster.
        let system = System::new(vec![
            Node::new("a", 1, 4.0).with_transfer_rate(1.0),
            Node::new("b", 1, 4.0).with_transfer_rate(1.0),
        ])
        .unwrap();
        let w = Workflow::new(
            "w",
            vec![
                Task::new("A", 2.0).with_data(10.0),
                Task::new("B", 2.0).after(["A"]),
                Task::new("C", 2.0).after(["A"]),
            ],
        )
        .unwrap();
        let s = solve_exact(&system, &w, ObjectiveWeights::default(), DEFAULT_TIME_LIMIT).unwrap();
        assert_eq!(s.schedule.makespan, 6.0);
        assert!(validate_schedule(&s.schedule, &w, &system).unwrap().is_clean());
    }

    #[test]
    fn bound_at_leaf_is_the_makespan() {
        let w = Workflow::new("w", vec![Task::new("A", 3.0), Task::new("B", 5.0).after(["A"])])
            .unwrap();
        let problem = Problem::new(&unit_nodes(2, 1), &w);
        let mut node = SearchNode::new(&problem);
        assert!(lower_bound(&node) >= 8.0);
        let pl = node.earliest(0, 0).unwrap();
        node.place(0, pl);
        let pl = node.earliest(1, 1).unwrap();
        node.place(1, pl);
        assert!(node.is_complete());
        assert_eq!(lower_bound(&node), node.makespan());
    }

    #[test]
    fn work_bound() {
        let w = Workflow::new("w", (0..10).map(|i| Task::new(format!("T{i}"), 1.0)).collect())
            .unwrap();
        let problem = Problem::new(&unit_nodes(2, 1), &w);
        assert!(lower_bound(&SearchNode::new(&problem)) >= 5.0);
        let s = solve_problem(&problem, ObjectiveWeights::default(), DEFAULT_TIME_LIMIT).unwrap();
        assert_eq!(s.schedule.makespan, 5.0);
    }

    #[test]
    fn beta_zero_returns_first_feasible() {
        let w = Workflow::new("w", (0..4).map(|i| Task::new(format!("T{i}"), 1.0).with_cores(2)).collect())
            .unwrap();
        let s = solve_exact(
            &unit_nodes(2, 4),
            &w,
            ObjectiveWeights::new(1.0, 0.0).unwrap(),
            DEFAULT_TIME_LIMIT,
        )
        .unwrap();
        assert_eq!(s.objective, 8.0);
        assert_eq!(s.status, SolveStatus::Optimal);
    }

    #[test]
    fn zero_time_limit_still_returns_an_incumbent() {
        let bundle = crate::ingest::generate_synthetic(3, 30, 1);
        let s = solve_exact(
            &bundle.system,
            &bundle.workflows[0],
            ObjectiveWeights::default(),
            Duration::ZERO,
        )
        .unwrap();
        assert_eq!(s.status, SolveStatus::TimedOut);
        assert_eq!(s.schedule.len(), 30);
        let report = validate_schedule(&s.schedule, &bundle.workflows[0], &bundle.system).unwrap();
        assert!(report.is_clean(), "{:?}", report.violations);
    }
}
