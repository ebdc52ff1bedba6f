//! HEFT and OLB list schedulers.
//!
//! Both keep a single availability frontier per node: a task placed on a node starts
//! no earlier than the node's previous finish time, so tasks never overlap on a node
//! and no gaps are backfilled. Neither models transfer delays. A node is a candidate
//! only when it offers the task's features and can hold its core/memory request.

use indexmap::IndexMap;
use thiserror::Error;

use crate::model::{Method, Schedule, ScheduleEntry, System, Workflow};
use crate::problem::Problem;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeuristicError {
    #[error("task {task:?} fits no node (features or capacity)")]
    InfeasibleTask { task: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HeuristicOptions {
    /// Divide OLB durations by node speed instead of using the raw duration.
    pub olb_speed_scaled: bool,
}

/// Per-task rank, keyed by task id in workflow order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable(pub IndexMap<String, f64>);

impl RankTable {
    pub fn get(&self, task_id: &str) -> Option<f64> {
        self.0.get(task_id).copied()
    }
}

fn check_feasible(problem: &Problem) -> Result<(), HeuristicError> {
    match problem.unplaceable_task() {
        Some(t) => Err(HeuristicError::InfeasibleTask {
            task: problem.task(t).id.clone(),
        }),
        None => Ok(()),
    }
}

fn rank_values(problem: &Problem) -> Vec<f64> {
    let k = problem.n_nodes() as f64;
    let mut rank = vec![0.0; problem.n_tasks()];
    for &t in problem.topo() {
        let avg = (0..problem.n_nodes()).map(|n| problem.duration(t, n)).sum::<f64>() / k;
        let best_dep = problem
            .preds(t)
            .iter()
            .map(|&p| rank[p])
            .fold(f64::NEG_INFINITY, f64::max);
        rank[t] = if best_dep.is_finite() { avg + best_dep } else { avg };
    }
    rank
}

/// `rank(t) = avg_comp(t) + max rank over t's dependencies`, where `avg_comp` averages
/// the task's duration over all nodes. The recursion runs over predecessors.
pub fn heft_ranks(system: &System, workflow: &Workflow) -> RankTable {
    let problem = Problem::new(system, workflow);
    let rank = rank_values(&problem);
    RankTable(
        workflow
            .tasks()
            .zip(rank)
            .map(|(t, r)| (t.id.clone(), r))
            .collect(),
    )
}

struct Frontier<'a> {
    problem: &'a Problem,
    node_free: Vec<f64>,
    placed: Vec<Option<(usize, f64, f64)>>,
}

impl<'a> Frontier<'a> {
    fn new(problem: &'a Problem) -> Self {
        Frontier {
            problem,
            node_free: vec![0.0; problem.n_nodes()],
            placed: vec![None; problem.n_tasks()],
        }
    }

    /// Places `t` on the candidate node with the smallest finish time; the first
    /// node wins ties.
    fn place(&mut self, t: usize, duration: impl Fn(usize) -> f64) {
        let dep_end = self
            .problem
            .preds(t)
            .iter()
            .map(|&p| self.placed[p].expect("dependency placed first").2)
            .fold(0.0, f64::max);
        let mut best: Option<(usize, f64, f64)> = None;
        for n in 0..self.problem.n_nodes() {
            if !self.problem.fits(t, n) {
                continue;
            }
            let start = self.node_free[n].max(dep_end);
            let finish = start + duration(n);
            if best.is_none_or(|(_, _, f)| finish < f) {
                best = Some((n, start, finish));
            }
        }
        let (n, start, finish) = best.expect("feasibility checked");
        self.node_free[n] = finish;
        self.placed[t] = Some((n, start, finish));
    }

    fn into_schedule(self, method: Method) -> Schedule {
        let problem = self.problem;
        Schedule::from_entries(
            self.placed.into_iter().enumerate().map(|(t, p)| {
                let (n, start, end) = p.expect("every task placed");
                ScheduleEntry {
                    task_id: problem.task(t).id.clone(),
                    node_id: problem.system().node_at(n).id.clone(),
                    start,
                    end,
                }
            }),
            method,
        )
    }
}

/// HEFT: repeatedly takes the ready task with the highest rank (ties by ascending id)
/// and places it on the node giving the earliest finish.
///
/// Because ranks accumulate over predecessors, a task always outranks its
/// dependencies; picking only from ready tasks keeps every task after its
/// dependencies while still processing in descending-rank priority.
pub fn schedule_heft(system: &System, workflow: &Workflow) -> Result<Schedule, HeuristicError> {
    let problem = Problem::new(system, workflow);
    check_feasible(&problem)?;
    let rank = rank_values(&problem);
    let mut frontier = Frontier::new(&problem);
    let mut missing: Vec<usize> = (0..problem.n_tasks()).map(|t| problem.preds(t).len()).collect();
    let mut ready: Vec<usize> = (0..problem.n_tasks()).filter(|&t| missing[t] == 0).collect();
    while !ready.is_empty() {
        let pick = (0..ready.len())
            .max_by(|&a, &b| {
                let (ta, tb) = (ready[a], ready[b]);
                rank[ta]
                    .total_cmp(&rank[tb])
                    .then_with(|| problem.task(tb).id.cmp(&problem.task(ta).id))
            })
            .unwrap();
        let t = ready.swap_remove(pick);
        frontier.place(t, |n| problem.duration(t, n));
        for &s in problem.succs(t) {
            missing[s] -= 1;
            if missing[s] == 0 {
                ready.push(s);
            }
        }
    }
    Ok(frontier.into_schedule(Method::Heft))
}

/// OLB: tasks in topological order, each to the node with the smallest finish time
/// using the task's raw (unscaled) duration.
pub fn schedule_olb(system: &System, workflow: &Workflow) -> Result<Schedule, HeuristicError> {
    schedule_olb_with(system, workflow, HeuristicOptions::default())
}

pub fn schedule_olb_with(
    system: &System,
    workflow: &Workflow,
    options: HeuristicOptions,
) -> Result<Schedule, HeuristicError> {
    let problem = Problem::new(system, workflow);
    check_feasible(&problem)?;
    let mut frontier = Frontier::new(&problem);
    for &t in problem.topo() {
        if options.olb_speed_scaled {
            frontier.place(t, |n| problem.duration(t, n));
        } else {
            frontier.place(t, |n| problem.raw_duration(t, n));
        }
    }
    Ok(frontier.into_schedule(Method::Olb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Node, Task};
    use crate::validate::{validate_for_method, validate_schedule};

    fn unit_nodes(k: usize) -> System {
        System::new((0..k).map(|i| Node::new(format!("n{i}"), 4, 16.0)).collect()).unwrap()
    }

    #[test]
    fn chain_ranks_accumulate_over_dependencies() {
        let w = Workflow::new(
            "w",
            vec![Task::new("T1", 4.0), Task::new("T2", 2.0).after(["T1"])],
        )
        .unwrap();
        let r = heft_ranks(&unit_nodes(1), &w);
        assert_eq!(r.get("T1"), Some(4.0));
        assert_eq!(r.get("T2"), Some(6.0));
    }

    #[test]
    fn independent_rank_averages_node_times() {
        let system = System::new(vec![
            Node::new("a", 4, 1.0),
            Node::new("b", 4, 1.0).with_speed(2.0),
        ])
        .unwrap();
        let w = Workflow::new("w", vec![Task::new("T", 4.0)]).unwrap();
        assert_eq!(heft_ranks(&system, &w).get("T"), Some(3.0));
    }

    #[test]
    fn two_unit_tasks_two_nodes() {
        let w = Workflow::new("w", vec![Task::new("A", 1.0), Task::new("B", 1.0)]).unwrap();
        let s = schedule_heft(&unit_nodes(2), &w).unwrap();
        assert_eq!(s.makespan, 1.0);
        assert_ne!(s.entry("A").unwrap().node_id, s.entry("B").unwrap().node_id);
    }

    /// T1(4) -> T2(2), T3(3) independent; node speeds 1 and 2.
    ///
    /// Hand trace: ranks T1 = (4+2)/2 = 3, T2 = (2+1)/2 + 3 = 4.5, T3 = (3+1.5)/2 = 2.25.
    /// Ready {T1, T3}: T1 first -> n1 finishes at 4, n2 at 2 -> n2 [0,2).
    /// Ready {T2, T3}: T2 -> n1 [2,4), n2 [2,3) -> n2 [2,3).
    /// Ready {T3}: n1 [0,3), n2 [3,4.5) -> n1 [0,3). Makespan 3.
    #[test]
    fn hand_traced_heft() {
        let system = System::new(vec![
            Node::new("n1", 4, 16.0),
            Node::new("n2", 4, 16.0).with_speed(2.0),
        ])
        .unwrap();
        let w = Workflow::new(
            "w",
            vec![
                Task::new("T1", 4.0),
                Task::new("T2", 2.0).after(["T1"]),
                Task::new("T3", 3.0),
            ],
        )
        .unwrap();
        let s = schedule_heft(&system, &w).unwrap();
        let got: Vec<(&str, f64, f64)> = s
            .entries
            .values()
            .map(|e| (e.node_id.as_str(), e.start, e.end))
            .collect();
        assert_eq!(got, [("n2", 0.0, 2.0), ("n2", 2.0, 3.0), ("n1", 0.0, 3.0)]);
        assert_eq!(s.makespan, 3.0);
        assert!(validate_schedule(&s, &w, &system).unwrap().is_clean());
    }

    #[test]
    fn olb_serializes_a_chain_on_one_node() {
        let w = Workflow::new(
            "w",
            vec![Task::new("A", 3.0), Task::new("B", 5.0).after(["A"])],
        )
        .unwrap();
        assert_eq!(schedule_olb(&unit_nodes(1), &w).unwrap().makespan, 8.0);
    }

    #[test]
    fn olb_balances_independent_tasks() {
        let w = Workflow::new(
            "w",
            (0..4).map(|i| Task::new(format!("T{i}"), 1.0)).collect(),
        )
        .unwrap();
        let s = schedule_olb(&unit_nodes(2), &w).unwrap();
        assert_eq!(s.makespan, 2.0);
        let nodes: Vec<&str> = s.entries.values().map(|e| e.node_id.as_str()).collect();
        assert_eq!(nodes, ["n0", "n1", "n0", "n1"]);
        assert_eq!(schedule_olb(&unit_nodes(2), &w).unwrap(), s);
    }

    #[test]
    fn olb_ignores_speed_unless_asked() {
        let system = System::new(vec![Node::new("fast", 4, 1.0).with_speed(2.0)]).unwrap();
        let w = Workflow::new("w", vec![Task::new("A", 4.0)]).unwrap();
        assert_eq!(schedule_olb(&system, &w).unwrap().makespan, 4.0);
        let scaled = HeuristicOptions {
            olb_speed_scaled: true,
        };
        assert_eq!(schedule_olb_with(&system, &w, scaled).unwrap().makespan, 2.0);
        let s = schedule_olb(&system, &w).unwrap();
        assert!(validate_for_method(&s, &w, &system).unwrap().is_clean());
    }

    #[test]
    fn infeasible_feature_is_reported() {
        let w = Workflow::new("w", vec![Task::new("A", 1.0).with_features(["F9"])]).unwrap();
        let err = schedule_heft(&unit_nodes(2), &w).unwrap_err();
        assert_eq!(err, HeuristicError::InfeasibleTask { task: "A".into() });
        assert!(schedule_olb(&unit_nodes(2), &w).is_err());
    }

    #[test]
    fn capacity_filter_skips_small_nodes() {
        let system = System::new(vec![Node::new("small", 1, 1.0), Node::new("big", 8, 8.0)])
            .unwrap();
        let w = Workflow::new("w", vec![Task::new("A", 1.0).with_cores(4)]).unwrap();
        assert_eq!(schedule_olb(&system, &w).unwrap().entry("A").unwrap().node_id, "big");
    }
}
