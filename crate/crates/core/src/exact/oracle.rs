//! Exhaustive reference solver for tiny instances.
//!
//! Deliberately shares no code with the branch-and-bound: it works on the model types
//! directly, keeps its own occupancy lists and enumerates (assignment, topological
//! order) pairs in full.

use thiserror::Error;

use crate::model::{
    effective_duration, transfer_time, Method, Schedule, ScheduleEntry, System, Workflow,
};

pub const ORACLE_MAX_TASKS: usize = 8;
pub const ORACLE_MAX_NODES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("instance too large for enumeration: {tasks} tasks x {nodes} nodes (limit {max_tasks} x {max_nodes})")]
    LimitExceeded {
        tasks: usize,
        nodes: usize,
        max_tasks: usize,
        max_nodes: usize,
    },
    #[error("infeasible: no assignment places every task")]
    Infeasible,
}

#[derive(Clone, Copy)]
struct Busy {
    start: f64,
    end: f64,
    cores: u32,
    memory: f64,
}

fn mem_ok(used: f64, cap: f64) -> bool {
    used <= cap + 1e-9 * cap.abs().max(1.0)
}

fn load_ok(busy: &[Busy], at: f64, cores: u32, memory: f64, cap_cores: u32, cap_mem: f64) -> bool {
    let mut c = cores as u64;
    let mut m = memory;
    for b in busy {
        if b.start <= at && at < b.end {
            c += b.cores as u64;
            m += b.memory;
        }
    }
    c <= cap_cores as u64 && mem_ok(m, cap_mem)
}

fn first_fit(busy: &[Busy], ready: f64, len: f64, cores: u32, memory: f64, cap: (u32, f64)) -> f64 {
    let mut times = vec![ready];
    times.extend(busy.iter().map(|b| b.end).filter(|&e| e > ready));
    times.sort_by(f64::total_cmp);
    for &s in &times {
        let e = s + len;
        let ok = load_ok(busy, s, cores, memory, cap.0, cap.1)
            && busy
                .iter()
                .filter(|b| b.start > s && b.start < e)
                .all(|b| load_ok(busy, b.start, cores, memory, cap.0, cap.1));
        if ok {
            return s;
        }
    }
    unreachable!("the last end time always leaves the node empty")
}

/// Makespan, node per task and (start, end) per task.
type Best = (f64, Vec<usize>, Vec<(f64, f64)>);

struct Enum<'a> {
    system: &'a System,
    workflow: &'a Workflow,
    deps: Vec<Vec<usize>>,
    assign: Vec<usize>,
    busy: Vec<Vec<Busy>>,
    times: Vec<Option<(f64, f64)>>,
    best: Option<Best>,
}

impl Enum<'_> {
    fn orders(&mut self, done: usize) {
        let m = self.workflow.len();
        if done == m {
            let span = self.times.iter().map(|t| t.unwrap().1).fold(0.0, f64::max);
            if self.best.as_ref().is_none_or(|(b, _, _)| span < *b) {
                let times = self.times.iter().map(|t| t.unwrap()).collect();
                self.best = Some((span, self.assign.clone(), times));
            }
            return;
        }
        for t in 0..m {
            if self.times[t].is_some() || self.deps[t].iter().any(|&d| self.times[d].is_none()) {
                continue;
            }
            let task = self.workflow.task_at(t);
            let n = self.assign[t];
            let node = self.system.node_at(n);
            let mut ready = 0.0f64;
            for &d in &self.deps[t] {
                let pn = self.system.node_at(self.assign[d]);
                ready = ready.max(self.times[d].unwrap().1 + transfer_time(self.workflow.task_at(d), pn, node));
            }
            let len = effective_duration(task, node, n);
            let s = first_fit(
                &self.busy[n],
                ready,
                len,
                task.cores,
                task.memory_required,
                (node.cores, node.memory),
            );
            self.busy[n].push(Busy {
                start: s,
                end: s + len,
                cores: task.cores,
                memory: task.memory_required,
            });
            self.times[t] = Some((s, s + len));
            self.orders(done + 1);
            self.times[t] = None;
            self.busy[n].pop();
        }
    }
}

/// Minimum-makespan list schedule by enumeration, refusing instances above
/// `max_tasks` tasks or `max_nodes` nodes. Assignments are visited in lexicographic
/// order of node indices and only a strictly better makespan replaces the incumbent.
pub fn brute_force_oracle(
    system: &System,
    workflow: &Workflow,
    max_tasks: usize,
    max_nodes: usize,
) -> Result<Schedule, OracleError> {
    let (m, k) = (workflow.len(), system.len());
    if m > max_tasks || k > max_nodes {
        return Err(OracleError::LimitExceeded {
            tasks: m,
            nodes: k,
            max_tasks,
            max_nodes,
        });
    }
    let deps = workflow
        .tasks()
        .map(|t| {
            t.dependencies
                .iter()
                .map(|d| workflow.task_index(d).expect("validated workflow"))
                .collect()
        })
        .collect();
    let mut e = Enum {
        system,
        workflow,
        deps,
        assign: vec![0; m],
        busy: vec![Vec::new(); k],
        times: vec![None; m],
        best: None,
    };
    loop {
        let allowed = (0..m).all(|t| {
            let task = workflow.task_at(t);
            let node = system.node_at(e.assign[t]);
            task.features_fit(node) && task.capacity_fits(node)
        });
        if allowed {
            e.orders(0);
        }
        // Odometer with the first task as the most significant digit.
        let mut i = m;
        loop {
            if i == 0 {
                let Some((span, assign, times)) = e.best else {
                    return Err(OracleError::Infeasible);
                };
                let entries = (0..m).map(|t| ScheduleEntry {
                    task_id: workflow.task_at(t).id.clone(),
                    node_id: system.node_at(assign[t]).id.clone(),
                    start: times[t].0,
                    end: times[t].1,
                });
                let schedule = Schedule::from_entries(entries, Method::Exact);
                debug_assert_eq!(schedule.makespan, span);
                return Ok(schedule);
            }
            i -= 1;
            e.assign[i] += 1;
            if e.assign[i] < k {
                break;
            }
            e.assign[i] = 0;
        }
    }
}
