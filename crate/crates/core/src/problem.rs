//! Index-based view of a (system, workflow) pair used by the solvers.

use crate::book::Capacity;
use crate::model::{
    effective_duration, raw_duration, topological_order, System, Task, Workflow,
};

/// Precomputed lookup tables. Tasks are indexed in workflow order and nodes in
/// system order.
#[derive(Clone, Debug)]
pub struct Problem {
    system: System,
    workflow: Workflow,
    n_tasks: usize,
    n_nodes: usize,
    duration: Vec<f64>,
    raw: Vec<f64>,
    features_ok: Vec<bool>,
    fits: Vec<bool>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    topo: Vec<usize>,
    rate: Vec<f64>,
}

impl Problem {
    pub fn new(system: &System, workflow: &Workflow) -> Self {
        let n_tasks = workflow.len();
        let n_nodes = system.len();
        let mut duration = Vec::with_capacity(n_tasks * n_nodes);
        let mut raw = Vec::with_capacity(n_tasks * n_nodes);
        let mut features_ok = Vec::with_capacity(n_tasks * n_nodes);
        let mut fits = Vec::with_capacity(n_tasks * n_nodes);
        for task in workflow.tasks() {
            for (j, node) in system.nodes().enumerate() {
                duration.push(effective_duration(task, node, j));
                raw.push(raw_duration(task, j));
                let f = task.features_fit(node);
                features_ok.push(f);
                fits.push(f && task.capacity_fits(node));
            }
        }
        let preds: Vec<Vec<usize>> = workflow
            .tasks()
            .map(|t| {
                t.dependencies
                    .iter()
                    .map(|d| workflow.task_index(d).expect("validated workflow"))
                    .collect()
            })
            .collect();
        let mut succs = vec![Vec::new(); n_tasks];
        for (i, ps) in preds.iter().enumerate() {
            for &p in ps {
                succs[p].push(i);
            }
        }
        let topo = topological_order(workflow)
            .expect("validated workflow")
            .iter()
            .map(|id| workflow.task_index(id).unwrap())
            .collect();
        let mut rate = Vec::with_capacity(n_nodes * n_nodes);
        for a in system.nodes() {
            for b in system.nodes() {
                rate.push(a.data_transfer_rate.min(b.data_transfer_rate));
            }
        }
        Problem {
            system: system.clone(),
            workflow: workflow.clone(),
            n_tasks,
            n_nodes,
            duration,
            raw,
            features_ok,
            fits,
            preds,
            succs,
            topo,
            rate,
        }
    }

    pub fn system(&self) -> &System {
        &self.system
    }

    pub fn workflow(&self) -> &Workflow {
        &self.workflow
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn task(&self, t: usize) -> &Task {
        self.workflow.task_at(t)
    }

    /// Effective duration of task `t` on node `n`.
    pub fn duration(&self, t: usize, n: usize) -> f64 {
        self.duration[t * self.n_nodes + n]
    }

    /// Duration without speed scaling.
    pub fn raw_duration(&self, t: usize, n: usize) -> f64 {
        self.raw[t * self.n_nodes + n]
    }

    pub fn features_ok(&self, t: usize, n: usize) -> bool {
        self.features_ok[t * self.n_nodes + n]
    }

    /// Features match and the request fits the node when it runs alone.
    pub fn fits(&self, t: usize, n: usize) -> bool {
        self.fits[t * self.n_nodes + n]
    }

    pub fn preds(&self, t: usize) -> &[usize] {
        &self.preds[t]
    }

    pub fn succs(&self, t: usize) -> &[usize] {
        &self.succs[t]
    }

    /// Topological order with ties broken by task id.
    pub fn topo(&self) -> &[usize] {
        &self.topo
    }

    pub fn capacity(&self, n: usize) -> Capacity {
        let node = self.system.node_at(n);
        Capacity {
            cores: node.cores,
            memory: node.memory,
        }
    }

    /// Transfer delay for predecessor `p` placed on `from` feeding a task on `to`.
    pub fn transfer(&self, p: usize, from: usize, to: usize) -> f64 {
        let data = self.task(p).data;
        if from == to || data == 0.0 {
            0.0
        } else {
            data / self.rate[from * self.n_nodes + to]
        }
    }

    /// Smallest effective duration over the nodes the task fits on.
    pub fn min_duration(&self, t: usize) -> f64 {
        (0..self.n_nodes)
            .filter(|&n| self.fits(t, n))
            .map(|n| self.duration(t, n))
            .fold(f64::INFINITY, f64::min)
    }

    /// First task that fits no node, if any.
    pub fn unplaceable_task(&self) -> Option<usize> {
        (0..self.n_tasks).find(|&t| (0..self.n_nodes).all(|n| !self.fits(t, n)))
    }
}
