//! Domain types shared by every solver.
//!
//! A [`System`] is an ordered set of compute [`Node`]s; a [`Workflow`] is a DAG of
//! [`Task`]s keyed by id. Both preserve insertion (document) order, and that order is
//! what solvers use when they index nodes or tasks by position.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use thiserror::Error;

/// Feature tags such as `"F1"` (ISA, memory type, interconnect).
pub type FeatureSet = BTreeSet<String>;

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: String,
    pub cores: u32,
    pub memory: f64,
    pub features: FeatureSet,
    /// Relative compute rate; scalar task durations are divided by it.
    pub processing_speed: f64,
    /// Data units moved per time unit.
    pub data_transfer_rate: f64,
    /// Parsed and preserved, not used by any solver.
    pub flops: Option<f64>,
    /// Parsed and preserved, not used by any solver.
    pub storage: Option<f64>,
}

impl Node {
    pub fn new(id: impl Into<String>, cores: u32, memory: f64) -> Self {
        Node {
            id: id.into(),
            cores,
            memory,
            features: FeatureSet::new(),
            processing_speed: 1.0,
            data_transfer_rate: 1.0,
            flops: None,
            storage: None,
        }
    }

    pub fn with_features<I, S>(mut self, features: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.features = features.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_speed(mut self, speed: f64) -> Self {
        self.processing_speed = speed;
        self
    }

    pub fn with_transfer_rate(mut self, rate: f64) -> Self {
        self.data_transfer_rate = rate;
        self
    }

    fn check(&self) -> Result<(), ModelError> {
        let bad = |reason: &str| {
            Err(ModelError::InvalidNode {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.memory >= 0.0) || !self.memory.is_finite() {
            return bad("memory must be a finite non-negative quantity");
        }
        if !(self.processing_speed > 0.0) || !self.processing_speed.is_finite() {
            return bad("processing_speed must be positive");
        }
        if !(self.data_transfer_rate > 0.0) || !self.data_transfer_rate.is_finite() {
            return bad("data_transfer_rate must be positive");
        }
        Ok(())
    }
}

/// Base duration of a task: node-independent work, or one entry per node.
#[derive(Clone, Debug, PartialEq)]
pub enum Durations {
    /// Work divided by the hosting node's processing speed.
    Uniform(f64),
    /// Already node-specific, indexed by the system's node order.
    PerNode(Vec<f64>),
}

impl Durations {
    fn check(&self) -> Result<(), &'static str> {
        let ok = |d: &f64| *d > 0.0 && d.is_finite();
        match self {
            Durations::Uniform(d) if ok(d) => Ok(()),
            Durations::Uniform(_) => Err("duration must be positive"),
            Durations::PerNode(v) if v.is_empty() => Err("duration list is empty"),
            Durations::PerNode(v) if v.iter().all(ok) => Ok(()),
            Durations::PerNode(_) => Err("every duration entry must be positive"),
        }
    }

    /// Mean of the stored base values (no speed scaling).
    pub fn mean(&self) -> f64 {
        match self {
            Durations::Uniform(d) => *d,
            Durations::PerNode(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub id: String,
    pub cores: u32,
    pub memory_required: f64,
    pub features: FeatureSet,
    /// Output payload shipped to dependents placed on other nodes.
    pub data: f64,
    pub durations: Durations,
    /// Ids of predecessor tasks.
    pub dependencies: Vec<String>,
}

impl Task {
    pub fn new(id: impl Into<String>, duration: f64) -> Self {
        Task {
            id: id.into(),
            cores: 1,
            memory_required: 0.0,
            features: FeatureSet::new(),
            data: 0.0,
            durations: Durations::Uniform(duration),
            dependencies: Vec::new(),
        }
    }

    pub fn with_cores(mut self, cores: u32) -> Self {
        self.cores = cores;
        self
    }

    pub fn with_memory(mut self, memory: f64) -> Self {
        self.memory_required = memory;
        self
    }

    pub fn with_data(mut self, data: f64) -> Self {
        self.data = data;
        self
    }

    pub fn with_features<I, S>(mut self, features: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.features = features.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_durations(mut self, durations: Vec<f64>) -> Self {
        self.durations = Durations::PerNode(durations);
        self
    }

    pub fn after<I, S>(mut self, deps: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.dependencies = deps.into_iter().map(Into::into).collect();
        self
    }

    /// True when the node offers every requested feature.
    pub fn features_fit(&self, node: &Node) -> bool {
        self.features.is_subset(&node.features)
    }

    /// True when the request fits the node's capacity with nothing else running.
    pub fn capacity_fits(&self, node: &Node) -> bool {
        self.cores <= node.cores && self.memory_required <= node.memory
    }
}

/// A DAG of tasks. Construct through [`Workflow::new`], which checks referential
/// integrity and acyclicity.
#[derive(Clone, Debug, PartialEq)]
pub struct Workflow {
    pub id: String,
    tasks: IndexMap<String, Task>,
}

impl Workflow {
    pub fn new(id: impl Into<String>, tasks: Vec<Task>) -> Result<Self, ModelError> {
        let mut map = IndexMap::with_capacity(tasks.len());
        for task in tasks {
            if let Err(reason) = task.durations.check() {
                return Err(ModelError::InvalidTask {
                    id: task.id,
                    reason: reason.to_string(),
                });
            }
            if !(task.memory_required >= 0.0) || !(task.data >= 0.0) {
                return Err(ModelError::InvalidTask {
                    id: task.id,
                    reason: "memory_required and data must be non-negative".into(),
                });
            }
            if map.contains_key(&task.id) {
                return Err(ModelError::DuplicateTask(task.id));
            }
            map.insert(task.id.clone(), task);
        }
        for task in map.values() {
            for dep in &task.dependencies {
                if dep == &task.id {
                    return Err(CycleError {
                        tasks: vec![task.id.clone()],
                    }
                    .into());
                }
                if !map.contains_key(dep) {
                    return Err(ModelError::UnknownDependency {
                        task: task.id.clone(),
                        dependency: dep.clone(),
                    });
                }
            }
        }
        let workflow = Workflow {
            id: id.into(),
            tasks: map,
        };
        topological_order(&workflow)?;
        Ok(workflow)
    }

    pub fn tasks(&self) -> impl ExactSizeIterator<Item = &Task> {
        self.tasks.values()
    }

    pub fn task(&self, id: &str) -> Option<&Task> {
        self.tasks.get(id)
    }

    pub fn task_index(&self, id: &str) -> Option<usize> {
        self.tasks.get_index_of(id)
    }

    pub fn task_at(&self, index: usize) -> &Task {
        &self.tasks[index]
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// An ordered, nonempty set of nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct System {
    nodes: IndexMap<String, Node>,
}

impl System {
    pub fn new(nodes: Vec<Node>) -> Result<Self, ModelError> {
        if nodes.is_empty() {
            return Err(ModelError::EmptySystem);
        }
        let mut map = IndexMap::with_capacity(nodes.len());
        for node in nodes {
            node.check()?;
            if map.contains_key(&node.id) {
                return Err(ModelError::DuplicateNode(node.id));
            }
            map.insert(node.id.clone(), node);
        }
        Ok(System { nodes: map })
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.get_index_of(id)
    }

    pub fn node_at(&self, index: usize) -> &Node {
        &self.nodes[index]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Returns a copy with one more node appended.
    pub fn with_node(&self, node: Node) -> Result<Self, ModelError> {
        let mut nodes: Vec<Node> = self.nodes.values().cloned().collect();
        nodes.push(node);
        System::new(nodes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("dependency cycle through {}", tasks.join(" -> "))]
pub struct CycleError {
    /// Tasks on one cycle, in dependency order.
    pub tasks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("system has no nodes")]
    EmptySystem,
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("duplicate task id {0:?}")]
    DuplicateTask(String),
    #[error("node {id:?}: {reason}")]
    InvalidNode { id: String, reason: String },
    #[error("task {id:?}: {reason}")]
    InvalidTask { id: String, reason: String },
    #[error("task {task:?} depends on unknown task {dependency:?}")]
    UnknownDependency { task: String, dependency: String },
    #[error(transparent)]
    Cycle(#[from] CycleError),
}

/// Kahn's algorithm with ties broken by ascending task id.
pub fn topological_order(workflow: &Workflow) -> Result<Vec<String>, CycleError> {
    let index: HashMap<&str, usize> = workflow
        .tasks()
        .enumerate()
        .map(|(i, t)| (t.id.as_str(), i))
        .collect();
    let n = workflow.len();
    let mut indegree = vec![0usize; n];
    let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, task) in workflow.tasks().enumerate() {
        for dep in &task.dependencies {
            if let Some(&p) = index.get(dep.as_str()) {
                indegree[i] += 1;
                succs[p].push(i);
            }
        }
    }
    let mut heap: BinaryHeap<Reverse<(&str, usize)>> = workflow
        .tasks()
        .enumerate()
        .filter(|(i, _)| indegree[*i] == 0)
        .map(|(i, t)| Reverse((t.id.as_str(), i)))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((id, i))) = heap.pop() {
        order.push(id.to_string());
        for &s in &succs[i] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                heap.push(Reverse((workflow.task_at(s).id.as_str(), s)));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    Err(find_cycle(workflow, &index, &indegree))
}

/// Walks predecessor links among the tasks Kahn could not release until one repeats.
fn find_cycle(workflow: &Workflow, index: &HashMap<&str, usize>, indegree: &[usize]) -> CycleError {
    let start = indegree.iter().position(|&d| d > 0).expect("cycle exists");
    let mut seen: HashMap<usize, usize> = HashMap::new();
    let mut path = Vec::new();
    let mut cur = start;
    loop {
        if let Some(&pos) = seen.get(&cur) {
            let mut cycle: Vec<String> = path[pos..]
                .iter()
                .map(|&i: &usize| workflow.task_at(i).id.clone())
                .collect();
            cycle.reverse();
            return CycleError { tasks: cycle };
        }
        seen.insert(cur, path.len());
        path.push(cur);
        cur = workflow
            .task_at(cur)
            .dependencies
            .iter()
            .filter_map(|d| index.get(d.as_str()).copied())
            .find(|&p| indegree[p] > 0)
            .expect("blocked task has a blocked predecessor");
    }
}

/// Duration of `task` on `node`, where `node_index` is the node's position in its system.
pub fn effective_duration(task: &Task, node: &Node, node_index: usize) -> f64 {
    match &task.durations {
        Durations::PerNode(v) if node_index < v.len() => v[node_index],
        Durations::PerNode(v) => v[0] / node.processing_speed,
        Durations::Uniform(d) => d / node.processing_speed,
    }
}

/// Duration without speed scaling, as used by OLB's printed rule.
pub fn raw_duration(task: &Task, node_index: usize) -> f64 {
    match &task.durations {
        Durations::PerNode(v) => v.get(node_index).copied().unwrap_or(v[0]),
        Durations::Uniform(d) => *d,
    }
}

/// Delay between `pred` finishing on `pred_node` and a dependent starting on `succ_node`.
pub fn transfer_time(pred: &Task, pred_node: &Node, succ_node: &Node) -> f64 {
    if pred_node.id == succ_node.id || pred.data == 0.0 {
        return 0.0;
    }
    pred.data / pred_node.data_transfer_rate.min(succ_node.data_transfer_rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Exact,
    Heft,
    Olb,
    GnnRl,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Exact, Method::Heft, Method::Olb, Method::GnnRl];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Heft => "heft",
            Method::Olb => "olb",
            Method::GnnRl => "gnnrl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exact" | "milp" => Ok(Method::Exact),
            "heft" => Ok(Method::Heft),
            "olb" => Ok(Method::Olb),
            "gnnrl" | "gnn-rl" => Ok(Method::GnnRl),
            other => Err(format!("unknown method {other:?} (expected exact|heft|olb|gnnrl)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleEntry {
    pub task_id: String,
    pub node_id: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub entries: IndexMap<String, ScheduleEntry>,
    pub makespan: f64,
    pub method: Method,
}

impl Schedule {
    /// Builds a schedule whose makespan is the latest entry end (0 when empty).
    pub fn from_entries(entries: impl IntoIterator<Item = ScheduleEntry>, method: Method) -> Self {
        let entries: IndexMap<String, ScheduleEntry> = entries
            .into_iter()
            .map(|e| (e.task_id.clone(), e))
            .collect();
        let makespan = entries.values().map(|e| e.end).fold(0.0, f64::max);
        Schedule {
            entries,
            makespan,
            method,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, task_id: &str) -> Option<&ScheduleEntry> {
        self.entries.get(task_id)
    }
}
