//! Feasibility checker shared by every solver's tests.
//!
//! The checker works from the schedule entries alone and recomputes every quantity
//! from the model; it does not reuse the interval books the solvers build with.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::book::within;
use crate::model::{effective_duration, transfer_time, Method, Schedule, System, Workflow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintFamily {
    Assignment,
    Feature,
    Resource,
    Dependency,
    Timing,
    Makespan,
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConstraintFamily::Assignment => "assignment",
            ConstraintFamily::Feature => "feature",
            ConstraintFamily::Resource => "resource",
            ConstraintFamily::Dependency => "dependency",
            ConstraintFamily::Timing => "timing",
            ConstraintFamily::Makespan => "makespan",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub family: ConstraintFamily,
    pub tasks: Vec<String>,
    pub node: Option<String>,
    /// Time window the violation covers, when it has one.
    pub window: Option<(f64, f64)>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] tasks={}", self.family, self.tasks.join(","))?;
        if let Some(node) = &self.node {
            write!(f, " node={node}")?;
        }
        if let Some((a, b)) = self.window {
            write!(f, " window=[{a}, {b})")?;
        }
        write!(f, ": {}", self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn of_family(&self, family: ConstraintFamily) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.family == family)
    }
}

/// Which constraint model a schedule is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValidationMode {
    /// Every constraint, including transfer delays and exact durations.
    Full,
    /// The model HEFT and OLB schedule in: dependency ordering without transfer
    /// delays, positive durations, plus assignment, features and capacity.
    Relaxed,
}

impl ValidationMode {
    /// The mode a method's schedules are built to satisfy.
    pub fn for_method(method: Method) -> Self {
        match method {
            Method::Exact | Method::GnnRl => ValidationMode::Full,
            Method::Heft | Method::Olb => ValidationMode::Relaxed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("schedule references unknown task {0:?}")]
    UnknownTask(String),
    #[error("schedule references unknown node {0:?}")]
    UnknownNode(String),
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn at_least(a: f64, b: f64) -> bool {
    a >= b || close(a, b)
}

/// Checks `schedule` against every constraint family.
pub fn validate_schedule(
    schedule: &Schedule,
    workflow: &Workflow,
    system: &System,
) -> Result<ValidationReport, ValidationError> {
    validate_schedule_with(schedule, workflow, system, ValidationMode::Full)
}

/// Checks `schedule` in the mode its method schedules for.
pub fn validate_for_method(
    schedule: &Schedule,
    workflow: &Workflow,
    system: &System,
) -> Result<ValidationReport, ValidationError> {
    validate_schedule_with(
        schedule,
        workflow,
        system,
        ValidationMode::for_method(schedule.method),
    )
}

pub fn validate_schedule_with(
    schedule: &Schedule,
    workflow: &Workflow,
    system: &System,
    mode: ValidationMode,
) -> Result<ValidationReport, ValidationError> {
    for (key, entry) in &schedule.entries {
        for id in [key, &entry.task_id] {
            if workflow.task(id).is_none() {
                return Err(ValidationError::UnknownTask(id.clone()));
            }
        }
        if system.node(&entry.node_id).is_none() {
            return Err(ValidationError::UnknownNode(entry.node_id.clone()));
        }
    }

    let mut out = Vec::new();
    let mut push = |family, tasks: Vec<String>, node: Option<&str>, window, detail: String| {
        out.push(Violation {
            family,
            tasks,
            node: node.map(str::to_string),
            window,
            detail,
        })
    };

    for task in workflow.tasks() {
        match schedule.entries.get(&task.id) {
            None => push(
                ConstraintFamily::Assignment,
                vec![task.id.clone()],
                None,
                None,
                "task is not assigned".into(),
            ),
            Some(e) if e.task_id != task.id => push(
                ConstraintFamily::Assignment,
                vec![task.id.clone(), e.task_id.clone()],
                None,
                None,
                "entry key and task id disagree".into(),
            ),
            Some(_) => {}
        }
    }

    for entry in schedule.entries.values() {
        let task = workflow.task(&entry.task_id).unwrap();
        let node_index = system.node_index(&entry.node_id).unwrap();
        let node = system.node_at(node_index);
        if !task.features_fit(node) {
            let missing: Vec<&str> = task
                .features
                .difference(&node.features)
                .map(String::as_str)
                .collect();
            push(
                ConstraintFamily::Feature,
                vec![task.id.clone()],
                Some(&node.id),
                None,
                format!("node lacks features {}", missing.join(",")),
            );
        }
        if !(entry.start >= 0.0) || !entry.end.is_finite() {
            push(
                ConstraintFamily::Timing,
                vec![task.id.clone()],
                Some(&node.id),
                Some((entry.start, entry.end)),
                "start must be a finite non-negative time".into(),
            );
        }
        match mode {
            ValidationMode::Full => {
                let expected = effective_duration(task, node, node_index);
                if !close(entry.end - entry.start, expected) {
                    push(
                        ConstraintFamily::Timing,
                        vec![task.id.clone()],
                        Some(&node.id),
                        Some((entry.start, entry.end)),
                        format!(
                            "runs for {} but its duration on this node is {expected}",
                            entry.end - entry.start
                        ),
                    );
                }
            }
            ValidationMode::Relaxed => {
                if !(entry.end > entry.start) {
                    push(
                        ConstraintFamily::Timing,
                        vec![task.id.clone()],
                        Some(&node.id),
                        Some((entry.start, entry.end)),
                        "end must follow start".into(),
                    );
                }
            }
        }
        for dep in &task.dependencies {
            let Some(pred) = schedule.entries.get(dep) else {
                continue;
            };
            let delay = match mode {
                ValidationMode::Full => transfer_time(
                    workflow.task(dep).unwrap(),
                    system.node(&pred.node_id).unwrap(),
                    node,
                ),
                ValidationMode::Relaxed => 0.0,
            };
            if !at_least(entry.start, pred.end + delay) {
                push(
                    ConstraintFamily::Dependency,
                    vec![dep.clone(), task.id.clone()],
                    Some(&node.id),
                    Some((pred.end + delay, entry.start)),
                    format!(
                        "starts at {} before predecessor end {} + transfer {delay}",
                        entry.start, pred.end
                    ),
                );
            }
        }
    }

    let mut by_node: BTreeMap<&str, Vec<&crate::model::ScheduleEntry>> = BTreeMap::new();
    for entry in schedule.entries.values() {
        by_node.entry(entry.node_id.as_str()).or_default().push(entry);
    }
    for (node_id, entries) in by_node {
        let node = system.node(node_id).unwrap();
        for probe in &entries {
            let t = probe.start;
            let running: Vec<_> = entries
                .iter()
                .filter(|e| e.start <= t && t < e.end)
                .collect();
            let cores: u64 = running
                .iter()
                .map(|e| workflow.task(&e.task_id).unwrap().cores as u64)
                .sum();
            let memory: f64 = running
                .iter()
                .map(|e| workflow.task(&e.task_id).unwrap().memory_required)
                .sum();
            if cores > node.cores as u64 || !within(memory, node.memory) {
                let until = running.iter().map(|e| e.end).fold(f64::INFINITY, f64::min);
                let mut tasks: Vec<String> = running.iter().map(|e| e.task_id.clone()).collect();
                tasks.sort();
                push(
                    ConstraintFamily::Resource,
                    tasks,
                    Some(node_id),
                    Some((t, until)),
                    format!(
                        "uses {cores} cores / {memory} memory of {} / {}",
                        node.cores, node.memory
                    ),
                );
            }
        }
    }

    let max_end = schedule.entries.values().map(|e| e.end).fold(0.0, f64::max);
    if !close(schedule.makespan, max_end) {
        push(
            ConstraintFamily::Makespan,
            Vec::new(),
            None,
            None,
            format!("makespan {} but latest end is {max_end}", schedule.makespan),
        );
    }

    Ok(ValidationReport { violations: out })
}
