use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::model::{
    Durations, Method, ModelError, Node, Schedule, ScheduleEntry, System, Task, Workflow,
};

fn one() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
struct SystemDoc {
    nodes: IndexMap<String, NodeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeDoc {
    cores: u32,
    memory: f64,
    features: Vec<String>,
    #[serde(default = "one")]
    processing_speed: f64,
    #[serde(default = "one")]
    data_transfer_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flops: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    storage: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WorkflowsDoc {
    workflows: IndexMap<String, WorkflowDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WorkflowDoc {
    tasks: IndexMap<String, TaskDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskDoc {
    cores: u32,
    memory_required: f64,
    features: Vec<String>,
    data: f64,
    duration: DurationDoc,
    dependencies: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum DurationDoc {
    Scalar(f64),
    PerNode(Vec<f64>),
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleDoc {
    assignments: IndexMap<String, AssignmentDoc>,
    makespan: f64,
    method: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentDoc {
    node: String,
    start: f64,
    end: f64,
}

fn decode<'de, T: Deserialize<'de>>(text: &'de [u8]) -> Result<T, IngestError> {
    let de = &mut serde_json::Deserializer::from_slice(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        IngestError::Parse {
            path,
            message: err.into_inner().to_string(),
        }
    })
}

fn field_error(path: String, message: impl Into<String>) -> IngestError {
    IngestError::Parse {
        path,
        message: message.into(),
    }
}

/// Parses `{"nodes": {id: {cores, memory, features, processing_speed, data_transfer_rate}}}`.
/// Node order follows the document.
pub fn parse_system_json(text: &[u8]) -> Result<System, IngestError> {
    let doc: SystemDoc = decode(text)?;
    if doc.nodes.is_empty() {
        return Err(IngestError::EmptySystem);
    }
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (id, n) in doc.nodes {
        let path = |field: &str| format!("nodes.{id}.{field}");
        if !(n.memory >= 0.0) {
            return Err(field_error(path("memory"), "must be non-negative"));
        }
        if !(n.processing_speed > 0.0) {
            return Err(field_error(path("processing_speed"), "must be positive"));
        }
        if !(n.data_transfer_rate > 0.0) {
            return Err(field_error(path("data_transfer_rate"), "must be positive"));
        }
        nodes.push(Node {
            id: id.clone(),
            cores: n.cores,
            memory: n.memory,
            features: n.features.into_iter().collect(),
            processing_speed: n.processing_speed,
            data_transfer_rate: n.data_transfer_rate,
            flops: n.flops,
            storage: n.storage,
        });
    }
    System::new(nodes).map_err(IngestError::from)
}

/// Parses `{"workflows": {id: {"tasks": {id: {...}}}}}` and checks each DAG.
pub fn parse_workflows_json(text: &[u8]) -> Result<Vec<Workflow>, IngestError> {
    let doc: WorkflowsDoc = decode(text)?;
    let mut out = Vec::with_capacity(doc.workflows.len());
    for (wid, w) in doc.workflows {
        let mut tasks = Vec::with_capacity(w.tasks.len());
        for (tid, t) in w.tasks {
            let path = |field: &str| format!("workflows.{wid}.tasks.{tid}.{field}");
            let durations = match t.duration {
                DurationDoc::Scalar(d) => Durations::Uniform(d),
                DurationDoc::PerNode(v) => Durations::PerNode(v),
            };
            let ok = match &durations {
                Durations::Uniform(d) => *d > 0.0,
                Durations::PerNode(v) => !v.is_empty() && v.iter().all(|d| *d > 0.0),
            };
            if !ok {
                return Err(field_error(path("duration"), "durations must be positive"));
            }
            if !(t.memory_required >= 0.0) {
                return Err(field_error(path("memory_required"), "must be non-negative"));
            }
            if !(t.data >= 0.0) {
                return Err(field_error(path("data"), "must be non-negative"));
            }
            tasks.push(Task {
                id: tid.clone(),
                cores: t.cores,
                memory_required: t.memory_required,
                features: t.features.into_iter().collect(),
                data: t.data,
                durations,
                dependencies: t.dependencies,
            });
        }
        let workflow = Workflow::new(wid.clone(), tasks).map_err(|e| match e {
            ModelError::UnknownDependency { task, dependency } => field_error(
                format!("workflows.{wid}.tasks.{task}.dependencies"),
                format!("unknown task {dependency:?}"),
            ),
            other => IngestError::from(other),
        })?;
        out.push(workflow);
    }
    Ok(out)
}

pub fn system_to_json(system: &System) -> String {
    let doc = SystemDoc {
        nodes: system
            .nodes()
            .map(|n| {
                (
                    n.id.clone(),
                    NodeDoc {
                        cores: n.cores,
                        memory: n.memory,
                        features: n.features.iter().cloned().collect(),
                        processing_speed: n.processing_speed,
                        data_transfer_rate: n.data_transfer_rate,
                        flops: n.flops,
                        storage: n.storage,
                    },
                )
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("serializable")
}

pub fn workflows_to_json(workflows: &[Workflow]) -> String {
    let doc = WorkflowsDoc {
        workflows: workflows
            .iter()
            .map(|w| {
                let tasks = w
                    .tasks()
                    .map(|t| {
                        (
                            t.id.clone(),
                            TaskDoc {
                                cores: t.cores,
                                memory_required: t.memory_required,
                                features: t.features.iter().cloned().collect(),
                                data: t.data,
                                duration: match &t.durations {
                                    Durations::Uniform(d) => DurationDoc::Scalar(*d),
                                    Durations::PerNode(v) => DurationDoc::PerNode(v.clone()),
                                },
                                dependencies: t.dependencies.clone(),
                            },
                        )
                    })
                    .collect();
                (w.id.clone(), WorkflowDoc { tasks })
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("serializable")
}

/// `{"assignments": {task: {node, start, end}}, "makespan": x, "method": m}`
pub fn schedule_to_json(schedule: &Schedule) -> String {
    let doc = ScheduleDoc {
        assignments: schedule
            .entries
            .values()
            .map(|e| {
                (
                    e.task_id.clone(),
                    AssignmentDoc {
                        node: e.node_id.clone(),
                        start: e.start,
                        end: e.end,
                    },
                )
            })
            .collect(),
        makespan: schedule.makespan,
        method: schedule.method.to_string(),
    };
    serde_json::to_string_pretty(&doc).expect("serializable")
}

pub fn parse_schedule_json(text: &[u8]) -> Result<Schedule, IngestError> {
    let doc: ScheduleDoc = decode(text)?;
    let method: Method = doc
        .method
        .parse()
        .map_err(|m: String| field_error("method".into(), m))?;
    let entries = doc
        .assignments
        .into_iter()
        .map(|(task_id, a)| ScheduleEntry {
            task_id,
            node_id: a.node,
            start: a.start,
            end: a.end,
        })
        .collect::<Vec<_>>();
    let mut schedule = Schedule::from_entries(entries, method);
    schedule.makespan = doc.makespan;
    Ok(schedule)
}
