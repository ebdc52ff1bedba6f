#![allow(dead_code)]

use std::path::PathBuf;

use hetsched::ingest::{load_system, load_workflows, StgDefaults};
use hetsched::model::{Node, System, Task, Workflow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
pub struct GenOpts {
    pub min_tasks: usize,
    pub max_tasks: usize,
    pub max_nodes: usize,
    /// No transfer data, so every method's schedule must satisfy the full model.
    pub zero_data: bool,
    /// Per-node duration vectors instead of a scalar duration.
    pub vectors: bool,
}

impl GenOpts {
    pub fn small() -> Self {
        GenOpts {
            min_tasks: 1,
            max_tasks: 6,
            max_nodes: 3,
            zero_data: false,
            vectors: false,
        }
    }
}

/// Feasible random instance with integer durations (1-20) and integer transfer
/// times, so optimal makespans are exact in floating point.
pub fn random_instance(seed: u64, opts: GenOpts) -> (System, Workflow) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=opts.max_nodes);
    let nodes: Vec<Node> = (0..n)
        .map(|j| {
            let feats: Vec<&str> = ["F1", "F2"].into_iter().filter(|_| rng.random_bool(0.5)).collect();
            Node::new(format!("n{j}"), rng.random_range(1..=4), rng.random_range(4..=16) as f64)
                .with_features(feats)
                .with_transfer_rate(if rng.random_bool(0.5) { 1.0 } else { 2.0 })
        })
        .collect();
    let m = rng.random_range(opts.min_tasks..=opts.max_tasks);
    let mut tasks = Vec::with_capacity(m);
    for i in 0..m {
        let home = &nodes[rng.random_range(0..n)];
        let feats: Vec<String> = home.features.iter().filter(|_| rng.random_bool(0.5)).cloned().collect();
        let mut t = Task::new(format!("t{i}"), rng.random_range(1..=20) as f64)
            .with_cores(rng.random_range(1..=home.cores))
            .with_memory(rng.random_range(1..=home.memory as u32) as f64)
            .with_features(feats);
        if opts.vectors {
            t = t.with_durations((0..n).map(|_| rng.random_range(1..=20) as f64).collect());
        }
        if !opts.zero_data {
            t = t.with_data([0.0, 2.0, 4.0, 6.0][rng.random_range(0..4)]);
        }
        let deps: Vec<String> = (0..i).filter(|_| rng.random_bool(0.35)).map(|k| format!("t{k}")).collect();
        tasks.push(t.after(deps));
    }
    (
        System::new(nodes).unwrap(),
        Workflow::new(format!("r{seed}"), tasks).unwrap(),
    )
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_system() -> System {
    load_system(&fixture("system.json")).unwrap()
}

/// fx08, fx11 and fx12: 8, 11 and 12 tasks on the 3-node fixture system.
pub fn fixture_workflows() -> Vec<Workflow> {
    load_workflows(&fixture("workflows.json"), &StgDefaults::default()).unwrap()
}

pub fn sample_stg() -> Workflow {
    load_workflows(&fixture("sample.stg"), &StgDefaults::default()).unwrap().remove(0)
}
