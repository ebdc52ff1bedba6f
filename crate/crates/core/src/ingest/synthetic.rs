//! Seeded layered-DAG instances for scale tests.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{InstanceBundle, Provenance};
use crate::model::{Node, System, Task, Workflow};

const EXTRA_FEATURES: [&str; 7] = ["F2", "F3", "F4", "F5", "F6", "F7", "F8"];

fn width_digits(count: usize) -> usize {
    count.saturating_sub(1).max(1).to_string().len()
}

/// Layer width used for `num_tasks` tasks on `num_nodes` nodes.
pub fn layer_width(num_nodes: usize, num_tasks: usize) -> usize {
    let root = (num_tasks as f64).sqrt().ceil() as usize;
    root.clamp(1, num_nodes.max(1))
}

/// Deterministic for fixed arguments. Every node has unit speed; every task fits the
/// node it was drawn against, so any instance is feasible.
pub fn generate_synthetic(num_nodes: usize, num_tasks: usize, seed: u64) -> InstanceBundle {
    assert!(num_nodes >= 1 && num_tasks >= 1, "need at least one node and task");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let nw = width_digits(num_nodes);
    let nodes: Vec<Node> = (0..num_nodes)
        .map(|i| {
            let mut features = vec!["F1"];
            features.extend(EXTRA_FEATURES.iter().filter(|_| rng.random_bool(0.3)));
            Node::new(
                format!("N{i:0nw$}"),
                rng.random_range(4..=32),
                rng.random_range(16..=128) as f64,
            )
            .with_features(features)
            .with_transfer_rate(rng.random_range(5..=20) as f64)
        })
        .collect();

    let width = layer_width(num_nodes, num_tasks);
    let tw = width_digits(num_tasks);
    let name = |i: usize| format!("T{i:0tw$}");
    let mut tasks = Vec::with_capacity(num_tasks);
    for i in 0..num_tasks {
        let host = nodes.choose(&mut rng).expect("nonempty");
        let features: Vec<&String> = host.features.iter().filter(|_| rng.random_bool(0.5)).collect();
        let cores = rng.random_range(1..=host.cores.min(8));
        let memory = rng.random_range(1..=(host.memory as u32 / 4).max(1)) as f64;
        let mut task = Task::new(name(i), rng.random_range(1..=20) as f64)
            .with_cores(cores)
            .with_memory(memory)
            .with_data(rng.random_range(0..=5) as f64)
            .with_features(features.into_iter().cloned());
        let layer = i / width;
        if layer > 0 {
            let prev = (layer - 1) * width..layer * width;
            let fan_in = if prev.len() > 1 && rng.random_bool(0.5) { 2 } else { 1 };
            let picks: Vec<usize> =
                rand::seq::index::sample(&mut rng, prev.len(), fan_in).into_vec();
            let mut deps: Vec<usize> = picks.into_iter().map(|k| prev.start + k).collect();
            deps.sort_unstable();
            task.dependencies = deps.into_iter().map(name).collect();
        }
        tasks.push(task);
    }

    let system = System::new(nodes).expect("generated nodes are valid");
    let workflow = Workflow::new(format!("synthetic-{num_nodes}x{num_tasks}-s{seed}"), tasks)
        .expect("layered DAG is acyclic");
    InstanceBundle {
        system,
        workflows: vec![workflow],
        provenance: Provenance::Synthetic { seed },
    }
}
