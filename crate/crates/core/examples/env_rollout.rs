//! Drive the scheduling environment by hand: a few invalid actions first, then
//! a first-valid-action rollout, printing the reward trace.

use hetsched::env::{EnvConfig, SchedEnv};
use hetsched::ingest::generate_synthetic;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = generate_synthetic(3, 6, 11);
    let (system, workflow) = (&bundle.system, &bundle.workflows[0]);
    let mut env = SchedEnv::new(system, workflow, EnvConfig::default())?;
    env.enable_trace();
    let n = system.len();

    // a task with dependencies cannot go first
    if let Some(t) = (0..workflow.len()).find(|&t| !workflow.task_at(t).dependencies.is_empty()) {
        let r = env.step(t, 0)?;
        println!("premature {}: {:?} reward {}", workflow.task_at(t).id, r.info, r.reward);
    }

    while !env.is_done() {
        let Some(a) = env.valid_action_mask().iter().position(|&v| v) else { break };
        let (task, node) = (a / n, a % n);
        let r = env.step(task, node)?;
        println!(
            "{:<4} -> {:<4} reward {:>7.2} {:?}",
            workflow.task_at(task).id,
            system.node_at(node).id,
            r.reward,
            r.info
        );
        if env.n_assigned() == 1 {
            let again = env.step(task, node)?;
            println!("repeat: {:?} reward {}", again.info, again.reward);
        }
    }
    let schedule = env.extract_schedule()?;
    println!("makespan {} after {} steps", schedule.makespan, env.trace().len());
    env.write_trace_jsonl(std::io::stdout().lock())?;
    Ok(())
}
