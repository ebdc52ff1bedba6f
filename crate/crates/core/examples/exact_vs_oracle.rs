//! Cross-check branch and bound against exhaustive enumeration on small
//! synthetic instances.

use std::time::Duration;

use hetsched::exact::{brute_force_oracle, solve_exact, ObjectiveWeights, ORACLE_MAX_NODES, ORACLE_MAX_TASKS};
use hetsched::ingest::generate_synthetic;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut agree = 0;
    for seed in 0..20u64 {
        let tasks = 3 + (seed as usize % (ORACLE_MAX_TASKS - 2));
        let nodes = 1 + (seed as usize % ORACLE_MAX_NODES);
        let bundle = generate_synthetic(nodes, tasks, seed);
        let wf = &bundle.workflows[0];
        let bb = solve_exact(&bundle.system, wf, ObjectiveWeights::default(), Duration::from_secs(5))?;
        let oracle = brute_force_oracle(&bundle.system, wf, ORACLE_MAX_TASKS, ORACLE_MAX_NODES)?;
        let ok = bb.schedule.makespan == oracle.makespan;
        agree += ok as usize;
        println!(
            "seed {seed:>2} {nodes}x{tasks}: b&b {:>6} ({} nodes) oracle {:>6} {}",
            bb.schedule.makespan,
            bb.nodes_explored,
            oracle.makespan,
            if ok { "" } else { "MISMATCH" }
        );
    }
    println!("{agree}/20 agree");
    Ok(())
}
