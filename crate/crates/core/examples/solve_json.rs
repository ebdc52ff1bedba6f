//! Load a system and a workflow file and compare every method on one workflow.
//!
//! cargo run --release --example solve_json -- [system.json] [workflows.json] [workflow-id]

use std::path::PathBuf;
use std::time::{Duration, Instant};

use hetsched::env::EnvConfig;
use hetsched::exact::{solve_exact, ObjectiveWeights};
use hetsched::heuristics::{schedule_heft, schedule_olb};
use hetsched::ingest::{load_system, load_workflows};
use hetsched::nn::{infer_schedule, train, PpoConfig};
use hetsched::validate::validate_for_method;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut args = std::env::args().skip(1);
    let sys_path = args.next().map(PathBuf::from).unwrap_or(fixtures.join("system.json"));
    let wf_path = args.next().map(PathBuf::from).unwrap_or(fixtures.join("workflows.json"));
    let wanted = args.next();

    let system = load_system(&sys_path)?;
    let workflows = load_workflows(&wf_path, &Default::default())?;
    let workflow = match &wanted {
        Some(id) => workflows.iter().find(|w| &w.id == id).ok_or(format!("no workflow {id}"))?,
        None => &workflows[0],
    };
    println!("{}: {} tasks on {} nodes", workflow.id, workflow.len(), system.len());

    let env = EnvConfig::default();
    let t = Instant::now();
    let exact = solve_exact(&system, workflow, ObjectiveWeights::default(), Duration::from_secs(10))?;
    println!("exact  {:>6} ({:?}, {} search nodes, {:.3}s)", exact.schedule.makespan, exact.status, exact.nodes_explored, t.elapsed().as_secs_f64());

    let heft = schedule_heft(&system, workflow)?;
    let olb = schedule_olb(&system, workflow)?;
    println!("heft   {:>6}", heft.makespan);
    println!("olb    {:>6}", olb.makespan);

    let cfg = PpoConfig { episodes: 300, ..Default::default() };
    let t = Instant::now();
    let (model, log) = train(&system, workflow, &env, &cfg)?;
    let rl = infer_schedule(&model, &system, workflow, &env)?;
    println!("gnnrl  {:>6} (best greedy during training {:?}, {:.1}s)", rl.makespan, log.best_greedy, t.elapsed().as_secs_f64());

    for s in [&exact.schedule, &heft, &olb, &rl] {
        let report = validate_for_method(s, workflow, &system)?;
        println!("{:<6} violations: {}", s.method.as_str(), report.violations.len());
    }
    Ok(())
}
