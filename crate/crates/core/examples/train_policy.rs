//! Train a policy on one workflow, save it, reload it and schedule greedily.
//!
//! cargo run --release --example train_policy -- [episodes] [seed]

use std::path::PathBuf;

use hetsched::env::EnvConfig;
use hetsched::exact::{solve_exact, ObjectiveWeights};
use hetsched::ingest::{load_system, load_workflows};
use hetsched::nn::{infer_schedule, load_model, save_model, train, PpoConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let episodes = args.next().map(|a| a.parse()).transpose()?.unwrap_or(500);
    let seed = args.next().map(|a| a.parse()).transpose()?.unwrap_or(0);

    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let system = load_system(&fixtures.join("system.json"))?;
    let workflows = load_workflows(&fixtures.join("workflows.json"), &Default::default())?;
    let workflow = &workflows[0];
    let optimum = solve_exact(&system, workflow, ObjectiveWeights::default(), std::time::Duration::from_secs(10))?
        .schedule
        .makespan;

    let env = EnvConfig::default();
    let cfg = PpoConfig { episodes, seed, target_makespan: Some(optimum), ..Default::default() };
    let (model, log) = train(&system, workflow, &env, &cfg)?;
    for e in log.episodes.iter().filter(|e| e.greedy_makespan.is_some()) {
        println!("episode {:>4} reward {:>8.2} sampled {:>5} greedy {:>5}", e.episode, e.reward, e.makespan, e.greedy_makespan.unwrap());
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("policy.grlm");
    save_model(&model, &path)?;
    let reloaded = load_model(&path)?;
    let schedule = infer_schedule(&reloaded, &system, workflow, &env)?;
    println!("optimum {optimum}, trained policy {} ({} episodes)", schedule.makespan, log.episodes.len());
    Ok(())
}
