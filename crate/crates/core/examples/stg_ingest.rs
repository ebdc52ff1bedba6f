//! Read a Standard Task Graph file and schedule it with the heuristics.
//!
//! cargo run --example stg_ingest -- [file.stg] [cores]

use std::path::PathBuf;

use hetsched::heuristics::{schedule_heft, schedule_olb};
use hetsched::ingest::{load_system, parse_stg};
use hetsched::model::FeatureSet;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or(fixtures.join("sample.stg"));
    let cores: u32 = args.next().map(|c| c.parse()).transpose()?.unwrap_or(1);

    let text = std::fs::read_to_string(&path)?;
    let workflow = parse_stg(&text, "stg", cores, &FeatureSet::default())?;
    let system = load_system(&fixtures.join("system.json"))?;

    println!("{} tasks (including entry and exit)", workflow.len());
    for task in workflow.tasks() {
        println!("  {:<4} d={:<4} deps={:?}", task.id, task.durations.mean(), task.dependencies);
    }
    println!("heft {}", schedule_heft(&system, &workflow)?.makespan);
    println!("olb  {}", schedule_olb(&system, &workflow)?.makespan);
    Ok(())
}
