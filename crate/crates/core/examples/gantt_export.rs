//! Write per-node lanes of a HEFT schedule as JSON for plotting.

use std::path::PathBuf;

use hetsched::bench::emit_gantt_data;
use hetsched::heuristics::schedule_heft;
use hetsched::ingest::{load_system, load_workflows};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let system = load_system(&fixtures.join("system.json"))?;
    let workflows = load_workflows(&fixtures.join("workflows.json"), &Default::default())?;
    let schedule = schedule_heft(&system, &workflows[2])?;
    let gantt = emit_gantt_data(&schedule, &system);

    for lane in gantt["lanes"].as_array().unwrap() {
        let bars: Vec<String> = lane["tasks"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| format!("{}[{}..{}]", t["task"].as_str().unwrap(), t["start"], t["end"]))
            .collect();
        eprintln!("{:<3} {}", lane["node"].as_str().unwrap(), bars.join(" "));
    }
    println!("{}", serde_json::to_string_pretty(&gantt)?);
    Ok(())
}
