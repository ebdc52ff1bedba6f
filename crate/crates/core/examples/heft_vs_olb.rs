//! Build a small heterogeneous system in code, print HEFT upward ranks and
//! compare the HEFT and OLB placements task by task.

use hetsched::heuristics::{heft_ranks, schedule_heft, schedule_olb};
use hetsched::model::{Node, System, Task, Workflow};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let system = System::new(vec![
        Node::new("fast", 4, 16.0).with_features(["F1"]).with_speed(2.0),
        Node::new("slow", 8, 32.0).with_features(["F1", "F2"]),
    ])?;
    // durations given per node override the speed scaling
    let workflow = Workflow::new(
        "diamond",
        vec![
            Task::new("load", 4.0).with_cores(1),
            Task::new("left", 10.0).with_cores(2).after(["load"]),
            Task::new("right", 6.0).with_cores(2).with_features(["F2"]).after(["load"]),
            Task::new("merge", 0.0).with_durations(vec![3.0, 9.0]).after(["left", "right"]),
        ],
    )?;

    let ranks = heft_ranks(&system, &workflow);
    let mut order: Vec<_> = ranks.0.iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(a.1));
    println!("upward ranks:");
    for (task, rank) in order {
        println!("  {task:<6} {rank:.2}");
    }

    let heft = schedule_heft(&system, &workflow)?;
    let olb = schedule_olb(&system, &workflow)?;
    println!("\n{:<6} {:>16} {:>16}", "task", "heft", "olb");
    for task in workflow.tasks() {
        let h = heft.entry(&task.id).unwrap();
        let o = olb.entry(&task.id).unwrap();
        println!(
            "{:<6} {:>5} {:>4}-{:<4} {:>5} {:>4}-{:<4}",
            task.id, h.node_id, h.start, h.end, o.node_id, o.start, o.end
        );
    }
    println!("makespan: heft {} olb {}", heft.makespan, olb.makespan);
    Ok(())
}
