mod common;

use common::{random_instance, GenOpts};
use hetsched::bench::{read_records_csv, write_records_csv, BenchRecord, CellStatus};
use hetsched::env::{EnvConfig, SchedEnv};
use hetsched::exact::{brute_force_oracle, solve_exact, ObjectiveWeights, SolveStatus};
use hetsched::heuristics::{schedule_heft, schedule_olb};
use hetsched::ingest::{
    generate_synthetic, parse_schedule_json, parse_system_json, parse_workflows_json,
    schedule_to_json, system_to_json, workflows_to_json,
};
use hetsched::model::{Node, System, Workflow};
use hetsched::nn::{build_task_graph, compute_gae, embed, init_params, masked_log_softmax, select_action};
use hetsched::problem::Problem;
use hetsched::validate::validate_schedule;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn optimum(system: &System, workflow: &Workflow) -> f64 {
    let sol = solve_exact(system, workflow, ObjectiveWeights::default(), std::time::Duration::from_secs(30)).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    sol.schedule.makespan
}

fn zero_data(max_tasks: usize) -> GenOpts {
    GenOpts {
        min_tasks: 1,
        max_tasks,
        max_nodes: 3,
        zero_data: true,
        vectors: true,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn exact_matches_oracle(seed in any::<u64>()) {
        let (sys, wf) = random_instance(seed, GenOpts::small());
        let oracle = brute_force_oracle(&sys, &wf, 6, 3).unwrap();
        prop_assert!(validate_schedule(&oracle, &wf, &sys).unwrap().is_clean());
        prop_assert_eq!(optimum(&sys, &wf), oracle.makespan);
    }

    #[test]
    fn exact_dominates_heuristics(seed in any::<u64>()) {
        let (sys, wf) = random_instance(seed, zero_data(7));
        let e = optimum(&sys, &wf);
        let h = schedule_heft(&sys, &wf).unwrap();
        let o = schedule_olb(&sys, &wf).unwrap();
        prop_assert!(validate_schedule(&h, &wf, &sys).unwrap().is_clean());
        prop_assert!(validate_schedule(&o, &wf, &sys).unwrap().is_clean());
        prop_assert!(h.makespan >= e && o.makespan >= e);
    }

    #[test]
    fn extra_node_never_hurts(seed in any::<u64>(), cores in 1u32..5, mem in 4u32..17, f1 in any::<bool>()) {
        let (sys, wf) = random_instance(seed, GenOpts::small());
        let mut node = Node::new("extra", cores, mem as f64);
        if f1 {
            node = node.with_features(["F1"]);
        }
        let bigger = sys.with_node(node).unwrap();
        prop_assert!(optimum(&bigger, &wf) <= optimum(&sys, &wf));
    }

    #[test]
    fn encoder_is_permutation_equivariant(seed in any::<u64>(), m in 2usize..14, shuffle in any::<u64>()) {
        use rand::seq::SliceRandom;
        let b = generate_synthetic(3, m, seed);
        let p = Problem::new(&b.system, &b.workflows[0]);
        let graph = build_task_graph(&p, &vec![false; m]);
        let params = init_params(seed, hetsched::nn::FEATURE_DIM, 6, 2);
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let base = embed(&graph, &params).unwrap();
        let moved = embed(&graph.permuted(&perm), &params).unwrap();
        for (k, &old) in perm.iter().enumerate() {
            for (a, b) in moved.row(k).iter().zip(base.row(old)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn masked_actions_get_zero_probability(
        logits in prop::collection::vec(-30.0f64..30.0, 1..40),
        bits in any::<u64>(),
        draw in any::<u64>(),
    ) {
        let mut mask: Vec<bool> = (0..logits.len()).map(|i| bits >> (i % 64) & 1 == 1).collect();
        mask[(bits as usize) % logits.len()] = true;
        let lp = masked_log_softmax(&logits, &mask).unwrap();
        let total: f64 = lp.iter().filter(|v| v.is_finite()).map(|v| v.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        for (v, &m) in lp.iter().zip(&mask) {
            prop_assert_eq!(m, v.is_finite());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        for _ in 0..20 {
            let (a, logp) = select_action(&logits, &mask, &mut rng).unwrap();
            prop_assert!(mask[a]);
            prop_assert_eq!(logp, lp[a]);
        }
    }

    #[test]
    fn gae_limits(
        steps in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, any::<bool>()), 1..30),
        gamma in 0.5f64..1.0,
    ) {
        let rewards: Vec<f64> = steps.iter().map(|s| s.0).collect();
        let values: Vec<f64> = steps.iter().map(|s| s.1).collect();
        let mut dones: Vec<bool> = steps.iter().map(|s| s.2).collect();
        *dones.last_mut().unwrap() = true;
        let td = compute_gae(&rewards, &values, &dones, gamma, 0.0);
        let mc = compute_gae(&rewards, &values, &dones, gamma, 1.0);
        let mut g = 0.0;
        for t in (0..rewards.len()).rev() {
            let cont = if dones[t] { 0.0 } else { 1.0 };
            let next_v = if t + 1 < values.len() { values[t + 1] } else { 0.0 };
            let delta = rewards[t] + gamma * next_v * cont - values[t];
            prop_assert!((td.advantages[t] - delta).abs() < 1e-12);
            g = rewards[t] + gamma * g * cont;
            prop_assert!((mc.advantages[t] - (g - values[t])).abs() < 1e-9);
            prop_assert!((mc.returns[t] - g).abs() < 1e-9);
        }
    }

    #[test]
    fn instance_json_round_trips(nodes in 1usize..8, tasks in 1usize..40, seed in any::<u64>()) {
        let b = generate_synthetic(nodes, tasks, seed);
        let sys = parse_system_json(system_to_json(&b.system).as_bytes()).unwrap();
        let wfs = parse_workflows_json(workflows_to_json(&b.workflows).as_bytes()).unwrap();
        prop_assert_eq!(&sys, &b.system);
        prop_assert_eq!(&wfs, &b.workflows);
        let s = schedule_olb(&sys, &wfs[0]).unwrap();
        prop_assert_eq!(parse_schedule_json(schedule_to_json(&s).as_bytes()).unwrap(), s);
    }

    #[test]
    fn masked_rollouts_validate(seed in any::<u64>(), picks in prop::collection::vec(any::<u16>(), 64)) {
        let (sys, wf) = random_instance(seed, GenOpts { max_tasks: 10, max_nodes: 4, ..GenOpts::small() });
        let mut env = SchedEnv::new(&sys, &wf, EnvConfig::default()).unwrap();
        let mut k = 0;
        while !env.is_done() {
            let valid: Vec<usize> = env.valid_action_mask().iter().enumerate().filter(|v| *v.1).map(|v| v.0).collect();
            let a = valid[picks[k % picks.len()] as usize % valid.len()];
            k += 1;
            prop_assert!(env.step(a / sys.len(), a % sys.len()).unwrap().info.is_valid());
        }
        let s = env.extract_schedule().unwrap();
        prop_assert!(validate_schedule(&s, &wf, &sys).unwrap().is_clean());
        prop_assert!(s.makespan >= optimum(&sys, &wf));
    }

    #[test]
    fn bench_csv_round_trips(
        makespan in prop::option::of(0.0f64..1e6),
        time in 0.0f64..100.0,
        mem in prop::option::of(-5.0f64..500.0),
        status in 0usize..6,
        msg in "[a-z ,\"]{0,12}",
    ) {
        let status = match status {
            0 => CellStatus::Clean,
            1 => CellStatus::CleanRelaxed,
            2 => CellStatus::Violations(7),
            3 => CellStatus::Timeout,
            4 => CellStatus::Skipped,
            _ => CellStatus::Failed(msg.clone()),
        };
        let rec = BenchRecord {
            workflow: format!("w {msg}"),
            method: "heft".into(),
            num_nodes: 3,
            num_tasks: 11,
            makespan,
            solver_time_s: time,
            mem_diff_mb: mem,
            status,
        };
        let mut buf = Vec::new();
        write_records_csv(std::slice::from_ref(&rec), &mut buf).unwrap();
        prop_assert_eq!(read_records_csv(buf.as_slice()).unwrap(), vec![rec]);
    }
}
