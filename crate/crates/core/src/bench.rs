//! Benchmark harness: runs methods over workflows, validates and times each result,
//! and reports rows as CSV or an aligned text table.

use std::fmt;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use crate::env::EnvConfig;
use crate::exact::{solve_exact, ObjectiveWeights, SolveStatus, ORACLE_MAX_NODES, ORACLE_MAX_TASKS};
use crate::heuristics::{schedule_heft, schedule_olb_with, HeuristicOptions};
use crate::ingest::generate_synthetic;
use crate::model::{Method, Schedule, System, Workflow};
use crate::nn::{
    greedy_action, infer_schedule, load_model, policy_forward, save_model, train, ModelConfig,
    NnError, PolicyModel, PpoConfig, Rollout,
};
use crate::problem::Problem;
use crate::validate::{validate_schedule_with, ValidationMode};

pub const CSV_COLUMNS: [&str; 8] = [
    "workflow",
    "method",
    "num_nodes",
    "num_tasks",
    "makespan",
    "solver_time_s",
    "mem_diff_mb",
    "validator",
];

/// Outcome of one benchmark cell.
#[derive(Clone, Debug, PartialEq)]
pub enum CellStatus {
    /// Passes every constraint.
    Clean,
    /// Passes only the relaxed model (heuristics on instances with transfer data).
    CleanRelaxed,
    Violations(usize),
    Timeout,
    Skipped,
    Failed(String),
}

impl CellStatus {
    pub fn is_clean(&self) -> bool {
        matches!(self, CellStatus::Clean)
    }
}

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellStatus::Clean => f.write_str("clean"),
            CellStatus::CleanRelaxed => f.write_str("clean-relaxed"),
            CellStatus::Violations(n) => write!(f, "violations:{n}"),
            CellStatus::Timeout => f.write_str("TIMEOUT"),
            CellStatus::Skipped => f.write_str("SKIPPED"),
            CellStatus::Failed(msg) => write!(f, "FAILED: {msg}"),
        }
    }
}

impl FromStr for CellStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "clean" => CellStatus::Clean,
            "clean-relaxed" => CellStatus::CleanRelaxed,
            "TIMEOUT" => CellStatus::Timeout,
            "SKIPPED" => CellStatus::Skipped,
            _ => {
                if let Some(n) = s.strip_prefix("violations:") {
                    CellStatus::Violations(n.parse().map_err(|_| format!("bad status {s:?}"))?)
                } else if let Some(msg) = s.strip_prefix("FAILED: ") {
                    CellStatus::Failed(msg.to_string())
                } else {
                    return Err(format!("bad status {s:?}"));
                }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub workflow: String,
    /// `exact`, `heft`, `olb`, `gnnrl` (inference only), `gnnrl-train-test` or
    /// `gnnrl-test`.
    pub method: String,
    pub num_nodes: usize,
    pub num_tasks: usize,
    pub makespan: Option<f64>,
    pub solver_time_s: f64,
    /// Growth of the process peak RSS during the cell, where the platform reports it.
    pub mem_diff_mb: Option<f64>,
    pub status: CellStatus,
}

impl BenchRecord {
    fn new(workflow: &Workflow, system: &System, method: &str) -> Self {
        BenchRecord {
            workflow: workflow.id.clone(),
            method: method.to_string(),
            num_nodes: system.len(),
            num_tasks: workflow.len(),
            makespan: None,
            solver_time_s: 0.0,
            mem_diff_mb: None,
            status: CellStatus::Skipped,
        }
    }
}

pub fn write_records_csv(records: &[BenchRecord], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record([
            r.workflow.clone(),
            r.method.clone(),
            r.num_nodes.to_string(),
            r.num_tasks.to_string(),
            r.makespan.map_or(String::new(), |m| m.to_string()),
            r.solver_time_s.to_string(),
            r.mem_diff_mb.map_or("n/a".to_string(), |m| m.to_string()),
            r.status.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv(input: impl Read) -> Result<Vec<BenchRecord>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(CSV_COLUMNS) {
        return Err(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        let bad = |what: &str| format!("row {}: bad {what}", i + 1);
        let num = |k: usize, what: &str| row[k].parse::<usize>().map_err(|_| bad(what));
        let float = |k: usize, what: &str| row[k].parse::<f64>().map_err(|_| bad(what));
        out.push(BenchRecord {
            workflow: row[0].to_string(),
            method: row[1].to_string(),
            num_nodes: num(2, "num_nodes")?,
            num_tasks: num(3, "num_tasks")?,
            makespan: if row[4].is_empty() { None } else { Some(float(4, "makespan")?) },
            solver_time_s: float(5, "solver_time_s")?,
            mem_diff_mb: if &row[6] == "n/a" { None } else { Some(float(6, "mem_diff_mb")?) },
            status: row[7].parse()?,
        });
    }
    Ok(out)
}

/// Aligned text table. Makespans are shown only for clean rows; other rows show
/// their status in place of a result.
pub fn format_table(records: &[BenchRecord]) -> String {
    let header = ["workflow", "method", "nodes", "tasks", "makespan", "time_s", "mem_mb", "status"];
    let rows: Vec<[String; 8]> = records
        .iter()
        .map(|r| {
            let shown = matches!(r.status, CellStatus::Clean | CellStatus::CleanRelaxed);
            [
                r.workflow.clone(),
                r.method.clone(),
                r.num_nodes.to_string(),
                r.num_tasks.to_string(),
                match r.makespan {
                    Some(m) if shown => format!("{m:.2}"),
                    _ => "-".into(),
                },
                format!("{:.4}", r.solver_time_s),
                r.mem_diff_mb.map_or("n/a".into(), |m| format!("{m:.1}")),
                r.status.to_string(),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &rows {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if (2..7).contains(&k) {
                    format!("{c:>w$}", w = width[k])
                } else {
                    format!("{c:<w$}", w = width[k])
                }
            })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&header);
    let rule: Vec<String> = width.iter().map(|&w| "-".repeat(w)).collect();
    line(&rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &rows {
        line(&row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

/// Peak resident set size of this process in MB (Linux `VmHWM`).
pub fn peak_rss_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub weights: ObjectiveWeights,
    pub time_limit: Duration,
    pub heuristics: HeuristicOptions,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    /// Where trained models are written; a temporary file is used (and removed) when
    /// unset.
    pub model_dir: Option<PathBuf>,
    pub parallel: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            weights: ObjectiveWeights::default(),
            time_limit: crate::exact::DEFAULT_TIME_LIMIT,
            heuristics: HeuristicOptions::default(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            model_dir: None,
            parallel: false,
        }
    }
}

fn status_of(schedule: &Schedule, workflow: &Workflow, system: &System) -> CellStatus {
    let check = |mode| validate_schedule_with(schedule, workflow, system, mode);
    match check(ValidationMode::Full) {
        Err(e) => CellStatus::Failed(e.to_string()),
        Ok(r) if r.is_clean() => CellStatus::Clean,
        Ok(r) => match schedule.method {
            Method::Heft | Method::Olb => match check(ValidationMode::Relaxed) {
                Ok(rr) if rr.is_clean() => CellStatus::CleanRelaxed,
                _ => CellStatus::Violations(r.violations.len()),
            },
            _ => CellStatus::Violations(r.violations.len()),
        },
    }
}

/// Times `f`, measures peak-RSS growth when `measure_mem`, and fills in the record.
fn timed<F>(mut rec: BenchRecord, measure_mem: bool, f: F) -> (BenchRecord, Option<Schedule>)
where
    F: FnOnce() -> Result<(Schedule, bool), String>,
{
    let before = if measure_mem { peak_rss_mb() } else { None };
    let started = Instant::now();
    let result = f();
    rec.solver_time_s = started.elapsed().as_secs_f64();
    rec.mem_diff_mb = before.and_then(|b| peak_rss_mb().map(|a| a - b));
    match result {
        Ok((schedule, timed_out)) => {
            rec.makespan = Some(schedule.makespan);
            rec.status = if timed_out {
                CellStatus::Timeout
            } else {
                CellStatus::Clean
            };
            (rec, Some(schedule))
        }
        Err(msg) => {
            rec.status = CellStatus::Failed(msg);
            (rec, None)
        }
    }
}

fn finish(
    (mut rec, schedule): (BenchRecord, Option<Schedule>),
    workflow: &Workflow,
    system: &System,
) -> BenchRecord {
    if let (Some(s), CellStatus::Clean) = (&schedule, &rec.status) {
        rec.status = status_of(s, workflow, system);
    }
    rec
}

static MODEL_COUNTER: AtomicU64 = AtomicU64::new(0);

fn model_path(opts: &BenchOptions, workflow: &Workflow) -> (PathBuf, bool) {
    match &opts.model_dir {
        Some(dir) => (dir.join(format!("{}.grlm", workflow.id)), false),
        None => {
            let n = MODEL_COUNTER.fetch_add(1, Ordering::Relaxed);
            let name = format!("hetsched-{}-{n}-{}.grlm", std::process::id(), workflow.id);
            (std::env::temp_dir().join(name), true)
        }
    }
}

/// Runs one method on one workflow. `gnnrl` yields two rows: training plus inference,
/// then load plus inference from the saved model file.
pub fn run_cell(
    system: &System,
    workflow: &Workflow,
    method: Method,
    opts: &BenchOptions,
) -> Vec<BenchRecord> {
    let mem = !opts.parallel;
    match method {
        Method::Exact => {
            let rec = BenchRecord::new(workflow, system, "exact");
            let out = timed(rec, mem, || {
                solve_exact(system, workflow, opts.weights, opts.time_limit)
                    .map(|s| (s.schedule, s.status == SolveStatus::TimedOut))
                    .map_err(|e| e.to_string())
            });
            vec![finish(out, workflow, system)]
        }
        Method::Heft => {
            let rec = BenchRecord::new(workflow, system, "heft");
            let out = timed(rec, mem, || {
                schedule_heft(system, workflow).map(|s| (s, false)).map_err(|e| e.to_string())
            });
            vec![finish(out, workflow, system)]
        }
        Method::Olb => {
            let rec = BenchRecord::new(workflow, system, "olb");
            let out = timed(rec, mem, || {
                schedule_olb_with(system, workflow, opts.heuristics)
                    .map(|s| (s, false))
                    .map_err(|e| e.to_string())
            });
            vec![finish(out, workflow, system)]
        }
        Method::GnnRl => gnnrl_rows(system, workflow, opts),
    }
}

fn gnnrl_rows(system: &System, workflow: &Workflow, opts: &BenchOptions) -> Vec<BenchRecord> {
    let mem = !opts.parallel;
    let mut model: Option<PolicyModel> = None;
    let rec = BenchRecord::new(workflow, system, "gnnrl-train-test");
    let out = timed(rec, mem, || {
        let (m, _log) = train(system, workflow, &opts.env, &opts.ppo).map_err(|e| e.to_string())?;
        let s = infer_schedule(&m, system, workflow, &opts.env).map_err(|e| e.to_string())?;
        model = Some(m);
        Ok((s, false))
    });
    let train_row = finish(out, workflow, system);

    let mut test_row = BenchRecord::new(workflow, system, "gnnrl-test");
    let Some(model) = model else {
        test_row.status = CellStatus::Failed("no trained model".into());
        return vec![train_row, test_row];
    };
    let (path, temporary) = model_path(opts, workflow);
    if let Err(e) = save_model(&model, &path) {
        test_row.status = CellStatus::Failed(e.to_string());
        return vec![train_row, test_row];
    }
    let out = timed(test_row, mem, || {
        let loaded = load_model(&path).map_err(|e| e.to_string())?;
        let s = infer_schedule(&loaded, system, workflow, &opts.env).map_err(|e| e.to_string())?;
        Ok((s, false))
    });
    if temporary {
        let _ = std::fs::remove_file(&path);
    }
    vec![train_row, finish(out, workflow, system)]
}

/// Every (workflow, method) cell, grouped by workflow in the given method order.
pub fn run_bench(
    system: &System,
    workflows: &[Workflow],
    methods: &[Method],
    opts: &BenchOptions,
) -> Vec<BenchRecord> {
    let cells: Vec<(&Workflow, Method)> = workflows
        .iter()
        .flat_map(|w| methods.iter().map(move |&m| (w, m)))
        .collect();
    if !opts.parallel {
        return cells
            .into_iter()
            .flat_map(|(w, m)| run_cell(system, w, m, opts))
            .collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = cells
            .iter()
            .map(|&(w, m)| scope.spawn(move || run_cell(system, w, m, opts)))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("bench cell panicked"))
            .collect()
    })
}

/// Parses `10x10,100x100` into `(nodes, tasks)` pairs.
pub fn parse_sizes(s: &str) -> Result<Vec<(usize, usize)>, String> {
    let sizes: Result<Vec<_>, String> = s
        .split(',')
        .map(|part| {
            let part = part.trim();
            let (a, b) = part
                .split_once(['x', 'X'])
                .ok_or_else(|| format!("size {part:?} is not NODESxTASKS"))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| format!("size {part:?}: {v:?} is not a positive integer"))
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect();
    let sizes = sizes?;
    if sizes.is_empty() {
        return Err("no sizes given".into());
    }
    Ok(sizes)
}

#[derive(Debug, Clone)]
pub struct ScaleOptions {
    pub seed: u64,
    /// Wall-clock allowance per cell.
    pub budget: Duration,
    pub heuristics: HeuristicOptions,
    pub env: EnvConfig,
    pub model: ModelConfig,
}

impl Default for ScaleOptions {
    fn default() -> Self {
        ScaleOptions {
            seed: 42,
            budget: Duration::from_secs(60),
            heuristics: HeuristicOptions::default(),
            env: EnvConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

/// Greedy rollout with an untrained model that gives up once `deadline` passes.
/// Returns `Ok(None)` on timeout.
pub fn greedy_within(
    model: &PolicyModel,
    problem: Problem,
    env: &EnvConfig,
    deadline: Instant,
) -> Result<Option<Schedule>, NnError> {
    let mut rollout = Rollout::new(model, problem, env.clone())?;
    while !rollout.env().is_done() {
        if Instant::now() > deadline {
            return Ok(None);
        }
        let obs = rollout.observe();
        let fwd = policy_forward(model, &obs, rollout.embedding(), false);
        let a = greedy_action(&fwd.logits).ok_or(NnError::NoValidAction)?;
        let (t, j) = obs.actions[a];
        rollout.apply(t, j)?;
    }
    Ok(Some(rollout.env().extract_schedule()?))
}

/// Synthetic scale test. The exact solver runs only at oracle scale; larger sizes
/// get a SKIPPED row. `gnnrl` here is greedy inference with an untrained model.
pub fn run_scale(sizes: &[(usize, usize)], methods: &[Method], opts: &ScaleOptions) -> Vec<BenchRecord> {
    let mut out = Vec::new();
    for &(nodes, tasks) in sizes {
        let bundle = generate_synthetic(nodes, tasks, opts.seed);
        let (system, workflow) = (&bundle.system, &bundle.workflows[0]);
        for &method in methods {
            let mut rec = BenchRecord::new(workflow, system, method.as_str());
            rec.workflow = format!("{nodes}x{tasks}");
            let budget_hit = |rec: &mut BenchRecord| {
                if rec.solver_time_s > opts.budget.as_secs_f64() && rec.status.is_clean() {
                    rec.status = CellStatus::Timeout;
                }
            };
            let rec = match method {
                Method::Exact if tasks > ORACLE_MAX_TASKS || nodes > ORACLE_MAX_NODES => {
                    rec.status = CellStatus::Skipped;
                    rec
                }
                Method::Exact | Method::Heft | Method::Olb => {
                    let cell_opts = BenchOptions {
                        time_limit: opts.budget,
                        heuristics: opts.heuristics,
                        ..BenchOptions::default()
                    };
                    let mut r = run_cell(system, workflow, method, &cell_opts).remove(0);
                    r.workflow = rec.workflow;
                    budget_hit(&mut r);
                    r
                }
                Method::GnnRl => {
                    let problem = Problem::new(system, workflow);
                    let model = PolicyModel::new(opts.model.dims(&problem), opts.seed);
                    let deadline = Instant::now() + opts.budget;
                    let out = timed(rec, true, || {
                        match greedy_within(&model, problem, &opts.env, deadline) {
                            Ok(Some(s)) => Ok((s, false)),
                            Ok(None) => Err("budget exhausted".into()),
                            Err(e) => Err(e.to_string()),
                        }
                    });
                    let mut r = finish(out, workflow, system);
                    if r.status == CellStatus::Failed("budget exhausted".into()) {
                        r.status = CellStatus::Timeout;
                    }
                    r
                }
            };
            out.push(rec);
        }
    }
    out
}

/// Per-node lanes of `{task, start, end}` sorted by start, one lane per system node.
pub fn emit_gantt_data(schedule: &Schedule, system: &System) -> Value {
    let lanes: Vec<Value> = system
        .nodes()
        .map(|node| {
            let mut tasks: Vec<_> = schedule
                .entries
                .values()
                .filter(|e| e.node_id == node.id)
                .collect();
            tasks.sort_by(|a, b| a.start.total_cmp(&b.start).then_with(|| a.task_id.cmp(&b.task_id)));
            json!({
                "node": node.id,
                "tasks": tasks
                    .iter()
                    .map(|e| json!({"task": e.task_id, "start": e.start, "end": e.end}))
                    .collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "method": schedule.method.as_str(),
        "makespan": schedule.makespan,
        "lanes": lanes,
    })
}
