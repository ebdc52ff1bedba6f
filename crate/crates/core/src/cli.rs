//! Command-line front end. Exit codes: 0 success, 1 usage or parse error, 2 infeasible
//! instance, 3 exact search stopped by its time limit (the incumbent is still written).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{
    emit_gantt_data, format_table, parse_sizes, run_bench, run_scale, write_records_csv,
    BenchOptions, ScaleOptions,
};
use crate::env::{EnvConfig, RewardNorm};
use crate::exact::{solve_exact, ExactError, ObjectiveWeights, SolveStatus};
use crate::heuristics::{schedule_heft, schedule_olb_with, HeuristicError, HeuristicOptions};
use crate::ingest::{
    generate_synthetic, load_system, load_workflows, parse_schedule_json, schedule_to_json,
    system_to_json, workflows_to_json, StgDefaults,
};
use crate::model::{FeatureSet, Method, Schedule, System, Workflow};
use crate::nn::{infer_schedule, load_model, save_model, train, NnError, PpoConfig};
use crate::validate::{validate_schedule_with, ValidationMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "hetsched", version, about = "Workflow scheduling on heterogeneous nodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Schedule one workflow with one method and print the schedule JSON.
    Solve(SolveArgs),
    /// Run several methods over several workflows and report a table.
    Bench(BenchArgs),
    /// Run methods over generated instances of growing size.
    Scale(ScaleArgs),
    /// Train a policy on one workflow and write the model file.
    Train(TrainArgs),
    /// Check a schedule JSON against a system and workflow.
    Validate(ValidateArgs),
    /// Write a generated system and workflow.
    Gen(GenArgs),
}

#[derive(Args, Debug, Clone)]
struct WorkflowInput {
    /// Workflows JSON document or `.stg` file.
    #[arg(long)]
    workflow: PathBuf,
    /// Which workflow of a multi-workflow document to use (default: the first).
    #[arg(long)]
    workflow_id: Option<String>,
    /// Cores requested by each STG task.
    #[arg(long, default_value_t = 1)]
    stg_cores: u32,
    /// Comma-separated features requested by each STG task.
    #[arg(long, value_delimiter = ',')]
    stg_features: Vec<String>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum NormArg {
    Auto,
    On,
    Off,
}

#[derive(Args, Debug, Clone)]
struct EnvArgs {
    /// Delay starts by predecessor data transfer inside the environment.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    env_dtt: bool,
    /// Scale duration and makespan reward terms by the mean task duration.
    #[arg(long, value_enum, default_value_t = NormArg::Auto)]
    reward_norm: NormArg,
}

impl EnvArgs {
    fn config(&self) -> EnvConfig {
        EnvConfig {
            dtt: self.env_dtt,
            reward_norm: match self.reward_norm {
                NormArg::Auto => RewardNorm::Auto,
                NormArg::On => RewardNorm::On,
                NormArg::Off => RewardNorm::Off,
            },
            ..EnvConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    system: PathBuf,
    #[command(flatten)]
    input: WorkflowInput,
    #[arg(long)]
    method: Method,
    /// Model file, required for gnnrl.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Weight on total requested cores (exact only).
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Weight on makespan (exact only).
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Seconds before the exact search returns its incumbent.
    #[arg(long, default_value_t = 10.0)]
    time_limit: f64,
    #[arg(long)]
    olb_speed_scaled: bool,
    #[command(flatten)]
    env: EnvArgs,
    /// Schedule JSON destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-node Gantt lanes as JSON.
    #[arg(long)]
    gantt: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    workflows: Vec<PathBuf>,
    #[arg(long, default_value = "exact,heft,olb,gnnrl", value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 500)]
    train_episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 1)]
    stg_cores: u32,
    #[arg(long)]
    olb_speed_scaled: bool,
    #[command(flatten)]
    env: EnvArgs,
    /// Run cells concurrently (memory column becomes n/a).
    #[arg(long)]
    parallel: bool,
    /// CSV destination; without it the CSV goes to stdout and the table to stderr.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep trained models in this directory.
    #[arg(long)]
    model_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScaleArgs {
    /// Comma-separated NODESxTASKS sizes.
    #[arg(long, default_value = "10x10,100x100")]
    sizes: String,
    #[arg(long, default_value = "exact,olb,gnnrl", value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Seconds allowed per cell.
    #[arg(long, default_value_t = 60.0)]
    time_budget: f64,
    #[arg(long)]
    olb_speed_scaled: bool,
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    system: PathBuf,
    #[command(flatten)]
    input: WorkflowInput,
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3e-4)]
    lr: f64,
    /// Stop once greedy inference reaches this makespan.
    #[arg(long)]
    target_makespan: Option<f64>,
    #[command(flatten)]
    env: EnvArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV (default: the model path with `.log.csv` appended).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    system: PathBuf,
    #[command(flatten)]
    input: WorkflowInput,
    /// Check against the relaxed model the list heuristics schedule in.
    #[arg(long)]
    relaxed: bool,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long)]
    tasks: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Directory receiving `system.json` and `workflows.json`.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

/// A failure carrying its exit code.
struct Fail(i32, String);

impl Fail {
    fn usage(msg: impl Into<String>) -> Self {
        Fail(EXIT_USAGE, msg.into())
    }
}

type CmdResult = Result<i32, Fail>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a, out, err),
        Command::Bench(a) => cmd_bench(a, out, err),
        Command::Scale(a) => cmd_scale(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Validate(a) => cmd_validate(a, out),
        Command::Gen(a) => cmd_gen(a, out),
    };
    match result {
        Ok(code) => code,
        Err(Fail(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

fn stg_defaults(input: &WorkflowInput) -> StgDefaults {
    StgDefaults {
        cores: input.stg_cores,
        features: input.stg_features.iter().cloned().collect::<FeatureSet>(),
    }
}

fn load_one(input: &WorkflowInput) -> Result<Workflow, Fail> {
    let workflows =
        load_workflows(&input.workflow, &stg_defaults(input)).map_err(|e| Fail::usage(e.to_string()))?;
    match &input.workflow_id {
        Some(id) => workflows
            .into_iter()
            .find(|w| &w.id == id)
            .ok_or_else(|| Fail::usage(format!("no workflow {id:?} in {}", input.workflow.display()))),
        None => workflows
            .into_iter()
            .next()
            .ok_or_else(|| Fail::usage(format!("{} holds no workflows", input.workflow.display()))),
    }
}

fn load_sys(path: &Path) -> Result<System, Fail> {
    load_system(path).map_err(|e| Fail::usage(e.to_string()))
}

fn write_file(path: &Path, text: &str) -> Result<(), Fail> {
    std::fs::write(path, text).map_err(|e| Fail::usage(format!("{}: {e}", path.display())))
}

fn seconds(s: f64, flag: &str) -> Result<Duration, Fail> {
    Duration::try_from_secs_f64(s).map_err(|_| Fail::usage(format!("{flag} must be a non-negative number of seconds")))
}

fn infeasible(task: &str) -> Fail {
    Fail(EXIT_INFEASIBLE, format!("infeasible: task {task:?} fits no node (features or capacity)"))
}

fn nn_fail(e: NnError) -> Fail {
    match e {
        NnError::Infeasible { task } => infeasible(&task),
        other => Fail::usage(other.to_string()),
    }
}

fn cmd_solve(a: SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let system = load_sys(&a.system)?;
    let workflow = load_one(&a.input)?;
    let mut code = EXIT_OK;
    let schedule: Schedule = match a.method {
        Method::Exact => {
            let weights = ObjectiveWeights::new(a.alpha, a.beta).map_err(|e| Fail::usage(e.to_string()))?;
            let limit = seconds(a.time_limit, "--time-limit")?;
            let sol = solve_exact(&system, &workflow, weights, limit).map_err(|e| match e {
                ExactError::Infeasible { task } => infeasible(&task),
                other => Fail::usage(other.to_string()),
            })?;
            if sol.status == SolveStatus::TimedOut {
                let _ = writeln!(err, "time limit reached; writing the best schedule found");
                code = EXIT_TIMEOUT;
            }
            sol.schedule
        }
        Method::Heft | Method::Olb => {
            let r = if a.method == Method::Heft {
                schedule_heft(&system, &workflow)
            } else {
                schedule_olb_with(&system, &workflow, HeuristicOptions { olb_speed_scaled: a.olb_speed_scaled })
            };
            r.map_err(|HeuristicError::InfeasibleTask { task }| infeasible(&task))?
        }
        Method::GnnRl => {
            let path = a
                .model
                .as_ref()
                .ok_or_else(|| Fail::usage("--method gnnrl requires --model <file>"))?;
            let model = load_model(path).map_err(nn_fail)?;
            let problem = crate::problem::Problem::new(&system, &workflow);
            if let Some(t) = problem.unplaceable_task() {
                return Err(infeasible(&problem.task(t).id));
            }
            infer_schedule(&model, &system, &workflow, &a.env.config()).map_err(nn_fail)?
        }
    };

    let mode = ValidationMode::for_method(schedule.method);
    let report = validate_schedule_with(&schedule, &workflow, &system, mode)
        .map_err(|e| Fail::usage(e.to_string()))?;
    let json = schedule_to_json(&schedule);
    match &a.out {
        Some(p) => write_file(p, &json)?,
        None => {
            let _ = writeln!(out, "{json}");
        }
    }
    if let Some(p) = &a.gantt {
        let g = serde_json::to_string_pretty(&emit_gantt_data(&schedule, &system)).expect("json");
        write_file(p, &g)?;
    }
    if !report.is_clean() {
        for v in &report.violations {
            let _ = writeln!(err, "{v}");
        }
        return Err(Fail::usage(format!("{} violations in the produced schedule", report.violations.len())));
    }
    Ok(code)
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let system = load_sys(&a.system)?;
    let stg = StgDefaults {
        cores: a.stg_cores,
        ..StgDefaults::default()
    };
    let mut workflows = Vec::new();
    for p in &a.workflows {
        workflows.extend(load_workflows(p, &stg).map_err(|e| Fail::usage(e.to_string()))?);
    }
    let opts = BenchOptions {
        weights: ObjectiveWeights::default(),
        time_limit: seconds(a.time_limit, "--time-limit")?,
        heuristics: HeuristicOptions { olb_speed_scaled: a.olb_speed_scaled },
        env: a.env.config(),
        ppo: PpoConfig {
            episodes: a.train_episodes,
            seed: a.seed,
            ..PpoConfig::default()
        },
        model_dir: a.model_dir.clone(),
        parallel: a.parallel,
    };
    let records = run_bench(&system, &workflows, &a.methods, &opts);
    let mut csv = Vec::new();
    write_records_csv(&records, &mut csv).map_err(|e| Fail::usage(e.to_string()))?;
    let table = format_table(&records);
    match &a.out {
        Some(p) => {
            write_file(p, &String::from_utf8(csv).expect("utf8"))?;
            let _ = out.write_all(table.as_bytes());
        }
        None => {
            let _ = out.write_all(&csv);
            let _ = err.write_all(table.as_bytes());
        }
    }
    Ok(EXIT_OK)
}

fn cmd_scale(a: ScaleArgs, out: &mut dyn Write) -> CmdResult {
    let sizes = parse_sizes(&a.sizes).map_err(Fail::usage)?;
    let opts = ScaleOptions {
        seed: a.seed,
        budget: seconds(a.time_budget, "--time-budget")?,
        heuristics: HeuristicOptions { olb_speed_scaled: a.olb_speed_scaled },
        env: a.env.config(),
        ..ScaleOptions::default()
    };
    let records = run_scale(&sizes, &a.methods, &opts);
    if let Some(p) = &a.out {
        let mut csv = Vec::new();
        write_records_csv(&records, &mut csv).map_err(|e| Fail::usage(e.to_string()))?;
        write_file(p, &String::from_utf8(csv).expect("utf8"))?;
    }
    let _ = out.write_all(format_table(&records).as_bytes());
    Ok(EXIT_OK)
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> CmdResult {
    let system = load_sys(&a.system)?;
    let workflow = load_one(&a.input)?;
    let config = PpoConfig {
        episodes: a.episodes,
        seed: a.seed,
        learning_rate: a.lr,
        target_makespan: a.target_makespan,
        ..PpoConfig::default()
    };
    let (model, log) = train(&system, &workflow, &a.env.config(), &config).map_err(nn_fail)?;
    save_model(&model, &a.out).map_err(nn_fail)?;
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".log.csv");
        PathBuf::from(s)
    });
    let file = std::fs::File::create(&log_path)
        .map_err(|e| Fail::usage(format!("{}: {e}", log_path.display())))?;
    log.write_csv(file).map_err(|e| Fail::usage(e.to_string()))?;
    let _ = writeln!(
        out,
        "trained {} episodes; best greedy makespan {} (episode {}); model {}, log {}",
        log.episodes.len(),
        log.best_greedy.map_or("n/a".into(), |m| m.to_string()),
        log.best_episode.map_or("n/a".into(), |e| e.to_string()),
        a.out.display(),
        log_path.display()
    );
    Ok(EXIT_OK)
}

fn cmd_validate(a: ValidateArgs, out: &mut dyn Write) -> CmdResult {
    let system = load_sys(&a.system)?;
    let workflow = load_one(&a.input)?;
    let bytes = std::fs::read(&a.schedule).map_err(|e| Fail::usage(format!("{}: {e}", a.schedule.display())))?;
    let schedule = parse_schedule_json(&bytes).map_err(|e| Fail::usage(e.to_string()))?;
    let mode = if a.relaxed {
        ValidationMode::Relaxed
    } else {
        ValidationMode::Full
    };
    let report = validate_schedule_with(&schedule, &workflow, &system, mode)
        .map_err(|e| Fail::usage(e.to_string()))?;
    if report.is_clean() {
        let _ = writeln!(out, "clean: {} assignments, makespan {}", schedule.len(), schedule.makespan);
        return Ok(EXIT_OK);
    }
    for v in &report.violations {
        let _ = writeln!(out, "{v}");
    }
    Err(Fail::usage(format!("{} violations", report.violations.len())))
}

fn cmd_gen(a: GenArgs, out: &mut dyn Write) -> CmdResult {
    if a.nodes == 0 || a.tasks == 0 {
        return Err(Fail::usage("--nodes and --tasks must be positive"));
    }
    let bundle = generate_synthetic(a.nodes, a.tasks, a.seed);
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Fail::usage(format!("{}: {e}", a.out_dir.display())))?;
    let sys = a.out_dir.join("system.json");
    let wf = a.out_dir.join("workflows.json");
    write_file(&sys, &system_to_json(&bundle.system))?;
    write_file(&wf, &workflows_to_json(&bundle.workflows))?;
    let _ = writeln!(out, "wrote {} and {}", sys.display(), wf.display());
    Ok(EXIT_OK)
}
