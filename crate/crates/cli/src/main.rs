use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use oppcharge::benders::{solve_cb, CbConfig};
use oppcharge::direct::solve_direct;
use oppcharge::heuristic3s::{run_3s_with, Execution, HeuristicConfig};
use oppcharge::mip::{MipOptions, MipStatus};
use oppcharge::model::{Instance, InstanceFile, ModelError};
use oppcharge::notional::{generate, NotionalParams};
use oppcharge::plan::{ChargingPlan, PlanError, PlanFile};
use oppcharge::report::{write_histogram, write_schedule, Summary};
use oppcharge::simulate::{hourly_charging_histogram, replay, ScenarioTransform};

/// Charging-plan feasibility tolerance in kWh.
const SOC_TOL_KWH: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "oppcharge", version, about = "Opportunity-charging schedules for electric bus fleets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Direct,
    Cb,
    #[value(name = "3s")]
    ThreeS,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Cb => "cb",
            Method::ThreeS => "3s",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the two-route test network for one charger power.
    Generate {
        #[arg(long, default_value_t = 400.0)]
        power_kw: f64,
        #[arg(long)]
        initial_kwh: Option<f64>,
        #[arg(long)]
        final_min_kwh: Option<f64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Solve an instance and write plan, reports and summary.
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "3s")]
        method: Method,
        #[arg(long, default_value_t = 3600.0)]
        time_limit_s: f64,
        #[arg(long, default_value_t = 500)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        theta_std: f64,
        #[arg(long, default_value_t = 10)]
        max_cuts: usize,
        /// Seed the direct solve with the heuristic's best plan.
        #[arg(long)]
        warm_start: bool,
        /// Run heuristic iterations on one thread.
        #[arg(long)]
        sequential: bool,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Replay a plan against an instance and check its charge windows.
    Evaluate {
        instance: PathBuf,
        plan: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Stretch trip durations in a departure window.
    Scenario {
        instance: PathBuf,
        /// `HH:MM-HH:MM` or minutes `START-END`, end exclusive.
        #[arg(long)]
        window: String,
        #[arg(long)]
        multiplier: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
}

/// Failure with a chosen exit status.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Exit(2, msg.into()).into()
}

fn load_instance(path: &Path) -> Result<Instance> {
    let file = InstanceFile::load(path).map_err(|e| invalid(e.to_string()))?;
    Instance::from_file(&file).map_err(|e| match e {
        ModelError::Io(m) => anyhow::anyhow!(m),
        other => invalid(format!("{}: {other}", path.display())),
    })
}

fn parse_clock(s: &str) -> Result<f64> {
    let s = s.trim();
    match s.split_once(':') {
        Some((h, m)) => {
            let h: f64 = h.parse().with_context(|| format!("bad hour in {s}"))?;
            let m: f64 = m.parse().with_context(|| format!("bad minute in {s}"))?;
            Ok(h * 60.0 + m)
        }
        None => s.parse().with_context(|| format!("bad time {s}")),
    }
}

fn parse_window(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once('-')
        .ok_or_else(|| invalid(format!("window {s} must look like 07:00-09:00")))?;
    Ok((parse_clock(a).map_err(|e| invalid(e.to_string()))?, parse_clock(b).map_err(|e| invalid(e.to_string()))?))
}

fn write_reports(dir: &Path, inst: &Instance, plan: &ChargingPlan) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    plan.to_file(inst)
        .save(dir.join("plan.json"))
        .context("writing plan")?;
    write_schedule(inst, plan, fs::File::create(dir.join("schedule.csv"))?)?;
    write_histogram(&hourly_charging_histogram(plan), fs::File::create(dir.join("histogram.csv"))?)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn solve(
    instance: &Path,
    method: Method,
    time_limit_s: f64,
    iterations: usize,
    seed: u64,
    theta_std: f64,
    max_cuts: usize,
    warm_start: bool,
    sequential: bool,
    out_dir: &Path,
) -> Result<()> {
    if !(time_limit_s > 0.0) {
        return Err(invalid("time limit must be positive"));
    }
    let inst = load_instance(instance)?;
    let start = Instant::now();
    let limit = Duration::from_secs_f64(time_limit_s);
    let heuristic = HeuristicConfig {
        iterations,
        theta_std,
        seed,
        ..HeuristicConfig::default()
    };
    heuristic.validate().map_err(|e| invalid(e.to_string()))?;
    let exec = if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let log_path = out_dir.join("log.jsonl");

    let (plan, summary) = match method {
        Method::ThreeS => {
            let run = run_3s_with(&inst, &heuristic, exec)?;
            run.write_log(fs::File::create(&log_path)?)?;
            let s = Summary {
                method: method.name().into(),
                status: "heuristic".into(),
                objective_min: run.best.objective,
                time_to_best_s: run.time_to_best_s,
                total_time_s: start.elapsed().as_secs_f64(),
                delayed_trips: run.best.delayed_trips(),
                total_charge_min: run.best.total_charge_min(),
                proven_optimal: run.best.objective <= 0.0,
                iterations: run.iterations_run,
            };
            (run.best, s)
        }
        Method::Cb => {
            let cfg = CbConfig {
                heuristic,
                max_cuts,
                time_limit: Some(limit),
                seed,
                warm_start: true,
            };
            let out = solve_cb(&inst, &cfg)?;
            out.write_trace(fs::File::create(&log_path)?)?;
            let plan = out.plan().clone();
            let s = Summary {
                method: method.name().into(),
                status: if out.proven_optimal { "optimal" } else { "time_limit" }.into(),
                objective_min: plan.objective,
                time_to_best_s: out.state.stats.time_to_best_s,
                total_time_s: start.elapsed().as_secs_f64(),
                delayed_trips: plan.delayed_trips(),
                total_charge_min: plan.total_charge_min(),
                proven_optimal: out.proven_optimal,
                iterations: out.state.stats.iterations,
            };
            (plan, s)
        }
        Method::Direct => {
            let warm = if warm_start {
                Some(run_3s_with(&inst, &heuristic, exec)?.best)
            } else {
                None
            };
            let opts = MipOptions {
                time_limit: Some(limit.saturating_sub(start.elapsed())),
                ..MipOptions::default()
            };
            let out = solve_direct(&inst, &opts, warm.as_ref())?;
            let Some(plan) = out.plan else {
                if out.status == MipStatus::Infeasible {
                    return Err(invalid("model is infeasible"));
                }
                return Err(Exit(3, "time limit reached without a feasible plan".into()).into());
            };
            let optimal = out.status == MipStatus::Optimal;
            let s = Summary {
                method: method.name().into(),
                status: if optimal { "optimal" } else { "time_limit" }.into(),
                objective_min: plan.objective,
                time_to_best_s: out.wall_s,
                total_time_s: start.elapsed().as_secs_f64(),
                delayed_trips: plan.delayed_trips(),
                total_charge_min: plan.total_charge_min(),
                proven_optimal: optimal,
                iterations: out.nodes,
            };
            (plan, s)
        }
    };
    write_reports(out_dir, &inst, &plan)?;
    fs::write(out_dir.join("summary.txt"), summary.to_string())?;
    print!("{summary}");
    info!("wrote results to {}", out_dir.display());
    Ok(())
}

fn evaluate(instance: &Path, plan_path: &Path, out_dir: Option<&Path>) -> Result<()> {
    let inst = load_instance(instance)?;
    let file = PlanFile::load(plan_path).map_err(|e| invalid(format!("{}: {e}", plan_path.display())))?;
    let (sequences, charge) = file.resolve(&inst).map_err(|e| invalid(e.to_string()))?;
    let plan = ChargingPlan::settle(&inst, sequences, charge).map_err(|e| match e {
        PlanError::Io(m) => anyhow::anyhow!(m),
        other => invalid(format!("plan does not fit the instance: {other}")),
    })?;
    let rep = replay(&inst, &plan).map_err(|e| invalid(e.to_string()))?;
    let (worst, at) = plan.soc_violation(&inst);
    let feasible = worst <= SOC_TOL_KWH;
    println!("objective_min={}", rep.total_delay_min);
    println!("file_objective_min={}", file.objective_min);
    println!("delayed_trips={}", plan.delayed_trips());
    println!("total_charge_min={}", plan.total_charge_min());
    println!("feasible={feasible}");
    if !feasible {
        println!("worst_violation_kwh={worst}");
        println!("worst_trip={}", at.unwrap_or_default());
    }
    if let Some(dir) = out_dir {
        write_reports(dir, &inst, &plan)?;
    }
    if !feasible {
        return Err(invalid("plan violates a charge window"));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            power_kw,
            initial_kwh,
            final_min_kwh,
            out,
        } => {
            if !(power_kw > 0.0) {
                return Err(invalid("power must be positive"));
            }
            let mut p = NotionalParams::new(power_kw);
            if let Some(v) = initial_kwh {
                p.initial_energy_kwh = v;
            }
            if let Some(v) = final_min_kwh {
                p.final_min_energy_kwh = v;
            }
            let file = generate(&p);
            Instance::from_file(&file).map_err(|e| invalid(e.to_string()))?;
            file.save(&out).map_err(|e| anyhow::anyhow!(e.to_string()))?;
            println!("buses={}", file.buses.len());
            println!("trips={}", file.trips.len());
            Ok(())
        }
        Command::Solve {
            instance,
            method,
            time_limit_s,
            iterations,
            seed,
            theta_std,
            max_cuts,
            warm_start,
            sequential,
            out_dir,
        } => solve(
            &instance,
            method,
            time_limit_s,
            iterations,
            seed,
            theta_std,
            max_cuts,
            warm_start,
            sequential,
            &out_dir,
        ),
        Command::Evaluate { instance, plan, out_dir } => evaluate(&instance, &plan, out_dir.as_deref()),
        Command::Scenario {
            instance,
            window,
            multiplier,
            out,
        } => {
            let (a, b) = parse_window(&window)?;
            let tr = ScenarioTransform::new(a, b, multiplier).map_err(invalid)?;
            let file = InstanceFile::load(&instance).map_err(|e| invalid(e.to_string()))?;
            let changed = tr.apply_file(&file);
            Instance::from_file(&changed).map_err(|e| invalid(e.to_string()))?;
            changed.save(&out).map_err(|e| anyhow::anyhow!(e.to_string()))?;
            let n = file
                .trips
                .iter()
                .zip(&changed.trips)
                .filter(|(x, y)| x.sched_duration_min != y.sched_duration_min)
                .count();
            println!("trips_changed={n}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Exit>().map_or(1, |x| x.0);
            ExitCode::from(code)
        }
    }
}
