//! `hetsched`: schedule kernel chains onto FPGA/GPU pools from the command line.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hetsched_core::model::{Generation, SystemSpec, Workload};
use hetsched_core::perf::{fit_model, read_measurements, FitOptions, FitReport, ModelKind, ModelSet};
use hetsched_core::schedule::{
    baseline_schedule, default_fleetrec_pins, default_static_stages, robustness_study, write_pareto_csv, BaselineMode,
    Objective, OracleLimits, RobustnessCase, ScheduleReport, ScheduleResult, StageSpec,
};
use hetsched_core::sim::{emit_trace, simulate, SimOptions};
use hetsched_core::workload::{WorkloadConfig, DEMO_SUITE};
use hetsched_core::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "hetsched", version, about = "Pipeline scheduler for heterogeneous FPGA/GPU systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pick a schedule for one workload.
    Schedule(ScheduleArgs),
    /// Write the throughput/energy Pareto front as CSV.
    Pareto(ScheduleArgs),
    /// Run the selected schedule through the event simulator.
    Simulate(SimulateArgs),
    /// Cross workloads, interconnects and baselines into a CSV table.
    Compare(CompareArgs),
    /// Count sub-optimal choices under perturbed model coefficients.
    Robustness(RobustnessArgs),
    /// Fit model coefficients from a measurements CSV.
    Fit(FitArgs),
    /// Expand a workload preset or config into the kernel-chain JSON.
    GenWorkload(GenWorkloadArgs),
}

#[derive(Args, Clone)]
struct Inputs {
    /// System JSON; the bundled demo system when omitted.
    #[arg(long)]
    system: Option<PathBuf>,
    /// Perf-model JSON; the bundled demo coefficients when omitted.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Override the interconnect generation of the system.
    #[arg(long, value_enum)]
    interconnect: Option<Link>,
}

#[derive(Args, Clone)]
struct ScheduleArgs {
    /// Workload JSON file (kernel chain or config) or a preset such as `gcn:OA`.
    #[arg(long)]
    workload: String,
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_enum, default_value_t = Mode::Perf)]
    mode: Mode,
    /// Minimum throughput share of the fastest schedule for `balanced`.
    #[arg(long, default_value_t = 0.7)]
    fraction: f64,
    #[arg(long, value_enum, default_value_t = Baseline::Dype)]
    baseline: Baseline,
    /// Stage list JSON for `--baseline static`; derived from the kernel kinds when omitted.
    #[arg(long)]
    stages: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Total iterations; enough for 20 measured completions when 0.
    #[arg(long, default_value_t = 0)]
    iterations: usize,
    #[arg(long)]
    warmup: Option<usize>,
    /// Write the event timeline CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Workloads to compare; the demo suite when omitted.
    #[arg(long = "workload")]
    workloads: Vec<String>,
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long)]
    models: Option<PathBuf>,
    /// Interconnects to sweep; all three when omitted.
    #[arg(long = "interconnect", value_enum)]
    interconnects: Vec<Link>,
    #[arg(long, default_value_t = 0.7)]
    fraction: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RobustnessArgs {
    /// Workloads to study; the demo suite when omitted.
    #[arg(long = "workload")]
    workloads: Vec<String>,
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Kernel-count limit of the exhaustive search.
    #[arg(long, default_value_t = OracleLimits::default().max_kernels)]
    max_kernels: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with header `kind,m,k,n,nnz,seq_len,window,seconds`.
    #[arg(long)]
    measurements: PathBuf,
    /// Fit the GEMM `KN` and `MKN` terms with one shared coefficient.
    #[arg(long)]
    tie_gemm_c5: bool,
    /// Also write per-kind fit statistics as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenWorkloadArgs {
    #[arg(long)]
    workload: String,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    Perf,
    Energy,
    Balanced,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Baseline {
    Dype,
    Static,
    Fleetrec,
    GpuOnly,
    FpgaOnly,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Link {
    Pcie4,
    Pcie5,
    Cxl3,
}

impl Link {
    const ALL: [Link; 3] = [Link::Pcie4, Link::Pcie5, Link::Cxl3];

    fn generation(self) -> Generation {
        match self {
            Link::Pcie4 => Generation::Pcie4,
            Link::Pcie5 => Generation::Pcie5,
            Link::Cxl3 => Generation::Cxl3,
        }
    }
}

fn name_of<T: ValueEnum>(v: T) -> String {
    v.to_possible_value().expect("no skipped variants").get_name().to_string()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(Error::from).with_context(|| format!("parsing {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// A file holding either a kernel chain or a workload config, or a preset string.
fn load_workload(spec: &str) -> Result<Workload> {
    let path = Path::new(spec);
    let wl = if path.is_file() {
        let value: serde_json::Value = read_json(path)?;
        if value.get("kernels").is_some() {
            serde_json::from_value(value).map_err(Error::from)?
        } else {
            serde_json::from_value::<WorkloadConfig>(value).map_err(Error::from)?.build()?
        }
    } else {
        WorkloadConfig::from_preset(spec)?.build()?
    };
    wl.validate()?;
    Ok(wl)
}

fn load_inputs(inputs: &Inputs) -> Result<(SystemSpec, ModelSet)> {
    load_system_models(inputs.system.as_deref(), inputs.models.as_deref(), inputs.interconnect)
}

fn load_system_models(system: Option<&Path>, models: Option<&Path>, link: Option<Link>) -> Result<(SystemSpec, ModelSet)> {
    let mut sys = match system {
        Some(p) => read_json(p)?,
        None => SystemSpec::demo().clone(),
    };
    if let Some(link) = link {
        sys = sys.with_interconnect(sys.interconnect.with_generation(link.generation()));
    }
    sys.validate()?;
    let models = match models {
        Some(p) => read_json(p)?,
        None => ModelSet::demo().clone(),
    };
    models.validate()?;
    Ok((sys, models))
}

fn objective(mode: Mode, fraction: f64) -> Objective {
    match mode {
        Mode::Perf => Objective::PerfOptimized,
        Mode::Energy => Objective::EnergyOptimized,
        Mode::Balanced => Objective::Balanced {
            min_throughput_fraction: fraction,
        },
    }
}

fn baseline_mode(b: Baseline, wl: &Workload, sys: &SystemSpec, stages: Option<&Path>) -> Result<BaselineMode> {
    Ok(match b {
        Baseline::Dype => BaselineMode::Dype,
        Baseline::Static => BaselineMode::Static {
            stages: match stages {
                Some(p) => read_json::<Vec<StageSpec>>(p)?,
                None => default_static_stages(wl, sys)?,
            },
        },
        Baseline::Fleetrec => BaselineMode::FleetRec {
            pin: default_fleetrec_pins(wl, sys),
        },
        Baseline::GpuOnly => BaselineMode::GpuOnly,
        Baseline::FpgaOnly => BaselineMode::FpgaOnly,
    })
}

fn run_schedule(args: &ScheduleArgs) -> Result<(ScheduleResult, SystemSpec)> {
    if args.stages.is_some() && args.baseline != Baseline::Static {
        bail!(Error::validation("stages", "only used with --baseline static"));
    }
    let wl = load_workload(&args.workload)?;
    let (sys, models) = load_inputs(&args.inputs)?;
    let base = baseline_mode(args.baseline, &wl, &sys, args.stages.as_deref())?;
    let result = baseline_schedule(&wl, &sys, &models, &base, objective(args.mode, args.fraction))?;
    Ok((result, sys))
}

#[derive(Serialize)]
struct ScheduleOutput {
    workload: String,
    mode: String,
    fraction: Option<f64>,
    baseline: Baseline,
    interconnect: Generation,
    pareto_points: usize,
    selected: ScheduleReport,
    perf_opt: ScheduleReport,
    energy_opt: ScheduleReport,
}

fn cmd_schedule(args: &ScheduleArgs) -> Result<()> {
    let (r, sys) = run_schedule(args)?;
    log::info!("{}: {} points on the front", args.workload, r.pareto.len());
    write_json(
        args.out.as_deref(),
        &ScheduleOutput {
            workload: args.workload.clone(),
            mode: name_of(args.mode),
            fraction: (args.mode == Mode::Balanced).then_some(args.fraction),
            baseline: args.baseline,
            interconnect: sys.interconnect.generation,
            pareto_points: r.pareto.len(),
            selected: (&r.selected).into(),
            perf_opt: (&r.perf_opt).into(),
            energy_opt: (&r.energy_opt).into(),
        },
    )
}

fn cmd_pareto(args: &ScheduleArgs) -> Result<()> {
    let (r, _) = run_schedule(args)?;
    let mut w = output(args.out.as_deref())?;
    write_pareto_csv(&mut w, &r.pareto)?;
    w.flush()?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let (r, sys) = run_schedule(&args.schedule)?;
    let opts = SimOptions {
        iterations: args.iterations,
        warmup: args.warmup,
        trace: args.trace.is_some(),
    };
    let mut report = simulate(&r.selected, &sys, &opts)?;
    if let (Some(path), Some(events)) = (&args.trace, report.trace.take()) {
        let mut w = output(Some(path))?;
        emit_trace(&mut w, &events)?;
        w.flush()?;
    }
    write_json(args.schedule.out.as_deref(), &report)
}

const COMPARE_HEADER: &str = "workload,interconnect,baseline,status,mnemonic,throughput,energy_per_inference,\
dype_throughput,dype_energy_per_inference,dype_speedup,dype_energy_ratio";

/// Baselines of the comparison table, each with the objective it runs under.
const COMPARE_ROWS: [(&str, Baseline, Mode); 7] = [
    ("dype-perf", Baseline::Dype, Mode::Perf),
    ("dype-energy", Baseline::Dype, Mode::Energy),
    ("dype-balanced", Baseline::Dype, Mode::Balanced),
    ("static", Baseline::Static, Mode::Perf),
    ("fleetrec", Baseline::Fleetrec, Mode::Perf),
    ("gpu-only", Baseline::GpuOnly, Mode::Perf),
    ("fpga-only", Baseline::FpgaOnly, Mode::Perf),
];

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let workloads: Vec<String> = if args.workloads.is_empty() {
        DEMO_SUITE.iter().map(|s| s.to_string()).collect()
    } else {
        args.workloads.clone()
    };
    let links = if args.interconnects.is_empty() {
        Link::ALL.to_vec()
    } else {
        args.interconnects.clone()
    };
    let mut csv = csv::Writer::from_writer(output(args.out.as_deref())?);
    csv.write_record(COMPARE_HEADER.split(','))?;
    for name in &workloads {
        let wl = load_workload(name)?;
        for &link in &links {
            let (sys, models) = load_system_models(args.system.as_deref(), args.models.as_deref(), Some(link))?;
            let reference = baseline_schedule(&wl, &sys, &models, &BaselineMode::Dype, Objective::PerfOptimized)?;
            let (ref_tp, ref_e) = (reference.selected.throughput(), reference.selected.energy_per_period);
            for (label, base, mode) in COMPARE_ROWS {
                let run = baseline_mode(base, &wl, &sys, None)
                    .and_then(|b| Ok(baseline_schedule(&wl, &sys, &models, &b, objective(mode, args.fraction))?));
                let mut row = vec![name.clone(), name_of(link), label.to_string()];
                match run {
                    Ok(r) => {
                        let s = &r.selected;
                        row.extend([
                            "ok".to_string(),
                            s.mnemonic.clone(),
                            s.throughput().to_string(),
                            s.energy_per_period.to_string(),
                            ref_tp.to_string(),
                            ref_e.to_string(),
                            (ref_tp / s.throughput()).to_string(),
                            (ref_e / s.energy_per_period).to_string(),
                        ]);
                    }
                    Err(e) => {
                        let status = match e.downcast_ref::<Error>() {
                            Some(Error::Infeasible { .. }) => "infeasible",
                            Some(Error::Ineligible { .. }) => "ineligible",
                            Some(Error::Config(_)) => "unavailable",
                            _ => return Err(e),
                        };
                        log::info!("{name} {label}: {e}");
                        row.extend([status.to_string(), String::new(), String::new(), String::new()]);
                        row.extend([ref_tp.to_string(), ref_e.to_string(), String::new(), String::new()]);
                    }
                }
                csv.write_record(&row)?;
            }
        }
    }
    csv.flush()?;
    Ok(())
}

fn cmd_robustness(args: &RobustnessArgs) -> Result<()> {
    let names: Vec<String> = if args.workloads.is_empty() {
        DEMO_SUITE.iter().map(|s| s.to_string()).collect()
    } else {
        args.workloads.clone()
    };
    let cases = names
        .iter()
        .map(|n| {
            Ok(RobustnessCase {
                name: n.clone(),
                workload: load_workload(n)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (sys, models) = load_inputs(&args.inputs)?;
    let limits = OracleLimits {
        max_kernels: args.max_kernels,
        ..OracleLimits::default()
    };
    let report = robustness_study(&cases, &sys, &models, args.epsilon, args.trials, args.seed, limits)?;
    write_json(args.out.as_deref(), &report)
}

/// Model id a fitted kind is filed under in the output model set.
fn model_id(kind: ModelKind) -> &'static str {
    if kind.is_fpga() {
        "fpga"
    } else {
        "gpu"
    }
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let file = File::open(&args.measurements).with_context(|| format!("reading {}", args.measurements.display()))?;
    let rows = read_measurements(file)?;
    if rows.is_empty() {
        bail!(Error::validation("measurements", "no rows"));
    }
    let opts = FitOptions {
        tie_gemm_c5: args.tie_gemm_c5,
        ..FitOptions::default()
    };
    let mut set = ModelSet::new(Default::default());
    let mut reports: Vec<FitReport> = Vec::new();
    for kind in ModelKind::ALL {
        let data: Vec<_> = rows.iter().filter(|(k, _)| *k == kind).map(|(_, m)| m.clone()).collect();
        if data.is_empty() {
            continue;
        }
        let fit = fit_model(kind, &data, &opts)?;
        log::info!("{kind}: {} rows, rmse {:.3e} s", fit.rows, fit.rmse);
        set.models.entry(model_id(kind).to_string()).or_default().push(fit.model.clone());
        reports.push(fit);
    }
    if let Some(path) = &args.report {
        write_json(Some(path), &reports)?;
    }
    write_json(args.out.as_deref(), &set)
}

fn cmd_gen_workload(args: &GenWorkloadArgs) -> Result<()> {
    write_json(args.out.as_deref(), &load_workload(&args.workload)?)
}

/// 2 for bad input, 3 when no schedule exists, 4 when the exhaustive search refuses.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Infeasible { .. } => 3,
                Error::OracleGuard(_) => 4,
                Error::Validation(_)
                | Error::Config(_)
                | Error::Ineligible { .. }
                | Error::Parse(_)
                | Error::Json(_)
                | Error::Csv(_)
                | Error::Fit(_)
                | Error::Io(_) => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return 2;
        }
    }
    1
}

#[derive(Serialize)]
struct Diagnostic<'a> {
    exit_code: u8,
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    issues: Option<&'a [hetsched_core::Issue]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    blocking_kernels: Option<&'a [String]>,
}

fn report_error(err: &anyhow::Error, code: u8) {
    let core = err.chain().find_map(|c| c.downcast_ref::<Error>());
    let diag = Diagnostic {
        exit_code: code,
        error: format!("{err:#}"),
        issues: match core {
            Some(Error::Validation(issues)) => Some(issues),
            _ => None,
        },
        blocking_kernels: match core {
            Some(Error::Infeasible { kernels }) => Some(kernels),
            _ => None,
        },
    };
    eprintln!("{}", serde_json::to_string(&diag).expect("diagnostic serializes"));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Schedule(a) => cmd_schedule(a),
        Command::Pareto(a) => cmd_pareto(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Robustness(a) => cmd_robustness(a),
        Command::Fit(a) => cmd_fit(a),
        Command::GenWorkload(a) => cmd_gen_workload(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            report_error(&err, code);
            ExitCode::from(code)
        }
    }
}
