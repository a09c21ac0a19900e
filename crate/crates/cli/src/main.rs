//! Batch front-end: parse a JSON run configuration, dispatch
//! synth / simulate / verify / bench commands, and write report artifacts
//! (JSON reports, CSV trajectories and gains) to the output directory.
//!
//! Exit codes: 0 success, 2 configuration error, 3 infeasible (or failed
//! certification), 4 divergence, 5 numerical failure, 6 I/O error.

use clap::{Args, Parser, Subcommand};
use it2lmi::bench_pendulum::{self, BenchOptions};
use it2lmi::config::{ConfigError, RunConfig};
use it2lmi::fou_partition::build_partition;
use it2lmi::fuzzy_model::LargeScaleSystem;
use it2lmi::simulate::{integrate, attenuation_ratio, GainTable, IntegrateOptions, Trajectory};
use it2lmi::synthesis::{minimize_gamma, synthesize, SynthesisError, SynthesisResult};
use nalgebra::DMatrix;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;
const EXIT_NUMERICAL: u8 = 5;
const EXIT_IO: u8 = 6;

#[derive(Parser)]
#[command(name = "it2lmi", version, about = "IT2 fuzzy LMI synthesis and verification toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for sampled diagnostics.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize decentralized gains from a model config.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Integrate the open or closed loop and export the trajectory.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Gains JSON (a synth result.json or a bare gains array); omitted
        /// = open loop (G = 0).
        #[arg(long)]
        gains: Option<PathBuf>,
    },
    /// Certify extended dissipativity along a stored trajectory.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Trajectory CSV produced by `simulate` or `bench`.
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Built-in benchmarks.
    Bench {
        #[command(subcommand)]
        which: BenchCommand,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Coupled inverted pendulums: synthesize, simulate, certify.
    Pendulum {
        #[command(flatten)]
        common: CommonArgs,
    },
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Io(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        Failure::new(code, "config", e.to_string())
    }
}

impl From<SynthesisError> for Failure {
    fn from(e: SynthesisError) -> Self {
        let code = match e {
            SynthesisError::Infeasible { .. } | SynthesisError::BracketInfeasible(_) => {
                EXIT_INFEASIBLE
            }
            SynthesisError::Numerical => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        };
        Failure::new(code, "synthesis", e.to_string())
    }
}

fn io_fail(e: std::io::Error, what: &Path) -> Failure {
    Failure::new(EXIT_IO, "io", format!("{}: {e}", what.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (out_dir, result) = dispatch(cli.cmd);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error ({}): {}", f.kind, f.message);
            let diag = json!({
                "error": f.kind,
                "message": f.message,
                "exit_code": f.code,
            });
            if let Some(dir) = out_dir {
                let _ = std::fs::create_dir_all(&dir);
                let _ = std::fs::write(
                    dir.join("diagnostic.json"),
                    serde_json::to_string_pretty(&diag).unwrap(),
                );
            }
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cmd: Command) -> (Option<PathBuf>, Result<(), Failure>) {
    let run = |common: &CommonArgs,
               f: &dyn Fn(&CommonArgs, &Path) -> Result<(), Failure>|
     -> (Option<PathBuf>, Result<(), Failure>) {
        let out = resolve_out_dir(common);
        let res = match &out {
            Ok(dir) => {
                let dir = dir.clone();
                std::fs::create_dir_all(&dir)
                    .map_err(|e| io_fail(e, &dir))
                    .and_then(|()| f(common, &dir))
            }
            Err(_) => Err(Failure::new(EXIT_CONFIG, "config", "bad output dir")),
        };
        (out.ok(), res)
    };
    match cmd {
        Command::Synth { common } => run(&common, &cmd_synth),
        Command::Simulate { common, gains } => {
            run(&common, &move |c, dir| cmd_simulate(c, dir, gains.as_deref()))
        }
        Command::Verify { common, trajectory } => {
            run(&common, &move |c, dir| cmd_verify(c, dir, &trajectory))
        }
        Command::Bench {
            which: BenchCommand::Pendulum { common },
        } => run(&common, &cmd_bench_pendulum),
    }
}

fn resolve_out_dir(common: &CommonArgs) -> Result<PathBuf, ()> {
    if let Some(out) = &common.out {
        return Ok(out.clone());
    }
    if let Some(cfg_path) = &common.config {
        if let Ok(cfg) = RunConfig::from_file(cfg_path) {
            if let Some(dir) = cfg.output_dir {
                return Ok(PathBuf::from(dir));
            }
        }
    }
    Ok(PathBuf::from("."))
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, Failure> {
    let path = common.config.as_ref().ok_or_else(|| {
        Failure::new(EXIT_CONFIG, "config", "--config is required for this command")
    })?;
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| io_fail(e, &path))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), Failure> {
    write_text(dir, name, &(serde_json::to_string_pretty(value).unwrap() + "\n"))
}

fn gains_json(gains: &GainTable) -> serde_json::Value {
    json!(gains
        .iter()
        .map(|gi| gi
            .iter()
            .map(|g| g
                .row_iter()
                .map(|r| r.iter().copied().collect::<Vec<f64>>())
                .collect::<Vec<_>>())
            .collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn gains_csv(gains: &GainTable) -> String {
    let mut out = String::from("subsystem,rule,row,col,value\n");
    for (i, gi) in gains.iter().enumerate() {
        for (j, g) in gi.iter().enumerate() {
            for r in 0..g.nrows() {
                for c in 0..g.ncols() {
                    out.push_str(&format!(
                        "{},{},{},{},{:.17e}\n",
                        i + 1,
                        j + 1,
                        r + 1,
                        c + 1,
                        g[(r, c)]
                    ));
                }
            }
        }
    }
    out
}

fn synthesis_json(res: &SynthesisResult, gamma: Option<f64>) -> serde_json::Value {
    json!({
        "gamma": gamma,
        "gains": gains_json(&res.gains),
        "abar": res.abar,
        "slack": res.slack,
        "condition_warnings": res.condition_warnings,
        "constraints": res.reports.iter().map(|r| json!({
            "label": r.label,
            "margin": r.margin,
            "satisfied": r.satisfied,
        })).collect::<Vec<_>>(),
    })
}

fn build_problem(
    cfg: &RunConfig,
) -> Result<(LargeScaleSystem, it2lmi::fou_partition::FouPartition), Failure> {
    let system = cfg.model.build()?;
    let boxes = cfg.partition.state_boxes(&cfg.model)?;
    let partition = build_partition(
        &system,
        &boxes,
        cfg.partition.tau,
        cfg.partition.samples_per_cell,
        cfg.partition.margin,
    )
    .map_err(|e| Failure::new(EXIT_CONFIG, "partition", e.to_string()))?;
    Ok((system, partition))
}

fn cmd_synth(common: &CommonArgs, dir: &Path) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let (system, partition) = build_problem(&cfg)?;
    let opts = cfg.synthesis.to_options();
    let (result, gamma, trace) = if cfg.performance.minimize() {
        let search = minimize_gamma(&system, &partition, &opts)?;
        (search.result, Some(search.gamma), Some(search.trace))
    } else {
        let sub = &system.subsystems[0];
        let spec = cfg
            .performance
            .to_spec(sub.output_dim, sub.disturbance_dim)?;
        let res = synthesize(&system, &partition, &spec, &opts)?;
        (res, cfg.performance.gamma, None)
    };
    let mut report = synthesis_json(&result, gamma);
    report["gamma_trace"] = json!(trace);
    write_json(dir, "result.json", &report)?;
    write_text(dir, "gains.csv", &gains_csv(&result.gains))
}

fn load_gains(path: &Path) -> Result<GainTable, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_fail(e, path))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::new(EXIT_CONFIG, "gains", format!("{}: {e}", path.display())))?;
    let arr = value.get("gains").unwrap_or(&value);
    let nested: Vec<Vec<Vec<Vec<f64>>>> = serde_json::from_value(arr.clone()).map_err(|e| {
        Failure::new(
            EXIT_CONFIG,
            "gains",
            format!("{}: expected [[ [[row], ...] ]] layout: {e}", path.display()),
        )
    })?;
    Ok(nested
        .into_iter()
        .map(|gi| {
            gi.into_iter()
                .map(|rows| {
                    let nr = rows.len();
                    let nc = rows.first().map_or(0, |r| r.len());
                    DMatrix::from_fn(nr, nc, |r, c| rows[r][c])
                })
                .collect()
        })
        .collect())
}

fn cmd_simulate(common: &CommonArgs, dir: &Path, gains_path: Option<&Path>) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let system = cfg.model.build()?;
    let gains = gains_path.map(load_gains).transpose()?;
    let x0 = cfg.simulation.initial_states(&cfg.model)?;
    let dist = cfg
        .simulation
        .disturbances(&cfg.model, system.num_subsystems());
    let substeps = cfg.simulation.substeps.unwrap_or_else(|| {
        gains
            .as_ref()
            .map_or(1, |g| bench_pendulum::stable_substeps(&system, g, cfg.simulation.dt))
    });
    let opts = IntegrateOptions {
        t_final: cfg.simulation.t_final,
        dt: cfg.simulation.dt,
        blow_up: cfg.simulation.blow_up,
        substeps,
    };
    let traj = integrate(&system, gains.as_ref(), &x0, &dist, &opts)
        .map_err(|e| Failure::new(EXIT_CONFIG, "simulate", e.to_string()))?;
    write_text(dir, "trajectory.csv", &traj.to_csv())?;
    let summary = json!({
        "final_norm": traj.final_state_norm(),
        "diverged_at": traj.diverged_at,
        "steps": traj.num_steps(),
        "attenuation_ratio": attenuation_ratio(&traj).ok(),
        "substeps": substeps,
    });
    write_json(dir, "simulation.json", &summary)?;
    if let Some(t) = traj.diverged_at {
        return Err(Failure::new(
            EXIT_DIVERGENCE,
            "divergence",
            format!("state norm crossed the blow-up bound at t = {t:.3}"),
        ));
    }
    Ok(())
}

fn cmd_verify(common: &CommonArgs, dir: &Path, trajectory: &Path) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let text = std::fs::read_to_string(trajectory).map_err(|e| io_fail(e, trajectory))?;
    let traj = Trajectory::from_csv(&text)
        .map_err(|e| Failure::new(EXIT_CONFIG, "trajectory", e.to_string()))?;
    let n_z = traj.outputs.iter().map(|ch| ch[0].len()).sum::<usize>().max(1) / traj.outputs.len().max(1);
    let m_w = traj
        .disturbances
        .iter()
        .map(|ch| ch[0].len())
        .max()
        .unwrap_or(1);
    let spec = cfg.performance.to_spec(n_z, m_w)?;
    let report = it2lmi::dissipativity::certify(&traj, &spec)
        .map_err(|e| Failure::new(EXIT_CONFIG, "certify", e.to_string()))?;
    let value = json!({
        "min_margin": report.min_margin,
        "rho": report.rho,
        "passed": report.passed,
        "samples": report.margins.len(),
    });
    write_json(dir, "certification.json", &value)?;
    if !report.passed {
        return Err(Failure::new(
            EXIT_INFEASIBLE,
            "certification",
            format!("dissipativity margin {:.3e} below rho {:.3e}", report.min_margin, report.rho),
        ));
    }
    Ok(())
}

fn cmd_bench_pendulum(common: &CommonArgs, dir: &Path) -> Result<(), Failure> {
    // config optional: defaults reproduce the reference scenario
    let mut opts = BenchOptions::default();
    if let Some(path) = &common.config {
        let cfg = RunConfig::from_file(path)?;
        opts.cells_per_dim = cfg.partition.cells_per_dim;
        opts.velocity_bound = cfg.partition.velocity_bound;
        opts.tau = cfg.partition.tau;
        opts.samples_per_cell = cfg.partition.samples_per_cell;
        opts.margin = cfg.partition.margin;
        opts.seed = cfg.seed;
        opts.gamma_bracket = cfg.synthesis.gamma_bracket;
        opts.gamma_rel_tol = cfg.synthesis.gamma_rel_tol;
        opts.t_final = cfg.simulation.t_final;
        opts.dt = cfg.simulation.dt;
        if let Some(p) = cfg.model.pendulum_params {
            opts.params = p;
        }
    }
    if let Some(seed) = common.seed {
        opts.seed = seed;
    }
    let outcome = bench_pendulum::run_reference_scenario(&opts).map_err(|e| match e {
        bench_pendulum::BenchError::Synthesis(s) => s.into(),
        other => Failure::new(EXIT_CONFIG, "bench", other.to_string()),
    })?;
    write_text(
        dir,
        "report.json",
        &(serde_json::to_string_pretty(&outcome.report).unwrap() + "\n"),
    )?;
    write_text(
        dir,
        "timings.json",
        &(serde_json::to_string_pretty(&outcome.timings).unwrap() + "\n"),
    )?;
    write_text(dir, "open_loop.csv", &outcome.open_loop.to_csv())?;
    write_text(dir, "closed_loop.csv", &outcome.closed_loop.to_csv())?;
    write_text(dir, "zero_state.csv", &outcome.zero_state.to_csv())?;
    write_text(dir, "gains.csv", &gains_csv(&outcome.synthesis.gains))
}
