//! Command-line front end. `run` returns the process exit code:
//! 0 success, 1 I/O failure, 2 configuration rejection, 3 solver failure,
//! 4 verification failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::{default_config, load_config, ConfigError, RunConfig};
use crate::error::Error;
use crate::io::{
    fmt_f64, resolve_output_dir, write_checkpoint, write_csv, write_json, write_snapshots, Checkpoint,
};
use crate::objective::{control_radius, projection_formula};
use crate::optimizer::optimize;
use crate::problem::Problem;
use crate::state::{free_energy, ControlTrajectory, StateTrajectory};
use crate::time::control_norm;
use crate::verify::{
    run_gap_refinement, run_gradient_check, run_invariant_suite, run_stability_probe, run_taylor_test,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "chbc", version, about = "Boundary control of the viscous Cahn-Hilliard system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration; the bundled default is used when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Seed for random directions and probes, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the state system for the configured control.
    Simulate(Common),
    /// Minimize the cost over the admissible box.
    Optimize(Common),
    /// Compare adjoint, linearized and finite-difference derivatives.
    GradCheck(Common),
    /// Second-order remainder test of the linearization.
    TaylorTest(Common),
    /// Lipschitz ratios of the control-to-state map.
    StabilityProbe(Common),
    /// Separation, trace, positivity and energy checks of one forward solve.
    Invariants(Common),
}

enum Failure {
    Config(ConfigError),
    Run(Error),
    Verify(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn exit_code(f: &Failure) -> i32 {
    match f {
        Failure::Config(ConfigError::Read { .. }) => EXIT_IO,
        Failure::Config(_) => EXIT_CONFIG,
        Failure::Run(e) if e.is_solver_failure() => EXIT_SOLVER,
        Failure::Run(Error::Contract(_) | Error::Admissibility(_)) => EXIT_CONFIG,
        Failure::Run(_) => EXIT_IO,
        Failure::Verify(_) => EXIT_VERIFY,
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            match &f {
                Failure::Config(e) => eprintln!("error: {e}"),
                Failure::Run(e) => eprintln!("error: {e}"),
                Failure::Verify(m) => eprintln!("verification failed: {m}"),
            }
            exit_code(&f)
        }
    }
}

struct Session {
    config: RunConfig,
    out: PathBuf,
    seed: u64,
}

fn open(common: &Common) -> Result<Session, Failure> {
    let config = match &common.config {
        Some(p) => load_config(p).map_err(Failure::Config)?,
        None => default_config(),
    };
    let dir = common.out.clone().unwrap_or_else(|| config.output.directory.clone());
    let out = resolve_output_dir(&dir);
    std::fs::create_dir_all(&out).map_err(|e| Failure::Run(e.into()))?;
    let seed = common.seed.unwrap_or(config.verify.seed);
    Ok(Session { config, out, seed })
}

fn emit<T: Serialize>(dir: &Path, value: &T) -> Result<(), Failure> {
    write_json(&dir.join("summary.json"), value)?;
    println!("{}", serde_json::to_string_pretty(value).map_err(Error::from)?);
    Ok(())
}

fn verdict(pass: bool, what: &str) -> Result<(), Failure> {
    if pass {
        Ok(())
    } else {
        Err(Failure::Verify(what.to_string()))
    }
}

fn write_state_outputs(
    s: &Session,
    problem: &Problem,
    state: &StateTrajectory,
    u: &ControlTrajectory,
) -> Result<(), Error> {
    write_snapshots(&s.out, &problem.mesh, state, u, s.config.output.snapshot_stride)?;
    write_checkpoint(&s.out.join("checkpoint.bin"), &Checkpoint::new(&problem.mesh, state, u))
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate(c) => simulate(&open(&c)?),
        Command::Optimize(c) => optimize_cmd(&open(&c)?),
        Command::GradCheck(c) => grad_check(&open(&c)?),
        Command::TaylorTest(c) => taylor(&open(&c)?),
        Command::StabilityProbe(c) => stability(&open(&c)?),
        Command::Invariants(c) => invariants(&open(&c)?),
    }
}

fn simulate(s: &Session) -> Result<(), Failure> {
    let problem = s.config.build_problem()?;
    let u = s.config.initial_control(&problem);
    let ev = problem.evaluate(&u)?;
    let st = &ev.state;
    let times = st.times();
    let rows: Vec<Vec<String>> = (0..=st.steps())
        .map(|k| {
            let newton = if k == 0 { 0 } else { st.diagnostics.newton_iterations[k - 1] };
            vec![
                k.to_string(),
                fmt_f64(times[k]),
                fmt_f64(free_energy(st, k, &u, &problem.potentials, &problem.ops)),
                fmt_f64(st.mu[k].min_value()),
                fmt_f64(st.rho[k].max_abs()),
                newton.to_string(),
            ]
        })
        .collect();
    write_csv(
        &s.out.join("history.csv"),
        &["level", "time", "free_energy", "min_mu", "max_abs_rho", "newton_iterations"],
        &rows,
    )?;
    write_state_outputs(s, &problem, st, &u)?;
    emit(
        &s.out,
        &json!({
            "command": "simulate",
            "dimension": problem.mesh.dimension,
            "bulk_nodes": problem.mesh.n_bulk(),
            "boundary_nodes": problem.mesh.n_boundary(),
            "steps": st.steps(),
            "final_time": st.grid.final_time,
            "cost": ev.cost,
            "min_mu": st.diagnostics.min_mu,
            "separation_margin": st.diagnostics.separation_margin,
            "newton_iterations_total": st.diagnostics.newton_iterations.iter().sum::<usize>(),
            "bisection_fallbacks": st.diagnostics.bisection_fallbacks,
            "positivity_warnings": st.diagnostics.positivity_warnings.len(),
        }),
    )
}

fn optimize_cmd(s: &Session) -> Result<(), Failure> {
    let problem = s.config.build_problem()?;
    let u0 = s.config.initial_control(&problem);
    let res = optimize(&problem, &u0, &s.config.optimizer)?;
    let rows: Vec<Vec<String>> = res
        .history
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                fmt_f64(r.cost),
                fmt_f64(r.projected_gradient),
                fmt_f64(r.vi_residual),
                fmt_f64(r.step),
                r.backtracks.to_string(),
                fmt_f64(r.control_radius),
            ]
        })
        .collect();
    write_csv(
        &s.out.join("history.csv"),
        &["iteration", "cost", "projected_gradient", "vi_residual", "step", "backtracks", "control_radius"],
        &rows,
    )?;
    write_state_outputs(s, &problem, &res.last.state, &res.control)?;
    let last = res.history.last();
    let beta6 = problem.cost.beta[5];
    let projection_gap = if beta6 > 0.0 {
        let proj = projection_formula(&res.last.adjoint.q_gamma, beta6, &problem.bounds, problem.grid);
        let un = control_norm(&problem.ops, &problem.grid, &res.control.u);
        Some(control_norm(&problem.ops, &problem.grid, &proj.plus_scaled(-1.0, &res.control).u) / un.max(f64::MIN_POSITIVE))
    } else {
        None
    };
    let reference_cost = match s.config.reference_control(&problem) {
        Some(ur) => Some(problem.evaluate(&ur)?.cost.total),
        None => None,
    };
    emit(
        &s.out,
        &json!({
            "command": "optimize",
            "termination": res.termination,
            "iterations": res.history.len().saturating_sub(1),
            "cost": res.last.cost,
            "reference_cost": reference_cost,
            "initial_projected_gradient": res.initial_projected_gradient,
            "initial_vi_residual": res.initial_vi_residual,
            "projected_gradient": last.map(|r| r.projected_gradient),
            "vi_residual": last.map(|r| r.vi_residual),
            "projection_gap": projection_gap,
            "control_radius": control_radius(&res.control, &problem.ops),
            "radius_bound": problem.bounds.r0,
        }),
    )
}

fn grad_check(s: &Session) -> Result<(), Failure> {
    let v = &s.config.verify;
    let problem = s.config.build_problem()?;
    let u = s.config.initial_control(&problem);
    let report = run_gradient_check(&problem, &u, v.directions, &v.fd_epsilons, s.seed, v.amplitude)?;
    let refinement = run_gap_refinement(&s.config, v.directions, s.seed, v.amplitude)?;
    let pass = report.pass && refinement.pass;
    let rows: Vec<Vec<String>> = report
        .directions
        .iter()
        .flat_map(|d| {
            d.fd.iter().map(move |f| {
                vec![
                    d.index.to_string(),
                    fmt_f64(f.epsilon),
                    fmt_f64(f.value),
                    fmt_f64(d.derivatives.adjoint),
                    fmt_f64(d.derivatives.linearized),
                    fmt_f64(f.relative_error),
                ]
            })
        })
        .collect();
    write_csv(
        &s.out.join("history.csv"),
        &["direction", "epsilon", "finite_difference", "adjoint", "linearized", "fd_relative_error"],
        &rows,
    )?;
    emit(
        &s.out,
        &json!({"command": "grad-check", "pass": pass, "report": report, "refinement": refinement}),
    )?;
    verdict(pass, "gradient check")
}

fn taylor(s: &Session) -> Result<(), Failure> {
    let v = &s.config.verify;
    let problem = s.config.build_problem()?;
    let u = s.config.initial_control(&problem);
    let report = run_taylor_test(&problem, &u, v.directions, &v.taylor_scales, s.seed, v.amplitude)?;
    let rows: Vec<Vec<String>> = report
        .tables
        .iter()
        .enumerate()
        .flat_map(|(i, t)| {
            t.scales
                .iter()
                .zip(&t.remainders)
                .map(move |(e, r)| vec![i.to_string(), fmt_f64(*e), fmt_f64(*r)])
        })
        .collect();
    write_csv(&s.out.join("history.csv"), &["direction", "epsilon", "remainder"], &rows)?;
    emit(&s.out, &json!({"command": "taylor-test", "pass": report.pass, "report": report}))?;
    verdict(report.pass, "Taylor remainder slope")
}

fn stability(s: &Session) -> Result<(), Failure> {
    let v = &s.config.verify;
    let problem = s.config.build_problem()?;
    let report = run_stability_probe(&problem, v.stability_pairs, s.seed, v.amplitude)?;
    let rows: Vec<Vec<String>> = report
        .ratios
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i.to_string(), fmt_f64(*r)])
        .collect();
    write_csv(&s.out.join("history.csv"), &["pair", "ratio"], &rows)?;
    emit(&s.out, &json!({"command": "stability-probe", "pass": report.pass, "report": report}))?;
    verdict(report.pass, "Lipschitz ratios spread")
}

fn invariants(s: &Session) -> Result<(), Failure> {
    let problem = s.config.build_problem()?;
    let u = s.config.initial_control(&problem);
    let report = run_invariant_suite(&problem, &u);
    let rows: Vec<Vec<String>> = report
        .checks
        .iter()
        .map(|c| vec![c.name.to_string(), c.pass.to_string(), fmt_f64(c.value)])
        .collect();
    write_csv(&s.out.join("history.csv"), &["check", "pass", "value"], &rows)?;
    emit(&s.out, &json!({"command": "invariants", "pass": report.pass, "report": report}))?;
    verdict(report.pass, "invariants")
}
