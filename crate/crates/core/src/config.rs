//! Run configuration: TOML schema, validation against the standing
//! assumptions of the control problem, and problem construction.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adjoint::AdjointOptions;
use crate::error::{Error, Result};
use crate::field::{BoundaryField, BulkField};
use crate::geometry::{assemble_operators, build_mesh, Mesh};
use crate::objective::{control_radius, AdmissibleBox, CostSpec, Targets};
use crate::optimizer::OptimizerOptions;
use crate::potentials::{Coupling, LinearPerturbation, LogPotential, PotentialSet};
use crate::problem::Problem;
use crate::state::{solve_state, ControlTrajectory, InitialData, SolverOptions};
use crate::time::TimeGrid;

pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");
/// Attainable problem with targets generated by a known control.
pub const SYNTHETIC_CONFIG: &str = include_str!("../configs/synthetic.toml");

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub dimension: usize,
    /// Nodes per side.
    pub resolution: usize,
    pub domain_length: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub final_time: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub c_hat_bulk: f64,
    pub c_hat_boundary: f64,
    pub pi_slope_bulk: f64,
    pub pi_slope_boundary: f64,
    #[serde(default = "default_eps")]
    pub separation_margin: f64,
    #[serde(default = "default_coupling")]
    pub coupling: Coupling,
}

fn default_eps() -> f64 {
    1e-6
}

fn default_coupling() -> Coupling {
    Coupling::QuadraticConcave
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Constant {
        mu: f64,
        rho: f64,
    },
    /// `mean + amplitude * cos(m pi x/L) cos(m pi y/L)` for both fields.
    SmoothBump {
        mu_mean: f64,
        mu_amplitude: f64,
        rho_mean: f64,
        rho_amplitude: f64,
        mode: u32,
    },
    /// A bulk CSV in the snapshot layout (coordinates, mu, rho).
    FromFile {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// `mean + amplitude * cos(k pi x/L) cos(k pi y/L) cos(w pi t/T)`.
    Wave {
        mean: f64,
        amplitude: f64,
        space_frequency: u32,
        time_frequency: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Spatially constant targets; terminal targets reuse the same values.
    Constant {
        mu: f64,
        rho: f64,
        rho_boundary: f64,
    },
    /// Targets taken from the state driven by a reference control.
    Reference { control: ControlSpec },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub beta: [f64; 6],
    pub targets: TargetSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub lower: f64,
    pub upper: f64,
    /// Radius `R0` of the admissible set.
    pub radius: f64,
    /// Optional radius `R > R0` of the enclosing open ball.
    #[serde(default)]
    pub outer_radius: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    pub directions: usize,
    pub fd_epsilons: Vec<f64>,
    pub taylor_scales: Vec<f64>,
    pub stability_pairs: usize,
    /// Amplitude of random directions and probe controls.
    pub amplitude: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            directions: 3,
            fd_epsilons: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            taylor_scales: vec![0.4, 0.2, 0.1, 0.05],
            stability_pairs: 20,
            amplitude: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Write field snapshots every this many levels (the last level is always written).
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

fn default_stride() -> usize {
    10
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("chbc-out"),
            snapshot_stride: default_stride(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    pub time: TimeConfig,
    pub potentials: PotentialConfig,
    pub initial: InitialSpec,
    /// Control to simulate, and the optimizer's starting point.
    pub control: ControlSpec,
    pub cost: CostConfig,
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub adjoint: AdjointOptions,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// One failed check, labelled by the assumption it protects.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// `A1` .. `A7`, or `setup` for discretization parameters.
    pub assumption: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.assumption == "setup" {
            write!(f, "[setup] {}", self.message)
        } else {
            write!(f, "({}) {}", self.assumption, self.message)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("configuration rejected:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

pub fn parse_config(text: &str, base_dir: Option<&Path>) -> std::result::Result<RunConfig, ConfigError> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if let (InitialSpec::FromFile { path }, Some(dir)) = (&mut cfg.initial, base_dir) {
        if path.is_relative() {
            *path = dir.join(&*path);
        }
    }
    let v = cfg.validate();
    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(v))
    }
}

pub fn load_config(path: &Path) -> std::result::Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path.parent())
}

pub fn default_config() -> RunConfig {
    parse_config(DEFAULT_CONFIG, None).expect("bundled default configuration is valid")
}

pub fn synthetic_config() -> RunConfig {
    parse_config(SYNTHETIC_CONFIG, None).expect("bundled synthetic configuration is valid")
}

fn wave(spec: &ControlSpec, length: f64, final_time: f64, p: [f64; 2], t: f64) -> f64 {
    match *spec {
        ControlSpec::Zero => 0.0,
        ControlSpec::Constant { value } => value,
        ControlSpec::Wave {
            mean,
            amplitude,
            space_frequency,
            time_frequency,
        } => {
            let k = space_frequency as f64 * std::f64::consts::PI / length;
            let w = time_frequency * std::f64::consts::PI / final_time;
            mean + amplitude * (k * p[0]).cos() * (k * p[1]).cos() * (w * t).cos()
        }
    }
}

impl RunConfig {
    pub fn potential_set(&self) -> PotentialSet {
        let p = &self.potentials;
        PotentialSet {
            bulk: LogPotential { c_hat: p.c_hat_bulk },
            boundary: LogPotential {
                c_hat: p.c_hat_boundary,
            },
            pi: LinearPerturbation {
                slope: p.pi_slope_bulk,
            },
            pi_gamma: LinearPerturbation {
                slope: p.pi_slope_boundary,
            },
            coupling: p.coupling,
            eps_sep: p.separation_margin,
        }
    }

    pub fn mesh(&self) -> Result<Mesh> {
        build_mesh(self.mesh.dimension, self.mesh.resolution, self.mesh.domain_length)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.time.final_time, self.time.steps)
    }

    /// Same configuration with a different number of time steps.
    pub fn with_steps(&self, steps: usize) -> RunConfig {
        let mut c = self.clone();
        c.time.steps = steps;
        c
    }

    pub fn initial_data(&self, mesh: &Mesh) -> Result<InitialData> {
        let l = mesh.domain_length;
        match &self.initial {
            InitialSpec::Constant { mu, rho } => Ok(InitialData {
                mu0: BulkField::constant(mesh.n_bulk(), *mu),
                rho0: BulkField::constant(mesh.n_bulk(), *rho),
            }),
            InitialSpec::SmoothBump {
                mu_mean,
                mu_amplitude,
                rho_mean,
                rho_amplitude,
                mode,
            } => {
                let k = *mode as f64 * std::f64::consts::PI / l;
                let shape: Vec<f64> = mesh
                    .bulk_nodes
                    .iter()
                    .map(|p| (k * p[0]).cos() * (k * p[1]).cos())
                    .collect();
                Ok(InitialData {
                    mu0: BulkField(shape.iter().map(|s| mu_mean + mu_amplitude * s).collect()),
                    rho0: BulkField(shape.iter().map(|s| rho_mean + rho_amplitude * s).collect()),
                })
            }
            InitialSpec::FromFile { path } => {
                let (mu, rho) = crate::io::read_bulk_csv(path, mesh)?;
                Ok(InitialData { mu0: mu, rho0: rho })
            }
        }
    }

    pub fn control_from(&self, spec: &ControlSpec, mesh: &Mesh, grid: TimeGrid) -> ControlTrajectory {
        let coords = mesh.boundary_coords();
        let u = grid
            .times()
            .iter()
            .map(|&t| {
                BoundaryField(
                    coords
                        .iter()
                        .map(|&p| wave(spec, mesh.domain_length, grid.final_time, p, t))
                        .collect(),
                )
            })
            .collect();
        ControlTrajectory { grid, u }
    }

    pub fn initial_control(&self, problem: &Problem) -> ControlTrajectory {
        self.control_from(&self.control, &problem.mesh, problem.grid)
    }

    /// Checks against the standing assumptions, evaluated on the configured mesh.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut push = |a: &'static str, m: String| v.push(Violation { assumption: a, message: m });
        let mesh = match self.mesh() {
            Ok(m) => Some(m),
            Err(e) => {
                push("setup", e.to_string());
                None
            }
        };
        let grid = match self.grid() {
            Ok(g) => Some(g),
            Err(e) => {
                push("setup", e.to_string());
                None
            }
        };
        let p = &self.potentials;
        if !(p.separation_margin > 0.0 && p.separation_margin < 0.5) {
            push("setup", format!("separation margin must lie in (0, 0.5), got {}", p.separation_margin));
        }
        if self.solver.newton_tol <= 0.0 || self.solver.newton_max_iterations == 0 {
            push("setup", "Newton tolerance and iteration limit must be positive".into());
        }

        if let Some(mesh) = &mesh {
            match self.initial_data(mesh) {
                Ok(init) => {
                    let mmin = init.mu0.min_value();
                    if !(mmin >= 0.0) {
                        push("A1", format!("initial chemical potential must be nonnegative, min is {mmin}"));
                    }
                    let rmax = init.rho0.max_abs();
                    if !(rmax <= 1.0 - p.separation_margin) {
                        push(
                            "A1",
                            format!(
                                "initial rho must lie in [-1+{0:e}, 1-{0:e}], max |rho0| is {rmax}",
                                p.separation_margin
                            ),
                        );
                    }
                }
                Err(e) => push("A1", format!("initial data unavailable: {e}")),
            }
        }

        match p.coupling {
            Coupling::IdentityClamped => {}
            c => {
                if c.min_on_interval() < 0.0 {
                    push("A2", "coupling g must be nonnegative on [-1, 1]".into());
                }
                if !c.is_concave() {
                    push("A2", "coupling g must be concave on [-1, 1]".into());
                }
            }
        }
        if !p.pi_slope_bulk.is_finite() || !p.pi_slope_boundary.is_finite() {
            push("A2", "perturbation slopes must be finite".into());
        }
        if !(p.c_hat_bulk > 0.0 && p.c_hat_boundary > 0.0) {
            push("A3", "logarithmic potentials need positive coefficients".into());
        }

        let b = &self.bounds;
        if !(b.lower <= b.upper) {
            push("A4", format!("lower bound {} exceeds upper bound {}", b.lower, b.upper));
        }
        if !(b.radius > 0.0) {
            push("A4", "radius R0 must be positive".into());
        }
        if let (Some(mesh), Some(grid)) = (&mesh, &grid) {
            if b.lower <= b.upper && b.radius > 0.0 {
                let ng = mesh.n_boundary();
                let ops = assemble_operators(mesh);
                let nearest = 0.0_f64.clamp(b.lower, b.upper);
                let r = control_radius(&ControlTrajectory::constant(*grid, ng, nearest), &ops);
                if r > b.radius {
                    push("A4", format!("admissible set is empty: smallest control has radius {r} > R0"));
                }
                let u = self.control_from(&self.control, mesh, *grid);
                let bx = AdmissibleBox::uniform(ng, b.lower, b.upper, b.radius);
                if !bx.contains(&u) {
                    push("A4", "configured control leaves the box [lower, upper]".into());
                } else if control_radius(&u, &ops) > b.radius {
                    push("A4", "configured control exceeds the radius R0".into());
                }
                if let TargetSpec::Reference { control } = &self.cost.targets {
                    let ur = self.control_from(control, mesh, *grid);
                    if !bx.contains(&ur) {
                        push("A4", "reference control leaves the box [lower, upper]".into());
                    }
                }
            }
        }
        if let Some(r) = b.outer_radius {
            if !(r > b.radius) {
                push("A5", format!("outer radius {r} must exceed R0 = {}", b.radius));
            }
        }

        let beta = self.cost.beta;
        if beta.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            push("A6", "cost weights must be finite and nonnegative".into());
        }
        if let TargetSpec::Constant { mu, rho, rho_boundary } = self.cost.targets {
            if !(mu.is_finite() && rho.is_finite() && rho_boundary.is_finite()) {
                push("A6", "targets must be finite".into());
            }
        }
        let (b4, b5) = (beta[3], beta[4]);
        if b4 != 0.0 || b5 != 0.0 {
            if b4 != b5 {
                push(
                    "A7",
                    format!("terminal weights must coincide (beta4 = {b4}, beta5 = {b5}) or both vanish"),
                );
            } else if let TargetSpec::Constant { rho, rho_boundary, .. } = self.cost.targets {
                if rho != rho_boundary {
                    push(
                        "A7",
                        format!(
                            "bulk terminal target {rho} has trace different from boundary terminal target {rho_boundary}"
                        ),
                    );
                }
            }
        }
        v
    }

    pub fn targets(&self, mesh: &Mesh, grid: TimeGrid, init: &InitialData, ps: &PotentialSet, solver: &SolverOptions) -> Result<Targets> {
        let (nb, ng) = (mesh.n_bulk(), mesh.n_boundary());
        match &self.cost.targets {
            TargetSpec::Constant { mu, rho, rho_boundary } => Ok(Targets {
                mu_q: vec![BulkField::constant(nb, *mu); grid.levels()],
                rho_q: vec![BulkField::constant(nb, *rho); grid.levels()],
                rho_sigma: vec![BoundaryField::constant(ng, *rho_boundary); grid.levels()],
                rho_omega: BulkField::constant(nb, *rho),
                rho_gamma: BoundaryField::constant(ng, *rho_boundary),
            }),
            TargetSpec::Reference { control } => {
                let ops = assemble_operators(mesh);
                let u = self.control_from(control, mesh, grid);
                let st = solve_state(init, &u, ps, &ops, solver)?;
                Ok(Targets::from_state(&st))
            }
        }
    }

    /// The reference control for configurations with reference targets.
    pub fn reference_control(&self, problem: &Problem) -> Option<ControlTrajectory> {
        match &self.cost.targets {
            TargetSpec::Reference { control } => Some(self.control_from(control, &problem.mesh, problem.grid)),
            TargetSpec::Constant { .. } => None,
        }
    }

    pub fn build_problem(&self) -> Result<Problem> {
        let mesh = self.mesh()?;
        let grid = self.grid()?;
        let ps = self.potential_set();
        let init = self.initial_data(&mesh)?;
        let targets = self.targets(&mesh, grid, &init, &ps, &self.solver)?;
        let ng = mesh.n_boundary();
        let bounds = AdmissibleBox::uniform(ng, self.bounds.lower, self.bounds.upper, self.bounds.radius);
        let cost = CostSpec {
            beta: self.cost.beta,
            targets,
        };
        let mut problem = Problem::new(mesh, ps, init, grid, cost, bounds)?;
        problem.solver = self.solver.clone();
        problem.adjoint = self.adjoint;
        Ok(problem)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }
}
