//! Tracking functional, admissible box and first-order optimality measures.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::field::{BoundaryField, BulkField};
use crate::geometry::MeshOperators;
use crate::state::{ControlTrajectory, StateTrajectory};
use crate::time::{control_inner, TimeGrid};

/// Tolerance on the terminal compatibility between bulk and boundary data.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub mu_q: Vec<BulkField>,
    pub rho_q: Vec<BulkField>,
    pub rho_sigma: Vec<BoundaryField>,
    pub rho_omega: BulkField,
    pub rho_gamma: BoundaryField,
}

impl Targets {
    pub fn zeros(grid: &TimeGrid, nb: usize, ng: usize) -> Self {
        Self {
            mu_q: vec![BulkField::zeros(nb); grid.levels()],
            rho_q: vec![BulkField::zeros(nb); grid.levels()],
            rho_sigma: vec![BoundaryField::zeros(ng); grid.levels()],
            rho_omega: BulkField::zeros(nb),
            rho_gamma: BoundaryField::zeros(ng),
        }
    }

    /// Targets that a given state trajectory attains exactly.
    pub fn from_state(state: &StateTrajectory) -> Self {
        let m = state.steps();
        Self {
            mu_q: state.mu.clone(),
            rho_q: state.rho.clone(),
            rho_sigma: state.rho_gamma.clone(),
            rho_omega: state.rho[m].clone(),
            rho_gamma: state.rho_gamma[m].clone(),
        }
    }

    pub fn validate(&self, grid: &TimeGrid, ops: &MeshOperators) -> Result<()> {
        let (nb, ng, l) = (ops.n_bulk(), ops.n_boundary(), grid.levels());
        ensure(
            self.mu_q.len() == l && self.rho_q.len() == l && self.rho_sigma.len() == l,
            || format!("space-time targets need {l} levels"),
        )?;
        let ok = self.mu_q.iter().chain(&self.rho_q).all(|f| f.len() == nb && f.is_finite())
            && self.rho_sigma.iter().all(|f| f.len() == ng && f.is_finite())
            && self.rho_omega.len() == nb
            && self.rho_gamma.len() == ng
            && self.rho_omega.is_finite()
            && self.rho_gamma.is_finite();
        ensure(ok, || "target fields have wrong sizes or non-finite values".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    /// Weights `beta_1..beta_6`.
    pub beta: [f64; 6],
    pub targets: Targets,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub terms: [f64; 6],
    pub total: f64,
}

pub fn cost(
    state: &StateTrajectory,
    control: &ControlTrajectory,
    spec: &CostSpec,
    ops: &MeshOperators,
) -> Result<CostBreakdown> {
    let grid = &state.grid;
    spec.targets.validate(grid, ops)?;
    ensure(spec.beta.iter().all(|b| *b >= 0.0 && b.is_finite()), || {
        "cost weights must be finite and nonnegative".into()
    })?;
    let t = &spec.targets;
    let m = grid.steps;
    let w = grid.state_weights();
    let mut terms = [0.0; 6];
    for k in 0..=m {
        let e1 = state.mu[k].minus(&t.mu_q[k]);
        let e2 = state.rho[k].minus(&t.rho_q[k]);
        let e3 = state.rho_gamma[k].minus(&t.rho_sigma[k]);
        terms[0] += w[k] * ops.inner_bulk(&e1, &e1);
        terms[1] += w[k] * ops.inner_bulk(&e2, &e2);
        terms[2] += w[k] * ops.inner_boundary(&e3, &e3);
    }
    let e4 = state.rho[m].minus(&t.rho_omega);
    let e5 = state.rho_gamma[m].minus(&t.rho_gamma);
    terms[3] = ops.inner_bulk(&e4, &e4);
    terms[4] = ops.inner_boundary(&e5, &e5);
    terms[5] = control_inner(ops, grid, &control.u, &control.u);
    for (term, b) in terms.iter_mut().zip(&spec.beta) {
        *term *= 0.5 * b;
    }
    Ok(CostBreakdown {
        terms,
        total: terms.iter().sum(),
    })
}

/// Result of the terminal compatibility check between
/// `beta_4 (rho(T) - target_Omega)` and `beta_5 (rho_G(T) - target_G)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Compatibility {
    pub max_mismatch: f64,
    pub satisfied: bool,
}

pub fn terminal_compatibility(
    state: &StateTrajectory,
    spec: &CostSpec,
    ops: &MeshOperators,
) -> Compatibility {
    let m = state.steps();
    let [_, _, _, b4, b5, _] = spec.beta;
    let t = &spec.targets;
    let mut mismatch = 0.0_f64;
    for (s, &i) in ops.trace.iter().enumerate() {
        let bulk = b4 * (state.rho[m][i] - t.rho_omega[i]);
        let bnd = b5 * (state.rho_gamma[m][s] - t.rho_gamma[s]);
        mismatch = mismatch.max((bulk - bnd).abs());
    }
    Compatibility {
        max_mismatch: mismatch,
        satisfied: mismatch <= COMPATIBILITY_TOL,
    }
}

/// Time-independent nodewise bounds with a radius on the control norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleBox {
    pub lower: BoundaryField,
    pub upper: BoundaryField,
    /// Radius bounding `||u||_{H1(0,T;L2(G))} + ||u||_inf`.
    pub r0: f64,
}

impl AdmissibleBox {
    pub fn uniform(ng: usize, lower: f64, upper: f64, r0: f64) -> Self {
        Self {
            lower: BoundaryField::constant(ng, lower),
            upper: BoundaryField::constant(ng, upper),
            r0,
        }
    }

    pub fn validate(&self, ng: usize) -> Result<()> {
        ensure(self.lower.len() == ng && self.upper.len() == ng, || {
            format!("box bounds need {ng} entries")
        })?;
        ensure(
            self.lower.iter().zip(self.upper.iter()).all(|(l, u)| l <= u),
            || "lower bound exceeds upper bound".into(),
        )?;
        ensure(self.r0 > 0.0, || "control radius must be positive".into())
    }

    pub fn clamp(&self, u: &ControlTrajectory) -> ControlTrajectory {
        let mut out = u.clone();
        for level in out.u.iter_mut() {
            for s in 0..level.len() {
                level[s] = level[s].clamp(self.lower[s], self.upper[s]);
            }
        }
        out
    }

    pub fn contains(&self, u: &ControlTrajectory) -> bool {
        u.u.iter().all(|level| {
            level
                .iter()
                .enumerate()
                .all(|(s, v)| *v >= self.lower[s] && *v <= self.upper[s])
        })
    }
}

/// `||u||_{H1(0,T;L2(G))} + ||u||_inf` over the active levels.
pub fn control_radius(u: &ControlTrajectory, ops: &MeshOperators) -> f64 {
    let grid = &u.grid;
    let dt = grid.dt();
    let active = &u.u[..grid.steps];
    let mut l2 = 0.0;
    for v in active {
        l2 += dt * ops.inner_boundary(v, v);
    }
    let mut d = 0.0;
    for w in active.windows(2) {
        let diff = w[1].minus(&w[0]);
        d += ops.inner_boundary(&diff, &diff) / dt;
    }
    (l2 + d).sqrt() + active.iter().map(|v| v.max_abs()).fold(0.0, f64::max)
}

/// `min over v in the box of (grad, v - u)`, which is zero exactly at
/// first-order stationary points and negative otherwise.
pub fn vi_residual(
    gradient: &ControlTrajectory,
    control: &ControlTrajectory,
    bounds: &AdmissibleBox,
    ops: &MeshOperators,
) -> Result<f64> {
    if !bounds.contains(control) {
        return Err(Error::Admissibility("control lies outside the box".into()));
    }
    let w = control.grid.control_weights();
    let mut total = 0.0;
    for (k, (g, u)) in gradient.u.iter().zip(&control.u).enumerate() {
        let mut level = 0.0;
        for s in 0..g.len() {
            let lo = g[s] * (bounds.lower[s] - u[s]);
            let hi = g[s] * (bounds.upper[s] - u[s]);
            level += ops.boundary_weights[s] * lo.min(hi);
        }
        total += w[k] * level;
    }
    Ok(total)
}

/// Nodewise projection `clamp(-q_G / beta_6)` onto the box.
pub fn projection_formula(
    q_gamma: &[BoundaryField],
    beta6: f64,
    bounds: &AdmissibleBox,
    grid: TimeGrid,
) -> ControlTrajectory {
    let u = q_gamma
        .iter()
        .map(|q| {
            BoundaryField(
                q.iter()
                    .enumerate()
                    .map(|(s, v)| (-v / beta6).clamp(bounds.lower[s], bounds.upper[s]))
                    .collect(),
            )
        })
        .collect();
    ControlTrajectory { grid, u }
}
