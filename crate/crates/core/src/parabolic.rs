//! Implicit Euler step for the linear bulk-surface parabolic problem
//!
//! ```text
//! y_t - Lap y + a y = sigma            in the bulk
//! d_n y + y_G,t - Lap_G y_G + a_G y_G = sigma_G   on the boundary, y_G = y|_G
//! ```
//!
//! shared by the linearized system and the adjoint.

use crate::error::{ensure, Error, Result};
use crate::field::{BoundaryField, BulkField};
use crate::geometry::MeshOperators;
use crate::time::{boundary_energy_norm, bulk_energy_norm, TimeGrid};

/// Relative residual accepted from the band solver.
pub const LINEAR_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct LinearStepProblem {
    pub a: BulkField,
    pub a_gamma: BoundaryField,
    pub sigma: BulkField,
    pub sigma_gamma: BoundaryField,
    pub dt: f64,
    pub previous: BulkField,
    pub previous_gamma: BoundaryField,
}

pub(crate) fn check_trace(ops: &MeshOperators, bulk: &[f64], gamma: &[f64]) -> Result<()> {
    let scale = 1.0 + bulk.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mismatch = ops
        .trace
        .iter()
        .zip(gamma)
        .fold(0.0_f64, |m, (&i, g)| m.max((bulk[i] - g).abs()));
    ensure(mismatch <= 1e-9 * scale, || {
        format!("boundary values differ from the trace of the bulk values by {mismatch:e}")
    })
}

pub fn linear_step(p: &LinearStepProblem, ops: &MeshOperators) -> Result<(BulkField, BoundaryField)> {
    let nb = ops.n_bulk();
    let ng = ops.n_boundary();
    ensure(p.dt.is_finite() && p.dt > 0.0, || format!("time step must be positive, got {}", p.dt))?;
    ensure(
        p.a.len() == nb && p.sigma.len() == nb && p.previous.len() == nb,
        || format!("bulk fields must have {nb} entries"),
    )?;
    ensure(
        p.a_gamma.len() == ng && p.sigma_gamma.len() == ng && p.previous_gamma.len() == ng,
        || format!("boundary fields must have {ng} entries"),
    )?;
    check_trace(ops, &p.previous, &p.previous_gamma)?;
    let inv = 1.0 / p.dt;
    let c: Vec<f64> = p.a.iter().map(|a| inv + a).collect();
    let cg: Vec<f64> = p.a_gamma.iter().map(|a| inv + a).collect();
    let mat = ops.coupled_matrix(&c, &cg);
    let mut rhs: Vec<f64> = (0..nb)
        .map(|i| ops.bulk_weights[i] * (p.sigma[i] + inv * p.previous[i]))
        .collect();
    let rg: Vec<f64> = (0..ng)
        .map(|s| ops.boundary_weights[s] * (p.sigma_gamma[s] + inv * p.previous_gamma[s]))
        .collect();
    ops.add_lifted(&mut rhs, &rg);
    let y = BulkField(mat.solve(&rhs, LINEAR_TOL)?);
    let yg = ops.trace_of(&y);
    Ok((y, yg))
}

/// Large steps relative to the reaction rate make the discrete problem poorly
/// conditioned even though it stays solvable.
pub fn conditioning_warning(dt: f64, a: &[f64], a_gamma: &[f64]) -> bool {
    let amax = a
        .iter()
        .chain(a_gamma)
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    amax > 0.0 && dt > 1.0 / amax
}

/// Record of a sequence of linear steps started from zero data.
#[derive(Clone, Debug)]
pub struct StepHistory {
    pub dt: f64,
    pub levels: Vec<BulkField>,
    pub levels_gamma: Vec<BoundaryField>,
    pub sources: Vec<BulkField>,
    pub sources_gamma: Vec<BoundaryField>,
    pub warnings: usize,
}

impl StepHistory {
    pub fn new(initial: BulkField, initial_gamma: BoundaryField, dt: f64) -> Self {
        Self {
            dt,
            levels: vec![initial],
            levels_gamma: vec![initial_gamma],
            sources: Vec::new(),
            sources_gamma: Vec::new(),
            warnings: 0,
        }
    }

    /// Advance one step with the given coefficients and sources.
    pub fn advance(
        &mut self,
        ops: &MeshOperators,
        a: BulkField,
        a_gamma: BoundaryField,
        sigma: BulkField,
        sigma_gamma: BoundaryField,
    ) -> Result<()> {
        if conditioning_warning(self.dt, &a, &a_gamma) {
            self.warnings += 1;
        }
        let p = LinearStepProblem {
            a,
            a_gamma,
            sigma,
            sigma_gamma,
            dt: self.dt,
            previous: self.levels.last().cloned().unwrap_or_default(),
            previous_gamma: self.levels_gamma.last().cloned().unwrap_or_default(),
        };
        let (y, yg) = linear_step(&p, ops)?;
        self.levels.push(y);
        self.levels_gamma.push(yg);
        self.sources.push(p.sigma);
        self.sources_gamma.push(p.sigma_gamma);
        Ok(())
    }
}

/// Ratio of the discrete solution norm to the source norm; it should stay
/// bounded as the mesh is refined.
pub fn stability_monitor(history: &StepHistory, ops: &MeshOperators) -> Result<f64> {
    let steps = history.sources.len();
    ensure(steps >= 1, || "history holds no steps".into())?;
    let grid = TimeGrid::new(history.dt * steps as f64, steps)?;
    let mut src = 0.0;
    let mut src_g = 0.0;
    for (s, sg) in history.sources.iter().zip(&history.sources_gamma) {
        src += history.dt * ops.inner_bulk(s, s);
        src_g += history.dt * ops.inner_boundary(sg, sg);
    }
    let denom = src.sqrt() + src_g.sqrt();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::UndefinedRatio("source norm is zero"));
    }
    let num = bulk_energy_norm(ops, &grid, &history.levels)
        + boundary_energy_norm(ops, &grid, &history.levels_gamma);
    Ok(num / denom)
}
