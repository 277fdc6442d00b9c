//! Uniform time grid, quadrature weights and space-time norms.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::field::{BoundaryField, BulkField};
use crate::geometry::MeshOperators;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub final_time: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(final_time: f64, steps: usize) -> Result<Self> {
        ensure(final_time.is_finite() && final_time > 0.0, || {
            format!("final time must be positive, got {final_time}")
        })?;
        ensure(steps >= 1, || "at least one time step is required".into())?;
        Ok(Self { final_time, steps })
    }

    pub fn dt(&self) -> f64 {
        self.final_time / self.steps as f64
    }

    pub fn levels(&self) -> usize {
        self.steps + 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Trapezoid weights for state-type integrands over levels `0..=M`.
    pub fn state_weights(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.steps)
            .map(|k| if k == 0 || k == self.steps { 0.5 * dt } else { dt })
            .collect()
    }

    /// Weights for controls, which are piecewise constant: level `k < M`
    /// holds on `[t_k, t_{k+1})`, level `M` carries no weight.
    pub fn control_weights(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.steps)
            .map(|k| if k < self.steps { dt } else { 0.0 })
            .collect()
    }
}

pub fn l2_q(ops: &MeshOperators, grid: &TimeGrid, levels: &[BulkField]) -> f64 {
    grid.state_weights()
        .iter()
        .zip(levels)
        .map(|(w, v)| w * ops.inner_bulk(v, v))
        .sum::<f64>()
        .sqrt()
}

pub fn l2_sigma(ops: &MeshOperators, grid: &TimeGrid, levels: &[BoundaryField]) -> f64 {
    grid.state_weights()
        .iter()
        .zip(levels)
        .map(|(w, v)| w * ops.inner_boundary(v, v))
        .sum::<f64>()
        .sqrt()
}

pub fn control_inner(
    ops: &MeshOperators,
    grid: &TimeGrid,
    a: &[BoundaryField],
    b: &[BoundaryField],
) -> f64 {
    grid.control_weights()
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * ops.inner_boundary(x, y))
        .sum()
}

pub fn control_norm(ops: &MeshOperators, grid: &TimeGrid, a: &[BoundaryField]) -> f64 {
    control_inner(ops, grid, a, a).sqrt()
}

/// Discrete `H1(0,T;H) + C0(V) + L2(H2)` norm of a bulk trajectory.
pub fn bulk_energy_norm(ops: &MeshOperators, grid: &TimeGrid, levels: &[BulkField]) -> f64 {
    let dt = grid.dt();
    let mut dtn = 0.0;
    for w in levels.windows(2) {
        let d = w[1].minus(&w[0]).scaled(1.0 / dt);
        dtn += dt * ops.inner_bulk(&d, &d);
    }
    let sup = levels.iter().map(|v| ops.h1_bulk(v)).fold(0.0, f64::max);
    let mut lap = 0.0;
    for (w, v) in grid.state_weights().iter().zip(levels) {
        let l = ops.laplace_bulk(v);
        lap += w * ops.inner_bulk(&l, &l);
    }
    dtn.sqrt() + sup + lap.sqrt()
}

/// Boundary analogue of [`bulk_energy_norm`].
pub fn boundary_energy_norm(
    ops: &MeshOperators,
    grid: &TimeGrid,
    levels: &[BoundaryField],
) -> f64 {
    let dt = grid.dt();
    let mut dtn = 0.0;
    for w in levels.windows(2) {
        let d = w[1].minus(&w[0]).scaled(1.0 / dt);
        dtn += dt * ops.inner_boundary(&d, &d);
    }
    let sup = levels.iter().map(|v| ops.h1_boundary(v)).fold(0.0, f64::max);
    let mut lap = 0.0;
    for (w, v) in grid.state_weights().iter().zip(levels) {
        let l = ops.laplace_boundary(v);
        lap += w * ops.inner_boundary(&l, &l);
    }
    dtn.sqrt() + sup + lap.sqrt()
}
