//! Backward-in-time adjoint system for the multipliers `(p, q, q_G)`.
//!
//! Each backward step first solves the `p` equation with the latest `q`
//! retarded by one step, then the `q` equation with the fresh `p`. The very
//! first `p` step sees the terminal value of `q`, which is the only place where
//! the scheme departs from the exact transpose of the forward scheme; the
//! resulting duality gap is first order in the time step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{BoundaryField, BulkField};
use crate::geometry::MeshOperators;
use crate::objective::{terminal_compatibility, Compatibility, CostSpec};
use crate::parabolic::{linear_step, LinearStepProblem, LINEAR_TOL};
use crate::potentials::PotentialSet;
use crate::sensitivity::reaction_coefficients;
use crate::state::{ControlTrajectory, StateTrajectory};
use crate::time::TimeGrid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdjointOptions {
    /// Couple the first backward `p` step to the terminal value of `q`.
    /// Turning this off yields the exact discrete transpose.
    pub terminal_retardation: bool,
}

impl Default for AdjointOptions {
    fn default() -> Self {
        Self {
            terminal_retardation: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdjointTrajectory {
    pub grid: TimeGrid,
    pub p: Vec<BulkField>,
    pub q: Vec<BulkField>,
    pub q_gamma: Vec<BoundaryField>,
    pub compatibility: Compatibility,
}

pub fn solve_adjoint(
    base: &StateTrajectory,
    spec: &CostSpec,
    ps: &PotentialSet,
    ops: &MeshOperators,
    opts: &AdjointOptions,
) -> Result<AdjointTrajectory> {
    let grid = base.grid;
    spec.targets.validate(&grid, ops)?;
    let compatibility = terminal_compatibility(base, spec, ops);
    if !compatibility.satisfied {
        return Err(Error::Compatibility {
            mismatch: compatibility.max_mismatch,
        });
    }
    let [b1, b2, b3, b4, _, _] = spec.beta;
    let t = &spec.targets;
    let m = grid.steps;
    let dt = grid.dt();
    let nb = ops.n_bulk();
    let w = grid.state_weights();

    let mut p = vec![BulkField::zeros(nb); m + 1];
    let mut q = vec![BulkField::zeros(nb); m + 1];
    let mut q_gamma = vec![BoundaryField::zeros(ops.n_boundary()); m + 1];
    q[m] = base.rho[m].minus(&t.rho_omega).scaled(b4);
    q_gamma[m] = ops.trace_of(&q[m]);

    for k in (0..m).rev() {
        let j = k + 1;
        let wj = w[j] / dt;
        let rho = &base.rho[j];
        let mu = &base.mu[j];
        let (g, g1, g2) = ps.coupling_at(rho);
        let next = if j < m {
            Some(ps.coupling_at(&base.rho[j + 1]))
        } else {
            None
        };
        let rt: Vec<f64> = (0..nb).map(|i| (rho[i] - base.rho[k][i]) / dt).collect();
        let mt: Vec<f64> = (0..nb).map(|i| (mu[i] - base.mu[k][i]) / dt).collect();

        let coeff: Vec<f64> = (0..nb).map(|i| (1.0 + 2.0 * g[i]) / dt + g1[i] * rt[i]).collect();
        let rhs: Vec<f64> = (0..nb)
            .map(|i| {
                let mut d = wj * b1 * (mu[i] - t.mu_q[j][i]);
                match &next {
                    Some((gn, g1n, _)) => {
                        d += (1.0 + 2.0 * gn[i]) / dt * p[k + 1][i] + g1n[i] * q[k + 1][i];
                    }
                    None if opts.terminal_retardation => d += g1[i] * q[m][i],
                    None => {}
                }
                ops.bulk_weights[i] * d
            })
            .collect();
        p[k] = BulkField(ops.neumann_matrix(&coeff).solve(&rhs, LINEAR_TOL)?);

        let (a, a_gamma) = reaction_coefficients(base, j, ps)?;
        let sigma: Vec<f64> = (0..nb)
            .map(|i| {
                let pk = p[k][i];
                let mut s = wj * b2 * (rho[i] - t.rho_q[j][i])
                    - (2.0 * g1[i] * mt[i] + mu[i] * g2[i] * rt[i]) * pk
                    - mu[i] * g1[i] * pk / dt;
                if let Some((_, g1n, _)) = &next {
                    s += base.mu[j + 1][i] * g1n[i] * p[k + 1][i] / dt;
                }
                s
            })
            .collect();
        let sigma_gamma = base.rho_gamma[j].minus(&t.rho_sigma[j]).scaled(wj * b3);
        let problem = LinearStepProblem {
            a,
            a_gamma,
            sigma: BulkField(sigma),
            sigma_gamma,
            dt,
            previous: q[k + 1].clone(),
            previous_gamma: q_gamma[k + 1].clone(),
        };
        let (qk, qgk) = linear_step(&problem, ops)?;
        q[k] = qk;
        q_gamma[k] = qgk;
    }
    Ok(AdjointTrajectory {
        grid,
        p,
        q,
        q_gamma,
        compatibility,
    })
}

/// `q_G + beta_6 u`, the gradient of the reduced cost in `L2(Sigma)`.
pub fn reduced_gradient(adjoint: &AdjointTrajectory, control: &ControlTrajectory, beta6: f64) -> ControlTrajectory {
    ControlTrajectory {
        grid: control.grid,
        u: adjoint
            .q_gamma
            .iter()
            .zip(&control.u)
            .map(|(q, u)| q.plus_scaled(beta6, u))
            .collect(),
    }
}
