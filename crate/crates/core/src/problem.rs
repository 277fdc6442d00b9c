//! A fully specified control problem and the evaluations built on it.

use serde::Serialize;

use crate::adjoint::{reduced_gradient, solve_adjoint, AdjointOptions, AdjointTrajectory};
use crate::error::{ensure, Result};
use crate::geometry::{assemble_operators, Mesh, MeshOperators};
use crate::objective::{cost, AdmissibleBox, CostBreakdown, CostSpec};
use crate::potentials::PotentialSet;
use crate::sensitivity::{linearized_derivative, solve_linearized, tracking_pairing};
use crate::state::{solve_state, ControlTrajectory, InitialData, SolverOptions, StateTrajectory};
use crate::time::{control_inner, TimeGrid};

#[derive(Clone, Debug)]
pub struct Problem {
    pub mesh: Mesh,
    pub ops: MeshOperators,
    pub potentials: PotentialSet,
    pub initial: InitialData,
    pub grid: TimeGrid,
    pub cost: CostSpec,
    pub bounds: AdmissibleBox,
    pub solver: SolverOptions,
    pub adjoint: AdjointOptions,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub state: StateTrajectory,
    pub cost: CostBreakdown,
}

#[derive(Clone, Debug)]
pub struct GradientEvaluation {
    pub state: StateTrajectory,
    pub cost: CostBreakdown,
    pub adjoint: AdjointTrajectory,
    pub gradient: ControlTrajectory,
}

/// Two routes to `J'(u) h` plus the two sides of the duality identity.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DerivativePair {
    pub adjoint: f64,
    pub linearized: f64,
    /// Beta-weighted pairings of state residuals with the linearized response.
    pub duality_lhs: f64,
    /// `(q_G, h)` over the boundary cylinder.
    pub duality_rhs: f64,
}

impl DerivativePair {
    pub fn relative_gap(&self) -> f64 {
        (self.adjoint - self.linearized).abs() / self.linearized.abs().max(f64::MIN_POSITIVE)
    }
}

impl Problem {
    pub fn new(
        mesh: Mesh,
        potentials: PotentialSet,
        initial: InitialData,
        grid: TimeGrid,
        cost: CostSpec,
        bounds: AdmissibleBox,
    ) -> Result<Self> {
        let ops = assemble_operators(&mesh);
        initial.validate(&ops, &potentials)?;
        cost.targets.validate(&grid, &ops)?;
        bounds.validate(ops.n_boundary())?;
        Ok(Self {
            mesh,
            ops,
            potentials,
            initial,
            grid,
            cost,
            bounds,
            solver: SolverOptions::default(),
            adjoint: AdjointOptions::default(),
        })
    }

    pub fn zero_control(&self) -> ControlTrajectory {
        ControlTrajectory::constant(self.grid, self.ops.n_boundary(), 0.0)
    }

    fn check_grid(&self, u: &ControlTrajectory) -> Result<()> {
        ensure(u.grid == self.grid, || "control grid does not match the problem".into())
    }

    pub fn simulate(&self, u: &ControlTrajectory) -> Result<StateTrajectory> {
        self.check_grid(u)?;
        solve_state(&self.initial, u, &self.potentials, &self.ops, &self.solver)
    }

    pub fn evaluate(&self, u: &ControlTrajectory) -> Result<Evaluation> {
        let state = self.simulate(u)?;
        let c = cost(&state, u, &self.cost, &self.ops)?;
        Ok(Evaluation { state, cost: c })
    }

    pub fn gradient(&self, u: &ControlTrajectory) -> Result<GradientEvaluation> {
        let Evaluation { state, cost } = self.evaluate(u)?;
        let adjoint = solve_adjoint(&state, &self.cost, &self.potentials, &self.ops, &self.adjoint)?;
        let gradient = reduced_gradient(&adjoint, u, self.cost.beta[5]);
        Ok(GradientEvaluation {
            state,
            cost,
            adjoint,
            gradient,
        })
    }

    pub fn derivative_pair(&self, u: &ControlTrajectory, h: &ControlTrajectory) -> Result<DerivativePair> {
        self.check_grid(h)?;
        let ge = self.gradient(u)?;
        let sens = solve_linearized(&ge.state, h, &self.potentials, &self.ops)?;
        let linearized = linearized_derivative(&ge.state, &sens, u, h, &self.cost, &self.ops);
        let adjoint = control_inner(&self.ops, &self.grid, &ge.gradient.u, &h.u);
        let duality_lhs = tracking_pairing(&ge.state, &sens, &self.cost, &self.ops);
        let duality_rhs = control_inner(&self.ops, &self.grid, &ge.adjoint.q_gamma, &h.u);
        Ok(DerivativePair {
            adjoint,
            linearized,
            duality_lhs,
            duality_rhs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;
    use crate::time::TimeGrid;

    #[test]
    fn controls_on_another_grid_are_refused() {
        let p = default_config().with_steps(10).build_problem().unwrap();
        let u = ControlTrajectory::constant(TimeGrid::new(0.5, 11).unwrap(), 2, 0.0);
        assert!(p.simulate(&u).is_err());
    }

    #[test]
    fn gradient_is_the_adjoint_trace_plus_the_control_term() {
        let cfg = default_config().with_steps(10);
        let p = cfg.build_problem().unwrap();
        let u = cfg.initial_control(&p);
        let ge = p.gradient(&u).unwrap();
        let b6 = p.cost.beta[5];
        for k in 0..=p.grid.steps {
            for s in 0..p.ops.n_boundary() {
                assert_eq!(ge.gradient.u[k][s], ge.adjoint.q_gamma[k][s] + b6 * u.u[k][s]);
            }
        }
        assert_eq!(ge.cost, p.evaluate(&u).unwrap().cost);
    }
}
