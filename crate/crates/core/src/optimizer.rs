//! Projected gradient descent with Armijo backtracking on the admissible box.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::BoundaryField;
use crate::objective::{control_radius, vi_residual};
use crate::problem::{GradientEvaluation, Problem};
use crate::state::ControlTrajectory;
use crate::time::control_norm;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    pub max_iterations: usize,
    pub armijo_c: f64,
    pub shrink: f64,
    pub step0: f64,
    pub max_backtracks: usize,
    /// Stop when the projected gradient falls below this fraction of its
    /// initial value.
    pub tol_projected_gradient: f64,
    /// Stop when the variational-inequality residual is above `-tol_vi * |vi_0|`.
    pub tol_vi: f64,
    /// Smooth the gradient in time with a (1,2,1)/4 filter before stepping.
    pub time_smoothing: bool,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            armijo_c: 1e-4,
            shrink: 0.5,
            step0: 1.0,
            max_backtracks: 30,
            tol_projected_gradient: 1e-8,
            tol_vi: 1e-7,
            time_smoothing: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ProjectedGradient,
    VariationalInequality,
    MaxIterations,
    Stalled,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub projected_gradient: f64,
    pub vi_residual: f64,
    pub step: f64,
    pub backtracks: usize,
    pub control_radius: f64,
}

#[derive(Clone, Debug)]
pub struct OptimizationResult {
    pub control: ControlTrajectory,
    pub last: GradientEvaluation,
    pub history: Vec<IterationRecord>,
    pub termination: Termination,
    pub initial_projected_gradient: f64,
    pub initial_vi_residual: f64,
}

fn smooth_in_time(g: &ControlTrajectory) -> ControlTrajectory {
    let m = g.grid.steps;
    let mut out = g.clone();
    for k in 0..m {
        let prev = &g.u[k.saturating_sub(1)];
        let next = &g.u[(k + 1).min(m - 1)];
        out.u[k] = BoundaryField(
            (0..g.u[k].len())
                .map(|s| 0.25 * (prev[s] + 2.0 * g.u[k][s] + next[s]))
                .collect(),
        );
    }
    out
}

/// `u - clamp(u - g)`, the unit-step projected gradient.
fn projected_gradient(problem: &Problem, u: &ControlTrajectory, g: &ControlTrajectory) -> ControlTrajectory {
    let moved = problem.bounds.clamp(&u.plus_scaled(-1.0, g));
    u.plus_scaled(-1.0, &moved)
}

pub fn optimize(problem: &Problem, u0: &ControlTrajectory, opts: &OptimizerOptions) -> Result<OptimizationResult> {
    optimize_observed(problem, u0, opts, |_, _| {})
}

/// As [`optimize`], calling `observe(iteration, control)` on every iterate.
pub fn optimize_observed(
    problem: &Problem,
    u0: &ControlTrajectory,
    opts: &OptimizerOptions,
    mut observe: impl FnMut(usize, &ControlTrajectory),
) -> Result<OptimizationResult> {
    let ops = &problem.ops;
    let grid = problem.grid;
    let mut u = problem.bounds.clamp(u0);
    let mut eval = problem.gradient(&u)?;
    let mut history = Vec::new();
    let pg0 = control_norm(ops, &grid, &projected_gradient(problem, &u, &eval.gradient).u);
    let vi0 = vi_residual(&eval.gradient, &u, &problem.bounds, ops)?;
    let mut termination = Termination::MaxIterations;
    for it in 0..=opts.max_iterations {
        observe(it, &u);
        let pg = control_norm(ops, &grid, &projected_gradient(problem, &u, &eval.gradient).u);
        let vi = vi_residual(&eval.gradient, &u, &problem.bounds, ops)?;
        let mut record = IterationRecord {
            iteration: it,
            cost: eval.cost.total,
            projected_gradient: pg,
            vi_residual: vi,
            step: 0.0,
            backtracks: 0,
            control_radius: control_radius(&u, ops),
        };
        if pg <= opts.tol_projected_gradient * pg0 || pg == 0.0 {
            termination = Termination::ProjectedGradient;
            history.push(record);
            break;
        }
        if vi >= -opts.tol_vi * vi0.abs() {
            termination = Termination::VariationalInequality;
            history.push(record);
            break;
        }
        if it == opts.max_iterations {
            history.push(record);
            break;
        }
        let direction = if opts.time_smoothing {
            smooth_in_time(&eval.gradient)
        } else {
            eval.gradient.clone()
        };
        let mut step = opts.step0;
        let mut accepted = None;
        for bt in 0..=opts.max_backtracks {
            let trial = problem.bounds.clamp(&u.plus_scaled(-step, &direction));
            let d = trial.plus_scaled(-1.0, &u);
            let dn = control_norm(ops, &grid, &d.u);
            if dn == 0.0 {
                break;
            }
            // Failed solves count as rejected trial points.
            if let Ok(te) = problem.gradient(&trial) {
                if te.cost.total <= eval.cost.total - opts.armijo_c * dn * dn / step {
                    accepted = Some((trial, te, bt));
                    break;
                }
            }
            step *= opts.shrink;
        }
        match accepted {
            Some((trial, te, bt)) => {
                record.step = step;
                record.backtracks = bt;
                history.push(record);
                u = trial;
                eval = te;
            }
            None => {
                history.push(record);
                termination = Termination::Stalled;
                break;
            }
        }
    }
    Ok(OptimizationResult {
        control: u,
        last: eval,
        history,
        termination,
        initial_projected_gradient: pg0,
        initial_vi_residual: vi0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;
    use crate::objective::AdmissibleBox;

    fn control_only(lower: f64, upper: f64) -> Problem {
        let mut cfg = default_config().with_steps(10);
        cfg.cost.beta = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let mut p = cfg.build_problem().unwrap();
        p.bounds = AdmissibleBox::uniform(p.ops.n_boundary(), lower, upper, 100.0);
        p
    }

    #[test]
    fn control_cost_alone_is_minimized_at_the_clamped_origin() {
        for (lo, hi, want) in [(0.1, 0.5, 0.1), (-0.5, -0.2, -0.2), (-1.0, 1.0, 0.0)] {
            let p = control_only(lo, hi);
            let u0 = ControlTrajectory::constant(p.grid, 2, 0.5 * (lo + hi));
            let opts = OptimizerOptions {
                step0: 100.0,
                ..Default::default()
            };
            let r = optimize(&p, &u0, &opts).unwrap();
            assert_eq!(r.termination, Termination::ProjectedGradient);
            for level in &r.control.u {
                assert!(level.iter().all(|v| (v - want).abs() < 1e-12), "{level:?}");
            }
        }
    }

    #[test]
    fn history_is_monotone_and_admissible() {
        let cfg = crate::config::synthetic_config();
        let p = cfg.build_problem().unwrap();
        let opts = OptimizerOptions {
            max_iterations: 5,
            ..cfg.optimizer.clone()
        };
        let mut seen = Vec::new();
        let r = optimize_observed(&p, &cfg.initial_control(&p), &opts, |it, u| {
            assert!(p.bounds.contains(u));
            seen.push(it);
        })
        .unwrap();
        assert_eq!(seen, (0..r.history.len()).collect::<Vec<_>>());
        for w in r.history.windows(2) {
            assert!(w[1].cost <= w[0].cost);
        }
    }

    #[test]
    fn smoothing_keeps_constants() {
        let grid = crate::time::TimeGrid::new(1.0, 6).unwrap();
        let g = ControlTrajectory::constant(grid, 2, 0.3);
        let s = smooth_in_time(&g);
        for k in 0..6 {
            assert!(s.u[k].iter().all(|v| (v - 0.3).abs() < 1e-15));
        }
    }
}
