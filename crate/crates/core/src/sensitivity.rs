//! Linearized state equations: the response `(eta, zeta, zeta_G)` of
//! `(mu, rho, rho_G)` to a control perturbation `h`.
//!
//! Coefficients are placed exactly as in the forward scheme, so the result is
//! the derivative of the discrete control-to-state map.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::field::{BoundaryField, BulkField};
use crate::geometry::MeshOperators;
use crate::objective::{AdmissibleBox, CostSpec};
use crate::parabolic::{conditioning_warning, linear_step, LinearStepProblem, LINEAR_TOL};
use crate::potentials::PotentialSet;
use crate::state::{
    solve_state, state_difference_norm, ControlTrajectory, InitialData, SolverOptions, StateTrajectory,
};
use crate::time::{control_inner, TimeGrid};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SensitivityTrajectory {
    pub grid: TimeGrid,
    pub eta: Vec<BulkField>,
    pub zeta: Vec<BulkField>,
    pub zeta_gamma: Vec<BoundaryField>,
    pub conditioning_warnings: usize,
}

/// Reaction coefficients of the `rho` equation linearized at level `j`,
/// with the chemical potential taken from level `j - 1`.
pub(crate) fn reaction_coefficients(
    base: &StateTrajectory,
    j: usize,
    ps: &PotentialSet,
) -> Result<(BulkField, BoundaryField)> {
    let be = ps.eval_bulk(&base.rho[j])?;
    let ge = ps.eval_boundary(&base.rho_gamma[j])?;
    let mu_lag = &base.mu[j - 1];
    let a = (0..be.f2.len())
        .map(|i| be.f2[i] + be.pi1[i] - mu_lag[i] * be.g2[i])
        .collect();
    let ag = (0..ge.f2.len()).map(|s| ge.f2[s] + ge.pi1[s]).collect();
    Ok((BulkField(a), BoundaryField(ag)))
}

pub fn solve_linearized(
    base: &StateTrajectory,
    h: &ControlTrajectory,
    ps: &PotentialSet,
    ops: &MeshOperators,
) -> Result<SensitivityTrajectory> {
    h.validate(ops)?;
    ensure(h.grid == base.grid, || "direction and state use different time grids".into())?;
    let grid = base.grid;
    let dt = grid.dt();
    let (nb, ng) = (ops.n_bulk(), ops.n_boundary());
    let mut eta = vec![BulkField::zeros(nb)];
    let mut zeta = vec![BulkField::zeros(nb)];
    let mut zeta_gamma = vec![BoundaryField::zeros(ng)];
    let mut warnings = 0;
    for k in 0..grid.steps {
        let j = k + 1;
        let (a, a_gamma) = reaction_coefficients(base, j, ps)?;
        if conditioning_warning(dt, &a, &a_gamma) {
            warnings += 1;
        }
        let (g, g1, g2) = ps.coupling_at(&base.rho[j]);
        let sigma = BulkField((0..nb).map(|i| g1[i] * eta[k][i]).collect());
        let problem = LinearStepProblem {
            a,
            a_gamma,
            sigma,
            sigma_gamma: h.u[k].clone(),
            dt,
            previous: zeta[k].clone(),
            previous_gamma: zeta_gamma[k].clone(),
        };
        let (z, zg) = linear_step(&problem, ops)?;
        let mu = &base.mu[j];
        let coeff: Vec<f64> = (0..nb)
            .map(|i| {
                let rt = (base.rho[j][i] - base.rho[k][i]) / dt;
                (1.0 + 2.0 * g[i]) / dt + g1[i] * rt
            })
            .collect();
        let rhs: Vec<f64> = (0..nb)
            .map(|i| {
                let rt = (base.rho[j][i] - base.rho[k][i]) / dt;
                let mt = (mu[i] - base.mu[k][i]) / dt;
                let dens = (1.0 + 2.0 * g[i]) / dt * eta[k][i]
                    - 2.0 * g1[i] * mt * z[i]
                    - mu[i] * g2[i] * rt * z[i]
                    - mu[i] * g1[i] * (z[i] - zeta[k][i]) / dt;
                ops.bulk_weights[i] * dens
            })
            .collect();
        let e = ops.neumann_matrix(&coeff).solve(&rhs, LINEAR_TOL)?;
        eta.push(BulkField(e));
        zeta.push(z);
        zeta_gamma.push(zg);
    }
    Ok(SensitivityTrajectory {
        grid,
        eta,
        zeta,
        zeta_gamma,
        conditioning_warnings: warnings,
    })
}

/// The tracking part of the derivative: weighted pairings of the state
/// residuals with the linearized response (weights `beta_1..beta_5`).
pub fn tracking_pairing(
    base: &StateTrajectory,
    sens: &SensitivityTrajectory,
    spec: &CostSpec,
    ops: &MeshOperators,
) -> f64 {
    let [b1, b2, b3, b4, b5, _] = spec.beta;
    let t = &spec.targets;
    let w = base.grid.state_weights();
    let m = base.steps();
    let mut s = 0.0;
    for k in 0..=m {
        let e1 = base.mu[k].minus(&t.mu_q[k]);
        let e2 = base.rho[k].minus(&t.rho_q[k]);
        let e3 = base.rho_gamma[k].minus(&t.rho_sigma[k]);
        s += w[k]
            * (b1 * ops.inner_bulk(&e1, &sens.eta[k])
                + b2 * ops.inner_bulk(&e2, &sens.zeta[k])
                + b3 * ops.inner_boundary(&e3, &sens.zeta_gamma[k]));
    }
    let e4 = base.rho[m].minus(&t.rho_omega);
    let e5 = base.rho_gamma[m].minus(&t.rho_gamma);
    s + b4 * ops.inner_bulk(&e4, &sens.zeta[m]) + b5 * ops.inner_boundary(&e5, &sens.zeta_gamma[m])
}

/// Directional derivative `J'(u) h` assembled from the linearized response.
pub fn linearized_derivative(
    base: &StateTrajectory,
    sens: &SensitivityTrajectory,
    control: &ControlTrajectory,
    h: &ControlTrajectory,
    spec: &CostSpec,
    ops: &MeshOperators,
) -> f64 {
    tracking_pairing(base, sens, spec, ops)
        + spec.beta[5] * control_inner(ops, &base.grid, &control.u, &h.u)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaylorTable {
    pub scales: Vec<f64>,
    /// `||S(u + eps h) - S(u) - eps DS(u)h||` in the discrete state energy norm.
    pub remainders: Vec<f64>,
    /// Least-squares slope of `log r` against `log eps`.
    pub slope: f64,
    /// Root-mean-square residual of that fit in `log r`.
    pub fit_residual: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    loglog_fit(x, y).0
}

/// Least-squares slope of `log y` against `log x` and the RMS residual.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let ss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| {
            let r = b - my - slope * (a - mx);
            r * r
        })
        .sum();
    (slope, (ss / n).sqrt())
}

#[allow(clippy::too_many_arguments)]
pub fn taylor_remainder(
    init: &InitialData,
    ps: &PotentialSet,
    ops: &MeshOperators,
    opts: &SolverOptions,
    u: &ControlTrajectory,
    h: &ControlTrajectory,
    scales: &[f64],
    bounds: Option<&AdmissibleBox>,
) -> Result<TaylorTable> {
    ensure(scales.len() >= 2, || "need at least two scales".into())?;
    ensure(scales.iter().all(|s| *s > 0.0), || "scales must be positive".into())?;
    if let Some(b) = bounds {
        for &eps in scales {
            if !b.contains(&u.plus_scaled(eps, h)) {
                return Err(Error::Admissibility(format!("u + {eps} h leaves the box")));
            }
        }
    }
    let base = solve_state(init, u, ps, ops, opts)?;
    let sens = solve_linearized(&base, h, ps, ops)?;
    let mut remainders = Vec::with_capacity(scales.len());
    for &eps in scales {
        let pert = solve_state(init, &u.plus_scaled(eps, h), ps, ops, opts)?;
        let mut lin = base.clone();
        for k in 0..=base.steps() {
            lin.mu[k] = base.mu[k].plus_scaled(eps, &sens.eta[k]);
            lin.rho[k] = base.rho[k].plus_scaled(eps, &sens.zeta[k]);
            lin.rho_gamma[k] = base.rho_gamma[k].plus_scaled(eps, &sens.zeta_gamma[k]);
        }
        remainders.push(state_difference_norm(&pert, &lin, ops));
    }
    if remainders.iter().all(|r| *r == 0.0) && h.max_abs() == 0.0 {
        return Ok(TaylorTable {
            scales: scales.to_vec(),
            remainders,
            slope: f64::NAN,
            fit_residual: f64::NAN,
        });
    }
    if remainders.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::UndefinedRatio("zero remainder; the map is affine along h"));
    }
    let (slope, fit_residual) = loglog_fit(scales, &remainders);
    Ok(TaylorTable {
        scales: scales.to_vec(),
        remainders,
        slope,
        fit_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;
    use crate::problem::Problem;

    fn small() -> (Problem, ControlTrajectory) {
        let cfg = default_config().with_steps(20);
        let p = cfg.build_problem().unwrap();
        let u = cfg.initial_control(&p);
        (p, u)
    }

    fn direction(p: &Problem, seed: u64) -> ControlTrajectory {
        crate::verify::smooth_random_control(&p.mesh, p.grid, seed, 0, 1.0)
    }

    #[test]
    fn zero_direction_gives_zero_response() {
        let (p, u) = small();
        let base = p.simulate(&u).unwrap();
        let s = solve_linearized(&base, &p.zero_control(), &p.potentials, &p.ops).unwrap();
        assert!(s.eta.iter().chain(&s.zeta).all(|f| f.max_abs() == 0.0));
        assert!(s.zeta_gamma.iter().all(|f| f.max_abs() == 0.0));
        let t = taylor_remainder(&p.initial, &p.potentials, &p.ops, &p.solver, &u, &p.zero_control(), &[0.1, 0.05], None)
            .unwrap();
        assert!(t.remainders.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn response_keeps_trace_compatibility() {
        let (p, u) = small();
        let base = p.simulate(&u).unwrap();
        let s = solve_linearized(&base, &direction(&p, 3), &p.potentials, &p.ops).unwrap();
        for (z, zg) in s.zeta.iter().zip(&s.zeta_gamma) {
            for (slot, &i) in p.ops.trace.iter().enumerate() {
                assert_eq!(zg[slot], z[i]);
            }
        }
    }

    #[test]
    fn difference_quotients_approach_the_response_linearly() {
        let (p, u) = small();
        let h = direction(&p, 5);
        let base = p.simulate(&u).unwrap();
        let s = solve_linearized(&base, &h, &p.potentials, &p.ops).unwrap();
        let err = |eps: f64| {
            let pert = p.simulate(&u.plus_scaled(eps, &h)).unwrap();
            let mut e = 0.0_f64;
            for k in 0..=base.steps() {
                for i in 0..p.ops.n_bulk() {
                    let dq = (pert.rho[k][i] - base.rho[k][i]) / eps;
                    let dm = (pert.mu[k][i] - base.mu[k][i]) / eps;
                    e = e.max((dq - s.zeta[k][i]).abs()).max((dm - s.eta[k][i]).abs());
                }
            }
            e
        };
        let e: Vec<f64> = [1e-2, 5e-3, 2.5e-3].iter().map(|&x| err(x)).collect();
        for w in e.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.8..2.2).contains(&ratio), "errors {e:?}");
        }
    }

    #[test]
    fn loglog_fit_of_a_power_law() {
        let x = [0.4, 0.2, 0.1, 0.05];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        let (slope, res) = loglog_fit(&x, &y);
        assert!((slope - 2.0).abs() < 1e-12);
        assert!(res < 1e-12);
    }

    #[test]
    fn taylor_remainder_reports_the_fit() {
        let (p, u) = small();
        let t = taylor_remainder(&p.initial, &p.potentials, &p.ops, &p.solver, &u, &direction(&p, 1), &[0.4, 0.2, 0.1, 0.05], None)
            .unwrap();
        assert!((1.7..=2.3).contains(&t.slope), "slope {}", t.slope);
        assert!(t.fit_residual.is_finite() && t.fit_residual < 0.1);
    }
}
