//! Forward solver for the viscous Cahn-Hilliard system with dynamic boundary
//! condition, staggered in time: an implicit Newton step for `rho` with the
//! chemical potential lagged, then a linear implicit step for `mu`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::field::{BoundaryField, BulkField};
use crate::geometry::{spmv, MeshOperators};
use crate::parabolic::LINEAR_TOL;
use crate::potentials::PotentialSet;
use crate::time::{boundary_energy_norm, bulk_energy_norm, control_norm, TimeGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub mu0: BulkField,
    pub rho0: BulkField,
}

impl InitialData {
    pub fn validate(&self, ops: &MeshOperators, ps: &PotentialSet) -> Result<()> {
        let n = ops.n_bulk();
        ensure(self.mu0.len() == n && self.rho0.len() == n, || {
            format!("initial data must have {n} bulk entries")
        })?;
        ensure(self.mu0.is_finite() && self.rho0.is_finite(), || {
            "initial data must be finite".into()
        })?;
        ensure(self.mu0.min_value() >= 0.0, || {
            format!("initial chemical potential must be nonnegative, min {}", self.mu0.min_value())
        })?;
        ps.check_separation(&self.rho0)
    }
}

/// Boundary control; level `k < M` acts on `[t_k, t_{k+1})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlTrajectory {
    pub grid: TimeGrid,
    pub u: Vec<BoundaryField>,
}

impl ControlTrajectory {
    pub fn constant(grid: TimeGrid, n_boundary: usize, value: f64) -> Self {
        Self {
            grid,
            u: vec![BoundaryField::constant(n_boundary, value); grid.levels()],
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn validate(&self, ops: &MeshOperators) -> Result<()> {
        ensure(self.u.len() == self.grid.levels(), || {
            format!("control needs {} levels, got {}", self.grid.levels(), self.u.len())
        })?;
        ensure(
            self.u.iter().all(|l| l.len() == ops.n_boundary() && l.is_finite()),
            || format!("control levels must have {} finite entries", ops.n_boundary()),
        )
    }

    pub fn plus_scaled(&self, s: f64, other: &ControlTrajectory) -> ControlTrajectory {
        ControlTrajectory {
            grid: self.grid,
            u: self
                .u
                .iter()
                .zip(&other.u)
                .map(|(a, b)| a.plus_scaled(s, b))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().map(|l| l.max_abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Bound on the max norm of the mass-scaled Newton residual.
    pub newton_tol: f64,
    pub newton_max_iterations: usize,
    pub max_halvings: usize,
    /// Negative `mu` below `-positivity_tol` is flagged.
    pub positivity_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            newton_max_iterations: 50,
            max_halvings: 40,
            positivity_tol: 1e-12,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StateDiagnostics {
    pub newton_iterations: Vec<usize>,
    pub bisection_fallbacks: usize,
    pub min_mu: f64,
    /// `1 - max |rho|` over all levels, bulk and boundary.
    pub separation_margin: f64,
    /// Steps whose new `mu` dipped below `-positivity_tol`.
    pub positivity_warnings: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateTrajectory {
    pub grid: TimeGrid,
    pub mu: Vec<BulkField>,
    pub rho: Vec<BulkField>,
    pub rho_gamma: Vec<BoundaryField>,
    pub diagnostics: StateDiagnostics,
}

impl StateTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn steps(&self) -> usize {
        self.grid.steps
    }
}

/// Newton solve of the `rho` step
/// `Mt(rho - rho_k)/dt + Kt rho + M[f'(rho) + pi(rho) - mu_k g'(rho)]
///  + P'M_G[f_G'(P rho) + pi_G(P rho) - u_k] = 0`.
struct RhoStep<'a> {
    ops: &'a MeshOperators,
    ps: &'a PotentialSet,
    dt: f64,
    rho_old: &'a [f64],
    mu_old: &'a [f64],
    u: &'a [f64],
    mass: Vec<f64>,
}

impl RhoStep<'_> {
    fn residual(&self, rho: &[f64]) -> Result<Vec<f64>> {
        let ops = self.ops;
        let be = self.ps.eval_bulk(rho)?;
        let rg = ops.trace_of(rho);
        let ge = self.ps.eval_boundary(&rg)?;
        let mut r = spmv(&ops.stiffness_bulk, rho);
        for i in 0..rho.len() {
            r[i] += self.mass[i] * (rho[i] - self.rho_old[i]) / self.dt
                + ops.bulk_weights[i] * (be.f1[i] + be.pi[i] - self.mu_old[i] * be.g1[i]);
        }
        let kg = spmv(&ops.stiffness_boundary, &rg);
        let lifted: Vec<f64> = (0..rg.len())
            .map(|s| kg[s] + ops.boundary_weights[s] * (ge.f1[s] + ge.pi[s] - self.u[s]))
            .collect();
        ops.add_lifted(&mut r, &lifted);
        Ok(r)
    }

    fn scaled_norm(&self, r: &[f64]) -> f64 {
        r.iter()
            .zip(&self.mass)
            .fold(0.0_f64, |m, (v, w)| m.max((v / w).abs()))
    }

    fn jacobian_solve(&self, rho: &[f64], r: &[f64]) -> Result<Vec<f64>> {
        let ops = self.ops;
        let be = self.ps.eval_bulk(rho)?;
        let ge = self.ps.eval_boundary(&ops.trace_of(rho))?;
        let inv = 1.0 / self.dt;
        let c: Vec<f64> = (0..rho.len())
            .map(|i| inv + be.f2[i] + be.pi1[i] - self.mu_old[i] * be.g2[i])
            .collect();
        let cg: Vec<f64> = (0..ge.f2.len()).map(|s| inv + ge.f2[s] + ge.pi1[s]).collect();
        ops.coupled_matrix(&c, &cg).solve(r, LINEAR_TOL)
    }

    /// Nodewise bisection sweep; each node equation is monotone near the
    /// ends of the interval because of the logarithmic singularity.
    fn bisection_sweep(&self, rho: &mut [f64]) -> Result<()> {
        let lim = 1.0 - self.ps.eps_sep;
        for i in 0..rho.len() {
            let eval = |x: f64, rho: &mut [f64]| -> Result<f64> {
                rho[i] = x;
                Ok(self.residual(rho)?[i])
            };
            let (mut lo, mut hi) = (-lim, lim);
            let flo = eval(lo, rho)?;
            let fhi = eval(hi, rho)?;
            if flo.signum() == fhi.signum() {
                rho[i] = if flo.abs() < fhi.abs() { lo } else { hi };
                continue;
            }
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = eval(mid, rho)?;
                if fm.signum() == flo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            rho[i] = 0.5 * (lo + hi);
        }
        Ok(())
    }

    fn solve(&self, step: usize, opts: &SolverOptions, diag: &mut StateDiagnostics) -> Result<Vec<f64>> {
        let lim = 1.0 - self.ps.eps_sep;
        let mut rho = self.rho_old.to_vec();
        let mut r = self.residual(&rho)?;
        let mut norm = self.scaled_norm(&r);
        let mut it = 0;
        while norm > opts.newton_tol {
            if it == opts.newton_max_iterations {
                return Err(Error::Newton {
                    step,
                    iterations: it,
                    residual: norm,
                });
            }
            it += 1;
            let delta = self.jacobian_solve(&rho, &r)?;
            let mut lambda = 1.0;
            let mut trial: Vec<f64> = rho.iter().zip(&delta).map(|(x, d)| x - d).collect();
            let mut halvings = 0;
            while trial.iter().any(|v| !(v.abs() <= lim)) && halvings < opts.max_halvings {
                lambda *= 0.5;
                halvings += 1;
                trial = rho.iter().zip(&delta).map(|(x, d)| x - lambda * d).collect();
            }
            if trial.iter().any(|v| !(v.abs() <= lim)) {
                diag.bisection_fallbacks += 1;
                trial = rho.clone();
                self.bisection_sweep(&mut trial)?;
            }
            rho = trial;
            r = self.residual(&rho)?;
            norm = self.scaled_norm(&r);
            if !norm.is_finite() {
                return Err(Error::Newton {
                    step,
                    iterations: it,
                    residual: norm,
                });
            }
        }
        diag.newton_iterations.push(it);
        Ok(rho)
    }
}

/// Linear `mu` step with `G = g(rho_{k+1})`:
/// `M[(1+2G)(mu - mu_k)/dt + mu G'(rho_{k+1} - rho_k)/dt] + K mu = 0`.
fn mu_step(
    ops: &MeshOperators,
    ps: &PotentialSet,
    dt: f64,
    mu_old: &[f64],
    rho_old: &[f64],
    rho_new: &[f64],
) -> Result<Vec<f64>> {
    let (g, g1, _) = ps.coupling_at(rho_new);
    let n = mu_old.len();
    let c: Vec<f64> = (0..n)
        .map(|i| (1.0 + 2.0 * g[i]) / dt + g1[i] * (rho_new[i] - rho_old[i]) / dt)
        .collect();
    let rhs: Vec<f64> = (0..n)
        .map(|i| ops.bulk_weights[i] * (1.0 + 2.0 * g[i]) / dt * mu_old[i])
        .collect();
    ops.neumann_matrix(&c).solve(&rhs, LINEAR_TOL)
}

pub fn solve_state(
    init: &InitialData,
    control: &ControlTrajectory,
    ps: &PotentialSet,
    ops: &MeshOperators,
    opts: &SolverOptions,
) -> Result<StateTrajectory> {
    init.validate(ops, ps)?;
    control.validate(ops)?;
    let grid = control.grid;
    let dt = grid.dt();
    let mut mu = vec![init.mu0.clone()];
    let mut rho = vec![init.rho0.clone()];
    let mut rho_gamma = vec![ops.trace_of(&init.rho0)];
    let mut diag = StateDiagnostics {
        min_mu: init.mu0.min_value(),
        separation_margin: 1.0 - init.rho0.max_abs(),
        ..Default::default()
    };
    let mass = ops.coupled_mass();
    for k in 0..grid.steps {
        let step = RhoStep {
            ops,
            ps,
            dt,
            rho_old: &rho[k],
            mu_old: &mu[k],
            u: &control.u[k],
            mass: mass.clone(),
        };
        let rho_new = step.solve(k, opts, &mut diag)?;
        let mu_new = mu_step(ops, ps, dt, &mu[k], &rho[k], &rho_new)?;
        let mmin = mu_new.iter().copied().fold(f64::INFINITY, f64::min);
        if mmin < -opts.positivity_tol {
            diag.positivity_warnings.push(k);
        }
        diag.min_mu = diag.min_mu.min(mmin);
        let rmax = rho_new.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        diag.separation_margin = diag.separation_margin.min(1.0 - rmax);
        rho_gamma.push(ops.trace_of(&rho_new));
        rho.push(BulkField(rho_new));
        mu.push(BulkField(mu_new));
    }
    Ok(StateTrajectory {
        grid,
        mu,
        rho,
        rho_gamma,
        diagnostics: diag,
    })
}

/// Total free energy at level `k`:
/// `(1/2)|grad rho|^2 + (1/2)|grad_G rho_G|^2 + (f + pi_hat)(rho) + (f_G + pi_G_hat)(rho_G)
///  + (1/2)(1 + 2g(rho)) mu^2 - u rho_G`.
pub fn free_energy(
    state: &StateTrajectory,
    k: usize,
    control: &ControlTrajectory,
    ps: &PotentialSet,
    ops: &MeshOperators,
) -> f64 {
    let rho = &state.rho[k];
    let rg = &state.rho_gamma[k];
    let mu = &state.mu[k];
    let mut e = 0.5 * ops.dirichlet_bulk(rho) + 0.5 * ops.dirichlet_boundary(rg);
    for i in 0..rho.len() {
        let g = ps.coupling.value(rho[i]);
        e += ops.bulk_weights[i]
            * (ps.bulk_density(rho[i]) + 0.5 * (1.0 + 2.0 * g) * mu[i] * mu[i]);
    }
    let u = &control.u[k.min(control.u.len() - 1)];
    for s in 0..rg.len() {
        e += ops.boundary_weights[s] * (ps.boundary_density(rg[s]) - u[s] * rg[s]);
    }
    e
}

/// Discrete Lipschitz ratio `||S(u1) - S(u2)|| / ||u1 - u2||` in the
/// state and control energy norms.
pub fn lipschitz_probe(
    u1: &ControlTrajectory,
    u2: &ControlTrajectory,
    init: &InitialData,
    ps: &PotentialSet,
    ops: &MeshOperators,
    opts: &SolverOptions,
) -> Result<f64> {
    let du = u1.plus_scaled(-1.0, u2);
    let den = control_norm(ops, &u1.grid, &du.u);
    if den == 0.0 {
        return Err(Error::UndefinedRatio("controls coincide"));
    }
    let s1 = solve_state(init, u1, ps, ops, opts)?;
    let s2 = solve_state(init, u2, ps, ops, opts)?;
    Ok(state_difference_norm(&s1, &s2, ops) / den)
}

pub fn state_difference_norm(s1: &StateTrajectory, s2: &StateTrajectory, ops: &MeshOperators) -> f64 {
    let diff = |a: &[BulkField], b: &[BulkField]| -> Vec<BulkField> {
        a.iter().zip(b).map(|(x, y)| x.minus(y)).collect()
    };
    let dmu = diff(&s1.mu, &s2.mu);
    let drho = diff(&s1.rho, &s2.rho);
    let drg: Vec<BoundaryField> = s1
        .rho_gamma
        .iter()
        .zip(&s2.rho_gamma)
        .map(|(x, y)| x.minus(y))
        .collect();
    bulk_energy_norm(ops, &s1.grid, &dmu)
        + bulk_energy_norm(ops, &s1.grid, &drho)
        + boundary_energy_norm(ops, &s1.grid, &drg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{assemble_operators, build_mesh};

    #[test]
    fn zero_rho_zero_control_stays_at_rest() {
        // rho = 0 is a stationary point when mu g'(0) = 0 and u = 0.
        let mesh = build_mesh(1, 9, 1.0).unwrap();
        let ops = assemble_operators(&mesh);
        let ps = PotentialSet::default();
        let init = InitialData {
            mu0: BulkField::constant(9, 0.3),
            rho0: BulkField::zeros(9),
        };
        let grid = TimeGrid::new(0.5, 5).unwrap();
        let u = ControlTrajectory::constant(grid, 2, 0.0);
        let st = solve_state(&init, &u, &ps, &ops, &SolverOptions::default()).unwrap();
        for k in 0..=5 {
            assert!(st.rho[k].max_abs() < 1e-14);
            assert!(st.mu[k].iter().all(|m| (m - 0.3).abs() < 1e-13));
        }
    }

    #[test]
    fn rejects_negative_initial_mu() {
        let mesh = build_mesh(1, 5, 1.0).unwrap();
        let ops = assemble_operators(&mesh);
        let init = InitialData {
            mu0: BulkField(vec![0.1, -0.1, 0.1, 0.1, 0.1]),
            rho0: BulkField::zeros(5),
        };
        let grid = TimeGrid::new(0.1, 1).unwrap();
        let u = ControlTrajectory::constant(grid, 2, 0.0);
        let r = solve_state(&init, &u, &PotentialSet::default(), &ops, &SolverOptions::default());
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    use crate::config::default_config;

    /// Scalar backward Euler for `r' = -(f'(r) + pi(r))`, solved by bisection.
    fn scalar_backward_euler(ps: &PotentialSet, r0: f64, dt: f64, steps: usize) -> Vec<f64> {
        let mut out = vec![r0];
        let mut r = r0;
        for _ in 0..steps {
            let res = |x: f64| x - r + dt * (ps.bulk.d1(x) + ps.pi.value(x));
            let (mut lo, mut hi) = (-1.0 + 1e-12, 1.0 - 1e-12);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if res(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            r = 0.5 * (lo + hi);
            out.push(r);
        }
        out
    }

    fn constant_run(dim: usize, n: usize, r0: f64, steps: usize) -> (StateTrajectory, PotentialSet) {
        let mesh = build_mesh(dim, n, 1.0).unwrap();
        let ops = assemble_operators(&mesh);
        let ps = PotentialSet::default();
        let init = InitialData {
            mu0: BulkField::zeros(ops.n_bulk()),
            rho0: BulkField::constant(ops.n_bulk(), r0),
        };
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let u = ControlTrajectory::constant(grid, ops.n_boundary(), 0.0);
        (solve_state(&init, &u, &ps, &ops, &SolverOptions::default()).unwrap(), ps)
    }

    #[test]
    fn constant_data_follows_the_scalar_ode() {
        for (dim, n) in [(1, 9), (2, 5)] {
            let (st, ps) = constant_run(dim, n, 0.5, 40);
            let oracle = scalar_backward_euler(&ps, 0.5, 1.0 / 40.0, 40);
            for k in 0..=40 {
                assert_eq!(st.mu[k].max_abs(), 0.0);
                for v in st.rho[k].iter().chain(st.rho_gamma[k].iter()) {
                    assert!((v - oracle[k]).abs() < 1e-9, "dim {dim} level {k}");
                }
            }
        }
    }

    #[test]
    fn constant_data_converges_in_time() {
        // reference from a fine scalar backward Euler run
        let ps = PotentialSet::default();
        let fine = *scalar_backward_euler(&ps, 0.5, 1.0 / 20480.0, 20480).last().unwrap();
        let err = |m: usize| (constant_run(1, 5, 0.5, m).0.rho[m][2] - fine).abs();
        let e: Vec<f64> = [20, 40, 80].iter().map(|&m| err(m)).collect();
        for w in e.windows(2) {
            assert!((1.8..2.2).contains(&(w[0] / w[1])), "errors {e:?}");
        }
    }

    #[test]
    fn time_refinement_is_first_order() {
        let cfg = default_config();
        let run = |m: usize| {
            let c = cfg.with_steps(m);
            let p = c.build_problem().unwrap();
            p.simulate(&c.initial_control(&p)).unwrap()
        };
        let (a, b, c) = (run(25), run(50), run(100));
        let d1 = a.rho[25].minus(&b.rho[50]).max_abs();
        let d2 = b.rho[50].minus(&c.rho[100]).max_abs();
        assert!((1.7..2.3).contains(&(d1 / d2)), "{d1} {d2}");
    }

    #[test]
    fn free_energy_of_a_constant_state() {
        let mesh = build_mesh(1, 9, 1.0).unwrap();
        let ops = assemble_operators(&mesh);
        let ps = PotentialSet::default();
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let r = 0.3;
        let st = StateTrajectory {
            grid,
            mu: vec![BulkField::zeros(9); 2],
            rho: vec![BulkField::constant(9, r); 2],
            rho_gamma: vec![BoundaryField::constant(2, r); 2],
            diagnostics: StateDiagnostics::default(),
        };
        let u = ControlTrajectory::constant(grid, 2, 0.0);
        let e = free_energy(&st, 0, &u, &ps, &ops);
        let exact = ps.bulk_density(r) + 2.0 * ps.boundary_density(r);
        assert!((e - exact).abs() < 1e-14);
    }

    #[test]
    fn lipschitz_probe_needs_distinct_controls() {
        let p = default_config().with_steps(10).build_problem().unwrap();
        let u = ControlTrajectory::constant(p.grid, 2, 0.1);
        let r = lipschitz_probe(&u, &u, &p.initial, &p.potentials, &p.ops, &p.solver);
        assert!(matches!(r, Err(Error::UndefinedRatio(_))));
    }
}
