//! Gradient, Taylor, stability and invariant checks with JSON-friendly reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::field::BoundaryField;
use crate::geometry::Mesh;
use crate::objective::AdmissibleBox;
use crate::problem::{DerivativePair, Problem};
use crate::sensitivity::{taylor_remainder, TaylorTable};
use crate::state::{free_energy, lipschitz_probe, ControlTrajectory};
use crate::time::TimeGrid;

pub const FD_TOL: f64 = 1e-2;
pub const GAP_TOL: f64 = 5e-2;
pub const GAP_REDUCTION: f64 = 1.5;
pub const TAYLOR_SLOPE: (f64, f64) = (1.7, 2.3);
pub const STABILITY_SPREAD: f64 = 10.0;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Smooth random boundary field in space and time with sup norm at most
/// `amplitude`, followed by one three-point averaging pass in time.
///
/// The field is a finite sum of cosine modes in the arc coordinate and in
/// time, so draws with the same seed agree across refinements.
pub fn smooth_random_control(mesh: &Mesh, grid: TimeGrid, seed: u64, stream: u64, amplitude: f64) -> ControlTrajectory {
    let mut rng = rng_for(seed, stream);
    const TM: usize = 3;
    const SM: usize = 3;
    let ng = mesh.n_boundary();
    let perimeter = mesh.boundary_measure();
    // coefficients[node group][time mode][space mode][cos/sin]
    let groups = if mesh.dimension == 1 { 2 } else { 1 };
    let mut coef = vec![[[[0.0f64; 2]; SM]; TM]; groups];
    let mut total = vec![0.0; groups];
    for (g, c) in coef.iter_mut().enumerate() {
        for (m, cm) in c.iter_mut().enumerate() {
            for (l, cl) in cm.iter_mut().enumerate() {
                for v in cl.iter_mut() {
                    *v = rng.random_range(-1.0..1.0) / (1 + m + l) as f64;
                    total[g] += v.abs();
                }
            }
        }
    }
    let tpi = std::f64::consts::PI / grid.final_time;
    let spi = 2.0 * std::f64::consts::PI / perimeter;
    let value = |s: usize, t: f64| -> f64 {
        let (g, arc) = if mesh.dimension == 1 { (s, 0.0) } else { (0, mesh.boundary_arc[s]) };
        let mut v = 0.0;
        for m in 0..TM {
            let tm = (m as f64 * tpi * t).cos();
            for l in 0..SM {
                let a = l as f64 * spi * arc;
                v += tm * (coef[g][m][l][0] * a.cos() + coef[g][m][l][1] * a.sin());
            }
        }
        amplitude * v / total[g].max(f64::MIN_POSITIVE)
    };
    let raw: Vec<BoundaryField> = grid
        .times()
        .iter()
        .map(|&t| BoundaryField((0..ng).map(|s| value(s, t)).collect()))
        .collect();
    let last = raw.len() - 1;
    let u = (0..=last)
        .map(|k| {
            let a = &raw[k.saturating_sub(1)];
            let b = &raw[(k + 1).min(last)];
            BoundaryField((0..ng).map(|s| (a[s] + raw[k][s] + b[s]) / 3.0).collect())
        })
        .collect();
    ControlTrajectory { grid, u }
}

/// Random control inside the box, centred at the box midpoint.
pub fn random_admissible_control(
    mesh: &Mesh,
    grid: TimeGrid,
    bounds: &AdmissibleBox,
    seed: u64,
    stream: u64,
    amplitude: f64,
) -> ControlTrajectory {
    let half = bounds
        .lower
        .iter()
        .zip(bounds.upper.iter())
        .map(|(l, u)| 0.5 * (u - l))
        .fold(f64::INFINITY, f64::min);
    let a = amplitude.min(0.9 * half);
    let mut u = smooth_random_control(mesh, grid, seed, stream, a);
    for level in u.u.iter_mut() {
        for s in 0..level.len() {
            let mid = 0.5 * (bounds.lower[s] + bounds.upper[s]);
            level[s] = (mid + level[s]).clamp(bounds.lower[s], bounds.upper[s]);
        }
    }
    u
}

#[derive(Clone, Debug, Serialize)]
pub struct FdSample {
    pub epsilon: f64,
    pub value: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DirectionCheck {
    pub index: usize,
    pub derivatives: DerivativePair,
    pub relative_gap: f64,
    pub fd: Vec<FdSample>,
    pub best_fd_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradientCheckReport {
    pub seed: u64,
    pub directions: Vec<DirectionCheck>,
    pub max_fd_error: f64,
    pub max_relative_gap: f64,
    pub pass: bool,
}

pub fn run_gradient_check(
    problem: &Problem,
    u: &ControlTrajectory,
    count: usize,
    epsilons: &[f64],
    seed: u64,
    amplitude: f64,
) -> Result<GradientCheckReport> {
    let directions: Vec<Result<DirectionCheck>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let h = smooth_random_control(&problem.mesh, problem.grid, seed, i as u64, amplitude);
            let derivatives = problem.derivative_pair(u, &h)?;
            let mut fd = Vec::with_capacity(epsilons.len());
            for &eps in epsilons {
                let jp = problem.evaluate(&u.plus_scaled(eps, &h))?.cost.total;
                let jm = problem.evaluate(&u.plus_scaled(-eps, &h))?.cost.total;
                let value = (jp - jm) / (2.0 * eps);
                let relative_error = (derivatives.adjoint - value).abs() / value.abs().max(f64::MIN_POSITIVE);
                fd.push(FdSample {
                    epsilon: eps,
                    value,
                    relative_error,
                });
            }
            let best_fd_error = fd.iter().map(|s| s.relative_error).fold(f64::INFINITY, f64::min);
            Ok(DirectionCheck {
                index: i,
                relative_gap: derivatives.relative_gap(),
                derivatives,
                fd,
                best_fd_error,
            })
        })
        .collect();
    let directions = directions.into_iter().collect::<Result<Vec<_>>>()?;
    let max_fd_error = directions.iter().map(|d| d.best_fd_error).fold(0.0, f64::max);
    let max_relative_gap = directions.iter().map(|d| d.relative_gap).fold(0.0, f64::max);
    Ok(GradientCheckReport {
        seed,
        pass: max_fd_error <= FD_TOL && max_relative_gap <= GAP_TOL,
        directions,
        max_fd_error,
        max_relative_gap,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GapRefinement {
    pub steps: [usize; 2],
    /// Largest relative adjoint/linearized gap over the directions.
    pub gaps: [f64; 2],
    pub reduction: f64,
    pub pass: bool,
}

/// Adjoint/linearized gap at the configured time step and at half of it.
pub fn run_gap_refinement(config: &RunConfig, count: usize, seed: u64, amplitude: f64) -> Result<GapRefinement> {
    let steps = [config.time.steps, 2 * config.time.steps];
    let gaps = steps
        .par_iter()
        .map(|&m| -> Result<f64> {
            let problem = config.with_steps(m).build_problem()?;
            let u = config.initial_control(&problem);
            let mut worst = 0.0_f64;
            for i in 0..count {
                let h = smooth_random_control(&problem.mesh, problem.grid, seed, i as u64, amplitude);
                worst = worst.max(problem.derivative_pair(&u, &h)?.relative_gap());
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    let reduction = gaps[0] / gaps[1];
    Ok(GapRefinement {
        steps,
        gaps: [gaps[0], gaps[1]],
        reduction,
        pass: gaps[0] <= GAP_TOL && reduction >= GAP_REDUCTION,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TaylorReport {
    pub seed: u64,
    pub tables: Vec<TaylorTable>,
    pub pass: bool,
}

pub fn run_taylor_test(
    problem: &Problem,
    u: &ControlTrajectory,
    count: usize,
    scales: &[f64],
    seed: u64,
    amplitude: f64,
) -> Result<TaylorReport> {
    let tables = (0..count)
        .into_par_iter()
        .map(|i| {
            let h = smooth_random_control(&problem.mesh, problem.grid, seed, i as u64, amplitude);
            taylor_remainder(
                &problem.initial,
                &problem.potentials,
                &problem.ops,
                &problem.solver,
                u,
                &h,
                scales,
                None,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = tables
        .iter()
        .all(|t| t.slope >= TAYLOR_SLOPE.0 && t.slope <= TAYLOR_SLOPE.1);
    Ok(TaylorReport { seed, tables, pass })
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub seed: u64,
    pub ratios: Vec<f64>,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub pass: bool,
}

pub fn run_stability_probe(problem: &Problem, pairs: usize, seed: u64, amplitude: f64) -> Result<StabilityReport> {
    let ratios = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let s = 2 * i as u64;
            let u1 = random_admissible_control(&problem.mesh, problem.grid, &problem.bounds, seed, s, amplitude);
            let u2 = random_admissible_control(&problem.mesh, problem.grid, &problem.bounds, seed, s + 1, amplitude);
            lipschitz_probe(
                &u1,
                &u2,
                &problem.initial,
                &problem.potentials,
                &problem.ops,
                &problem.solver,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let min = sorted.first().copied().unwrap_or(f64::NAN);
    let max = sorted.last().copied().unwrap_or(f64::NAN);
    let pass = n > 0
        && ratios.iter().all(|r| r.is_finite())
        && max <= STABILITY_SPREAD * median
        && min >= median / STABILITY_SPREAD;
    Ok(StabilityReport {
        seed,
        ratios,
        median,
        min,
        max,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub pass: bool,
    pub value: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantReport {
    pub checks: Vec<InvariantCheck>,
    pub pass: bool,
}

/// Forward solve followed by separation, trace, positivity and energy checks.
pub fn run_invariant_suite(problem: &Problem, u: &ControlTrajectory) -> InvariantReport {
    let mut checks = Vec::new();
    match problem.simulate(u) {
        Err(e) => checks.push(InvariantCheck {
            name: "forward_solve",
            pass: false,
            value: f64::NAN,
            detail: e.to_string(),
        }),
        Ok(st) => {
            let eps = problem.potentials.eps_sep;
            let bmax = st.rho_gamma.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
            let margin = st.diagnostics.separation_margin.min(1.0 - bmax);
            checks.push(InvariantCheck {
                name: "separation",
                pass: margin >= eps,
                value: margin,
                detail: format!("1 - max|rho| must be at least {eps:e}"),
            });
            let trace_err = st
                .rho
                .iter()
                .zip(&st.rho_gamma)
                .map(|(r, g)| problem.ops.trace_of(r).minus(g).max_abs())
                .fold(0.0, f64::max);
            checks.push(InvariantCheck {
                name: "trace_compatibility",
                pass: trace_err <= 1e-12,
                value: trace_err,
                detail: "max |rho_G - rho|_G|".into(),
            });
            let scale = problem.initial.mu0.max_abs().max(1.0);
            let tol = 1e-8 * scale;
            checks.push(InvariantCheck {
                name: "mu_positivity",
                pass: st.diagnostics.min_mu >= -tol,
                value: st.diagnostics.min_mu,
                detail: format!("min mu must be at least {:e}", -tol),
            });
            let energies: Vec<f64> = (0..=st.steps())
                .map(|k| free_energy(&st, k, u, &problem.potentials, &problem.ops))
                .collect();
            let emax = energies.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
            checks.push(InvariantCheck {
                name: "energy_finite",
                pass: energies.iter().all(|e| e.is_finite()),
                value: emax,
                detail: "max |free energy| over levels".into(),
            });
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    InvariantReport { checks, pass }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;
    use crate::objective::AdmissibleBox;

    #[test]
    fn random_controls_are_reproducible_and_bounded() {
        let p = default_config().with_steps(20).build_problem().unwrap();
        let a = smooth_random_control(&p.mesh, p.grid, 4, 1, 0.7);
        let b = smooth_random_control(&p.mesh, p.grid, 4, 1, 0.7);
        let c = smooth_random_control(&p.mesh, p.grid, 4, 2, 0.7);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.max_abs() <= 0.7 + 1e-15);
        let bounds = AdmissibleBox::uniform(2, 0.1, 0.3, 10.0);
        let r = random_admissible_control(&p.mesh, p.grid, &bounds, 4, 1, 5.0);
        assert!(bounds.contains(&r));
    }

    #[test]
    fn zero_direction_has_zero_derivatives() {
        let cfg = default_config().with_steps(20);
        let p = cfg.build_problem().unwrap();
        let d = p.derivative_pair(&cfg.initial_control(&p), &p.zero_control()).unwrap();
        assert_eq!(d.adjoint, 0.0);
        assert_eq!(d.linearized, 0.0);
        assert_eq!(d.duality_lhs, 0.0);
        assert_eq!(d.duality_rhs, 0.0);
    }

    #[test]
    fn adjoint_derivative_matches_central_differences() {
        let cfg = default_config().with_steps(50);
        let p = cfg.build_problem().unwrap();
        let r = run_gradient_check(&p, &cfg.initial_control(&p), 2, &[1e-3, 1e-4, 1e-5], 3, 1.0).unwrap();
        assert!(r.max_fd_error <= 1e-3, "{}", r.max_fd_error);
        assert!(r.pass);
    }

    #[test]
    fn invariant_suite_passes_on_the_default_problem() {
        let cfg = default_config().with_steps(20);
        let p = cfg.build_problem().unwrap();
        let r = run_invariant_suite(&p, &cfg.initial_control(&p));
        assert!(r.pass, "{:?}", r.checks);
    }
}
