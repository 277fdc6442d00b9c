#![allow(dead_code)]

use std::f64::consts::PI;

use chbc::geometry::{assemble_operators, build_mesh};
use chbc::parabolic::{linear_step, LinearStepProblem};
use chbc::sensitivity::loglog_slope;
use chbc::{BoundaryField, BulkField};

pub const MMS_A: f64 = 1.0;
pub const MMS_A_GAMMA: f64 = 0.5;

/// A manufactured solution on the unit interval: value, time derivative,
/// second space derivative and outward normal derivative at each end.
pub struct Manufactured {
    pub y: fn(f64, f64) -> f64,
    pub y_t: fn(f64, f64) -> f64,
    pub y_xx: fn(f64, f64) -> f64,
    pub y_x: fn(f64, f64) -> f64,
}

/// `cos(pi x) e^{-t}`: both error sources present.
pub const DECAYING_MODE: Manufactured = Manufactured {
    y: |x, t| (PI * x).cos() * (-t).exp(),
    y_t: |x, t| -(PI * x).cos() * (-t).exp(),
    y_xx: |x, t| -PI * PI * (PI * x).cos() * (-t).exp(),
    y_x: |x, t| -PI * (PI * x).sin() * (-t).exp(),
};

/// `cos(pi x) (1 + t)`: backward Euler is exact in time, so only the
/// spatial error remains.
pub const LINEAR_IN_TIME: Manufactured = Manufactured {
    y: |x, t| (PI * x).cos() * (1.0 + t),
    y_t: |x, _| (PI * x).cos(),
    y_xx: |x, t| -PI * PI * (PI * x).cos() * (1.0 + t),
    y_x: |x, t| -PI * (PI * x).sin() * (1.0 + t),
};

/// `(1 + x) e^{-t/5}`: the lumped finite-volume operator is exact on linear
/// profiles, so only the time error remains. The decay is slower than every
/// mode of the discrete operator, so on a long horizon the error is driven by
/// the forcing rather than by the initial transient.
pub const LINEAR_IN_SPACE: Manufactured = Manufactured {
    y: |x, t| (1.0 + x) * (-0.2 * t).exp(),
    y_t: |x, t| -0.2 * (1.0 + x) * (-0.2 * t).exp(),
    y_xx: |_, _| 0.0,
    y_x: |_, t| (-0.2 * t).exp(),
};

/// Max nodal error at the final time of the backward Euler run, with the
/// sources obtained by substituting `m` into the bulk and boundary equations.
pub fn mms_error(m: &Manufactured, resolution: usize, final_time: f64, steps: usize) -> f64 {
    let mesh = build_mesh(1, resolution, 1.0).unwrap();
    let ops = assemble_operators(&mesh);
    let dt = final_time / steps as f64;
    let xs: Vec<f64> = mesh.bulk_nodes.iter().map(|p| p[0]).collect();
    let at = |t: f64| BulkField(xs.iter().map(|&x| (m.y)(x, t)).collect());
    let ends = [0.0, 1.0];
    let mut y = at(0.0);
    let mut yg = ops.trace_of(&y);
    let nb = ops.n_bulk();
    let ng = ops.n_boundary();
    for k in 0..steps {
        let t = (k + 1) as f64 * dt;
        let sigma = xs
            .iter()
            .map(|&x| (m.y_t)(x, t) - (m.y_xx)(x, t) + MMS_A * (m.y)(x, t))
            .collect();
        let sigma_gamma = ends
            .iter()
            .enumerate()
            .map(|(s, &x)| {
                let dn = if s == 0 { -(m.y_x)(x, t) } else { (m.y_x)(x, t) };
                dn + (m.y_t)(x, t) + MMS_A_GAMMA * (m.y)(x, t)
            })
            .collect();
        let p = LinearStepProblem {
            a: BulkField::constant(nb, MMS_A),
            a_gamma: BoundaryField::constant(ng, MMS_A_GAMMA),
            sigma: BulkField(sigma),
            sigma_gamma: BoundaryField(sigma_gamma),
            dt,
            previous: y,
            previous_gamma: yg,
        };
        (y, yg) = linear_step(&p, &ops).unwrap();
    }
    let ex = at(final_time);
    y.iter().zip(ex.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Fitted order in h over three refinements.
pub fn mms_order_h() -> (Vec<f64>, f64) {
    let res = [9, 17, 33, 65];
    let h: Vec<f64> = res.iter().map(|n| 1.0 / (*n as f64 - 1.0)).collect();
    let err: Vec<f64> = res.iter().map(|&n| mms_error(&LINEAR_IN_TIME, n, 0.5, 20)).collect();
    (err.clone(), loglog_slope(&h, &err))
}

/// Fitted order in dt over three refinements.
pub fn mms_order_dt() -> (Vec<f64>, f64) {
    let final_time = 10.0;
    let steps = [20, 40, 80, 160];
    let dt: Vec<f64> = steps.iter().map(|m| final_time / *m as f64).collect();
    let err: Vec<f64> = steps
        .iter()
        .map(|&m| mms_error(&LINEAR_IN_SPACE, 17, final_time, m))
        .collect();
    (err.clone(), loglog_slope(&dt, &err))
}

/// Joint refinement of the decaying mode with `dt ~ h^2`; returns the
/// errors divided by `dt + h^2`.
pub fn mms_joint_constants() -> Vec<f64> {
    [(9, 10), (17, 40), (33, 160), (65, 640)]
        .iter()
        .map(|&(n, m)| {
            let h = 1.0 / (n as f64 - 1.0);
            let dt = 1.0 / m as f64;
            mms_error(&DECAYING_MODE, n, 1.0, m) / (dt + h * h)
        })
        .collect()
}
