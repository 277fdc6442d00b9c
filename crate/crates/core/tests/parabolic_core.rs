mod common;

use std::f64::consts::PI;

use chbc::geometry::{assemble_operators, build_mesh};
use chbc::parabolic::{stability_monitor, StepHistory};
use chbc::{BoundaryField, BulkField};

#[test]
fn manufactured_solution_second_order_in_space() {
    let (err, order) = common::mms_order_h();
    for w in err.windows(2) {
        assert!(w[1] < w[0], "errors must decrease: {err:?}");
    }
    assert!(order >= 2.0, "h order {order}, errors {err:?}");
}

#[test]
fn manufactured_solution_first_order_in_time() {
    let (err, order) = common::mms_order_dt();
    assert!(order >= 1.0, "dt order {order}, errors {err:?}");
}

#[test]
fn decaying_mode_error_is_first_order_in_dt_plus_h_squared() {
    let c = common::mms_joint_constants();
    let max = c.iter().cloned().fold(0.0, f64::max);
    let min = c.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max <= 1.5 * min, "error constants {c:?}");
}

fn monitor_at(resolution: usize) -> f64 {
    let mesh = build_mesh(1, resolution, 1.0).unwrap();
    let ops = assemble_operators(&mesh);
    let steps = 50;
    let final_time = 0.5;
    let dt = final_time / steps as f64;
    let mut hist = StepHistory::new(
        BulkField::zeros(ops.n_bulk()),
        BoundaryField::zeros(ops.n_boundary()),
        dt,
    );
    for k in 0..steps {
        let t = (k + 1) as f64 * dt;
        let sigma = BulkField(
            mesh.bulk_nodes
                .iter()
                .map(|p| (PI * p[0]).sin() * (1.0 + t))
                .collect(),
        );
        let sigma_g = BoundaryField(vec![1.0 - t, 0.5 * t]);
        let a = BulkField::constant(ops.n_bulk(), 0.5);
        let ag = BoundaryField::constant(ops.n_boundary(), -0.5);
        hist.advance(&ops, a, ag, sigma, sigma_g).unwrap();
    }
    stability_monitor(&hist, &ops).unwrap()
}

#[test]
fn stability_ratio_is_mesh_independent() {
    let r: Vec<f64> = [17, 33, 65].iter().map(|&n| monitor_at(n)).collect();
    let max = r.iter().cloned().fold(0.0, f64::max);
    let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min > 0.0);
    assert!(max <= 1.25 * min, "ratios {r:?}");
}
