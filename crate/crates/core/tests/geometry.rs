use chbc::geometry::{assemble_operators, build_mesh};
use chbc::sensitivity::loglog_slope;

fn green_residual_2d(n: usize) -> f64 {
    let mesh = build_mesh(2, n, 1.0).unwrap();
    let ops = assemble_operators(&mesh);
    let v: Vec<f64> = mesh
        .bulk_nodes
        .iter()
        .map(|p| (1.3 * p[0]).sin() * (0.7 * p[1] + 0.2).cos())
        .collect();
    let w: Vec<f64> = mesh.bulk_nodes.iter().map(|p| 1.0 + p[0] * p[1]).collect();
    ops.green_residual(&v, &w).abs()
}

#[test]
fn green_identity_converges_in_two_dimensions() {
    let res = [9, 17, 33, 65];
    let r: Vec<f64> = res.iter().map(|&n| green_residual_2d(n)).collect();
    // first order: each halving of h roughly halves the residual
    for w in r.windows(2) {
        assert!(w[0] / w[1] >= 1.8, "residuals {r:?}");
    }
}

#[test]
fn boundary_measures_match_the_domain() {
    for (dim, n) in [(1, 17), (2, 17), (2, 5)] {
        let mesh = build_mesh(dim, n, 2.0).unwrap();
        let ops = assemble_operators(&mesh);
        let vol: f64 = ops.bulk_weights.iter().sum();
        let area: f64 = ops.boundary_weights.iter().sum();
        let (ev, ea) = if dim == 1 { (2.0, 2.0) } else { (4.0, 8.0) };
        assert!((vol - ev).abs() < 1e-12, "volume {vol}");
        assert!((area - ea).abs() < 1e-12, "boundary {area}");
    }
}

#[test]
fn interior_laplacian_is_second_order_in_two_dimensions() {
    let err = |n: usize| {
        let mesh = build_mesh(2, n, 1.0).unwrap();
        let ops = assemble_operators(&mesh);
        let k = std::f64::consts::PI;
        let v: Vec<f64> = mesh.bulk_nodes.iter().map(|p| (k * p[0]).cos() * (k * p[1]).cos()).collect();
        let lap = ops.laplace_bulk(&v);
        mesh.bulk_nodes
            .iter()
            .enumerate()
            .filter(|(_, p)| p.iter().all(|c| (0.3 - 1e-9..=0.7 + 1e-9).contains(c)))
            .map(|(i, _)| (lap[i] + 2.0 * k * k * v[i]).abs())
            .fold(0.0, f64::max)
    };
    let e: Vec<f64> = [11, 21, 41].iter().map(|&n| err(n)).collect();
    let h = [0.1, 0.05, 0.025];
    assert!(loglog_slope(&h, &e) >= 2.0 - 1e-2, "errors {e:?}");
}
