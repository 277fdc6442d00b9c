//! Uniform grids on the unit interval and the unit square, with lumped-mass
//! finite-volume operators for the bulk and the boundary ring.

use serde::{Deserialize, Serialize};
use sprs::{CsMat, TriMat};

use crate::error::{ensure, Result};
use crate::field::{BoundaryField, BulkField};
use crate::linalg::BandMatrix;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mesh {
    pub dimension: usize,
    /// Nodes per side.
    pub resolution: usize,
    pub domain_length: f64,
    pub spacing: f64,
    /// Node coordinates; the second entry is zero in 1D.
    pub bulk_nodes: Vec<[f64; 2]>,
    /// Bulk indices of the boundary nodes, in ring order.
    pub boundary_nodes: Vec<usize>,
    /// Arc coordinate of each ring node (the x coordinate in 1D).
    pub boundary_arc: Vec<f64>,
}

impl Mesh {
    pub fn n_bulk(&self) -> usize {
        self.bulk_nodes.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary_nodes.len()
    }

    pub fn boundary_coords(&self) -> Vec<[f64; 2]> {
        self.boundary_nodes
            .iter()
            .map(|&i| self.bulk_nodes[i])
            .collect()
    }

    /// Measure of the boundary: 2 endpoints in 1D, the perimeter in 2D.
    pub fn boundary_measure(&self) -> f64 {
        match self.dimension {
            1 => 2.0,
            _ => 4.0 * self.domain_length,
        }
    }

    pub fn domain_measure(&self) -> f64 {
        self.domain_length.powi(self.dimension as i32)
    }
}

pub fn build_mesh(dimension: usize, resolution: usize, domain_length: f64) -> Result<Mesh> {
    ensure(dimension == 1 || dimension == 2, || {
        format!("dimension must be 1 or 2, got {dimension}")
    })?;
    ensure(resolution >= 3, || {
        format!("resolution must be at least 3 nodes per side, got {resolution}")
    })?;
    ensure(domain_length.is_finite() && domain_length > 0.0, || {
        format!("domain length must be positive, got {domain_length}")
    })?;
    let n = resolution;
    let h = domain_length / (n - 1) as f64;
    if dimension == 1 {
        let bulk_nodes = (0..n).map(|i| [i as f64 * h, 0.0]).collect();
        return Ok(Mesh {
            dimension,
            resolution,
            domain_length,
            spacing: h,
            bulk_nodes,
            boundary_nodes: vec![0, n - 1],
            boundary_arc: vec![0.0, domain_length],
        });
    }
    let mut bulk_nodes = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            bulk_nodes.push([i as f64 * h, j as f64 * h]);
        }
    }
    let id = |i: usize, j: usize| j * n + i;
    let mut ring = Vec::with_capacity(4 * (n - 1));
    for i in 0..n - 1 {
        ring.push(id(i, 0));
    }
    for j in 0..n - 1 {
        ring.push(id(n - 1, j));
    }
    for i in (1..n).rev() {
        ring.push(id(i, n - 1));
    }
    for j in (1..n).rev() {
        ring.push(id(0, j));
    }
    let boundary_arc = (0..ring.len()).map(|s| s as f64 * h).collect();
    Ok(Mesh {
        dimension,
        resolution,
        domain_length,
        spacing: h,
        bulk_nodes,
        boundary_nodes: ring,
        boundary_arc,
    })
}

#[derive(Clone, Debug)]
pub struct MeshOperators {
    pub dimension: usize,
    pub spacing: f64,
    /// Half-bandwidth of every bulk system in natural ordering.
    pub bandwidth: usize,
    /// Standard stencil on interior rows, zero rows at boundary nodes.
    pub laplacian_bulk: CsMat<f64>,
    pub laplacian_boundary: CsMat<f64>,
    /// Outward normal difference, one row per ring node.
    pub normal_derivative: CsMat<f64>,
    /// Graph Laplacian `K` with `v'Kv` approximating the Dirichlet energy.
    pub stiffness_bulk: CsMat<f64>,
    pub stiffness_boundary: CsMat<f64>,
    /// Ring slot to bulk index.
    pub trace: Vec<usize>,
    /// Bulk index to ring slot.
    pub boundary_slot: Vec<Option<usize>>,
    pub bulk_weights: Vec<f64>,
    pub boundary_weights: Vec<f64>,
}

fn csr(rows: usize, cols: usize, trip: Vec<(usize, usize, f64)>) -> CsMat<f64> {
    let mut t = TriMat::new((rows, cols));
    for (r, c, v) in trip {
        t.add_triplet(r, c, v);
    }
    t.to_csr()
}

/// Sparse matrix times dense vector.
pub fn spmv(a: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.rows()];
    for (r, row) in a.outer_iterator().enumerate() {
        y[r] = row.iter().map(|(c, v)| v * x[c]).sum();
    }
    y
}

pub fn assemble_operators(mesh: &Mesh) -> MeshOperators {
    let n = mesh.resolution;
    let h = mesh.spacing;
    let nb = mesh.n_bulk();
    let ng = mesh.n_boundary();
    let mut boundary_slot = vec![None; nb];
    for (s, &i) in mesh.boundary_nodes.iter().enumerate() {
        boundary_slot[i] = Some(s);
    }
    let mut lap = Vec::new();
    let mut stiff = Vec::new();
    let mut nd = Vec::new();
    let add_edge = |stiff: &mut Vec<(usize, usize, f64)>, a: usize, b: usize, w: f64| {
        stiff.push((a, a, w));
        stiff.push((b, b, w));
        stiff.push((a, b, -w));
        stiff.push((b, a, -w));
    };
    let (bulk_weights, lap_gamma, stiff_gamma, boundary_weights, bandwidth);
    if mesh.dimension == 1 {
        bulk_weights = (0..n)
            .map(|i| if i == 0 || i == n - 1 { h / 2.0 } else { h })
            .collect::<Vec<_>>();
        for i in 0..n - 1 {
            add_edge(&mut stiff, i, i + 1, 1.0 / h);
        }
        for i in 1..n - 1 {
            lap.push((i, i - 1, 1.0 / (h * h)));
            lap.push((i, i, -2.0 / (h * h)));
            lap.push((i, i + 1, 1.0 / (h * h)));
        }
        nd.push((0, 0, 1.0 / h));
        nd.push((0, 1, -1.0 / h));
        nd.push((1, n - 1, 1.0 / h));
        nd.push((1, n - 2, -1.0 / h));
        lap_gamma = Vec::new();
        stiff_gamma = Vec::new();
        boundary_weights = vec![1.0, 1.0];
        bandwidth = 1;
    } else {
        let id = |i: usize, j: usize| j * n + i;
        let on_edge = |i: usize| i == 0 || i == n - 1;
        let mut w = vec![0.0; nb];
        for j in 0..n {
            for i in 0..n {
                let fx = if on_edge(i) { 0.5 } else { 1.0 };
                let fy = if on_edge(j) { 0.5 } else { 1.0 };
                w[id(i, j)] = h * h * fx * fy;
            }
        }
        bulk_weights = w;
        for j in 0..n {
            for i in 0..n {
                if i + 1 < n {
                    let wt = if on_edge(j) { 0.5 } else { 1.0 };
                    add_edge(&mut stiff, id(i, j), id(i + 1, j), wt);
                }
                if j + 1 < n {
                    let wt = if on_edge(i) { 0.5 } else { 1.0 };
                    add_edge(&mut stiff, id(i, j), id(i, j + 1), wt);
                }
            }
        }
        let c = 1.0 / (h * h);
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let k = id(i, j);
                lap.push((k, k, -4.0 * c));
                lap.push((k, id(i - 1, j), c));
                lap.push((k, id(i + 1, j), c));
                lap.push((k, id(i, j - 1), c));
                lap.push((k, id(i, j + 1), c));
            }
        }
        for (s, &k) in mesh.boundary_nodes.iter().enumerate() {
            let (i, j) = (k % n, k / n);
            let mut inward = Vec::new();
            if i == 0 {
                inward.push(id(1, j));
            }
            if i == n - 1 {
                inward.push(id(n - 2, j));
            }
            if j == 0 {
                inward.push(id(i, 1));
            }
            if j == n - 1 {
                inward.push(id(i, n - 2));
            }
            let share = 1.0 / (inward.len() as f64 * h);
            nd.push((s, k, 1.0 / h));
            for q in inward {
                nd.push((s, q, -share));
            }
        }
        let mut lg = Vec::new();
        let mut sg = Vec::new();
        for s in 0..ng {
            let next = (s + 1) % ng;
            let prev = (s + ng - 1) % ng;
            lg.push((s, prev, c));
            lg.push((s, s, -2.0 * c));
            lg.push((s, next, c));
            add_edge(&mut sg, s, next, 1.0 / h);
        }
        lap_gamma = lg;
        stiff_gamma = sg;
        boundary_weights = vec![h; ng];
        bandwidth = n;
    }
    MeshOperators {
        dimension: mesh.dimension,
        spacing: h,
        bandwidth,
        laplacian_bulk: csr(nb, nb, lap),
        laplacian_boundary: csr(ng, ng, lap_gamma),
        normal_derivative: csr(ng, nb, nd),
        stiffness_bulk: csr(nb, nb, stiff),
        stiffness_boundary: csr(ng, ng, stiff_gamma),
        trace: mesh.boundary_nodes.clone(),
        boundary_slot,
        bulk_weights,
        boundary_weights,
    }
}

impl MeshOperators {
    pub fn n_bulk(&self) -> usize {
        self.bulk_weights.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary_weights.len()
    }

    pub fn trace_of(&self, v: &[f64]) -> BoundaryField {
        BoundaryField(self.trace.iter().map(|&i| v[i]).collect())
    }

    /// Adds `P' w` into a bulk vector.
    pub fn add_lifted(&self, bulk: &mut [f64], w: &[f64]) {
        for (s, &i) in self.trace.iter().enumerate() {
            bulk[i] += w[s];
        }
    }

    pub fn inner_bulk(&self, v: &[f64], w: &[f64]) -> f64 {
        self.bulk_weights
            .iter()
            .zip(v.iter().zip(w))
            .map(|(m, (a, b))| m * a * b)
            .sum()
    }

    pub fn inner_boundary(&self, v: &[f64], w: &[f64]) -> f64 {
        self.boundary_weights
            .iter()
            .zip(v.iter().zip(w))
            .map(|(m, (a, b))| m * a * b)
            .sum()
    }

    pub fn norm_bulk(&self, v: &[f64]) -> f64 {
        self.inner_bulk(v, v).sqrt()
    }

    pub fn norm_boundary(&self, v: &[f64]) -> f64 {
        self.inner_boundary(v, v).sqrt()
    }

    pub fn dirichlet_bulk(&self, v: &[f64]) -> f64 {
        let kv = spmv(&self.stiffness_bulk, v);
        v.iter().zip(&kv).map(|(a, b)| a * b).sum()
    }

    pub fn dirichlet_boundary(&self, v: &[f64]) -> f64 {
        let kv = spmv(&self.stiffness_boundary, v);
        v.iter().zip(&kv).map(|(a, b)| a * b).sum()
    }

    pub fn h1_bulk(&self, v: &[f64]) -> f64 {
        (self.inner_bulk(v, v) + self.dirichlet_bulk(v)).sqrt()
    }

    pub fn h1_boundary(&self, v: &[f64]) -> f64 {
        (self.inner_boundary(v, v) + self.dirichlet_boundary(v)).sqrt()
    }

    pub fn laplace_bulk(&self, v: &[f64]) -> BulkField {
        BulkField(spmv(&self.laplacian_bulk, v))
    }

    pub fn laplace_boundary(&self, v: &[f64]) -> BoundaryField {
        BoundaryField(spmv(&self.laplacian_boundary, v))
    }

    pub fn normal_derivative_of(&self, v: &[f64]) -> BoundaryField {
        BoundaryField(spmv(&self.normal_derivative, v))
    }

    /// `<Lap v, w> + <grad v, grad w> - <d_n v, w>_Gamma` with discrete pairings.
    pub fn green_residual(&self, v: &[f64], w: &[f64]) -> f64 {
        let lap = self.laplace_bulk(v);
        let kv = spmv(&self.stiffness_bulk, v);
        let grad: f64 = w.iter().zip(&kv).map(|(a, b)| a * b).sum();
        let dn = self.normal_derivative_of(v);
        let wg = self.trace_of(w);
        self.inner_bulk(&lap, w) + grad - self.inner_boundary(&dn, &wg)
    }

    /// Band matrix `M diag(c) + K`, the Neumann-type operator.
    pub fn neumann_matrix(&self, coeff: &[f64]) -> BandMatrix {
        let mut a = BandMatrix::zeros(self.n_bulk(), self.bandwidth);
        for (i, (m, c)) in self.bulk_weights.iter().zip(coeff).enumerate() {
            a.add(i, i, m * c);
        }
        for (r, row) in self.stiffness_bulk.outer_iterator().enumerate() {
            for (c, v) in row.iter() {
                a.add(r, c, *v);
            }
        }
        a
    }

    /// Band matrix `M diag(c) + K + P'(M_G diag(c_G) + K_G)P`, the operator
    /// of the dynamic boundary condition.
    pub fn coupled_matrix(&self, coeff: &[f64], coeff_gamma: &[f64]) -> BandMatrix {
        let mut a = self.neumann_matrix(coeff);
        for (s, &i) in self.trace.iter().enumerate() {
            a.add(i, i, self.boundary_weights[s] * coeff_gamma[s]);
        }
        for (r, row) in self.stiffness_boundary.outer_iterator().enumerate() {
            for (c, v) in row.iter() {
                a.add(self.trace[r], self.trace[c], *v);
            }
        }
        a
    }

    /// Lumped mass of the coupled system: `M + P'M_G P` on the diagonal.
    pub fn coupled_mass(&self) -> Vec<f64> {
        let mut m = self.bulk_weights.clone();
        self.add_lifted(&mut m, &self.boundary_weights);
        m
    }
}
