//! Double-well potentials and the mobility-type coupling `g`.
//!
//! The convex part is the logarithmic potential
//! `f(r) = c[(1+r)ln(1+r) + (1-r)ln(1-r)]`, the perturbation is linear in `r`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogPotential {
    pub c_hat: f64,
}

impl LogPotential {
    pub fn value(&self, r: f64) -> f64 {
        let xlogx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
        self.c_hat * (xlogx(1.0 + r) + xlogx(1.0 - r))
    }

    pub fn d1(&self, r: f64) -> f64 {
        self.c_hat * ((1.0 + r) / (1.0 - r)).ln()
    }

    pub fn d2(&self, r: f64) -> f64 {
        2.0 * self.c_hat / (1.0 - r * r)
    }

    pub fn d3(&self, r: f64) -> f64 {
        let s = 1.0 - r * r;
        4.0 * self.c_hat * r / (s * s)
    }
}

/// `pi(r) = slope * r`, the derivative of the smooth concave part `slope r^2 / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearPerturbation {
    pub slope: f64,
}

impl LinearPerturbation {
    pub fn primitive(&self, r: f64) -> f64 {
        0.5 * self.slope * r * r
    }

    pub fn value(&self, r: f64) -> f64 {
        self.slope * r
    }

    pub fn d1(&self, _r: f64) -> f64 {
        self.slope
    }

    pub fn lipschitz(&self) -> f64 {
        self.slope.abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coupling {
    /// `g(r) = 1 - r^2/2`: nonnegative and concave on `[-1, 1]`.
    QuadraticConcave,
    /// `g(r) = r`. Negative for `r < 0`, so nonnegativity of `g` is not guaranteed.
    IdentityClamped,
    /// `g(r) = c0 + c1 r + c2 r^2`.
    Polynomial { c0: f64, c1: f64, c2: f64 },
}

impl Coupling {
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            Coupling::QuadraticConcave => 1.0 - 0.5 * r * r,
            Coupling::IdentityClamped => r,
            Coupling::Polynomial { c0, c1, c2 } => c0 + c1 * r + c2 * r * r,
        }
    }

    pub fn d1(&self, r: f64) -> f64 {
        match *self {
            Coupling::QuadraticConcave => -r,
            Coupling::IdentityClamped => 1.0,
            Coupling::Polynomial { c1, c2, .. } => c1 + 2.0 * c2 * r,
        }
    }

    pub fn d2(&self, _r: f64) -> f64 {
        match *self {
            Coupling::QuadraticConcave => -1.0,
            Coupling::IdentityClamped => 0.0,
            Coupling::Polynomial { c2, .. } => 2.0 * c2,
        }
    }

    pub fn d3(&self, _r: f64) -> f64 {
        0.0
    }

    /// Minimum of `g` over `[-1, 1]`.
    pub fn min_on_interval(&self) -> f64 {
        let mut m = self.value(-1.0).min(self.value(1.0));
        if let Coupling::Polynomial { c1, c2, .. } = *self {
            if c2 != 0.0 {
                let r = -c1 / (2.0 * c2);
                if r.abs() <= 1.0 {
                    m = m.min(self.value(r));
                }
            }
        }
        m
    }

    pub fn is_concave(&self) -> bool {
        self.d2(0.0) <= 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSet {
    pub bulk: LogPotential,
    pub boundary: LogPotential,
    pub pi: LinearPerturbation,
    pub pi_gamma: LinearPerturbation,
    pub coupling: Coupling,
    /// Iterates must stay in `[-1 + eps, 1 - eps]`.
    pub eps_sep: f64,
}

impl Default for PotentialSet {
    fn default() -> Self {
        Self {
            bulk: LogPotential { c_hat: 1.0 },
            boundary: LogPotential { c_hat: 1.0 },
            pi: LinearPerturbation { slope: -3.0 },
            pi_gamma: LinearPerturbation { slope: -3.0 },
            coupling: Coupling::QuadraticConcave,
            eps_sep: 1e-6,
        }
    }
}

/// Bulk nonlinearities at every node.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BulkEval {
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub pi: Vec<f64>,
    pub pi1: Vec<f64>,
    pub g: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

/// Boundary nonlinearities at every ring node.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundaryEval {
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub pi: Vec<f64>,
    pub pi1: Vec<f64>,
}

impl PotentialSet {
    pub fn check_separation(&self, values: &[f64]) -> Result<()> {
        let lim = 1.0 - self.eps_sep;
        for (node, &value) in values.iter().enumerate() {
            if !(value.abs() <= lim) {
                return Err(Error::Separation {
                    node,
                    value,
                    eps: self.eps_sep,
                });
            }
        }
        Ok(())
    }

    pub fn eval_bulk(&self, rho: &[f64]) -> Result<BulkEval> {
        self.check_separation(rho)?;
        let n = rho.len();
        let mut e = BulkEval {
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            pi: Vec::with_capacity(n),
            pi1: Vec::with_capacity(n),
            g: Vec::with_capacity(n),
            g1: Vec::with_capacity(n),
            g2: Vec::with_capacity(n),
        };
        for &r in rho {
            e.f1.push(self.bulk.d1(r));
            e.f2.push(self.bulk.d2(r));
            e.pi.push(self.pi.value(r));
            e.pi1.push(self.pi.d1(r));
            e.g.push(self.coupling.value(r));
            e.g1.push(self.coupling.d1(r));
            e.g2.push(self.coupling.d2(r));
        }
        Ok(e)
    }

    pub fn eval_boundary(&self, rho_gamma: &[f64]) -> Result<BoundaryEval> {
        self.check_separation(rho_gamma)?;
        Ok(BoundaryEval {
            f1: rho_gamma.iter().map(|&r| self.boundary.d1(r)).collect(),
            f2: rho_gamma.iter().map(|&r| self.boundary.d2(r)).collect(),
            pi: rho_gamma.iter().map(|&r| self.pi_gamma.value(r)).collect(),
            pi1: rho_gamma.iter().map(|&r| self.pi_gamma.d1(r)).collect(),
        })
    }

    /// Coupling `g`, `g'`, `g''` without separation checks.
    pub fn coupling_at(&self, rho: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let c = &self.coupling;
        (
            rho.iter().map(|&r| c.value(r)).collect(),
            rho.iter().map(|&r| c.d1(r)).collect(),
            rho.iter().map(|&r| c.d2(r)).collect(),
        )
    }

    /// Bulk free-energy density `f + pi_hat` at one value.
    pub fn bulk_density(&self, r: f64) -> f64 {
        self.bulk.value(r) + self.pi.primitive(r)
    }

    pub fn boundary_density(&self, r: f64) -> f64 {
        self.boundary.value(r) + self.pi_gamma.primitive(r)
    }

    /// Domination of the bulk potential by the boundary one:
    /// `|f'(r)| <= delta |f_G'(r)| + C` with `delta = c / c_G` and `C = 0`.
    pub fn domination(&self) -> (f64, f64) {
        (self.bulk.c_hat / self.boundary.c_hat, 0.0)
    }
}
