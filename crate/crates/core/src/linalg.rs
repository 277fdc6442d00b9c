//! Banded LU with partial pivoting.
//!
//! With natural node ordering the bulk operators have half-bandwidth 1 in 1D
//! and `n` in 2D, so a band solver is exact and cheap at the sizes used here.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    /// Zero matrix of order `n` whose nonzeros satisfy `|r - c| <= bw`.
    pub fn zeros(n: usize, bw: usize) -> Self {
        // Row windows reserve room for the fill produced by row swaps.
        let width = 3 * bw + 1;
        Self {
            n,
            bw,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.width + (c + self.bw - r)
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            r.abs_diff(c) <= self.bw,
            "entry ({r},{c}) outside bandwidth {}",
            self.bw
        );
        let i = self.idx(r, c);
        self.data[i] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if r.abs_diff(c) > self.bw {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (r, yr) in y.iter_mut().enumerate() {
            let lo = r.saturating_sub(self.bw);
            let hi = (r + self.bw).min(self.n - 1);
            let mut s = 0.0;
            for (c, xc) in x.iter().enumerate().take(hi + 1).skip(lo) {
                s += self.data[self.idx(r, c)] * xc;
            }
            *yr = s;
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn factor(&self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.bw;
        let reach = 2 * kl;
        let mut a = self.data.clone();
        let w = self.width;
        let at = |r: usize, c: usize| r * w + (c + kl - r);
        let mut piv = vec![0usize; n];
        let mut mult = vec![0.0; n * kl.max(1)];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a[at(k, k)].abs();
            for r in k + 1..=last {
                let v = a[at(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            piv[k] = p;
            let cmax = (k + reach).min(n - 1);
            if p != k {
                for c in k..=cmax {
                    a.swap(at(k, c), at(p, c));
                }
            }
            let pivot = a[at(k, k)];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::LinearSolve {
                    reason: format!("zero or non-finite pivot in column {k}"),
                    residual: f64::NAN,
                });
            }
            for r in k + 1..=last {
                let m = a[at(r, k)] / pivot;
                mult[k * kl + (r - k - 1)] = m;
                a[at(r, k)] = 0.0;
                if m != 0.0 {
                    for c in k + 1..=cmax {
                        a[at(r, c)] -= m * a[at(k, c)];
                    }
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            width: w,
            upper: a,
            mult,
            piv,
        })
    }

    /// Factor, solve and check the residual against `rel_tol`.
    pub fn solve(&self, rhs: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
        let lu = self.factor()?;
        let x = lu.solve(rhs);
        let ax = self.mul_vec(&x);
        let res = ax
            .iter()
            .zip(rhs)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let xmax = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let bmax = rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let scale = bmax + self.max_abs() * xmax;
        if !res.is_finite() || res > rel_tol * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::LinearSolve {
                reason: "residual above tolerance".into(),
                residual: res,
            });
        }
        Ok(x)
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    width: usize,
    upper: Vec<f64>,
    mult: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let kl = self.kl;
        let w = self.width;
        let at = |r: usize, c: usize| r * w + (c + kl - r);
        let mut b = rhs.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let last = (k + kl).min(n - 1);
            for r in k + 1..=last {
                b[r] -= self.mult[k * kl + (r - k - 1)] * b[k];
            }
        }
        for k in (0..n).rev() {
            let cmax = (k + 2 * kl).min(n - 1);
            let mut s = b[k];
            for c in k + 1..=cmax {
                s -= self.upper[at(k, c)] * b[c];
            }
            b[k] = s / self.upper[at(k, k)];
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))
                .unwrap();
            m.swap(k, p);
            x.swap(k, p);
            for r in k + 1..n {
                let f = m[r][k] / m[k][k];
                for c in k..n {
                    m[r][c] -= f * m[k][c];
                }
                x[r] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for c in k + 1..n {
                s -= m[k][c] * x[c];
            }
            x[k] = s / m[k][k];
        }
        x
    }

    #[test]
    fn matches_dense_elimination_on_indefinite_band() {
        let n = 9;
        let bw = 2;
        let mut band = BandMatrix::zeros(n, bw);
        let mut dense = vec![vec![0.0; n]; n];
        for r in 0..n {
            for c in r.saturating_sub(bw)..=(r + bw).min(n - 1) {
                let v = ((r * 7 + c * 3) % 11) as f64 - 5.0 + if r == c { 0.5 } else { 0.0 };
                band.add(r, c, v);
                dense[r][c] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = band.solve(&b, 1e-10).unwrap();
        let xd = dense_solve(&dense, &b);
        for (u, v) in x.iter().zip(&xd) {
            assert!((u - v).abs() < 1e-9 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut band = BandMatrix::zeros(3, 1);
        band.add(0, 0, 1.0);
        band.add(0, 1, 1.0);
        band.add(1, 0, 1.0);
        band.add(1, 1, 1.0);
        band.add(2, 2, 1.0);
        assert!(band.solve(&[1.0, 2.0, 3.0], 1e-10).is_err());
    }

    #[test]
    fn tridiagonal_without_fill() {
        let n = 5;
        let mut band = BandMatrix::zeros(n, 1);
        for i in 0..n {
            band.add(i, i, 2.0);
            if i + 1 < n {
                band.add(i, i + 1, -1.0);
                band.add(i + 1, i, -1.0);
            }
        }
        let x = band.solve(&[1.0; 5], 1e-12).unwrap();
        // continuous analogue: x_i = i(n+1-i)/2 with i from 1
        for (i, xi) in x.iter().enumerate() {
            let j = (i + 1) as f64;
            assert!((xi - j * (6.0 - j) / 2.0).abs() < 1e-12);
        }
    }
}
