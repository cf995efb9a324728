//! Banded Cholesky factorization and preconditioned conjugate gradients.

use crate::error::{Error, Result};

/// Symmetric matrix stored by its lower band. Row `i` keeps columns
/// `i - bw ..= i`, the diagonal last.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> BandedSpd {
        BandedSpd {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn pos(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `val` to entry `(i, j)` (and implicitly `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, val: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        let p = self.pos(i, j);
        self.data[p] += val;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            return 0.0;
        }
        self.data[self.pos(i, j)]
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let off = self.bw - (i - lo);
            let mut acc = row[self.bw] * x[i];
            for (k, j) in (lo..i).enumerate() {
                let a = row[off + k];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc;
        }
    }

    /// In-place Cholesky factorization `A = L L^T`.
    pub fn factor(mut self) -> Result<BandCholesky> {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let k0 = lo.max(j.saturating_sub(self.bw));
                let len = j - k0;
                let ri = i * w + (k0 + self.bw - i);
                let rj = j * w + (k0 + self.bw - j);
                let mut s = self.data[i * w + (j + self.bw - i)];
                for t in 0..len {
                    s -= self.data[ri + t] * self.data[rj + t];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::WellPosedness(format!(
                            "velocity operator is not positive definite (pivot {s:.3e} at row {i})"
                        )));
                    }
                    self.data[i * w + self.bw] = s.sqrt();
                } else {
                    self.data[i * w + (j + self.bw - i)] = s / self.data[j * w + self.bw];
                }
            }
        }
        Ok(BandCholesky { l: self })
    }
}

/// Factor of a [`BandedSpd`] matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    l: BandedSpd,
}

impl BandCholesky {
    pub fn n(&self) -> usize {
        self.l.n
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let bw = self.l.bw;
        let w = bw + 1;
        let d = &self.l.data;
        for i in 0..self.l.n {
            let lo = i.saturating_sub(bw);
            let row = &d[i * w + (lo + bw - i)..i * w + bw];
            let s: f64 = row.iter().zip(&b[lo..i]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - s) / d[i * w + bw];
        }
        for i in (0..self.l.n).rev() {
            let xi = b[i] / d[i * w + bw];
            b[i] = xi;
            let lo = i.saturating_sub(bw);
            let row = &d[i * w + (lo + bw - i)..i * w + bw];
            for (a, y) in row.iter().zip(&mut b[lo..i]) {
                *y -= a * xi;
            }
        }
    }
}

/// Symmetric positive (semi-)definite operator for [`pcg`].
pub trait SpdOperator {
    fn apply(&mut self, x: &[f64], y: &mut [f64]);

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }

    /// Removes null-space components from a residual.
    fn project(&self, _r: &mut [f64]) {}

    /// Called after `x += alpha * d`, `d` being the vector last passed to `apply`.
    fn advance(&mut self, _alpha: f64) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients starting from `x` with initial
/// residual `r = b - A x` supplied by the caller. `measure` maps a residual
/// to the scalar compared against `tol`.
pub fn pcg<O: SpdOperator>(
    op: &mut O,
    r: &mut [f64],
    x: &mut [f64],
    max_iters: usize,
    tol: f64,
    mut measure: impl FnMut(&O, &[f64]) -> f64,
) -> CgOutcome {
    let n = r.len();
    op.project(r);
    let mut res = measure(op, r);
    if res <= tol {
        return CgOutcome {
            iterations: 0,
            residual: res,
            converged: true,
        };
    }
    let mut z = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut q = vec![0.0; n];
    op.precondition(r, &mut z);
    let mut rz = dot(r, &z);
    d.copy_from_slice(&z);
    for it in 1..=max_iters {
        op.apply(&d, &mut q);
        let dq = dot(&d, &q);
        if !(dq > 0.0) || !dq.is_finite() {
            return CgOutcome {
                iterations: it,
                residual: res,
                converged: false,
            };
        }
        let alpha = rz / dq;
        for k in 0..n {
            x[k] += alpha * d[k];
            r[k] -= alpha * q[k];
        }
        op.advance(alpha);
        op.project(r);
        res = measure(op, r);
        if res <= tol {
            return CgOutcome {
                iterations: it,
                residual: res,
                converged: true,
            };
        }
        op.precondition(r, &mut z);
        let rz_new = dot(r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            d[k] = z[k] + beta * d[k];
        }
    }
    CgOutcome {
        iterations: max_iters,
        residual: res,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn laplacian_1d(n: usize, shift: f64) -> BandedSpd {
        let mut a = BandedSpd::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0 + shift);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        a
    }

    fn random_band(n: usize, bw: usize, seed: u64) -> (BandedSpd, DMatrix<f64>) {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut a = BandedSpd::zeros(n, bw);
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                let v = next();
                a.add(i, j, v);
                m[(i, j)] += v;
                m[(j, i)] += v;
            }
        }
        for i in 0..n {
            let v = 2.0 * bw as f64 + 1.0;
            a.add(i, i, v);
            m[(i, i)] += v;
        }
        (a, m)
    }

    #[test]
    fn cholesky_matches_dense_solve() {
        let (a, m) = random_band(40, 5, 7);
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let expected = m.lu().solve(&DVector::from_vec(b.clone())).unwrap();
        let f = a.factor().unwrap();
        let mut x = b;
        f.solve(&mut x);
        for i in 0..40 {
            assert!((x[i] - expected[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn matvec_matches_dense() {
        let (a, m) = random_band(25, 3, 11);
        let x: Vec<f64> = (0..25).map(|i| i as f64 - 12.0).collect();
        let mut y = vec![0.0; 25];
        a.matvec(&x, &mut y);
        let e = &m * DVector::from_vec(x);
        for i in 0..25 {
            assert!((y[i] - e[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut a = BandedSpd::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, -1.0);
        a.add(2, 2, 1.0);
        assert!(matches!(a.factor(), Err(Error::WellPosedness(_))));
    }

    struct Dense(BandedSpd);

    impl SpdOperator for Dense {
        fn apply(&mut self, x: &[f64], y: &mut [f64]) {
            self.0.matvec(x, y);
        }
    }

    #[test]
    fn cg_solves_poisson() {
        let n = 50;
        let a = laplacian_1d(n, 0.0);
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let mut r = b.clone();
        let mut op = Dense(a.clone());
        let out = pcg(&mut op, &mut r, &mut x, 200, 1e-12, |_, r| dot(r, r).sqrt());
        assert!(out.converged);
        assert!(out.iterations <= n);
        // exact discrete solution of -x'' = 1 with zero ends: x_i = (i+1)(n-i)/2
        for i in 0..n {
            let e = (i + 1) as f64 * (n - i) as f64 / 2.0;
            assert!((x[i] - e).abs() < 1e-8 * e.max(1.0));
        }
    }

    #[test]
    fn cg_reports_nonconvergence() {
        let a = laplacian_1d(200, 0.0);
        let mut x = vec![0.0; 200];
        let mut r = vec![1.0; 200];
        let out = pcg(&mut Dense(a), &mut r, &mut x, 3, 1e-14, |_, r| dot(r, r).sqrt());
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
    }
}
