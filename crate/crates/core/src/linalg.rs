//! Matrix-free restarted GMRES for complex systems, and a small dense
//! direct solver used as an oracle for the integral-equation discretization.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::field::C64;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: operator {op}, vector {vec}")]
    DimensionMismatch { op: usize, vec: usize },
    #[error("GMRES did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("singular matrix in direct solve")]
    Singular,
    #[error("non-finite value encountered during iteration")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresConfig {
    pub restart: usize,
    pub max_iters: usize,
    /// Relative tolerance on `|b - A x| / |b|`.
    pub tol: f64,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self { restart: 30, max_iters: 500, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    /// Relative residual of the returned iterate, recomputed from scratch.
    pub residual: f64,
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian inner product `sum conj(a) b`.
fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Solves `A x = b` by restarted GMRES with optional right preconditioning
/// (`A M^-1 y = b`, `x = M^-1 y`), starting from the incoming `x`.
///
/// `apply(v, out)` computes `out = A v`; `precond(v, out)` computes
/// `out = M^-1 v`.
pub fn gmres<A, P>(
    mut apply: A,
    mut precond: Option<P>,
    b: &[C64],
    x: &mut [C64],
    cfg: &GmresConfig,
) -> Result<GmresOutcome, LinalgError>
where
    A: FnMut(&[C64], &mut [C64]),
    P: FnMut(&[C64], &mut [C64]),
{
    let n = b.len();
    if x.len() != n {
        return Err(LinalgError::DimensionMismatch { op: n, vec: x.len() });
    }
    let zero = C64::new(0.0, 0.0);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = zero);
        return Ok(GmresOutcome { iterations: 0, residual: 0.0 });
    }
    let m = cfg.restart.max(1);
    let mut r = vec![zero; n];
    let mut w = vec![zero; n];
    let mut z = vec![zero; n];
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
    let mut iterations = 0;

    let residual = |apply: &mut A, x: &[C64], r: &mut [C64], w: &mut [C64]| {
        apply(x, w);
        for i in 0..n {
            r[i] = b[i] - w[i];
        }
        norm(r)
    };

    let mut beta = residual(&mut apply, x, &mut r, &mut w);
    loop {
        if !beta.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        if beta <= cfg.tol * bnorm {
            return Ok(GmresOutcome { iterations, residual: beta / bnorm });
        }
        if iterations >= cfg.max_iters {
            return Err(LinalgError::NotConverged { iterations, residual: beta / bnorm });
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![zero; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![zero; m];
        let mut g = vec![zero; m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut used = 0;
        for j in 0..m {
            if iterations >= cfg.max_iters {
                break;
            }
            iterations += 1;
            used = j + 1;
            match precond.as_mut() {
                Some(p) => {
                    p(&basis[j], &mut z);
                    apply(&z, &mut w);
                }
                None => apply(&basis[j], &mut w),
            }
            // modified Gram-Schmidt
            for (i, v) in basis.iter().enumerate() {
                let hij = dotc(v, &w);
                h[i][j] = hij;
                for t in 0..n {
                    w[t] -= hij * v[t];
                }
            }
            let wn = norm(&w);
            h[j + 1][j] = C64::new(wn, 0.0);
            for i in 0..j {
                let (a, bb) = (h[i][j], h[i + 1][j]);
                h[i][j] = cs[i] * a + sn[i] * bb;
                h[i + 1][j] = -sn[i].conj() * a + cs[i] * bb;
            }
            let (a, bb) = (h[j][j], h[j + 1][j]);
            let rr = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if rr == 0.0 {
                break;
            }
            if a.norm() == 0.0 {
                cs[j] = 0.0;
                sn[j] = bb.conj() / bb.norm();
            } else {
                cs[j] = a.norm() / rr;
                sn[j] = (a / a.norm()) * bb.conj() / rr;
            }
            h[j][j] = cs[j] * a + sn[j] * bb;
            h[j + 1][j] = zero;
            let gj = g[j];
            g[j] = cs[j] * gj;
            g[j + 1] = -sn[j].conj() * gj;
            if !(g[j + 1].norm().is_finite()) {
                return Err(LinalgError::NonFinite);
            }
            if g[j + 1].norm() <= cfg.tol * bnorm || wn <= 1e-14 * rr {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![zero; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for t in i + 1..used {
                s -= h[i][t] * y[t];
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![zero; n];
        for (yi, v) in y.iter().zip(&basis) {
            for t in 0..n {
                update[t] += yi * v[t];
            }
        }
        match precond.as_mut() {
            Some(p) => {
                p(&update, &mut z);
                for t in 0..n {
                    x[t] += z[t];
                }
            }
            None => {
                for t in 0..n {
                    x[t] += update[t];
                }
            }
        }
        beta = residual(&mut apply, x, &mut r, &mut w);
    }
}

/// Dense complex matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<C64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![C64::new(0.0, 0.0); n * n] }
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.data[i * self.n + j] * x[j]).sum()).collect()
    }

    /// Direct solve by LU with partial pivoting.
    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::DimensionMismatch { op: self.n, vec: b.len() });
        }
        let a = DMatrix::from_row_slice(self.n, self.n, &self.data);
        let rhs = DVector::from_column_slice(b);
        let sol = a.lu().solve(&rhs).ok_or(LinalgError::Singular)?;
        Ok(sol.iter().copied().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type NoPrecond = fn(&[C64], &mut [C64]);

    fn random_system(n: usize, seed: u64) -> (DenseMatrix, Vec<C64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                *a.at_mut(i, j) = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 0.3;
            }
            *a.at_mut(i, i) += C64::new(2.0, 0.5);
        }
        let b = (0..n).map(|_| C64::new(rng.random(), rng.random())).collect();
        (a, b)
    }

    #[test]
    fn gmres_matches_direct_solve() {
        let (a, b) = random_system(40, 7);
        let direct = a.solve(&b).unwrap();
        let mut x = vec![C64::new(0.0, 0.0); 40];
        let cfg = GmresConfig { restart: 8, max_iters: 400, tol: 1e-12 };
        let out = gmres(|v, o: &mut [C64]| o.copy_from_slice(&a.mul_vec(v)), None::<NoPrecond>, &b, &mut x, &cfg).unwrap();
        assert!(out.residual <= 1e-12);
        let err: f64 = x.iter().zip(&direct).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn right_preconditioning_with_exact_inverse_converges_at_once() {
        let n = 12;
        let diag: Vec<C64> = (0..n).map(|i| C64::new(1.0 + i as f64, 0.3)).collect();
        let b: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0)).collect();
        let mut x = vec![C64::new(0.0, 0.0); n];
        let out = gmres(
            |v: &[C64], o: &mut [C64]| {
                for i in 0..n {
                    o[i] = diag[i] * v[i];
                }
            },
            Some(|v: &[C64], o: &mut [C64]| {
                for i in 0..n {
                    o[i] = v[i] / diag[i];
                }
            }),
            &b,
            &mut x,
            &GmresConfig { tol: 1e-13, ..Default::default() },
        )
        .unwrap();
        assert_eq!(out.iterations, 1);
        for i in 0..n {
            assert!((x[i] * diag[i] - b[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut x = vec![C64::new(1.0, 1.0); 3];
        let out = gmres(|v: &[C64], o: &mut [C64]| o.copy_from_slice(v), None::<NoPrecond>, &[C64::new(0.0, 0.0); 3], &mut x, &GmresConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(x.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn reports_non_convergence() {
        let (a, b) = random_system(30, 9);
        let mut x = vec![C64::new(0.0, 0.0); 30];
        let cfg = GmresConfig { restart: 2, max_iters: 3, tol: 1e-14 };
        let err = gmres(|v, o: &mut [C64]| o.copy_from_slice(&a.mul_vec(v)), None::<NoPrecond>, &b, &mut x, &cfg);
        assert!(matches!(err, Err(LinalgError::NotConverged { iterations: 3, .. })));
    }

    #[test]
    fn singular_dense_rejected() {
        let a = DenseMatrix::zeros(3);
        assert!(matches!(a.solve(&[C64::new(1.0, 0.0); 3]), Err(LinalgError::Singular)));
    }
}
