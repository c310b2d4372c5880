//! Linear solvers for the Newton iteration `(I − γJ) δ = r`.

use nalgebra::{DMatrix, DVector};

/// Restarted GMRES on a diagonally scaled system.
///
/// Solves `A x = b` where `A` is only available as an operator, with the
/// right preconditioner `M⁻¹`. Norms are taken as root-mean-square of
/// `w ⊙ r`, so `tol` is relative to the Newton error weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gmres {
    pub restart: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for Gmres {
    fn default() -> Self {
        Self {
            restart: 40,
            max_iters: 200,
            tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn wrms(v: &[f64], w: &[f64]) -> f64 {
    let s: f64 = v.iter().zip(w).map(|(a, b)| (a * b) * (a * b)).sum();
    (s / v.len().max(1) as f64).sqrt()
}

impl Gmres {
    /// `apply(v, out)` computes `out = A v`; `precond(v)` overwrites `v`
    /// with `M⁻¹ v`. On return `x` holds the solution estimate.
    pub fn solve<A, P>(&self, mut apply: A, mut precond: P, b: &[f64], w: &[f64], x: &mut [f64]) -> GmresOutcome
    where
        A: FnMut(&[f64], &mut [f64]) -> bool,
        P: FnMut(&mut [f64]),
    {
        let n = b.len();
        let m = self.restart.max(1);
        x.iter_mut().for_each(|v| *v = 0.0);
        let scale = (n as f64).sqrt();
        let bnorm = wrms(b, w);
        if bnorm <= self.tol {
            return GmresOutcome { iterations: 0, residual: bnorm, converged: true };
        }
        // Work in the scaled Euclidean space: û = w ⊙ u / √n.
        let mut r: Vec<f64> = b.to_vec();
        let mut iterations = 0;
        let mut residual = bnorm;
        let mut av = vec![0.0; n];
        let mut z = vec![0.0; n];
        while iterations < self.max_iters {
            let beta = wrms(&r, w);
            residual = beta;
            if beta <= self.tol {
                return GmresOutcome { iterations, residual, converged: true };
            }
            let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
            basis.push(r.iter().zip(w).map(|(r, w)| r * w / (scale * beta)).collect());
            let mut hess = vec![vec![0.0; m]; m + 1];
            let mut cs = vec![0.0; m];
            let mut sn = vec![0.0; m];
            let mut g = vec![0.0; m + 1];
            g[0] = beta;
            let mut used = 0;
            for j in 0..m {
                // Unscale, precondition, apply.
                for i in 0..n {
                    z[i] = basis[j][i] * scale / w[i];
                }
                precond(&mut z);
                if !apply(&z, &mut av) {
                    return GmresOutcome { iterations, residual, converged: false };
                }
                let mut v: Vec<f64> = av.iter().zip(w).map(|(a, w)| a * w / scale).collect();
                for (i, q) in basis.iter().enumerate() {
                    let hij: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                    hess[i][j] = hij;
                    v.iter_mut().zip(q).for_each(|(a, b)| *a -= hij * b);
                }
                let vn = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                hess[j + 1][j] = vn;
                for i in 0..j {
                    let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                    hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                    hess[i][j] = t;
                }
                let d = hess[j][j].hypot(hess[j + 1][j]);
                if d == 0.0 {
                    cs[j] = 1.0;
                    sn[j] = 0.0;
                } else {
                    cs[j] = hess[j][j] / d;
                    sn[j] = hess[j + 1][j] / d;
                }
                hess[j][j] = d;
                hess[j + 1][j] = 0.0;
                g[j + 1] = -sn[j] * g[j];
                g[j] *= cs[j];
                iterations += 1;
                used = j + 1;
                residual = g[j + 1].abs();
                if residual <= self.tol || vn == 0.0 || iterations >= self.max_iters {
                    break;
                }
                v.iter_mut().for_each(|a| *a /= vn);
                basis.push(v);
            }
            // Back substitution.
            let mut yk = vec![0.0; used];
            for i in (0..used).rev() {
                let mut s = g[i];
                for l in i + 1..used {
                    s -= hess[i][l] * yk[l];
                }
                yk[i] = s / hess[i][i];
            }
            z.iter_mut().for_each(|v| *v = 0.0);
            for (l, q) in basis.iter().take(used).enumerate() {
                for i in 0..n {
                    z[i] += yk[l] * q[i] * scale / w[i];
                }
            }
            precond(&mut z);
            x.iter_mut().zip(&z).for_each(|(x, z)| *x += z);
            if residual <= self.tol {
                return GmresOutcome { iterations, residual, converged: true };
            }
            // Explicit residual for the restart.
            if !apply(x, &mut av) {
                return GmresOutcome { iterations, residual, converged: false };
            }
            for i in 0..n {
                r[i] = b[i] - av[i];
            }
        }
        GmresOutcome { iterations, residual, converged: residual <= self.tol }
    }
}

/// LU factorization of `I − γJ` for a dense Jacobian.
#[derive(Debug, Clone)]
pub struct DenseIterationMatrix {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DenseIterationMatrix {
    pub fn new(jac: &DMatrix<f64>, gamma: f64) -> Option<Self> {
        let n = jac.nrows();
        let m = DMatrix::<f64>::identity(n, n) - jac * gamma;
        let lu = m.lu();
        if !lu.is_invertible() {
            return None;
        }
        Some(Self { lu })
    }

    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let b = DVector::from_column_slice(rhs);
        self.lu.solve(&b).map(|x| x.as_slice().to_vec())
    }
}
