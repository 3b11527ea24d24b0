//! Convex beamformer update inside the reweighted sum-rate loop:
//!
//! ```text
//! min  sum_k w_k^H A w_k - 2 Re(b_k^H w_k)
//! s.t. sum_k ||w_rk||^2 <= P_r          (per F-AP)
//!      sum_r beta_rk ||w_rk||^2 <= 1    (per user)
//! ```
//!
//! solved through its dual by projected Newton ascent over the multipliers
//! `(lambda_r, nu_k)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::topology::AntennaLayout;

pub struct Qcqp<'a> {
    pub layout: &'a AntennaLayout,
    pub users: usize,
    /// Hermitian positive semidefinite, `M x M`.
    pub a: &'a DMatrix<Complex64>,
    /// Linear terms, user-major `K x M`.
    pub b: &'a [Complex64],
    pub p_max: &'a [f64],
    /// Reweighting factors indexed `r * K + k`.
    pub beta: &'a [f64],
}

#[derive(Debug, Clone, Copy)]
pub struct QcqpOptions {
    pub max_iter: usize,
    /// Relative tolerance on the projected dual gradient.
    pub tol: f64,
}

impl Default for QcqpOptions {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-7 }
    }
}

#[derive(Debug, Clone)]
pub struct QcqpSolution {
    pub w: Vec<Complex64>,
    /// `lambda_1..lambda_R` followed by `nu_1..nu_K`.
    pub dual: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct DualPoint {
    value: f64,
    grad: Vec<f64>,
    w: Vec<Complex64>,
    factors: Vec<Cholesky<Complex64, Dyn>>,
}

impl Qcqp<'_> {
    fn faps(&self) -> usize {
        self.layout.num_faps()
    }

    fn m(&self) -> usize {
        self.layout.total()
    }

    fn b_k(&self, k: usize) -> &[Complex64] {
        &self.b[k * self.m()..(k + 1) * self.m()]
    }

    /// Objective value of the primal quadratic.
    pub fn value(&self, w: &[Complex64]) -> f64 {
        let m = self.m();
        (0..self.users)
            .map(|k| {
                let wk = DVector::from_column_slice(&w[k * m..(k + 1) * m]);
                let bk = DVector::from_column_slice(self.b_k(k));
                wk.dotc(&(self.a * &wk)).re - 2.0 * bk.dotc(&wk).re
            })
            .sum()
    }

    fn factor(&self, k: usize, dual: &[f64]) -> Option<Cholesky<Complex64, Dyn>> {
        let (m, faps) = (self.m(), self.faps());
        let scale = (0..m).map(|i| self.a[(i, i)].re).sum::<f64>() / m as f64;
        let mut ridge = 1e-13 * scale.max(1e-300);
        for _ in 0..12 {
            let mut x = self.a.clone();
            for r in 0..faps {
                let d = dual[r] + dual[faps + k] * self.beta[r * self.users + k];
                for i in self.layout.range(r) {
                    x[(i, i)] += Complex64::new(d + ridge, 0.0);
                }
            }
            if let Some(c) = x.cholesky() {
                return Some(c);
            }
            ridge *= 100.0;
        }
        None
    }

    fn evaluate(&self, dual: &[f64]) -> Option<DualPoint> {
        let (m, faps, users) = (self.m(), self.faps(), self.users);
        let mut w = vec![Complex64::new(0.0, 0.0); m * users];
        let mut factors = Vec::with_capacity(users);
        let mut value = 0.0;
        let mut grad = vec![0.0; faps + users];
        for k in 0..users {
            let chol = self.factor(k, dual)?;
            let bk = DVector::from_column_slice(self.b_k(k));
            let wk = chol.solve(&bk);
            value -= bk.dotc(&wk).re;
            for r in 0..faps {
                let p: f64 = self.layout.range(r).map(|i| wk[i].norm_sqr()).sum();
                grad[r] += p;
                grad[faps + k] += self.beta[r * users + k] * p;
            }
            w[k * m..(k + 1) * m].copy_from_slice(wk.as_slice());
            factors.push(chol);
        }
        for r in 0..faps {
            value -= dual[r] * self.p_max[r];
            grad[r] -= self.p_max[r];
        }
        for k in 0..users {
            value -= dual[faps + k];
            grad[faps + k] -= 1.0;
        }
        if !value.is_finite() {
            return None;
        }
        Some(DualPoint {
            value,
            grad,
            w,
            factors,
        })
    }

    /// Hessian of the dual function (negative semidefinite).
    fn hessian(&self, pt: &DualPoint) -> DMatrix<f64> {
        let (m, faps, users) = (self.m(), self.faps(), self.users);
        let n = faps + users;
        let mut h = DMatrix::<f64>::zeros(n, n);
        for k in 0..users {
            let wk = &pt.w[k * m..(k + 1) * m];
            // z_r = E_r w_k and y_r = X_k^{-1} z_r.
            let z: Vec<DVector<Complex64>> = (0..faps)
                .map(|r| {
                    let mut v = DVector::zeros(m);
                    for i in self.layout.range(r) {
                        v[i] = wk[i];
                    }
                    v
                })
                .collect();
            let y: Vec<DVector<Complex64>> = z.iter().map(|v| pt.factors[k].solve(v)).collect();
            let mut s = DMatrix::<f64>::zeros(faps, faps);
            for r in 0..faps {
                for q in 0..faps {
                    s[(r, q)] = z[r].dotc(&y[q]).re;
                }
            }
            let beta = |r: usize| self.beta[r * users + k];
            for r in 0..faps {
                let mut cross = 0.0;
                for q in 0..faps {
                    h[(r, q)] -= 2.0 * s[(r, q)];
                    cross += beta(q) * s[(r, q)];
                }
                h[(r, faps + k)] -= 2.0 * cross;
                h[(faps + k, r)] -= 2.0 * cross;
            }
            let mut diag = 0.0;
            for r in 0..faps {
                for q in 0..faps {
                    diag += beta(r) * beta(q) * s[(r, q)];
                }
            }
            h[(faps + k, faps + k)] -= 2.0 * diag;
        }
        h
    }

    fn scale(&self, i: usize) -> f64 {
        if i < self.faps() {
            self.p_max[i]
        } else {
            1.0
        }
    }

    fn converged(&self, dual: &[f64], grad: &[f64], tol: f64) -> bool {
        dual.iter().zip(grad).enumerate().all(|(i, (&d, &g))| {
            let t = tol * self.scale(i);
            if d > 0.0 {
                g.abs() <= t
            } else {
                g <= t
            }
        })
    }

    /// Starting multipliers that roughly meet each F-AP budget.
    pub fn default_dual(&self) -> Vec<f64> {
        let (faps, users) = (self.faps(), self.users);
        let mut dual = vec![0.0; faps + users];
        for r in 0..faps {
            let bb: f64 = (0..users)
                .map(|k| self.layout.range(r).map(|i| self.b_k(k)[i].norm_sqr()).sum::<f64>())
                .sum();
            dual[r] = (bb / self.p_max[r]).sqrt();
        }
        dual
    }

    pub fn solve(&self, warm: Option<&[f64]>, opts: &QcqpOptions) -> Option<QcqpSolution> {
        let mut dual = match warm {
            Some(d) if d.len() == self.faps() + self.users => d.to_vec(),
            _ => self.default_dual(),
        };
        let mut pt = self.evaluate(&dual)?;
        for it in 0..opts.max_iter {
            if self.converged(&dual, &pt.grad, opts.tol) {
                return Some(QcqpSolution {
                    w: pt.w,
                    dual,
                    iterations: it,
                    converged: true,
                });
            }
            let free: Vec<usize> = (0..dual.len()).filter(|&i| dual[i] > 0.0 || pt.grad[i] > 0.0).collect();
            let h = self.hessian(&pt);
            let nf = free.len();
            let mut neg = DMatrix::<f64>::zeros(nf, nf);
            let mut g = DVector::<f64>::zeros(nf);
            let mut dmax: f64 = 0.0;
            for (a, &i) in free.iter().enumerate() {
                g[a] = pt.grad[i];
                for (b, &j) in free.iter().enumerate() {
                    neg[(a, b)] = -h[(i, j)];
                }
                dmax = dmax.max(neg[(a, a)]);
            }
            let tau = 1e-10 * dmax.max(1e-300);
            for a in 0..nf {
                neg[(a, a)] += tau;
            }
            let step = match neg.cholesky() {
                Some(c) => c.solve(&g),
                None => g.clone() / dmax.max(1e-300),
            };
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let mut trial = dual.clone();
                for (a, &i) in free.iter().enumerate() {
                    trial[i] = (dual[i] + t * step[a]).max(0.0);
                }
                if let Some(next) = self.evaluate(&trial) {
                    let moved: f64 = trial.iter().zip(&dual).zip(&pt.grad).map(|((n, o), g)| (n - o) * g).sum();
                    if next.value >= pt.value + 1e-4 * moved {
                        accepted = Some((trial, next));
                        break;
                    }
                }
                t *= 0.5;
            }
            match accepted {
                Some((d, next)) => {
                    dual = d;
                    pt = next;
                }
                None => {
                    return Some(QcqpSolution {
                        w: pt.w,
                        dual,
                        iterations: it,
                        converged: false,
                    })
                }
            }
        }
        let converged = self.converged(&dual, &pt.grad, opts.tol);
        Some(QcqpSolution {
            w: pt.w,
            dual,
            iterations: opts.max_iter,
            converged,
        })
    }
}
