//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop once `||grad||_inf <= tol`.
    pub tol: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 500,
            tol: 1e-6,
            armijo: 1e-4,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub status: LbfgsStatus,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `f`, where `f(x, grad)` returns the value and writes the
/// gradient. Accepted steps never increase the value.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut value = f(&x, &mut g);
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut dir = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory];

    for iter in 0..opts.max_iter {
        let gi = inf_norm(&g);
        if gi <= opts.tol {
            return LbfgsResult {
                x,
                value,
                grad_inf: gi,
                iterations: iter,
                status: LbfgsStatus::Converged,
            };
        }

        // Two-loop recursion.
        for (d, gv) in dir.iter_mut().zip(&g) {
            *d = -gv;
        }
        for (i, (s, y, rho)) in pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alpha[i] = a;
            dir.iter_mut().zip(y).for_each(|(d, yv)| *d -= a * yv);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        } else {
            let scale = 1.0 / gi.max(1e-300);
            dir.iter_mut().for_each(|d| *d *= scale.min(1.0));
        }
        for (i, (s, y, rho)) in pairs.iter().enumerate() {
            let b = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(d, sv)| *d += (alpha[i] - b) * sv);
        }

        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            pairs.clear();
            for (d, gv) in dir.iter_mut().zip(&g) {
                *d = -gv / gi;
            }
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..opts.max_backtracks {
            for ((xn, xv), d) in x_new.iter_mut().zip(&x).zip(&dir) {
                *xn = xv + step * d;
            }
            let v = f(&x_new, &mut g_new);
            if v.is_finite() && v <= value + opts.armijo * step * slope {
                accepted = true;
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
                    if pairs.len() == opts.memory {
                        pairs.pop_front();
                    }
                    pairs.push_back((s, y, 1.0 / sy));
                }
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                value = v;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return LbfgsResult {
                grad_inf: inf_norm(&g),
                x,
                value,
                iterations: iter,
                status: LbfgsStatus::LineSearchFailed,
            };
        }
    }
    LbfgsResult {
        grad_inf: inf_norm(&g),
        x,
        value,
        iterations: opts.max_iter,
        status: LbfgsStatus::MaxIterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let r = minimize(f, vec![-1.2, 1.0], &LbfgsOptions::default());
        assert_eq!(r.status, LbfgsStatus::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn separable_quadratic() {
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..x.len() {
                let c = (i + 1) as f64;
                g[i] = 2.0 * c * (x[i] - 1.0);
                v += c * (x[i] - 1.0).powi(2);
            }
            v
        };
        let r = minimize(f, vec![0.0; 8], &LbfgsOptions::default());
        assert_eq!(r.status, LbfgsStatus::Converged);
        assert!(r.value < 1e-10);
    }

    #[test]
    fn stationary_start_is_returned() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * x[0];
            x[0] * x[0]
        };
        let r = minimize(f, vec![0.0], &LbfgsOptions::default());
        assert_eq!(r.iterations, 0);
        assert_eq!(r.x, vec![0.0]);
    }
}
