//! Augmented Lagrangian solver for the smoothed energy-efficiency problem.

mod lagrangian;
mod lbfgs;

pub use lagrangian::{phi, ConstraintValues, Multipliers, SmoothedProblem};
pub use lbfgs::{minimize, LbfgsOptions, LbfgsResult, LbfgsStatus};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamformer::{ActiveSet, Beamformer};
use crate::channel::{ChannelSet, CsiView};
use crate::error::Result;
use crate::metrics::check_constraints;
use crate::power::PowerParams;
use crate::solution::{clip_power, fronthaul_backoff, Flags, FEASIBILITY_TOL};
use crate::topology::NetworkTopology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlOptions {
    /// Smoothing constant of `Phi`.
    pub delta: f64,
    pub mu_max: f64,
    /// Required violation reduction factor before the penalty is kept.
    pub lambda: f64,
    /// Penalty growth factor.
    pub beta: f64,
    pub rho0: f64,
    /// The penalty stops growing once another step would exceed this.
    pub rho_max: f64,
    pub max_outer: usize,
    pub kkt_tol: f64,
    /// Inner tolerance relative to `1 + |f|`.
    pub inner_rel_tol: f64,
    pub inner_max_iter: usize,
    /// CSI the optimization sees.
    pub view: CsiView,
    /// Fraction of each F-AP's budget used by the starting point.
    pub init_power_fraction: f64,
}

impl Default for AlOptions {
    fn default() -> Self {
        Self {
            delta: 0.1,
            mu_max: 1.0,
            lambda: 0.25,
            beta: 10.0,
            rho0: 10.0,
            rho_max: 1e12,
            max_outer: 50,
            kkt_tol: 1e-3,
            inner_rel_tol: 1e-4,
            inner_max_iter: 500,
            view: CsiView::Outdated,
            init_power_fraction: 0.5,
        }
    }
}

/// One outer iteration of the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlIteration {
    pub iteration: usize,
    /// Smoothed energy efficiency `-f(w)`, Mbit/J.
    pub objective: f64,
    /// `max(0, max g(w))`.
    pub max_violation: f64,
    /// `||V||_inf` of the penalty update test.
    pub v_norm: f64,
    /// Penalty used to compute this iterate.
    pub rho: f64,
    pub inner_iterations: usize,
    pub grad_inf: f64,
    pub inner_converged: bool,
}

#[derive(Debug, Clone)]
pub struct AlOutcome {
    pub beamformer: Beamformer,
    pub active: ActiveSet,
    pub trace: Vec<AlIteration>,
    /// The approximate KKT test fired before the iteration cap.
    pub kkt_reached: bool,
    /// Max scaled violation of the raw (pre-rounding) final iterate.
    pub raw_violation: f64,
    pub flags: Flags,
}

impl AlOutcome {
    pub fn outer_iterations(&self) -> usize {
        self.trace.len()
    }

    /// KKT stop, or a small final violation with an objective that moved
    /// less than `tol` (relative) over the last `window` iterations.
    pub fn stabilized(&self, window: usize, tol: f64) -> bool {
        if self.kkt_reached {
            return true;
        }
        let n = self.trace.len();
        if n <= window {
            return false;
        }
        let last = &self.trace[n - 1];
        if last.max_violation > tol {
            return false;
        }
        let reference = self.trace[n - 1 - window].objective;
        self.trace[n - window..]
            .iter()
            .all(|it| (it.objective - reference).abs() <= tol * reference.abs().max(1e-12))
    }
}

/// Matched filter from every user to its strongest F-AP, each F-AP radiating
/// `fraction` of its budget split equally among its users.
pub fn matched_filter_start(topo: &NetworkTopology, ch: &ChannelSet, view: CsiView, fraction: f64) -> Beamformer {
    let (faps, users) = (ch.num_faps(), ch.num_users());
    let best: Vec<usize> = (0..users)
        .map(|k| {
            (0..faps)
                .max_by(|&a, &b| ch.link_gain(view, a, k).total_cmp(&ch.link_gain(view, b, k)))
                .expect("at least one F-AP")
        })
        .collect();
    let mut w = Beamformer::zeros(ch.layout().clone(), users);
    for (k, &r) in best.iter().enumerate() {
        let load = best.iter().filter(|&&s| s == r).count() as f64;
        let p = fraction * topo.faps[r].tx_power_max / load;
        let h = ch.link(view, r, k);
        let n: f64 = h.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            let v: Vec<Complex64> = h.iter().map(|c| c * (p.sqrt() / n)).collect();
            w.set_block(r, k, &v);
        }
    }
    w
}

/// Minimizes the augmented Lagrangian from `w0` with fixed multipliers.
pub fn solve_subproblem(
    prob: &SmoothedProblem,
    w0: &[Complex64],
    mu: &Multipliers,
    rho: f64,
    tol: f64,
    max_iter: usize,
) -> LbfgsResult {
    let mut gc = vec![Complex64::new(0.0, 0.0); prob.dim()];
    let f = |x: &[f64], g: &mut [f64]| {
        let w = SmoothedProblem::from_real(x);
        let v = prob.lagrangian_grad(&w, mu, rho, &mut gc);
        for (i, c) in gc.iter().enumerate() {
            g[2 * i] = c.re;
            g[2 * i + 1] = c.im;
        }
        v
    };
    let opts = LbfgsOptions {
        max_iter,
        tol,
        ..LbfgsOptions::default()
    };
    minimize(f, SmoothedProblem::to_real(w0), &opts)
}

/// Runs the outer AL loop on `opts.view`, then rounds the association,
/// clips power and backs off fronthaul overloads under `report_view`.
pub fn run_al(
    topo: &NetworkTopology,
    ch: &ChannelSet,
    params: &PowerParams,
    opts: &AlOptions,
    report_view: CsiView,
) -> Result<AlOutcome> {
    params.validate()?;
    let prob = SmoothedProblem::new(topo, ch, opts.view, params, opts.delta);
    let (faps, users) = (topo.num_faps(), topo.num_users());
    let mut w: Vec<Complex64> = matched_filter_start(topo, ch, opts.view, opts.init_power_fraction)
        .as_slice()
        .to_vec();
    let mut mu = Multipliers::zeros(faps, users);
    let mut rho = opts.rho0;
    let mut prev_v: Option<f64> = None;
    let mut trace = Vec::with_capacity(opts.max_outer);
    let mut kkt_reached = false;
    let mut flags = Flags::default();

    for iteration in 0..opts.max_outer {
        let f0 = prob.objective(&w);
        let tol = opts.inner_rel_tol * (1.0 + f0.abs());
        let inner = solve_subproblem(&prob, &w, &mu, rho, tol, opts.inner_max_iter);
        if inner.status == LbfgsStatus::LineSearchFailed {
            flags.degraded = true;
        }
        w = SmoothedProblem::from_real(&inner.x);
        let f = prob.objective(&w);
        let g = prob.constraints(&w);

        // V^i uses the multipliers that produced w^i.
        let v_norm = g
            .iter()
            .zip(mu.iter())
            .map(|(g, m)| g.max(-m / rho).abs())
            .fold(0.0, f64::max);
        let update = |m: &mut Vec<f64>, g: &[f64]| {
            for (m, g) in m.iter_mut().zip(g) {
                *m = (*m + rho * g).max(0.0).min(opts.mu_max);
            }
        };
        update(&mut mu.power, &g.power);
        update(&mut mu.fronthaul, &g.fronthaul);
        update(&mut mu.association, &g.association);

        trace.push(AlIteration {
            iteration,
            objective: -f,
            max_violation: g.max_violation(),
            v_norm,
            rho,
            inner_iterations: inner.iterations,
            grad_inf: inner.grad_inf,
            inner_converged: inner.status == LbfgsStatus::Converged,
        });

        if inner.grad_inf <= opts.kkt_tol * (1.0 + f.abs()) && v_norm <= opts.kkt_tol {
            kkt_reached = true;
            break;
        }
        let keep = prev_v.is_some_and(|p| v_norm <= opts.lambda * p);
        if !keep && rho * opts.beta <= opts.rho_max {
            rho *= opts.beta;
        }
        prev_v = Some(v_norm);
    }

    let raw_violation = prob.constraints(&w).max_violation();
    if !kkt_reached && raw_violation > opts.kkt_tol {
        flags.degraded = true;
    }
    let mut beamformer = prob.to_beamformer(w);
    let eps = topo.association_threshold();
    let active = ActiveSet::from_beamformer(&beamformer, eps).trimmed();
    beamformer.restrict_to(&active);
    clip_power(&mut beamformer, topo);
    if !fronthaul_backoff(&mut beamformer, &active, ch, topo, params, report_view) {
        flags.degraded = true;
    }
    let report = check_constraints(&beamformer, &active, ch, topo, params, report_view)?;
    flags.infeasible = !report.is_feasible(FEASIBILITY_TOL);
    Ok(AlOutcome {
        beamformer,
        active,
        trace,
        kkt_reached,
        raw_violation,
        flags,
    })
}
