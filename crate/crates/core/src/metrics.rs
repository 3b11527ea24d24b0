//! SINR, rates, energy efficiency, SLNR and constraint audits for any
//! (beamformer, channel) pair. Rates are in bits/s/Hz (base-2 logarithm).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamformer::{ActiveSet, Beamformer};
use crate::channel::{ChannelSet, CsiView};
use crate::error::{Error, Result};
use crate::power::{total_power, PowerBreakdown, PowerParams};
use crate::topology::NetworkTopology;

/// `a^H b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

fn check_dims(w: &Beamformer, ch: &ChannelSet) {
    assert_eq!(w.layout(), ch.layout(), "beamformer and channel layouts differ");
    assert_eq!(w.num_users(), ch.num_users(), "beamformer and channel user counts differ");
}

pub fn rate_from_sinr(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// SINR of user `k` under the given CSI view.
pub fn sinr(k: usize, w: &Beamformer, ch: &ChannelSet, view: CsiView) -> f64 {
    check_dims(w, ch);
    let h = ch.stacked(view, k);
    let signal = inner(h, w.stacked(k)).norm_sqr();
    let interference: f64 = (0..w.num_users())
        .filter(|&j| j != k)
        .map(|j| inner(h, w.stacked(j)).norm_sqr())
        .sum();
    signal / (interference + ch.noise_power())
}

pub fn user_rate(k: usize, w: &Beamformer, ch: &ChannelSet, view: CsiView) -> f64 {
    rate_from_sinr(sinr(k, w, ch, view))
}

/// SINR of every user.
pub fn all_sinrs(w: &Beamformer, ch: &ChannelSet, view: CsiView) -> Vec<f64> {
    check_dims(w, ch);
    let users = w.num_users();
    let noise = ch.noise_power();
    (0..users)
        .map(|k| {
            let h = ch.stacked(view, k);
            let mut signal = 0.0;
            let mut total = 0.0;
            for j in 0..users {
                let p = inner(h, w.stacked(j)).norm_sqr();
                total += p;
                if j == k {
                    signal = p;
                }
            }
            signal / (total - signal + noise)
        })
        .collect()
}

pub fn user_rates(w: &Beamformer, ch: &ChannelSet, view: CsiView) -> Vec<f64> {
    all_sinrs(w, ch, view).into_iter().map(rate_from_sinr).collect()
}

/// Per-F-AP spectral efficiency of served users, `sum_{k in K_r} R_k`.
pub fn served_spectral_efficiency(active: &ActiveSet, rates: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; active.num_faps()];
    for (k, rate) in rates.iter().enumerate() {
        if let Some(r) = active.serving(k) {
            if active.is_active(r) {
                out[r] += rate;
            }
        }
    }
    out
}

/// `tau = sum_{r in R_A} sum_{k in K_r} R_k`.
pub fn spectral_efficiency(w: &Beamformer, active: &ActiveSet, ch: &ChannelSet, view: CsiView) -> f64 {
    served_spectral_efficiency(active, &user_rates(w, ch, view))
        .iter()
        .sum()
}

/// Everything needed to report one frame of one solution.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub rates: Vec<f64>,
    pub served_se: Vec<f64>,
    /// Sum of served rates, bits/s/Hz.
    pub tau: f64,
    pub power: f64,
    pub breakdown: PowerBreakdown,
}

impl Evaluation {
    /// Global energy efficiency in bits/J.
    pub fn global_ee(&self, params: &PowerParams) -> f64 {
        params.bandwidth_hz * self.tau / self.power
    }

    /// Rate of user `k` if served, zero otherwise.
    pub fn served_rate(&self, active: &ActiveSet, k: usize) -> f64 {
        match active.serving(k) {
            Some(r) if active.is_active(r) => self.rates[k],
            _ => 0.0,
        }
    }
}

pub fn evaluate(
    topo: &NetworkTopology,
    w: &Beamformer,
    active: &ActiveSet,
    ch: &ChannelSet,
    params: &PowerParams,
    view: CsiView,
) -> Result<Evaluation> {
    let rates = user_rates(w, ch, view);
    let served_se = served_spectral_efficiency(active, &rates);
    let tau = served_se.iter().sum();
    let (power, breakdown) = total_power(topo, w, active, params, &served_se)?;
    Ok(Evaluation {
        rates,
        served_se,
        tau,
        power,
        breakdown,
    })
}

/// Global energy efficiency `B * tau / P`, bits/J.
pub fn global_ee(
    topo: &NetworkTopology,
    w: &Beamformer,
    active: &ActiveSet,
    ch: &ChannelSet,
    params: &PowerParams,
    view: CsiView,
) -> Result<f64> {
    Ok(evaluate(topo, w, active, ch, params, view)?.global_ee(params))
}

/// Local energy efficiency of F-AP `r`, `B * sum_{k in K_r} R_k / P_r^on`.
pub fn local_ee(
    r: usize,
    topo: &NetworkTopology,
    w: &Beamformer,
    active: &ActiveSet,
    ch: &ChannelSet,
    params: &PowerParams,
    view: CsiView,
) -> Result<f64> {
    let eval = evaluate(topo, w, active, ch, params, view)?;
    Ok(local_ee_from(&eval, r, active, params))
}

pub(crate) fn local_ee_from(eval: &Evaluation, r: usize, active: &ActiveSet, params: &PowerParams) -> f64 {
    if !active.is_active(r) || active.load(r) == 0 {
        return 0.0;
    }
    params.bandwidth_hz * eval.served_se[r] / eval.breakdown.faps[r].total()
}

/// SLNR of user `k` served by F-AP `r` with beam `w_rk`; leakage runs over
/// every other user in the network.
pub fn slnr(r: usize, k: usize, w_rk: &[Complex64], ch: &ChannelSet, view: CsiView) -> f64 {
    let signal = inner(ch.link(view, r, k), w_rk).norm_sqr();
    let leakage: f64 = (0..ch.num_users())
        .filter(|&j| j != k)
        .map(|j| inner(ch.link(view, r, j), w_rk).norm_sqr())
        .sum();
    signal / (leakage + ch.noise_power())
}

/// Slack of the power, fronthaul and single-association constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// `P_r_max - P_w`, W.
    pub power_residuals: Vec<f64>,
    /// `C_r - B * sum_{k in K_r} R_k`, bits/s.
    pub fronthaul_residuals: Vec<f64>,
    /// Number of extra F-APs beaming to each user.
    pub association_violations: Vec<usize>,
    power_scale: Vec<f64>,
    fronthaul_scale: Vec<f64>,
}

impl ConstraintReport {
    /// Worst residual relative to its constraint's scale (negative means
    /// violated).
    pub fn worst_power_slack(&self) -> f64 {
        self.power_residuals
            .iter()
            .zip(&self.power_scale)
            .map(|(r, s)| r / s)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn worst_fronthaul_slack(&self) -> f64 {
        self.fronthaul_residuals
            .iter()
            .zip(&self.fronthaul_scale)
            .map(|(r, s)| r / s)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn total_association_violations(&self) -> usize {
        self.association_violations.iter().sum()
    }

    /// All scaled residuals at least `-tol` and no user served twice.
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.worst_power_slack() >= -tol
            && self.worst_fronthaul_slack() >= -tol
            && self.total_association_violations() == 0
    }
}

pub fn check_constraints(
    w: &Beamformer,
    active: &ActiveSet,
    ch: &ChannelSet,
    topo: &NetworkTopology,
    params: &PowerParams,
    view: CsiView,
) -> Result<ConstraintReport> {
    if topo.num_faps() != w.num_faps() || topo.num_users() != w.num_users() {
        return Err(Error::Dimension("topology and beamformer disagree".into()));
    }
    let eps = topo.association_threshold();
    let rates = user_rates(w, ch, view);
    let served = served_spectral_efficiency(active, &rates);
    let power_residuals = topo
        .faps
        .iter()
        .enumerate()
        .map(|(r, f)| f.tx_power_max - w.fap_power(r))
        .collect();
    let fronthaul_residuals = topo
        .faps
        .iter()
        .enumerate()
        .map(|(r, f)| f.fronthaul_capacity - params.bandwidth_hz * served[r])
        .collect();
    let association_violations = (0..w.num_users())
        .map(|k| {
            let n = (0..w.num_faps())
                .filter(|&r| w.block_power(r, k) > eps)
                .count();
            n.saturating_sub(1)
        })
        .collect();
    Ok(ConstraintReport {
        power_residuals,
        fronthaul_residuals,
        association_violations,
        power_scale: topo.faps.iter().map(|f| f.tx_power_max).collect(),
        fronthaul_scale: topo.faps.iter().map(|f| f.fronthaul_capacity).collect(),
    })
}
