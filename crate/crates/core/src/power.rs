//! F-RAN power consumption model.
//!
//! Each F-AP draws CSI-uplink fronthaul power, circuit power, downlink
//! fronthaul power and radiated power. Idle F-APs keep only the first two,
//! with no CSI traffic.

use serde::{Deserialize, Serialize};

use crate::beamformer::{ActiveSet, Beamformer};
use crate::error::{Error, Result};
use crate::topology::NetworkTopology;

/// Constants of the consumption model. `p_td` is in W per bit/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerParams {
    /// Traffic-independent fronthaul power `P_fix`, W.
    pub p_fix: f64,
    /// Fronthaul transport redundancy.
    pub redundancy: f64,
    /// IQ sample width in bits.
    pub iq_bits: f64,
    /// Precoder update rate, Hz.
    pub precoder_update_hz: f64,
    /// Traffic-dependent fronthaul power, W per bit/s.
    pub p_td: f64,
    /// Power-amplifier efficiency.
    pub amplifier_efficiency: f64,
    /// Normalized transmit power times noise, W.
    pub rho_n0: f64,
    /// Per-antenna circuit power, W.
    pub p_ic: f64,
    /// Downlink bandwidth, Hz.
    pub bandwidth_hz: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            p_fix: 0.825,
            redundancy: 4.0 / 3.0,
            iq_bits: 20.0,
            precoder_update_hz: 1.5e6,
            p_td: 0.25e-9,
            amplifier_efficiency: 0.4,
            rho_n0: 1.0,
            p_ic: 0.2,
            bandwidth_hz: 10e6,
        }
    }
}

impl PowerParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.p_fix,
            self.redundancy,
            self.iq_bits,
            self.precoder_update_hz,
            self.p_td,
            self.amplifier_efficiency,
            self.rho_n0,
            self.bandwidth_hz,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.p_ic < 0.0 {
            return Err(Error::config("power parameters must be positive"));
        }
        if self.amplifier_efficiency > 1.0 {
            return Err(Error::config("amplifier efficiency must lie in (0, 1]"));
        }
        Ok(())
    }

    /// CSI-uplink traffic power per antenna per reported user, W.
    pub fn uplink_coefficient(&self) -> f64 {
        self.redundancy * self.iq_bits * self.precoder_update_hz * self.p_td
    }

    /// `P_fu = P_fix + beta * M_r * K_r * b_IQ * f_pre * P_td`.
    pub fn fronthaul_uplink_power(&self, antennas: usize, users: usize) -> f64 {
        self.p_fix + self.uplink_coefficient() * antennas as f64 * users as f64
    }

    /// `P_c = rho_d N_0 / beta_amp + M_r * P_ic`.
    pub fn circuit_power(&self, antennas: usize) -> f64 {
        self.rho_n0 / self.amplifier_efficiency + antennas as f64 * self.p_ic
    }

    /// `P_fd = P_fix + B * tau * P_td`, `tau` in bits/s/Hz.
    pub fn fronthaul_downlink_power(&self, spectral_efficiency: f64) -> f64 {
        self.p_fix + self.bandwidth_hz * spectral_efficiency * self.p_td
    }
}

/// Radiated power of F-AP `r`, `sum_k ||w_rk||^2`.
pub fn wireless_power(w: &Beamformer, r: usize) -> f64 {
    w.fap_power(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FApState {
    Active,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FApPower {
    pub uplink: f64,
    pub circuit: f64,
    pub downlink: f64,
    pub wireless: f64,
    pub state: FApState,
}

impl FApPower {
    pub fn total(&self) -> f64 {
        self.uplink + self.circuit + self.downlink + self.wireless
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub faps: Vec<FApPower>,
}

impl PowerBreakdown {
    pub fn total(&self) -> f64 {
        self.faps.iter().map(FApPower::total).sum()
    }

    /// Component-wise mean of several breakdowns with identical states.
    pub fn mean(items: &[PowerBreakdown]) -> Result<PowerBreakdown> {
        let first = items
            .first()
            .ok_or_else(|| Error::invariant("mean of zero power breakdowns"))?;
        let n = items.len() as f64;
        let mut faps = first.faps.clone();
        for f in faps.iter_mut() {
            f.uplink = 0.0;
            f.circuit = 0.0;
            f.downlink = 0.0;
            f.wireless = 0.0;
        }
        for b in items {
            if b.faps.len() != faps.len() {
                return Err(Error::Dimension("breakdowns differ in F-AP count".into()));
            }
            for (acc, f) in faps.iter_mut().zip(&b.faps) {
                if acc.state != f.state {
                    return Err(Error::invariant("breakdowns differ in F-AP states"));
                }
                acc.uplink += f.uplink / n;
                acc.circuit += f.circuit / n;
                acc.downlink += f.downlink / n;
                acc.wireless += f.wireless / n;
            }
        }
        Ok(PowerBreakdown { faps })
    }
}

/// Total system power for one frame.
///
/// `served_se[r]` is the spectral efficiency (bits/s/Hz) of the users served
/// by F-AP `r`; it drives that F-AP's downlink fronthaul power.
pub fn total_power(
    topo: &NetworkTopology,
    w: &Beamformer,
    active: &ActiveSet,
    params: &PowerParams,
    served_se: &[f64],
) -> Result<(f64, PowerBreakdown)> {
    let faps = topo.num_faps();
    if served_se.len() != faps || active.num_faps() != faps || w.num_faps() != faps {
        return Err(Error::Dimension("power evaluation inputs disagree on R".into()));
    }
    let mut out = Vec::with_capacity(faps);
    for (r, fap) in topo.faps.iter().enumerate() {
        let m = fap.antennas;
        let p_w = wireless_power(w, r);
        if active.is_active(r) {
            if served_se[r] < 0.0 {
                return Err(Error::invariant(format!("negative spectral efficiency at F-AP {r}")));
            }
            out.push(FApPower {
                uplink: params.fronthaul_uplink_power(m, active.load(r)),
                circuit: params.circuit_power(m),
                downlink: params.fronthaul_downlink_power(served_se[r]),
                wireless: p_w,
                state: FApState::Active,
            });
        } else {
            if p_w > 0.0 {
                return Err(Error::invariant(format!(
                    "idle F-AP {r} radiates {p_w} W"
                )));
            }
            out.push(FApPower {
                uplink: params.fronthaul_uplink_power(m, 0),
                circuit: params.circuit_power(m),
                downlink: 0.0,
                wireless: 0.0,
                state: FApState::Idle,
            });
        }
    }
    let breakdown = PowerBreakdown { faps: out };
    Ok((breakdown.total(), breakdown))
}

/// Power averaged over a scheduling period of `frames` frames: the first
/// frame pays the full cost, later frames only circuit and radiated power at
/// active F-APs, and idle F-APs pay uplink plus circuit power every frame.
pub fn averaged_heuristic_power(
    frame1: &PowerBreakdown,
    steady: &PowerBreakdown,
    frames: usize,
) -> Result<f64> {
    if frames == 0 {
        return Err(Error::config("scheduling period must be at least one frame"));
    }
    if frame1.faps.len() != steady.faps.len() {
        return Err(Error::Dimension("breakdowns differ in F-AP count".into()));
    }
    let t = frames as f64;
    let mut sum = 0.0;
    for (first, later) in frame1.faps.iter().zip(&steady.faps) {
        if first.state != later.state {
            return Err(Error::invariant("F-AP state changed inside a scheduling period"));
        }
        sum += match first.state {
            FApState::Active => first.total() + (t - 1.0) * (later.circuit + later.wireless),
            FApState::Idle => t * (first.uplink + first.circuit),
        };
    }
    Ok(sum / t)
}
