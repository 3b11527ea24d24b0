//! Reference schemes: distributed strongest-F-AP association (`ref_ee`) and
//! the sum-rate scheme that keeps every F-AP with users on (`ref_sr`).

use serde::{Deserialize, Serialize};

use crate::beamformer::ActiveSet;
use crate::channel::{ChannelSet, CsiView};
use crate::error::{Error, Result};
use crate::heuristic::{beamform_frame, mean_served_rates, AssociationOutcome, FrameOutcome};
use crate::metrics::{evaluate, Evaluation};
use crate::power::PowerParams;
use crate::solution::Flags;
use crate::topology::NetworkTopology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefEeParams {
    /// Minimum users for an F-AP to stay on.
    pub theta: usize,
    /// Users per F-AP; `None` means the F-AP's antenna count.
    pub capacity: Option<usize>,
}

impl Default for RefEeParams {
    fn default() -> Self {
        Self {
            theta: 1,
            capacity: None,
        }
    }
}

impl RefEeParams {
    pub fn validate(&self) -> Result<()> {
        if self.theta == 0 {
            return Err(Error::config("theta must be at least 1"));
        }
        if self.capacity == Some(0) {
            return Err(Error::config("per-F-AP capacity must be positive"));
        }
        Ok(())
    }
}

/// Result shape shared by both baselines.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    /// Active set of the first frame.
    pub active: ActiveSet,
    pub frames: Vec<FrameOutcome>,
    pub mean_power: f64,
    pub mean_tau: f64,
    /// Energy efficiency, bits/J.
    pub ee: f64,
    pub user_rates: Vec<f64>,
    pub flags: Flags,
}

/// Strongest-F-AP association with capacity trimming by distance and the
/// `theta` switch-off rule, on perfect local CSI.
pub fn ref_ee_association(topo: &NetworkTopology, ch: &ChannelSet, opts: &RefEeParams) -> ActiveSet {
    let (faps, users) = (topo.num_faps(), topo.num_users());
    let mut serving: Vec<Option<usize>> = (0..users)
        .map(|k| {
            (0..faps).max_by(|&a, &b| {
                ch.link_gain(CsiView::Perfect, a, k)
                    .total_cmp(&ch.link_gain(CsiView::Perfect, b, k))
                    .then(b.cmp(&a))
            })
        })
        .collect();
    let mut active = vec![false; faps];
    for r in 0..faps {
        let cap = opts.capacity.unwrap_or(topo.faps[r].antennas);
        let mut members: Vec<usize> = (0..users).filter(|&k| serving[k] == Some(r)).collect();
        while members.len() > cap {
            let (pos, &far) = members
                .iter()
                .enumerate()
                .max_by(|a, b| topo.distance(r, *a.1).total_cmp(&topo.distance(r, *b.1)).then(b.1.cmp(a.1)))
                .expect("non-empty");
            serving[far] = None;
            members.remove(pos);
        }
        if members.len() >= opts.theta {
            active[r] = true;
        } else {
            for k in members {
                serving[k] = None;
            }
        }
    }
    ActiveSet::new(active, serving).expect("users only on active F-APs")
}

fn summarize(
    topo: &NetworkTopology,
    frames: &[ChannelSet],
    params: &PowerParams,
    mut assoc: impl FnMut(usize, &ChannelSet) -> ActiveSet,
) -> Result<BaselineOutcome> {
    if frames.is_empty() {
        return Err(Error::config("at least one frame is required"));
    }
    params.validate()?;
    let mut flags = Flags::default();
    let mut outcomes = Vec::with_capacity(frames.len());
    let mut actives = Vec::with_capacity(frames.len());
    for (t, ch) in frames.iter().enumerate() {
        let active = assoc(t, ch);
        let (w, f, constraints) = beamform_frame(topo, &active, ch, params)?;
        flags.merge(f);
        let evaluation = evaluate(topo, &w, &active, ch, params, CsiView::Perfect)?;
        outcomes.push(FrameOutcome {
            beamformer: w,
            evaluation,
            constraints,
        });
        actives.push(active);
    }
    let n = frames.len() as f64;
    let mean_power = outcomes.iter().map(|o| o.evaluation.power).sum::<f64>() / n;
    let mean_tau = outcomes.iter().map(|o| o.evaluation.tau).sum::<f64>() / n;
    let user_rates = (0..topo.num_users())
        .map(|k| {
            outcomes
                .iter()
                .zip(&actives)
                .map(|(o, a)| o.evaluation.served_rate(a, k))
                .sum::<f64>()
                / n
        })
        .collect();
    Ok(BaselineOutcome {
        active: actives.swap_remove(0),
        frames: outcomes,
        mean_power,
        mean_tau,
        ee: params.bandwidth_hz * mean_tau / mean_power,
        user_rates,
        flags,
    })
}

/// Distributed baseline: every frame, users pick their strongest F-AP on
/// perfect CSI, overloaded F-APs drop their farthest users, F-APs below
/// `theta` switch off and the rest run SLNR beamforming.
pub fn ref_ee(
    topo: &NetworkTopology,
    frames: &[ChannelSet],
    params: &PowerParams,
    opts: &RefEeParams,
) -> Result<BaselineOutcome> {
    opts.validate()?;
    summarize(topo, frames, params, |_, ch| ref_ee_association(topo, ch, opts))
}

/// Sum-rate baseline: Phase-I association kept for the whole period with
/// every F-AP that serves somebody active, SLNR beams every frame.
pub fn ref_sr(
    topo: &NetworkTopology,
    frames: &[ChannelSet],
    params: &PowerParams,
    association: &AssociationOutcome,
) -> Result<BaselineOutcome> {
    let active = association.active.trimmed();
    let mut out = summarize(topo, frames, params, |_, _| active.clone())?;
    out.flags.merge(association.flags);
    Ok(out)
}

/// Served rates averaged across frames for a fixed association.
pub fn mean_rates(active: &ActiveSet, frames: &[Evaluation]) -> Vec<f64> {
    mean_served_rates(active, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_frames, ChannelModel};
    use crate::rng::RngSeed;
    use crate::topology::{generate_topology, Position, TopologyConfig};

    #[test]
    fn one_user_one_fap() {
        let cfg = TopologyConfig {
            picos: 0,
            ..TopologyConfig::small(1)
        };
        let topo = generate_topology(&cfg, RngSeed::new(1)).unwrap();
        let frames = generate_frames(&topo, &ChannelModel::default(), 0.0, RngSeed::new(1), 2).unwrap();
        let out = ref_ee(&topo, &frames, &PowerParams::default(), &RefEeParams::default()).unwrap();
        assert!(out.active.is_active(0));
        assert_eq!(out.active.serving(0), Some(0));
        assert!(out.ee > 0.0);
    }

    #[test]
    fn empty_faps_switch_off_and_capacity_drops_farthest() {
        let mut topo = generate_topology(&TopologyConfig::small(4), RngSeed::new(2)).unwrap();
        // Crowd every user next to the macro site.
        for (i, u) in topo.users.iter_mut().enumerate() {
            *u = Position::new(20.0 + 10.0 * i as f64, 0.0);
        }
        let frames = generate_frames(&topo, &ChannelModel { shadowing_std_db: 0.0, ..ChannelModel::default() }, 0.0, RngSeed::new(2), 1).unwrap();
        let opts = RefEeParams {
            theta: 1,
            capacity: Some(2),
        };
        let a = ref_ee_association(&topo, &frames[0], &opts);
        for r in 0..topo.num_faps() {
            assert!(a.load(r) <= 2);
            assert_eq!(a.is_active(r), a.load(r) >= 1);
        }
        // Users served by the macro are the closest of those that picked it.
        let macro_users = a.users_of(0);
        let dropped: Vec<usize> = (0..4).filter(|&k| a.serving(k).is_none()).collect();
        for &d in &dropped {
            for &k in &macro_users {
                assert!(topo.distance(0, k) <= topo.distance(0, d));
            }
        }
    }

    #[test]
    fn ref_ee_ignores_csi_error() {
        let topo = generate_topology(&TopologyConfig::small(5), RngSeed::new(3)).unwrap();
        let m = ChannelModel::default();
        let a = generate_frames(&topo, &m, 0.0, RngSeed::new(3), 3).unwrap();
        let b = generate_frames(&topo, &m, 1.0, RngSeed::new(3), 3).unwrap();
        let p = PowerParams::default();
        let oa = ref_ee(&topo, &a, &p, &RefEeParams::default()).unwrap();
        let ob = ref_ee(&topo, &b, &p, &RefEeParams::default()).unwrap();
        assert_eq!(oa.ee, ob.ee);
        assert_eq!(oa.user_rates, ob.user_rates);
    }
}
