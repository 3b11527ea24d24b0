//! Two-phase heuristic: cloud association and F-AP deactivation on outdated
//! CSI once per scheduling period, then per-frame SLNR beamforming at each
//! active F-AP on its perfect local CSI.

mod association;
mod greedy;
mod qcqp;
mod slnr;

pub use association::{associate_users, strongest_fap_association, AssociationOutcome, ReweightOptions};
pub use greedy::{global_ee_of_subset, greedy_deactivate, GreedyOutcome, Removal};
pub use qcqp::{Qcqp, QcqpOptions, QcqpSolution};
pub use slnr::{dense_principal, leakage_matrix, slnr_beam, slnr_beamform};

use serde::{Deserialize, Serialize};

use crate::beamformer::{ActiveSet, Beamformer};
use crate::channel::{ChannelSet, CsiView};
use crate::error::{Error, Result};
use crate::metrics::{check_constraints, evaluate, ConstraintReport, Evaluation};
use crate::power::{averaged_heuristic_power, PowerBreakdown, PowerParams};
use crate::solution::{fronthaul_backoff, Flags, FEASIBILITY_TOL};
use crate::topology::NetworkTopology;

/// Position inside a scheduling period of `T` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSchedule {
    period: usize,
    frame: usize,
}

impl FrameSchedule {
    pub fn new(period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::config("scheduling period must be at least one frame"));
        }
        Ok(Self { period, frame: 0 })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    /// True on frames where the cloud recomputes association.
    pub fn reassociates(&self) -> bool {
        self.frame % self.period == 0
    }

    pub fn advance(&mut self) {
        self.frame += 1;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicOptions {
    pub reweight: ReweightOptions,
}

/// One frame of Phase II.
#[derive(Debug, Clone)]
pub struct FrameOutcome {
    pub beamformer: Beamformer,
    /// True-channel metrics for this frame.
    pub evaluation: Evaluation,
    pub constraints: ConstraintReport,
}

#[derive(Debug, Clone)]
pub struct HeuristicOutcome {
    pub association: AssociationOutcome,
    pub greedy: GreedyOutcome,
    pub active: ActiveSet,
    pub frames: Vec<FrameOutcome>,
    /// Power averaged over the period, W.
    pub power: f64,
    /// Mean sum of served rates over the period, bits/s/Hz.
    pub mean_tau: f64,
    /// Energy efficiency, bits/J.
    pub ee: f64,
    /// Per-user served rate averaged over the period, bits/s/Hz.
    pub user_rates: Vec<f64>,
    pub flags: Flags,
}

/// SLNR beams for a fixed association on perfect local CSI, then fronthaul
/// back-off on the true rates.
pub fn beamform_frame(
    topo: &NetworkTopology,
    active: &ActiveSet,
    ch: &ChannelSet,
    params: &PowerParams,
) -> Result<(Beamformer, Flags, ConstraintReport)> {
    let (mut w, fallback) = slnr_beamform(topo, active, ch, CsiView::Perfect)?;
    let mut flags = Flags {
        fallback,
        ..Flags::default()
    };
    if !fronthaul_backoff(&mut w, active, ch, topo, params, CsiView::Perfect) {
        flags.degraded = true;
    }
    let report = check_constraints(&w, active, ch, topo, params, CsiView::Perfect)?;
    flags.infeasible = !report.is_feasible(FEASIBILITY_TOL);
    Ok((w, flags, report))
}

/// Per-user served rate averaged over frames.
pub(crate) fn mean_served_rates(active: &ActiveSet, frames: &[Evaluation]) -> Vec<f64> {
    let n = frames.len() as f64;
    (0..active.num_users())
        .map(|k| frames.iter().map(|e| e.served_rate(active, k)).sum::<f64>() / n)
        .collect()
}

/// Runs one scheduling period. `frames[0]` carries the cloud's outdated view;
/// every frame's perfect view is the F-APs' local CSI.
pub fn run_heuristic(
    topo: &NetworkTopology,
    frames: &[ChannelSet],
    params: &PowerParams,
    opts: &HeuristicOptions,
) -> Result<HeuristicOutcome> {
    let association = associate_users(topo, &frames[0], params, &opts.reweight);
    run_heuristic_from(topo, frames, params, association)
}

/// Same as [`run_heuristic`] with Phase-I association already computed.
pub fn run_heuristic_from(
    topo: &NetworkTopology,
    frames: &[ChannelSet],
    params: &PowerParams,
    association: AssociationOutcome,
) -> Result<HeuristicOutcome> {
    let mut schedule = FrameSchedule::new(frames.len())?;
    params.validate()?;
    let mut flags = association.flags;
    let mut greedy = None;
    let mut active = association.active.clone();
    let mut outcomes = Vec::with_capacity(frames.len());
    let mut breakdowns: Vec<PowerBreakdown> = Vec::with_capacity(frames.len());
    for ch in frames {
        if schedule.reassociates() {
            let g = greedy_deactivate(topo, &association.beamformer, &association.active, ch, params)?;
            active = g.active.clone();
            greedy = Some(g);
        }
        let (w, f, constraints) = beamform_frame(topo, &active, ch, params)?;
        flags.merge(f);
        let evaluation = evaluate(topo, &w, &active, ch, params, CsiView::Perfect)?;
        breakdowns.push(evaluation.breakdown.clone());
        outcomes.push(FrameOutcome {
            beamformer: w,
            evaluation,
            constraints,
        });
        schedule.advance();
    }
    let steady = if breakdowns.len() > 1 {
        PowerBreakdown::mean(&breakdowns[1..])?
    } else {
        breakdowns[0].clone()
    };
    let power = averaged_heuristic_power(&breakdowns[0], &steady, frames.len())?;
    let evals: Vec<Evaluation> = outcomes.iter().map(|o| o.evaluation.clone()).collect();
    let mean_tau = evals.iter().map(|e| e.tau).sum::<f64>() / evals.len() as f64;
    Ok(HeuristicOutcome {
        user_rates: mean_served_rates(&active, &evals),
        association,
        greedy: greedy.expect("first frame reassociates"),
        active,
        frames: outcomes,
        power,
        mean_tau,
        ee: params.bandwidth_hz * mean_tau / power,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_reassociates_every_period() {
        let mut s = FrameSchedule::new(3).unwrap();
        let mut marks = Vec::new();
        for _ in 0..7 {
            marks.push(s.reassociates());
            s.advance();
        }
        assert_eq!(marks, vec![true, false, false, true, false, false, true]);
        assert!(FrameSchedule::new(0).is_err());
    }
}
