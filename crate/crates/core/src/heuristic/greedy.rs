//! Greedy F-AP deactivation driven by local and global energy efficiency.

use serde::{Deserialize, Serialize};

use crate::beamformer::{ActiveSet, Beamformer};
use crate::channel::{ChannelSet, CsiView};
use crate::error::Result;
use crate::metrics::{evaluate, local_ee_from, Evaluation};
use crate::power::PowerParams;
use crate::topology::NetworkTopology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub fap: usize,
    /// Local EE of the removed F-AP with every F-AP active, bits/J.
    pub local_ee: f64,
    /// Global EE after the removal, bits/J.
    pub global_ee: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyOutcome {
    pub active: ActiveSet,
    /// Global EE with the initial active set, bits/J.
    pub initial_global_ee: f64,
    /// Global EE of the returned active set (Phase-I beams), bits/J.
    pub final_global_ee: f64,
    pub local_ee: Vec<f64>,
    pub removals: Vec<Removal>,
    /// The first removal that failed to improve, if any was tried.
    pub rejected: Option<usize>,
    pub reassigned: usize,
    pub dropped: usize,
}

/// Outdated-view metrics of the Phase-I beams with every active F-AP that
/// serves somebody charged its full transmit budget, the level Phase II
/// will actually radiate.
fn budget_evaluation(
    topo: &NetworkTopology,
    w: &Beamformer,
    active: &ActiveSet,
    ch: &ChannelSet,
    params: &PowerParams,
) -> Result<Evaluation> {
    let mut wr = w.clone();
    wr.restrict_to(active);
    let mut eval = evaluate(topo, &wr, active, ch, params, CsiView::Outdated)?;
    for r in active.active_faps().filter(|&r| active.load(r) > 0) {
        eval.breakdown.faps[r].wireless = topo.faps[r].tx_power_max;
    }
    eval.power = eval.breakdown.total();
    Ok(eval)
}

fn subset_ee(
    topo: &NetworkTopology,
    w: &Beamformer,
    active: &ActiveSet,
    ch: &ChannelSet,
    params: &PowerParams,
) -> Result<f64> {
    Ok(budget_evaluation(topo, w, active, ch, params)?.global_ee(params))
}

/// Global EE on the outdated view for an arbitrary active subset, reusing
/// the given beams with every block outside the association zeroed and
/// transmit power counted at the full budget of every serving F-AP.
pub fn global_ee_of_subset(
    topo: &NetworkTopology,
    w: &Beamformer,
    assoc: &ActiveSet,
    keep: &[bool],
    ch: &ChannelSet,
    params: &PowerParams,
) -> Result<f64> {
    let serving = assoc
        .serving_map()
        .iter()
        .map(|s| s.filter(|&r| keep[r]))
        .collect();
    let active = ActiveSet::new(keep.to_vec(), serving)?;
    subset_ee(topo, w, &active, ch, params)
}

/// Moves users served in Phase I whose F-AP was removed to the strongest
/// remaining F-AP (outdated gain) that serves fewer than `M_r` users.
fn reattach_orphans(
    topo: &NetworkTopology,
    assoc: &ActiveSet,
    mut current: ActiveSet,
    ch: &ChannelSet,
) -> (ActiveSet, usize, usize) {
    let mut orphans: Vec<(usize, f64)> = (0..topo.num_users())
        .filter(|&k| assoc.serving(k).is_some() && current.serving(k).is_none())
        .map(|k| {
            let g = current
                .active_faps()
                .map(|r| ch.link_gain(CsiView::Outdated, r, k))
                .fold(0.0, f64::max);
            (k, g)
        })
        .collect();
    orphans.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let (mut reassigned, mut dropped) = (0, 0);
    for (k, _) in orphans {
        let target = current
            .active_faps()
            .filter(|&r| current.load(r) < topo.faps[r].antennas)
            .max_by(|&a, &b| {
                ch.link_gain(CsiView::Outdated, a, k)
                    .total_cmp(&ch.link_gain(CsiView::Outdated, b, k))
                    .then(b.cmp(&a))
            });
        match target {
            Some(r) => {
                current.assign(k, Some(r));
                reassigned += 1;
            }
            None => dropped += 1,
        }
    }

    (current, reassigned, dropped)
}

/// Removes F-APs in ascending order of local EE while the global EE does not
/// decrease, keeping at least one F-AP. Orphaned users then move to the
/// strongest remaining F-AP (outdated gain) that serves fewer than `M_r`
/// users, or stay unserved.
pub fn greedy_deactivate(
    topo: &NetworkTopology,
    w: &Beamformer,
    assoc: &ActiveSet,
    ch: &ChannelSet,
    params: &PowerParams,
) -> Result<GreedyOutcome> {
    let faps = topo.num_faps();
    let eval = budget_evaluation(topo, w, assoc, ch, params)?;
    let initial = eval.global_ee(params);
    let local_ee: Vec<f64> = (0..faps).map(|r| local_ee_from(&eval, r, assoc, params)).collect();

    let mut order: Vec<usize> = assoc.active_faps().collect();
    order.sort_by(|&a, &b| local_ee[a].total_cmp(&local_ee[b]).then(a.cmp(&b)));

    let mut current = assoc.clone();
    let mut ee = initial;
    let mut removals = Vec::new();
    let mut rejected = None;
    for r in order {
        if current.active_count() <= 1 {
            break;
        }
        let mut trial = current.clone();
        trial.deactivate(r);
        let trial_ee = subset_ee(topo, w, &trial, ch, params)?;
        if trial_ee >= ee {
            current = trial;
            ee = trial_ee;
            removals.push(Removal {
                fap: r,
                local_ee: local_ee[r],
                global_ee: trial_ee,
            });
        } else {
            rejected = Some(r);
            break;
        }
    }

    let (current, reassigned, dropped) = reattach_orphans(topo, assoc, current, ch);

    Ok(GreedyOutcome {
        active: current,
        initial_global_ee: initial,
        final_global_ee: ee,
        local_ee,
        removals,
        rejected,
        reassigned,
        dropped,
    })
}
