use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use crate::al::{run_al, AlIteration};
use crate::baselines::{ref_ee, ref_sr, BaselineOutcome};
use crate::beamformer::ActiveSet;
use crate::channel::{generate_frames, ChannelSet, CsiView};
use crate::error::{Error, Result};
use crate::heuristic::{associate_users, run_heuristic_from, AssociationOutcome, FrameOutcome, GreedyOutcome};
use crate::metrics::{check_constraints, evaluate, ConstraintReport};
use crate::power::PowerBreakdown;
use crate::rng::RngSeed;
use crate::solution::{Flags, FEASIBILITY_TOL};
use crate::topology::{generate_topology, NetworkTopology};

/// Worst scaled constraint slacks of a solution (over all its frames).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub worst_power_slack: f64,
    pub worst_fronthaul_slack: f64,
    pub association_violations: usize,
}

impl Residuals {
    pub fn from_report(r: &ConstraintReport) -> Self {
        Self {
            worst_power_slack: r.worst_power_slack(),
            worst_fronthaul_slack: r.worst_fronthaul_slack(),
            association_violations: r.total_association_violations(),
        }
    }

    fn over_frames(frames: &[FrameOutcome]) -> Self {
        frames
            .iter()
            .map(|f| Self::from_report(&f.constraints))
            .reduce(|a, b| Self {
                worst_power_slack: a.worst_power_slack.min(b.worst_power_slack),
                worst_fronthaul_slack: a.worst_fronthaul_slack.min(b.worst_fronthaul_slack),
                association_violations: a.association_violations.max(b.association_violations),
            })
            .expect("at least one frame")
    }

    pub fn within(&self, tol: f64) -> bool {
        self.worst_power_slack >= -tol && self.worst_fronthaul_slack >= -tol && self.association_violations == 0
    }
}

/// What one algorithm achieved on one drop.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Energy efficiency, bits/J.
    pub ee: f64,
    pub sum_rate_bps: f64,
    pub power_w: f64,
    /// Served rate per user, bits/s/Hz.
    pub user_rates: Vec<f64>,
    pub active_faps: usize,
    pub served_users: usize,
    pub residuals: Residuals,
    pub iterations: usize,
    pub flags: Flags,
}

impl Metrics {
    pub fn ee_mbit_per_j(&self) -> f64 {
        self.ee / 1e6
    }
}

#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    pub result: std::result::Result<Metrics, String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlSummary {
    pub trace: Vec<AlIteration>,
    pub kkt_reached: bool,
    pub stabilized: bool,
}

/// Audit record of the heuristic's decisions on one drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicTrace {
    pub users: usize,
    pub sigma_e2: f64,
    pub drop: usize,
    /// Phase-I serving F-AP per user.
    pub association: Vec<Option<usize>>,
    pub reweights: usize,
    pub converged: bool,
    pub released: usize,
    pub greedy: GreedyOutcome,
    pub frame_power: Vec<PowerBreakdown>,
}

#[derive(Debug, Clone)]
pub struct DropReport {
    pub users: usize,
    pub sigma_e2: f64,
    pub drop: usize,
    pub runs: Vec<AlgorithmRun>,
    pub al: Option<AlSummary>,
    pub heuristic_trace: Option<HeuristicTrace>,
}

impl DropReport {
    pub fn metrics(&self, algorithm: Algorithm) -> Option<&Metrics> {
        self.runs
            .iter()
            .find(|r| r.algorithm == algorithm)
            .and_then(|r| r.result.as_ref().ok())
    }

    /// Reported solutions that are neither within tolerance nor flagged,
    /// and any double association outside the AL solver.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for run in &self.runs {
            let Ok(m) = &run.result else { continue };
            let tag = format!("K={} sigma_e2={} drop={} {}", self.users, self.sigma_e2, self.drop, run.algorithm);
            if !m.residuals.within(FEASIBILITY_TOL) && !m.flags.infeasible {
                out.push(format!("{tag}: constraint residuals {:?} without infeasible flag", m.residuals));
            }
            if run.algorithm != Algorithm::Al && m.residuals.association_violations > 0 {
                out.push(format!("{tag}: {} users served by several F-APs", m.residuals.association_violations));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Campaign {
    pub config: ExperimentConfig,
    /// Ordered by user count, then CSI error, then drop, as configured.
    pub reports: Vec<DropReport>,
}

impl Campaign {
    pub fn violations(&self) -> Vec<String> {
        self.reports.iter().flat_map(DropReport::violations).collect()
    }
}

/// Seed of one drop; every CSI-error level of the drop shares it, so the
/// perfect channels are identical across levels.
pub fn drop_seed(config: &ExperimentConfig, users: usize, drop: usize) -> RngSeed {
    RngSeed::new(config.seed).derive(&[users as u64, drop as u64])
}

fn served(active: &ActiveSet) -> usize {
    active.served_users()
}

fn baseline_metrics(out: &BaselineOutcome, params_bw: f64, iterations: usize) -> Metrics {
    Metrics {
        ee: out.ee,
        sum_rate_bps: params_bw * out.mean_tau,
        power_w: out.mean_power,
        user_rates: out.user_rates.clone(),
        active_faps: out.active.active_count(),
        served_users: served(&out.active),
        residuals: Residuals::over_frames(&out.frames),
        iterations,
        flags: out.flags,
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> (std::result::Result<T, String>, f64) {
    let t = Instant::now();
    let r = f().map_err(|e| e.to_string());
    (r, t.elapsed().as_secs_f64())
}

struct Shared<'a> {
    config: &'a ExperimentConfig,
    topo: &'a NetworkTopology,
}

impl Shared<'_> {
    fn al(&self, frames: &[ChannelSet]) -> (AlgorithmRun, Option<AlSummary>) {
        let cfg = self.config;
        let mut summary = None;
        let (result, wall) = timed(|| {
            let out = run_al(self.topo, &frames[0], &cfg.power, &cfg.al, CsiView::Perfect)?;
            let eval = evaluate(self.topo, &out.beamformer, &out.active, &frames[0], &cfg.power, CsiView::Perfect)?;
            let report = check_constraints(&out.beamformer, &out.active, &frames[0], self.topo, &cfg.power, CsiView::Perfect)?;
            summary = Some(AlSummary {
                trace: out.trace.clone(),
                kkt_reached: out.kkt_reached,
                stabilized: out.stabilized(5, 1e-3),
            });
            Ok(Metrics {
                ee: eval.global_ee(&cfg.power),
                sum_rate_bps: cfg.power.bandwidth_hz * eval.tau,
                power_w: eval.power,
                user_rates: (0..self.topo.num_users()).map(|k| eval.served_rate(&out.active, k)).collect(),
                active_faps: out.active.active_count(),
                served_users: served(&out.active),
                residuals: Residuals::from_report(&report),
                iterations: out.outer_iterations(),
                flags: out.flags,
            })
        });
        (
            AlgorithmRun {
                algorithm: Algorithm::Al,
                result,
                wall_time_s: wall,
            },
            summary,
        )
    }
}

fn run_level(
    shared: &Shared<'_>,
    users: usize,
    drop: usize,
    sigma_e2: f64,
    frames: &[ChannelSet],
    ref_ee_run: Option<&AlgorithmRun>,
) -> DropReport {
    let cfg = shared.config;
    let topo = shared.topo;
    let params = &cfg.power;
    let mut runs = Vec::new();
    let mut al = None;
    let mut heuristic_trace = None;

    let needs_phase1 = cfg.runs(Algorithm::Heuristic) || cfg.runs(Algorithm::RefSr);
    let (phase1, phase1_time): (Option<AssociationOutcome>, f64) = if needs_phase1 {
        let t = Instant::now();
        let a = associate_users(topo, &frames[0], params, &cfg.reweight);
        (Some(a), t.elapsed().as_secs_f64())
    } else {
        (None, 0.0)
    };

    for &algorithm in &cfg.algorithms {
        let run = match algorithm {
            Algorithm::Al => {
                let (run, summary) = shared.al(frames);
                al = summary;
                run
            }
            Algorithm::Heuristic => {
                let assoc = phase1.clone().expect("phase I computed");
                let (result, wall) = timed(|| {
                    let h = run_heuristic_from(topo, frames, params, assoc)?;
                    heuristic_trace = Some(HeuristicTrace {
                        users,
                        sigma_e2,
                        drop,
                        association: h.association.active.serving_map().to_vec(),
                        reweights: h.association.reweights,
                        converged: h.association.converged,
                        released: h.association.released,
                        greedy: h.greedy.clone(),
                        frame_power: h.frames.iter().map(|f| f.evaluation.breakdown.clone()).collect(),
                    });
                    Ok(Metrics {
                        ee: h.ee,
                        sum_rate_bps: params.bandwidth_hz * h.mean_tau,
                        power_w: h.power,
                        user_rates: h.user_rates.clone(),
                        active_faps: h.active.active_count(),
                        served_users: served(&h.active),
                        residuals: Residuals::over_frames(&h.frames),
                        iterations: h.association.reweights,
                        flags: h.flags,
                    })
                });
                AlgorithmRun {
                    algorithm,
                    result,
                    wall_time_s: wall + phase1_time,
                }
            }
            Algorithm::RefEe => ref_ee_run.cloned().expect("ref_ee computed per drop"),
            Algorithm::RefSr => {
                let assoc = phase1.as_ref().expect("phase I computed");
                let (result, wall) = timed(|| {
                    let out = ref_sr(topo, frames, params, assoc)?;
                    Ok(baseline_metrics(&out, params.bandwidth_hz, assoc.reweights))
                });
                AlgorithmRun {
                    algorithm,
                    result,
                    wall_time_s: wall + phase1_time,
                }
            }
        };
        runs.push(run);
    }
    DropReport {
        users,
        sigma_e2,
        drop,
        runs,
        al,
        heuristic_trace,
    }
}

fn failed_level(cfg: &ExperimentConfig, users: usize, drop: usize, sigma_e2: f64, err: &Error) -> DropReport {
    DropReport {
        users,
        sigma_e2,
        drop,
        runs: cfg
            .algorithms
            .iter()
            .map(|&algorithm| AlgorithmRun {
                algorithm,
                result: Err(err.to_string()),
                wall_time_s: 0.0,
            })
            .collect(),
        al: None,
        heuristic_trace: None,
    }
}

/// Every CSI-error level of one drop, on one topology and one set of
/// perfect channels.
pub fn run_drop(config: &ExperimentConfig, users: usize, drop: usize) -> Vec<DropReport> {
    let seed = drop_seed(config, users, drop);
    let topo = match generate_topology(&config.scenario.topology(users), seed) {
        Ok(t) => t,
        Err(e) => {
            return config
                .sigma_e2
                .iter()
                .map(|&s| failed_level(config, users, drop, s, &e))
                .collect()
        }
    };
    let shared = Shared { config, topo: &topo };

    // Ref. EE never looks at the cloud view, so one evaluation serves
    // every CSI-error level.
    let ref_ee_run = config.runs(Algorithm::RefEe).then(|| {
        let (result, wall) = timed(|| {
            let frames = generate_frames(&topo, &config.channel, 0.0, seed, config.frames)?;
            let out = ref_ee(&topo, &frames, &config.power, &config.ref_ee)?;
            Ok(baseline_metrics(&out, config.power.bandwidth_hz, 0))
        });
        AlgorithmRun {
            algorithm: Algorithm::RefEe,
            result,
            wall_time_s: wall,
        }
    });

    config
        .sigma_e2
        .iter()
        .map(|&sigma| match generate_frames(&topo, &config.channel, sigma, seed, config.frames) {
            Ok(frames) => run_level(&shared, users, drop, sigma, &frames, ref_ee_run.as_ref()),
            Err(e) => failed_level(config, users, drop, sigma, &e),
        })
        .collect()
}

/// Runs every (user count, drop) pair in parallel, all algorithms on the
/// same realization, and merges the results in configuration order.
pub fn run_campaign(config: &ExperimentConfig) -> Result<Campaign> {
    config.validate()?;
    let tasks: Vec<(usize, usize)> = config
        .users
        .iter()
        .flat_map(|&k| (0..config.drops).map(move |d| (k, d)))
        .collect();
    let per_task: Vec<Vec<DropReport>> = tasks.par_iter().map(|&(k, d)| run_drop(config, k, d)).collect();

    let mut reports = Vec::with_capacity(tasks.len() * config.sigma_e2.len());
    for (ui, _) in config.users.iter().enumerate() {
        for si in 0..config.sigma_e2.len() {
            for d in 0..config.drops {
                let task = per_task[ui * config.drops + d][si].clone();
                reports.push(task);
            }
        }
    }
    Ok(Campaign {
        config: config.clone(),
        reports,
    })
}
