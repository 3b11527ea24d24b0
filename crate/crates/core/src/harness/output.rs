use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::campaign::Campaign;
use super::config::{Algorithm, ExperimentConfig};
use super::stats::{active_fap_histogram, aggregate_cdf, mean, percentile, std_dev};
use crate::error::{Error, Result};

/// One algorithm on one drop at one CSI-error level. Empty numeric fields
/// mean the algorithm failed; `error` says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropRow {
    pub users: usize,
    pub sigma_e2: f64,
    pub drop: usize,
    pub algorithm: Algorithm,
    pub ee_mbit_per_j: Option<f64>,
    pub sum_rate_bps: Option<f64>,
    pub power_w: Option<f64>,
    pub active_faps: Option<usize>,
    pub served_users: Option<usize>,
    pub worst_power_slack: Option<f64>,
    pub worst_fronthaul_slack: Option<f64>,
    pub association_violations: Option<usize>,
    pub iterations: Option<usize>,
    pub flags: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRateRow {
    pub users: usize,
    pub sigma_e2: f64,
    pub drop: usize,
    pub algorithm: Algorithm,
    pub user: usize,
    /// bits/s/Hz.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub users: usize,
    pub sigma_e2: f64,
    pub algorithm: Algorithm,
    pub drops: usize,
    pub mean: f64,
    pub std: f64,
    pub p80: f64,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub users: usize,
    pub sigma_e2: f64,
    pub algorithm: Algorithm,
    pub value: f64,
    pub probability: f64,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub users: usize,
    pub sigma_e2: f64,
    pub algorithm: Algorithm,
    pub active_faps: usize,
    pub frequency: f64,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlTraceRow {
    pub users: usize,
    pub sigma_e2: f64,
    pub drop: usize,
    pub iteration: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub v_norm: f64,
    pub rho: f64,
    pub inner_iterations: usize,
    pub grad_inf: f64,
    pub inner_converged: bool,
    pub kkt_reached: bool,
    pub stabilized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TimingRow {
    users: usize,
    sigma_e2: f64,
    drop: usize,
    algorithm: Algorithm,
    wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub version: String,
    pub rows: usize,
    pub failed_rows: usize,
}

/// Aggregate tables the `report` command can regenerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Ee,
    RateCdf,
    ActiveFaps,
    SumRate,
}

impl Metric {
    pub fn file_suffix(self) -> &'static str {
        match self {
            Metric::Ee => "ee",
            Metric::RateCdf => "rate_cdf",
            Metric::ActiveFaps => "active_faps",
            Metric::SumRate => "sumrate",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ee" => Ok(Metric::Ee),
            "rate-cdf" => Ok(Metric::RateCdf),
            "active-faps" => Ok(Metric::ActiveFaps),
            "sumrate" => Ok(Metric::SumRate),
            other => Err(Error::config(format!("unknown metric `{other}`"))),
        }
    }
}

impl Campaign {
    pub fn drop_rows(&self) -> Vec<DropRow> {
        let mut rows = Vec::new();
        for rep in &self.reports {
            for run in &rep.runs {
                let mut row = DropRow {
                    users: rep.users,
                    sigma_e2: rep.sigma_e2,
                    drop: rep.drop,
                    algorithm: run.algorithm,
                    ee_mbit_per_j: None,
                    sum_rate_bps: None,
                    power_w: None,
                    active_faps: None,
                    served_users: None,
                    worst_power_slack: None,
                    worst_fronthaul_slack: None,
                    association_violations: None,
                    iterations: None,
                    flags: String::new(),
                    error: String::new(),
                };
                match &run.result {
                    Ok(m) => {
                        row.ee_mbit_per_j = Some(m.ee_mbit_per_j());
                        row.sum_rate_bps = Some(m.sum_rate_bps);
                        row.power_w = Some(m.power_w);
                        row.active_faps = Some(m.active_faps);
                        row.served_users = Some(m.served_users);
                        row.worst_power_slack = Some(m.residuals.worst_power_slack);
                        row.worst_fronthaul_slack = Some(m.residuals.worst_fronthaul_slack);
                        row.association_violations = Some(m.residuals.association_violations);
                        row.iterations = Some(m.iterations);
                        row.flags = m.flags.label();
                    }
                    Err(e) => row.error = e.clone(),
                }
                rows.push(row);
            }
        }
        rows
    }

    pub fn user_rate_rows(&self) -> Vec<UserRateRow> {
        let mut rows = Vec::new();
        for rep in &self.reports {
            for run in &rep.runs {
                let Ok(m) = &run.result else { continue };
                for (user, &rate) in m.user_rates.iter().enumerate() {
                    rows.push(UserRateRow {
                        users: rep.users,
                        sigma_e2: rep.sigma_e2,
                        drop: rep.drop,
                        algorithm: run.algorithm,
                        user,
                        rate,
                    });
                }
            }
        }
        rows
    }

    pub fn al_trace_rows(&self) -> Vec<AlTraceRow> {
        let mut rows = Vec::new();
        for rep in &self.reports {
            let Some(al) = &rep.al else { continue };
            for it in &al.trace {
                rows.push(AlTraceRow {
                    users: rep.users,
                    sigma_e2: rep.sigma_e2,
                    drop: rep.drop,
                    iteration: it.iteration,
                    objective: it.objective,
                    max_violation: it.max_violation,
                    v_norm: it.v_norm,
                    rho: it.rho,
                    inner_iterations: it.inner_iterations,
                    grad_inf: it.grad_inf,
                    inner_converged: it.inner_converged,
                    kkt_reached: al.kkt_reached,
                    stabilized: al.stabilized,
                });
            }
        }
        rows
    }

    /// Writes every output file into `dir` and returns the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let cfg = &self.config;
        let prefix = cfg.scenario.name();
        let drops = self.drop_rows();
        let rates = self.user_rate_rows();
        let tables = Tables::build(cfg, &drops, &rates);
        let mut written = Vec::new();
        let mut put = |name: String, text: String| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, text)?;
            written.push(path);
            Ok(())
        };

        put(format!("{prefix}_drops.csv"), to_csv(&drops)?)?;
        put(format!("{prefix}_user_rates.csv"), to_csv(&rates)?)?;
        for metric in [Metric::Ee, Metric::SumRate, Metric::ActiveFaps, Metric::RateCdf] {
            put(format!("{prefix}_{}.csv", metric.file_suffix()), tables.render(metric)?)?;
        }
        put(format!("{prefix}_ee_cdf.csv"), to_csv(&tables.ee_cdf)?)?;
        if cfg.runs(Algorithm::Al) {
            put(format!("{prefix}_al_trace.csv"), to_csv(&self.al_trace_rows())?)?;
        }
        if cfg.runs(Algorithm::Heuristic) {
            let mut text = String::new();
            for t in self.reports.iter().filter_map(|r| r.heuristic_trace.as_ref()) {
                text.push_str(&serde_json::to_string(t)?);
                text.push('\n');
            }
            put(format!("{prefix}_heuristic_trace.jsonl"), text)?;
        }
        let meta = Meta {
            config: cfg.clone(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            rows: drops.len(),
            failed_rows: drops.iter().filter(|r| !r.error.is_empty()).count(),
        };
        put(format!("{prefix}_meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;

        // Wall times vary between runs; they live apart from the
        // reproducible tables.
        let mut timing = fs::File::create(dir.join("timings.jsonl"))?;
        for rep in &self.reports {
            for run in &rep.runs {
                let row = TimingRow {
                    users: rep.users,
                    sigma_e2: rep.sigma_e2,
                    drop: rep.drop,
                    algorithm: run.algorithm,
                    wall_time_s: run.wall_time_s,
                };
                writeln!(timing, "{}", serde_json::to_string(&row)?)?;
            }
        }
        written.push(dir.join("timings.jsonl"));
        Ok(written)
    }
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::invariant(e.to_string()))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Aggregates derived from the per-drop rows alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    pub ee: Vec<SummaryRow>,
    pub sum_rate: Vec<SummaryRow>,
    pub active_faps: Vec<HistogramRow>,
    pub rate_cdf: Vec<CdfRow>,
    pub ee_cdf: Vec<CdfRow>,
}

impl Tables {
    pub fn build(cfg: &ExperimentConfig, drops: &[DropRow], rates: &[UserRateRow]) -> Self {
        let mut t = Tables {
            ee: Vec::new(),
            sum_rate: Vec::new(),
            active_faps: Vec::new(),
            rate_cdf: Vec::new(),
            ee_cdf: Vec::new(),
        };
        for &users in &cfg.users {
            for &sigma_e2 in &cfg.sigma_e2 {
                for &algorithm in &cfg.algorithms {
                    let group: Vec<&DropRow> = drops
                        .iter()
                        .filter(|r| r.users == users && r.sigma_e2 == sigma_e2 && r.algorithm == algorithm)
                        .filter(|r| r.error.is_empty())
                        .collect();
                    let complete = group.len() == cfg.drops;
                    let ee: Vec<f64> = group.iter().filter_map(|r| r.ee_mbit_per_j).collect();
                    let sr: Vec<f64> = group.iter().filter_map(|r| r.sum_rate_bps).collect();
                    let counts: Vec<usize> = group.iter().filter_map(|r| r.active_faps).collect();
                    let summary = |v: &[f64]| SummaryRow {
                        users,
                        sigma_e2,
                        algorithm,
                        drops: v.len(),
                        mean: if v.is_empty() { f64::NAN } else { mean(v) },
                        std: std_dev(v),
                        p80: percentile(v, 0.8).unwrap_or(f64::NAN),
                        complete,
                    };
                    t.ee.push(summary(&ee));
                    t.sum_rate.push(summary(&sr));
                    for (c, f) in active_fap_histogram(&counts) {
                        t.active_faps.push(HistogramRow {
                            users,
                            sigma_e2,
                            algorithm,
                            active_faps: c,
                            frequency: f,
                            complete,
                        });
                    }
                    let cdf_rows = |v: &[f64]| {
                        aggregate_cdf(v)
                            .into_iter()
                            .map(|(value, probability)| CdfRow {
                                users,
                                sigma_e2,
                                algorithm,
                                value,
                                probability,
                                complete,
                            })
                            .collect::<Vec<_>>()
                    };
                    t.ee_cdf.extend(cdf_rows(&ee));
                    let user_rates: Vec<f64> = rates
                        .iter()
                        .filter(|r| r.users == users && r.sigma_e2 == sigma_e2 && r.algorithm == algorithm)
                        .map(|r| r.rate)
                        .collect();
                    t.rate_cdf.extend(cdf_rows(&user_rates));
                }
            }
        }
        t
    }

    pub fn render(&self, metric: Metric) -> Result<String> {
        match metric {
            Metric::Ee => to_csv(&self.ee),
            Metric::SumRate => to_csv(&self.sum_rate),
            Metric::ActiveFaps => to_csv(&self.active_faps),
            Metric::RateCdf => to_csv(&self.rate_cdf),
        }
    }
}

/// Rebuilds one aggregate table from the stored per-drop files in `dir`.
pub fn report(dir: &Path, metric: Metric) -> Result<String> {
    let meta_path = find_one(dir, "_meta.json")?;
    let meta: Meta = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
    let prefix = meta.config.scenario.name();
    let drops: Vec<DropRow> = read_csv(&dir.join(format!("{prefix}_drops.csv")))?;
    let rates: Vec<UserRateRow> = if metric == Metric::RateCdf {
        read_csv(&dir.join(format!("{prefix}_user_rates.csv")))?
    } else {
        Vec::new()
    };
    Tables::build(&meta.config, &drops, &rates).render(metric)
}

fn find_one(dir: &Path, suffix: &str) -> Result<PathBuf> {
    let mut hits: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(suffix)))
        .collect();
    hits.sort();
    match hits.len() {
        1 => Ok(hits.remove(0)),
        0 => Err(Error::config(format!("no *{suffix} file in {}", dir.display()))),
        _ => Err(Error::config(format!("several *{suffix} files in {}", dir.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::campaign::run_campaign;
    use crate::harness::config::Scenario;

    #[test]
    fn tables_regenerate_from_stored_rows() {
        let cfg = ExperimentConfig {
            scenario: Scenario::Small,
            users: vec![3],
            sigma_e2: vec![0.0, 0.1],
            algorithms: vec![Algorithm::Heuristic, Algorithm::RefEe, Algorithm::RefSr],
            drops: 2,
            frames: 2,
            ..ExperimentConfig::default()
        };
        let c = run_campaign(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        c.write(dir.path()).unwrap();
        for metric in [Metric::Ee, Metric::SumRate, Metric::ActiveFaps, Metric::RateCdf] {
            let stored = fs::read_to_string(dir.path().join(format!("small_{}.csv", metric.file_suffix()))).unwrap();
            assert_eq!(report(dir.path(), metric).unwrap(), stored, "{metric:?}");
        }
        let ee: Vec<SummaryRow> = read_csv(&dir.path().join("small_ee.csv")).unwrap();
        assert_eq!(ee.len(), 6);
        assert!(ee.iter().all(|r| r.complete && r.drops == 2));
    }

    #[test]
    fn missing_drops_are_marked() {
        let cfg = ExperimentConfig {
            users: vec![3],
            sigma_e2: vec![0.0],
            algorithms: vec![Algorithm::RefEe],
            drops: 3,
            ..ExperimentConfig::default()
        };
        let row = |drop, error: &str| DropRow {
            users: 3,
            sigma_e2: 0.0,
            drop,
            algorithm: Algorithm::RefEe,
            ee_mbit_per_j: error.is_empty().then_some(1.0),
            sum_rate_bps: error.is_empty().then_some(1.0),
            power_w: None,
            active_faps: error.is_empty().then_some(2),
            served_users: None,
            worst_power_slack: None,
            worst_fronthaul_slack: None,
            association_violations: None,
            iterations: None,
            flags: String::new(),
            error: error.to_string(),
        };
        let t = Tables::build(&cfg, &[row(0, ""), row(1, "boom"), row(2, "")], &[]);
        assert_eq!(t.ee[0].drops, 2);
        assert!(!t.ee[0].complete);
        assert!(t.active_faps.iter().all(|r| !r.complete));
    }

    #[test]
    fn metric_names() {
        assert_eq!("rate-cdf".parse::<Metric>().unwrap(), Metric::RateCdf);
        assert!("power".parse::<Metric>().is_err());
    }
}
