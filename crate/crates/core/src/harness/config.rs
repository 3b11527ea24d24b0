use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::al::AlOptions;
use crate::baselines::RefEeParams;
use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::heuristic::ReweightOptions;
use crate::power::PowerParams;
use crate::topology::TopologyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// One macro and three picos.
    Small,
    /// Three macros and nine picos.
    Large,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Small => "small",
            Scenario::Large => "large",
        }
    }

    pub fn topology(self, users: usize) -> TopologyConfig {
        match self {
            Scenario::Small => TopologyConfig::small(users),
            Scenario::Large => TopologyConfig::large(users),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Al,
    Heuristic,
    RefEe,
    RefSr,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Al, Algorithm::Heuristic, Algorithm::RefEe, Algorithm::RefSr];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Al => "al",
            Algorithm::Heuristic => "heuristic",
            Algorithm::RefEe => "ref_ee",
            Algorithm::RefSr => "ref_sr",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub users: Vec<usize>,
    pub sigma_e2: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub drops: usize,
    /// Frames per scheduling period.
    pub frames: usize,
    pub seed: u64,
    pub output: PathBuf,
    /// Allows the AL solver on the large scenario.
    pub force: bool,
    pub power: PowerParams,
    pub channel: ChannelModel,
    pub reweight: ReweightOptions,
    pub al: AlOptions,
    pub ref_ee: RefEeParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Small,
            users: vec![5, 10],
            sigma_e2: vec![0.0],
            algorithms: vec![Algorithm::Heuristic, Algorithm::RefEe],
            drops: 100,
            frames: 10,
            seed: 1,
            output: PathBuf::from("results"),
            force: false,
            power: PowerParams::default(),
            channel: ChannelModel::default(),
            reweight: ReweightOptions::default(),
            al: AlOptions::default(),
            ref_ee: RefEeParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.drops == 0 {
            return Err(Error::config("drops must be at least 1"));
        }
        if self.frames == 0 {
            return Err(Error::config("frames must be at least 1"));
        }
        if self.users.is_empty() || self.users.contains(&0) {
            return Err(Error::config("user counts must be a non-empty list of positive integers"));
        }
        if self.sigma_e2.is_empty() || self.sigma_e2.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::config("sigma_e2 must be a non-empty list of non-negative values"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("at least one algorithm is required"));
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return Err(Error::config(format!("algorithm `{a}` listed twice")));
            }
        }
        if self.scenario == Scenario::Large && self.algorithms.contains(&Algorithm::Al) && !self.force {
            return Err(Error::config(
                "the AL solver is restricted to the small scenario; pass --force to run it anyway",
            ));
        }
        self.power.validate()?;
        self.ref_ee.validate()?;
        for &k in &self.users {
            self.scenario.topology(k).validate()?;
        }
        Ok(())
    }

    pub fn runs(&self, algorithm: Algorithm) -> bool {
        self.algorithms.contains(&algorithm)
    }
}
