//! Network geometry: F-AP placement, antenna layout and user drops.

use std::f64::consts::PI;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{RngSeed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FApClass {
    Macro,
    Pico,
}

/// A 2-D position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FApConfig {
    pub class: FApClass,
    pub antennas: usize,
    /// Transmit power budget in watts.
    pub tx_power_max: f64,
    /// Fronthaul capacity in bits/s.
    pub fronthaul_capacity: f64,
    pub position: Position,
}

/// Per-F-AP antenna offsets inside a stacked vector of length `M = sum M_r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AntennaLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl AntennaLayout {
    pub fn new(sizes: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for &s in &sizes {
            offsets.push(total);
            total += s;
        }
        Self {
            sizes,
            offsets,
            total,
        }
    }

    pub fn num_faps(&self) -> usize {
        self.sizes.len()
    }

    pub fn antennas(&self, r: usize) -> usize {
        self.sizes[r]
    }

    pub fn offset(&self, r: usize) -> usize {
        self.offsets[r]
    }

    pub fn range(&self, r: usize) -> std::ops::Range<usize> {
        self.offsets[r]..self.offsets[r] + self.sizes[r]
    }

    /// Total number of transmit antennas `M`.
    pub fn total(&self) -> usize {
        self.total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub faps: Vec<FApConfig>,
    pub users: Vec<Position>,
    pub area_radius: f64,
}

impl NetworkTopology {
    pub fn new(faps: Vec<FApConfig>, users: Vec<Position>, area_radius: f64) -> Result<Self> {
        if faps.is_empty() {
            return Err(Error::config("topology needs at least one F-AP"));
        }
        if users.is_empty() {
            return Err(Error::config("topology needs at least one user"));
        }
        for (r, f) in faps.iter().enumerate() {
            if f.antennas == 0 || f.tx_power_max <= 0.0 || f.fronthaul_capacity <= 0.0 {
                return Err(Error::config(format!("F-AP {r} has a non-positive parameter")));
            }
        }
        let outside = faps
            .iter()
            .map(|f| f.position)
            .chain(users.iter().copied())
            .any(|p| p.norm() > area_radius * (1.0 + 1e-12));
        if outside {
            return Err(Error::config("a node lies outside the deployment disc"));
        }
        Ok(Self {
            faps,
            users,
            area_radius,
        })
    }

    pub fn num_faps(&self) -> usize {
        self.faps.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn total_antennas(&self) -> usize {
        self.faps.iter().map(|f| f.antennas).sum()
    }

    pub fn layout(&self) -> AntennaLayout {
        AntennaLayout::new(self.faps.iter().map(|f| f.antennas).collect())
    }

    pub fn distance(&self, r: usize, k: usize) -> f64 {
        self.faps[r].position.distance(&self.users[k])
    }

    pub fn max_tx_power(&self) -> f64 {
        self.faps
            .iter()
            .map(|f| f.tx_power_max)
            .fold(0.0, f64::max)
    }

    /// Threshold on `||w_rk||^2` above which a beam counts as non-zero.
    pub fn association_threshold(&self) -> f64 {
        1e-4 * self.max_tx_power() / self.num_users() as f64
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FApClassParams {
    pub antennas: usize,
    pub tx_power_dbm: f64,
    pub fronthaul_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyConfig {
    pub macros: usize,
    pub picos: usize,
    pub users: usize,
    pub area_radius: f64,
    #[serde(rename = "macro")]
    pub macro_class: FApClassParams,
    #[serde(rename = "pico")]
    pub pico_class: FApClassParams,
}

impl Default for FApClassParams {
    fn default() -> Self {
        Self::macro_default()
    }
}

impl FApClassParams {
    pub fn macro_default() -> Self {
        Self {
            antennas: 4,
            tx_power_dbm: 43.0,
            fronthaul_bps: 690e6,
        }
    }

    pub fn pico_default() -> Self {
        Self {
            antennas: 2,
            tx_power_dbm: 30.0,
            fronthaul_bps: 107e6,
        }
    }
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self::small(5)
    }
}

impl TopologyConfig {
    /// One macro and three picos in a 500 m disc.
    pub fn small(users: usize) -> Self {
        Self {
            macros: 1,
            picos: 3,
            users,
            area_radius: 500.0,
            macro_class: FApClassParams::macro_default(),
            pico_class: FApClassParams::pico_default(),
        }
    }

    /// Three macros and nine picos in a 1 km disc.
    pub fn large(users: usize) -> Self {
        Self {
            macros: 3,
            picos: 9,
            users,
            area_radius: 1000.0,
            macro_class: FApClassParams::macro_default(),
            pico_class: FApClassParams::pico_default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.macros + self.picos == 0 {
            return Err(Error::config("at least one F-AP is required"));
        }
        if self.users == 0 {
            return Err(Error::config("at least one user is required"));
        }
        if !(self.area_radius > 0.0) {
            return Err(Error::config("area radius must be positive"));
        }
        if self.macro_class.antennas == 0 || self.pico_class.antennas == 0 {
            return Err(Error::config("antenna counts must be positive"));
        }
        if self.macro_class.fronthaul_bps <= 0.0 || self.pico_class.fronthaul_bps <= 0.0 {
            return Err(Error::config("fronthaul capacities must be positive"));
        }
        Ok(())
    }
}

fn uniform_in_disc<R: rand::Rng>(rng: &mut R, radius: f64) -> Position {
    let rho = radius * rng.random::<f64>().sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    Position::new(rho * theta.cos(), rho * theta.sin())
}

/// Macro sites sit at the disc center (one macro) or on a ring at half the
/// radius, one per equal angular sector. Picos and users are uniform in the
/// disc.
pub fn generate_topology(config: &TopologyConfig, seed: RngSeed) -> Result<NetworkTopology> {
    config.validate()?;
    let mut rng = seed.rng(Stream::Topology, 0);
    let mut faps = Vec::with_capacity(config.macros + config.picos);

    let make = |class: FApClass, params: &FApClassParams, position: Position| FApConfig {
        class,
        antennas: params.antennas,
        tx_power_max: dbm_to_watts(params.tx_power_dbm),
        fronthaul_capacity: params.fronthaul_bps,
        position,
    };

    for i in 0..config.macros {
        let position = if config.macros == 1 {
            Position::new(0.0, 0.0)
        } else {
            let angle = PI / 2.0 + 2.0 * PI * i as f64 / config.macros as f64;
            let ring = config.area_radius / 2.0;
            Position::new(ring * angle.cos(), ring * angle.sin())
        };
        faps.push(make(FApClass::Macro, &config.macro_class, position));
    }
    for _ in 0..config.picos {
        let position = uniform_in_disc(&mut rng, config.area_radius);
        faps.push(make(FApClass::Pico, &config.pico_class, position));
    }
    let users = (0..config.users)
        .map(|_| uniform_in_disc(&mut rng, config.area_radius))
        .collect();
    NetworkTopology::new(faps, users, config.area_radius)
}
