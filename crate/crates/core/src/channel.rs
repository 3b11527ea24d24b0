//! Channel realizations: path loss, log-normal shadowing, Rayleigh fading and
//! the cloud's outdated view of the channel.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{RngSeed, Stream};
use crate::topology::{AntennaLayout, FApClass, NetworkTopology};

/// Which channel knowledge an evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsiView {
    /// True channel `h_rk`.
    Perfect,
    /// The cloud's delayed estimate `h~_rk = h_rk + e_rk`.
    Outdated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModel {
    pub noise_psd_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
    pub shadowing_std_db: f64,
    pub min_distance_m: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            noise_psd_dbm_per_hz: -169.0,
            bandwidth_hz: 10e6,
            shadowing_std_db: 8.0,
            min_distance_m: 10.0,
        }
    }
}

impl ChannelModel {
    pub fn noise_power(&self) -> f64 {
        10f64.powf((self.noise_psd_dbm_per_hz - 30.0) / 10.0) * self.bandwidth_hz
    }

    /// Distance-dependent path loss in dB (3GPP macro / pico laws).
    pub fn path_loss_db(&self, class: FApClass, distance_m: f64) -> f64 {
        let d_km = distance_m.max(self.min_distance_m) / 1000.0;
        match class {
            FApClass::Macro => 128.1 + 37.6 * d_km.log10(),
            FApClass::Pico => 140.7 + 36.7 * d_km.log10(),
        }
    }
}

/// Perfect and outdated channel vectors for every (F-AP, user) pair.
///
/// Vectors are stored user-major: the stacked channel `h_k` of user `k`
/// occupies `[k*M, (k+1)*M)` and the block of F-AP `r` within it follows the
/// [`AntennaLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    layout: AntennaLayout,
    users: usize,
    perfect: Vec<Complex64>,
    outdated: Vec<Complex64>,
    large_scale: Vec<f64>,
    noise_power: f64,
    error_variance: f64,
}

impl ChannelSet {
    pub fn from_parts(
        layout: AntennaLayout,
        users: usize,
        perfect: Vec<Complex64>,
        outdated: Vec<Complex64>,
        large_scale: Vec<f64>,
        noise_power: f64,
        error_variance: f64,
    ) -> Result<Self> {
        let n = users * layout.total();
        if perfect.len() != n || outdated.len() != n {
            return Err(Error::Dimension(format!(
                "expected {n} channel coefficients, got {} / {}",
                perfect.len(),
                outdated.len()
            )));
        }
        if large_scale.len() != users * layout.num_faps() {
            return Err(Error::Dimension("large-scale gain table size".into()));
        }
        if !(noise_power > 0.0) || !(error_variance >= 0.0) {
            return Err(Error::config("noise power must be > 0 and error variance >= 0"));
        }
        Ok(Self {
            layout,
            users,
            perfect,
            outdated,
            large_scale,
            noise_power,
            error_variance,
        })
    }

    pub fn layout(&self) -> &AntennaLayout {
        &self.layout
    }

    pub fn num_users(&self) -> usize {
        self.users
    }

    pub fn num_faps(&self) -> usize {
        self.layout.num_faps()
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn error_variance(&self) -> f64 {
        self.error_variance
    }

    fn data(&self, view: CsiView) -> &[Complex64] {
        match view {
            CsiView::Perfect => &self.perfect,
            CsiView::Outdated => &self.outdated,
        }
    }

    /// All stacked channels of one view, user-major.
    pub fn raw(&self, view: CsiView) -> &[Complex64] {
        self.data(view)
    }

    /// Stacked channel `h_k` (length `M`).
    pub fn stacked(&self, view: CsiView, k: usize) -> &[Complex64] {
        let m = self.layout.total();
        &self.data(view)[k * m..(k + 1) * m]
    }

    /// Channel `h_rk` (length `M_r`).
    pub fn link(&self, view: CsiView, r: usize, k: usize) -> &[Complex64] {
        let m = self.layout.total();
        let range = self.layout.range(r);
        &self.data(view)[k * m + range.start..k * m + range.end]
    }

    /// Path loss times shadowing, `L_rk`.
    pub fn large_scale_gain(&self, r: usize, k: usize) -> f64 {
        self.large_scale[r * self.users + k]
    }

    pub fn link_gain(&self, view: CsiView, r: usize, k: usize) -> f64 {
        self.link(view, r, k).iter().map(|c| c.norm_sqr()).sum()
    }

    /// The same channels with the outdated view replaced by the perfect one.
    pub fn with_perfect_csi(&self) -> ChannelSet {
        ChannelSet {
            outdated: self.perfect.clone(),
            error_variance: 0.0,
            ..self.clone()
        }
    }
}

fn complex_gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Large-scale gains `L_rk`, indexed `r * K + k`. Shadowing is drawn once per
/// link and shared by every frame of a drop.
pub fn large_scale_gains(topo: &NetworkTopology, model: &ChannelModel, seed: RngSeed) -> Vec<f64> {
    let k_users = topo.num_users();
    let mut rng = seed.rng(Stream::Shadowing, 0);
    let mut gains = vec![0.0; topo.num_faps() * k_users];
    for (r, fap) in topo.faps.iter().enumerate() {
        for k in 0..k_users {
            let shadow: f64 = StandardNormal.sample(&mut rng);
            let pl_db = model.path_loss_db(fap.class, topo.distance(r, k));
            gains[r * k_users + k] = 10f64.powf(-(pl_db + model.shadowing_std_db * shadow) / 10.0);
        }
    }
    gains
}

/// Channels of one frame of a drop. Small-scale fading and the CSI error are
/// redrawn per frame; the error draw is independent of `error_variance`, so
/// runs at different error levels share the same underlying randomness.
pub fn generate_frame(
    topo: &NetworkTopology,
    model: &ChannelModel,
    error_variance: f64,
    seed: RngSeed,
    frame: u64,
) -> Result<ChannelSet> {
    if !(error_variance >= 0.0) {
        return Err(Error::config("CSI error variance must be non-negative"));
    }
    let layout = topo.layout();
    let m = layout.total();
    let k_users = topo.num_users();
    let large = large_scale_gains(topo, model, seed);

    let mut fading_rng = seed.rng(Stream::Fading, frame);
    let mut error_rng = seed.rng(Stream::CsiError, frame);
    let sigma_e = error_variance.sqrt();

    let mut perfect = vec![Complex64::new(0.0, 0.0); k_users * m];
    let mut outdated = perfect.clone();
    for k in 0..k_users {
        for r in 0..layout.num_faps() {
            let amp = large[r * k_users + k].sqrt();
            for i in layout.range(r) {
                let g = complex_gaussian(&mut fading_rng);
                let e = complex_gaussian(&mut error_rng);
                perfect[k * m + i] = g * amp;
                outdated[k * m + i] = if error_variance == 0.0 {
                    perfect[k * m + i]
                } else {
                    (g + e * sigma_e) * amp
                };
            }
        }
    }
    ChannelSet::from_parts(
        layout,
        k_users,
        perfect,
        outdated,
        large,
        model.noise_power(),
        error_variance,
    )
}

/// Channels of the first frame of a drop.
pub fn generate_channels(
    topo: &NetworkTopology,
    model: &ChannelModel,
    error_variance: f64,
    seed: RngSeed,
) -> Result<ChannelSet> {
    generate_frame(topo, model, error_variance, seed, 0)
}

/// `frames` consecutive frames of one scheduling period.
pub fn generate_frames(
    topo: &NetworkTopology,
    model: &ChannelModel,
    error_variance: f64,
    seed: RngSeed,
    frames: usize,
) -> Result<Vec<ChannelSet>> {
    (0..frames as u64)
        .map(|t| generate_frame(topo, model, error_variance, seed, t))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LinkFixture {
    fap: usize,
    user: usize,
    large_scale_gain: f64,
    perfect: Vec<[f64; 2]>,
    outdated: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChannelFixture {
    antennas: Vec<usize>,
    users: usize,
    noise_power: f64,
    error_variance: f64,
    links: Vec<LinkFixture>,
}

fn pairs(v: &[Complex64]) -> Vec<[f64; 2]> {
    v.iter().map(|c| [c.re, c.im]).collect()
}

impl ChannelSet {
    /// Serializes the channel set as JSON with explicit real/imaginary pairs.
    pub fn to_fixture(&self) -> Result<String> {
        let mut links = Vec::new();
        for r in 0..self.num_faps() {
            for k in 0..self.users {
                links.push(LinkFixture {
                    fap: r,
                    user: k,
                    large_scale_gain: self.large_scale_gain(r, k),
                    perfect: pairs(self.link(CsiView::Perfect, r, k)),
                    outdated: pairs(self.link(CsiView::Outdated, r, k)),
                });
            }
        }
        let fixture = ChannelFixture {
            antennas: (0..self.num_faps()).map(|r| self.layout.antennas(r)).collect(),
            users: self.users,
            noise_power: self.noise_power,
            error_variance: self.error_variance,
            links,
        };
        Ok(serde_json::to_string_pretty(&fixture)?)
    }

    pub fn from_fixture(text: &str) -> Result<Self> {
        let fx: ChannelFixture = serde_json::from_str(text)?;
        let layout = AntennaLayout::new(fx.antennas.clone());
        let m = layout.total();
        let zero = Complex64::new(0.0, 0.0);
        let mut perfect = vec![zero; fx.users * m];
        let mut outdated = perfect.clone();
        let mut large = vec![f64::NAN; fx.users * layout.num_faps()];
        for link in &fx.links {
            if link.fap >= layout.num_faps() || link.user >= fx.users {
                return Err(Error::Dimension(format!(
                    "fixture link ({}, {}) out of range",
                    link.fap, link.user
                )));
            }
            let range = layout.range(link.fap);
            if link.perfect.len() != range.len() || link.outdated.len() != range.len() {
                return Err(Error::Dimension(format!(
                    "fixture link ({}, {}) has wrong length",
                    link.fap, link.user
                )));
            }
            let base = link.user * m + range.start;
            for (i, (p, o)) in link.perfect.iter().zip(&link.outdated).enumerate() {
                perfect[base + i] = Complex64::new(p[0], p[1]);
                outdated[base + i] = Complex64::new(o[0], o[1]);
            }
            large[link.fap * fx.users + link.user] = link.large_scale_gain;
        }
        if large.iter().any(|g| g.is_nan()) {
            return Err(Error::Dimension("fixture is missing links".into()));
        }
        ChannelSet::from_parts(
            layout,
            fx.users,
            perfect,
            outdated,
            large,
            fx.noise_power,
            fx.error_variance,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{generate_topology, FApConfig, Position, TopologyConfig};

    fn topo(users: usize, seed: u64) -> NetworkTopology {
        generate_topology(&TopologyConfig::small(users), RngSeed::new(seed)).unwrap()
    }

    #[test]
    fn zero_error_means_identical_views() {
        let t = topo(5, 1);
        let ch = generate_channels(&t, &ChannelModel::default(), 0.0, RngSeed::new(9)).unwrap();
        assert_eq!(ch.raw(CsiView::Perfect), ch.raw(CsiView::Outdated));
    }

    #[test]
    fn deterministic_given_seed() {
        let t = topo(5, 1);
        let m = ChannelModel::default();
        let a = generate_channels(&t, &m, 0.1, RngSeed::new(4)).unwrap();
        let b = generate_channels(&t, &m, 0.1, RngSeed::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn error_levels_share_fading() {
        let t = topo(5, 1);
        let m = ChannelModel::default();
        let a = generate_channels(&t, &m, 0.0, RngSeed::new(4)).unwrap();
        let b = generate_channels(&t, &m, 1.0, RngSeed::new(4)).unwrap();
        assert_eq!(a.raw(CsiView::Perfect), b.raw(CsiView::Perfect));
        assert_ne!(a.raw(CsiView::Outdated), b.raw(CsiView::Outdated));
    }

    #[test]
    fn normalized_error_has_unit_variance() {
        // Monte-Carlo moment check of the error law at sigma_e^2 = 1.
        let t = topo(10, 2);
        let m = ChannelModel::default();
        let mut sum = 0.0;
        let mut sum_re = 0.0;
        let mut n = 0usize;
        let mut frame = 0;
        while n < 10_000 {
            let ch = generate_frame(&t, &m, 1.0, RngSeed::new(77), frame).unwrap();
            for k in 0..ch.num_users() {
                for r in 0..ch.num_faps() {
                    let amp = ch.large_scale_gain(r, k).sqrt();
                    let p = ch.link(CsiView::Perfect, r, k);
                    let o = ch.link(CsiView::Outdated, r, k);
                    for (a, b) in p.iter().zip(o) {
                        let e = (b - a) / amp;
                        sum += e.norm_sqr();
                        sum_re += e.re;
                        n += 1;
                    }
                }
            }
            frame += 1;
        }
        let var = sum / n as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
        assert!((sum_re / n as f64).abs() < 0.05);
    }

    #[test]
    fn farther_users_see_weaker_channels() {
        let model = ChannelModel::default();
        for class in [FApClass::Macro, FApClass::Pico] {
            for d in [20.0, 80.0, 300.0] {
                assert!(model.path_loss_db(class, 2.0 * d) > model.path_loss_db(class, d));
            }
        }
        // The 10 m floor caps the gain.
        assert_eq!(
            model.path_loss_db(FApClass::Macro, 1.0),
            model.path_loss_db(FApClass::Macro, 10.0)
        );
    }

    #[test]
    fn doubling_distance_lowers_mean_gain() {
        let model = ChannelModel {
            shadowing_std_db: 0.0,
            ..ChannelModel::default()
        };
        let fap = FApConfig {
            class: FApClass::Macro,
            antennas: 4,
            tx_power_max: 20.0,
            fronthaul_capacity: 690e6,
            position: Position::new(0.0, 0.0),
        };
        let t = NetworkTopology::new(
            vec![fap],
            vec![Position::new(100.0, 0.0), Position::new(200.0, 0.0)],
            500.0,
        )
        .unwrap();
        let g = large_scale_gains(&t, &model, RngSeed::new(0));
        assert!(g[1] < g[0]);
    }

    #[test]
    fn noise_power_matches_psd() {
        let n = ChannelModel::default().noise_power();
        assert!((n - 1.258_925_411_794_167e-13).abs() / n < 1e-12);
    }

    #[test]
    fn fixture_round_trip() {
        let t = topo(3, 5);
        let ch = generate_channels(&t, &ChannelModel::default(), 0.1, RngSeed::new(1)).unwrap();
        let text = ch.to_fixture().unwrap();
        assert!(text.contains("\"perfect\""));
        let back = ChannelSet::from_fixture(&text).unwrap();
        assert_eq!(back, ch);
    }

    #[test]
    fn fixture_rejects_missing_links() {
        let t = topo(2, 5);
        let ch = generate_channels(&t, &ChannelModel::default(), 0.0, RngSeed::new(1)).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&ch.to_fixture().unwrap()).unwrap();
        v["links"].as_array_mut().unwrap().pop();
        assert!(ChannelSet::from_fixture(&v.to_string()).is_err());
    }
}
