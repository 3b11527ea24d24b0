//! Stacked beamforming vectors and the association they induce.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::topology::AntennaLayout;

/// Beamforming vectors `w_rk` for every (F-AP, user) pair, stored user-major
/// with the same layout as [`crate::channel::ChannelSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    layout: AntennaLayout,
    users: usize,
    data: Vec<Complex64>,
}

impl Beamformer {
    pub fn zeros(layout: AntennaLayout, users: usize) -> Self {
        let n = layout.total() * users;
        Self {
            layout,
            users,
            data: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_vec(layout: AntennaLayout, users: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != layout.total() * users {
            return Err(Error::Dimension(format!(
                "beamformer needs {} entries, got {}",
                layout.total() * users,
                data.len()
            )));
        }
        Ok(Self {
            layout,
            users,
            data,
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

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Stacked vector `w_k` over all F-APs.
    pub fn stacked(&self, k: usize) -> &[Complex64] {
        let m = self.layout.total();
        &self.data[k * m..(k + 1) * m]
    }

    pub fn block(&self, r: usize, k: usize) -> &[Complex64] {
        let m = self.layout.total();
        let range = self.layout.range(r);
        &self.data[k * m + range.start..k * m + range.end]
    }

    pub fn block_mut(&mut self, r: usize, k: usize) -> &mut [Complex64] {
        let m = self.layout.total();
        let range = self.layout.range(r);
        &mut self.data[k * m + range.start..k * m + range.end]
    }

    pub fn set_block(&mut self, r: usize, k: usize, v: &[Complex64]) {
        self.block_mut(r, k).copy_from_slice(v);
    }

    pub fn zero_block(&mut self, r: usize, k: usize) {
        self.block_mut(r, k)
            .iter_mut()
            .for_each(|c| *c = Complex64::new(0.0, 0.0));
    }

    /// `||w_rk||^2`.
    pub fn block_power(&self, r: usize, k: usize) -> f64 {
        self.block(r, k).iter().map(|c| c.norm_sqr()).sum()
    }

    /// `sum_k ||w_rk||^2`.
    pub fn fap_power(&self, r: usize) -> f64 {
        (0..self.users).map(|k| self.block_power(r, k)).sum()
    }

    pub fn scale_fap(&mut self, r: usize, factor: f64) {
        for k in 0..self.users {
            self.block_mut(r, k).iter_mut().for_each(|c| *c *= factor);
        }
    }

    /// Keeps only the blocks allowed by `active`, zeroing everything else.
    pub fn restrict_to(&mut self, active: &ActiveSet) {
        for k in 0..self.users {
            for r in 0..self.num_faps() {
                if active.serving(k) != Some(r) {
                    self.zero_block(r, k);
                }
            }
        }
    }
}

/// Active F-APs `R_A` and the user association `K_r`.
///
/// Each user maps to at most one F-AP, so the sets `K_r` are disjoint by
/// construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSet {
    active: Vec<bool>,
    serving: Vec<Option<usize>>,
}

impl ActiveSet {
    pub fn new(active: Vec<bool>, serving: Vec<Option<usize>>) -> Result<Self> {
        for (k, s) in serving.iter().enumerate() {
            if let Some(r) = *s {
                if r >= active.len() {
                    return Err(Error::Dimension(format!("user {k} mapped to unknown F-AP {r}")));
                }
                if !active[r] {
                    return Err(Error::invariant(format!(
                        "user {k} associated to idle F-AP {r}"
                    )));
                }
            }
        }
        Ok(Self { active, serving })
    }

    /// Nobody active, nobody served.
    pub fn empty(faps: usize, users: usize) -> Self {
        Self {
            active: vec![false; faps],
            serving: vec![None; users],
        }
    }

    /// Thresholds `||w_r||^2` for activity and takes the per-user argmax of
    /// `||w_rk||^2` over the F-APs exceeding `threshold`.
    pub fn from_beamformer(w: &Beamformer, threshold: f64) -> Self {
        let faps = w.num_faps();
        let active: Vec<bool> = (0..faps).map(|r| w.fap_power(r) > threshold).collect();
        let serving = (0..w.num_users())
            .map(|k| {
                let mut best: Option<(usize, f64)> = None;
                for (r, &on) in active.iter().enumerate() {
                    let p = w.block_power(r, k);
                    if on && p > threshold && best.is_none_or(|(_, bp)| p > bp) {
                        best = Some((r, p));
                    }
                }
                best.map(|(r, _)| r)
            })
            .collect();
        Self { active, serving }
    }

    pub fn num_faps(&self) -> usize {
        self.active.len()
    }

    pub fn num_users(&self) -> usize {
        self.serving.len()
    }

    pub fn is_active(&self, r: usize) -> bool {
        self.active[r]
    }

    pub fn active_flags(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn active_faps(&self) -> impl Iterator<Item = usize> + '_ {
        self.active
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(r, _)| r)
    }

    pub fn serving(&self, k: usize) -> Option<usize> {
        self.serving[k]
    }

    pub fn serving_map(&self) -> &[Option<usize>] {
        &self.serving
    }

    /// `K_r`, in increasing user order.
    pub fn users_of(&self, r: usize) -> Vec<usize> {
        self.serving
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Some(r))
            .map(|(k, _)| k)
            .collect()
    }

    pub fn load(&self, r: usize) -> usize {
        self.serving.iter().filter(|s| **s == Some(r)).count()
    }

    pub fn served_users(&self) -> usize {
        self.serving.iter().filter(|s| s.is_some()).count()
    }

    pub fn assign(&mut self, k: usize, r: Option<usize>) {
        if let Some(r) = r {
            self.active[r] = true;
        }
        self.serving[k] = r;
    }

    /// Turns `r` off and releases its users.
    pub fn deactivate(&mut self, r: usize) {
        self.active[r] = false;
        for s in self.serving.iter_mut() {
            if *s == Some(r) {
                *s = None;
            }
        }
    }

    /// Same association with `R_A` shrunk to the F-APs that serve somebody.
    pub fn trimmed(&self) -> ActiveSet {
        let mut out = self.clone();
        for r in 0..out.active.len() {
            if out.load(r) == 0 {
                out.active[r] = false;
            }
        }
        out
    }
}

impl serde::Serialize for ActiveSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("ActiveSet", 2)?;
        st.serialize_field("active", self.active_flags())?;
        st.serialize_field("serving", self.serving_map())?;
        st.end()
    }
}

impl<'de> serde::Deserialize<'de> for ActiveSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        struct Raw {
            active: Vec<bool>,
            serving: Vec<Option<usize>>,
        }
        let raw = <Raw as serde::Deserialize>::deserialize(d)?;
        ActiveSet::new(raw.active, raw.serving).map_err(serde::de::Error::custom)
    }
}
