//! Cloud-side user association by reweighted sum-rate maximization on the
//! outdated CSI, with every F-AP assumed active at full budget.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::qcqp::{Qcqp, QcqpOptions};
use crate::beamformer::{ActiveSet, Beamformer};
use crate::channel::{ChannelSet, CsiView};
use crate::metrics::inner;
use crate::power::PowerParams;
use crate::solution::Flags;
use crate::topology::NetworkTopology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReweightOptions {
    pub delta0: f64,
    /// Shrink factor applied to `delta` at every reweighting.
    pub shrink: f64,
    /// Stop once `||w_hat - w||^2 < epsilon_per_entry * K * M`, with each
    /// F-AP's blocks measured relative to its budget.
    pub epsilon_per_entry: f64,
    pub max_reweights: usize,
    /// Block-coordinate sweeps per reweighting.
    pub wmmse_iters: usize,
    pub qcqp_max_iter: usize,
}

impl Default for ReweightOptions {
    fn default() -> Self {
        Self {
            delta0: 0.1,
            shrink: 0.5,
            epsilon_per_entry: 1e-4,
            max_reweights: 30,
            wmmse_iters: 3,
            qcqp_max_iter: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AssociationOutcome {
    /// Phase-I beams, zero outside each user's serving block.
    pub beamformer: Beamformer,
    /// Every F-AP active; users without a significant beam are unserved.
    pub active: ActiveSet,
    pub reweights: usize,
    pub converged: bool,
    /// Users released because their F-AP's fronthaul was overloaded.
    pub released: usize,
    pub flags: Flags,
}

/// Working state on noise-normalized channels.
struct SumRate<'a> {
    topo: &'a NetworkTopology,
    h: Vec<Complex64>,
    m: usize,
    users: usize,
}

impl SumRate<'_> {
    fn channel(&self, k: usize) -> &[Complex64] {
        &self.h[k * self.m..(k + 1) * self.m]
    }

    fn stacked<'w>(&self, w: &'w [Complex64], k: usize) -> &'w [Complex64] {
        &w[k * self.m..(k + 1) * self.m]
    }

    /// `(a_kk, T_k, I_k)` for every user.
    fn terms(&self, w: &[Complex64]) -> Vec<(Complex64, f64, f64)> {
        (0..self.users)
            .map(|k| {
                let hk = self.channel(k);
                let mut t = 1.0;
                let mut own = Complex64::new(0.0, 0.0);
                for j in 0..self.users {
                    let a = inner(hk, self.stacked(w, j));
                    t += a.norm_sqr();
                    if j == k {
                        own = a;
                    }
                }
                (own, t, t - own.norm_sqr())
            })
            .collect()
    }

    fn rates(&self, w: &[Complex64]) -> Vec<f64> {
        self.terms(w).iter().map(|(_, t, i)| (t / i).log2()).collect()
    }

    fn block_power(&self, w: &[Complex64], r: usize, k: usize) -> f64 {
        let range = self.topo.layout().range(r);
        w[k * self.m + range.start..k * self.m + range.end]
            .iter()
            .map(|c| c.norm_sqr())
            .sum()
    }

    fn scale_block(&self, w: &mut [Complex64], r: usize, k: usize, s: f64) {
        let range = self.topo.layout().range(r);
        w[k * self.m + range.start..k * self.m + range.end]
            .iter_mut()
            .for_each(|c| *c *= s);
    }

    /// Scales users onto their reweighted constraint, then F-APs onto their
    /// budgets. Both steps only shrink, so the result is feasible.
    fn restore(&self, w: &mut [Complex64], beta: &[f64]) {
        let faps = self.topo.num_faps();
        for k in 0..self.users {
            let s: f64 = (0..faps).map(|r| beta[r * self.users + k] * self.block_power(w, r, k)).sum();
            if s > 1.0 {
                let f = 1.0 / s.sqrt();
                w[k * self.m..(k + 1) * self.m].iter_mut().for_each(|c| *c *= f);
            }
        }
        for r in 0..faps {
            let p: f64 = (0..self.users).map(|k| self.block_power(w, r, k)).sum();
            let cap = self.topo.faps[r].tx_power_max;
            if p > cap {
                let f = (cap / p).sqrt();
                for k in 0..self.users {
                    self.scale_block(w, r, k, f);
                }
            }
        }
    }

    /// Per-user argmax of block power among blocks above `eps`.
    fn serving(&self, w: &[Complex64], eps: f64) -> Vec<Option<usize>> {
        (0..self.users)
            .map(|k| {
                let mut best: Option<(usize, f64)> = None;
                for r in 0..self.topo.num_faps() {
                    let p = self.block_power(w, r, k);
                    if p > eps && best.is_none_or(|(_, bp)| p > bp) {
                        best = Some((r, p));
                    }
                }
                best.map(|(r, _)| r)
            })
            .collect()
    }

    /// One block-coordinate sweep: receivers and weights in closed form,
    /// then the convex beamformer update. Returns `None` if the convex step
    /// failed outright.
    fn sweep(&self, w: &mut Vec<Complex64>, beta: &[f64], dual: &mut Option<Vec<f64>>, opts: &ReweightOptions) -> Option<bool> {
        let m = self.m;
        let terms = self.terms(w);
        let mut a = DMatrix::<Complex64>::zeros(m, m);
        let mut b = vec![Complex64::new(0.0, 0.0); m * self.users];
        for (k, &(own, t, i)) in terms.iter().enumerate() {
            let u = own / t;
            let v = t / i;
            let hk = self.channel(k);
            let c = v * u.norm_sqr();
            if c > 0.0 {
                for p in 0..m {
                    for q in 0..m {
                        a[(p, q)] += hk[p] * hk[q].conj() * c;
                    }
                }
            }
            for p in 0..m {
                b[k * m + p] = hk[p] * (u * v);
            }
        }
        let layout = self.topo.layout();
        let p_max: Vec<f64> = self.topo.faps.iter().map(|f| f.tx_power_max).collect();
        let problem = Qcqp {
            layout: &layout,
            users: self.users,
            a: &a,
            b: &b,
            p_max: &p_max,
            beta,
        };
        let sol = problem.solve(
            dual.as_deref(),
            &QcqpOptions {
                max_iter: opts.qcqp_max_iter,
                ..QcqpOptions::default()
            },
        )?;
        if sol.w.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return None;
        }
        let mut next = sol.w;
        self.restore(&mut next, beta);
        // Exact line search on the quadratic between two feasible points.
        let d: Vec<Complex64> = next.iter().zip(w.iter()).map(|(n, o)| n - o).collect();
        let q0 = problem.value(w);
        let q1 = problem.value(&next);
        let dd = problem.value(&d) + 2.0 * (0..d.len()).map(|i| (b[i].conj() * d[i]).re).sum::<f64>();
        // q(t) = q0 + t * lin + t^2 * dd with lin = q1 - q0 - dd.
        let lin = q1 - q0 - dd;
        let t = if dd > 0.0 { (-lin / (2.0 * dd)).clamp(0.0, 1.0) } else if q1 < q0 { 1.0 } else { 0.0 };
        for (o, di) in w.iter_mut().zip(&d) {
            *o += di * t;
        }
        *dual = Some(sol.dual);
        Some(sol.converged)
    }
}

/// Equal-power matched filters from every F-AP to every user.
fn equal_power_start(topo: &NetworkTopology, ch: &ChannelSet, view: CsiView) -> Beamformer {
    let users = ch.num_users();
    let mut w = Beamformer::zeros(ch.layout().clone(), users);
    for r in 0..topo.num_faps() {
        let p = topo.faps[r].tx_power_max / users as f64;
        for k in 0..users {
            let h = ch.link(view, r, k);
            let n = h.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if n > 0.0 {
                let v: Vec<Complex64> = h.iter().map(|c| c * (p.sqrt() / n)).collect();
                w.set_block(r, k, &v);
            }
        }
    }
    w
}

/// Strongest-F-AP association with equal-power matched filters.
pub fn strongest_fap_association(topo: &NetworkTopology, ch: &ChannelSet, view: CsiView) -> (Beamformer, ActiveSet) {
    let (faps, users) = (topo.num_faps(), ch.num_users());
    let serving: Vec<Option<usize>> = (0..users)
        .map(|k| (0..faps).max_by(|&a, &b| ch.link_gain(view, a, k).total_cmp(&ch.link_gain(view, b, k))))
        .collect();
    let active = ActiveSet::new(vec![true; faps], serving).expect("all F-APs active");
    let mut w = Beamformer::zeros(ch.layout().clone(), users);
    for r in 0..faps {
        let served = active.users_of(r);
        for &k in &served {
            let p = topo.faps[r].tx_power_max / served.len() as f64;
            let h = ch.link(view, r, k);
            let n = h.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if n > 0.0 {
                let v: Vec<Complex64> = h.iter().map(|c| c * (p.sqrt() / n)).collect();
                w.set_block(r, k, &v);
            }
        }
    }
    (w, active)
}

/// Reweighted sum-rate association on the outdated view.
pub fn associate_users(
    topo: &NetworkTopology,
    ch: &ChannelSet,
    params: &PowerParams,
    opts: &ReweightOptions,
) -> AssociationOutcome {
    let view = CsiView::Outdated;
    let (faps, users) = (topo.num_faps(), topo.num_users());
    let m = topo.total_antennas();
    let scale = 1.0 / ch.noise_power().sqrt();
    let sr = SumRate {
        topo,
        h: ch.raw(view).iter().map(|c| c * scale).collect(),
        m,
        users,
    };
    let eps = topo.association_threshold();
    let stop = opts.epsilon_per_entry * (users * m) as f64;

    let mut w_hat: Vec<Complex64> = equal_power_start(topo, ch, view).as_slice().to_vec();
    let mut delta = opts.delta0;
    let mut dual: Option<Vec<f64>> = None;
    let mut flags = Flags::default();
    let mut converged = false;
    let mut reweights = 0;
    let mut released = 0;

    for _ in 0..opts.max_reweights {
        reweights += 1;
        let beta: Vec<f64> = (0..faps * users)
            .map(|i| 1.0 / (sr.block_power(&w_hat, i / users, i % users) + delta))
            .collect();
        delta *= opts.shrink;
        let mut w = w_hat.clone();
        sr.restore(&mut w, &beta);
        for _ in 0..opts.wmmse_iters {
            match sr.sweep(&mut w, &beta, &mut dual, opts) {
                Some(ok) => flags.degraded |= !ok,
                None => {
                    let (bf, active) = strongest_fap_association(topo, ch, view);
                    flags.fallback = true;
                    return AssociationOutcome {
                        beamformer: bf,
                        active,
                        reweights,
                        converged: false,
                        released,
                        flags,
                    };
                }
            }
        }

        // Release the weakest users of fronthaul-overloaded F-APs, keeping
        // at least one; power back-off later handles the rest.
        let serving = sr.serving(&w, eps);
        for r in 0..faps {
            let mut members: Vec<usize> = (0..users).filter(|&k| serving[k] == Some(r)).collect();
            loop {
                let rates = sr.rates(&w);
                let load: f64 = members.iter().map(|&k| rates[k]).sum::<f64>() * params.bandwidth_hz;
                if load <= topo.faps[r].fronthaul_capacity || members.len() <= 1 {
                    break;
                }
                let (pos, &k) = members
                    .iter()
                    .enumerate()
                    .min_by(|a, b| rates[*a.1].total_cmp(&rates[*b.1]))
                    .expect("non-empty");
                sr.scale_block(&mut w, r, k, 0.0);
                members.remove(pos);
                released += 1;
            }
        }

        let diff: f64 = (0..faps)
            .map(|r| {
                let range = topo.layout().range(r);
                let d: f64 = (0..users)
                    .flat_map(|k| range.clone().map(move |i| k * m + i))
                    .map(|i| (w[i] - w_hat[i]).norm_sqr())
                    .sum();
                d / topo.faps[r].tx_power_max
            })
            .sum();
        w_hat = w;
        if diff < stop {
            converged = true;
            break;
        }
    }

    let serving = sr.serving(&w_hat, eps);
    let active = ActiveSet::new(vec![true; faps], serving).expect("all F-APs active");
    let mut beamformer = Beamformer::from_vec(ch.layout().clone(), users, w_hat).expect("dimensions match");
    beamformer.restrict_to(&active);
    AssociationOutcome {
        beamformer,
        active,
        reweights,
        converged,
        released,
        flags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{AntennaLayout, FApClass, FApConfig, Position};

    fn fap(class: FApClass, antennas: usize, p: f64, x: f64) -> FApConfig {
        FApConfig {
            class,
            antennas,
            tx_power_max: p,
            fronthaul_capacity: 690e6,
            position: Position::new(x, 0.0),
        }
    }

    #[test]
    fn single_link() {
        let topo = NetworkTopology::new(vec![fap(FApClass::Macro, 2, 20.0, 0.0)], vec![Position::new(10.0, 0.0)], 100.0).unwrap();
        let layout = AntennaLayout::new(vec![2]);
        let h = vec![Complex64::new(1e-6, 0.0), Complex64::new(0.0, 2e-6)];
        let ch = ChannelSet::from_parts(layout, 1, h.clone(), h, vec![1e-12], 1e-13, 0.0).unwrap();
        let out = associate_users(&topo, &ch, &PowerParams::default(), &ReweightOptions::default());
        assert_eq!(out.active.serving(0), Some(0));
        assert_eq!(out.active.active_count(), 1);
    }

    #[test]
    fn asymmetric_pair_goes_to_strong_faps() {
        let topo = NetworkTopology::new(
            vec![fap(FApClass::Pico, 2, 1.0, -100.0), fap(FApClass::Pico, 2, 1.0, 100.0)],
            vec![Position::new(-90.0, 0.0), Position::new(90.0, 0.0)],
            200.0,
        )
        .unwrap();
        let layout = AntennaLayout::new(vec![2, 2]);
        let strong = 1e-5;
        let weak = 1e-8;
        // User 0 near F-AP 0, user 1 near F-AP 1.
        let h = vec![
            Complex64::new(strong, 0.0),
            Complex64::new(0.0, strong),
            Complex64::new(weak, 0.0),
            Complex64::new(weak, weak),
            Complex64::new(weak, 0.0),
            Complex64::new(0.0, -weak),
            Complex64::new(-strong, 0.0),
            Complex64::new(strong, strong),
        ];
        let ch = ChannelSet::from_parts(layout, 2, h.clone(), h, vec![1.0; 4], 1e-13, 0.0).unwrap();
        let out = associate_users(&topo, &ch, &PowerParams::default(), &ReweightOptions::default());
        assert_eq!(out.active.serving(0), Some(0));
        assert_eq!(out.active.serving(1), Some(1));
        for k in 0..2 {
            let nonzero = (0..2).filter(|&r| out.beamformer.block_power(r, k) > topo.association_threshold()).count();
            assert!(nonzero <= 1);
        }
    }
}
