//! The smoothed energy-efficiency problem, its constraints and the augmented
//! Lagrangian with an analytic gradient.
//!
//! Beamformers are handled as flat user-major complex slices (the layout of
//! [`Beamformer`]). Gradients are returned in the same layout: the real and
//! imaginary parts of entry `i` are the partial derivatives with respect to
//! the real and imaginary parts of `w[i]`.

use std::f64::consts::LN_2;

use num_complex::Complex64;

use crate::beamformer::Beamformer;
use crate::channel::{ChannelSet, CsiView};
use crate::metrics::inner;
use crate::power::PowerParams;
use crate::topology::{AntennaLayout, NetworkTopology};

/// Objective values are scaled to Mbit/J.
const OBJECTIVE_SCALE: f64 = 1e-6;

/// `||y||^2 / (||y||^2 + delta)`.
pub fn phi(y: &[Complex64], delta: f64) -> f64 {
    let n: f64 = y.iter().map(|c| c.norm_sqr()).sum();
    n / (n + delta)
}

fn phi_of_norm(n: f64, delta: f64) -> f64 {
    n / (n + delta)
}

fn phi_slope(n: f64, delta: f64) -> f64 {
    delta / ((n + delta) * (n + delta))
}

/// Lagrange multipliers of the power, fronthaul and association families.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub power: Vec<f64>,
    pub fronthaul: Vec<f64>,
    pub association: Vec<f64>,
}

impl Multipliers {
    pub fn zeros(faps: usize, users: usize) -> Self {
        Self {
            power: vec![0.0; faps],
            fronthaul: vec![0.0; faps],
            association: vec![0.0; users],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.power.iter().chain(&self.fronthaul).chain(&self.association)
    }
}

/// Scaled constraint functions, feasible when all are `<= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintValues {
    /// `(P_w,r - P_r_max) / P_r_max`.
    pub power: Vec<f64>,
    /// `(B * sum_k R_k Phi(w_rk) - C_r) / C_r`.
    pub fronthaul: Vec<f64>,
    /// `sum_r Phi(w_rk) - 1`.
    pub association: Vec<f64>,
}

impl ConstraintValues {
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.power.iter().chain(&self.fronthaul).chain(&self.association)
    }

    /// `max(0, max g)`.
    pub fn max_violation(&self) -> f64 {
        self.iter().fold(0.0, |m, &g| m.max(g))
    }
}

/// Everything the objective and gradient share at one point.
struct Point {
    /// `a[k * K + j] = h_k^H w_j` on noise-normalized channels.
    a: Vec<Complex64>,
    total: Vec<f64>,
    interference: Vec<f64>,
    rates: Vec<f64>,
    /// `||w_rk||^2`, indexed `r * K + k`.
    block: Vec<f64>,
    fap: Vec<f64>,
    phi_block: Vec<f64>,
    phi_fap: Vec<f64>,
    downlink: Vec<f64>,
    numerator: f64,
    denominator: f64,
}

/// Smoothed problem data for one channel realization.
#[derive(Debug, Clone)]
pub struct SmoothedProblem {
    layout: AntennaLayout,
    users: usize,
    /// Channels divided by the noise standard deviation, user-major.
    h: Vec<Complex64>,
    delta: f64,
    p_max: Vec<f64>,
    capacity: Vec<f64>,
    circuit: Vec<f64>,
    uplink_coeff: f64,
    p_fix: f64,
    bandwidth: f64,
    p_td: f64,
}

impl SmoothedProblem {
    pub fn new(
        topo: &NetworkTopology,
        ch: &ChannelSet,
        view: CsiView,
        params: &PowerParams,
        delta: f64,
    ) -> Self {
        let scale = 1.0 / ch.noise_power().sqrt();
        Self {
            layout: ch.layout().clone(),
            users: ch.num_users(),
            h: ch.raw(view).iter().map(|c| c * scale).collect(),
            delta,
            p_max: topo.faps.iter().map(|f| f.tx_power_max).collect(),
            capacity: topo.faps.iter().map(|f| f.fronthaul_capacity).collect(),
            circuit: topo.faps.iter().map(|f| params.circuit_power(f.antennas)).collect(),
            uplink_coeff: params.uplink_coefficient(),
            p_fix: params.p_fix,
            bandwidth: params.bandwidth_hz,
            p_td: params.p_td,
        }
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

    /// Number of complex unknowns, `M * K`.
    pub fn dim(&self) -> usize {
        self.layout.total() * self.users
    }

    fn channel(&self, k: usize) -> &[Complex64] {
        let m = self.layout.total();
        &self.h[k * m..(k + 1) * m]
    }

    fn block<'w>(&self, w: &'w [Complex64], r: usize, k: usize) -> &'w [Complex64] {
        let m = self.layout.total();
        let range = self.layout.range(r);
        &w[k * m + range.start..k * m + range.end]
    }

    fn point(&self, w: &[Complex64]) -> Point {
        let (faps, users, m) = (self.num_faps(), self.users, self.layout.total());
        assert_eq!(w.len(), m * users, "beamformer dimension mismatch");
        let mut a = vec![Complex64::new(0.0, 0.0); users * users];
        let mut total = vec![0.0; users];
        let mut interference = vec![0.0; users];
        let mut rates = vec![0.0; users];
        for k in 0..users {
            let hk = self.channel(k);
            let mut t = 1.0;
            for j in 0..users {
                let v = inner(hk, &w[j * m..(j + 1) * m]);
                a[k * users + j] = v;
                t += v.norm_sqr();
            }
            let i = t - a[k * users + k].norm_sqr();
            total[k] = t;
            interference[k] = i;
            rates[k] = (t / i).log2();
        }
        let mut block = vec![0.0; faps * users];
        let mut fap = vec![0.0; faps];
        let mut phi_block = vec![0.0; faps * users];
        let mut phi_fap = vec![0.0; faps];
        let mut downlink = vec![0.0; faps];
        let mut denominator = 0.0;
        for r in 0..faps {
            let mut smoothed_users = 0.0;
            let mut smoothed_se = 0.0;
            for k in 0..users {
                let p: f64 = self.block(w, r, k).iter().map(|c| c.norm_sqr()).sum();
                let ph = phi_of_norm(p, self.delta);
                block[r * users + k] = p;
                phi_block[r * users + k] = ph;
                fap[r] += p;
                smoothed_users += ph;
                smoothed_se += rates[k] * ph;
            }
            phi_fap[r] = phi_of_norm(fap[r], self.delta);
            downlink[r] = self.p_fix + self.bandwidth * self.p_td * smoothed_se;
            let uplink = self.p_fix + self.uplink_coeff * self.layout.antennas(r) as f64 * smoothed_users;
            denominator += uplink + self.circuit[r] + (downlink[r] + fap[r]) * phi_fap[r];
        }
        let numerator = self.bandwidth * rates.iter().sum::<f64>();
        Point {
            a,
            total,
            interference,
            rates,
            block,
            fap,
            phi_block,
            phi_fap,
            downlink,
            numerator,
            denominator,
        }
    }

    fn objective_at(&self, pt: &Point) -> f64 {
        -OBJECTIVE_SCALE * pt.numerator / pt.denominator
    }

    fn constraints_at(&self, pt: &Point) -> ConstraintValues {
        let (faps, users) = (self.num_faps(), self.users);
        let power = (0..faps).map(|r| (pt.fap[r] - self.p_max[r]) / self.p_max[r]).collect();
        let fronthaul = (0..faps)
            .map(|r| {
                let load: f64 = (0..users).map(|k| pt.rates[k] * pt.phi_block[r * users + k]).sum();
                (self.bandwidth * load - self.capacity[r]) / self.capacity[r]
            })
            .collect();
        let association = (0..users)
            .map(|k| (0..faps).map(|r| pt.phi_block[r * users + k]).sum::<f64>() - 1.0)
            .collect();
        ConstraintValues {
            power,
            fronthaul,
            association,
        }
    }

    /// `f(w)`: the negated smoothed energy efficiency in Mbit/J.
    pub fn objective(&self, w: &[Complex64]) -> f64 {
        self.objective_at(&self.point(w))
    }

    pub fn constraints(&self, w: &[Complex64]) -> ConstraintValues {
        self.constraints_at(&self.point(w))
    }

    /// Smoothed rates in bits/s/Hz on the problem's CSI view.
    pub fn rates(&self, w: &[Complex64]) -> Vec<f64> {
        self.point(w).rates
    }

    /// `f(w) + rho/2 * sum max(g + mu/rho, 0)^2`.
    pub fn lagrangian(&self, w: &[Complex64], mu: &Multipliers, rho: f64) -> f64 {
        let pt = self.point(w);
        let g = self.constraints_at(&pt);
        let penalty: f64 = g
            .iter()
            .zip(mu.iter())
            .map(|(g, m)| (g + m / rho).max(0.0).powi(2))
            .sum();
        self.objective_at(&pt) + 0.5 * rho * penalty
    }

    /// Value and gradient of the augmented Lagrangian.
    pub fn lagrangian_grad(&self, w: &[Complex64], mu: &Multipliers, rho: f64, grad: &mut [Complex64]) -> f64 {
        let (faps, users, m) = (self.num_faps(), self.users, self.layout.total());
        assert_eq!(grad.len(), w.len());
        let pt = self.point(w);
        let g = self.constraints_at(&pt);
        let active = |g: f64, mu: f64| rho * (g + mu / rho).max(0.0);
        let nu_power: Vec<f64> = (0..faps).map(|r| active(g.power[r], mu.power[r])).collect();
        let nu_fh: Vec<f64> = (0..faps).map(|r| active(g.fronthaul[r], mu.fronthaul[r])).collect();
        let nu_assoc: Vec<f64> = (0..users).map(|k| active(g.association[k], mu.association[k])).collect();
        let penalty: f64 = g
            .iter()
            .zip(mu.iter())
            .map(|(g, m)| (g + m / rho).max(0.0).powi(2))
            .sum();
        let value = self.objective_at(&pt) + 0.5 * rho * penalty;

        // df/dD and the direct df/dR_k.
        let d_den = OBJECTIVE_SCALE * pt.numerator / (pt.denominator * pt.denominator);
        let d_rate_direct = -OBJECTIVE_SCALE * self.bandwidth / pt.denominator;
        let bt = self.bandwidth * self.p_td;

        // Coefficients of R_k, Phi(w_rk), Phi(w_r) and P_w,r.
        let mut c_rate = vec![d_rate_direct; users];
        let mut c_block = vec![0.0; faps * users];
        let mut c_fap = vec![0.0; faps];
        let mut c_power = vec![0.0; faps];
        for r in 0..faps {
            let fh = nu_fh[r] * self.bandwidth / self.capacity[r];
            for k in 0..users {
                let ph = pt.phi_block[r * users + k];
                c_rate[k] += d_den * pt.phi_fap[r] * bt * ph + fh * ph;
                c_block[r * users + k] = d_den
                    * (self.uplink_coeff * self.layout.antennas(r) as f64 + pt.phi_fap[r] * bt * pt.rates[k])
                    + fh * pt.rates[k]
                    + nu_assoc[k];
            }
            c_fap[r] = d_den * (pt.downlink[r] + pt.fap[r]);
            c_power[r] = d_den * pt.phi_fap[r] + nu_power[r] / self.p_max[r];
        }

        grad.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        // Rate terms: G_j += (2/ln2) sum_k coef_kj a_kj h_k.
        for j in 0..users {
            let gj = &mut grad[j * m..(j + 1) * m];
            for k in 0..users {
                let coef = if k == j {
                    c_rate[k] / pt.total[k]
                } else {
                    c_rate[k] * (1.0 / pt.total[k] - 1.0 / pt.interference[k])
                };
                let s = pt.a[k * users + j] * (2.0 / LN_2 * coef);
                for (gv, hv) in gj.iter_mut().zip(self.channel(k)) {
                    *gv += hv * s;
                }
            }
        }
        // Norm terms: each is a multiple of w_rk.
        for r in 0..faps {
            let range = self.layout.range(r);
            let fap_term = c_fap[r] * phi_slope(pt.fap[r], self.delta) + c_power[r];
            for k in 0..users {
                let factor = 2.0
                    * (c_block[r * users + k] * phi_slope(pt.block[r * users + k], self.delta) + fap_term);
                let base = k * m + range.start;
                for i in 0..range.len() {
                    grad[base + i] += w[base + i] * factor;
                }
            }
        }
        value
    }

    /// Flattens a complex slice into interleaved real/imaginary parts.
    pub fn to_real(w: &[Complex64]) -> Vec<f64> {
        w.iter().flat_map(|c| [c.re, c.im]).collect()
    }

    pub fn from_real(x: &[f64]) -> Vec<Complex64> {
        x.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
    }

    pub fn to_beamformer(&self, w: Vec<Complex64>) -> Beamformer {
        Beamformer::from_vec(self.layout.clone(), self.users, w).expect("dimension checked by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{FApClass, FApConfig, Position};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn phi_values() {
        let z = [Complex64::new(0.0, 0.0); 3];
        assert_eq!(phi(&z, 0.1), 0.0);
        let y = [Complex64::new(0.1f64.sqrt(), 0.0)];
        assert!((phi(&y, 0.1) - 0.5).abs() < 1e-15);
        let y = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.54f64.sqrt())];
        assert!((phi(&y, 0.1) - 0.9).abs() < 1e-15);
    }

    fn toy(seed: u64) -> (NetworkTopology, ChannelSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let faps = vec![
            FApConfig {
                class: FApClass::Macro,
                antennas: 2,
                tx_power_max: 4.0,
                fronthaul_capacity: 60e6,
                position: Position::new(0.0, 0.0),
            },
            FApConfig {
                class: FApClass::Pico,
                antennas: 1,
                tx_power_max: 1.0,
                fronthaul_capacity: 30e6,
                position: Position::new(10.0, 0.0),
            },
        ];
        let topo = NetworkTopology::new(faps, vec![Position::new(1.0, 1.0); 2], 100.0).unwrap();
        let layout = topo.layout();
        let h: Vec<Complex64> = (0..layout.total() * 2)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 2.0)
            .collect();
        let ch = ChannelSet::from_parts(layout, 2, h.clone(), h, vec![1.0; 4], 0.5, 0.0).unwrap();
        (topo, ch)
    }

    #[test]
    fn origin_has_zero_objective_and_slack_penalties() {
        let (topo, ch) = toy(1);
        let prob = SmoothedProblem::new(&topo, &ch, CsiView::Perfect, &PowerParams::default(), 0.1);
        let w = vec![Complex64::new(0.0, 0.0); prob.dim()];
        let mu = Multipliers::zeros(2, 2);
        assert_eq!(prob.objective(&w), 0.0);
        assert_eq!(prob.lagrangian(&w, &mu, 10.0), 0.0);
        let mut g = vec![Complex64::new(1.0, 1.0); prob.dim()];
        prob.lagrangian_grad(&w, &mu, 10.0, &mut g);
        // Only the rate term survives at the origin and it is zero there too.
        assert!(g.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn vanishing_penalty_recovers_objective() {
        let (topo, ch) = toy(2);
        let prob = SmoothedProblem::new(&topo, &ch, CsiView::Perfect, &PowerParams::default(), 0.1);
        let w: Vec<Complex64> = (0..prob.dim()).map(|i| Complex64::new(i as f64 * 0.3, 1.0)).collect();
        let mu = Multipliers::zeros(2, 2);
        let f = prob.objective(&w);
        let l = prob.lagrangian(&w, &mu, 1e-12);
        assert!((l - f).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (topo, ch) = toy(3);
        let prob = SmoothedProblem::new(&topo, &ch, CsiView::Perfect, &PowerParams::default(), 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let w: Vec<Complex64> = (0..prob.dim())
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let mu = Multipliers {
                power: vec![rng.random(), rng.random()],
                fronthaul: vec![rng.random(), rng.random()],
                association: vec![rng.random(), rng.random()],
            };
            let mut g = vec![Complex64::new(0.0, 0.0); prob.dim()];
            prob.lagrangian_grad(&w, &mu, 10.0, &mut g);
            let x = SmoothedProblem::to_real(&w);
            let ga = SmoothedProblem::to_real(&g);
            let step = 1e-6;
            let mut err: f64 = 0.0;
            let mut norm: f64 = 0.0;
            for i in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += step;
                xm[i] -= step;
                let fd = (prob.lagrangian(&SmoothedProblem::from_real(&xp), &mu, 10.0)
                    - prob.lagrangian(&SmoothedProblem::from_real(&xm), &mu, 10.0))
                    / (2.0 * step);
                err += (fd - ga[i]).powi(2);
                norm += fd * fd;
            }
            assert!(err.sqrt() <= 1e-4 * norm.sqrt(), "relative error {}", err.sqrt() / norm.sqrt());
        }
    }
}
