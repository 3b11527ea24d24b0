//! Post-processing shared by every algorithm: power clipping, fronthaul
//! back-off and the flags a solution carries into reports.

use serde::{Deserialize, Serialize};

use crate::beamformer::{ActiveSet, Beamformer};
use crate::channel::{ChannelSet, CsiView};
use crate::metrics::{served_spectral_efficiency, user_rates};
use crate::power::PowerParams;
use crate::topology::NetworkTopology;

/// Scaled residual tolerance used to decide the infeasible flag.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Conditions a report consumer should know about.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    /// Residuals above tolerance after post-processing.
    pub infeasible: bool,
    /// An iterative routine stopped on a cap or a failed line search.
    pub degraded: bool,
    /// A fallback path replaced the regular computation.
    pub fallback: bool,
}

impl Flags {
    pub fn merge(&mut self, other: Flags) {
        self.infeasible |= other.infeasible;
        self.degraded |= other.degraded;
        self.fallback |= other.fallback;
    }

    /// Compact text form for CSV cells, e.g. `infeasible|degraded`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.infeasible {
            parts.push("infeasible");
        }
        if self.degraded {
            parts.push("degraded");
        }
        if self.fallback {
            parts.push("fallback");
        }
        parts.join("|")
    }
}

/// Scales every F-AP whose radiated power exceeds its budget back onto it.
/// Returns the largest relative excess found.
pub fn clip_power(w: &mut Beamformer, topo: &NetworkTopology) -> f64 {
    let mut worst: f64 = 0.0;
    for (r, fap) in topo.faps.iter().enumerate() {
        let p = w.fap_power(r);
        if p > fap.tx_power_max {
            worst = worst.max(p / fap.tx_power_max - 1.0);
            w.scale_fap(r, (fap.tx_power_max / p).sqrt());
        }
    }
    worst
}

const BACKOFF_MARGIN: f64 = 1e-9;
const BACKOFF_BISECTIONS: usize = 60;
const BACKOFF_SWEEPS: usize = 50;

/// Shrinks the transmit power of every F-AP whose served traffic exceeds its
/// fronthaul capacity until `B * sum_{k in K_r} R_k <= C_r`. Rates are
/// evaluated under `view`. Returns `false` if violations remain after the
/// sweep cap.
pub fn fronthaul_backoff(
    w: &mut Beamformer,
    active: &ActiveSet,
    ch: &ChannelSet,
    topo: &NetworkTopology,
    params: &PowerParams,
    view: CsiView,
) -> bool {
    let limit = |r: usize| topo.faps[r].fronthaul_capacity * (1.0 - BACKOFF_MARGIN);
    let load = |w: &Beamformer, r: usize| {
        params.bandwidth_hz * served_spectral_efficiency(active, &user_rates(w, ch, view))[r]
    };
    for _ in 0..BACKOFF_SWEEPS {
        let served = served_spectral_efficiency(active, &user_rates(w, ch, view));
        let over: Vec<usize> = (0..topo.num_faps())
            .filter(|&r| params.bandwidth_hz * served[r] > limit(r))
            .collect();
        if over.is_empty() {
            return true;
        }
        for r in over {
            let base = w.clone();
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..BACKOFF_BISECTIONS {
                let mid = 0.5 * (lo + hi);
                let mut trial = base.clone();
                trial.scale_fap(r, mid.sqrt());
                if load(&trial, r) <= limit(r) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            *w = base;
            w.scale_fap(r, lo.sqrt());
        }
    }
    let served = served_spectral_efficiency(active, &user_rates(w, ch, view));
    (0..topo.num_faps()).all(|r| params.bandwidth_hz * served[r] <= topo.faps[r].fronthaul_capacity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{AntennaLayout, FApClass, FApConfig, Position};
    use num_complex::Complex64;

    fn setup(cap: f64) -> (NetworkTopology, ChannelSet, Beamformer, ActiveSet) {
        let topo = NetworkTopology::new(
            vec![FApConfig {
                class: FApClass::Pico,
                antennas: 1,
                tx_power_max: 1.0,
                fronthaul_capacity: cap,
                position: Position::new(0.0, 0.0),
            }],
            vec![Position::new(1.0, 0.0)],
            10.0,
        )
        .unwrap();
        let layout = AntennaLayout::new(vec![1]);
        let h = vec![Complex64::new(1.0, 0.0)];
        let ch = ChannelSet::from_parts(layout.clone(), 1, h.clone(), h, vec![1.0], 1e-3, 0.0).unwrap();
        let w = Beamformer::from_vec(layout, 1, vec![Complex64::new(1.0, 0.0)]).unwrap();
        let a = ActiveSet::new(vec![true], vec![Some(0)]).unwrap();
        (topo, ch, w, a)
    }

    #[test]
    fn backoff_lands_on_capacity() {
        // Full power gives log2(1001) ~ 9.97 bits/s/Hz -> 99.7 Mbit/s.
        let (topo, ch, mut w, a) = setup(50e6);
        let p = PowerParams::default();
        assert!(fronthaul_backoff(&mut w, &a, &ch, &topo, &p, CsiView::Perfect));
        let rate = user_rates(&w, &ch, CsiView::Perfect)[0];
        assert!(p.bandwidth_hz * rate <= 50e6);
        assert!(p.bandwidth_hz * rate > 50e6 * (1.0 - 1e-6));
    }

    #[test]
    fn backoff_leaves_feasible_untouched() {
        let (topo, ch, mut w, a) = setup(1e9);
        let before = w.clone();
        assert!(fronthaul_backoff(&mut w, &a, &ch, &topo, &PowerParams::default(), CsiView::Perfect));
        assert_eq!(w, before);
    }

    #[test]
    fn clipping() {
        let (topo, _, mut w, _) = setup(1e9);
        w.scale_fap(0, 2.0);
        let excess = clip_power(&mut w, &topo);
        assert!((excess - 3.0).abs() < 1e-12);
        assert!((w.fap_power(0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flag_labels() {
        let mut f = Flags::default();
        assert_eq!(f.label(), "");
        f.merge(Flags {
            degraded: true,
            fallback: true,
            ..Flags::default()
        });
        assert_eq!(f.label(), "degraded|fallback");
    }
}
