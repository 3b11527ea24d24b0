//! Leakage-based beamforming at a single F-AP.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::beamformer::{ActiveSet, Beamformer};
use crate::channel::{ChannelSet, CsiView};
use crate::error::{Error, Result};
use crate::topology::NetworkTopology;

const POWER_ITER_CAP: usize = 100;
const POWER_ITER_TOL: f64 = 1e-13;

/// `sum_{k' != k} h_rk' h_rk'^H + (K_r sigma^2 / P_r) I`, over every user in
/// the network.
pub fn leakage_matrix(r: usize, k: usize, served: usize, ch: &ChannelSet, view: CsiView, power: f64) -> DMatrix<Complex64> {
    let m = ch.layout().antennas(r);
    let reg = served as f64 * ch.noise_power() / power;
    let mut l = DMatrix::<Complex64>::identity(m, m) * Complex64::new(reg, 0.0);
    for j in (0..ch.num_users()).filter(|&j| j != k) {
        let h = DVector::from_column_slice(ch.link(view, r, j));
        l += &h * h.adjoint();
    }
    l
}

/// Rotates `v` so that `h^H v` is real and non-negative.
fn align_phase(v: &mut DVector<Complex64>, h: &DVector<Complex64>) {
    let a = h.dotc(v);
    if a.norm() > 0.0 {
        let rot = a.conj() / a.norm();
        v.iter_mut().for_each(|x| *x *= rot);
    }
}

/// Principal eigenvector of `L^{-1} h h^H` by power iteration, unit norm.
/// `None` when the iteration does not settle within the cap.
fn power_iteration(l: &DMatrix<Complex64>, h: &DVector<Complex64>) -> Option<DVector<Complex64>> {
    let chol = l.clone().cholesky()?;
    let lh = chol.solve(h);
    let mut x = h.clone();
    let n = x.norm();
    if n == 0.0 {
        return None;
    }
    x /= Complex64::new(n, 0.0);
    for _ in 0..POWER_ITER_CAP {
        let mut y = &lh * h.dotc(&x);
        let ny = y.norm();
        if ny == 0.0 || !ny.is_finite() {
            return None;
        }
        y /= Complex64::new(ny, 0.0);
        // Compare up to phase.
        let overlap = y.dotc(&x).norm();
        x = y;
        if 1.0 - overlap <= POWER_ITER_TOL {
            return Some(x);
        }
    }
    None
}

/// Principal generalized eigenvector through the whitened Hermitian problem
/// `L^{-1/2} h h^H L^{-1/2}`, unit norm.
pub fn dense_principal(l: &DMatrix<Complex64>, h: &DVector<Complex64>) -> DVector<Complex64> {
    let eig = l.clone().symmetric_eigen();
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| Complex64::new(1.0 / e.sqrt(), 0.0)));
    let l_inv_sqrt = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.adjoint();
    let g = &l_inv_sqrt * h;
    let m = &g * g.adjoint();
    let e = m.symmetric_eigen();
    let idx = e.eigenvalues.imax();
    let mut v = &l_inv_sqrt * e.eigenvectors.column(idx);
    let n = v.norm();
    v /= Complex64::new(n, 0.0);
    v
}

/// Beam for user `k` at F-AP `r` with squared norm exactly `power / served`.
/// The flag reports use of the dense fallback.
pub fn slnr_beam(
    r: usize,
    k: usize,
    served: usize,
    ch: &ChannelSet,
    view: CsiView,
    power: f64,
) -> (Vec<Complex64>, bool) {
    let l = leakage_matrix(r, k, served, ch, view, power);
    let h = DVector::from_column_slice(ch.link(view, r, k));
    let (mut v, fallback) = match power_iteration(&l, &h) {
        Some(v) => (v, false),
        None => (dense_principal(&l, &h), true),
    };
    align_phase(&mut v, &h);
    let scale = (power / served as f64).sqrt();
    (v.iter().map(|c| c * scale).collect(), fallback)
}

/// SLNR beams at every active F-AP for its associated users, using the full
/// budget split equally. Returns the beamformer and whether any fallback
/// fired.
pub fn slnr_beamform(
    topo: &NetworkTopology,
    active: &ActiveSet,
    ch: &ChannelSet,
    view: CsiView,
) -> Result<(Beamformer, bool)> {
    if active.num_faps() != topo.num_faps() || active.num_users() != ch.num_users() {
        return Err(Error::Dimension("active set does not match the channel".into()));
    }
    let mut w = Beamformer::zeros(ch.layout().clone(), ch.num_users());
    let mut any_fallback = false;
    for r in active.active_faps() {
        let users = active.users_of(r);
        for &k in &users {
            let (beam, fb) = slnr_beam(r, k, users.len(), ch, view, topo.faps[r].tx_power_max);
            any_fallback |= fb;
            w.set_block(r, k, &beam);
        }
    }
    Ok((w, any_fallback))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{norm_sqr, slnr};
    use crate::topology::AntennaLayout;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_channel(seed: u64, antennas: usize, users: usize) -> ChannelSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = AntennaLayout::new(vec![antennas]);
        let h: Vec<Complex64> = (0..antennas * users)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        ChannelSet::from_parts(layout, users, h.clone(), h, vec![1.0; users], 0.1, 0.0).unwrap()
    }

    #[test]
    fn single_user_is_matched_filter() {
        let ch = random_channel(1, 4, 1);
        let (w, fb) = slnr_beam(0, 0, 1, &ch, CsiView::Perfect, 2.0);
        assert!(!fb);
        let h = ch.link(CsiView::Perfect, 0, 0);
        let cos = crate::metrics::inner(h, &w).norm() / (norm_sqr(h) * norm_sqr(&w)).sqrt();
        assert!((cos - 1.0).abs() < 1e-12);
        assert!((norm_sqr(&w) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn power_split_is_exact() {
        let ch = random_channel(2, 4, 3);
        for k in 0..3 {
            let (w, _) = slnr_beam(0, k, 3, &ch, CsiView::Perfect, 1.5);
            assert!((norm_sqr(&w) - 0.5).abs() <= 1e-10 * 0.5);
            let a = crate::metrics::inner(ch.link(CsiView::Perfect, 0, k), &w);
            assert!(a.im.abs() < 1e-12 && a.re >= 0.0);
        }
    }

    #[test]
    fn matches_dense_solver() {
        let ch = random_channel(3, 4, 3);
        let l = leakage_matrix(0, 1, 3, &ch, CsiView::Perfect, 3.0);
        let h = DVector::from_column_slice(ch.link(CsiView::Perfect, 0, 1));
        let mut dense = dense_principal(&l, &h);
        align_phase(&mut dense, &h);
        let (w, _) = slnr_beam(0, 1, 3, &ch, CsiView::Perfect, 3.0);
        let diff: f64 = w.iter().zip(dense.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(diff <= 1e-8, "difference {diff}");
    }

    #[test]
    fn beats_random_candidates() {
        let ch = random_channel(4, 2, 2);
        let (w, _) = slnr_beam(0, 0, 2, &ch, CsiView::Perfect, 1.0);
        let best = slnr(0, 0, &w, &ch, CsiView::Perfect);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = norm_sqr(&w);
        for _ in 0..2000 {
            let v: Vec<Complex64> = (0..2)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let s = (p / norm_sqr(&v)).sqrt();
            let v: Vec<Complex64> = v.iter().map(|c| c * s).collect();
            assert!(slnr(0, 0, &v, &ch, CsiView::Perfect) <= best * (1.0 + 1e-12));
        }
    }
}
