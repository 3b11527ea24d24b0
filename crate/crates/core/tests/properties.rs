use fran_ee::baselines::{ref_ee_association, ref_sr, RefEeParams};
use fran_ee::channel::{generate_frames, ChannelModel, CsiView};
use fran_ee::harness::{active_fap_histogram, aggregate_cdf, percentile};
use fran_ee::heuristic::{associate_users, greedy_deactivate, slnr_beamform, ReweightOptions};
use fran_ee::metrics::{check_constraints, evaluate};
use fran_ee::power::{averaged_heuristic_power, total_power};
use fran_ee::topology::{generate_topology, FApClass, TopologyConfig};
use fran_ee::{ActiveSet, Beamformer, ChannelSet, NetworkTopology, PowerParams, RngSeed};
use num_complex::Complex64;
use proptest::prelude::*;

fn drop_of(users: usize, seed: u64, sigma: f64, frames: usize) -> (NetworkTopology, Vec<ChannelSet>) {
    let s = RngSeed::new(seed);
    let topo = generate_topology(&TopologyConfig::small(users), s).unwrap();
    let ch = generate_frames(&topo, &ChannelModel::default(), sigma, s, frames).unwrap();
    (topo, ch)
}

fn strongest(topo: &NetworkTopology, ch: &ChannelSet) -> ActiveSet {
    let serving = (0..topo.num_users())
        .map(|k| {
            (0..topo.num_faps()).max_by(|&a, &b| {
                ch.link_gain(CsiView::Perfect, a, k)
                    .total_cmp(&ch.link_gain(CsiView::Perfect, b, k))
            })
        })
        .collect();
    ActiveSet::new(vec![true; topo.num_faps()], serving).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_seed_same_drop(seed in any::<u64>(), users in 1usize..12, sigma in 0.0f64..1.0) {
        let (t1, c1) = drop_of(users, seed, sigma, 2);
        let (t2, c2) = drop_of(users, seed, sigma, 2);
        prop_assert_eq!(t1, t2);
        for (a, b) in c1.iter().zip(&c2) {
            prop_assert_eq!(a.raw(CsiView::Perfect), b.raw(CsiView::Perfect));
            prop_assert_eq!(a.raw(CsiView::Outdated), b.raw(CsiView::Outdated));
        }
    }

    #[test]
    fn zero_error_views_coincide(seed in any::<u64>(), users in 1usize..12) {
        let (_, ch) = drop_of(users, seed, 0.0, 3);
        for c in &ch {
            prop_assert_eq!(c.raw(CsiView::Perfect), c.raw(CsiView::Outdated));
        }
    }

    #[test]
    fn error_level_leaves_true_channels_alone(seed in any::<u64>(), sigma in 0.001f64..2.0) {
        let (_, a) = drop_of(4, seed, 0.0, 2);
        let (_, b) = drop_of(4, seed, sigma, 2);
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.raw(CsiView::Perfect), y.raw(CsiView::Perfect));
        }
    }

    #[test]
    fn path_loss_grows_with_distance(d1 in 10.0f64..2000.0, extra in 0.1f64..2000.0) {
        let m = ChannelModel::default();
        for class in [FApClass::Macro, FApClass::Pico] {
            prop_assert!(m.path_loss_db(class, d1 + extra) > m.path_loss_db(class, d1));
        }
        // Pico sites lose more at any distance.
        prop_assert!(m.path_loss_db(FApClass::Pico, d1) > m.path_loss_db(FApClass::Macro, d1));
    }

    #[test]
    fn power_decomposes_and_grows_with_radiation(seed in any::<u64>(), users in 1usize..10, scale in 0.0f64..1.0) {
        let (topo, ch) = drop_of(users, seed, 0.0, 1);
        let active = strongest(&topo, &ch[0]);
        let (w, _) = slnr_beamform(&topo, &active, &ch[0], CsiView::Perfect).unwrap();
        let p = PowerParams::default();
        let se = vec![1.0; topo.num_faps()];
        let (total, br) = total_power(&topo, &w, &active, &p, &se).unwrap();
        let sum: f64 = br.faps.iter().map(|f| f.uplink + f.circuit + f.downlink + f.wireless).sum();
        prop_assert!((total - sum).abs() <= 1e-12 * total);

        let mut quieter = w.clone();
        for r in 0..topo.num_faps() {
            quieter.scale_fap(r, scale.sqrt());
        }
        let (lower, _) = total_power(&topo, &quieter, &active, &p, &se).unwrap();
        prop_assert!(lower <= total + 1e-12 * total);

        // A one-frame period pays exactly the frame's power.
        let single = averaged_heuristic_power(&br, &br, 1).unwrap();
        prop_assert!((single - total).abs() <= 1e-12 * total);
    }

    #[test]
    fn averaged_power_never_exceeds_first_frame(seed in any::<u64>(), users in 1usize..8, t in 1usize..20) {
        let (topo, ch) = drop_of(users, seed, 0.0, 2);
        let active = strongest(&topo, &ch[0]);
        let p = PowerParams::default();
        let (w1, _) = slnr_beamform(&topo, &active, &ch[0], CsiView::Perfect).unwrap();
        let (w2, _) = slnr_beamform(&topo, &active, &ch[1], CsiView::Perfect).unwrap();
        let e1 = evaluate(&topo, &w1, &active, &ch[0], &p, CsiView::Perfect).unwrap();
        let e2 = evaluate(&topo, &w2, &active, &ch[1], &p, CsiView::Perfect).unwrap();
        let avg = averaged_heuristic_power(&e1.breakdown, &e2.breakdown, t).unwrap();
        prop_assert!(avg <= e1.power * (1.0 + 1e-12));
        prop_assert!(avg > 0.0);
    }

    #[test]
    fn slnr_spends_the_budget_exactly(seed in any::<u64>(), users in 1usize..12) {
        let (topo, ch) = drop_of(users, seed, 0.0, 1);
        let active = strongest(&topo, &ch[0]);
        let (w, _) = slnr_beamform(&topo, &active, &ch[0], CsiView::Perfect).unwrap();
        for r in 0..topo.num_faps() {
            let load = active.load(r);
            for k in 0..users {
                let expect = if active.serving(k) == Some(r) {
                    topo.faps[r].tx_power_max / load as f64
                } else {
                    0.0
                };
                prop_assert!((w.block_power(r, k) - expect).abs() <= 1e-12 * topo.faps[r].tx_power_max);
            }
        }
    }

    #[test]
    fn ref_ee_respects_capacity_and_theta(seed in any::<u64>(), users in 1usize..20, cap in 1usize..5, theta in 1usize..4) {
        let (topo, ch) = drop_of(users, seed, 0.0, 1);
        let opts = RefEeParams { theta, capacity: Some(cap) };
        let a = ref_ee_association(&topo, &ch[0], &opts);
        for r in 0..topo.num_faps() {
            prop_assert!(a.load(r) <= cap);
            prop_assert_eq!(a.is_active(r), a.load(r) >= theta);
        }
        // Served users sit on their strongest F-AP.
        for k in 0..users {
            if let Some(r) = a.serving(k) {
                for s in 0..topo.num_faps() {
                    prop_assert!(ch[0].link_gain(CsiView::Perfect, s, k) <= ch[0].link_gain(CsiView::Perfect, r, k));
                }
            }
        }
    }

    #[test]
    fn cdf_and_histogram_shapes(values in prop::collection::vec(-1e3f64..1e3, 1..50), q in 0.0f64..=1.0) {
        let cdf = aggregate_cdf(&values);
        prop_assert_eq!(cdf.len(), values.len());
        for pair in cdf.windows(2) {
            prop_assert!(pair[0].0 <= pair[1].0 && pair[0].1 < pair[1].1);
        }
        prop_assert_eq!(cdf.last().unwrap().1, 1.0);
        let p = percentile(&values, q).unwrap();
        prop_assert!(values.contains(&p));
        let below = values.iter().filter(|&&v| v <= p).count() as f64;
        prop_assert!(below / values.len() as f64 >= q);

        let counts: Vec<usize> = values.iter().map(|v| (v.abs() as usize) % 5).collect();
        let h = active_fap_histogram(&counts);
        prop_assert!((h.values().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn phase_one_and_greedy_invariants(seed in any::<u64>(), users in 1usize..10, sigma in prop::sample::select(vec![0.0, 0.1, 1.0])) {
        let (topo, ch) = drop_of(users, seed, sigma, 1);
        let p = PowerParams::default();
        let a = associate_users(&topo, &ch[0], &p, &ReweightOptions::default());
        // Local processing: no user beamed from two F-APs.
        let rep = check_constraints(&a.beamformer, &a.active, &ch[0], &topo, &p, CsiView::Outdated).unwrap();
        prop_assert_eq!(rep.total_association_violations(), 0);
        for k in 0..users {
            for r in 0..topo.num_faps() {
                if a.active.serving(k) != Some(r) {
                    prop_assert_eq!(a.beamformer.block_power(r, k), 0.0);
                }
            }
        }

        let g = greedy_deactivate(&topo, &a.beamformer, &a.active, &ch[0], &p).unwrap();
        prop_assert!(g.final_global_ee >= g.initial_global_ee);
        prop_assert!(g.active.active_count() >= 1);
        for k in 0..users {
            if let Some(r) = g.active.serving(k) {
                prop_assert!(g.active.is_active(r));
                prop_assert!(g.active.load(r) <= topo.faps[r].antennas.max(a.active.load(r)));
            }
        }
        let mut prev = g.initial_global_ee;
        for rm in &g.removals {
            prop_assert!(rm.global_ee >= prev);
            prev = rm.global_ee;
        }
    }

    #[test]
    fn ref_sr_keeps_phase_one_faps(seed in any::<u64>(), users in 1usize..10) {
        let (topo, ch) = drop_of(users, seed, 0.1, 3);
        let p = PowerParams::default();
        let a = associate_users(&topo, &ch[0], &p, &ReweightOptions::default());
        let out = ref_sr(&topo, &ch, &p, &a).unwrap();
        prop_assert_eq!(&out.active, &a.active.trimmed());
        for f in &out.frames {
            prop_assert_eq!(f.constraints.total_association_violations(), 0);
        }
    }
}

#[test]
fn idle_fap_cannot_radiate() {
    let (topo, ch) = drop_of(3, 5, 0.0, 1);
    let layout = ch[0].layout().clone();
    let mut w = Beamformer::zeros(layout, 3);
    w.set_block(1, 0, &vec![Complex64::new(1.0, 0.0); topo.faps[1].antennas]);
    let mut active = vec![true; topo.num_faps()];
    active[1] = false;
    let a = ActiveSet::new(active, vec![None; 3]).unwrap();
    assert!(total_power(&topo, &w, &a, &PowerParams::default(), &vec![0.0; topo.num_faps()]).is_err());
}
