mod common;

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

use gscm_sched::channel::{
    assemble_channel, cluster_link, draw_all_mpcs, local_clusters, mpc_amplitude, mpc_delay,
    mpc_gain, read_channel_dump, truncated_gaussian, write_channel_dump, Fading,
};
use gscm_sched::receiver::CMatrix;
use gscm_sched::rng::{substream, Stream};
use gscm_sched::scenario::CellDrop;
use gscm_sched::scheduler::{activity_sets, build_v_matrix};
use gscm_sched::{Point3, ScenarioConfig};

/// One user, one single cluster with one MPC.
fn single_path_drop(m: usize, cx: f64, cy: f64, seed: u64) -> CellDrop {
    let cfg = ScenarioConfig {
        num_users: 1,
        num_selected: 1,
        mpcs_per_cluster: 1,
        ..common::fixture_config(m)
    };
    let u = common::user(0, 150.0, 90.0, &cfg);
    let c = common::single_cluster(
        0,
        Point3::new(cx, cy, 3.25),
        Point3::new(150.0, 90.0, 0.0),
        &cfg,
    );
    CellDrop::from_parts(&cfg, seed, vec![u], vec![c])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_path_columns_follow_the_steering_vector(
        cx in -400.0f64..400.0,
        cy in 5.0f64..400.0,
        seed in any::<u64>(),
        m in 2usize..96,
    ) {
        let drop = single_path_drop(m, cx, cy, seed);
        let h = &common::ensemble(&drop, 1)[0];
        let mpcs = draw_all_mpcs(&drop);
        let cfg = &drop.cfg;
        let alpha = -2.0 * PI * cfg.antenna_spacing() / cfg.wavelength();
        let s = mpcs[0][0].azimuth.sin();
        let first = h[(0, 0)];
        for i in 0..m {
            let expected = first * Complex64::cis(alpha * i as f64 * s);
            prop_assert!((h[(i, 0)] - expected).norm() <= 1e-9 * first.norm().max(1e-300));
            prop_assert!((h[(i, 0)].norm() - first.norm()).abs() <= 1e-9 * first.norm());
        }
    }

    #[test]
    fn dump_roundtrip(m in 1usize..12, k in 1usize..12, seed in any::<u64>()) {
        let mut rng = substream(seed, Stream::Fading, &[]);
        let h = CMatrix::from_fn(m, k, |_, _| Complex64::new(rng.random(), rng.random()));
        let mut buf = Vec::new();
        write_channel_dump(&mut buf, &h, seed).unwrap();
        prop_assert_eq!(buf.len(), 40 + 16 * m * k);
        let (s, back) = read_channel_dump(buf.as_slice()).unwrap();
        prop_assert_eq!(s, seed);
        prop_assert_eq!(back, h);
    }

    #[test]
    fn generated_channels_are_finite(seed in any::<u64>()) {
        let cfg = ScenarioConfig { num_users: 20, num_antennas: 16, num_selected: 4, cell_half_side_m: 250.0, ..ScenarioConfig::default() };
        let drop = CellDrop::generate(&cfg, seed).unwrap();
        let h = &common::ensemble(&drop, 1)[0];
        prop_assert!(h.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        for k in 0..20 {
            prop_assert!(h.column(k).norm() > 0.0, "every user sees at least its own local cluster");
        }
    }
}

#[test]
fn truncated_gaussian_moments() {
    let mut rng = substream(3, Stream::Mpc, &[]);
    let n = 100_000;
    let xs: Vec<f64> = (0..n)
        .map(|_| truncated_gaussian(1.0, 2.0, &mut rng))
        .collect();
    assert!(xs.iter().all(|x| x.abs() <= 2.0));
    let std = (xs.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    // numerical second moment of the standard normal restricted to [-2, 2]
    let steps = 20_000;
    let dx = 4.0 / steps as f64;
    let (mut mass, mut second) = (0.0, 0.0);
    for i in 0..steps {
        let x = -2.0 + (i as f64 + 0.5) * dx;
        let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        mass += pdf * dx;
        second += x * x * pdf * dx;
    }
    let oracle = (second / mass).sqrt();
    assert!(
        (std - oracle).abs() < 0.02 * oracle,
        "sample {std} oracle {oracle}"
    );
}

#[test]
fn mpc_power_matches_deterministic_factor() {
    let drop = common::disjoint_pair(8);
    let cfg = &drop.cfg;
    let (user, cluster) = (&drop.users[0], &drop.clusters[0]);
    let mpcs = draw_all_mpcs(&drop);
    let link = cluster_link(cfg, &drop.bs, user, cluster).unwrap();
    let mut rng = substream(9, Stream::Fading, &[]);
    let n = 100_000;
    let mean: f64 = (0..n)
        .map(|_| {
            mpc_amplitude(cfg, &drop.bs, user, cluster, &mpcs[0][0], &mut rng)
                .unwrap()
                .norm_sqr()
        })
        .sum::<f64>()
        / n as f64;
    let expected = link.path_loss * link.vr_gain.powi(2) * link.attenuation * link.shadowing
        / cfg.mpcs_per_cluster as f64;
    assert!(
        (mean - expected).abs() < 0.02 * expected,
        "mean {mean} expected {expected}"
    );
}

#[test]
fn column_power_matches_active_cluster_budget() {
    let cfg = ScenarioConfig {
        num_users: 10,
        num_antennas: 16,
        num_selected: 2,
        cell_half_side_m: 200.0,
        ..ScenarioConfig::default()
    };
    let drop = CellDrop::generate(&cfg, 12).unwrap();
    let v = build_v_matrix(&drop).unwrap();
    let active = activity_sets(&v, cfg.activity_fraction);
    let mpcs = draw_all_mpcs(&drop);
    let users: Vec<usize> = (0..10).collect();
    let local = local_clusters(&drop);
    let n = 4000;
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let h = assemble_channel(&drop, &mpcs, &active, &users, &Fading::draw(&drop, r))
                .unwrap()
                .h;
            (0..10)
                .map(|k| h.column(k).norm_squared() / cfg.num_antennas as f64)
                .collect()
        })
        .collect();
    for k in 0..10 {
        let budget: f64 = active[k]
            .iter()
            .chain(&local[k])
            .map(|&c| {
                cluster_link(&cfg, &drop.bs, &drop.users[k], &drop.clusters[c])
                    .unwrap()
                    .power()
            })
            .sum();
        let xs: Vec<f64> = samples.iter().map(|s| s[k]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        // per-antenna power averages over MPC-pair cross terms, which only vanish in expectation
        let se = sd / (n as f64).sqrt();
        assert!(
            (mean - budget).abs() < 3.0 * se + 1e-9 * budget,
            "user {k}: mean {mean} budget {budget} se {se}"
        );
    }
}

#[test]
fn gram_converges_to_path_correlation_with_array_size() {
    let mut errors = Vec::new();
    for m in [16usize, 64, 256] {
        let drop = common::shared_pair(m);
        let cfg = &drop.cfg;
        let mpcs = draw_all_mpcs(&drop);
        let mut acc = 0.0;
        let n = 20;
        for (r, h) in common::ensemble(&drop, n).iter().enumerate() {
            let fading = Fading::draw(&drop, r as u64);
            // limit: only identical paths add coherently
            let amps: Vec<Vec<Complex64>> = drop
                .users
                .iter()
                .map(|u| {
                    let c = &drop.clusters[0];
                    let link = cluster_link(cfg, &drop.bs, u, c).unwrap();
                    mpcs[0]
                        .iter()
                        .zip(fading.cluster(0))
                        .map(|(mpc, coeff)| {
                            mpc_gain(&link, mpc_delay(mpc, c, &u.pos, &drop.bs), cfg.carrier_hz)
                                * coeff
                        })
                        .collect()
                })
                .collect();
            let limit = CMatrix::from_fn(2, 2, |a, b| {
                amps[a]
                    .iter()
                    .zip(&amps[b])
                    .map(|(x, y)| x.conj() * y)
                    .sum()
            });
            let gram = h.adjoint() * h / Complex64::from(m as f64);
            acc += (gram - &limit).norm() / limit.norm();
        }
        errors.push(acc / n as f64);
    }
    assert!(
        errors[0] > errors[1] && errors[1] > errors[2],
        "errors {errors:?}"
    );
}
