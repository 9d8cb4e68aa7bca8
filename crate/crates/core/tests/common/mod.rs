#![allow(dead_code)]

use gscm_sched::channel::{assemble_channel, draw_all_mpcs, Fading};
use gscm_sched::receiver::CMatrix;
use gscm_sched::scenario::{
    cluster_spreads, CellDrop, Cluster, ClusterKind, Lsp, User, VisibilityRegion,
};
use gscm_sched::scheduler::{activity_sets, build_v_matrix};
use gscm_sched::{Point3, ScenarioConfig};

pub fn fixture_config(m: usize) -> ScenarioConfig {
    ScenarioConfig {
        num_users: 2,
        num_antennas: m,
        num_selected: 2,
        bs_local_cluster: false,
        apply_shadowing: false,
        ..ScenarioConfig::default()
    }
}

pub fn user(id: usize, x: f64, y: f64, cfg: &ScenarioConfig) -> User {
    User {
        id,
        pos: Point3::new(x, y, cfg.h_ms_m),
    }
}

/// Single cluster at `pos` whose visibility region is centered at `vr_center`.
pub fn single_cluster(id: usize, pos: Point3, vr_center: Point3, cfg: &ScenarioConfig) -> Cluster {
    let bs = Point3::new(0.0, 0.0, cfg.h_bs_m);
    let delay_spread = 0.2e-6;
    let (s, _) = cluster_spreads(
        ClusterKind::Single,
        pos.distance(&bs),
        0.0,
        delay_spread,
        cfg.theta_bs(),
        cfg.phi_bs(),
        cfg.theta_ms(),
    )
    .expect("valid spreads");
    let lsp = Lsp {
        delay_spread,
        angular_spread: 10.0,
        shadowing: 1.0,
    };
    let vr = VisibilityRegion::new(vr_center, cfg.vr_radius_m, cfg.vr_transition_m, id);
    Cluster::new(id, ClusterKind::Single, pos, pos, s, s, lsp, 0.0, Some(vr))
}

/// Channel ensemble of all users of `drop` over `n` fading realizations.
pub fn ensemble(drop: &CellDrop, n: u64) -> Vec<CMatrix> {
    let v = build_v_matrix(drop).expect("V");
    let active = activity_sets(&v, drop.cfg.activity_fraction);
    let mpcs = draw_all_mpcs(drop);
    let users: Vec<usize> = (0..drop.num_users()).collect();
    (0..n)
        .map(|r| {
            assemble_channel(drop, &mpcs, &active, &users, &Fading::draw(drop, r))
                .expect("channel")
                .h
        })
        .collect()
}

/// Two users each seeing only their own area cluster.
pub fn disjoint_pair(m: usize) -> CellDrop {
    let cfg = fixture_config(m);
    let users = vec![user(0, 200.0, 100.0, &cfg), user(1, -150.0, 250.0, &cfg)];
    let h = 0.5 * (cfg.h_bs_m + cfg.h_ms_m);
    let clusters = vec![
        single_cluster(
            0,
            Point3::new(120.0, 60.0, h),
            Point3::new(200.0, 100.0, 0.0),
            &cfg,
        ),
        single_cluster(
            1,
            Point3::new(-90.0, 150.0, h),
            Point3::new(-150.0, 250.0, 0.0),
            &cfg,
        ),
    ];
    CellDrop::from_parts(&cfg, 42, users, clusters)
}

/// Two users 1 cm apart inside the visibility region of one cluster.
pub fn shared_pair(m: usize) -> CellDrop {
    let cfg = fixture_config(m);
    let users = vec![user(0, 200.0, 100.0, &cfg), user(1, 200.01, 100.0, &cfg)];
    let h = 0.5 * (cfg.h_bs_m + cfg.h_ms_m);
    let clusters = vec![single_cluster(
        0,
        Point3::new(120.0, 60.0, h),
        Point3::new(200.0, 100.0, 0.0),
        &cfg,
    )];
    CellDrop::from_parts(&cfg, 43, users, clusters)
}
