//! Generate one cell drop and summarize its users and clusters.

use gscm_sched::scenario::{CellDrop, ClusterKind};
use gscm_sched::ScenarioConfig;

fn main() -> gscm_sched::Result<()> {
    let cfg = ScenarioConfig {
        num_users: 40,
        num_selected: 8,
        cell_half_side_m: 300.0,
        ..ScenarioConfig::default()
    };
    let drop = CellDrop::generate(&cfg, 7)?;

    let (mut local, mut single, mut twin) = (0, 0, 0);
    for c in &drop.clusters {
        match c.kind {
            ClusterKind::Local(_) => local += 1,
            ClusterKind::Single => single += 1,
            ClusterKind::Twin => twin += 1,
        }
    }
    println!(
        "{} users, {local} local / {single} single / {twin} twin clusters",
        drop.num_users()
    );

    // how many area clusters each user actually sees
    let mut seen: Vec<usize> = drop
        .users
        .iter()
        .map(|u| {
            drop.clusters
                .iter()
                .filter(|c| !c.kind.is_local() && c.visible_to(u))
                .count()
        })
        .collect();
    seen.sort_unstable();
    let mean = seen.iter().sum::<usize>() as f64 / seen.len() as f64;
    println!(
        "visible area clusters per user: min {} median {} max {} mean {mean:.2}",
        seen[0],
        seen[seen.len() / 2],
        seen[seen.len() - 1]
    );

    for u in drop.users.iter().take(5) {
        println!(
            "user {:>2} at ({:>7.1}, {:>7.1}), {:.1} m from the BS",
            u.id,
            u.pos.x,
            u.pos.y,
            u.pos.distance(&drop.bs)
        );
    }
    Ok(())
}
