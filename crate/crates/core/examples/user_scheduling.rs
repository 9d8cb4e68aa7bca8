//! Compare the schedulers on one drop: who they pick and how many clusters
//! the picked users share.

use gscm_sched::harness::TrialContext;
use gscm_sched::scheduler::SchedulerKind;
use gscm_sched::ScenarioConfig;

fn main() -> gscm_sched::Result<()> {
    let cfg = ScenarioConfig {
        num_users: 100,
        num_antennas: 64,
        num_selected: 10,
        cell_half_side_m: 400.0,
        ..ScenarioConfig::default()
    };
    let ctx = TrialContext::build(&cfg, 2024)?;
    let nonzero = (0..ctx.v.num_users())
        .filter(|&k| !ctx.v.row(k).is_empty())
        .count();
    println!(
        "{nonzero} of {} users see at least one area cluster",
        cfg.num_users
    );

    for kind in SchedulerKind::ALL {
        let r = ctx.run(kind, 0.0)?;
        println!(
            "{:<14} {:>7.2} bit/s/Hz  common {:.2}  load {:>5}  {:?}",
            kind.name(),
            r.sum_rate,
            r.mean_common,
            r.load,
            r.selected
        );
    }
    Ok(())
}
