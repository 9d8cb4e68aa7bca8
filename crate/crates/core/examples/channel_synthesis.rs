//! Build the channel of a few users and look at how their columns correlate
//! as the array grows.

use gscm_sched::channel::{assemble_channel, draw_all_mpcs, Fading};
use gscm_sched::scenario::CellDrop;
use gscm_sched::scheduler::{activity_sets, build_v_matrix};
use gscm_sched::ScenarioConfig;

fn main() -> gscm_sched::Result<()> {
    for m in [8, 32, 128, 512] {
        let cfg = ScenarioConfig {
            num_users: 30,
            num_antennas: m,
            num_selected: 4,
            cell_half_side_m: 250.0,
            ..ScenarioConfig::default()
        };
        let drop = CellDrop::generate(&cfg, 3)?;
        let v = build_v_matrix(&drop)?;
        let active = activity_sets(&v, cfg.activity_fraction);
        let mpcs = draw_all_mpcs(&drop);
        let users: Vec<usize> = (0..cfg.num_users).collect();
        let h = assemble_channel(&drop, &mpcs, &active, &users, &Fading::draw(&drop, 0))?.h;

        let mut worst: f64 = 0.0;
        let mut mean = 0.0;
        let mut pairs = 0;
        for a in 0..users.len() {
            for b in a + 1..users.len() {
                let (ca, cb) = (h.column(a), h.column(b));
                let c = ca.dotc(&cb).norm() / (ca.norm() * cb.norm());
                worst = worst.max(c);
                mean += c;
                pairs += 1;
            }
        }
        println!(
            "M = {m:>3}: mean column cosine {:.3}, worst {worst:.3}",
            mean / pairs as f64
        );
    }
    Ok(())
}
