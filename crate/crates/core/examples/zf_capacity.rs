//! Zero-forcing sum-rate against the log-det capacity of the same users, and
//! the three-user bound as the users' correlation grows.

use gscm_sched::harness::TrialContext;
use gscm_sched::receiver::{
    log_det_capacity, sum_rate, three_user_capacity, zf_weights, NoiseModel,
};
use gscm_sched::scheduler::SchedulerKind;
use gscm_sched::ScenarioConfig;

fn main() -> gscm_sched::Result<()> {
    let cfg = ScenarioConfig {
        num_users: 60,
        num_antennas: 32,
        num_selected: 6,
        cell_half_side_m: 300.0,
        ..ScenarioConfig::default()
    };
    let ctx = TrialContext::build(&cfg, 5)?;
    let picked = ctx.run(SchedulerKind::GusThreshold, 0.0)?.selected;
    let h = ctx.channel.select(&picked).h;

    let snr = cfg.p_total_w / cfg.noise_power_w;
    let zf = zf_weights(&h, cfg.condition_cap)?;
    // normalize so that both rates see the same per-user SNR scale
    let scale = (h.norm_squared() / (h.nrows() * h.ncols()) as f64).sqrt();
    let hn = &h / num_complex::Complex64::from(scale);
    let wn = zf_weights(&hn, cfg.condition_cap)?.w;
    println!("condition number {:.2}", zf.condition);
    for db in [0.0, 10.0, 20.0] {
        let p = 10f64.powf(db / 10.0);
        let zf_rate = sum_rate(&hn, &wn, p * h.ncols() as f64, 1.0, NoiseModel::Filtered);
        let cap = log_det_capacity(&hn, p)?;
        println!("{db:>4} dB: ZF {zf_rate:>6.2}  log-det {cap:>6.2} bit/s/Hz");
    }
    println!(
        "actual link budget SNR {:.1} dB",
        10.0 * (snr * scale * scale).log10()
    );

    for z in [0.0, 0.3, 0.6, 0.9] {
        let c = three_user_capacity([z; 3], [0.0; 3], 10.0)?;
        println!("three users, |r| = {z}: {c:.3} bit/s/Hz");
    }
    Ok(())
}
