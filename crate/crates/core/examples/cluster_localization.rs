//! Localize the active clusters of a drop under growing CRLB-scaled errors.

use gscm_sched::localization::{crlb, perturb_and_rebuild, EllipseModel, Param};
use gscm_sched::rng::{substream, Stream};
use gscm_sched::scenario::CellDrop;
use gscm_sched::scheduler::{build_v_matrix, gus_threshold};
use gscm_sched::{ScenarioConfig, SPEED_OF_LIGHT};

fn main() -> gscm_sched::Result<()> {
    let cfg = ScenarioConfig {
        num_users: 80,
        num_antennas: 64,
        num_selected: 8,
        cell_half_side_m: 400.0,
        ..ScenarioConfig::default()
    };
    let sounder = cfg.sounder();
    for nu in [0.0f64, 0.2, 0.5] {
        let range = SPEED_OF_LIGHT * crlb(Param::Delay, &sounder, nu)?.sqrt();
        let el = crlb(Param::Elevation, &sounder, nu)?.sqrt().to_degrees();
        println!("elevation {nu:.1} rad: range sd {range:.2} m, elevation sd {el:.4} deg");
    }

    let drop = CellDrop::generate(&cfg, 9)?;
    let v = build_v_matrix(&drop)?;
    let exact = gus_threshold(&v, cfg.num_selected, cfg.eps_h).selected;
    for omega in [0.0, 0.5, 1.0, 2.0, 5.0] {
        let mut rng = substream(9, Stream::LocalizationError, &[]);
        let p = perturb_and_rebuild(&drop, &v, &sounder, omega, EllipseModel::Full3d, &mut rng)?;
        let picked = gus_threshold(&p.v_tilde, cfg.num_selected, cfg.eps_h).selected;
        let kept = picked.iter().filter(|u| exact.contains(u)).count();
        println!(
            "omega {omega}: {}/{} paths lost, |E|/|V| {:.3}, {kept}/{} picks unchanged",
            p.lost_count(),
            p.paths.len(),
            p.relative_error(&v),
            exact.len()
        );
    }
    Ok(())
}
