//! A small sweep over the number of users, printed as CSV.

use gscm_sched::harness::{emit_csv, run_sweep, SweepSpec, SweepVariable};
use gscm_sched::scheduler::SchedulerKind;
use gscm_sched::ScenarioConfig;

fn main() -> gscm_sched::Result<()> {
    let base = ScenarioConfig {
        num_antennas: 32,
        num_selected: 8,
        cell_half_side_m: 300.0,
        ..ScenarioConfig::default()
    };
    let spec = SweepSpec {
        base,
        variable: SweepVariable::Users,
        values: vec![20.0, 40.0, 80.0],
        trials: 10,
        schedulers: vec![
            SchedulerKind::GusThreshold,
            SchedulerKind::Gwc,
            SchedulerKind::Random,
        ],
        omega: 0.0,
        seed: 1,
    };
    let table = run_sweep(&spec, 0)?;
    emit_csv(&table.rows, std::io::stdout().lock())
}
