//! Monte Carlo trials, parameter sweeps and CSV output.
//!
//! Every trial draws all of its randomness from substreams keyed by its drop
//! seed, so trials can run in any order on any number of threads and still
//! produce identical results. All schedulers compared at one sweep point see
//! the same drop and the same fading realization.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{assemble_channel, draw_all_mpcs, ChannelMatrix, Fading};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::localization::{perturb_and_rebuild, EllipseModel};
use crate::receiver::{sum_rate, zf_weights, NoiseModel};
use crate::rng::{drop_seed, substream, Stream};
use crate::scenario::CellDrop;
use crate::scheduler::{
    activity_sets, build_v_matrix, estimation_load, gus_mincorr, gus_threshold, gwc, gwc_search,
    mean_pairwise_common, random_selection, SchedulerKind, VisibilityMatrix,
};

/// Environment variable naming a configuration file.
pub const CONFIG_ENV: &str = "GSCM_CONFIG";

/// Configuration path from a flag, else from [`CONFIG_ENV`].
pub fn config_path(flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf).or_else(|| {
        std::env::var_os(CONFIG_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    })
}

/// Load the configuration named by a flag or the environment, defaults otherwise.
pub fn load_config(flag: Option<&Path>) -> Result<ScenarioConfig> {
    match config_path(flag) {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::default()),
    }
}

/// Everything a drop needs before scheduling: geometry, `V`, activity sets
/// and the full channel of all users for one fading realization.
pub struct TrialContext {
    pub drop: CellDrop,
    pub v: VisibilityMatrix,
    pub active: Vec<Vec<usize>>,
    pub channel: ChannelMatrix,
}

impl TrialContext {
    pub fn build(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        let drop = CellDrop::generate(cfg, seed)?;
        let v = build_v_matrix(&drop)?;
        let active = activity_sets(&v, cfg.activity_fraction);
        let mpcs = draw_all_mpcs(&drop);
        let fading = Fading::draw(&drop, 0);
        let users: Vec<usize> = (0..drop.num_users()).collect();
        let channel = assemble_channel(&drop, &mpcs, &active, &users, &fading)?;
        Ok(Self {
            drop,
            v,
            active,
            channel,
        })
    }

    fn noise_model(&self) -> NoiseModel {
        if self.drop.cfg.eq4_literal {
            NoiseModel::UnitFloor
        } else {
            NoiseModel::Filtered
        }
    }

    /// ZF sum-rate of a user subset; `Err` for an ill-conditioned channel.
    pub fn zf_rate(&self, selected: &[usize]) -> Result<(f64, f64)> {
        let cfg = &self.drop.cfg;
        let h = self.channel.select(selected);
        let w = zf_weights(&h.h, cfg.condition_cap)?;
        let r = sum_rate(
            &h.h,
            &w.w,
            cfg.p_total_w,
            cfg.noise_power_w,
            self.noise_model(),
        );
        Ok((r, w.condition))
    }

    /// Schedule with `kind` and evaluate. `omega > 0` makes the geometry-based
    /// schedulers work on a visibility matrix rebuilt from mislocalized clusters.
    pub fn run(&self, kind: SchedulerKind, omega: f64) -> Result<TrialRecord> {
        let cfg = &self.drop.cfg;
        let seed = self.drop.seed;
        let k_s = cfg.num_selected;
        let perturbed;
        let v = if kind.is_geometry_based() && omega > 0.0 {
            let mut rng = substream(seed, Stream::LocalizationError, &[]);
            perturbed = perturb_and_rebuild(
                &self.drop,
                &self.v,
                &cfg.sounder(),
                omega,
                EllipseModel::Full3d,
                &mut rng,
            )?;
            &perturbed.v_tilde
        } else {
            &self.v
        };
        let schedule = match kind {
            SchedulerKind::GusThreshold => gus_threshold(v, k_s, cfg.eps_h),
            SchedulerKind::GusMinCorr => gus_mincorr(v, k_s),
            SchedulerKind::Gwc if cfg.eps_g_grid.is_empty() => gwc(&self.channel, k_s, cfg.eps_g),
            SchedulerKind::Gwc => {
                gwc_search(&self.channel, k_s, &cfg.eps_g_grid, |sel| {
                    self.zf_rate(sel).map_or(0.0, |r| r.0)
                })
                .0
            }
            SchedulerKind::Random => {
                let mut rng = substream(seed, Stream::Scheduler, &[]);
                random_selection(cfg.num_users, k_s, &mut rng)?
            }
        };
        let (sum_rate, condition) = match self.zf_rate(&schedule.selected) {
            Ok((r, c)) => (r, Some(c)),
            Err(Error::Singular(_)) => (0.0, None),
            Err(e) => return Err(e),
        };
        Ok(TrialRecord {
            seed,
            scheduler: kind,
            mean_common: mean_pairwise_common(&self.active, &schedule.selected),
            selected: schedule.selected,
            sum_rate,
            load: estimation_load(kind, cfg.num_antennas, cfg.num_users, k_s),
            condition,
            omega: kind.is_geometry_based().then_some(omega),
        })
    }
}

/// Result of one scheduler on one drop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub scheduler: SchedulerKind,
    pub selected: Vec<usize>,
    /// bits/s/Hz; zero for a failed trial.
    pub sum_rate: f64,
    pub load: usize,
    /// Mean number of active clusters shared by a pair of selected users.
    pub mean_common: f64,
    /// Condition number of the selected channel; `None` marks a failed trial.
    pub condition: Option<f64>,
    pub omega: Option<f64>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.condition.is_none()
    }
}

/// One drop, one scheduler.
pub fn run_trial(
    cfg: &ScenarioConfig,
    seed: u64,
    kind: SchedulerKind,
    omega: f64,
) -> Result<TrialRecord> {
    TrialContext::build(cfg, seed)?.run(kind, omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    CellSize,
    Users,
    Antennas,
    Selected,
    Omega,
}

impl SweepVariable {
    pub const ALL: [SweepVariable; 5] = [
        SweepVariable::CellSize,
        SweepVariable::Users,
        SweepVariable::Antennas,
        SweepVariable::Selected,
        SweepVariable::Omega,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepVariable::CellSize => "R",
            SweepVariable::Users => "K",
            SweepVariable::Antennas => "M",
            SweepVariable::Selected => "K_s",
            SweepVariable::Omega => "omega",
        }
    }

    /// Configuration at one sweep point, plus the error multiplier.
    pub fn apply(
        &self,
        base: &ScenarioConfig,
        base_omega: f64,
        value: f64,
    ) -> Result<(ScenarioConfig, f64)> {
        let mut cfg = base.clone();
        let mut omega = base_omega;
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!(
                    "{} must be a nonnegative integer, got {v}",
                    self.name()
                )))
            }
        };
        match self {
            SweepVariable::CellSize => cfg.cell_half_side_m = value,
            SweepVariable::Users => cfg.num_users = count(value)?,
            SweepVariable::Antennas => cfg.num_antennas = count(value)?,
            SweepVariable::Selected => cfg.num_selected = count(value)?,
            SweepVariable::Omega => omega = value,
        }
        cfg.validate()?;
        Ok((cfg, omega))
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepVariable::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown sweep variable '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Sum-rate against cell size.
    Fig3,
    /// Sum-rate against the number of users.
    Fig4,
    /// Estimation load against the number of antennas.
    Fig5,
    /// Sum-rate against the localization error multiplier.
    Fig6,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Fig3, Preset::Fig4, Preset::Fig5, Preset::Fig6];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::Fig6 => "fig6",
        }
    }

    /// Sweep for this preset on top of `base` (geometry, channel and sounder
    /// settings are taken from `base`; array and user counts are overridden).
    pub fn spec(&self, base: &ScenarioConfig) -> SweepSpec {
        let mut cfg = base.clone();
        cfg.num_users = 400;
        cfg.num_antennas = 100;
        cfg.num_selected = 40;
        cfg.cell_half_side_m = 600.0;
        let compare = vec![
            SchedulerKind::GusThreshold,
            SchedulerKind::Gwc,
            SchedulerKind::Random,
        ];
        let (variable, values, schedulers) = match self {
            Preset::Fig3 => (
                SweepVariable::CellSize,
                vec![200.0, 400.0, 600.0, 800.0, 1000.0],
                compare,
            ),
            Preset::Fig4 => (
                SweepVariable::Users,
                vec![100.0, 200.0, 300.0, 400.0],
                compare,
            ),
            Preset::Fig5 => (
                SweepVariable::Antennas,
                vec![50.0, 100.0, 200.0, 300.0, 400.0],
                compare,
            ),
            Preset::Fig6 => {
                cfg.num_antennas = 400;
                (
                    SweepVariable::Omega,
                    (0..=10).map(f64::from).collect(),
                    vec![SchedulerKind::GusThreshold],
                )
            }
        };
        SweepSpec {
            base: cfg,
            variable,
            values,
            trials: 50,
            schedulers,
            omega: 0.0,
            seed: base.seed,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub trials: usize,
    pub schedulers: Vec<SchedulerKind>,
    /// Error multiplier at points that do not sweep it.
    pub omega: f64,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("sweep needs at least one trial".into()));
        }
        if self.schedulers.is_empty() {
            return Err(Error::Config("sweep needs at least one scheduler".into()));
        }
        for &v in &self.values {
            self.variable.apply(&self.base, self.omega, v)?;
        }
        Ok(())
    }
}

/// Aggregate of one (sweep point, scheduler) pair; one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_var: String,
    pub value: f64,
    pub scheduler: String,
    /// Mean over trials that did not fail.
    pub mean_sumrate: f64,
    /// Standard error of the mean; absent with fewer than two usable trials.
    pub stderr: Option<f64>,
    pub trials: usize,
    pub failed: usize,
    pub load: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Raw trial records, point-major then trial then scheduler.
    pub records: Vec<TrialRecord>,
}

fn aggregate(
    variable: SweepVariable,
    value: f64,
    cfg: &ScenarioConfig,
    kind: SchedulerKind,
    recs: &[&TrialRecord],
) -> SweepRow {
    let ok: Vec<f64> = recs
        .iter()
        .filter(|r| !r.failed())
        .map(|r| r.sum_rate)
        .collect();
    let n = ok.len();
    let mean = if n == 0 {
        f64::NAN
    } else {
        ok.iter().sum::<f64>() / n as f64
    };
    let stderr = (n >= 2).then(|| {
        let var = ok.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    SweepRow {
        sweep_var: variable.name().to_string(),
        value,
        scheduler: kind.name().to_string(),
        mean_sumrate: mean,
        stderr,
        trials: recs.len(),
        failed: recs.len() - n,
        load: estimation_load(kind, cfg.num_antennas, cfg.num_users, cfg.num_selected),
    }
}

/// Run a sweep on `threads` worker threads (0 picks the rayon default).
///
/// Trial `t` uses the same drop seed at every sweep point, so points differ
/// only in the swept parameter.
pub fn run_sweep(spec: &SweepSpec, threads: usize) -> Result<SweepTable> {
    spec.validate()?;
    let points: Vec<(ScenarioConfig, f64)> = spec
        .values
        .iter()
        .map(|&v| spec.variable.apply(&spec.base, spec.omega, v))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..spec.trials).map(move |t| (p, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let per_job: Vec<Vec<TrialRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, t)| {
                let (cfg, omega) = &points[p];
                let ctx = TrialContext::build(cfg, drop_seed(spec.seed, 0, t as u64))?;
                spec.schedulers
                    .iter()
                    .map(|&k| ctx.run(k, *omega))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut rows = Vec::new();
    for (p, &value) in spec.values.iter().enumerate() {
        let block = &per_job[p * spec.trials..(p + 1) * spec.trials];
        for (s, &kind) in spec.schedulers.iter().enumerate() {
            let recs: Vec<&TrialRecord> = block.iter().map(|trial| &trial[s]).collect();
            rows.push(aggregate(spec.variable, value, &points[p].0, kind, &recs));
        }
    }
    Ok(SweepTable {
        rows,
        records: per_job.into_iter().flatten().collect(),
    })
}

pub const CSV_HEADER: &str = "sweep_var,value,scheduler,mean_sumrate,stderr,trials,failed,load";

/// Write rows as CSV with header [`CSV_HEADER`].
pub fn emit_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(CSV_HEADER.split(','))?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    emit_csv(rows, std::io::BufWriter::new(file))
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Format(format!(
            "unexpected CSV header '{}'",
            header.join(",")
        )));
    }
    Ok(rdr
        .deserialize()
        .collect::<std::result::Result<Vec<SweepRow>, _>>()?)
}
