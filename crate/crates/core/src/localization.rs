//! Offline cluster localization and the perturbed visibility matrix.
//!
//! Path parameters are the delay of the single-bounce path through a
//! scatterer and the elevation/azimuth of that scatterer seen from the BS.
//! Each is disturbed by a multiple of the square root of its Cramer-Rao
//! bound, back-projected to a scatterer position, and the visibility entry is
//! recomputed from the estimated geometry.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::cluster_delay;
use crate::error::{Error, Result};
use crate::geometry::{Point3, SPEED_OF_LIGHT};
use crate::rng::RandomStream;
use crate::scenario::CellDrop;
use crate::scheduler::{active_clusters, visibility_entry, SparseRows, VisibilityMatrix};

/// Polynomial fit of the sounder element pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternVariant {
    /// Two cubic terms, net cubic coefficient 3.99.
    #[default]
    AsPrinted,
    /// Last term taken as quartic.
    Quartic,
}

/// Channel sounder used for the offline measurement campaign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SounderConfig {
    pub bandwidth_hz: f64,
    /// Sounding periods `I`.
    pub periods: u32,
    /// PN sequence length `N`.
    pub pn_length: u32,
    /// Per-antenna input SNR, linear.
    pub snr_linear: f64,
    pub antennas: usize,
    /// Elements per side of the square array, `M_x`.
    pub side_count: u32,
    /// Element spacing over wavelength.
    pub spacing_ratio: f64,
    pub pattern: PatternVariant,
}

impl SounderConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.bandwidth_hz > 0.0
            && self.bandwidth_hz.is_finite()
            && self.periods > 0
            && self.pn_length > 0
            && self.snr_linear > 0.0
            && self.snr_linear.is_finite()
            && self.antennas > 0
            && self.side_count >= 2
            && self.spacing_ratio > 0.0
            && self.spacing_ratio.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid sounder configuration {self:?}"
            )))
        }
    }
}

/// Element field pattern as a polynomial in the (radian) angle.
pub fn pattern_f(nu: f64, variant: PatternVariant) -> f64 {
    let last = match variant {
        PatternVariant::AsPrinted => nu.powi(3),
        PatternVariant::Quartic => nu.powi(4),
    };
    0.67 + 2.67 * nu - 6.79 * nu * nu + 5.7 * nu.powi(3) - 1.71 * last
}

/// Output SNR after array, period and sequence processing gain.
pub fn gamma_o(cfg: &SounderConfig, nu: f64) -> f64 {
    let f = pattern_f(nu, cfg.pattern);
    cfg.antennas as f64 * cfg.periods as f64 * cfg.pn_length as f64 * f * f * cfg.snr_linear
}

/// Array geometry factor of the angular bounds.
pub fn delta_factor(side_count: u32, spacing_ratio: f64) -> f64 {
    let mx = side_count as f64;
    4.0 * PI
        * PI
        * spacing_ratio
        * spacing_ratio
        * (7.0 / 3.0 * mx.powi(3) - 8.0 * mx * mx + 29.0 / 3.0 * mx - 4.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Delay,
    Elevation,
    Azimuth,
}

/// Cramer-Rao bound of one path parameter, evaluated at elevation `nu`.
///
/// The azimuth bound carries a `1 / cos(nu)` factor and is undefined at
/// `nu = +-pi/2`.
pub fn crlb(param: Param, cfg: &SounderConfig, nu: f64) -> Result<f64> {
    let g = gamma_o(cfg, nu);
    if !(g > 0.0 && g.is_finite()) {
        return Err(Error::Domain(format!(
            "output SNR {g} at angle {nu} is not positive"
        )));
    }
    let delta = delta_factor(cfg.side_count, cfg.spacing_ratio);
    let m = cfg.antennas as f64;
    let value = match param {
        Param::Delay => 1.0 / (8.0 * PI * PI * cfg.bandwidth_hz),
        Param::Elevation => m / (2.0 * delta),
        Param::Azimuth => {
            let c = nu.cos();
            if c.abs() < 1e-12 {
                return Err(Error::Domain(format!(
                    "azimuth bound undefined at elevation {nu}"
                )));
            }
            m / (2.0 * delta * c)
        }
    };
    Ok(value / g)
}

/// Delay and BS-side angles of one single-bounce path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEstimate {
    /// Total BS-scatterer-MS propagation delay, s.
    pub delay: f64,
    /// Elevation of the scatterer seen from the BS, rad.
    pub elevation: f64,
    /// Azimuth of the scatterer relative to the BS-to-MS bearing, rad.
    pub azimuth: f64,
}

impl PathEstimate {
    pub fn is_valid(&self) -> bool {
        self.delay > 0.0 && self.elevation.abs() < PI / 2.0 && self.azimuth.is_finite()
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Exact path parameters of the path BS -> `scatterer` -> MS.
pub fn path_parameters(bs: &Point3, ms: &Point3, scatterer: &Point3) -> PathEstimate {
    let d_bs = scatterer.distance(bs);
    let d_ms = scatterer.distance(ms);
    let elevation = if d_bs > 0.0 {
        ((scatterer.z - bs.z) / d_bs).clamp(-1.0, 1.0).asin()
    } else {
        0.0
    };
    let azimuth = wrap_angle(bs.bearing_to(scatterer) - bs.bearing_to(ms));
    PathEstimate {
        delay: (d_bs + d_ms) / SPEED_OF_LIGHT,
        elevation,
        azimuth,
    }
}

/// Scatterer at distance `d_bs` from the BS along the estimated direction.
pub fn scatterer_position(bs: &Point3, ms: &Point3, est: &PathEstimate, d_bs: f64) -> Point3 {
    let bearing = bs.bearing_to(ms) + est.azimuth;
    let horizontal = d_bs * est.elevation.cos();
    *bs + Point3::new(
        horizontal * bearing.cos(),
        horizontal * bearing.sin(),
        d_bs * est.elevation.sin(),
    )
}

/// Range equation used to back-project a path onto the delay ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EllipseModel {
    /// Full 3-D distance including the lateral offset `d cos(nu) sin(theta)`;
    /// exact for every direction and linear in the BS leg.
    #[default]
    Full3d,
    /// Vertical and in-line terms only; quadratic in the BS leg and exact
    /// only when the scatterer lies in the BS-MS vertical plane.
    InPlane,
}

/// Leg lengths `(d_BS,C, d_MS,C)` of a localized scatterer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Legs {
    pub bs_leg: f64,
    pub ms_leg: f64,
}

/// Back-project a path estimate to its two leg lengths.
///
/// `d_bs_ms` is the horizontal BS-MS distance and `dh = h_BS - h_MS`. The legs
/// always sum to `c tau`. Fails when `c tau` does not exceed the direct
/// BS-MS distance or no admissible root exists.
pub fn localize_cluster(
    est: &PathEstimate,
    d_bs_ms: f64,
    dh: f64,
    model: EllipseModel,
) -> Result<Legs> {
    let ct = SPEED_OF_LIGHT * est.delay;
    let direct = d_bs_ms.hypot(dh);
    if !est.is_valid() || !(ct > direct * (1.0 + 1e-12)) {
        return Err(Error::Localization(format!(
            "path length {ct} m does not exceed the direct distance {direct} m"
        )));
    }
    let (sn, cn) = est.elevation.sin_cos();
    let ct_az = est.azimuth.cos();
    let c0 = ct * ct - d_bs_ms * d_bs_ms - dh * dh;
    let lin = ct + dh * sn - d_bs_ms * cn * ct_az;
    let quad = match model {
        EllipseModel::Full3d => 0.0,
        EllipseModel::InPlane => {
            let s = cn * est.azimuth.sin();
            s * s
        }
    };
    // quad d^2 - 2 lin d + c0 = 0
    let admissible = |d: f64| d > 0.0 && ct - d > 0.0 && d.is_finite();
    let bs_leg = if quad <= 1e-15 * lin.abs().max(1.0) {
        let d = c0 / (2.0 * lin);
        admissible(d).then_some(d)
    } else {
        let disc = lin * lin - quad * c0;
        if disc < 0.0 {
            None
        } else {
            let sq = disc.sqrt();
            // numerically stable pair of roots
            let q = lin + lin.signum() * sq;
            let r1 = q / quad;
            let r2 = if q != 0.0 { c0 / q } else { f64::NAN };
            let mut roots: Vec<f64> = [r1, r2].into_iter().filter(|&d| admissible(d)).collect();
            roots.sort_by(f64::total_cmp);
            roots.first().copied()
        }
    };
    let bs_leg = bs_leg.ok_or_else(|| {
        Error::Localization("no admissible root for the scatterer distance".into())
    })?;
    Ok(Legs {
        bs_leg,
        ms_leg: ct - bs_leg,
    })
}

/// Squared-range residual of the chosen range equation at `legs`.
pub fn range_residual(
    est: &PathEstimate,
    d_bs_ms: f64,
    dh: f64,
    legs: &Legs,
    model: EllipseModel,
) -> f64 {
    let d = legs.bs_leg;
    let (sn, cn) = est.elevation.sin_cos();
    let vertical = dh + d * sn;
    let inline = d_bs_ms - d * cn * est.azimuth.cos();
    let lateral = match model {
        EllipseModel::Full3d => d * cn * est.azimuth.sin(),
        EllipseModel::InPlane => 0.0,
    };
    let ct = SPEED_OF_LIGHT * est.delay;
    (ct - d).powi(2) - (vertical * vertical + inline * inline + lateral * lateral)
}

/// Localization outcome of one (user, cluster) path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathDiagnostic {
    pub user: usize,
    pub cluster: usize,
    pub true_legs: Legs,
    /// `None` when localization failed and the cluster was lost.
    pub estimated_legs: Option<Legs>,
}

impl PathDiagnostic {
    pub fn lost(&self) -> bool {
        self.estimated_legs.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct PerturbedVisibility {
    pub v_tilde: VisibilityMatrix,
    /// `V - V~`.
    pub error: SparseRows,
    pub paths: Vec<PathDiagnostic>,
}

impl PerturbedVisibility {
    pub fn lost_count(&self) -> usize {
        self.paths.iter().filter(|p| p.lost()).count()
    }

    /// `|E|_F / |V|_F`.
    pub fn relative_error(&self, v: &VisibilityMatrix) -> f64 {
        let n = v.entries().frobenius_norm();
        if n == 0.0 {
            0.0
        } else {
            self.error.frobenius_norm() / n
        }
    }
}

/// Rebuild `V` from localized clusters with errors of magnitude
/// `omega * sqrt(CRLB)` and independent random signs.
///
/// Only active paths (by the configured power fraction) are localized,
/// through the cluster's MS-side scatterer; weaker entries are copied. The VR center moves with
/// the horizontal localization offset and the cluster delay takes the delay
/// error. Path loss stays exact.
pub fn perturb_and_rebuild(
    drop: &CellDrop,
    v: &VisibilityMatrix,
    sounder: &SounderConfig,
    omega: f64,
    model: EllipseModel,
    rng: &mut RandomStream,
) -> Result<PerturbedVisibility> {
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(Error::Domain(format!(
            "error multiplier must be >= 0, got {omega}"
        )));
    }
    if v.num_users() != drop.num_users() || v.num_clusters() != drop.num_clusters() {
        return Err(Error::Domain(
            "visibility matrix does not match the drop".into(),
        ));
    }
    let bs = &drop.bs;
    let mut rows = Vec::with_capacity(v.num_users());
    let mut paths = Vec::new();
    for user in &drop.users {
        let mut row = Vec::with_capacity(v.row(user.id).len());
        let active = active_clusters(v.row(user.id), drop.cfg.activity_fraction);
        for &(cid, value) in v.row(user.id) {
            let cluster = &drop.clusters[cid];
            // only active paths are sounded and localized
            if cluster.kind.is_local() || !active.contains(&cid) {
                row.push((cid, value));
                continue;
            }
            let scatterer = cluster.ms_side_pos;
            let truth = path_parameters(bs, &user.pos, &scatterer);
            let signs: [f64; 3] =
                std::array::from_fn(|_| if rng.random::<bool>() { 1.0 } else { -1.0 });
            let errors = [
                omega * crlb(Param::Delay, sounder, truth.elevation)?.sqrt() * signs[0],
                omega * crlb(Param::Elevation, sounder, truth.elevation)?.sqrt() * signs[1],
                omega * crlb(Param::Azimuth, sounder, truth.elevation)?.sqrt() * signs[2],
            ];
            let true_legs = Legs {
                bs_leg: scatterer.distance(bs),
                ms_leg: scatterer.distance(&user.pos),
            };
            if errors.iter().all(|&e| e == 0.0) {
                row.push((cid, value));
                paths.push(PathDiagnostic {
                    user: user.id,
                    cluster: cid,
                    true_legs,
                    estimated_legs: Some(true_legs),
                });
                continue;
            }
            let est = PathEstimate {
                delay: truth.delay + errors[0],
                elevation: truth.elevation + errors[1],
                azimuth: truth.azimuth + errors[2],
            };
            let d_bs_ms = bs.horizontal_distance(&user.pos);
            let legs = localize_cluster(&est, d_bs_ms, bs.z - user.pos.z, model).ok();
            paths.push(PathDiagnostic {
                user: user.id,
                cluster: cid,
                true_legs,
                estimated_legs: legs,
            });
            let Some(legs) = legs else { continue };
            let moved = scatterer_position(bs, &user.pos, &est, legs.bs_leg);
            let vr = cluster
                .vr
                .as_ref()
                .expect("area clusters carry a visibility region");
            let center = Point3::new(
                vr.center.x + moved.x - scatterer.x,
                vr.center.y + moved.y - scatterer.y,
                vr.center.z,
            );
            let tau_c = cluster_delay(cluster, &user.pos, bs) + errors[0];
            let value = visibility_entry(&drop.cfg, bs, user, cluster, tau_c, Some(&center))?;
            if value > 0.0 {
                row.push((cid, value));
            }
        }
        rows.push(row);
    }
    let v_tilde = VisibilityMatrix::new(SparseRows::new(v.num_clusters(), rows));
    let error = v.entries().difference(v_tilde.entries());
    Ok(PerturbedVisibility {
        v_tilde,
        error,
        paths,
    })
}

/// Per-path diagnostics as CSV:
/// `user,cluster,true_bs_leg,true_ms_leg,est_bs_leg,est_ms_leg,lost`.
pub fn write_diagnostics_csv<W: Write>(w: W, paths: &[PathDiagnostic]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "user",
        "cluster",
        "true_bs_leg",
        "true_ms_leg",
        "est_bs_leg",
        "est_ms_leg",
        "lost",
    ])?;
    for p in paths {
        let (eb, em) = match p.estimated_legs {
            Some(l) => (l.bs_leg.to_string(), l.ms_leg.to_string()),
            None => (String::new(), String::new()),
        };
        out.write_record([
            p.user.to_string(),
            p.cluster.to_string(),
            p.true_legs.bs_leg.to_string(),
            p.true_legs.ms_leg.to_string(),
            eb,
            em,
            u8::from(p.lost()).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    fn sounder() -> SounderConfig {
        ScenarioConfig::default().sounder()
    }

    #[test]
    fn pattern_values() {
        assert_eq!(pattern_f(0.0, PatternVariant::AsPrinted), 0.67);
        assert!((pattern_f(1.0, PatternVariant::AsPrinted) - 0.54).abs() < 1e-12);
        assert!((pattern_f(1.0, PatternVariant::Quartic) - 0.54).abs() < 1e-12);
        assert!(
            pattern_f(0.5, PatternVariant::AsPrinted) != pattern_f(0.5, PatternVariant::Quartic)
        );
    }

    #[test]
    fn gamma_o_values() {
        let mut s = sounder();
        s.antennas = 1;
        s.periods = 1;
        s.pn_length = 1;
        s.snr_linear = 1.0;
        assert!((gamma_o(&s, 0.0) - 0.4489).abs() < 1e-12);
        let g = gamma_o(&s, 0.2);
        s.pn_length = 2;
        assert!((gamma_o(&s, 0.2) - 2.0 * g).abs() < 1e-12);
        assert!((ScenarioConfig::default().sounder().snr_linear - 100.0).abs() < 1e-9);
    }

    #[test]
    fn crlb_values() {
        assert!((delta_factor(5, 0.5) - PI * PI * 136.0).abs() < 1e-9);
        let s = sounder();
        let nu = 0.3;
        let el = crlb(Param::Elevation, &s, nu).unwrap();
        let az = crlb(Param::Azimuth, &s, nu).unwrap();
        assert!((el / az - nu.cos()).abs() < 1e-12);
        let mut wide = s;
        wide.bandwidth_hz *= 2.0;
        let ratio = crlb(Param::Delay, &wide, nu).unwrap() / crlb(Param::Delay, &s, nu).unwrap();
        assert!((ratio - 0.5).abs() < 1e-12);
        assert!(crlb(Param::Azimuth, &s, PI / 2.0).is_err());
    }

    #[test]
    fn localize_in_line() {
        let est = PathEstimate {
            delay: 2000.0 / SPEED_OF_LIGHT,
            elevation: 0.0,
            azimuth: 0.0,
        };
        for model in [EllipseModel::Full3d, EllipseModel::InPlane] {
            let legs = localize_cluster(&est, 1000.0, 0.0, model).unwrap();
            assert!((legs.bs_leg - 1500.0).abs() < 1e-6);
            assert!((legs.ms_leg - 500.0).abs() < 1e-6);
        }
        let degenerate = PathEstimate {
            delay: 1000.0 / SPEED_OF_LIGHT,
            elevation: 0.0,
            azimuth: 0.0,
        };
        assert!(localize_cluster(&degenerate, 1000.0, 0.0, EllipseModel::Full3d).is_err());
    }

    #[test]
    fn localize_roundtrip_off_plane() {
        let bs = Point3::new(0.0, 0.0, 5.0);
        let ms = Point3::new(300.0, -120.0, 1.5);
        let sc = Point3::new(150.0, 80.0, 3.25);
        let est = path_parameters(&bs, &ms, &sc);
        let legs =
            localize_cluster(&est, bs.horizontal_distance(&ms), 3.5, EllipseModel::Full3d).unwrap();
        assert!((legs.bs_leg - sc.distance(&bs)).abs() < 1e-6 * legs.bs_leg);
        let p = scatterer_position(&bs, &ms, &est, legs.bs_leg);
        assert!(p.distance(&sc) < 1e-6);
    }

    #[test]
    fn omega_zero_is_identity() {
        let cfg = ScenarioConfig {
            num_users: 20,
            num_antennas: 16,
            num_selected: 4,
            ..ScenarioConfig::default()
        };
        let drop = CellDrop::generate(&cfg, 3).unwrap();
        let v = crate::scheduler::build_v_matrix(&drop).unwrap();
        let mut rng = crate::rng::substream(3, crate::rng::Stream::LocalizationError, &[]);
        let p = perturb_and_rebuild(
            &drop,
            &v,
            &cfg.sounder(),
            0.0,
            EllipseModel::Full3d,
            &mut rng,
        )
        .unwrap();
        assert_eq!(p.v_tilde, v);
        assert_eq!(p.error.frobenius_norm(), 0.0);
    }

    #[test]
    fn diagnostics_csv_header() {
        let mut buf = Vec::new();
        write_diagnostics_csv(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "user,cluster,true_bs_leg,true_ms_leg,est_bs_leg,est_ms_leg,lost\n"
        );
    }
}
