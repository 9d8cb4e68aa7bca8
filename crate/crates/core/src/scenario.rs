//! Drop generation: users, clusters, visibility regions and large-scale
//! parameters.
//!
//! The BS sits at the origin at height `h_BS`; the ULA lies along the x-axis.
//! Every user owns a local cluster, the BS optionally owns one, and the
//! remaining single/twin clusters are tied to visibility regions whose centers
//! form a Poisson point process over the cell.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson, StandardNormal};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::geometry::{Point3, SPEED_OF_LIGHT};
use crate::rng::{substream, RandomStream, Stream};

const MAX_PLACEMENT_ATTEMPTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct User {
    pub id: usize,
    pub pos: Point3,
}

/// Circular region on the ground inside which a cluster is visible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityRegion {
    pub center: Point3,
    pub radius: f64,
    pub transition: f64,
    pub cluster: usize,
}

impl VisibilityRegion {
    pub fn new(center: Point3, radius: f64, transition: f64, cluster: usize) -> Self {
        assert!(
            radius > transition && transition > 0.0,
            "visibility region needs radius > transition > 0"
        );
        Self {
            center,
            radius,
            transition,
            cluster,
        }
    }

    pub fn covers(&self, p: &Point3) -> bool {
        self.center.horizontal_distance(p) <= self.radius
    }

    /// `A_VR` for a user at `p`; zero when the user is outside the region.
    pub fn gain_at(&self, p: &Point3, wavelength: f64) -> f64 {
        self.gain_with_center(&self.center, p, wavelength)
    }

    /// Same as [`gain_at`](Self::gain_at) with the region moved to `center`.
    pub fn gain_with_center(&self, center: &Point3, p: &Point3, wavelength: f64) -> f64 {
        let d = center.horizontal_distance(p);
        if d > self.radius {
            0.0
        } else {
            vr_gain(d, self.radius, self.transition, wavelength)
        }
    }
}

/// Visibility-region transition function `A_VR`.
pub fn vr_gain(d_ms_vr: f64, radius: f64, transition: f64, wavelength: f64) -> f64 {
    let arg =
        2.0 * 2f64.sqrt() * (transition + d_ms_vr - radius) / (wavelength * transition).sqrt();
    0.5 - arg.atan() / PI
}

/// Area density of visibility regions, m^-2.
pub fn vr_density(expected_clusters: f64, radius: f64, transition: f64) -> f64 {
    (expected_clusters - 1.0) / (PI * (radius - transition).powi(2))
}

/// Correlated large-scale parameters of one cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lsp {
    /// Delay spread, seconds.
    pub delay_spread: f64,
    /// Angular spread, degrees.
    pub angular_spread: f64,
    /// Shadow fading, linear power.
    pub shadowing: f64,
}

/// Lower-triangular factor `L` with `L L^T = corr`.
///
/// Zero pivots are accepted when the remaining column vanishes, so
/// semidefinite (e.g. fully correlated) matrices factor as well.
pub fn lsp_factor(corr: &[[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
    const TOL: f64 = 1e-12;
    for i in 0..3 {
        for j in 0..3 {
            if (corr[i][j] - corr[j][i]).abs() > TOL || !corr[i][j].is_finite() {
                return Err(Error::Config(
                    "LSP correlation matrix must be symmetric".into(),
                ));
            }
        }
        if (corr[i][i] - 1.0).abs() > TOL {
            return Err(Error::Config(
                "LSP correlation matrix needs a unit diagonal".into(),
            ));
        }
    }
    let mut l = [[0.0; 3]; 3];
    for j in 0..3 {
        let pivot = corr[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if pivot < -1e-10 {
            return Err(Error::Config(
                "LSP correlation matrix is not positive semidefinite".into(),
            ));
        }
        let diag = pivot.max(0.0).sqrt();
        l[j][j] = diag;
        for i in (j + 1)..3 {
            let off = corr[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if diag > 1e-7 {
                l[i][j] = off / diag;
            } else if off.abs() > 1e-7 {
                return Err(Error::Config(
                    "LSP correlation matrix is not positive semidefinite".into(),
                ));
            }
        }
    }
    Ok(l)
}

/// Draw the delay spread, angular spread and shadowing of a cluster whose
/// reference link distance is `distance` meters.
pub fn correlated_lsps(cfg: &ScenarioConfig, distance: f64, rng: &mut RandomStream) -> Result<Lsp> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!(
            "LSP distance must be > 0, got {distance}"
        )));
    }
    let l = lsp_factor(&cfg.lsp_correlation())?;
    let n: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let mut xyz = [0.0; 3];
    for i in 0..3 {
        xyz[i] = (0..=i).map(|k| l[i][k] * n[k]).sum();
    }
    let [x, y, z] = xyz;
    Ok(Lsp {
        delay_spread: cfg.delay_spread_median_s
            * (distance / 1000.0).sqrt()
            * 10f64.powf(cfg.delay_spread_sigma_db * z / 10.0),
        angular_spread: cfg.angular_spread_median_deg
            * 10f64.powf(cfg.angular_spread_sigma_db * y / 10.0),
        shadowing: 10f64.powf(cfg.shadowing_sigma_db * x / 10.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalAnchor {
    User(usize),
    BaseStation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterKind {
    Local(LocalAnchor),
    Single,
    Twin,
}

impl ClusterKind {
    pub fn is_local(&self) -> bool {
        matches!(self, ClusterKind::Local(_))
    }
}

/// Ellipsoid semi-axes of one side of a cluster, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spreads {
    /// Delay-direction (radial) extent `a_C`.
    pub a: f64,
    /// Azimuthal extent `b_C`.
    pub b: f64,
    /// Elevation extent `h_C`.
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: usize,
    pub kind: ClusterKind,
    pub bs_side_pos: Point3,
    /// Equals `bs_side_pos` unless the cluster is twin.
    pub ms_side_pos: Point3,
    pub bs_spread: Spreads,
    pub ms_spread: Spreads,
    pub lsp: Lsp,
    /// Twin link delay `tau_link`, seconds; zero for other kinds.
    pub link_delay: f64,
    /// Local clusters have no visibility region: a user's own local cluster
    /// is always visible to it, the BS local cluster to everyone.
    pub vr: Option<VisibilityRegion>,
}

impl Cluster {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: usize,
        kind: ClusterKind,
        bs_side_pos: Point3,
        ms_side_pos: Point3,
        bs_spread: Spreads,
        ms_spread: Spreads,
        lsp: Lsp,
        link_delay: f64,
        vr: Option<VisibilityRegion>,
    ) -> Self {
        for s in [&bs_spread, &ms_spread] {
            assert!(
                s.a > 0.0 && s.b > 0.0 && s.h > 0.0,
                "cluster {id}: spreads must be > 0: {s:?}"
            );
        }
        assert!(link_delay >= 0.0, "cluster {id}: negative link delay");
        assert!(
            bs_side_pos.is_finite() && ms_side_pos.is_finite(),
            "cluster {id}: position not finite"
        );
        assert!(
            bs_side_pos.z >= 0.0 && ms_side_pos.z >= 0.0,
            "cluster {id}: below ground"
        );
        if let ClusterKind::Local(_) = kind {
            assert_eq!(
                bs_spread.a, bs_spread.b,
                "local cluster {id} must have b_C = a_C"
            );
            assert!(
                vr.is_none(),
                "local cluster {id} carries no visibility region"
            );
        } else {
            assert!(vr.is_some(), "cluster {id} needs a visibility region");
        }
        if kind != ClusterKind::Twin {
            assert_eq!(
                bs_side_pos, ms_side_pos,
                "cluster {id}: only twins have two positions"
            );
            assert_eq!(
                link_delay, 0.0,
                "cluster {id}: only twins have a link delay"
            );
        }
        Self {
            id,
            kind,
            bs_side_pos,
            ms_side_pos,
            bs_spread,
            ms_spread,
            lsp,
            link_delay,
            vr,
        }
    }

    /// Whether `user` can see this cluster at all (before the activity test).
    pub fn visible_to(&self, user: &User) -> bool {
        match (self.kind, &self.vr) {
            (ClusterKind::Local(LocalAnchor::User(owner)), _) => owner == user.id,
            (ClusterKind::Local(LocalAnchor::BaseStation), _) => true,
            (_, Some(vr)) => vr.covers(&user.pos),
            (_, None) => false,
        }
    }
}

/// Cluster spreads `(bs side, ms side)` for the given kind.
///
/// `d_c_bs` is the BS-to-cluster distance, `d_c_ms` the MS-side cluster
/// distance used for the twin elevation extent. Angles are radians.
pub fn cluster_spreads(
    kind: ClusterKind,
    d_c_bs: f64,
    d_c_ms: f64,
    delay_spread: f64,
    theta_bs: f64,
    phi_bs: f64,
    theta_ms: f64,
) -> Result<(Spreads, Spreads)> {
    for (name, angle) in [
        ("theta_bs", theta_bs),
        ("phi_bs", phi_bs),
        ("theta_ms", theta_ms),
    ] {
        if !(angle > 0.0 && angle < PI / 2.0) {
            return Err(Error::Domain(format!(
                "{name} = {angle} rad must lie in (0, pi/2)"
            )));
        }
    }
    if !(d_c_bs > 0.0) || d_c_ms < 0.0 || !(delay_spread > 0.0) {
        return Err(Error::Domain(
            "cluster distances and delay spread must be positive".into(),
        ));
    }
    let a = delay_spread * SPEED_OF_LIGHT / 2.0;
    let spreads = match kind {
        ClusterKind::Local(_) => {
            let s = Spreads {
                a,
                b: a,
                h: d_c_bs * theta_bs.tan(),
            };
            (s, s)
        }
        ClusterKind::Single => {
            let s = Spreads {
                a,
                b: d_c_bs * phi_bs.tan(),
                h: d_c_bs * theta_bs.tan(),
            };
            (s, s)
        }
        ClusterKind::Twin => {
            let b = d_c_bs * phi_bs.tan();
            if !(d_c_ms > 0.0) {
                return Err(Error::Domain("twin MS-side distance must be > 0".into()));
            }
            (
                Spreads {
                    a,
                    b,
                    h: d_c_bs * theta_bs.tan(),
                },
                Spreads {
                    a,
                    b,
                    h: d_c_ms * theta_ms.tan(),
                },
            )
        }
    };
    Ok(spreads)
}

/// MS-side distance of a twin cluster from `d_CBS tan(phi_BS) = d_CMS tan(phi_MS)`.
pub fn twin_ms_distance(d_c_bs: f64, phi_bs: f64, phi_ms: f64) -> f64 {
    d_c_bs * phi_bs.tan() / phi_ms.tan()
}

/// Shifted exponential radius `r_min + Exp(mean sigma_r)`.
pub fn draw_cluster_radius(r_min: f64, sigma_r: f64, rng: &mut RandomStream) -> f64 {
    if sigma_r <= 0.0 {
        return r_min;
    }
    r_min + Exp::new(1.0 / sigma_r).expect("positive rate").sample(rng)
}

pub fn base_station(cfg: &ScenarioConfig) -> Point3 {
    Point3::new(0.0, 0.0, cfg.h_bs_m)
}

/// Uniform users on `[-R, R]^2` outside the exclusion disk around the BS.
pub fn place_users(cfg: &ScenarioConfig, rng: &mut RandomStream) -> Result<Vec<User>> {
    let r = cfg.cell_half_side_m;
    let r_th = cfg.exclusion_radius();
    let mut users = Vec::with_capacity(cfg.num_users);
    for id in 0..cfg.num_users {
        let mut attempts = 0;
        let pos = loop {
            if attempts == MAX_PLACEMENT_ATTEMPTS {
                return Err(Error::Config(format!(
                    "could not place user {id} after {MAX_PLACEMENT_ATTEMPTS} attempts"
                )));
            }
            attempts += 1;
            let x = rng.random_range(-r..=r);
            let y = rng.random_range(-r..=r);
            if x.hypot(y) >= r_th {
                break Point3::new(x, y, cfg.h_ms_m);
            }
        };
        users.push(User { id, pos });
    }
    Ok(users)
}

/// Height of single and twin cluster centers.
fn area_cluster_height(cfg: &ScenarioConfig) -> f64 {
    0.5 * (cfg.h_bs_m + cfg.h_ms_m)
}

/// Place the local clusters followed by the Poisson single/twin clusters.
///
/// Cluster ids are indices into the returned vector: user `k`'s local cluster
/// has id `k`, the BS local cluster (if enabled) comes next.
pub fn place_clusters(cfg: &ScenarioConfig, users: &[User], seed: u64) -> Result<Vec<Cluster>> {
    let bs = base_station(cfg);
    let mut clusters = Vec::new();

    for user in users {
        let id = clusters.len();
        let d = user.pos.distance(&bs);
        let lsp = correlated_lsps(cfg, d, &mut substream(seed, Stream::Lsp, &[id as u64]))?;
        let (s, _) = cluster_spreads(
            ClusterKind::Local(LocalAnchor::User(user.id)),
            d,
            0.0,
            lsp.delay_spread,
            cfg.theta_bs(),
            cfg.phi_bs(),
            cfg.theta_ms(),
        )?;
        clusters.push(Cluster::new(
            id,
            ClusterKind::Local(LocalAnchor::User(user.id)),
            user.pos,
            user.pos,
            s,
            s,
            lsp,
            0.0,
            None,
        ));
    }

    if cfg.bs_local_cluster {
        let id = clusters.len();
        // Reference distance for the delay spread is the cell size; the
        // elevation extent uses the cluster's own radius since it sits on the BS.
        let lsp = correlated_lsps(
            cfg,
            cfg.cell_half_side_m,
            &mut substream(seed, Stream::Lsp, &[id as u64]),
        )?;
        let a = lsp.delay_spread * SPEED_OF_LIGHT / 2.0;
        let kind = ClusterKind::Local(LocalAnchor::BaseStation);
        let (s, _) = cluster_spreads(
            kind,
            a,
            0.0,
            lsp.delay_spread,
            cfg.theta_bs(),
            cfg.phi_bs(),
            cfg.theta_ms(),
        )?;
        clusters.push(Cluster::new(id, kind, bs, bs, s, s, lsp, 0.0, None));
    }

    let r = cfg.cell_half_side_m;
    let density = vr_density(cfg.expected_clusters, cfg.vr_radius_m, cfg.vr_transition_m);
    let mean_count = density * (2.0 * r) * (2.0 * r);
    let count = if mean_count > 0.0 {
        let poisson = Poisson::new(mean_count).map_err(|e| Error::Config(e.to_string()))?;
        poisson.sample(&mut substream(seed, Stream::VrCount, &[])) as usize
    } else {
        0
    };

    let height = area_cluster_height(cfg);
    for j in 0..count {
        let id = clusters.len();
        let mut rng = substream(seed, Stream::Cluster, &[j as u64]);
        let vr_center = Point3::new(rng.random_range(-r..=r), rng.random_range(-r..=r), 0.0);
        let kind = if rng.random::<f64>() < cfg.single_fraction {
            ClusterKind::Single
        } else {
            ClusterKind::Twin
        };

        let bearing = bs.bearing_to(&vr_center);
        let angle = if cfg.sigma_phi_c_deg > 0.0 {
            bearing
                + Normal::new(0.0, cfg.sigma_phi_c())
                    .expect("finite std")
                    .sample(&mut rng)
        } else {
            bearing
        };
        let radius = draw_cluster_radius(cfg.r_min_m, cfg.sigma_r_m, &mut rng).max(1e-3);
        let bs_side = Point3::new(radius * angle.cos(), radius * angle.sin(), height);
        let d_c_bs = bs_side.distance(&bs);

        let lsp_distance = bs.horizontal_distance(&vr_center).max(1.0);
        let lsp = correlated_lsps(
            cfg,
            lsp_distance,
            &mut substream(seed, Stream::Lsp, &[id as u64]),
        )?;

        let (ms_side, d_c_ms, link_delay) = match kind {
            ClusterKind::Twin => {
                let d_c_ms = twin_ms_distance(d_c_bs, cfg.phi_bs(), cfg.phi_ms());
                let to_bs = bs - vr_center;
                let h = to_bs.horizontal_norm();
                let (ux, uy) = if h > 1e-9 {
                    (to_bs.x / h, to_bs.y / h)
                } else {
                    (1.0, 0.0)
                };
                let ms_side =
                    Point3::new(vr_center.x + d_c_ms * ux, vr_center.y + d_c_ms * uy, height);
                let link = if cfg.twin_link_delay_mean_s > 0.0 {
                    Exp::new(1.0 / cfg.twin_link_delay_mean_s)
                        .expect("positive rate")
                        .sample(&mut rng)
                } else {
                    0.0
                };
                (ms_side, d_c_ms, link)
            }
            _ => (bs_side, 0.0, 0.0),
        };
        let (bs_spread, ms_spread) = cluster_spreads(
            kind,
            d_c_bs,
            d_c_ms,
            lsp.delay_spread,
            cfg.theta_bs(),
            cfg.phi_bs(),
            cfg.theta_ms(),
        )?;
        let vr = VisibilityRegion::new(vr_center, cfg.vr_radius_m, cfg.vr_transition_m, id);
        clusters.push(Cluster::new(
            id,
            kind,
            bs_side,
            ms_side,
            bs_spread,
            ms_spread,
            lsp,
            link_delay,
            Some(vr),
        ));
    }
    Ok(clusters)
}

/// One realization of geometry: users, clusters and their parameters.
#[derive(Debug, Clone)]
pub struct CellDrop {
    pub seed: u64,
    pub cfg: ScenarioConfig,
    pub bs: Point3,
    pub users: Vec<User>,
    pub clusters: Vec<Cluster>,
}

impl CellDrop {
    pub fn generate(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        let users = place_users(cfg, &mut substream(seed, Stream::Users, &[]))?;
        let clusters = place_clusters(cfg, &users, seed)?;
        Ok(Self {
            seed,
            cfg: cfg.clone(),
            bs: base_station(cfg),
            users,
            clusters,
        })
    }

    /// Assemble a drop from hand-built parts (fixtures, what-if studies).
    /// User and cluster ids must equal their indices.
    pub fn from_parts(
        cfg: &ScenarioConfig,
        seed: u64,
        users: Vec<User>,
        clusters: Vec<Cluster>,
    ) -> Self {
        assert!(
            users.iter().enumerate().all(|(i, u)| u.id == i),
            "user ids must be indices"
        );
        assert!(
            clusters.iter().enumerate().all(|(i, c)| c.id == i),
            "cluster ids must be indices"
        );
        Self {
            seed,
            cfg: cfg.clone(),
            bs: base_station(cfg),
            users,
            clusters,
        }
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }
}
