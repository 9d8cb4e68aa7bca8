//! Multipath synthesis and uplink channel assembly.
//!
//! Each cluster carries `N_p` multipath components (MPCs) scattered around
//! its center. Per fading realization every MPC gets one complex Rayleigh
//! coefficient that belongs to the scatterer, so two users seeing the same
//! cluster share it; the user-specific part of an MPC amplitude is
//! deterministic (path loss, visibility gain, cluster attenuation, shadowing
//! and the carrier phase of the MPC delay).
//!
//! The array is a ULA along the x-axis with broadside +y. Antenna `m` sees an
//! MPC with azimuth `phi` through the phase `alpha * m * sin(phi)` with
//! `alpha = -2 pi d / lambda`. The channel is narrowband: delays only enter
//! through the carrier phase.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, Normal};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::geometry::{Point3, SPEED_OF_LIGHT};
use crate::rng::{substream, RandomStream, Stream};
use crate::scenario::{CellDrop, Cluster, ClusterKind, LocalAnchor, Spreads, User};

/// One multipath component. Amplitude and delay depend on the user and are
/// computed by [`mpc_delay`] and [`mpc_amplitude`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mpc {
    pub bs_side_pos: Point3,
    pub ms_side_pos: Point3,
    /// Azimuth of arrival at the BS from array broadside, radians.
    pub azimuth: f64,
    /// Elevation of arrival at the BS, radians. Not used by the ULA steering.
    pub elevation: f64,
}

/// Zero-mean Gaussian with standard deviation `sigma`, truncated to `|r| <= limit`.
pub fn truncated_gaussian(sigma: f64, limit: f64, rng: &mut RandomStream) -> f64 {
    if sigma <= 0.0 || limit <= 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    loop {
        let r = normal.sample(rng);
        if r.abs() <= limit {
            return r;
        }
    }
}

/// Arrival angles `(azimuth, elevation)` of a scatterer at `p` seen from `bs`.
pub fn arrival_angles(bs: &Point3, p: &Point3) -> (f64, f64) {
    let d = *p - *bs;
    let rho = d.horizontal_norm();
    let azimuth = if rho > 0.0 {
        (d.x / rho).clamp(-1.0, 1.0).asin()
    } else {
        0.0
    };
    (azimuth, d.z.atan2(rho))
}

fn side_offset(bs: &Point3, center: &Point3, spread: &Spreads, unit: [f64; 3]) -> Point3 {
    let d = *center - *bs;
    let rho = d.horizontal_norm();
    let (rx, ry) = if rho > 1e-9 {
        (d.x / rho, d.y / rho)
    } else {
        (1.0, 0.0)
    };
    let radial = Point3::new(rx, ry, 0.0) * (0.5 * spread.a * unit[0]);
    let tangential = Point3::new(-ry, rx, 0.0) * (0.5 * spread.b * unit[1]);
    let vertical = Point3::new(0.0, 0.0, 0.5 * spread.h * unit[2]);
    radial + tangential + vertical
}

/// Scatter `n_p` MPCs inside `cluster`.
///
/// Offsets along the delay, azimuth and elevation axes are truncated
/// Gaussians with `sigma = spread / 2` and truncation at `2 sigma`. Twin
/// clusters reuse the same normalized offsets on both sides. MPC points are
/// virtual scatterers and may dip below ground level.
pub fn draw_mpcs(cluster: &Cluster, bs: &Point3, n_p: usize, rng: &mut RandomStream) -> Vec<Mpc> {
    (0..n_p)
        .map(|_| {
            let unit: [f64; 3] = std::array::from_fn(|_| truncated_gaussian(1.0, 2.0, rng));
            let bs_side_pos = cluster.bs_side_pos
                + side_offset(bs, &cluster.bs_side_pos, &cluster.bs_spread, unit);
            let ms_side_pos = if cluster.kind == ClusterKind::Twin {
                cluster.ms_side_pos
                    + side_offset(bs, &cluster.ms_side_pos, &cluster.ms_spread, unit)
            } else {
                bs_side_pos
            };
            let (azimuth, elevation) = arrival_angles(bs, &bs_side_pos);
            Mpc {
                bs_side_pos,
                ms_side_pos,
                azimuth,
                elevation,
            }
        })
        .collect()
}

/// MPCs of every cluster in the drop, each from its own substream.
pub fn draw_all_mpcs(drop: &CellDrop) -> Vec<Vec<Mpc>> {
    drop.clusters
        .iter()
        .map(|c| {
            let mut rng = substream(drop.seed, Stream::Mpc, &[c.id as u64]);
            draw_mpcs(c, &drop.bs, drop.cfg.mpcs_per_cluster, &mut rng)
        })
        .collect()
}

/// Line-of-sight delay between user and BS, the reference delay `tau_0`.
pub fn los_delay(user: &Point3, bs: &Point3) -> f64 {
    user.distance(bs) / SPEED_OF_LIGHT
}

/// Cluster delay `(d_CBS + d_CMS + d_C) / c0 + tau_link`.
///
/// `d_CMS` is the distance from the MS-side cluster center to the user and
/// `d_C` the distance between the two sides of a twin (zero otherwise).
pub fn cluster_delay(cluster: &Cluster, user: &Point3, bs: &Point3) -> f64 {
    let d_c_bs = cluster.bs_side_pos.distance(bs);
    let d_c_ms = cluster.ms_side_pos.distance(user);
    let d_c = cluster.bs_side_pos.distance(&cluster.ms_side_pos);
    (d_c_bs + d_c_ms + d_c) / SPEED_OF_LIGHT + cluster.link_delay
}

/// Cluster power attenuation `max(exp(-k (tau_C - tau_0)), exp(-k (tau_B - tau_0)))`.
pub fn cluster_attenuation(tau_c: f64, decay: f64, tau_0: f64, tau_b: f64) -> f64 {
    (-decay * (tau_c - tau_0))
        .exp()
        .max((-decay * (tau_b - tau_0)).exp())
}

/// NLoS micro-cell path loss `26 log10 d + 20 log10(4 pi / lambda)`, dB.
pub fn path_loss_db(d: f64, wavelength: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!(
            "path-loss distance must be > 0, got {d}"
        )));
    }
    Ok(26.0 * d.log10() + 20.0 * (4.0 * PI / wavelength).log10())
}

pub fn path_loss_linear(d: f64, wavelength: f64) -> Result<f64> {
    Ok(10f64.powf(-path_loss_db(d, wavelength)? / 10.0))
}

/// Deterministic large-scale factors of the link between a user and a cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterLink {
    pub path_loss: f64,
    pub vr_gain: f64,
    pub attenuation: f64,
    pub shadowing: f64,
}

impl ClusterLink {
    /// Expected received power per antenna from the whole cluster.
    pub fn power(&self) -> f64 {
        self.path_loss * self.vr_gain * self.vr_gain * self.attenuation * self.shadowing
    }

    /// Geometry-only amplitude `sqrt(L_p) A_VR sqrt(A_C)` (no shadowing).
    pub fn visibility_amplitude(&self) -> f64 {
        self.path_loss.sqrt() * self.vr_gain * self.attenuation.sqrt()
    }

    /// Amplitude of an MPC without its fading coefficient or phase.
    pub fn mpc_scale(&self) -> f64 {
        self.path_loss.sqrt() * self.vr_gain * (self.attenuation * self.shadowing).sqrt()
    }
}

/// Visibility gain of `cluster` for `user`, with an optional moved VR center.
pub fn visibility_gain(
    cluster: &Cluster,
    user: &User,
    wavelength: f64,
    vr_center: Option<&Point3>,
) -> f64 {
    match (cluster.kind, &cluster.vr) {
        (ClusterKind::Local(LocalAnchor::User(owner)), _) => {
            if owner == user.id {
                1.0
            } else {
                0.0
            }
        }
        (ClusterKind::Local(LocalAnchor::BaseStation), _) => 1.0,
        (_, Some(vr)) => {
            vr.gain_with_center(vr_center.unwrap_or(&vr.center), &user.pos, wavelength)
        }
        (_, None) => 0.0,
    }
}

/// Large-scale factors with explicit cluster delay and VR center, so that
/// estimated geometry can be plugged in.
pub fn cluster_link_with(
    cfg: &ScenarioConfig,
    bs: &Point3,
    user: &User,
    cluster: &Cluster,
    tau_c: f64,
    vr_center: Option<&Point3>,
) -> Result<ClusterLink> {
    let d = user.pos.distance(bs);
    let tau_0 = d / SPEED_OF_LIGHT;
    Ok(ClusterLink {
        path_loss: path_loss_linear(d, cfg.wavelength())?,
        vr_gain: visibility_gain(cluster, user, cfg.wavelength(), vr_center),
        attenuation: cluster_attenuation(
            tau_c,
            cfg.decay_per_s,
            tau_0,
            tau_0 + cfg.cutoff_excess_delay_s,
        ),
        shadowing: if cfg.apply_shadowing {
            cluster.lsp.shadowing
        } else {
            1.0
        },
    })
}

pub fn cluster_link(
    cfg: &ScenarioConfig,
    bs: &Point3,
    user: &User,
    cluster: &Cluster,
) -> Result<ClusterLink> {
    cluster_link_with(
        cfg,
        bs,
        user,
        cluster,
        cluster_delay(cluster, &user.pos, bs),
        None,
    )
}

/// Delay of one MPC: both legs through its scatterer points plus the twin link delay.
pub fn mpc_delay(mpc: &Mpc, cluster: &Cluster, user: &Point3, bs: &Point3) -> f64 {
    (mpc.bs_side_pos.distance(bs) + mpc.ms_side_pos.distance(user)) / SPEED_OF_LIGHT
        + cluster.link_delay
}

/// Deterministic part of an MPC amplitude: scale times `exp(-j 2 pi f_c tau)`.
pub fn mpc_gain(link: &ClusterLink, delay: f64, carrier_hz: f64) -> Complex64 {
    Complex64::from_polar(link.mpc_scale(), -2.0 * PI * carrier_hz * delay)
}

/// Rayleigh MPC coefficient, circularly symmetric with power `1 / n_p` so the
/// powers of a cluster's MPCs sum to one in expectation.
pub fn fading_coefficient(n_p: usize, rng: &mut RandomStream) -> Complex64 {
    let s = (0.5 / n_p as f64).sqrt();
    let normal = Normal::new(0.0, s).expect("finite sigma");
    Complex64::new(normal.sample(rng), normal.sample(rng))
}

/// Full MPC amplitude for one fading draw taken from `rng`.
pub fn mpc_amplitude(
    cfg: &ScenarioConfig,
    bs: &Point3,
    user: &User,
    cluster: &Cluster,
    mpc: &Mpc,
    rng: &mut RandomStream,
) -> Result<Complex64> {
    let link = cluster_link(cfg, bs, user, cluster)?;
    let gain = mpc_gain(
        &link,
        mpc_delay(mpc, cluster, &user.pos, bs),
        cfg.carrier_hz,
    );
    Ok(gain * fading_coefficient(cfg.mpcs_per_cluster, rng))
}

/// MPC coefficients of every cluster for one fading realization.
#[derive(Debug, Clone)]
pub struct Fading {
    pub realization: u64,
    coefficients: Vec<Vec<Complex64>>,
}

impl Fading {
    pub fn draw(drop: &CellDrop, realization: u64) -> Self {
        let n_p = drop.cfg.mpcs_per_cluster;
        let coefficients = (0..drop.clusters.len())
            .map(|j| {
                let mut rng = substream(drop.seed, Stream::Fading, &[realization, j as u64]);
                (0..n_p)
                    .map(|_| fading_coefficient(n_p, &mut rng))
                    .collect()
            })
            .collect();
        Self {
            realization,
            coefficients,
        }
    }

    pub fn cluster(&self, id: usize) -> &[Complex64] {
        &self.coefficients[id]
    }
}

/// Complex uplink channel; column `k` belongs to user `users[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub h: DMatrix<Complex64>,
    pub users: Vec<usize>,
}

impl ChannelMatrix {
    pub fn antennas(&self) -> usize {
        self.h.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.h.ncols()
    }

    /// Sub-matrix with the columns of the given user ids, in that order.
    pub fn select(&self, ids: &[usize]) -> ChannelMatrix {
        let cols: Vec<usize> = ids
            .iter()
            .map(|id| {
                self.users
                    .iter()
                    .position(|u| u == id)
                    .expect("user present in channel matrix")
            })
            .collect();
        ChannelMatrix {
            h: self.h.select_columns(&cols),
            users: ids.to_vec(),
        }
    }
}

/// Local clusters of every user, indexed by user id: its own local cluster
/// and the BS local cluster. These bypass the activity test.
pub fn local_clusters(drop: &CellDrop) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); drop.users.len()];
    for c in &drop.clusters {
        match c.kind {
            ClusterKind::Local(LocalAnchor::User(owner)) if owner < out.len() => {
                out[owner].push(c.id)
            }
            ClusterKind::Local(LocalAnchor::BaseStation) => {
                out.iter_mut().for_each(|v| v.push(c.id))
            }
            _ => {}
        }
    }
    out
}

/// Assemble the `M x |users|` channel.
///
/// Column of user `k` sums, over its active clusters `active[k]` plus its
/// local clusters, the MPC amplitudes times the ULA steering phase.
pub fn assemble_channel(
    drop: &CellDrop,
    mpcs: &[Vec<Mpc>],
    active: &[Vec<usize>],
    users: &[usize],
    fading: &Fading,
) -> Result<ChannelMatrix> {
    let cfg = &drop.cfg;
    let m_ant = cfg.num_antennas;
    let alpha = -2.0 * PI * cfg.antenna_spacing() / cfg.wavelength();
    let local = local_clusters(drop);
    let mut h = DMatrix::<Complex64>::zeros(m_ant, users.len());
    let mut paths: Vec<(Complex64, f64)> = Vec::new();

    for (col, &uid) in users.iter().enumerate() {
        let user = &drop.users[uid];
        paths.clear();
        for &cid in active[uid].iter().chain(&local[uid]) {
            let cluster = &drop.clusters[cid];
            let link = cluster_link(cfg, &drop.bs, user, cluster)?;
            if link.vr_gain == 0.0 {
                continue;
            }
            for (mpc, coeff) in mpcs[cid].iter().zip(fading.cluster(cid)) {
                let gain = mpc_gain(
                    &link,
                    mpc_delay(mpc, cluster, &user.pos, &drop.bs),
                    cfg.carrier_hz,
                );
                paths.push((gain * coeff, mpc.azimuth.sin()));
            }
        }
        for m in 0..m_ant {
            let phase = alpha * m as f64;
            h[(m, col)] = paths
                .iter()
                .map(|&(a, s)| a * Complex64::cis(phase * s))
                .sum();
        }
    }
    Ok(ChannelMatrix {
        h,
        users: users.to_vec(),
    })
}

const DUMP_MAGIC: &[u8; 8] = b"GSCMCHAN";
const DUMP_VERSION: u32 = 1;

/// Write a channel dump.
///
/// Layout, all little-endian: 8-byte magic `GSCMCHAN`, `u32` version (1),
/// `u32` reserved (0), `u64` rows `M`, `u64` columns `K`, `u64` seed, then
/// `M * K` pairs of `f64` (re, im) in row-major order (antenna-major).
pub fn write_channel_dump<W: Write>(mut w: W, h: &DMatrix<Complex64>, seed: u64) -> Result<()> {
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    w.write_all(&(h.nrows() as u64).to_le_bytes())?;
    w.write_all(&(h.ncols() as u64).to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    for m in 0..h.nrows() {
        for k in 0..h.ncols() {
            let z = h[(m, k)];
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a dump written by [`write_channel_dump`]; returns `(seed, H)`.
pub fn read_channel_dump<R: Read>(mut r: R) -> Result<(u64, DMatrix<Complex64>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != DUMP_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    r.read_exact(&mut b4)?;
    let mut b8 = [0u8; 8];
    let mut next_u64 = |r: &mut R| -> Result<u64> {
        r.read_exact(&mut b8)?;
        Ok(u64::from_le_bytes(b8))
    };
    let rows = next_u64(&mut r)? as usize;
    let cols = next_u64(&mut r)? as usize;
    let seed = next_u64(&mut r)?;
    let mut h = DMatrix::<Complex64>::zeros(rows, cols);
    let mut f = [0u8; 8];
    for m in 0..rows {
        for k in 0..cols {
            r.read_exact(&mut f)?;
            let re = f64::from_le_bytes(f);
            r.read_exact(&mut f)?;
            let im = f64::from_le_bytes(f);
            h[(m, k)] = Complex64::new(re, im);
        }
    }
    Ok((seed, h))
}
