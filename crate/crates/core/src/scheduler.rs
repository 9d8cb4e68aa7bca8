//! User scheduling.
//!
//! The geometry-based schedulers (GUS) only ever see the visibility matrix
//! `V`, whose entry `v[k][j] = sqrt(L_p) A_VR sqrt(A_C)` summarises how strongly
//! user `k` illuminates cluster `j`. The full-CSI greedy baseline (GWC) works
//! on the channel matrix itself.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::channel::{cluster_delay, cluster_link_with, ChannelMatrix};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::rng::RandomStream;
use crate::scenario::{CellDrop, Cluster, User};

/// Row-sparse real matrix. Rows hold `(column, value)` pairs sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        for row in &rows {
            assert!(
                row.windows(2).all(|w| w[0].0 < w[1].0),
                "row columns must be strictly increasing"
            );
            assert!(row.iter().all(|&(j, _)| j < ncols), "column out of range");
        }
        Self { ncols, rows }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        let rows = rows
            .iter()
            .map(|r| {
                assert_eq!(r.len(), ncols, "ragged dense rows");
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect()
            })
            .collect();
        Self { ncols, rows }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, k: usize) -> &[(usize, f64)] {
        &self.rows[k]
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        let row = &self.rows[k];
        row.binary_search_by_key(&j, |&(c, _)| c)
            .map_or(0.0, |i| row[i].1)
    }

    pub fn row_norm(&self, k: usize) -> f64 {
        self.rows[k].iter().map(|&(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, a: usize, b: usize) -> f64 {
        let (ra, rb) = (&self.rows[a], &self.rows[b]);
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < ra.len() && j < rb.len() {
            match ra[i].0.cmp(&rb[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += ra[i].1 * rb[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        // an empty float sum is -0.0
        (self.rows.iter().flatten().map(|&(_, v)| v * v).sum::<f64>() + 0.0).sqrt()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut d = vec![0.0; self.ncols];
                for &(j, v) in r {
                    d[j] = v;
                }
                d
            })
            .collect()
    }

    /// `self - other`, entrywise.
    pub fn difference(&self, other: &SparseRows) -> SparseRows {
        assert_eq!(
            (self.nrows(), self.ncols),
            (other.nrows(), other.ncols),
            "shape mismatch"
        );
        let rows = (0..self.nrows())
            .map(|k| {
                let mut cols: Vec<usize> = self.rows[k]
                    .iter()
                    .chain(&other.rows[k])
                    .map(|&(j, _)| j)
                    .collect();
                cols.sort_unstable();
                cols.dedup();
                cols.into_iter()
                    .filter_map(|j| {
                        let d = self.get(k, j) - other.get(k, j);
                        (d != 0.0).then_some((j, d))
                    })
                    .collect()
            })
            .collect();
        SparseRows {
            ncols: self.ncols,
            rows,
        }
    }
}

/// Nonnegative `K x N_C'` visibility matrix; rows are users, columns clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMatrix(SparseRows);

impl VisibilityMatrix {
    pub fn new(inner: SparseRows) -> Self {
        assert!(
            inner
                .rows
                .iter()
                .flatten()
                .all(|&(_, v)| v >= 0.0 && v.is_finite()),
            "visibility entries must be finite and nonnegative"
        );
        Self(inner)
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        Self::new(SparseRows::from_dense(rows))
    }

    pub fn num_users(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_clusters(&self) -> usize {
        self.0.ncols()
    }

    pub fn entries(&self) -> &SparseRows {
        &self.0
    }

    pub fn get(&self, user: usize, cluster: usize) -> f64 {
        self.0.get(user, cluster)
    }

    pub fn row(&self, user: usize) -> &[(usize, f64)] {
        self.0.row(user)
    }

    pub fn row_norm(&self, user: usize) -> f64 {
        self.0.row_norm(user)
    }

    /// `|v_a . v_b| / (|v_a| |v_b|)`, zero when either row vanishes.
    pub fn normalized_correlation(&self, a: usize, b: usize) -> f64 {
        let den = self.row_norm(a) * self.row_norm(b);
        if den == 0.0 {
            0.0
        } else {
            self.0.dot(a, b).abs() / den
        }
    }
}

/// One entry of `V` from explicit cluster delay and VR center.
///
/// Only clusters with a visibility region enter `V`. Local clusters are
/// private to one terminal (or common to all users, for the BS one), so
/// they carry no information about shared scatterers; their columns are zero.
pub fn visibility_entry(
    cfg: &ScenarioConfig,
    bs: &Point3,
    user: &User,
    cluster: &Cluster,
    tau_c: f64,
    vr_center: Option<&Point3>,
) -> Result<f64> {
    if cluster.kind.is_local() {
        return Ok(0.0);
    }
    Ok(cluster_link_with(cfg, bs, user, cluster, tau_c, vr_center)?.visibility_amplitude())
}

/// Build `V` for a drop.
pub fn build_v_matrix(drop: &CellDrop) -> Result<VisibilityMatrix> {
    let rows = drop
        .users
        .iter()
        .map(|user| {
            let mut row = Vec::new();
            for cluster in &drop.clusters {
                if cluster.kind.is_local() || !cluster.visible_to(user) {
                    continue;
                }
                let tau_c = cluster_delay(cluster, &user.pos, &drop.bs);
                let v = visibility_entry(&drop.cfg, &drop.bs, user, cluster, tau_c, None)?;
                if v > 0.0 {
                    row.push((cluster.id, v));
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VisibilityMatrix::new(SparseRows::new(
        drop.clusters.len(),
        rows,
    )))
}

/// Clusters whose power `v^2` is at least `eta` times the row's total power.
pub fn active_clusters(row: &[(usize, f64)], eta: f64) -> Vec<usize> {
    let total: f64 = row.iter().map(|&(_, v)| v * v).sum();
    if total == 0.0 {
        return Vec::new();
    }
    row.iter()
        .filter(|&&(_, v)| v * v >= eta * total)
        .map(|&(j, _)| j)
        .collect()
}

/// Active-cluster set `C(k)` of every user.
pub fn activity_sets(v: &VisibilityMatrix, eta: f64) -> Vec<Vec<usize>> {
    (0..v.num_users())
        .map(|k| active_clusters(v.row(k), eta))
        .collect()
}

/// `|C(m) ∩ C(n)|` for sorted activity sets.
pub fn common_cluster_count(sets: &[Vec<usize>], m: usize, n: usize) -> usize {
    let (a, b) = (&sets[m], &sets[n]);
    a.iter().filter(|j| b.binary_search(j).is_ok()).count()
}

/// Mean of [`common_cluster_count`] over all pairs of `selected`; zero for
/// fewer than two users.
pub fn mean_pairwise_common(sets: &[Vec<usize>], selected: &[usize]) -> f64 {
    let mut total = 0usize;
    let mut pairs = 0usize;
    for (i, &a) in selected.iter().enumerate() {
        for &b in &selected[i + 1..] {
            total += common_cluster_count(sets, a, b);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total as f64 / pairs as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerKind {
    /// GUS with correlation pruning at `eps_h`.
    GusThreshold,
    /// GUS picking the least correlated user with the latest pick.
    GusMinCorr,
    /// Full-CSI semi-orthogonal greedy baseline.
    Gwc,
    Random,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 4] = [
        SchedulerKind::GusThreshold,
        SchedulerKind::GusMinCorr,
        SchedulerKind::Gwc,
        SchedulerKind::Random,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SchedulerKind::GusThreshold => "gus-threshold",
            SchedulerKind::GusMinCorr => "gus-mincorr",
            SchedulerKind::Gwc => "gwc",
            SchedulerKind::Random => "rs",
        }
    }

    pub fn is_geometry_based(&self) -> bool {
        matches!(
            self,
            SchedulerKind::GusThreshold | SchedulerKind::GusMinCorr
        )
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheduler '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleResult {
    /// Selected user ids in pick order.
    pub selected: Vec<usize>,
    /// Per pick: the norm (first and threshold picks), the correlation with
    /// the previous pick (min-correlation picks), or the residual norm (GWC).
    pub diagnostics: Vec<f64>,
    pub method: SchedulerKind,
}

/// First index of the maximum of `score` over `pool` (pool kept in id order).
fn argmax_by(pool: &[usize], score: impl Fn(usize) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &k in pool {
        let s = score(k);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best.map(|(k, _)| k)
}

/// GUS with pruning: repeatedly take the largest row norm, then drop every
/// remaining user whose normalized correlation with that pick is `>= eps_h`.
/// Ties go to the lowest user id. May return fewer than `k_s` users.
pub fn gus_threshold(v: &VisibilityMatrix, k_s: usize, eps_h: f64) -> ScheduleResult {
    let mut pool: Vec<usize> = (0..v.num_users()).collect();
    let mut selected = Vec::with_capacity(k_s);
    let mut diagnostics = Vec::with_capacity(k_s);
    while selected.len() < k_s {
        let Some(pick) = argmax_by(&pool, |k| v.row_norm(k)) else {
            break;
        };
        selected.push(pick);
        diagnostics.push(v.row_norm(pick));
        pool.retain(|&k| k != pick && v.normalized_correlation(k, pick) < eps_h);
    }
    ScheduleResult {
        selected,
        diagnostics,
        method: SchedulerKind::GusThreshold,
    }
}

/// GUS by minimum correlation: the largest row norm first, then each next
/// pick minimises its normalized correlation with the latest pick. Equal
/// correlations (typically zero, for disjoint clusters) go to the larger row
/// norm, then to the lowest id.
pub fn gus_mincorr(v: &VisibilityMatrix, k_s: usize) -> ScheduleResult {
    let mut pool: Vec<usize> = (0..v.num_users()).collect();
    let mut selected = Vec::with_capacity(k_s);
    let mut diagnostics = Vec::with_capacity(k_s);
    if k_s > 0 {
        if let Some(first) = argmax_by(&pool, |k| v.row_norm(k)) {
            selected.push(first);
            diagnostics.push(v.row_norm(first));
            pool.retain(|&k| k != first);
        }
    }
    while selected.len() < k_s && !pool.is_empty() {
        let latest = *selected.last().expect("non-empty");
        let mut pick = pool[0];
        let mut best = (v.normalized_correlation(pick, latest), v.row_norm(pick));
        for &k in &pool[1..] {
            let cand = (v.normalized_correlation(k, latest), v.row_norm(k));
            if cand.0 < best.0 || (cand.0 == best.0 && cand.1 > best.1) {
                (pick, best) = (k, cand);
            }
        }
        diagnostics.push(v.normalized_correlation(pick, latest));
        selected.push(pick);
        pool.retain(|&k| k != pick);
    }
    ScheduleResult {
        selected,
        diagnostics,
        method: SchedulerKind::GusMinCorr,
    }
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Semi-orthogonal greedy selection on full CSI.
///
/// Each step takes the candidate with the largest component orthogonal to
/// the span of the users picked so far, then keeps only candidates whose
/// normalized correlation with that span, `|P h_k| / |h_k|`, is below `eps_g`.
/// Candidates with a vanishing orthogonal component are skipped.
pub fn gwc(h: &ChannelMatrix, k_s: usize, eps_g: f64) -> ScheduleResult {
    const RANK_TOL: f64 = 1e-20;
    let n = h.num_users();
    let columns: Vec<Vec<Complex64>> = (0..n)
        .map(|c| h.h.column(c).iter().copied().collect())
        .collect();
    let energy: Vec<f64> = columns.iter().map(|c| norm_sqr(c)).collect();
    let mut residual = columns.clone();
    let mut pool: Vec<usize> = (0..n).filter(|&c| energy[c] > 0.0).collect();
    let mut selected = Vec::with_capacity(k_s);
    let mut diagnostics = Vec::with_capacity(k_s);

    while selected.len() < k_s {
        let Some(pick) = argmax_by(&pool, |c| norm_sqr(&residual[c])) else {
            break;
        };
        let r2 = norm_sqr(&residual[pick]);
        pool.retain(|&c| c != pick);
        if r2 <= RANK_TOL * energy[pick] {
            continue;
        }
        selected.push(h.users[pick]);
        diagnostics.push(r2.sqrt());
        let scale = 1.0 / r2.sqrt();
        let u: Vec<Complex64> = residual[pick].iter().map(|z| z * scale).collect();
        for &c in &pool {
            let proj: Complex64 = u.iter().zip(&residual[c]).map(|(a, b)| a.conj() * b).sum();
            for (r, a) in residual[c].iter_mut().zip(&u) {
                *r -= a * proj;
            }
        }
        pool.retain(|&c| {
            let in_span = (1.0 - norm_sqr(&residual[c]) / energy[c]).max(0.0).sqrt();
            in_span < eps_g
        });
    }
    ScheduleResult {
        selected,
        diagnostics,
        method: SchedulerKind::Gwc,
    }
}

/// [`gwc`] with `eps_g` chosen from `grid` to maximise `rate` of the selection.
/// Ties keep the earliest grid value. Returns the result and the chosen threshold.
pub fn gwc_search(
    h: &ChannelMatrix,
    k_s: usize,
    grid: &[f64],
    mut rate: impl FnMut(&[usize]) -> f64,
) -> (ScheduleResult, f64) {
    let mut best: Option<(ScheduleResult, f64, f64)> = None;
    for &eps in grid {
        let result = gwc(h, k_s, eps);
        let r = rate(&result.selected);
        if best.as_ref().is_none_or(|(_, _, b)| r > *b) {
            best = Some((result, eps, r));
        }
    }
    let (result, eps, _) = best.expect("grid must be non-empty");
    (result, eps)
}

/// Uniform `k_s`-subset of `0..k` without replacement.
pub fn random_selection(k: usize, k_s: usize, rng: &mut RandomStream) -> Result<ScheduleResult> {
    if k_s > k {
        return Err(Error::Config(format!("cannot select {k_s} of {k} users")));
    }
    let selected = rand::seq::index::sample(rng, k, k_s).into_vec();
    Ok(ScheduleResult {
        diagnostics: vec![0.0; selected.len()],
        selected,
        method: SchedulerKind::Random,
    })
}

/// Channel coefficients the BS has to estimate per scheduling interval.
pub fn estimation_load(method: SchedulerKind, m: usize, k: usize, k_s: usize) -> usize {
    match method {
        SchedulerKind::Gwc => m * k,
        _ => m * k_s,
    }
}
