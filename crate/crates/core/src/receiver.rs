//! Zero-forcing detection and rate/capacity evaluation.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Zero-forcing weights `W = H^+` (`K_s x M`) and the condition number of `H`.
#[derive(Debug, Clone)]
pub struct ZfWeights {
    pub w: CMatrix,
    pub condition: f64,
}

/// Pseudo-inverse of `h` (`M x K_s`, `M >= K_s`) through its SVD.
///
/// Fails with [`Error::Singular`] when the condition number exceeds `cap`.
pub fn zf_weights(h: &CMatrix, cap: f64) -> Result<ZfWeights> {
    let (m, k) = h.shape();
    if k > m {
        return Err(Error::Domain(format!(
            "zero forcing needs M >= K_s, got M = {m}, K_s = {k}"
        )));
    }
    if k == 0 {
        return Ok(ZfWeights {
            w: CMatrix::zeros(0, m),
            condition: 1.0,
        });
    }
    let svd = h.clone().svd(true, true);
    let s = &svd.singular_values;
    let (smax, smin) = s.iter().fold((0.0f64, f64::INFINITY), |(hi, lo), &x| {
        (hi.max(x), lo.min(x))
    });
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(condition <= cap) {
        return Err(Error::Singular(condition));
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^H");
    // W = V S^-1 U^H
    let mut vs = v_t.adjoint();
    for (j, &sj) in s.iter().enumerate() {
        vs.column_mut(j).scale_mut(1.0 / sj);
    }
    Ok(ZfWeights {
        w: vs * u.adjoint(),
        condition,
    })
}

/// How receiver noise enters the per-stream SINR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    /// Filtered noise power `sigma^2 |w_k|^2`.
    #[default]
    Filtered,
    /// Unit noise floor, `1 + interference`.
    UnitFloor,
}

/// Per-stream SINRs of linear detector `w` on channel `h` with equal power
/// `p_total / K_s`.
pub fn sinrs(h: &CMatrix, w: &CMatrix, p_total: f64, noise: f64, model: NoiseModel) -> Vec<f64> {
    let k = h.ncols();
    assert_eq!(w.shape(), (k, h.nrows()), "detector shape must be K_s x M");
    if k == 0 {
        return Vec::new();
    }
    let p = p_total / k as f64;
    let g = w * h;
    (0..k)
        .map(|i| {
            let signal = p * g[(i, i)].norm_sqr();
            let interference: f64 = (0..k)
                .filter(|&j| j != i)
                .map(|j| p * g[(i, j)].norm_sqr())
                .sum();
            let floor = match model {
                NoiseModel::Filtered => noise * w.row(i).norm_squared(),
                NoiseModel::UnitFloor => 1.0,
            };
            signal / (floor + interference)
        })
        .collect()
}

/// Realized sum-rate `sum_k log2(1 + SINR_k)`, bits/s/Hz.
pub fn sum_rate(h: &CMatrix, w: &CMatrix, p_total: f64, noise: f64, model: NoiseModel) -> f64 {
    sinrs(h, w, p_total, noise, model)
        .into_iter()
        .map(|s| (1.0 + s).log2())
        .sum()
}

/// ZF sum-rate from `diag((H^H H)^-1)`, without forming `W`.
pub fn zf_sum_rate_closed_form(h: &CMatrix, p_total: f64, noise: f64) -> Result<f64> {
    let k = h.ncols();
    if k == 0 {
        return Ok(0.0);
    }
    let p = p_total / k as f64;
    let gram = h.adjoint() * h;
    let inv = gram.try_inverse().ok_or(Error::Singular(f64::INFINITY))?;
    Ok((0..k)
        .map(|i| (1.0 + p / (noise * inv[(i, i)].re)).log2())
        .sum())
}

/// `log2 det(I + p A)` for Hermitian positive definite `I + p A`, via Cholesky.
fn log2_det_identity_plus(a: &CMatrix, p: f64) -> Result<f64> {
    let n = a.nrows();
    let mut m = a * Complex64::from(p);
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    let l = m.cholesky().ok_or(Error::NotPsd(f64::NAN))?;
    Ok(2.0
        * l.l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.re.log2())
            .sum::<f64>())
}

/// `log2 det(I + p H^H H)` for one realization.
pub fn log_det_capacity(h: &CMatrix, p: f64) -> Result<f64> {
    log2_det_identity_plus(&(h.adjoint() * h), p)
}

/// `log2 det(I + p H H^H)`; equal to [`log_det_capacity`] by Sylvester's identity.
pub fn log_det_capacity_outer(h: &CMatrix, p: f64) -> Result<f64> {
    log2_det_identity_plus(&(h * h.adjoint()), p)
}

/// Sample mean of [`log_det_capacity`] over a fading ensemble.
pub fn ergodic_capacity(ensemble: &[CMatrix], p: f64) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::Domain("empty channel ensemble".into()));
    }
    let mut acc = 0.0;
    for h in ensemble {
        acc += log_det_capacity(h, p)?;
    }
    Ok(acc / ensemble.len() as f64)
}

/// Hermitian, unit-diagonal, positive semidefinite channel correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    r: CMatrix,
}

impl CorrelationMatrix {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(r: CMatrix) -> Result<Self> {
        let n = r.nrows();
        if r.ncols() != n {
            return Err(Error::Domain("correlation matrix must be square".into()));
        }
        for i in 0..n {
            if (r[(i, i)] - Complex64::from(1.0)).norm() > Self::TOLERANCE {
                return Err(Error::Domain(format!(
                    "diagonal entry {i} is {}",
                    r[(i, i)]
                )));
            }
            for j in 0..i {
                if (r[(i, j)] - r[(j, i)].conj()).norm() > Self::TOLERANCE {
                    return Err(Error::Domain(format!(
                        "entry ({i}, {j}) breaks Hermitian symmetry"
                    )));
                }
            }
        }
        let min_eig = min_eigenvalue(&r);
        if min_eig < -Self::TOLERANCE * n.max(1) as f64 {
            return Err(Error::NotPsd(min_eig));
        }
        Ok(Self { r })
    }

    /// Three-user matrix from magnitudes `(z12, z13, z23)` and phases `(b12, b13, b23)`.
    pub fn three_user(zeta: [f64; 3], beta: [f64; 3]) -> Result<Self> {
        Self::new(three_user_matrix(zeta, beta))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.r
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }
}

fn min_eigenvalue(r: &CMatrix) -> f64 {
    if r.is_empty() {
        return 0.0;
    }
    let herm = (r + r.adjoint()) * Complex64::from(0.5);
    herm.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `R` with `r_mn = z_mn exp(j b_mn)` above the diagonal; no validity check.
pub fn three_user_matrix(zeta: [f64; 3], beta: [f64; 3]) -> CMatrix {
    let r12 = Complex64::from_polar(zeta[0], beta[0]);
    let r13 = Complex64::from_polar(zeta[1], beta[1]);
    let r23 = Complex64::from_polar(zeta[2], beta[2]);
    let one = Complex64::from(1.0);
    CMatrix::from_row_slice(
        3,
        3,
        &[
            one,
            r12,
            r13,
            r12.conj(),
            one,
            r23,
            r13.conj(),
            r23.conj(),
            one,
        ],
    )
}

/// Large-array capacity approximation `log2 det(I + p R)`.
pub fn capacity_upper_bound(r: &CorrelationMatrix, p: f64) -> Result<f64> {
    let herm = (&r.r + r.r.adjoint()) * Complex64::from(0.5);
    Ok(herm
        .symmetric_eigenvalues()
        .iter()
        .map(|&l| (1.0 + p * l.max(0.0)).log2())
        .sum())
}

/// Correlation of channel columns estimated over a fading ensemble, normalized
/// by mean column energies so the diagonal is one.
pub fn sample_correlation(ensemble: &[CMatrix]) -> Result<CorrelationMatrix> {
    if ensemble.len() < 2 {
        return Err(Error::Domain(
            "sample correlation needs at least two realizations".into(),
        ));
    }
    let (m, k) = ensemble[0].shape();
    let mut gram = CMatrix::zeros(k, k);
    for h in ensemble {
        if h.shape() != (m, k) {
            return Err(Error::Domain("ensemble matrices differ in shape".into()));
        }
        gram += h.adjoint() * h;
    }
    gram /= Complex64::from(ensemble.len() as f64);
    let energy: Vec<f64> = (0..k).map(|i| gram[(i, i)].re).collect();
    let r = CMatrix::from_fn(k, k, |i, j| {
        if i == j {
            Complex64::from(1.0)
        } else if energy[i] > 0.0 && energy[j] > 0.0 {
            gram[(i, j)] / (energy[i] * energy[j]).sqrt()
        } else {
            Complex64::from(0.0)
        }
    });
    CorrelationMatrix::new(r)
}

/// Closed-form three-user `log2 det(I + p R)`:
/// `det = (1+p)^3 - p^2 (1+p) sum z^2 + 2 p^3 z12 z13 z23 cos(b12 + b23 - b13)`.
///
/// Errors when the determinant is not positive, which happens for magnitude
/// and phase combinations that do not form a valid correlation matrix.
pub fn three_user_capacity(zeta: [f64; 3], beta: [f64; 3], p: f64) -> Result<f64> {
    if zeta.iter().any(|z| !(0.0..=1.0).contains(z)) {
        return Err(Error::Domain(format!(
            "correlation magnitudes must lie in [0, 1], got {zeta:?}"
        )));
    }
    let [z12, z13, z23] = zeta;
    let [b12, b13, b23] = beta;
    let a = 1.0 + p;
    let det = a.powi(3) - p * p * a * (z12 * z12 + z13 * z13 + z23 * z23)
        + 2.0 * p.powi(3) * z12 * z13 * z23 * (b12 + b23 - b13).cos();
    if det <= 0.0 {
        return Err(Error::NotPsd(det));
    }
    Ok(det.log2())
}

/// `log2 det(I + p R)` from the matrix determinant, for any Hermitian `R`.
pub fn log_det_identity_plus_direct(r: &CMatrix, p: f64) -> Result<f64> {
    let n = r.nrows();
    let m = CMatrix::identity(n, n) + r * Complex64::from(p);
    let det = m.determinant().re;
    if det <= 0.0 {
        return Err(Error::NotPsd(det));
    }
    Ok(det.log2())
}
