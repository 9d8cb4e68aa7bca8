use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use gscm_sched::receiver::{
    capacity_upper_bound, log_det_capacity, log_det_capacity_outer, log_det_identity_plus_direct,
    sample_correlation, sum_rate, three_user_capacity, three_user_matrix, zf_sum_rate_closed_form,
    zf_weights, CMatrix, CorrelationMatrix, NoiseModel,
};
use gscm_sched::rng::{substream, Stream};
use gscm_sched::Error;

fn gaussian(m: usize, k: usize, seed: u64) -> CMatrix {
    let mut rng = substream(seed, Stream::Fading, &[]);
    CMatrix::from_fn(m, k, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Normalized Gram of random columns: always a valid correlation matrix.
fn random_correlation(m: usize, k: usize, seed: u64) -> CMatrix {
    let mut h = gaussian(m, k, seed);
    for mut c in h.column_iter_mut() {
        let n = c.norm();
        c /= Complex64::from(n);
    }
    let mut r = h.adjoint() * &h;
    for i in 0..k {
        r[(i, i)] = Complex64::from(1.0);
    }
    r
}

fn magnitudes_and_phases(r: &CMatrix) -> ([f64; 3], [f64; 3]) {
    let e = [r[(0, 1)], r[(0, 2)], r[(1, 2)]];
    (e.map(|z| z.norm().min(1.0)), e.map(|z| z.arg()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn three_user_closed_form_matches_determinant(m in 1usize..12, seed in any::<u64>(), p in 0.01f64..100.0) {
        let r = random_correlation(m, 3, seed);
        let (zeta, beta) = magnitudes_and_phases(&r);
        let rebuilt = three_user_matrix(zeta, beta);
        prop_assert!((&rebuilt - &r).norm() < 1e-12);
        // rank-deficient draws can sit on the boundary of the PSD cone
        match (three_user_capacity(zeta, beta, p), log_det_identity_plus_direct(&r, p)) {
            (Ok(closed), Ok(direct)) => {
                prop_assert!((closed - direct).abs() < 1e-9 * direct.abs().max(1.0), "{closed} vs {direct}");
                let bound = capacity_upper_bound(&CorrelationMatrix::new(r).unwrap(), p).unwrap();
                prop_assert!((closed - bound).abs() < 1e-8 * bound.max(1.0));
            }
            (Err(Error::NotPsd(_)), Err(Error::NotPsd(_))) => {}
            other => prop_assert!(false, "closed form and determinant disagree: {other:?}"),
        }
    }

    #[test]
    fn correlation_never_helps(m in 2usize..12, seed in any::<u64>(), p in 0.01f64..100.0) {
        let r = random_correlation(m, 3, seed);
        let (zeta, beta) = magnitudes_and_phases(&r);
        let c = three_user_capacity(zeta, beta, p).unwrap();
        let ceiling = 3.0 * (1.0 + p).log2();
        prop_assert!(c <= ceiling + 1e-12);
        if zeta.iter().any(|&z| z > 1e-3) {
            prop_assert!(c < ceiling);
        }
    }

    #[test]
    fn bound_decreases_as_correlation_grows(k in 2usize..7, seed in any::<u64>(), p in 0.01f64..100.0, t in 0.0f64..1.0) {
        // log det(I + p (I + t (R - I))) is concave in t with zero slope at t = 0
        let r = random_correlation(k + 3, k, seed);
        let identity = CMatrix::identity(k, k);
        let at = |s: f64| identity.clone() + (&r - &identity) * Complex64::from(s);
        let lo = capacity_upper_bound(&CorrelationMatrix::new(at(t)).unwrap(), p).unwrap();
        let hi = capacity_upper_bound(&CorrelationMatrix::new(at(1.0)).unwrap(), p).unwrap();
        prop_assert!(hi <= lo + 1e-9);
        prop_assert!(lo <= k as f64 * (1.0 + p).log2() + 1e-9);
    }

    #[test]
    fn zf_removes_interference(m in 1usize..16, k in 1usize..16, seed in any::<u64>()) {
        let k = k.min(m);
        let h = gaussian(m, k, seed);
        let Ok(zf) = zf_weights(&h, 1e6) else { return Ok(()) };
        let residual = &zf.w * &h - CMatrix::identity(k, k);
        prop_assert!(residual.norm() < 1e-9, "residual {}", residual.norm());
        prop_assert!(zf.condition >= 1.0);
    }

    #[test]
    fn zf_rate_matches_closed_form(m in 2usize..16, k in 1usize..8, seed in any::<u64>(), p in 0.1f64..100.0, noise in 0.01f64..10.0) {
        let k = k.min(m);
        let h = gaussian(m, k, seed);
        let Ok(zf) = zf_weights(&h, 1e6) else { return Ok(()) };
        let a = sum_rate(&h, &zf.w, p, noise, NoiseModel::Filtered);
        let b = zf_sum_rate_closed_form(&h, p, noise).unwrap();
        prop_assert!((a - b).abs() < 1e-8 * b.max(1.0), "{a} vs {b}");
    }

    #[test]
    fn sum_rate_grows_with_power(m in 2usize..16, k in 1usize..8, seed in any::<u64>(), p in 0.01f64..100.0, factor in 1.0f64..10.0) {
        let k = k.min(m);
        let h = gaussian(m, k, seed);
        let Ok(zf) = zf_weights(&h, 1e6) else { return Ok(()) };
        for model in [NoiseModel::Filtered, NoiseModel::UnitFloor] {
            let lo = sum_rate(&h, &zf.w, p, 1.0, model);
            let hi = sum_rate(&h, &zf.w, p * factor, 1.0, model);
            prop_assert!(hi >= lo - 1e-12);
        }
    }

    #[test]
    fn sylvester_identity(m in 1usize..12, k in 1usize..12, seed in any::<u64>(), p in 0.01f64..10.0) {
        let h = gaussian(m, k, seed) * Complex64::from(0.3);
        let a = log_det_capacity(&h, p).unwrap();
        let b = log_det_capacity_outer(&h, p).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
    }

    #[test]
    fn sample_correlation_is_valid(m in 1usize..10, k in 1usize..6, n in 2usize..20, seed in any::<u64>()) {
        let ensemble: Vec<CMatrix> = (0..n as u64).map(|r| gaussian(m, k, seed ^ r.wrapping_mul(0x9e37_79b9))).collect();
        let r = sample_correlation(&ensemble).unwrap();
        prop_assert_eq!(r.dim(), k);
        for i in 0..k {
            for j in 0..k {
                prop_assert!(r.matrix()[(i, j)].norm() <= 1.0 + 1e-12);
            }
        }
    }
}

#[test]
fn three_user_rejects_invalid_inputs() {
    assert!(matches!(
        three_user_capacity([1.2, 0.0, 0.0], [0.0; 3], 1.0),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        three_user_capacity([-0.1, 0.0, 0.0], [0.0; 3], 1.0),
        Err(Error::Domain(_))
    ));
    // users 2 and 3 both copy user 1 yet are orthogonal to each other
    assert!(matches!(
        three_user_capacity([1.0, 1.0, 0.0], [0.0; 3], 10.0),
        Err(Error::NotPsd(_))
    ));
    assert!(CorrelationMatrix::three_user([1.0, 1.0, 0.0], [0.0; 3]).is_err());
    assert_eq!(
        three_user_capacity([0.0; 3], [0.3, -1.0, 2.0], 4.0).unwrap(),
        3.0 * 5f64.log2()
    );
}

#[test]
fn sample_correlation_needs_two_draws() {
    assert!(sample_correlation(&[gaussian(4, 2, 1)]).is_err());
}
