mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use spdtraj::spdcore::{
    check_psd, gram_matrix, lerm_distance, matrix_exp, matrix_log, rbf_kernel, SpdPoint,
};

fn default_gamma_grid() -> Vec<f64> {
    (-5..=2).map(|k| 2f64.powi(2 * k)).collect()
}

#[test]
fn metric_axioms_on_random_triples() {
    let mut r = rng(1);
    for _ in 0..200 {
        let p = random_point(&mut r, 8);
        let q = random_point(&mut r, 8);
        let s = random_point(&mut r, 8);
        let pq = lerm_distance(&p, &q).unwrap();
        assert_eq!(pq, lerm_distance(&q, &p).unwrap());
        assert!(lerm_distance(&p, &p).unwrap() < 1e-10);
        let slack = lerm_distance(&p, &s).unwrap() + lerm_distance(&s, &q).unwrap() - pq;
        assert!(slack >= -1e-9, "triangle slack {slack}");
    }
}

#[test]
fn log_inverts_taylor_exponential() {
    let mut r = rng(2);
    for m in [1, 2, 5, 8] {
        for _ in 0..10 {
            let s = random_matrix(&mut r, m, m);
            let sym = (&s + s.transpose()) * 0.5;
            let p = taylor_exp(&sym);
            let p = (&p + p.transpose()) * 0.5;
            let log = matrix_log(&p).unwrap();
            assert!(rel_err(&log, &sym) < 1e-10, "m={m}");
            assert!(rel_err(&matrix_exp(&sym).unwrap(), &p) < 1e-12);
        }
    }
}

#[test]
fn distance_to_scaled_copy_is_closed_form() {
    // log(sP) = log P + ln(s) I, so d(P, sP) = |ln s| sqrt(m).
    let mut r = rng(3);
    for s in [0.5, 2.0, 10.0] {
        let m = 6;
        let p = random_spd(&mut r, m);
        let d = lerm_distance(&SpdPoint::new(p.clone()).unwrap(), &SpdPoint::new(&p * s).unwrap()).unwrap();
        assert!((d - s.ln().abs() * (m as f64).sqrt()).abs() < 1e-10);
    }
}

#[test]
fn orthogonal_conjugation_preserves_distance() {
    let mut r = rng(4);
    for _ in 0..20 {
        let p = random_spd(&mut r, 5);
        let q = random_spd(&mut r, 5);
        let o = random_orthogonal(&mut r, 5);
        let conj = |a: &DMatrix<f64>| {
            let c = &o * a * o.transpose();
            SpdPoint::new((&c + c.transpose()) * 0.5).unwrap()
        };
        let before = lerm_distance(&SpdPoint::new(p.clone()).unwrap(), &SpdPoint::new(q.clone()).unwrap()).unwrap();
        let after = lerm_distance(&conj(&p), &conj(&q)).unwrap();
        assert!((before - after).abs() < 1e-10 * before.max(1.0));
    }
}

#[test]
fn rbf_gram_is_psd_over_default_grid() {
    let mut r = rng(5);
    let points: Vec<SpdPoint> = (0..50).map(|_| random_point(&mut r, 8)).collect();
    for gamma in default_gamma_grid() {
        let k = gram_matrix(&points, gamma).unwrap();
        let report = check_psd(&k.values, 1e-8).unwrap();
        assert!(report.passed, "gamma {gamma}: min eig {}", report.min_eig);
        // Entry-wise oracle from the distance definition.
        let d = lerm_distance(&points[3], &points[17]).unwrap();
        assert!((k.values[(3, 17)] - (-gamma * d * d).exp()).abs() < 1e-14);
        assert_eq!(k.values[(3, 3)], 1.0);
    }
}

#[test]
fn non_spd_inputs_are_rejected() {
    let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(SpdPoint::new(indefinite).is_err());
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(SpdPoint::new(asym).is_err());
    let p = SpdPoint::new(DMatrix::identity(2, 2)).unwrap();
    let q = SpdPoint::new(DMatrix::identity(3, 3)).unwrap();
    assert!(lerm_distance(&p, &q).is_err());
    assert!(rbf_kernel(&p, &p, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_lies_in_unit_interval(seed in any::<u64>(), m in 1usize..6, gamma in 1e-3f64..10.0) {
        let mut r = rng(seed);
        let p = random_point(&mut r, m);
        let q = random_point(&mut r, m);
        let k = rbf_kernel(&p, &q, gamma).unwrap();
        prop_assert!(k > 0.0 || k == 0.0);
        prop_assert!(k <= 1.0);
        prop_assert_eq!(rbf_kernel(&p, &p, gamma).unwrap(), 1.0);
    }

    #[test]
    fn inverse_is_reflection_through_identity(seed in any::<u64>(), m in 1usize..6) {
        // log(P^-1) = -log P, so d(P, I) = d(P^-1, I) and d(P, P^-1) = 2 d(P, I).
        let mut r = rng(seed);
        let p = random_spd(&mut r, m);
        let inv = p.clone().try_inverse().unwrap();
        let inv = (&inv + inv.transpose()) * 0.5;
        let id = SpdPoint::new(DMatrix::identity(m, m)).unwrap();
        let pp = SpdPoint::new(p).unwrap();
        let pi = SpdPoint::new(inv).unwrap();
        let a = lerm_distance(&pp, &id).unwrap();
        let b = lerm_distance(&pi, &id).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
        prop_assert!((lerm_distance(&pp, &pi).unwrap() - 2.0 * a).abs() < 1e-9 * a.max(1.0));
    }
}
