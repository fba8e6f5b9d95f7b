//! Rayleigh–Schrödinger recursion against brute-force branch fitting, and
//! the closed forms for the first two coefficients.

use nalgebra::DMatrix;
use narrow_spectra::model::{Grading, ModelSettings, OscillatorModel};
use narrow_spectra::oscillator::MatrixElementTable;
use narrow_spectra::perturbation::{
    brute_force_branch_fit, closed_form_q1_q2, default_fit_ladder, random_instance, rs_expand,
    DensePerturbationProblem,
};
use narrow_spectra::DomainProfile;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn fifty_random_instances_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let p = random_instance(&mut rng, 8, 4);
        let j = rng.gen_range(0..p.dim());
        let order = rng.gen_range(1..=4);
        let rs = rs_expand(&p, j, order, 1.0).unwrap();
        let fit = brute_force_branch_fit(&p, j, &default_fit_ladder(), order).unwrap();
        for (n, (a, b)) in rs.q.iter().zip(&fit.q).enumerate() {
            assert!((a - b).abs() < 1e-6, "case {case}, q{}: rs {a} fit {b}", n + 1);
        }
    }
}

#[test]
fn six_by_six_third_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mu: Vec<f64> = (0..6).map(|i| i as f64 * 0.8 + rng.gen_range(0.0..0.2)).collect();
    let v: Vec<DMatrix<f64>> = (0..3)
        .map(|_| {
            let a = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
            (&a + a.transpose()) * 0.5
        })
        .collect();
    let p = DensePerturbationProblem::new(mu, v).unwrap();
    for j in 0..6 {
        let rs = rs_expand(&p, j, 3, 1.0).unwrap();
        let fit = brute_force_branch_fit(&p, j, &default_fit_ladder(), 3).unwrap();
        for (a, b) in rs.q.iter().zip(&fit.q) {
            assert!((a - b).abs() < 1e-7, "level {j}: {a} vs {b}");
        }
    }
}

fn table_from(p: &DensePerturbationProblem) -> MatrixElementTable {
    MatrixElementTable {
        entries: p
            .v_orders
            .iter()
            .map(|v| (0..v.nrows()).map(|i| (0..v.ncols()).map(|k| v[(i, k)]).collect()).collect())
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn closed_form_q1_is_first_order_up_to_sign(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = random_instance(&mut rng, 8, 2);
        if p.orders() < 2 {
            let s = p.dim();
            p.v_orders.push(DMatrix::zeros(s, s));
        }
        let j = rng.gen_range(0..p.dim());
        let rs = rs_expand(&p, j, 2, 1.0).unwrap();
        let cf = closed_form_q1_q2(&table_from(&p), &p.h0_diag, j).unwrap();
        prop_assert!((cf.q1 + rs.q[0]).abs() < 1e-12);
        prop_assert!((cf.q2 + rs.q[1]).abs() < 1e-12);
    }
}

#[test]
fn oscillator_closed_forms_match_recursion() {
    let p = DomainProfile::new(1.0, 2, vec![1.0 / (2.0 * std::f64::consts::PI.powi(2)), 0.01], 2.0, 2.0).unwrap();
    let model = OscillatorModel::build(&p, 4, 2, Grading::General, None, &ModelSettings::default()).unwrap();
    for j in 0..2 {
        let e = model.expansion(j, 2).unwrap();
        let cf = model.closed_form(j).unwrap();
        let report = model.sign_report(j).unwrap();
        assert_eq!(report.convention.sign, -1.0, "{}", report.summary());
        let (q1, q2) = cf.signed(report.convention.sign);
        assert!((q1 - e.q[0]).abs() < 1e-10);
        assert!((q2 - e.q[1]).abs() < 1e-10 * e.q[1].abs().max(1.0));
    }
}

#[test]
fn basis_truncation_stability() {
    let p = DomainProfile::new(1.0, 2, vec![0.05, 0.01], 2.0, 2.0).unwrap();
    let model = OscillatorModel::build(
        &p,
        2,
        1,
        Grading::General,
        None,
        &ModelSettings {
            basis_size: Some(48),
            ..Default::default()
        },
    )
    .unwrap();
    let q = |s: usize| rs_expand(&model.truncated_problem(s).unwrap(), 0, 2, 1.0).unwrap().q;
    let (a, b, c) = (q(12), q(24), q(48));
    assert!((a[0] - b[0]).abs() < 1e-10 && (b[0] - c[0]).abs() < 1e-10);
    let (d1, d2) = ((a[1] - b[1]).abs(), (b[1] - c[1]).abs());
    assert!(d2 <= d1, "q2 changes {d1:e} then {d2:e}");
}

#[test]
fn constant_grading_regrades_to_general() {
    let p = DomainProfile::new(1.0, 2, vec![0.08], 2.0, 2.0).unwrap();
    let s = ModelSettings::default();
    let general = OscillatorModel::build(&p, 6, 1, Grading::General, None, &s).unwrap();
    let constant = OscillatorModel::build(&p, 3, 1, Grading::Constant, None, &s).unwrap();
    let g = general.expansion(0, 6).unwrap();
    let c = constant.expansion(0, 3).unwrap().regrade(2);
    assert!((g.exponent_step - c.exponent_step).abs() < 1e-15);
    for (n, (a, b)) in g.q.iter().zip(&c.q).enumerate() {
        assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "q{}: {a} vs {b}", n + 1);
    }
}
