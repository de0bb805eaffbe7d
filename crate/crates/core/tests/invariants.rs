//! Property tests for the algebraic invariants of the core types.

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use qjump_core::toy::{discrete_update, outcome_probability, ToyState, UpdateForm};
use qjump_core::{
    expect_ket, jump_superop, innovation_superop, lindblad_dissipator, tensor, HilbertSpace,
    LinearOperator, StateVector, C64,
};

fn complex_matrix(dim: usize) -> impl Strategy<Value = Array2<C64>> {
    proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), dim * dim).prop_map(move |v| {
        Array2::from_shape_vec((dim, dim), v.into_iter().map(|(r, i)| C64::new(r, i)).collect())
            .unwrap()
    })
}

fn ket(dim: usize) -> impl Strategy<Value = Array1<C64>> {
    proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), dim)
        .prop_map(|v| Array1::from(v.into_iter().map(|(r, i)| C64::new(r, i)).collect::<Vec<_>>()))
        .prop_filter("nonzero", |a| a.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3)
}

fn hermitize(m: &Array2<C64>) -> Array2<C64> {
    let n = m.nrows();
    let mut h = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)].conj());
        }
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_is_associative(a in complex_matrix(2), b in complex_matrix(2), c in complex_matrix(3)) {
        let a = LinearOperator::new(a, false).unwrap();
        let b = LinearOperator::new(b, false).unwrap();
        let c = LinearOperator::new(c, false).unwrap();
        let s_ab = HilbertSpace::new(vec![2, 2]).unwrap();
        let s_bc = HilbertSpace::new(vec![2, 3]).unwrap();
        let s_ab_c = HilbertSpace::new(vec![4, 3]).unwrap();
        let s_a_bc = HilbertSpace::new(vec![2, 6]).unwrap();
        let left = tensor(&s_ab_c, &[&tensor(&s_ab, &[&a, &b]).unwrap(), &c]).unwrap();
        let right = tensor(&s_a_bc, &[&a, &tensor(&s_bc, &[&b, &c]).unwrap()]).unwrap();
        for (l, r) in left.matrix().iter().zip(right.matrix().iter()) {
            prop_assert!((l - r).norm() < 1e-12);
        }
    }

    #[test]
    fn superoperators_are_trace_free(c in complex_matrix(3), psi in ket(3)) {
        let c = LinearOperator::new(c, false).unwrap();
        let rho = StateVector::new(psi).unwrap().to_density().unwrap();
        let tr = |m: &Array2<C64>| (0..3).map(|i| m[(i, i)]).sum::<C64>();
        prop_assert!(tr(&lindblad_dissipator(&c, &rho).unwrap()).norm() < 1e-10);
        prop_assert!(tr(&innovation_superop(&c, &rho).unwrap()).norm() < 1e-10);
        if let Ok(g) = jump_superop(&c, &rho) {
            prop_assert!(tr(&g).norm() < 1e-10);
        }
    }

    #[test]
    fn expectation_ignores_phase_and_scale(
        a in complex_matrix(3),
        psi in ket(3),
        phase in 0.0..std::f64::consts::TAU,
        scale in 0.05..20.0f64,
    ) {
        let op = LinearOperator::new(a, false).unwrap();
        let base = StateVector::new(psi.clone()).unwrap();
        let factor = C64::from_polar(scale, phase);
        let moved = StateVector::new(psi.mapv(|z| z * factor)).unwrap();
        let e0 = expect_ket(&op, &base).unwrap();
        let e1 = expect_ket(&op, &moved).unwrap();
        prop_assert!((e0 - e1).norm() < 1e-10 * (1.0 + e0.norm()));
    }

    #[test]
    fn hermitian_expectation_is_real(a in complex_matrix(4), psi in ket(4)) {
        let h = hermitize(&a);
        let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-12);
        let op = LinearOperator::new(h, true).unwrap();
        let s = StateVector::new(psi).unwrap();
        let e = expect_ket(&op, &s).unwrap();
        prop_assert!(e.im.abs() < 1e-10 * scale);
    }

    #[test]
    fn toy_charts_stay_consistent(
        theta0 in 0.01..3.1f64,
        eps in 0.001..0.5f64,
        rs in proptest::collection::vec(proptest::bool::ANY, 1..200),
    ) {
        let mut s = ToyState::new(theta0, eps, 1.0).unwrap();
        for (k, r) in rs.into_iter().enumerate() {
            let r = if r { 1 } else { -1 };
            // interleave the two update forms
            let form = if k % 2 == 0 { UpdateForm::Circular } else { UpdateForm::Hyperbolic };
            s = discrete_update(&s, r, form);
            prop_assert!(s.chart_mismatch() < 1e-10);
        }
    }

    #[test]
    fn toy_outcomes_normalized(theta in 0.0..std::f64::consts::PI, eps in -1.5..1.5f64) {
        let p = outcome_probability(theta, eps, 1) + outcome_probability(theta, eps, -1);
        prop_assert!((p - 1.0).abs() < 1e-14);
    }
}
