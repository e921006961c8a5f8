mod common;

use common::{random_endo, random_triple, rng};
use proptest::prelude::*;
use qclab::algebra::{endo_inner, four_part_decompose, project_p, project_sp1, project_torsion_space, EndoMatrix};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_triples_are_quaternionic(seed in any::<u64>(), n in 1usize..=2) {
        let t = random_triple(n, &mut rng(seed));
        prop_assert!(t.relation_residual() < 1e-12);
    }

    #[test]
    fn four_parts_sum_back_and_follow_sign_pattern(seed in any::<u64>(), n in 1usize..=2) {
        let mut r = rng(seed);
        let t = random_triple(n, &mut r);
        let psi = random_endo(n, &mut r);
        let split = four_part_decompose(&psi, &t).unwrap();
        prop_assert!(split.sum().sub(&psi).max_abs() < 1e-12);
        prop_assert!(split.sign_residual(&t) < 1e-12);
        let parts = split.parts();
        for i in 0..4 {
            for j in (i + 1)..4 {
                prop_assert!(endo_inner(parts[i], parts[j]).unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projectors_are_idempotent_and_orthogonal(seed in any::<u64>(), n in 1usize..=2) {
        let mut r = rng(seed);
        let t = random_triple(n, &mut r);
        let psi = random_endo(n, &mut r);
        let phi = random_endo(n, &mut r);
        let p = project_p(&psi, &t).unwrap();
        let tor = project_torsion_space(&phi, &t).unwrap();
        prop_assert!(project_p(&p, &t).unwrap().sub(&p).max_abs() < 1e-12);
        prop_assert!(project_torsion_space(&tor, &t).unwrap().sub(&tor).max_abs() < 1e-12);
        prop_assert!(endo_inner(&p, &tor).unwrap().abs() < 1e-12);
        for s in 0..3 {
            prop_assert!(endo_inner(&p, t.get(s)).unwrap().abs() < 1e-12);
            prop_assert!(endo_inner(&tor, t.get(s)).unwrap().abs() < 1e-12);
        }
        // Ψ = P + Σ a_s I_s + torsion part
        let a = project_sp1(&psi, &t).unwrap();
        let rebuilt = project_p(&psi, &t).unwrap()
            .add(&t.combination(&a.0))
            .add(&project_torsion_space(&psi, &t).unwrap());
        prop_assert!(rebuilt.sub(&psi).max_abs() < 1e-12);
    }

    #[test]
    fn sp1_projection_reads_off_coefficients(seed in any::<u64>(), c in prop::array::uniform3(-2.0f64..2.0)) {
        let t = random_triple(2, &mut rng(seed));
        let a = project_sp1(&t.combination(&c), &t).unwrap();
        for (got, want) in a.0.iter().zip(c) {
            prop_assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn p_commutes_with_the_triple(seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = random_triple(2, &mut r);
        let p = project_p(&random_endo(2, &mut r), &t).unwrap();
        prop_assert!(p.add(&p.transpose()).max_abs() < 1e-12);
        for s in 0..3 {
            prop_assert!(p.commutator(t.get(s)).max_abs() < 1e-12);
        }
    }
}

#[test]
fn identity_lies_in_the_first_part() {
    let t = random_triple(1, &mut rng(5));
    let split = four_part_decompose(&EndoMatrix::identity(1), &t).unwrap();
    assert!(split.p_ppp.sub(&EndoMatrix::identity(1)).max_abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // In dimension 4 the symmetric endomorphisms commuting with a quaternion
    // triple are the multiples of the identity.
    #[test]
    fn symmetric_first_part_is_scalar_when_n_is_one(seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = random_triple(1, &mut r);
        let psi = random_endo(1, &mut r).sym();
        let split = four_part_decompose(&psi, &t).unwrap();
        let scalar = EndoMatrix::identity(1).scale(psi.trace() / 4.0);
        prop_assert!(split.p_ppp.sub(&scalar).max_abs() < 1e-12);
    }
}
