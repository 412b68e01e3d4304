//! Second-quantized states over a registry of bosonic modes.
//!
//! Photonic modes are labelled by spatial path and polarization. Each atomic
//! ensemble contributes one collective bosonic mode, and attenuators dump
//! light into dedicated loss modes. States are sparse maps from occupation
//! vectors to amplitudes with a global excitation cutoff.

mod density;
mod mixed;
mod registry;
mod state;

pub use density::{reduced_density, reduced_density_mixed, DensityMatrix, DEFAULT_SUBSPACE_BOUND};
pub use mixed::{MixedProjection, MixedState};
pub use registry::{photon_name, ModeId, ModeKind, ModeRegistry, Polarization};
pub use state::{BasisVector, OccupationPattern, Projection, PureState, DROP_TOLERANCE};

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_1_SQRT_2;
    use std::sync::Arc;

    use num_complex::Complex64;
    use proptest::prelude::*;

    use super::*;
    use crate::linalg::CMatrix;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn two_mode_registry() -> Arc<ModeRegistry> {
        Arc::new(
            ModeRegistry::with_modes(
                [ModeId::photon("a", Polarization::H), ModeId::photon("b", Polarization::H)],
                6,
            )
            .unwrap(),
        )
    }

    fn atom_photon_registry() -> Arc<ModeRegistry> {
        Arc::new(
            ModeRegistry::with_modes(
                [
                    ModeId::atomic("S1"),
                    ModeId::atomic("S2"),
                    ModeId::photon("p", Polarization::H),
                    ModeId::photon("p", Polarization::V),
                ],
                6,
            )
            .unwrap(),
        )
    }

    fn epr_ap(reg: Arc<ModeRegistry>, alpha: f64, beta: f64) -> PureState {
        PureState::from_terms(
            reg,
            [
                (vec![("S1", 1), ("p:H", 1)], c(alpha)),
                (vec![("S2", 1), ("p:V", 1)], c(beta)),
            ],
        )
        .unwrap()
    }

    fn hadamard() -> CMatrix {
        CMatrix::from_real_rows(&[
            vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2],
            vec![FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
        ])
    }

    #[test]
    fn create_on_vacuum_and_ladder_factor() {
        let reg = two_mode_registry();
        let one = PureState::vacuum(reg.clone()).create("a:H").unwrap();
        assert_eq!(one.amplitude_of(&[("a:H", 1)]).unwrap(), c(1.0));
        let two = one.create("a:H").unwrap();
        assert!((two.amplitude_of(&[("a:H", 2)]).unwrap() - c(2f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn collective_excitation_from_vacuum() {
        let reg = atom_photon_registry();
        let s = PureState::vacuum(reg).create("S1").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.amplitude_of(&[("S1", 1)]).unwrap(), c(1.0));
    }

    #[test]
    fn unknown_mode_is_an_error() {
        let reg = two_mode_registry();
        assert!(matches!(
            PureState::vacuum(reg).create("zz"),
            Err(crate::Error::UnknownMode(_))
        ));
    }

    #[test]
    fn identity_unitary_is_noop() {
        let reg = atom_photon_registry();
        let psi = epr_ap(reg, 0.6, 0.8);
        let out = psi.apply_mode_unitary(&["p:H", "p:V"], &CMatrix::identity(2)).unwrap();
        assert!((out.inner_product(&psi).unwrap() - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn single_photon_on_beam_splitter() {
        let reg = two_mode_registry();
        let one = PureState::vacuum(reg).create("a:H").unwrap();
        let out = one.apply_mode_unitary(&["a:H", "b:H"], &hadamard()).unwrap();
        assert!((out.amplitude_of(&[("a:H", 1)]).unwrap() - c(FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!((out.amplitude_of(&[("b:H", 1)]).unwrap() - c(FRAC_1_SQRT_2)).norm() < 1e-15);
    }

    #[test]
    fn hong_ou_mandel_bunching() {
        // (a† + b†)(a† − b†)/2 |0⟩ = (|2,0⟩ − |0,2⟩)/√2
        let reg = two_mode_registry();
        let input = PureState::vacuum(reg).create("a:H").unwrap().create("b:H").unwrap();
        let out = input.apply_mode_unitary(&["a:H", "b:H"], &hadamard()).unwrap();
        assert_eq!(out.len(), 2);
        assert!((out.amplitude_of(&[("a:H", 2)]).unwrap() - c(FRAC_1_SQRT_2)).norm() < 1e-14);
        assert!((out.amplitude_of(&[("b:H", 2)]).unwrap() + c(FRAC_1_SQRT_2)).norm() < 1e-14);
        assert!(out.amplitude_of(&[("a:H", 1), ("b:H", 1)]).unwrap().norm() < 1e-15);
    }

    #[test]
    fn non_unitary_matrix_rejected() {
        let reg = two_mode_registry();
        let m = CMatrix::from_real_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        let err = PureState::vacuum(reg).apply_mode_unitary(&["a:H", "b:H"], &m).unwrap_err();
        assert!(matches!(err, crate::Error::NotUnitary { .. }));
    }

    #[test]
    fn orthogonal_polarizations() {
        let reg = atom_photon_registry();
        let h = PureState::vacuum(reg.clone()).create("p:H").unwrap();
        let v = PureState::vacuum(reg).create("p:V").unwrap();
        assert_eq!(h.inner_product(&v).unwrap(), c(0.0));
        assert!((h.inner_product(&h).unwrap() - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn bell_states_orthogonal() {
        let reg = Arc::new(
            ModeRegistry::with_modes(
                [
                    ModeId::photon("p", Polarization::H),
                    ModeId::photon("p", Polarization::V),
                    ModeId::photon("A", Polarization::H),
                    ModeId::photon("A", Polarization::V),
                ],
                6,
            )
            .unwrap(),
        );
        let s = FRAC_1_SQRT_2;
        let phi_plus = PureState::from_terms(
            reg.clone(),
            [(vec![("p:H", 1), ("A:H", 1)], c(s)), (vec![("p:V", 1), ("A:V", 1)], c(s))],
        )
        .unwrap();
        let psi_minus = PureState::from_terms(
            reg,
            [(vec![("p:H", 1), ("A:V", 1)], c(s)), (vec![("p:V", 1), ("A:H", 1)], c(-s))],
        )
        .unwrap();
        assert!(phi_plus.inner_product(&psi_minus).unwrap().norm() < 1e-15);
    }

    #[test]
    fn project_vacuum_and_entangled_pair() {
        let reg = atom_photon_registry();
        let vac = PureState::vacuum(reg.clone());
        let p = vac.project(&OccupationPattern::new([("p:H", 0), ("p:V", 0)])).unwrap();
        assert_eq!(p.probability, 1.0);

        let psi = epr_ap(reg.clone(), FRAC_1_SQRT_2, FRAC_1_SQRT_2);
        let p = psi.project(&OccupationPattern::new([("p:H", 1)])).unwrap();
        assert!((p.probability - 0.5).abs() < 1e-15);
        let expected =
            PureState::vacuum(reg).create("S1").unwrap().create("p:H").unwrap();
        assert!((p.state.unwrap().fidelity(&expected).unwrap() - 1.0).abs() < 1e-15);

        let none = psi.project(&OccupationPattern::new([("p:H", 2)])).unwrap();
        assert!(none.state.is_none());
        assert_eq!(none.probability, 0.0);
    }

    #[test]
    fn reduced_density_examples() {
        let reg = atom_photon_registry();
        let product = PureState::vacuum(reg.clone()).create("S1").unwrap().create("p:H").unwrap();
        let rho = reduced_density(&product, &["S1", "S2"], DEFAULT_SUBSPACE_BOUND).unwrap();
        let ev = rho.eigenvalues();
        assert!((ev.last().unwrap() - 1.0).abs() < 1e-14);

        // Partial trace of a maximally entangled pair: (1/2, 1/2).
        let psi = epr_ap(reg.clone(), FRAC_1_SQRT_2, FRAC_1_SQRT_2);
        let rho = reduced_density(&psi, &["S1", "S2"], DEFAULT_SUBSPACE_BOUND).unwrap();
        let ev = rho.eigenvalues();
        assert_eq!(ev.len(), 2);
        assert!(ev.iter().all(|l| (l - 0.5).abs() < 1e-14));

        // Schmidt coefficients of α|S1 H⟩ + β|S2 V⟩.
        let (a, b) = (0.3f64.sqrt(), 0.7f64.sqrt());
        let psi = epr_ap(reg, a, b);
        let rho = reduced_density(&psi, &["p:H", "p:V"], DEFAULT_SUBSPACE_BOUND).unwrap();
        let ev = rho.eigenvalues();
        assert!((ev[0] - 0.3).abs() < 1e-14 && (ev[1] - 0.7).abs() < 1e-14);
        assert!((rho.matrix().trace().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn subspace_bound_enforced() {
        let reg = atom_photon_registry();
        let psi = epr_ap(reg, FRAC_1_SQRT_2, FRAC_1_SQRT_2);
        let err = reduced_density(&psi, &["S1", "S2"], 1).unwrap_err();
        assert!(matches!(err, crate::Error::SubspaceTooLarge { dim: 2, bound: 1 }));
    }

    #[test]
    fn mixed_trace_out_matches_dense_partial_trace() {
        let reg = atom_photon_registry();
        let psi = epr_ap(reg, 0.6, 0.8);
        let mixed = MixedState::from_pure(&psi).unwrap();
        let traced = mixed.trace_out(&["p:H", "p:V"]).unwrap();
        assert_eq!(traced.len(), 2);
        let dense = reduced_density_mixed(&traced, &["S1", "S2"], 64).unwrap();
        let direct = reduced_density(&psi, &["S1", "S2"], 64).unwrap();
        assert!(dense.matrix().max_abs_diff(direct.matrix()) < 1e-14);
        assert!((traced.purity().unwrap() - (0.36f64.powi(2) + 0.64f64.powi(2))).abs() < 1e-14);
    }

    #[test]
    fn mixed_weights_validated() {
        let reg = two_mode_registry();
        let v = PureState::vacuum(reg);
        assert!(MixedState::new(vec![(0.5, v.clone()), (0.4, v.clone())]).is_err());
        assert!(MixedState::new(vec![(0.5, v.clone()), (0.5, v)]).is_ok());
    }

    #[test]
    fn discard_requires_definite_occupation() {
        let reg = atom_photon_registry();
        let psi = epr_ap(reg, 0.6, 0.8);
        assert!(psi.discard_modes(&["p:H"]).is_err());
        let proj = psi.project(&OccupationPattern::new([("p:H", 1)])).unwrap().state.unwrap();
        let reduced = proj.discard_modes(&["p:H", "p:V"]).unwrap();
        assert_eq!(reduced.registry().len(), 2);
    }

    // Product of complex Givens rotations; unitary by construction.
    fn random_unitary(dim: usize, params: &[(f64, f64)]) -> CMatrix {
        let mut u = CMatrix::identity(dim);
        let mut k = 0;
        for p in 0..dim {
            for q in (p + 1)..dim {
                let (t, ph) = params[k % params.len()];
                k += 1;
                let e = Complex64::from_polar(1.0, ph);
                let mut g = CMatrix::identity(dim);
                g[(p, p)] = c(t.cos());
                g[(p, q)] = -e * t.sin();
                g[(q, p)] = e.conj() * t.sin();
                g[(q, q)] = c(t.cos());
                u = &u * &g;
            }
        }
        u
    }

    fn three_mode_state(occ: &[(u8, u8, u8, f64, f64)]) -> PureState {
        let reg = Arc::new(
            ModeRegistry::with_modes(
                [
                    ModeId::photon("x", Polarization::H),
                    ModeId::photon("y", Polarization::H),
                    ModeId::photon("z", Polarization::H),
                ],
                6,
            )
            .unwrap(),
        );
        let terms = occ
            .iter()
            .map(|&(a, b, cc, re, im)| {
                (vec![("x:H", a), ("y:H", b), ("z:H", cc)], Complex64::new(re, im))
            })
            .collect::<Vec<_>>();
        let s = PureState::from_terms(reg, terms).unwrap();
        if s.is_empty() {
            s
        } else {
            s.normalize().unwrap()
        }
    }

    fn term() -> impl Strategy<Value = (u8, u8, u8, f64, f64)> {
        (0u8..3, 0u8..3, 0u8..2, -1.0..1.0f64, -1.0..1.0f64)
    }

    proptest! {
        #[test]
        fn unitaries_preserve_norm(
            terms in prop::collection::vec(term(), 1..6),
            params in prop::collection::vec((0.0..3.2f64, 0.0..6.3f64), 3),
        ) {
            let psi = three_mode_state(&terms);
            prop_assume!(!psi.is_empty());
            let u = random_unitary(3, &params);
            let out = psi.apply_mode_unitary(&["x:H", "y:H", "z:H"], &u).unwrap();
            let back = out.apply_mode_unitary(&["x:H", "y:H", "z:H"], &u.adjoint()).unwrap();
            prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-9);
            prop_assert!(out.truncation_loss() == 0.0);
            prop_assert!((back.inner_product(&psi).unwrap().norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn creation_operators_commute(terms in prop::collection::vec(term(), 1..6)) {
            let psi = three_mode_state(&terms);
            let ab = psi.create("x:H").unwrap().create("y:H").unwrap();
            let ba = psi.create("y:H").unwrap().create("x:H").unwrap();
            prop_assert_eq!(ab.len(), ba.len());
            // Equal up to the last bit of the √(n+1) products.
            for (b, amp) in ab.terms() {
                prop_assert!((*amp - ba.amplitude(b)).norm() <= 4.0 * f64::EPSILON * amp.norm());
            }
        }

        #[test]
        fn truncation_accounting(terms in prop::collection::vec(term(), 1..6), mode in 0usize..3) {
            let psi = three_mode_state(&terms);
            let name = ["x:H", "y:H", "z:H"][mode];
            let wide_reg = Arc::new(ModeRegistry::with_modes(
                psi.registry().modes().iter().cloned(), 20).unwrap());
            let pattern = |b: &BasisVector| -> Vec<(&'static str, u8)> {
                ["x:H", "y:H", "z:H"].iter().copied().zip(b.occupations().iter().copied()).collect()
            };
            let mut tight = psi.clone();
            for _ in 0..3 {
                let wide = PureState::from_terms(
                    wide_reg.clone(),
                    tight.terms().map(|(b, a)| (pattern(b), *a)).collect::<Vec<_>>(),
                ).unwrap().create(name).unwrap();
                let before = tight.truncation_loss();
                tight = tight.create(name).unwrap();
                let dropped = tight.truncation_loss() - before;
                prop_assert!((wide.norm_sqr() - (tight.norm_sqr() + dropped)).abs() < 1e-9);
            }
        }

        #[test]
        fn tensor_truncation_accounting(
            t1 in prop::collection::vec(term(), 1..5),
            t2 in prop::collection::vec(term(), 1..5),
        ) {
            let a = three_mode_state(&t1);
            let b = three_mode_state(&t2);
            prop_assume!(!a.is_empty() && !b.is_empty());
            let b = b.relabel_modes(&[
                ("x:H", ModeId::photon("u", Polarization::H)),
                ("y:H", ModeId::photon("v", Polarization::H)),
                ("z:H", ModeId::photon("w", Polarization::H)),
            ]).unwrap();
            let ab = a.tensor(&b).unwrap();
            prop_assert!((a.norm_sqr() * b.norm_sqr() - ab.norm_sqr() - ab.truncation_loss()).abs() < 1e-9);
        }

        #[test]
        fn exhaustive_projections_sum_to_one(
            terms in prop::collection::vec(term(), 1..6),
            params in prop::collection::vec((0.0..3.2f64, 0.0..6.3f64), 3),
        ) {
            let psi = three_mode_state(&terms);
            prop_assume!(!psi.is_empty());
            let psi = psi.apply_mode_unitary(&["x:H", "y:H", "z:H"], &random_unitary(3, &params)).unwrap();
            let mut total = 0.0;
            for a in 0..=6u8 {
                for b in 0..=6u8 {
                    let p = psi.project(&OccupationPattern::new([("x:H", a), ("y:H", b)])).unwrap();
                    total += p.probability;
                }
            }
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn inner_product_conjugate_symmetric(
            t1 in prop::collection::vec(term(), 1..5),
            t2 in prop::collection::vec(term(), 1..5),
        ) {
            let a = three_mode_state(&t1);
            let b = three_mode_state(&t2);
            let ab = a.inner_product(&b).unwrap();
            let ba = b.inner_product(&a).unwrap();
            prop_assert!((ab - ba.conj()).norm() < 1e-12);
        }
    }
}
