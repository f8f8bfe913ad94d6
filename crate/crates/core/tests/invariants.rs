use ohmlab_core::ac_measure::{random_ac_pulse, spectral_measure};
use ohmlab_core::correlations::{fluctuation_inner, two_point, CurrentElement};
use ohmlab_core::disorder::{reduce_samples, sample_realization, DisorderSpec};
use ohmlab_core::dynamics::{evolve, FieldCoupling};
use ohmlab_core::energetics::energy_increments;
use ohmlab_core::lattice_fields::{
    build_box, check_ac, Bond, ProfileKind, Pulse, SpatialProfile, VectorPotential,
};
use ohmlab_core::onebody::{diagonalize, fermi_symbol, hamiltonian, laplacian, EigenSystem};
use ohmlab_core::scalar::C;
use ohmlab_core::transport::{kernel_from_system, max_eigenvalue, realization_system};
use proptest::prelude::*;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn system(d: usize, half: usize, lambda: f64, seed: u64) -> EigenSystem<f64> {
    realization_system(&DisorderSpec::uniform(lambda, seed), d, half, 0).unwrap()
}

fn unit(d: usize, angle: f64) -> Vec<f64> {
    if d == 1 {
        vec![1.0]
    } else {
        vec![angle.cos(), angle.sin()]
    }
}

proptest! {
    #![proptest_config(cfg(32))]

    #[test]
    fn ac_primitive_stays_below_tolerance(seed in 0u64..10_000) {
        let p = random_ac_pulse(seed);
        let t1 = check_ac(&p);
        let (_, end) = p.support();
        prop_assert!(t1 <= end);
        for i in 0..=50 {
            let t = t1 + (end + 1.0 - t1) * i as f64 / 50.0;
            prop_assert!(p.primitive(t).abs() <= p.tol_ac());
        }
    }

    #[test]
    fn bond_field_is_linear_and_odd(
        eta in -2.0f64..2.0,
        c in -3.0f64..3.0,
        t in 0.0f64..1.0,
        x in -4i64..4,
        y in -4i64..4,
        k in 0usize..2,
        angle in 0.0f64..6.28,
        bumpy in any::<bool>(),
    ) {
        let kind = if bumpy { ProfileKind::Bump } else { ProfileKind::Indicator };
        let pulse = Pulse::Bump { start: 0.0, end: 1.0, amplitude: 1.0 };
        let vp = VectorPotential::new(pulse, SpatialProfile::new(kind, 2), unit(2, angle), 5.0, eta).unwrap();
        let b = Bond::backward(&[x, y], k);
        let f = vp.integrated_bond_field::<f64>(t, &b).unwrap();
        let scaled = vp.with_eta(c * eta).integrated_bond_field::<f64>(t, &b).unwrap();
        prop_assert!((scaled - c * f).abs() <= 1e-12 * (1.0 + f.abs()));
        let back = vp.integrated_bond_field::<f64>(t, &b.reversed()).unwrap();
        prop_assert!((back + f).abs() <= 1e-15);
        let e = vp.electric_field::<f64>(t, &[x as f64, y as f64]);
        let e2 = vp.with_eta(c * eta).electric_field::<f64>(t, &[x as f64, y as f64]);
        for (u, v) in e.iter().zip(&e2) {
            prop_assert!((v - c * u).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn indicator_bond_inside_sees_uniform_field(
        eta in -1.0f64..1.0,
        t in 0.0f64..1.0,
        x in -3i64..3,
        y in -3i64..3,
        k in 0usize..2,
        angle in 0.0f64..6.28,
    ) {
        let pulse = Pulse::Bump { start: 0.0, end: 1.0, amplitude: 1.3 };
        let w = unit(2, angle);
        let vp = VectorPotential::new(pulse.clone(), SpatialProfile::new(ProfileKind::Indicator, 2), w.clone(), 5.0, eta).unwrap();
        let b = Bond::backward(&[x, y], k);
        let step = b.step();
        let proj: f64 = step.iter().zip(&w).map(|(s, w)| *s as f64 * w).sum();
        let want = -eta * pulse.value(t) * proj;
        prop_assert!((vp.integrated_bond_field::<f64>(t, &b).unwrap() - want).abs() <= 1e-12);
    }

    #[test]
    fn enlarging_the_box_extends_the_realization(seed in 0u64..1000, index in 0u64..50, l in 1usize..5) {
        let spec = DisorderSpec::uniform(1.0, seed);
        let small = sample_realization::<f64>(&spec, &build_box(2, l).unwrap(), index);
        let large = sample_realization::<f64>(&spec, &build_box(2, l + 3).unwrap(), index);
        for x in small.bx.sites() {
            prop_assert_eq!(small.at(x), large.at(x));
        }
    }

    #[test]
    fn ensemble_mean_ignores_relabeling(values in prop::collection::vec(-1.0f64..1.0, 2..30), shift in 0usize..30) {
        let samples: Vec<Vec<f64>> = values.iter().map(|&v| vec![v, v * v]).collect();
        let mut rotated = samples.clone();
        rotated.rotate_left(shift % samples.len());
        let (a, _) = reduce_samples(&samples);
        let (b, _) = reduce_samples(&rotated);
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(cfg(16))]

    #[test]
    fn laplacian_norm_and_fermi_symbol(d in 1usize..3, l in 1usize..4, lambda in 0.0f64..3.0, beta in 0.2f64..5.0, seed in 0u64..100) {
        let bx = build_box(d, l).unwrap();
        let lap = diagonalize(&laplacian::<f64>(&bx)).unwrap();
        prop_assert!(lap.norm_op() <= 4.0 * d as f64 + 1e-12);
        let spec = DisorderSpec::uniform(lambda, seed);
        let r = sample_realization::<f64>(&spec, &bx, 0);
        let h = hamiltonian(&bx, &r, &spec, None, 0.0).unwrap();
        let eig = diagonalize(&h).unwrap();
        let sym = fermi_symbol(&eig, beta).unwrap();
        let occ = diagonalize(&ohmlab_core::onebody::HermitianOp { bx: bx.clone(), mat: sym.mat.clone() }).unwrap();
        prop_assert!(occ.values.iter().all(|&f| (-1e-12..=1.0 + 1e-12).contains(&f)));
        let comm = &sym.mat * &h.mat - &h.mat * &sym.mat;
        prop_assert!(comm.iter().all(|z| z.norm() <= 1e-10));
    }

    #[test]
    fn kms_edges_sum_to_one(l in 1usize..4, lambda in 0.0f64..2.0, beta in 0.2f64..5.0, seed in 0u64..100, site in -1i64..2) {
        let eig = system(1, l, lambda, seed);
        let x = [site];
        let a = two_point(&eig, beta, 0.0, 0.0, &x, &x).unwrap();
        let b = two_point(&eig, beta, 0.0, beta, &x, &x).unwrap();
        prop_assert!((a + b - C::new(1.0, 0.0)).norm() <= 1e-10);
    }

    #[test]
    fn fluctuation_form_is_positive_and_kills_constants(l in 0usize..3, lambda in 0.0f64..2.0, beta in 0.5f64..3.0, seed in 0u64..100) {
        let eig = system(1, l + 3, lambda, seed);
        let bond = CurrentElement::bond(vec![1], vec![0]);
        let v = fluctuation_inner(&eig, beta, l, &bond, &bond).unwrap();
        prop_assert!(v.re >= -1e-12 && v.im.abs() <= 1e-12);
        // Im(a*_x a_x) is the zero observable
        let psi = vec![(vec![0], C::new(1.0, 0.0))];
        let null = CurrentElement::General { psi1: psi.clone(), psi2: psi };
        prop_assert!(fluctuation_inner(&eig, beta, l, &null, &null).unwrap().norm() <= 1e-12);
        prop_assert!(fluctuation_inner(&eig, beta, l, &bond, &null).unwrap().norm() <= 1e-12);
    }

    #[test]
    fn transport_structure(d in 1usize..3, lambda in 0.0f64..2.0, beta in 0.3f64..3.0, seed in 0u64..100) {
        let l = if d == 1 { 4 } else { 2 };
        let eig = system(d, l + 2, lambda, seed);
        let tg = [0.0, 0.3, 1.0, 2.5];
        let (xp, xd) = kernel_from_system(&eig, beta, l, &tg).unwrap();
        prop_assert!(xp[0].iter().all(|v| v.abs() <= 1e-12));
        for m in &xp {
            prop_assert!((m - m.transpose()).iter().all(|v| v.abs() <= 1e-10));
            prop_assert!(max_eigenvalue(m) <= 1e-8);
        }
        for i in 0..d {
            prop_assert!((-2.0..=2.0).contains(&xd[(i, i)]));
            for j in 0..d {
                prop_assert!(i == j || xd[(i, j)] == 0.0);
            }
        }
        // Ξ_p is even in t
        let (back, _) = kernel_from_system(&eig, beta, l, &[-1.0]).unwrap();
        prop_assert!((&back[0] - &xp[2]).iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn chemical_shift_zero_is_baseline(lambda in 0.0f64..2.0, seed in 0u64..100) {
        let bx = build_box(1, 6).unwrap();
        let spec = DisorderSpec::uniform(lambda, seed);
        let r = sample_realization::<f64>(&spec, &bx, 0);
        let h = hamiltonian(&bx, &r, &spec, None, 0.0).unwrap();
        let a = diagonalize(&h).unwrap();
        let b = diagonalize(&h.clone().shifted(0.0)).unwrap();
        let (pa, da) = kernel_from_system(&a, 1.0, 4, &[0.7]).unwrap();
        let (pb, db) = kernel_from_system(&b, 1.0, 4, &[0.7]).unwrap();
        prop_assert_eq!(pa, pb);
        prop_assert_eq!(da, db);
    }

    #[test]
    fn evolution_keeps_trace_and_balances_energy(eta in -0.3f64..0.3, lambda in 0.0f64..2.0, seed in 0u64..100, ac in any::<bool>()) {
        let pulse = if ac {
            Pulse::BumpDerivative { start: 0.0, end: 1.0, amplitude: 1.0 }
        } else {
            Pulse::Bump { start: 0.0, end: 1.0, amplitude: 1.0 }
        };
        let vp = VectorPotential::new(pulse, SpatialProfile::new(ProfileKind::Bump, 1), vec![1.0], 4.0, eta).unwrap();
        let spec = DisorderSpec::uniform(lambda, seed);
        let bx = build_box(1, 12).unwrap();
        let r = sample_realization::<f64>(&spec, &bx, 0);
        let c = FieldCoupling::new(&bx, &r, &spec, &vp).unwrap();
        let eig = diagonalize(&c.base).unwrap();
        let d0 = fermi_symbol(&eig, 1.0).unwrap();
        let tg = [0.5, 1.0, 1.5];
        let run = evolve(c, 0.0, 1.5, 0.01, &tg).unwrap();
        let tr0: C<f64> = d0.mat.trace();
        for &t in &tg {
            let dt = ohmlab_core::dynamics::evolve_symbol(&d0, &run, t).unwrap();
            prop_assert!((dt.mat.trace() - tr0).norm() <= 1e-9);
        }
        let led = energy_increments(&run, &d0, 6, &tg).unwrap();
        prop_assert!(led.balance_residual <= 1e-8);
        prop_assert!(led.s.iter().all(|&s| s >= -1e-10));
    }

    #[test]
    fn spectral_weights_are_positive_and_even(lambda in 0.0f64..2.0, beta in 0.3f64..3.0, seed in 0u64..100) {
        let systems = vec![system(1, 6, lambda, seed), system(1, 6, lambda, seed + 1)];
        let m = spectral_measure(&systems, beta, 4, 0, None, &[0.0, 0.5, 2.0]).unwrap();
        prop_assert!(m.weights.iter().all(|&w| w >= -1e-10));
        prop_assert!(m.symmetry_residual() <= 1e-10);
        prop_assert_eq!(m.reconstruct(0.0), 0.0);
    }
}
