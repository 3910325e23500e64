mod common;

use common::{random_hurwitz, random_symmetric};
use cqf_core::analysis::{cost, dual_cost, evaluate, gramian_residuals, gramians};
use cqf_core::matops::{
    eigenvalues, frob_inner, lyap_residual, relative_lyap_residual, solve_ale, spectral_abscissa,
    symmetric_eigenvalues,
};
use cqf_core::model::{assemble, random_instance, CostSpec, Dims, Model};
use cqf_core::weyl::{weyl_derivative, WeylQuery};
use cqf_core::Mat;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SHAPES: [Dims; 4] = [
    Dims::new(2, 2, 2, 2, 2),
    Dims::new(4, 2, 4, 2, 2),
    Dims::new(4, 4, 4, 4, 2),
    Dims::new(2, 4, 6, 4, 4),
];

fn instance(seed: u64, shape: usize) -> Option<Model> {
    random_instance(seed, SHAPES[shape % SHAPES.len()]).ok()
}

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(48)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn ale_solution_is_symmetric_psd_and_accurate(seed in any::<u64>(), d in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_hurwitz(&mut rng, d);
        let b = common::normal(&mut rng, d, 2);
        let v = &b * &b.transpose();
        let x = solve_ale(&a, &v).unwrap();
        prop_assert!(relative_lyap_residual(&a, &x, &v) <= 1e-10);
        prop_assert_eq!(&x, &x.transpose());
        let scale = x.frob_norm().max(1.0);
        for ev in symmetric_eigenvalues(&x).unwrap() {
            prop_assert!(ev >= -1e-10 * scale);
        }
    }

    #[test]
    fn ale_is_linear_in_the_forcing_term(seed in any::<u64>(), d in 1usize..6, s in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_hurwitz(&mut rng, d);
        let v1 = random_symmetric(&mut rng, d);
        let v2 = random_symmetric(&mut rng, d);
        let combo = &v1 + &v2.scale(s);
        let x = solve_ale(&a, &combo).unwrap();
        let expect = &solve_ale(&a, &v1).unwrap() + &solve_ale(&a, &v2).unwrap().scale(s);
        let scale = x.frob_norm().max(expect.frob_norm()).max(1.0);
        prop_assert!((&x - &expect).frob_norm() <= 1e-9 * scale);
        prop_assert!(lyap_residual(&a, &x, &combo).frob_norm() <= 1e-9 * scale);
    }

    #[test]
    fn abscissa_shifts_with_the_identity(seed in any::<u64>(), d in 1usize..8, s in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::normal(&mut rng, d, d);
        let shifted = &a + &Mat::identity(d).scale(s);
        let base = spectral_abscissa(&a).unwrap();
        let moved = spectral_abscissa(&shifted).unwrap();
        prop_assert!((moved - base - s).abs() <= 1e-9 * (1.0 + a.frob_norm() + s.abs()));
    }

    #[test]
    fn eigenvalues_preserve_trace_and_come_in_conjugate_pairs(seed in any::<u64>(), d in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::normal(&mut rng, d, d);
        let ev = eigenvalues(&a).unwrap();
        prop_assert_eq!(ev.len(), d);
        let sum: Complex64 = ev.iter().sum();
        prop_assert!((sum.re - a.trace()).abs() <= 1e-10 * (1.0 + a.frob_norm()) * d as f64);
        prop_assert!(sum.im.abs() <= 1e-10 * (1.0 + a.frob_norm()) * d as f64);
        for z in &ev {
            if z.im != 0.0 {
                let has_conj = ev.iter().any(|w| (w - z.conj()).norm() <= 1e-8 * (1.0 + z.norm()));
                prop_assert!(has_conj, "no conjugate for {z}");
            }
        }
    }

    #[test]
    fn gramian_duality_holds(seed in 1u64..10_000, shape in 0usize..4) {
        let Some(model) = instance(seed, shape) else { return Ok(()) };
        let ss = assemble(&model, 1e-9).unwrap();
        let g = gramians(&ss).unwrap();
        let (rp, rq) = gramian_residuals(&ss, &g);
        prop_assert!(rp <= 1e-10 && rq <= 1e-10, "residuals {rp:e} {rq:e}");
        let (primal, dual) = (cost(&ss, &g), dual_cost(&ss, &g));
        prop_assert!((primal - dual).abs() <= 1e-9 * (1.0 + primal.abs()));
        prop_assert!(primal >= 0.0);
    }

    #[test]
    fn cost_scales_quadratically_with_the_weights(seed in 1u64..10_000, shape in 0usize..4, s in 0.1f64..10.0) {
        let Some(model) = instance(seed, shape) else { return Ok(()) };
        let (plant, observer, weights) = model.clone().into_parts();
        let scaled = CostSpec { f: weights.f.scale(s), g: weights.g.scale(s) };
        let scaled = Model::new(plant, observer, scaled).unwrap();
        let (_, _, base) = evaluate(&model, 1e-9).unwrap();
        let (_, _, big) = evaluate(&scaled, 1e-9).unwrap();
        prop_assert!((big.cost - s * s * base.cost).abs() <= 1e-10 * (1.0 + big.cost));
        let rel = (&big.dz_dn1 - &base.dz_dn1.scale(s * s)).frob_norm() / (1.0 + big.dz_dn1.frob_norm());
        prop_assert!(rel <= 1e-9);
    }

    #[test]
    fn weyl_derivatives_are_linear_in_the_amplitudes(
        seed in 1u64..10_000,
        shape in 0usize..4,
        a_re in -2.0f64..2.0,
        a_im in -2.0f64..2.0,
        b in proptest::collection::vec(-2.0f64..2.0, 8),
        scale in -3.0f64..3.0,
    ) {
        let Some(model) = instance(seed, shape) else { return Ok(()) };
        let (ss, g, _) = evaluate(&model, 1e-9).unwrap();
        let obs = model.observer();
        let nu = obs.nu();
        let p = obs.p();
        let u: Vec<f64> = (0..nu).map(|k| 0.3 * (k as f64 + 1.0).sin()).collect();
        let beta: Vec<Complex64> = (0..p).map(|k| Complex64::new(b[k % 8], b[(k + 4) % 8])).collect();
        let q = WeylQuery { alpha: Complex64::new(a_re, a_im), beta: beta.clone(), u: u.clone() };
        let q2 = WeylQuery {
            alpha: q.alpha * scale,
            beta: beta.iter().map(|z| z * scale).collect(),
            u,
        };
        // A huge tolerance keeps dM defined away from the optimum.
        let d1 = weyl_derivative(&q, &g, &ss, obs, 1e12).unwrap();
        let d2 = weyl_derivative(&q2, &g, &ss, obs, 1e12).unwrap();
        prop_assert!((d2.dk - scale * d1.dk).abs() <= 1e-10 * (1.0 + d2.dk.abs()));
        let (m1, m2) = (d1.dm.unwrap(), d2.dm.unwrap());
        prop_assert!((m2 - scale * m1).abs() <= 1e-10 * (1.0 + m2.abs()));
        prop_assert!((0.0..=1.0).contains(&d1.gauss_factor));
    }

    #[test]
    fn frob_inner_matches_trace_of_product(seed in any::<u64>(), r in 1usize..5, c in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = common::normal(&mut rng, r, c);
        let y = common::normal(&mut rng, r, c);
        let ip = frob_inner(&x, &y).unwrap();
        let tr = (&x.transpose() * &y).trace();
        prop_assert!((ip - tr).abs() <= 1e-12 * (1.0 + x.frob_norm() * y.frob_norm()));
    }
}
