mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_concentration, random_network};
use rdsplit::network::invariant_basis;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn free_energy_is_midpoint_convex(seed in any::<u64>(), n in 1usize..5, m in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, n, m);
        let a = random_concentration(&mut rng, n);
        let b = random_concentration(&mut rng, n);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let f = |c: &[f64]| net.free_energy_density(&net.concentration(c.to_vec()).unwrap());
        prop_assert!(f(&mid) <= 0.5 * (f(&a) + f(&b)) + 1e-12);
    }

    #[test]
    fn rate_and_affinity_have_opposite_signs(seed in any::<u64>(), n in 1usize..5, m in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, n, m);
        let c = net.concentration(random_concentration(&mut rng, n)).unwrap();
        let rates = net.mass_action_rate(&c);
        let aff = net.affinity(&c);
        for (r, a) in rates.iter().zip(&aff) {
            if a.abs() > 1e-9 {
                prop_assert!(r * a < 0.0, "rate {r} affinity {a}");
            }
        }
    }

    #[test]
    fn rates_vanish_at_detailed_balance(seed in any::<u64>(), n in 1usize..5, m in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, n, m);
        // Any c = exp(-U + v) with v orthogonal to the reaction space is an equilibrium.
        let basis = net.invariant_basis().to_vec();
        let weights: Vec<f64> = basis.iter().map(|_| rng.gen_range(-0.5..0.5)).collect();
        let c: Vec<f64> = (0..n)
            .map(|i| {
                let v: f64 = basis.iter().zip(&weights).map(|(e, w)| w * e[i]).sum();
                (-net.internal_energy()[i] + v).exp()
            })
            .collect();
        let c = net.concentration(c).unwrap();
        for a in net.affinity(&c) {
            prop_assert!(a.abs() < 1e-10);
        }
        for (l, r) in net.mass_action_rate(&c).iter().enumerate() {
            prop_assert!(r.abs() <= 1e-10 * (1.0 + net.k_plus()[l] + net.k_minus()[l]));
        }
    }

    #[test]
    fn invariant_basis_spans_the_left_kernel(seed in any::<u64>(), n in 1usize..6, m in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma: Vec<Vec<i32>> = (0..n).map(|_| (0..m).map(|_| rng.gen_range(-2..=2)).collect()).collect();
        let basis = invariant_basis(&sigma);
        let rank = nalgebra::DMatrix::from_fn(n, m, |i, l| sigma[i][l] as f64).rank(1e-9);
        prop_assert_eq!(basis.len(), n - rank);
        for e in &basis {
            prop_assert!((e.iter().fold(0.0f64, |a, v| a.max(v.abs())) - 1.0).abs() < 1e-12);
            for l in 0..m {
                let dot: f64 = e.iter().zip(&sigma).map(|(ei, row)| ei * row[l] as f64).sum();
                prop_assert!(dot.abs() < 1e-10);
            }
        }
    }
}
