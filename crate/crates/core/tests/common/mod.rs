#![allow(dead_code)]

use rand::Rng;
use rdsplit::network::stoichiometric_matrix;
use rdsplit::ReactionNetwork;

/// Random network with `n` species and `m` reactions that satisfies detailed
/// balance by construction: `k+ = k- exp(-sigma^T U)` for a random `U`.
pub fn random_network<R: Rng>(rng: &mut R, n: usize, m: usize) -> ReactionNetwork {
    loop {
        let mut alpha = vec![vec![0u32; m]; n];
        let mut beta = vec![vec![0u32; m]; n];
        for l in 0..m {
            for i in 0..n {
                alpha[i][l] = rng.gen_range(0..=2);
                beta[i][l] = rng.gen_range(0..=2);
            }
        }
        let sigma = stoichiometric_matrix(&alpha, &beta);
        if (0..m).any(|l| sigma.iter().all(|row| row[l] == 0)) {
            continue;
        }
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k_minus: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..3.0)).collect();
        let k_plus: Vec<f64> = (0..m)
            .map(|l| {
                let su: f64 = (0..n).map(|i| sigma[i][l] as f64 * u[i]).sum();
                k_minus[l] * (-su).exp()
            })
            .collect();
        let names = (0..n).map(|i| format!("S{i}")).collect();
        if let Ok(net) = ReactionNetwork::new(names, alpha, beta, k_plus, k_minus) {
            return net;
        }
    }
}

pub fn random_concentration<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.05..2.0)).collect()
}

pub fn sigma_col(net: &ReactionNetwork, l: usize) -> Vec<f64> {
    net.stoich().iter().map(|row| row[l] as f64).collect()
}

/// Reaction-step root for a single reaction by bisection on
/// `ln(1 + R/(eta dt)) + sum_i sigma_i ln(c0_i + sigma_i R) - ln(k+/k-)`,
/// which is increasing on the admissible interval.
pub fn bisection_step(net: &ReactionNetwork, c0: &[f64], dt: f64) -> f64 {
    assert_eq!(net.num_reactions(), 1);
    let sigma = sigma_col(net, 0);
    let eta: f64 = net.k_minus()[0]
        * c0.iter()
            .zip(net.beta())
            .map(|(c, b)| c.powi(b[0] as i32))
            .product::<f64>();
    let log_k = (net.k_plus()[0] / net.k_minus()[0]).ln();
    let g = |r: f64| {
        (r / (eta * dt)).ln_1p()
            + sigma
                .iter()
                .zip(c0)
                .filter(|(s, _)| **s != 0.0)
                .map(|(s, c)| s * (c + s * r).ln())
                .sum::<f64>()
            - log_k
    };
    let mut lo = -eta * dt;
    let mut hi = f64::INFINITY;
    for (s, c) in sigma.iter().zip(c0) {
        if *s > 0.0 {
            lo = lo.max(-c / s);
        } else if *s < 0.0 {
            hi = hi.min(c / -s);
        }
    }
    if hi.is_infinite() {
        hi = lo.abs().max(1.0);
        while g(hi) < 0.0 {
            hi *= 2.0;
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
