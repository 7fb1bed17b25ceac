mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{bisection_step, random_concentration, random_network};
use rdsplit::reaction::{gradient, objective, solve_cell, ReactionCellState};
use rdsplit::ReactionSolveOptions;

#[test]
fn single_reaction_matches_bisection() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let opts = ReactionSolveOptions::default();
    for _ in 0..300 {
        let n = rng.gen_range(1..=4);
        let net = random_network(&mut rng, n, 1);
        let c0 = random_concentration(&mut rng, n);
        let dt = rng.gen_range(0.01..1.0);
        let state = ReactionCellState::new(&net, &net.concentration(c0.clone()).unwrap(), dt);
        let sol = solve_cell(&net, &state, &opts).unwrap();
        let r = bisection_step(&net, &c0, dt);
        assert!(
            (sol.r[0] - r).abs() <= 1e-10 * r.abs().max(1.0),
            "solver {} oracle {r}",
            sol.r[0]
        );
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=2);
        let net = random_network(&mut rng, n, m);
        let c0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
        let dt = rng.gen_range(0.5..1.0);
        let state = ReactionCellState::new(&net, &net.concentration(c0).unwrap(), dt);
        // Stay well inside the admissible set, where central differences are accurate.
        let scale_r: Vec<f64> = state.eta.iter().map(|e| e * dt).collect();
        let r: Vec<f64> = scale_r
            .iter()
            .map(|a| rng.gen_range(-0.1..0.1) * a.min(0.01))
            .collect();
        let g = gradient(&net, &state, &r).unwrap();
        let scale = g.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for l in 0..m {
            let h = 1e-5 * scale_r[l].min(1.0);
            let mut rp = r.clone();
            let mut rm = r.clone();
            rp[l] += h;
            rm[l] -= h;
            let fd = (objective(&net, &state, &rp).unwrap() - objective(&net, &state, &rm).unwrap())
                / (2.0 * h);
            assert!((fd - g[l]).abs() <= 1e-6 * scale, "fd {fd} analytic {}", g[l]);
        }
    }
}

#[test]
fn solution_lowers_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=2);
        let net = random_network(&mut rng, n, m);
        let c0 = random_concentration(&mut rng, n);
        let state = ReactionCellState::new(&net, &net.concentration(c0).unwrap(), 0.5);
        let sol = solve_cell(&net, &state, &ReactionSolveOptions::default()).unwrap();
        let j0 = objective(&net, &state, &vec![0.0; m]).unwrap();
        assert!(objective(&net, &state, &sol.r).unwrap() <= j0 + 1e-14 * (1.0 + j0.abs()));
        assert!(sol.c_star.iter().all(|&c| c > 0.0));
        assert!(sol.grad_norm <= 1e-10);
    }
}
