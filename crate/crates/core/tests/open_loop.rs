use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use socialtrust_core::pontryagin::{pontryagin_residuals, solve_open_loop, steady_state_open_loop};
use socialtrust_core::{GameConfig, NodeParams};

fn params(p: f64, q: f64, r: f64) -> NodeParams {
    NodeParams::new(p, q, r).unwrap()
}

#[test]
fn converged_sweeps_satisfy_necessary_conditions() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..6 {
        let n = rng.random_range(1..4);
        let ps: Vec<NodeParams> = (0..n)
            .map(|_| params(rng.random_range(0.1..1.0), rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)))
            .collect();
        let mut cfg = GameConfig::new(ps.clone(), vec![0.0; n]).unwrap();
        cfg.x0 = vec![0.9 / n as f64; n];
        let sol = solve_open_loop(&cfg).unwrap();
        assert!(sol.converged);
        let h = cfg.step;
        let res = pontryagin_residuals(&sol, &ps);
        let bound = 10.0 * h * h;
        assert!(res.control_gradient <= bound, "{res:?}");
        assert!(res.costate <= bound, "{res:?}");
        assert!(res.state <= bound, "{res:?}");

        let target = steady_state_open_loop(&ps).unwrap();
        assert!(sol.plateau_deviation(&target) < 1e-3);
        for k in 0..sol.times().len() {
            let total: f64 = sol.nodes.iter().map(|nd| nd.x[k]).sum();
            assert!(total <= 1.0 + 1e-9);
        }
        assert_eq!(*sol.nodes[0].lambda.as_ref().unwrap().last().unwrap(), 0.0);
    }
}

#[test]
fn entrant_converges_to_incumbent() {
    let mut cfg = GameConfig::symmetric(2, params(0.4, 0.2, 0.2)).unwrap();
    cfg.x0 = vec![0.5, 0.0];
    let sol = solve_open_loop(&cfg).unwrap();
    assert!(sol.converged);
    let (inc, ent) = (&sol.nodes[0].x, &sol.nodes[1].x);
    assert!(inc[1] < inc[0]);
    assert!(ent[1] > ent[0]);
    let end = sol.plateau().end - 1;
    assert!((inc[end] - ent[end]).abs() < 2e-3);
    assert!((inc[end] - 1.0 / 3.0).abs() < 2e-3);
    assert!(inc.iter().zip(ent).all(|(a, b)| a >= &(b - 1e-9)));
}

#[test]
fn higher_penalty_means_less_malicious_activity() {
    let cfg = GameConfig::new(vec![params(0.5, 0.1, 0.2), params(0.5, 0.1, 0.3)], vec![0.0, 0.0]).unwrap();
    let sol = solve_open_loop(&cfg).unwrap();
    assert!(sol.converged);
    let a = sol.plateau_alphas();
    assert!(1.0 - a[1] < 1.0 - a[0]);
}
