mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use socialquant::game::{
    best_response, physical_optima, schedule_for, sweep, GameState, VerifyOptions,
};
use socialquant::network::word_usage;
use socialquant::{
    check_social_stability, quantization_loss, solve_equilibrium, verify_nash, AgentSpec,
    BetaDensity, CommMatrix, Game, NoiseKernel, RegularQuantizer, SchedulePolicy, SolverOptions,
};

fn identity_game() -> Game {
    let agents = vec![
        AgentSpec::new(1, BetaDensity::new(2.0, 5.0).unwrap(), 4).unwrap(),
        AgentSpec::new(2, BetaDensity::new(3.0, 3.0).unwrap(), 6).unwrap(),
        AgentSpec::new(3, BetaDensity::uniform(), 3).unwrap(),
    ];
    Game::new(agents, CommMatrix::identity(3), NoiseKernel::point()).unwrap()
}

#[test]
fn identity_network_needs_one_sweep() {
    let game = identity_game();
    let sol = solve_equilibrium(&game, &SolverOptions::default()).unwrap();
    assert!(sol.report.converged);
    assert_eq!(sol.snapshots.len(), 2);
    let verify = VerifyOptions {
        n_samples: 20_000,
        seed: 3,
    };
    let report = verify_nash(&game, &sol.state, true, &SolverOptions::default(), &verify).unwrap();
    for a in &report.agents {
        assert!(a.observed_residual < 1e-8);
        assert!(a.best_response_distance < 1e-8);
        // observed equals true: every deviation is from the word's own cell
        assert!(a.true_residual.as_ref().unwrap().max_abs_z < 5.0);
    }
}

#[test]
fn forests_settle_in_one_topological_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let opts = SolverOptions {
        schedule: SchedulePolicy::TopologicalIfAcyclic,
        ..Default::default()
    };
    for _ in 0..5 {
        let game = common::random_acyclic_game(&mut rng, 5, 3, 1);
        let sol = solve_equilibrium(&game, &opts).unwrap();
        assert!(sol.report.converged);
        let moves: Vec<f64> = sol.snapshots.iter().map(|s| s.max_move).collect();
        assert!(sol.snapshots.len() <= 3, "{moves:?}");
        assert!(sol.snapshots.last().unwrap().max_move < opts.tol);
    }
}

#[test]
fn acyclic_schedules_reach_the_same_equilibrium() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let game = common::random_acyclic_game(&mut rng, 6, 3, 2);
        let cyclic = solve_equilibrium(&game, &SolverOptions::default()).unwrap();
        let topo = solve_equilibrium(
            &game,
            &SolverOptions {
                schedule: SchedulePolicy::TopologicalIfAcyclic,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(cyclic.report.converged && topo.report.converged);
        for (a, b) in cyclic.state.quantizers.iter().zip(&topo.state.quantizers) {
            assert!(a.max_word_distance(b) < 1e-6);
        }
        assert!(topo.report.max_observed_residual() < 10.0 * 1e-9);
    }
}

#[test]
fn perturbed_word_is_not_a_best_response() {
    let game = common::five_agent_game();
    let opts = SolverOptions::default();
    let sol = solve_equilibrium(&game, &opts).unwrap();
    let mut quantizers = sol.state.quantizers.clone();
    let q = &quantizers[2];
    let mut words = q.words().to_vec();
    words[3] += 0.02;
    quantizers[2] = RegularQuantizer::new(q.boundaries().to_vec(), words).unwrap();
    let state = GameState::from_parts(&game, quantizers, sol.state.usage.clone(), 0, 0.0).unwrap();
    let br = best_response(&game, &state, 2, &opts).unwrap();
    assert!(br.max_word_distance(&state.quantizers[2]) >= 0.02 - opts.tol);
}

#[test]
fn best_response_never_raises_loss() {
    let game = common::five_agent_game();
    let opts = SolverOptions::default();
    let state = socialquant::game::bootstrap(&game, &opts).unwrap();
    for i in 0..game.n_agents() {
        let observed = game.observed_environment(i, &state).unwrap();
        let before = quantization_loss(&state.quantizers[i], &observed);
        let br = best_response(&game, &state, i, &opts).unwrap();
        assert!(quantization_loss(&br, &observed) <= before + 1e-15);
    }
}

#[test]
fn loopy_solve_is_deterministic_and_consistent() {
    let game = common::five_agent_game();
    let opts = SolverOptions::default();
    let a = solve_equilibrium(&game, &opts).unwrap();
    let b = solve_equilibrium(&game, &opts).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.state, b.state);

    assert!(a.report.converged);
    assert!(a.report.max_observed_residual() < 1e-8);
    for i in 0..game.n_agents() {
        let observed = game.observed_environment(i, &a.state).unwrap();
        let u = word_usage(&observed, &a.state.quantizers[i]);
        for (x, y) in u.iter().zip(&a.state.usage[i]) {
            assert!((x - y).abs() <= 1e-9);
        }
    }
}

#[test]
fn sweep_rejects_bad_schedules() {
    let game = identity_game();
    let opts = SolverOptions::default();
    let mut state = socialquant::game::bootstrap(&game, &opts).unwrap();
    assert!(sweep(&game, &mut state, &[0, 0, 1], &opts).is_err());
    assert!(sweep(&game, &mut state, &[0, 1], &opts).is_err());
    assert_eq!(schedule_for(&game, SchedulePolicy::Cyclic), vec![0, 1, 2]);
}

#[test]
fn identical_peers_are_stable() {
    let src = BetaDensity::new(2.0, 3.0).unwrap();
    let agents = vec![
        AgentSpec::new(1, src, 4).unwrap(),
        AgentSpec::new(2, src, 4).unwrap(),
    ];
    let p = CommMatrix::new(vec![vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
    let game = Game::new(agents, p, NoiseKernel::point()).unwrap();
    let opts = SolverOptions::default();
    let sol = solve_equilibrium(&game, &opts).unwrap();
    let optima = physical_optima(&game, &opts).unwrap();
    let report = check_social_stability(&game, &sol.state, &optima);
    let q = &optima[0];
    let b = q.boundaries();
    let expected = q
        .words()
        .iter()
        .flat_map(|y| b[1..b.len() - 1].iter().map(move |a| (y - a).abs()))
        .fold(f64::INFINITY, f64::min);
    assert!(report.drift < 1e-9);
    assert_eq!(report.separation, expected);
    assert!(report.is_stable());
}

#[test]
fn five_agent_stability_margins_are_reported() {
    let game = common::five_agent_game();
    let opts = SolverOptions::default();
    let sol = solve_equilibrium(&game, &opts).unwrap();
    let optima = physical_optima(&game, &opts).unwrap();
    let r = check_social_stability(&game, &sol.state, &optima);
    println!(
        "separation {:.3e}, own margin {:.3e}, drift {:.3e}, epsilon {:?}",
        r.separation, r.own_margin, r.drift, r.epsilon
    );
    assert!(r.separation > 0.0 && r.own_margin > 0.0);
    assert_eq!(
        r.is_stable(),
        r.separation.min(r.own_margin) > 2.0 * r.drift.max(r.noise_halfwidth)
    );
}
