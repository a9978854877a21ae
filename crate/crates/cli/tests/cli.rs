use std::path::{Path, PathBuf};
use std::process::Command;

use socialquant::fixtures::{ladder, shared_set};
use socialquant_cli::state::{read_state, write_state};
use socialquant_cli::{
    cmd_analyze, cmd_chains, cmd_simulate, cmd_solve, cmd_verify, load_config, CliError,
    ExperimentConfig,
};
use tempfile::TempDir;

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn config_in(path: &Path, dir: &TempDir) -> ExperimentConfig {
    let mut cfg = load_config(path).unwrap();
    cfg.output.directory = dir.path().to_path_buf();
    cfg
}

fn parse_in(text: &str, dir: &TempDir) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::parse(text).unwrap();
    cfg.output.directory = dir.path().to_path_buf();
    cfg
}

const TWO_AGENTS: &str = r#"
[[agents]]
id = 7
alpha = 2.0
beta = 3.0
levels = 4

[[agents]]
id = 9
alpha = 3.0
beta = 2.0
levels = 4

[comm]
rows = [[0.9, 0.1], [0.2, 0.8]]

[montecarlo]
n_samples = 20000
seed = 5
"#;

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn five_agent_config_loads() {
    let cfg = load_config(&example("five_agents.toml")).unwrap();
    assert_eq!(cfg.agents.len(), 5);
    assert!(cfg.agents.iter().all(|a| a.levels == 6));
    let game = cfg.game().unwrap();
    assert_eq!(game.comm().get(4, 0), 0.05);
}

#[test]
fn short_row_is_rejected_with_its_index() {
    let text = TWO_AGENTS.replace("[0.2, 0.8]", "[0.2, 0.79]");
    let err = ExperimentConfig::parse(&text).unwrap_err();
    assert!(matches!(err, CliError::Validation(_)));
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("comm.rows[1]"), "{err}");
}

#[test]
fn nearly_stochastic_row_is_rescaled() {
    let text = TWO_AGENTS.replace("[0.2, 0.8]", "[0.2, 0.8000005]");
    let cfg = ExperimentConfig::parse(&text).unwrap();
    let sum: f64 = cfg.comm.rows[1].iter().sum();
    assert!((sum - 1.0).abs() < 1e-15);
    cfg.game().unwrap();
}

#[test]
fn bad_fields_are_named() {
    let err = ExperimentConfig::parse(&TWO_AGENTS.replace("alpha = 3.0", "alpha = -3.0")).unwrap_err();
    assert!(err.to_string().contains("agents[1].alpha"), "{err}");

    let err = ExperimentConfig::parse(&TWO_AGENTS.replace("levels = 4\n\n[comm]", "\n[comm]")).unwrap_err();
    assert!(err.to_string().contains("levels"), "{err}");

    let err = ExperimentConfig::parse(&TWO_AGENTS.replace("[0.2, 0.8]]", "[0.2, 0.8], [1.0, 0.0]]"))
        .unwrap_err();
    assert!(err.to_string().contains("3 rows for 2 agents"), "{err}");

    let err = ExperimentConfig::parse(&TWO_AGENTS.replace("[0.9, 0.1]", "[1.1, -0.1]")).unwrap_err();
    assert!(err.to_string().contains("comm.rows[0][1]"), "{err}");
}

#[test]
fn solver_seed_is_accepted_and_ignored() {
    let dir = TempDir::new().unwrap();
    let a = parse_in(&format!("{TWO_AGENTS}\n[solver]\nseed = 1\n"), &dir);
    let b = parse_in(&format!("{TWO_AGENTS}\n[solver]\nseed = 99\n"), &dir);
    let sa = cmd_solve(&a, &dir.path().join("a.txt")).unwrap();
    let sb = cmd_solve(&b, &dir.path().join("b.txt")).unwrap();
    assert_eq!(sa.solution.state, sb.solution.state);
    assert_eq!(
        std::fs::read(dir.path().join("a.txt")).unwrap(),
        std::fs::read(dir.path().join("b.txt")).unwrap()
    );
}

#[test]
fn identity_network_takes_one_sweep() {
    let dir = TempDir::new().unwrap();
    let cfg = parse_in(&TWO_AGENTS.replace("[[0.9, 0.1], [0.2, 0.8]]", "[[1.0, 0.0], [0.0, 1.0]]"), &dir);
    let out = cmd_solve(&cfg, &dir.path().join("state.txt")).unwrap();
    assert!(out.converged());
    assert_eq!(out.solution.snapshots.len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("sweeps.csv")).unwrap();
    // header plus one row per agent for the bootstrap and the single sweep
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
}

#[test]
fn state_round_trips_bit_exactly() {
    let dir = TempDir::new().unwrap();
    let cfg = parse_in(TWO_AGENTS, &dir);
    let path = dir.path().join("state.txt");
    let out = cmd_solve(&cfg, &path).unwrap();
    let back = read_state(&path, &out.game).unwrap();
    assert!(back.converged);
    assert_eq!(back.state, out.solution.state);
    for (a, b) in back.state.quantizers.iter().zip(&out.solution.state.quantizers) {
        for (x, y) in a.words().iter().zip(b.words()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
    let again = dir.path().join("again.txt");
    write_state(&again, &out.game, &back.state, back.converged).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn state_for_another_config_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = parse_in(TWO_AGENTS, &dir);
    let path = dir.path().join("state.txt");
    cmd_solve(&cfg, &path).unwrap();
    let other = parse_in(&TWO_AGENTS.replace("id = 9", "id = 8"), &dir);
    let err = cmd_analyze(&other, &path).unwrap_err();
    assert!(matches!(err, CliError::StateFormat { .. }), "{err}");
}

#[test]
fn commands_need_a_solved_state() {
    let dir = TempDir::new().unwrap();
    let cfg = parse_in(TWO_AGENTS, &dir);
    let missing = dir.path().join("nope.txt");
    let err = cmd_simulate(&cfg, &missing, 0).unwrap_err();
    assert!(matches!(err, CliError::MissingState(_)));
    assert_eq!(err.exit_code(), 4);
    assert!(err.to_string().contains("run `socialquant solve` first"));
    assert!(matches!(cmd_verify(&cfg, &missing), Err(CliError::MissingState(_))));
    assert!(matches!(cmd_chains(&cfg, &missing), Err(CliError::MissingState(_))));
    assert!(matches!(cmd_analyze(&cfg, &missing), Err(CliError::MissingState(_))));
}

#[test]
fn simulate_rejects_zero_samples() {
    let dir = TempDir::new().unwrap();
    let mut cfg = parse_in(TWO_AGENTS, &dir);
    let path = dir.path().join("state.txt");
    cmd_solve(&cfg, &path).unwrap();
    cfg.montecarlo.n_samples = 0;
    let err = cmd_simulate(&cfg, &path, 0).unwrap_err();
    assert!(matches!(err, CliError::Argument(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn simulate_writes_losses_and_traces() {
    let dir = TempDir::new().unwrap();
    let cfg = parse_in(TWO_AGENTS, &dir);
    let path = dir.path().join("state.txt");
    cmd_solve(&cfg, &path).unwrap();
    let a = cmd_simulate(&cfg, &path, 25).unwrap();
    let b = cmd_simulate(&cfg, &path, 0).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 2);
    assert_eq!(a[1].agent, 9);
    assert_eq!(
        header(&dir.path().join("losses.csv")),
        "agent,samples,truncated,clamped,total,total_se,quantization,quantization_se,\
         communication,communication_se,cross,cross_se,direct_fraction,direct_fraction_se,mean_hops"
    );
    let samples = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 1 + 2 * 25);
    assert!(samples.lines().skip(1).all(|l| l.starts_with("7,") || l.starts_with("9,")));
}

#[test]
fn max_sweeps_exhaustion_still_writes_the_report() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config_in(&example("five_agents.toml"), &dir);
    cfg.solver.max_sweeps = 2;
    let out = cmd_solve(&cfg, &dir.path().join("state.txt")).unwrap();
    assert!(!out.converged());
    assert!(dir.path().join("report.csv").exists());
    assert!(dir.path().join("report.json").exists());
    let back = read_state(&dir.path().join("state.txt"), &out.game).unwrap();
    assert!(!back.converged);
}

#[test]
fn analyze_pairs() {
    let dir = TempDir::new().unwrap();
    let same = TWO_AGENTS.replace("alpha = 3.0\nbeta = 2.0", "alpha = 2.0\nbeta = 3.0");
    let cfg = parse_in(&same, &dir);
    let path = dir.path().join("state.txt");
    cmd_solve(&cfg, &path).unwrap();
    let pairs = cmd_analyze(&cfg, &path).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].hellinger, 0.0);
    assert_eq!(pairs[0].mse_physical, 0.0);
    assert!(pairs[0].mse_equilibrium < 1e-18);
    assert_eq!(
        header(&dir.path().join("pairs.csv")),
        "agent_a,agent_b,hellinger,mse_physical,mse_equilibrium,connected"
    );
}

#[test]
fn analyze_skips_pairs_with_different_levels() {
    let dir = TempDir::new().unwrap();
    let text = TWO_AGENTS.replacen("levels = 4", "levels = 3", 1);
    let cfg = parse_in(&text, &dir);
    let path = dir.path().join("state.txt");
    cmd_solve(&cfg, &path).unwrap();
    assert!(cmd_analyze(&cfg, &path).unwrap().is_empty());
}

#[test]
fn verify_two_agent_equilibrium() {
    let dir = TempDir::new().unwrap();
    let cfg = parse_in(TWO_AGENTS, &dir);
    let path = dir.path().join("state.txt");
    cmd_solve(&cfg, &path).unwrap();
    let r = cmd_verify(&cfg, &path).unwrap();
    assert!(r.converged);
    for a in &r.agents {
        assert!(a.observed_residual < 1e-8);
        assert!(a.best_response_distance < 1e-6);
        assert_eq!(a.true_residual.as_ref().unwrap().samples, 20_000);
    }
    assert_eq!(
        header(&dir.path().join("verify.csv")),
        "agent,observed_residual,best_response_distance,true_max_abs_deviation,true_max_abs_z,samples"
    );
}

#[test]
fn shipped_states_hold_the_fixture_quantizers() {
    for (name, (q, _)) in [("shared_vocabulary", shared_set().unwrap()), ("ladder", ladder().unwrap())] {
        let cfg = load_config(&example(&format!("{name}.toml"))).unwrap();
        let game = cfg.game().unwrap();
        let stored = read_state(&example(&format!("{name}.state")), &game).unwrap();
        assert_eq!(stored.state.quantizers, q, "{name}");
    }
}

#[test]
fn shared_vocabulary_chains_have_no_spread() {
    let dir = TempDir::new().unwrap();
    let cfg = config_in(&example("shared_vocabulary.toml"), &dir);
    let out = cmd_chains(&cfg, &example("shared_vocabulary.state")).unwrap();
    assert!(out.vocabulary.shared);
    assert_eq!(out.probes.len(), 9);
    assert_eq!(out.max_spread(), 0.0);
    assert!(out.chains.iter().all(|c| c.within_cell_bound == Some(true)));
    assert_eq!(
        header(&dir.path().join("chains.csv")),
        "chain,length,max_translation_loss,max_word_drift,within_cell_bound,clamped"
    );
    assert_eq!(
        header(&dir.path().join("probes.csv")),
        "from,to,chains,inputs,max_spread,worst_input"
    );
}

#[test]
fn ladder_chains_depend_on_the_path() {
    let dir = TempDir::new().unwrap();
    let cfg = config_in(&example("ladder.toml"), &dir);
    let out = cmd_chains(&cfg, &example("ladder.state")).unwrap();
    assert!(!out.vocabulary.shared);
    let p = out.probes.iter().find(|p| p.from == 0 && p.to == 3).unwrap();
    assert_eq!(p.chains, 2);
    assert!(p.max_spread > 0.0);
}

fn binary(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_socialquant"))
        .args(args)
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn binary_exit_codes() {
    let dir = TempDir::new().unwrap();
    let cfg_path = dir.path().join("two.toml");
    std::fs::write(&cfg_path, TWO_AGENTS).unwrap();
    let out = dir.path().join("out");
    let (c, o) = (cfg_path.to_str().unwrap(), out.to_str().unwrap());

    let (code, text) = binary(&["analyze", "--config", c, "--out", o]);
    assert_eq!(code, 4, "{text}");
    assert!(text.contains("solve"));

    let (code, text) = binary(&["solve", "--config", c, "--out", o]);
    assert_eq!(code, 0, "{text}");
    assert!(out.join("state.txt").exists());

    let (code, text) = binary(&["simulate", "--config", c, "--out", o, "--samples", "0"]);
    assert_eq!(code, 2, "{text}");

    let (code, text) = binary(&["simulate", "--config", c, "--out", o, "--samples", "1000", "--seed", "3"]);
    assert_eq!(code, 0, "{text}");
    assert!(out.join("losses.csv").exists());

    let (code, text) = binary(&["solve", "--config", c, "--out", o, "--max-sweeps", "1", "--tol", "1e-15"]);
    assert_eq!(code, 3, "{text}");
    assert!(out.join("report.csv").exists());

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, TWO_AGENTS.replace("[0.2, 0.8]", "[0.2, 0.7]")).unwrap();
    let (code, text) = binary(&["solve", "--config", bad.to_str().unwrap(), "--out", o]);
    assert_eq!(code, 2, "{text}");
    assert!(text.contains("comm.rows[1]"));
}
