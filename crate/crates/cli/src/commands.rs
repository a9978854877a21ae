//! The five subcommands. Each reads the config (and, past `solve`, the stored
//! state), writes its files under `output.directory` and returns what it wrote.

use std::fs::File;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use socialquant::game::{physical_optima, Solution, VerifyOptions};
use socialquant::montecarlo::{
    chain_translate, enumerate_chains, estimate_losses, path_dependence_probe, sample_signal,
    shared_vocabulary, LossReport, ProbeReport, SharedVocabulary,
};
use socialquant::{
    hellinger_beta, solve_equilibrium, verify_nash, EquilibriumReport, Error, Game,
    RegularQuantizer,
};

use crate::config::{ExperimentConfig, Format};
use crate::error::{CliError, Result};
use crate::state::{read_state, write_state, StoredState};

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.output.directory.clone();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

fn joined(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn load(cfg: &ExperimentConfig, state: &Path) -> Result<(Game, StoredState)> {
    let game = cfg.game()?;
    let stored = read_state(state, &game)?;
    Ok((game, stored))
}

fn require_samples(cfg: &ExperimentConfig) -> Result<u64> {
    match cfg.montecarlo.n_samples {
        0 => Err(CliError::Argument("the sample count must be positive".into())),
        n => Ok(n),
    }
}

pub struct SolveOutcome {
    pub game: Game,
    pub solution: Solution,
    pub files: Vec<PathBuf>,
}

impl SolveOutcome {
    pub fn converged(&self) -> bool {
        self.solution.report.converged
    }
}

/// Solves for an equilibrium and writes the state to `state`, plus
/// `sweeps.*` and `report.*`. Non-convergence is not an error here; the caller
/// decides the exit status.
pub fn cmd_solve(cfg: &ExperimentConfig, state: &Path) -> Result<SolveOutcome> {
    let game = cfg.game()?;
    let solution = solve_equilibrium(&game, &cfg.solver_options())?;
    let dir = out_dir(cfg)?;
    if let Some(parent) = state.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let converged = solution.report.converged;
    write_state(state, &game, &solution.state, converged)?;
    let mut files = vec![state.to_path_buf()];
    let ids: Vec<u32> = game.agents().iter().map(|a| a.id).collect();

    if cfg.wants(Format::Csv) {
        let mut rows = Vec::new();
        for s in &solution.snapshots {
            for (i, q) in s.quantizers.iter().enumerate() {
                rows.push(vec![
                    s.sweep.to_string(),
                    ids[i].to_string(),
                    s.max_move.to_string(),
                    joined(q.words()),
                    joined(q.boundaries()),
                    joined(&s.usage[i]),
                ]);
            }
        }
        let path = dir.join("sweeps.csv");
        write_csv(
            &path,
            &["sweep", "agent", "max_move", "words", "boundaries", "usage"],
            &rows,
        )?;
        files.push(path);

        let rows: Vec<Vec<String>> = solution
            .report
            .agents
            .iter()
            .map(|a| {
                vec![
                    a.id.to_string(),
                    converged.to_string(),
                    solution.report.sweeps.to_string(),
                    a.observed_residual.to_string(),
                    a.best_response_distance.to_string(),
                ]
            })
            .collect();
        let path = dir.join("report.csv");
        write_csv(
            &path,
            &["agent", "converged", "sweeps", "observed_residual", "best_response_distance"],
            &rows,
        )?;
        files.push(path);
    }
    if cfg.wants(Format::Json) {
        let path = dir.join("sweeps.json");
        write_json(&path, &solution.snapshots)?;
        files.push(path);
        let path = dir.join("report.json");
        write_json(&path, &solution.report)?;
        files.push(path);
    }
    Ok(SolveOutcome {
        game,
        solution,
        files,
    })
}

/// Per-agent loss decomposition by path sampling. Agent `i` uses seed
/// `montecarlo.seed + i`. With `trace > 0` the first `trace` sampled signals
/// per agent go to `samples.csv`.
pub fn cmd_simulate(cfg: &ExperimentConfig, state: &Path, trace: usize) -> Result<Vec<LossReport>> {
    let n = require_samples(cfg)?;
    let (game, stored) = load(cfg, state)?;
    let seed = cfg.montecarlo.seed;
    let reports = (0..game.n_agents())
        .map(|i| estimate_losses(&game, &stored.state, i, n, seed.wrapping_add(i as u64)))
        .collect::<socialquant::Result<Vec<_>>>()?;
    let dir = out_dir(cfg)?;
    let ids: Vec<u32> = game.agents().iter().map(|a| a.id).collect();

    if cfg.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = reports
            .iter()
            .map(|r| {
                let mut row = vec![
                    r.agent.to_string(),
                    r.samples.to_string(),
                    r.truncated.to_string(),
                    r.clamped.to_string(),
                ];
                for e in [&r.total, &r.quantization, &r.communication, &r.cross, &r.paths.direct_fraction] {
                    row.push(e.mean.to_string());
                    row.push(e.standard_error.to_string());
                }
                row.push(r.paths.mean_hops.to_string());
                row
            })
            .collect();
        write_csv(
            &dir.join("losses.csv"),
            &[
                "agent",
                "samples",
                "truncated",
                "clamped",
                "total",
                "total_se",
                "quantization",
                "quantization_se",
                "communication",
                "communication_se",
                "cross",
                "cross_se",
                "direct_fraction",
                "direct_fraction_se",
                "mean_hops",
            ],
            &rows,
        )?;
    }
    if cfg.wants(Format::Json) {
        write_json(&dir.join("losses.json"), &reports)?;
    }

    if trace > 0 {
        let mut rows = Vec::new();
        for i in 0..game.n_agents() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            // a stream the loss estimates never use
            rng.set_stream(u64::MAX);
            let q = &stored.state.quantizers[i];
            for draw in 0..trace {
                let s = sample_signal(&game, &stored.state, i, &mut rng)?;
                let path: Vec<String> = s.path.iter().map(|&a| ids[a].to_string()).collect();
                rows.push(vec![
                    ids[i].to_string(),
                    draw.to_string(),
                    ids[s.origin_agent].to_string(),
                    s.true_value.to_string(),
                    s.observed_value.to_string(),
                    q.words()[q.index_of(s.observed_value)].to_string(),
                    (s.path.len() - 1).to_string(),
                    s.cycle_count.to_string(),
                    s.truncated.to_string(),
                    s.clamped.to_string(),
                    path.join(">"),
                ]);
            }
        }
        write_csv(
            &dir.join("samples.csv"),
            &[
                "agent",
                "draw",
                "origin",
                "true_value",
                "observed_value",
                "word",
                "hops",
                "cycle_count",
                "truncated",
                "clamped",
                "path",
            ],
            &rows,
        )?;
    }
    Ok(reports)
}

/// Worst case of one chain over the probe inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSummary {
    /// Agent ids, sender first.
    pub chain: Vec<u32>,
    pub max_translation_loss: f64,
    pub max_word_drift: f64,
    /// Whether drift and loss stayed within the cell bounds; `None` when the
    /// chain's agents share no vocabulary, so no bound applies.
    pub within_cell_bound: Option<bool>,
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainsOutcome {
    pub vocabulary: SharedVocabulary,
    pub probes: Vec<ProbeReport>,
    pub chains: Vec<ChainSummary>,
}

impl ChainsOutcome {
    pub fn max_spread(&self) -> f64 {
        self.probes.iter().map(|p| p.max_spread).fold(0.0, f64::max)
    }
}

/// Shared-vocabulary check over all agents, a path-dependence probe for every
/// ordered pair joined by a chain, and per-chain translation summaries.
/// Translations use the configured noise and `montecarlo.seed`.
pub fn cmd_chains(cfg: &ExperimentConfig, state: &Path) -> Result<ChainsOutcome> {
    let (game, stored) = load(cfg, state)?;
    let quantizers: &[RegularQuantizer] = &stored.state.quantizers;
    let comm = game.comm();
    let n = game.n_agents();
    let ids: Vec<u32> = game.agents().iter().map(|a| a.id).collect();
    let all: Vec<usize> = (0..n).collect();
    let vocabulary = shared_vocabulary(quantizers, &all)?;
    let (max_len, n_inputs) = (cfg.chains.max_len, cfg.chains.n_inputs);
    let noise = cfg.noise()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.montecarlo.seed);

    let mut probes = Vec::new();
    let mut chains = Vec::new();
    for from in 0..n {
        for to in 0..n {
            match path_dependence_probe(quantizers, comm, from, to, max_len, n_inputs) {
                Ok(p) => probes.push(p),
                Err(Error::NoChain { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
            for chain in enumerate_chains(comm, from, to, max_len) {
                let mut s = ChainSummary {
                    chain: chain.iter().map(|&a| ids[a]).collect(),
                    max_translation_loss: 0.0,
                    max_word_drift: 0.0,
                    within_cell_bound: None,
                    clamped: 0,
                };
                for t in 0..n_inputs {
                    let x = (t as f64 + 1.0) / (n_inputs as f64 + 1.0);
                    let r = chain_translate(quantizers, &chain, x, &noise, &mut rng)?;
                    s.max_translation_loss = s.max_translation_loss.max(r.translation_loss);
                    s.max_word_drift = s.max_word_drift.max(r.word_drift);
                    s.clamped += r.clamped;
                    if let (Some(b), Some(mb)) = (r.cell_bound, r.max_cell_bound) {
                        let ok = r.word_drift <= b && r.translation_loss <= mb;
                        s.within_cell_bound = Some(s.within_cell_bound.unwrap_or(true) && ok);
                    }
                }
                chains.push(s);
            }
        }
    }

    let dir = out_dir(cfg)?;
    if cfg.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = probes
            .iter()
            .map(|p| {
                vec![
                    ids[p.from].to_string(),
                    ids[p.to].to_string(),
                    p.chains.to_string(),
                    p.inputs.to_string(),
                    p.max_spread.to_string(),
                    p.worst_input.to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.join("probes.csv"),
            &["from", "to", "chains", "inputs", "max_spread", "worst_input"],
            &rows,
        )?;

        let rows: Vec<Vec<String>> = chains
            .iter()
            .map(|c| {
                let ids: Vec<String> = c.chain.iter().map(u32::to_string).collect();
                vec![
                    ids.join(">"),
                    c.chain.len().to_string(),
                    c.max_translation_loss.to_string(),
                    c.max_word_drift.to_string(),
                    c.within_cell_bound.map(|b| b.to_string()).unwrap_or_default(),
                    c.clamped.to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.join("chains.csv"),
            &[
                "chain",
                "length",
                "max_translation_loss",
                "max_word_drift",
                "within_cell_bound",
                "clamped",
            ],
            &rows,
        )?;
    }
    let outcome = ChainsOutcome {
        vocabulary,
        probes,
        chains,
    };
    if cfg.wants(Format::Json) {
        write_json(&dir.join("chains.json"), &outcome)?;
    }
    Ok(outcome)
}

/// One unordered pair of agents with equal level counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRow {
    pub agent_a: u32,
    pub agent_b: u32,
    /// Squared Hellinger distance between the two physical sources.
    pub hellinger: f64,
    /// Mean squared distance between representation points of the
    /// physical-only designs.
    pub mse_physical: f64,
    /// The same for the equilibrium quantizers.
    pub mse_equilibrium: f64,
    pub connected: bool,
}

pub fn mean_squared_distance(a: &RegularQuantizer, b: &RegularQuantizer) -> f64 {
    let m = a.levels() as f64;
    a.words()
        .iter()
        .zip(b.words())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / m
}

/// Pairwise source distance against representation-point distance, physical
/// optimum versus equilibrium. Pairs with different level counts are skipped.
pub fn cmd_analyze(cfg: &ExperimentConfig, state: &Path) -> Result<Vec<PairRow>> {
    let (game, stored) = load(cfg, state)?;
    let optima = physical_optima(&game, &cfg.solver_options())?;
    let eq = &stored.state.quantizers;
    let agents = game.agents();
    let mut pairs = Vec::new();
    for i in 0..agents.len() {
        for j in i + 1..agents.len() {
            if agents[i].levels != agents[j].levels {
                log::warn!(
                    "skipping agents {} and {}: {} vs {} levels",
                    agents[i].id,
                    agents[j].id,
                    agents[i].levels,
                    agents[j].levels
                );
                continue;
            }
            pairs.push(PairRow {
                agent_a: agents[i].id,
                agent_b: agents[j].id,
                hellinger: hellinger_beta(&agents[i].physical, &agents[j].physical),
                mse_physical: mean_squared_distance(&optima[i], &optima[j]),
                mse_equilibrium: mean_squared_distance(&eq[i], &eq[j]),
                connected: game.comm().connected(i, j),
            });
        }
    }

    let dir = out_dir(cfg)?;
    if cfg.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = pairs
            .iter()
            .map(|p| {
                vec![
                    p.agent_a.to_string(),
                    p.agent_b.to_string(),
                    p.hellinger.to_string(),
                    p.mse_physical.to_string(),
                    p.mse_equilibrium.to_string(),
                    p.connected.to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.join("pairs.csv"),
            &["agent_a", "agent_b", "hellinger", "mse_physical", "mse_equilibrium", "connected"],
            &rows,
        )?;
    }
    if cfg.wants(Format::Json) {
        write_json(&dir.join("pairs.json"), &pairs)?;
    }
    Ok(pairs)
}

/// Centroid conditions at the stored state: closed form against the observed
/// environment, sampled against the true one, and distance to a fresh best
/// response.
pub fn cmd_verify(cfg: &ExperimentConfig, state: &Path) -> Result<EquilibriumReport> {
    let n = require_samples(cfg)?;
    let (game, stored) = load(cfg, state)?;
    let verify = VerifyOptions {
        n_samples: n,
        seed: cfg.montecarlo.seed,
    };
    let report = verify_nash(
        &game,
        &stored.state,
        stored.converged,
        &cfg.solver_options(),
        &verify,
    )?;

    let dir = out_dir(cfg)?;
    if cfg.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = report
            .agents
            .iter()
            .map(|a| {
                let t = a.true_residual.as_ref();
                vec![
                    a.id.to_string(),
                    a.observed_residual.to_string(),
                    a.best_response_distance.to_string(),
                    t.map(|t| t.max_abs_deviation.to_string()).unwrap_or_default(),
                    t.map(|t| t.max_abs_z.to_string()).unwrap_or_default(),
                    t.map(|t| t.samples.to_string()).unwrap_or_default(),
                ]
            })
            .collect();
        write_csv(
            &dir.join("verify.csv"),
            &[
                "agent",
                "observed_residual",
                "best_response_distance",
                "true_max_abs_deviation",
                "true_max_abs_z",
                "samples",
            ],
            &rows,
        )?;
    }
    if cfg.wants(Format::Json) {
        write_json(&dir.join("verify.json"), &report)?;
    }
    Ok(report)
}
