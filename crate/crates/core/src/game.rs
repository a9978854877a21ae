//! Best-response dynamics over the agents' quantizers.
//!
//! Agents start from the Lloyd-Max optimum for their physical source alone and
//! then take turns re-designing against their current observed environment.
//! The cyclic order follows agent indices; for acyclic networks a topological
//! order reaches the equilibrium in a single pass.

use serde::{Deserialize, Serialize};

use crate::density::{BetaDensity, MixtureDensity, NoiseKernel};
use crate::error::{Error, Result};
use crate::montecarlo::{self, WordResidual};
use crate::network::{self, detect_acyclic, AgentSpec, CommMatrix};
use crate::quantizer::{
    centroid_residual, multi_start_from, Jitter, LloydOptions, RegularQuantizer,
};

/// Agents, who listens to whom, and the channel noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Game {
    agents: Vec<AgentSpec>,
    comm: CommMatrix,
    noise: NoiseKernel,
}

impl Game {
    pub fn new(agents: Vec<AgentSpec>, comm: CommMatrix, noise: NoiseKernel) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::Argument("a game needs at least one agent".into()));
        }
        if comm.n_agents() != agents.len() {
            return Err(Error::Argument(format!(
                "communication matrix is {0}x{0} but there are {1} agents",
                comm.n_agents(),
                agents.len()
            )));
        }
        let mut ids: Vec<u32> = agents.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Argument(format!("duplicate agent id {}", w[0])));
        }
        Ok(Self {
            agents,
            comm,
            noise,
        })
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn comm(&self) -> &CommMatrix {
        &self.comm
    }

    pub fn noise(&self) -> &NoiseKernel {
        &self.noise
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn physicals(&self) -> Vec<BetaDensity> {
        self.agents.iter().map(|a| a.physical).collect()
    }

    /// Observed environment of agent `i` under the quantizers and usage in `state`.
    pub fn observed_environment(&self, i: usize, state: &GameState) -> Result<MixtureDensity> {
        network::observed_environment(
            i,
            &self.agents[i].physical,
            &self.comm,
            &state.quantizers,
            &state.usage,
            &self.noise,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulePolicy {
    Cyclic,
    TopologicalIfAcyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence threshold on the largest word or boundary move in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    pub schedule: SchedulePolicy,
    /// Lloyd-Max starts per best response. Extra starts use fixed offsets, so
    /// the solve involves no randomness.
    pub n_starts: usize,
    pub lloyd: LloydOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_sweeps: 200,
            schedule: SchedulePolicy::Cyclic,
            n_starts: 8,
            lloyd: LloydOptions::default(),
        }
    }
}

/// A strategy profile with its word usage and cached observed environments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameState {
    pub quantizers: Vec<RegularQuantizer>,
    pub usage: Vec<Vec<f64>>,
    pub observed: Vec<MixtureDensity>,
    pub iteration: usize,
    pub last_max_move: f64,
}

impl GameState {
    /// Rebuilds a state from stored quantizers and usage, recomputing the
    /// observed environments.
    pub fn from_parts(
        game: &Game,
        quantizers: Vec<RegularQuantizer>,
        usage: Vec<Vec<f64>>,
        iteration: usize,
        last_max_move: f64,
    ) -> Result<Self> {
        let n = game.n_agents();
        if quantizers.len() != n || usage.len() != n {
            return Err(Error::StateConsistency(format!(
                "state has {} quantizers and {} usage vectors for {n} agents",
                quantizers.len(),
                usage.len()
            )));
        }
        for (i, (q, spec)) in quantizers.iter().zip(game.agents()).enumerate() {
            if q.levels() != spec.levels {
                return Err(Error::StateConsistency(format!(
                    "agent {i}: quantizer has {} words, expected {}",
                    q.levels(),
                    spec.levels
                )));
            }
        }
        let mut state = Self {
            quantizers,
            usage,
            observed: Vec::new(),
            iteration,
            last_max_move,
        };
        state.observed = (0..n)
            .map(|i| game.observed_environment(i, &state))
            .collect::<Result<_>>()?;
        Ok(state)
    }

    /// Brings usage to the fixed point implied by the current quantizers, then
    /// recomputes every observed environment from it.
    pub fn refresh(&mut self, game: &Game) -> Result<()> {
        for _ in 0..500 {
            let observed: Vec<MixtureDensity> = (0..game.n_agents())
                .map(|i| game.observed_environment(i, self))
                .collect::<Result<_>>()?;
            let mut change = 0.0f64;
            for (i, obs) in observed.iter().enumerate() {
                let u = network::word_usage(obs, &self.quantizers[i]);
                for (a, b) in u.iter().zip(&self.usage[i]) {
                    change = change.max((a - b).abs());
                }
                self.usage[i] = u;
            }
            if change <= 1e-15 {
                break;
            }
        }
        self.observed = (0..game.n_agents())
            .map(|i| game.observed_environment(i, self))
            .collect::<Result<_>>()?;
        Ok(())
    }
}

/// Quantizers and usage after one sweep (sweep 0 is the bootstrap).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub sweep: usize,
    pub quantizers: Vec<RegularQuantizer>,
    pub usage: Vec<Vec<f64>>,
    pub max_move: f64,
}

impl Snapshot {
    fn of(state: &GameState, max_move: f64) -> Self {
        Self {
            sweep: state.iteration,
            quantizers: state.quantizers.clone(),
            usage: state.usage.clone(),
            max_move,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrueResidual {
    pub samples: u64,
    pub words: Vec<WordResidual>,
    /// Largest `|E[X | word] - y|` over words that were used.
    pub max_abs_deviation: f64,
    /// Largest `|deviation| / standard error` over words that were used.
    pub max_abs_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentReport {
    pub id: u32,
    pub observed_residual: f64,
    pub true_residual: Option<TrueResidual>,
    pub best_response_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub agents: Vec<AgentReport>,
    pub converged: bool,
    pub sweeps: usize,
}

impl EquilibriumReport {
    pub fn max_observed_residual(&self) -> f64 {
        self.agents.iter().map(|a| a.observed_residual).fold(0.0, f64::max)
    }

    pub fn max_best_response_distance(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| a.best_response_distance)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub state: GameState,
    pub report: EquilibriumReport,
    pub snapshots: Vec<Snapshot>,
    pub schedule: Vec<usize>,
}

/// Lloyd-Max optimum of each agent for its physical source alone.
pub fn physical_optima(game: &Game, opts: &SolverOptions) -> Result<Vec<RegularQuantizer>> {
    game.agents()
        .iter()
        .map(|a| {
            let d = MixtureDensity::from(a.physical);
            Ok(multi_start_from(
                &d,
                a.levels,
                None,
                opts.n_starts,
                Jitter::Fixed,
                &opts.lloyd,
            )?
            .quantizer)
        })
        .collect()
}

/// Physical-only designs, with usage taken from the physical sources.
pub fn bootstrap(game: &Game, opts: &SolverOptions) -> Result<GameState> {
    let quantizers = physical_optima(game, opts)?;
    let usage = quantizers
        .iter()
        .zip(game.agents())
        .map(|(q, a)| network::word_usage(&a.physical.into(), q))
        .collect();
    GameState::from_parts(game, quantizers, usage, 0, f64::INFINITY)
}

fn respond(
    game: &Game,
    state: &GameState,
    i: usize,
    observed: &MixtureDensity,
    opts: &SolverOptions,
) -> Result<RegularQuantizer> {
    let warm = state.quantizers[i].words();
    Ok(multi_start_from(
        observed,
        game.agents()[i].levels,
        Some(warm),
        opts.n_starts,
        Jitter::Fixed,
        &opts.lloyd,
    )?
    .quantizer)
}

/// Multi-start Lloyd-Max on agent `i`'s observed environment, warm-started from
/// its current quantizer.
pub fn best_response(
    game: &Game,
    state: &GameState,
    i: usize,
    opts: &SolverOptions,
) -> Result<RegularQuantizer> {
    let observed = game.observed_environment(i, state)?;
    respond(game, state, i, &observed, opts)
}

/// One pass of best responses in `schedule` order. Returns the largest word or
/// boundary displacement.
pub fn sweep(
    game: &Game,
    state: &mut GameState,
    schedule: &[usize],
    opts: &SolverOptions,
) -> Result<f64> {
    let mut seen = vec![false; game.n_agents()];
    for &i in schedule {
        if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Argument(
                "schedule must be a permutation of the agents".into(),
            ));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Argument(
            "schedule must be a permutation of the agents".into(),
        ));
    }

    let mut max_move = 0.0f64;
    for &i in schedule {
        let observed = game.observed_environment(i, state)?;
        let next = respond(game, state, i, &observed, opts)?;
        max_move = max_move.max(next.max_displacement(&state.quantizers[i]));
        state.usage[i] = network::word_usage(&observed, &next);
        state.observed[i] = observed;
        state.quantizers[i] = next;
    }
    state.iteration += 1;
    state.last_max_move = max_move;
    Ok(max_move)
}

/// The order agents respond in under `policy`.
pub fn schedule_for(game: &Game, policy: SchedulePolicy) -> Vec<usize> {
    match policy {
        SchedulePolicy::TopologicalIfAcyclic => detect_acyclic(game.comm())
            .order
            .unwrap_or_else(|| (0..game.n_agents()).collect()),
        SchedulePolicy::Cyclic => (0..game.n_agents()).collect(),
    }
}

/// Observed-environment residuals and best-response distances for `state`.
pub fn equilibrium_report(
    game: &Game,
    state: &GameState,
    converged: bool,
    opts: &SolverOptions,
) -> Result<EquilibriumReport> {
    let agents = (0..game.n_agents())
        .map(|i| {
            let observed = game.observed_environment(i, state)?;
            let q = &state.quantizers[i];
            let br = respond(game, state, i, &observed, opts)?;
            Ok(AgentReport {
                id: game.agents()[i].id,
                observed_residual: centroid_residual(q, &observed)?,
                true_residual: None,
                best_response_distance: br.max_word_distance(q),
            })
        })
        .collect::<Result<_>>()?;
    Ok(EquilibriumReport {
        agents,
        converged,
        sweeps: state.iteration,
    })
}

/// Bootstraps from physical-only designs and sweeps until the largest move in a
/// sweep drops below `opts.tol` or `opts.max_sweeps` is reached.
pub fn solve_equilibrium(game: &Game, opts: &SolverOptions) -> Result<Solution> {
    let mut state = bootstrap(game, opts)?;
    let schedule = schedule_for(game, opts.schedule);
    let mut snapshots = vec![Snapshot::of(&state, f64::INFINITY)];
    let mut converged = false;
    for _ in 0..opts.max_sweeps {
        let moved = sweep(game, &mut state, &schedule, opts)?;
        snapshots.push(Snapshot::of(&state, moved));
        log::debug!("sweep {}: max move {moved:.3e}", state.iteration);
        if moved < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "no convergence after {} sweeps (last move {:.3e})",
            state.iteration,
            state.last_max_move
        );
    }
    state.refresh(game)?;
    let report = equilibrium_report(game, &state, converged, opts)?;
    Ok(Solution {
        state,
        report,
        snapshots,
        schedule,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub n_samples: u64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n_samples: 1_000_000,
            seed: 1,
        }
    }
}

/// Centroid conditions against the observed environment (closed form) and the
/// true environment (path sampling), plus distance to a fresh best response.
pub fn verify_nash(
    game: &Game,
    state: &GameState,
    converged: bool,
    opts: &SolverOptions,
    verify: &VerifyOptions,
) -> Result<EquilibriumReport> {
    let mut report = equilibrium_report(game, state, converged, opts)?;
    for (i, agent) in report.agents.iter_mut().enumerate() {
        let seed = verify.seed.wrapping_add(i as u64);
        let words = montecarlo::word_conditional_residuals(game, state, i, verify.n_samples, seed)?;
        let used = words.iter().filter(|w| w.count > 1);
        let max_abs_deviation = used
            .clone()
            .map(|w| w.mean_deviation.abs())
            .fold(0.0, f64::max);
        let max_abs_z = used
            .map(|w| {
                if w.standard_error > 0.0 {
                    w.mean_deviation.abs() / w.standard_error
                } else if w.mean_deviation == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max);
        agent.true_residual = Some(TrueResidual {
            samples: verify.n_samples,
            words,
            max_abs_deviation,
            max_abs_z,
        });
    }
    Ok(report)
}

/// Margins behind the social-stability assumption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    /// `min |y°_i^k - a°_j^l|` over communicating pairs (both directions) and
    /// interior boundaries; infinite when no pair communicates.
    pub separation: f64,
    /// `min |y°_i^k - a°_i^l|` over each agent's own cells.
    pub own_margin: f64,
    /// `max_i max_k |y°_i^k - y_i^k|` for the state under test.
    pub drift: f64,
    pub noise_halfwidth: f64,
    /// Supremum of admissible epsilon, when one exists.
    pub epsilon: Option<f64>,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.epsilon.is_some()
    }
}

/// Checks word/boundary separation of the physical optima, drift of `state`
/// away from them, and noise support against a common epsilon.
pub fn check_social_stability(
    game: &Game,
    state: &GameState,
    optima: &[RegularQuantizer],
) -> StabilityReport {
    let comm = game.comm();
    let n = game.n_agents();
    let dist_to_bounds = |words: &[f64], bounds: &[f64]| {
        words
            .iter()
            .flat_map(|y| bounds.iter().map(move |a| (y - a).abs()))
            .fold(f64::INFINITY, f64::min)
    };
    let mut separation = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if comm.connected(i, j) {
                let b = optima[j].boundaries();
                separation = separation.min(dist_to_bounds(optima[i].words(), &b[1..b.len() - 1]));
            }
        }
    }
    let own_margin = optima
        .iter()
        .map(|q| dist_to_bounds(q.words(), q.boundaries()))
        .fold(f64::INFINITY, f64::min);
    let drift = optima
        .iter()
        .zip(&state.quantizers)
        .map(|(a, b)| a.max_word_distance(b))
        .fold(0.0, f64::max);
    let noise_halfwidth = game.noise().halfwidth();
    let cap = separation.min(own_margin);
    let epsilon = (cap > 2.0 * drift.max(noise_halfwidth)).then_some(cap);
    StabilityReport {
        separation,
        own_margin,
        drift,
        noise_halfwidth,
        epsilon,
    }
}
