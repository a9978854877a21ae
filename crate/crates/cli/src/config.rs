//! Experiment configuration, read from a TOML document.
//!
//! ```toml
//! [[agents]]
//! id = 1
//! alpha = 6.0
//! beta = 2.5
//! levels = 6
//!
//! [comm]
//! rows = [[0.8, 0.2], [0.1, 0.9]]
//!
//! [noise]            # optional, default point
//! shape = "uniform"  # point | uniform | triangular
//! halfwidth = 0.02
//!
//! [solver]           # optional
//! tol = 1e-9
//! max_sweeps = 200
//! schedule = "cyclic" # cyclic | topological_if_acyclic
//! n_starts = 8
//!
//! [montecarlo]       # optional
//! n_samples = 100000
//! seed = 1
//!
//! [chains]           # optional
//! max_len = 5
//! n_inputs = 101
//!
//! [output]           # optional
//! directory = "out"
//! formats = ["csv", "json"]
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use socialquant::{
    AgentSpec, BetaDensity, CommMatrix, Game, KernelShape, NoiseKernel, SchedulePolicy,
    SolverOptions,
};

use crate::error::{CliError, Result};

/// Row sums this close to 1 are accepted as they are.
pub const ROW_ACCEPT_TOL: f64 = 1e-9;
/// Row sums this close to 1 are rescaled with a warning; anything further is rejected.
pub const ROW_RENORMALIZE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub agents: Vec<AgentConfig>,
    pub comm: CommConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub montecarlo: MonteCarloConfig,
    #[serde(default)]
    pub chains: ChainsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub id: u32,
    pub alpha: f64,
    pub beta: f64,
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommConfig {
    /// `rows[i][j]`: probability that a signal reaching agent `i` was relayed by agent `j`
    /// (the diagonal is the agent's own source).
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_shape")]
    pub shape: KernelShape,
    #[serde(default)]
    pub halfwidth: f64,
}

fn default_shape() -> KernelShape {
    KernelShape::Point
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            shape: KernelShape::Point,
            halfwidth: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_sweeps: usize,
    pub schedule: SchedulePolicy,
    pub n_starts: usize,
    /// Accepted but unused: the solve draws no random numbers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            tol: d.tol,
            max_sweeps: d.max_sweeps,
            schedule: d.schedule,
            n_starts: d.n_starts,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloConfig {
    pub n_samples: u64,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainsConfig {
    /// Longest chain, counted in agents.
    pub max_len: usize,
    /// Inputs `(t + 1) / (n + 1)` probed per chain.
    pub n_inputs: usize,
}

impl Default for ChainsConfig {
    fn default() -> Self {
        Self {
            max_len: 5,
            n_inputs: 101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ExperimentConfig::parse(&text)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every invariant; rows within [`ROW_RENORMALIZE_TOL`] of
    /// stochastic are rescaled in place.
    pub fn validate(&mut self) -> Result<()> {
        let n = self.agents.len();
        if n == 0 {
            return Err(invalid("agents: at least one agent is required"));
        }
        let mut ids = HashSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            if !ids.insert(a.id) {
                return Err(invalid(format!("agents[{i}].id = {} is repeated", a.id)));
            }
            for (name, v) in [("alpha", a.alpha), ("beta", a.beta)] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid(format!("agents[{i}].{name} = {v} must be positive")));
                }
            }
            if a.levels == 0 {
                return Err(invalid(format!("agents[{i}].levels must be at least 1")));
            }
        }

        let rows = &mut self.comm.rows;
        if rows.len() != n {
            return Err(invalid(format!(
                "comm.rows has {} rows for {n} agents",
                rows.len()
            )));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            if row.len() != n {
                return Err(invalid(format!(
                    "comm.rows[{i}] has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some((j, v)) = row.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(invalid(format!("comm.rows[{i}][{j}] = {v} must be a probability")));
            }
            let sum: f64 = row.iter().sum();
            let off = (sum - 1.0).abs();
            if off > ROW_RENORMALIZE_TOL {
                return Err(invalid(format!("comm.rows[{i}] sums to {sum}, expected 1")));
            }
            if off > ROW_ACCEPT_TOL {
                log::warn!("comm.rows[{i}] sums to {sum}; rescaling to 1");
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }

        NoiseKernel::new(self.noise.shape, self.noise.halfwidth)
            .map_err(|e| invalid(format!("noise: {e}")))?;

        let s = &self.solver;
        if !(s.tol.is_finite() && s.tol > 0.0) {
            return Err(invalid(format!("solver.tol = {} must be positive", s.tol)));
        }
        if s.max_sweeps == 0 {
            return Err(invalid("solver.max_sweeps must be at least 1"));
        }
        if s.n_starts == 0 {
            return Err(invalid("solver.n_starts must be at least 1"));
        }
        if s.seed.is_some() {
            log::warn!("solver.seed is ignored: the solve uses no random numbers");
        }
        if self.chains.max_len < 2 {
            return Err(invalid("chains.max_len must be at least 2"));
        }
        if self.chains.n_inputs == 0 {
            return Err(invalid("chains.n_inputs must be at least 1"));
        }
        if self.output.formats.is_empty() {
            return Err(invalid("output.formats must name at least one format"));
        }
        Ok(())
    }

    pub fn game(&self) -> Result<Game> {
        let agents = self
            .agents
            .iter()
            .map(|a| AgentSpec::new(a.id, BetaDensity::new(a.alpha, a.beta)?, a.levels))
            .collect::<socialquant::Result<_>>()?;
        let comm = CommMatrix::new(self.comm.rows.clone())?;
        Ok(Game::new(agents, comm, self.noise()?)?)
    }

    pub fn noise(&self) -> Result<NoiseKernel> {
        Ok(NoiseKernel::new(self.noise.shape, self.noise.halfwidth)?)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_sweeps: self.solver.max_sweeps,
            schedule: self.solver.schedule,
            n_starts: self.solver.n_starts,
            ..Default::default()
        }
    }

    pub fn wants(&self, format: Format) -> bool {
        self.output.formats.contains(&format)
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}
