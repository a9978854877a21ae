//! Nash-equilibrium scalar quantizers for agents on a communication network.
//!
//! Each agent observes a mixture of its own physical source and words sent by
//! peers, and designs an `M`-level quantizer for what it observes. Agents take
//! turns running Lloyd-Max against their current observed environment until no
//! quantizer moves; the resulting profile is checked against the centroid
//! conditions of a Nash equilibrium.
//!
//! Modules:
//! - [`density`]: beta sources, atom mixtures, Hellinger distance.
//! - [`quantizer`]: regular quantizers and (multi-start) Lloyd-Max.
//! - [`network`]: communication matrix, acyclicity, environment mixtures.
//! - [`game`]: best responses, sweeps, equilibrium solve and verification.
//! - [`montecarlo`]: path sampling, loss decomposition, translation chains.
//! - [`fixtures`]: canned quantizer sets for chain analysis.

pub mod density;
pub mod error;
pub mod fixtures;
pub mod game;
pub mod montecarlo;
pub mod network;
pub mod quantizer;

pub use density::{
    check_semi_elasticity, hellinger_beta, Atom, BetaDensity, Density, KernelShape,
    MixtureDensity, NoiseKernel,
};
pub use error::{Error, Result};
pub use game::{
    check_social_stability, solve_equilibrium, verify_nash, EquilibriumReport, Game, GameState,
    SchedulePolicy, SolverOptions,
};
pub use network::{detect_acyclic, true_environment, AgentSpec, CommMatrix};
pub use quantizer::{
    centroid_residual, lloyd_max, multi_start_lloyd_max, nearest_neighbor_boundaries,
    quantization_loss, LloydOptions, RegularQuantizer,
};
