use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use socialquant_cli::{
    cmd_analyze, cmd_chains, cmd_simulate, cmd_solve, cmd_verify, load_config, CliError,
    ExperimentConfig, EXIT_NOT_CONVERGED,
};

#[derive(Parser)]
#[command(author, version, about = "Equilibrium quantizers for agents on a communication network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// State file; defaults to <out>/state.txt
    #[arg(long)]
    state: Option<PathBuf>,
    /// Output directory, overrides output.directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides montecarlo.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides montecarlo.n_samples
    #[arg(long)]
    samples: Option<u64>,
    /// Overrides solver.tol
    #[arg(long)]
    tol: Option<f64>,
    /// Overrides solver.max_sweeps
    #[arg(long)]
    max_sweeps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for an equilibrium and store it
    Solve(Common),
    /// Estimate each agent's loss decomposition by path sampling
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write this many sampled signals per agent to samples.csv
        #[arg(long, default_value_t = 0)]
        trace: usize,
    },
    /// Shared vocabulary and path dependence along communication chains
    Chains(Common),
    /// Pairwise source distance against representation-point distance
    Analyze(Common),
    /// Check the centroid conditions at the stored state
    Verify(Common),
}

fn prepare(c: &Common) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let mut cfg = load_config(&c.config)?;
    if let Some(out) = &c.out {
        cfg.output.directory = out.clone();
    }
    if let Some(seed) = c.seed {
        cfg.montecarlo.seed = seed;
    }
    if let Some(n) = c.samples {
        cfg.montecarlo.n_samples = n;
    }
    if let Some(tol) = c.tol {
        cfg.solver.tol = tol;
    }
    if let Some(m) = c.max_sweeps {
        cfg.solver.max_sweeps = m;
    }
    cfg.validate()?;
    let state = c
        .state
        .clone()
        .unwrap_or_else(|| cfg.output.directory.join("state.txt"));
    Ok((cfg, state))
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Solve(c) => {
            let (cfg, state) = prepare(&c)?;
            let out = cmd_solve(&cfg, &state)?;
            let r = &out.solution.report;
            println!(
                "{} after {} sweeps; max centroid residual {:.3e}",
                if r.converged { "converged" } else { "NOT converged" },
                r.sweeps,
                r.max_observed_residual()
            );
            for (spec, q) in out.game.agents().iter().zip(&out.solution.state.quantizers) {
                let words: Vec<String> = q.words().iter().map(|w| format!("{w:.4}")).collect();
                println!("agent {}: {}", spec.id, words.join(" "));
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            Ok(if out.converged() { 0 } else { EXIT_NOT_CONVERGED })
        }
        Command::Simulate { common, trace } => {
            let (cfg, state) = prepare(&common)?;
            for r in cmd_simulate(&cfg, &state, trace)? {
                println!(
                    "agent {}: total {:.4e} = quantization {:.4e} + communication {:.4e} + cross {:.4e} (±{:.1e})",
                    r.agent,
                    r.total.mean,
                    r.quantization.mean,
                    r.communication.mean,
                    r.cross.mean,
                    r.cross.standard_error
                );
            }
            Ok(0)
        }
        Command::Chains(c) => {
            let (cfg, state) = prepare(&c)?;
            let out = cmd_chains(&cfg, &state)?;
            println!(
                "shared vocabulary: {}; {} chains; largest spread {:.4e}",
                out.vocabulary.shared,
                out.chains.len(),
                out.max_spread()
            );
            Ok(0)
        }
        Command::Analyze(c) => {
            let (cfg, state) = prepare(&c)?;
            for p in cmd_analyze(&cfg, &state)? {
                println!(
                    "{}-{}: hellinger {:.4} physical {:.3e} equilibrium {:.3e}",
                    p.agent_a, p.agent_b, p.hellinger, p.mse_physical, p.mse_equilibrium
                );
            }
            Ok(0)
        }
        Command::Verify(c) => {
            let (cfg, state) = prepare(&c)?;
            let r = cmd_verify(&cfg, &state)?;
            for a in &r.agents {
                let z = a.true_residual.as_ref().map_or(f64::NAN, |t| t.max_abs_z);
                println!(
                    "agent {}: observed residual {:.3e}, best-response distance {:.3e}, sampled |z| {:.2}",
                    a.id, a.observed_residual, a.best_response_distance, z
                );
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
