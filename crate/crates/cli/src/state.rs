//! Plain-text equilibrium state.
//!
//! ```text
//! socialquant-state 1
//! agents 2
//! iteration 7
//! last_max_move 3.1415926535897931e-10
//! converged true
//! agent 1
//! boundaries 0.0000000000000000e0 ... 1.0000000000000000e0
//! words ...
//! usage ...
//! agent 2
//! ...
//! ```
//!
//! Numbers carry 17 significant digits, so every `f64` reloads bit for bit.
//! Observed environments are not stored; they are rebuilt from the config.

use std::fmt::Write as _;
use std::path::Path;

use socialquant::{Game, GameState, RegularQuantizer};

use crate::error::{CliError, Result};

const MAGIC: &str = "socialquant-state 1";

/// A state as stored by `solve`.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredState {
    pub state: GameState,
    pub converged: bool,
}

fn numbers(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render_state(game: &Game, state: &GameState, converged: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "agents {}", game.n_agents());
    let _ = writeln!(out, "iteration {}", state.iteration);
    let _ = writeln!(out, "last_max_move {:.16e}", state.last_max_move);
    let _ = writeln!(out, "converged {converged}");
    for (spec, (q, u)) in game.agents().iter().zip(state.quantizers.iter().zip(&state.usage)) {
        let _ = writeln!(out, "agent {}", spec.id);
        let _ = writeln!(out, "boundaries {}", numbers(q.boundaries()));
        let _ = writeln!(out, "words {}", numbers(q.words()));
        let _ = writeln!(out, "usage {}", numbers(u));
    }
    out
}

pub fn write_state(path: &Path, game: &Game, state: &GameState, converged: bool) -> Result<()> {
    std::fs::write(path, render_state(game, state, converged)).map_err(|e| CliError::io(path, e))
}

/// Loads a state written for `game`; agent ids and level counts must match.
pub fn read_state(path: &Path, game: &Game) -> Result<StoredState> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::MissingState(path.to_path_buf()))
        }
        Err(e) => return Err(CliError::io(path, e)),
    };
    parse_state(&text, game).map_err(|(line, msg)| CliError::StateFormat {
        path: path.to_path_buf(),
        line,
        msg,
    })
}

type ParseResult<T> = std::result::Result<T, (usize, String)>;

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    /// Next line split into its key and the rest; the key must be `key`.
    fn field(&mut self, key: &str) -> ParseResult<&'a str> {
        let (n, text) = self
            .inner
            .next()
            .ok_or((self.line + 1, format!("expected `{key}`, found end of file")))?;
        self.line = n + 1;
        let (k, rest) = text.split_once(' ').unwrap_or((text, ""));
        if k != key {
            return Err((self.line, format!("expected `{key}`, found `{k}`")));
        }
        Ok(rest.trim())
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> ParseResult<T> {
        let raw = self.field(key)?;
        raw.parse()
            .map_err(|_| (self.line, format!("cannot read `{raw}` as {key}")))
    }

    fn floats(&mut self, key: &str) -> ParseResult<Vec<f64>> {
        let line = self.line + 1;
        self.field(key)?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| (line, format!("bad number `{t}`"))))
            .collect()
    }
}

fn parse_state(text: &str, game: &Game) -> ParseResult<StoredState> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    match lines.inner.next() {
        Some((_, l)) if l.trim() == MAGIC => lines.line = 1,
        _ => return Err((1, format!("missing header `{MAGIC}`"))),
    }
    let n: usize = lines.parse("agents")?;
    if n != game.n_agents() {
        return Err((lines.line, format!("state has {n} agents, config has {}", game.n_agents())));
    }
    let iteration = lines.parse("iteration")?;
    let last_max_move = lines.parse("last_max_move")?;
    let converged = lines.parse("converged")?;
    let mut quantizers = Vec::with_capacity(n);
    let mut usage = Vec::with_capacity(n);
    for spec in game.agents() {
        let id: u32 = lines.parse("agent")?;
        if id != spec.id {
            return Err((lines.line, format!("expected agent {}, found {id}", spec.id)));
        }
        let boundaries = lines.floats("boundaries")?;
        let words = lines.floats("words")?;
        let line = lines.line;
        let q = RegularQuantizer::new(boundaries, words).map_err(|e| (line, e.to_string()))?;
        let u = lines.floats("usage")?;
        if u.len() != q.levels() {
            return Err((lines.line, format!("{} usage values for {} words", u.len(), q.levels())));
        }
        quantizers.push(q);
        usage.push(u);
    }
    let state = GameState::from_parts(game, quantizers, usage, iteration, last_max_move)
        .map_err(|e| (lines.line, e.to_string()))?;
    Ok(StoredState { state, converged })
}
