//! Regular scalar quantizers and Lloyd-Max design.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::MixtureDensity;
use crate::error::{Error, Result};

/// Cells with less mass than this are treated as empty during design.
pub const EMPTY_CELL_MASS: f64 = 1e-12;

/// Relative loss margin within which an earlier start is kept over a later one.
pub const START_TIE_MARGIN: f64 = 1e-9;

/// An `M`-level quantizer on `(0, 1)` with cells `(a_{k-1}, a_k]` and one word
/// strictly inside each cell.
///
/// Cell and word indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularQuantizer {
    boundaries: Vec<f64>,
    words: Vec<f64>,
}

impl RegularQuantizer {
    pub fn new(boundaries: Vec<f64>, words: Vec<f64>) -> Result<Self> {
        let m = words.len();
        if m == 0 {
            return Err(Error::Argument("a quantizer needs at least one word".into()));
        }
        if boundaries.len() != m + 1 {
            return Err(Error::Argument(format!(
                "{m} words need {} boundaries, got {}",
                m + 1,
                boundaries.len()
            )));
        }
        if boundaries[0] != 0.0 || boundaries[m] != 1.0 {
            return Err(Error::Argument(
                "outer boundaries must be exactly 0 and 1".into(),
            ));
        }
        if boundaries.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Argument("boundaries must be strictly increasing".into()));
        }
        for (k, &y) in words.iter().enumerate() {
            if !(boundaries[k] < y && y < boundaries[k + 1]) {
                return Err(Error::Argument(format!(
                    "word {k} = {y} is not inside its cell ({}, {})",
                    boundaries[k],
                    boundaries[k + 1]
                )));
            }
        }
        Ok(Self { boundaries, words })
    }

    /// Quantizer whose boundaries are the midpoints of adjacent words.
    pub fn from_words(words: Vec<f64>) -> Result<Self> {
        let boundaries = nearest_neighbor_boundaries(&words)?;
        Self::new(boundaries, words)
    }

    /// Uniform `M`-level quantizer: cells `k/M`, words at cell midpoints.
    pub fn uniform(levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Argument("a quantizer needs at least one word".into()));
        }
        let m = levels as f64;
        let boundaries = (0..=levels).map(|k| k as f64 / m).collect();
        let words = (0..levels).map(|k| (2 * k + 1) as f64 / (2.0 * m)).collect();
        Self::new(boundaries, words)
    }

    pub fn levels(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[f64] {
        &self.words
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Cell `k` as `(lower, upper)`.
    pub fn cell(&self, k: usize) -> (f64, f64) {
        (self.boundaries[k], self.boundaries[k + 1])
    }

    /// Index of the cell containing `x`; values at or below 0 go to the first
    /// cell and values above 1 to the last.
    pub fn index_of(&self, x: f64) -> usize {
        let interior = &self.boundaries[1..self.boundaries.len() - 1];
        interior.partition_point(|&a| a < x)
    }

    /// The `(index, word)` pair that `x` maps to.
    pub fn quantize(&self, x: f64) -> Result<(usize, f64)> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain(format!("x = {x} is outside (0, 1)")));
        }
        let k = self.index_of(x);
        Ok((k, self.words[k]))
    }

    /// Largest displacement of any word or boundary relative to `other`.
    pub fn max_displacement(&self, other: &Self) -> f64 {
        if self.levels() != other.levels() {
            return f64::INFINITY;
        }
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a - b).abs());
        let bounds = self
            .boundaries
            .iter()
            .zip(&other.boundaries)
            .map(|(a, b)| (a - b).abs());
        words.chain(bounds).fold(0.0, f64::max)
    }

    pub fn max_word_distance(&self, other: &Self) -> f64 {
        if self.levels() != other.levels() {
            return f64::INFINITY;
        }
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_words(words: &[f64]) -> Result<()> {
    if words.is_empty() {
        return Err(Error::Argument("at least one word is required".into()));
    }
    if words.iter().any(|&y| !(y > 0.0 && y < 1.0)) {
        return Err(Error::Argument("words must lie in (0, 1)".into()));
    }
    if words.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Argument("words must be strictly increasing".into()));
    }
    Ok(())
}

/// Midpoint boundaries `a_k = (y_k + y_{k+1}) / 2` with `a_0 = 0` and `a_M = 1`.
pub fn nearest_neighbor_boundaries(words: &[f64]) -> Result<Vec<f64>> {
    check_words(words)?;
    let mut out = Vec::with_capacity(words.len() + 1);
    out.push(0.0);
    out.extend(words.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(1.0);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LloydOptions {
    pub max_iters: usize,
    /// Target accuracy of the words.
    pub tol: f64,
}

impl Default for LloydOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LloydStep {
    pub iteration: usize,
    /// Loss of the midpoint quantizer built from the words entering this step.
    pub loss: f64,
    pub max_move: f64,
    /// An empty cell was repaired during this step.
    pub repositioned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LloydOutcome {
    pub quantizer: RegularQuantizer,
    pub loss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub repositions: usize,
    pub log: Vec<LloydStep>,
}

fn quantizer_loss_from(d: &MixtureDensity, boundaries: &[f64], words: &[f64]) -> f64 {
    words
        .iter()
        .enumerate()
        .map(|(k, &y)| {
            d.cell_moments_unchecked(boundaries[k], boundaries[k + 1])
                .squared_error(y)
        })
        .sum()
}

/// Nudges words so they are strictly increasing inside `(0, 1)`.
fn enforce_strict(words: &mut [f64]) {
    const GAP: f64 = 1e-9;
    let m = words.len();
    for k in 0..m {
        let floor = if k == 0 { GAP } else { words[k - 1] + GAP };
        if words[k] < floor {
            words[k] = floor;
        }
    }
    for k in (0..m).rev() {
        let ceil = if k == m - 1 { 1.0 - GAP } else { words[k + 1] - GAP };
        if words[k] > ceil {
            words[k] = ceil;
        }
    }
    if words.windows(2).any(|w| !(w[0] < w[1])) || words[0] <= 0.0 || words[m - 1] >= 1.0 {
        for (k, y) in words.iter_mut().enumerate() {
            *y = (2 * k + 1) as f64 / (2 * m) as f64;
        }
    }
}

/// Replaces the word of empty cell `empty` by splitting the heaviest cell in two.
fn reposition_empty(
    d: &MixtureDensity,
    boundaries: &[f64],
    words: &[f64],
    masses: &[f64],
    empty: usize,
) -> Vec<f64> {
    let heavy = masses
        .iter()
        .enumerate()
        .fold(0, |best, (k, &m)| if m > masses[best] { k } else { best });
    let (a, b) = (boundaries[heavy], boundaries[heavy + 1]);
    let mid = 0.5 * (a + b);
    let half = |lo: f64, hi: f64| {
        let m = d.cell_moments_unchecked(lo, hi);
        if m.mass > EMPTY_CELL_MASS {
            (m.first / m.mass).clamp(lo, hi)
        } else {
            0.5 * (lo + hi)
        }
    };
    log::debug!("cell {empty} is empty; splitting cell {heavy} ({a}, {b}]");
    let mut next: Vec<f64> = words
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != empty && k != heavy)
        .map(|(_, &y)| y)
        .collect();
    next.push(half(a, mid));
    next.push(half(mid, b));
    next.sort_by(f64::total_cmp);
    enforce_strict(&mut next);
    next
}

/// Lloyd-Max design from `init`: alternate midpoint boundaries and cell
/// centroids until the words stop moving.
///
/// Iteration stops once the projected distance to the fixed point,
/// `move / (1 - rate)` with `rate` the ratio of successive moves, drops below
/// `opts.tol`. Empty cells are repaired by splitting the heaviest cell.
pub fn lloyd_max(
    d: &MixtureDensity,
    levels: usize,
    init: &[f64],
    opts: &LloydOptions,
) -> Result<LloydOutcome> {
    if levels == 0 {
        return Err(Error::Argument("levels must be at least 1".into()));
    }
    if init.len() != levels {
        return Err(Error::Argument(format!(
            "initial codebook has {} words, expected {levels}",
            init.len()
        )));
    }
    check_words(init)?;

    let mut words = init.to_vec();
    let mut log = Vec::new();
    let mut prev_move: Option<f64> = None;
    let mut converged = false;
    let mut repositions = 0;
    let mut masses = vec![0.0; levels];
    let mut next = vec![0.0; levels];

    for iteration in 0..opts.max_iters {
        let boundaries = nearest_neighbor_boundaries(&words)?;
        let mut loss = 0.0;
        for k in 0..levels {
            let m = d.cell_moments_unchecked(boundaries[k], boundaries[k + 1]);
            loss += m.squared_error(words[k]);
            masses[k] = m.mass;
            next[k] = if m.mass > 0.0 {
                (m.first / m.mass).clamp(boundaries[k], boundaries[k + 1])
            } else {
                words[k]
            };
        }

        let empty = masses.iter().position(|&m| m < EMPTY_CELL_MASS);
        let repositioned = empty.is_some();
        let candidate = match empty {
            Some(e) => {
                repositions += 1;
                reposition_empty(d, &boundaries, &words, &masses, e)
            }
            None => {
                let mut c = next.clone();
                if c.windows(2).any(|w| !(w[0] < w[1])) || c[0] <= 0.0 || c[levels - 1] >= 1.0
                {
                    enforce_strict(&mut c);
                }
                c
            }
        };
        let max_move = words
            .iter()
            .zip(&candidate)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        log.push(LloydStep {
            iteration,
            loss,
            max_move,
            repositioned,
        });
        words = candidate;

        if repositioned {
            prev_move = None;
            continue;
        }
        if max_move <= 4.0 * f64::EPSILON {
            converged = true;
            break;
        }
        if let Some(prev) = prev_move {
            let rate = (max_move / prev).min(0.999);
            if rate < 1.0 && max_move / (1.0 - rate) < opts.tol {
                converged = true;
                break;
            }
        }
        prev_move = Some(max_move);
    }

    let quantizer = RegularQuantizer::from_words(words)?;
    let loss = quantization_loss(&quantizer, d);
    log.push(LloydStep {
        iteration: log.len(),
        loss,
        max_move: 0.0,
        repositioned: false,
    });
    Ok(LloydOutcome {
        quantizer,
        loss,
        converged,
        iterations: log.len() - 1,
        repositions,
        log,
    })
}

/// `Σ_k ∫_(a_{k-1}, a_k] (x - y_k)² dP`.
pub fn quantization_loss(q: &RegularQuantizer, d: &MixtureDensity) -> f64 {
    quantizer_loss_from(d, q.boundaries(), q.words())
}

/// `max_k |E[X | X ∈ cell k] - y_k|`.
pub fn centroid_residual(q: &RegularQuantizer, d: &MixtureDensity) -> Result<f64> {
    let mut worst = 0.0f64;
    for (k, &y) in q.words().iter().enumerate() {
        let (a, b) = q.cell(k);
        worst = worst.max((d.cell_centroid(a, b)? - y).abs());
    }
    Ok(worst)
}

/// Initial codebook at the `(2k - 1) / 2M` quantiles of `d`.
pub fn quantile_init(d: &MixtureDensity, levels: usize) -> Vec<f64> {
    let m = levels as f64;
    let levels_p: Vec<f64> = (0..levels).map(|k| (k as f64 + 0.5) / m).collect();
    quantile_words(d, &levels_p)
}

fn quantile_words(d: &MixtureDensity, probs: &[f64]) -> Vec<f64> {
    let mut words: Vec<f64> = probs.iter().map(|&p| d.quantile(p)).collect();
    enforce_strict(&mut words);
    words
}

/// Stratified random quantile levels: one uniform draw inside each `1/M` band.
fn jittered_init(d: &MixtureDensity, levels: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = levels as f64;
    let probs: Vec<f64> = (0..levels)
        .map(|k| (k as f64 + rng.random_range(0.05..0.95)) / m)
        .collect();
    quantile_words(d, &probs)
}

/// Stratified quantile levels with offsets from the two-dimensional additive
/// recurrence `frac(0.5 + s/ρ + k/ρ²)`, ρ the plastic number.
fn fixed_init(d: &MixtureDensity, levels: usize, start: usize) -> Vec<f64> {
    const A1: f64 = 0.754_877_666_246_692_7;
    const A2: f64 = 0.569_840_290_998_053_3;
    let m = levels as f64;
    let probs: Vec<f64> = (0..levels)
        .map(|k| {
            let theta = (0.5 + start as f64 * A1 + k as f64 * A2).fract();
            (k as f64 + 0.05 + 0.9 * theta) / m
        })
        .collect();
    quantile_words(d, &probs)
}

/// Where the non-quantile starts of a multi-start design come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Jitter {
    /// Stratified uniform draws from a seeded ChaCha stream.
    Seeded(u64),
    /// Deterministic stratified offsets; no randomness.
    Fixed,
}

/// Multi-start Lloyd-Max: one quantile start plus `n_starts - 1` randomly
/// jittered quantile starts, keeping the minimum-loss design.
///
/// A later start replaces the incumbent only if it lowers the loss by more than
/// [`START_TIE_MARGIN`] relative, so designs that agree to solver precision
/// resolve to the earliest start.
pub fn multi_start_lloyd_max(
    d: &MixtureDensity,
    levels: usize,
    n_starts: usize,
    seed: u64,
    opts: &LloydOptions,
) -> Result<LloydOutcome> {
    multi_start_from(d, levels, None, n_starts, Jitter::Seeded(seed), opts)
}

/// [`multi_start_lloyd_max`] with an optional warm start that is tried first
/// and a choice of jitter for the extra starts.
pub fn multi_start_from(
    d: &MixtureDensity,
    levels: usize,
    warm: Option<&[f64]>,
    n_starts: usize,
    jitter: Jitter,
    opts: &LloydOptions,
) -> Result<LloydOutcome> {
    if n_starts == 0 {
        return Err(Error::Argument("n_starts must be at least 1".into()));
    }
    if levels == 0 {
        return Err(Error::Argument("levels must be at least 1".into()));
    }
    let mut inits: Vec<Vec<f64>> = Vec::with_capacity(n_starts + 1);
    if let Some(w) = warm {
        inits.push(w.to_vec());
    }
    inits.push(quantile_init(d, levels));
    match jitter {
        Jitter::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 1..n_starts {
                inits.push(jittered_init(d, levels, &mut rng));
            }
        }
        Jitter::Fixed => inits.extend((1..n_starts).map(|s| fixed_init(d, levels, s))),
    }

    let outcomes: Vec<Result<LloydOutcome>> = inits
        .par_iter()
        .map(|init| lloyd_max(d, levels, init, opts))
        .collect();

    let mut best: Option<LloydOutcome> = None;
    for outcome in outcomes {
        let outcome = outcome?;
        best = match best {
            None => Some(outcome),
            Some(cur) if outcome.loss < cur.loss - START_TIE_MARGIN * cur.loss => Some(outcome),
            keep => keep,
        };
    }
    Ok(best.expect("at least one start"))
}
