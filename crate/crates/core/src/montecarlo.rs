//! Path sampling of signals through the network, empirical loss decomposition,
//! and translation-chain analysis.
//!
//! A signal reaching agent `i` is traced backwards: with probability `P_cc` the
//! current agent `c` saw it in its physical environment, otherwise it heard it
//! from a peer `j` drawn with probability `P_cj`. The value is then pushed
//! forwards through each transmitter's quantizer and the channel noise.
//!
//! Sampling is split into fixed-size chunks, each with its own ChaCha stream
//! derived from the seed, so estimates do not depend on the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::density::{KernelShape, NoiseKernel};
use crate::error::{Error, Result};
use crate::game::{Game, GameState};
use crate::network::CommMatrix;
use crate::quantizer::RegularQuantizer;

/// Longest path (in hops) traced before a sample is dropped as truncated.
pub const MAX_DEPTH: usize = 64;

const CHUNK: u64 = 1 << 15;

/// Longest cycle count kept in the histogram; deeper paths land in the last bin.
const HISTOGRAM_BINS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalSample {
    pub origin_agent: usize,
    pub true_value: f64,
    pub observed_value: f64,
    /// Agents from the origin to the receiver, inclusive.
    pub path: Vec<usize>,
    /// Earlier visits of the receiver along the path.
    pub cycle_count: usize,
    pub truncated: bool,
    /// Noise support had to be shrunk to keep a word inside `(0, 1)`.
    pub clamped: bool,
}

fn sample_noise<R: Rng>(noise: &NoiseKernel, word: f64, rng: &mut R) -> (f64, bool) {
    let h = noise.effective_halfwidth(word);
    let shrunk = h < noise.halfwidth();
    let eta = match noise.shape() {
        KernelShape::Point => 0.0,
        KernelShape::Uniform => h * (2.0 * rng.random::<f64>() - 1.0),
        KernelShape::Triangular => h * (rng.random::<f64>() - rng.random::<f64>()),
    };
    let lo = f64::MIN_POSITIVE;
    let hi = 1.0 - f64::EPSILON;
    ((word + eta).clamp(lo, hi), shrunk)
}

struct Trace {
    origin: usize,
    x: f64,
    xhat: f64,
    hops: usize,
    cycles: usize,
    clamped: bool,
}

struct Sampler<'a> {
    comm: &'a CommMatrix,
    quantizers: &'a [RegularQuantizer],
    noise: NoiseKernel,
    sources: Vec<Beta<f64>>,
    /// Per agent: cumulative peer weights over off-diagonal entries.
    peers: Vec<Vec<(usize, f64)>>,
}

impl<'a> Sampler<'a> {
    fn new(game: &'a Game, state: &'a GameState) -> Result<Self> {
        let comm = game.comm();
        let sources = game
            .agents()
            .iter()
            .map(|a| {
                Beta::new(a.physical.alpha(), a.physical.beta())
                    .map_err(|e| Error::Argument(format!("agent {}: {e}", a.id)))
            })
            .collect::<Result<_>>()?;
        let peers = (0..comm.n_agents())
            .map(|i| {
                let mut acc = comm.get(i, i);
                comm.sources_of(i)
                    .map(|j| {
                        acc += comm.get(i, j);
                        (j, acc)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            comm,
            quantizers: &state.quantizers,
            noise: *game.noise(),
            sources,
            peers,
        })
    }

    /// Fills `path` receiver-first and returns the forward trace, or `None` if
    /// the depth cap was hit.
    fn trace<R: Rng>(&self, i: usize, rng: &mut R, path: &mut Vec<usize>) -> Option<Trace> {
        path.clear();
        path.push(i);
        let mut cur = i;
        loop {
            let u: f64 = rng.random();
            if u < self.comm.get(cur, cur) || self.peers[cur].is_empty() {
                break;
            }
            if path.len() > MAX_DEPTH {
                return None;
            }
            let peers = &self.peers[cur];
            let idx = peers.partition_point(|&(_, c)| c <= u).min(peers.len() - 1);
            cur = peers[idx].0;
            path.push(cur);
        }
        let origin = cur;
        let x = self.sources[origin].sample(rng).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        let mut xhat = x;
        let mut clamped = false;
        // path is receiver-first; transmit from path[h] to path[h - 1]
        for h in (1..path.len()).rev() {
            let q = &self.quantizers[path[h]];
            let word = q.words()[q.index_of(xhat)];
            let (v, shrunk) = sample_noise(&self.noise, word, rng);
            clamped |= shrunk;
            xhat = v;
        }
        let cycles = path[1..].iter().filter(|&&a| a == i).count();
        Some(Trace {
            origin,
            x,
            xhat,
            hops: path.len() - 1,
            cycles,
            clamped,
        })
    }
}

/// Draws one signal as seen by agent `i`.
pub fn sample_signal<R: Rng>(
    game: &Game,
    state: &GameState,
    i: usize,
    rng: &mut R,
) -> Result<SignalSample> {
    let sampler = Sampler::new(game, state)?;
    let mut path = Vec::new();
    match sampler.trace(i, rng, &mut path) {
        Some(t) => {
            path.reverse();
            Ok(SignalSample {
                origin_agent: t.origin,
                true_value: t.x,
                observed_value: t.xhat,
                path,
                cycle_count: t.cycles,
                truncated: false,
                clamped: t.clamped,
            })
        }
        None => {
            path.reverse();
            Ok(SignalSample {
                origin_agent: path[0],
                true_value: f64::NAN,
                observed_value: f64::NAN,
                cycle_count: path[1..].iter().filter(|&&a| a == i).count(),
                path,
                truncated: true,
                clamped: false,
            })
        }
    }
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Runs `body` on `n` samples split into seeded chunks and returns the
/// per-chunk accumulators in chunk order.
fn run_chunks<A, F>(n: u64, seed: u64, init: impl Fn() -> A + Sync, body: F) -> Vec<A>
where
    A: Send,
    F: Fn(&mut A, &mut ChaCha8Rng, &mut Vec<usize>) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let mut acc = init();
            let mut path = Vec::with_capacity(8);
            let count = CHUNK.min(n - c * CHUNK);
            for _ in 0..count {
                body(&mut acc, &mut rng, &mut path);
            }
            acc
        })
        .collect()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    sum: f64,
    sumsq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sumsq += v * v;
    }

    fn merge(&mut self, o: &Self) {
        self.n += o.n;
        self.sum += o.sum;
        self.sumsq += o.sumsq;
    }

    fn estimate(&self) -> Estimate {
        if self.n == 0 {
            return Estimate {
                mean: f64::NAN,
                standard_error: f64::NAN,
            };
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let se = if self.n > 1 {
            let var = ((self.sumsq - n * mean * mean) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        } else {
            f64::INFINITY
        };
        Estimate {
            mean,
            standard_error: se,
        }
    }
}

/// Per-sample pieces of the squared-error loss.
///
/// The cross term is the remainder `total - quantization - communication`,
/// which algebraically equals `2 (x - x̂)(x̂ - y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossTerms {
    pub total: f64,
    pub quantization: f64,
    pub communication: f64,
    pub cross: f64,
}

impl LossTerms {
    pub fn new(x: f64, xhat: f64, word: f64) -> Self {
        let total = (x - word) * (x - word);
        let quantization = (xhat - word) * (xhat - word);
        let communication = (x - xhat) * (x - xhat);
        Self {
            total,
            quantization,
            communication,
            cross: total - quantization - communication,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStats {
    /// Fraction of signals observed directly (path length one).
    pub direct_fraction: Estimate,
    pub mean_hops: f64,
    /// Counts by number of earlier visits to the receiver.
    pub cycle_histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub agent: u32,
    pub samples: u64,
    pub truncated: u64,
    pub clamped: u64,
    pub total: Estimate,
    pub quantization: Estimate,
    pub communication: Estimate,
    pub cross: Estimate,
    pub paths: PathStats,
}

#[derive(Default)]
struct LossAcc {
    total: Moments,
    quant: Moments,
    comm: Moments,
    cross: Moments,
    direct: Moments,
    hops: u64,
    truncated: u64,
    clamped: u64,
    hist: Vec<u64>,
}

/// Monte-Carlo estimate of agent `i`'s loss and its decomposition.
pub fn estimate_losses(
    game: &Game,
    state: &GameState,
    i: usize,
    n: u64,
    seed: u64,
) -> Result<LossReport> {
    if n == 0 {
        return Err(Error::Argument("sample count must be at least 1".into()));
    }
    check_agent(game, i)?;
    let sampler = Sampler::new(game, state)?;
    let q = &state.quantizers[i];
    let parts = run_chunks(
        n,
        seed,
        || LossAcc {
            hist: vec![0; HISTOGRAM_BINS],
            ..Default::default()
        },
        |acc, rng, path| match sampler.trace(i, rng, path) {
            None => acc.truncated += 1,
            Some(t) => {
                let word = q.words()[q.index_of(t.xhat)];
                let terms = LossTerms::new(t.x, t.xhat, word);
                acc.total.push(terms.total);
                acc.quant.push(terms.quantization);
                acc.comm.push(terms.communication);
                acc.cross.push(terms.cross);
                acc.direct.push(if t.hops == 0 { 1.0 } else { 0.0 });
                acc.hops += t.hops as u64;
                acc.clamped += u64::from(t.clamped);
                acc.hist[t.cycles.min(HISTOGRAM_BINS - 1)] += 1;
            }
        },
    );
    let mut all = LossAcc {
        hist: vec![0; HISTOGRAM_BINS],
        ..Default::default()
    };
    for p in &parts {
        all.total.merge(&p.total);
        all.quant.merge(&p.quant);
        all.comm.merge(&p.comm);
        all.cross.merge(&p.cross);
        all.direct.merge(&p.direct);
        all.hops += p.hops;
        all.truncated += p.truncated;
        all.clamped += p.clamped;
        for (a, b) in all.hist.iter_mut().zip(&p.hist) {
            *a += b;
        }
    }
    let kept = all.total.n;
    while all.hist.len() > 1 && all.hist.last() == Some(&0) {
        all.hist.pop();
    }
    Ok(LossReport {
        agent: game.agents()[i].id,
        samples: kept,
        truncated: all.truncated,
        clamped: all.clamped,
        total: all.total.estimate(),
        quantization: all.quant.estimate(),
        communication: all.comm.estimate(),
        cross: all.cross.estimate(),
        paths: PathStats {
            direct_fraction: all.direct.estimate(),
            mean_hops: if kept > 0 {
                all.hops as f64 / kept as f64
            } else {
                f64::NAN
            },
            cycle_histogram: all.hist,
        },
    })
}

/// Empirical `E[X^(sp) - y_k | agent uses word k]` for one word.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WordResidual {
    pub index: usize,
    pub count: u64,
    /// Fraction of retained samples mapped to this word.
    pub frequency: f64,
    pub mean_deviation: f64,
    pub standard_error: f64,
}

/// Per-word deviation of the true signal from the word it was mapped to, at
/// agent `i`.
pub fn word_conditional_residuals(
    game: &Game,
    state: &GameState,
    i: usize,
    n: u64,
    seed: u64,
) -> Result<Vec<WordResidual>> {
    if n == 0 {
        return Err(Error::Argument("sample count must be at least 1".into()));
    }
    check_agent(game, i)?;
    let sampler = Sampler::new(game, state)?;
    let q = &state.quantizers[i];
    let m = q.levels();
    let parts = run_chunks(
        n,
        seed,
        || vec![Moments::default(); m],
        |acc, rng, path| {
            if let Some(t) = sampler.trace(i, rng, path) {
                let k = q.index_of(t.xhat);
                acc[k].push(t.x - q.words()[k]);
            }
        },
    );
    let mut all = vec![Moments::default(); m];
    for p in &parts {
        for (a, b) in all.iter_mut().zip(p) {
            a.merge(b);
        }
    }
    let kept: u64 = all.iter().map(|a| a.n).sum();
    Ok(all
        .iter()
        .enumerate()
        .map(|(index, mo)| {
            let e = mo.estimate();
            WordResidual {
                index,
                count: mo.n,
                frequency: mo.n as f64 / kept.max(1) as f64,
                mean_deviation: e.mean,
                standard_error: e.standard_error,
            }
        })
        .collect())
}

fn check_agent(game: &Game, i: usize) -> Result<()> {
    if i >= game.n_agents() {
        return Err(Error::Argument(format!(
            "agent index {i} out of range for {} agents",
            game.n_agents()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharedVocabulary {
    pub shared: bool,
    /// Per word index: the common interior of everyone's cell, if nonempty.
    pub witnesses: Vec<Option<(f64, f64)>>,
}

/// Whether every index-`k` cell intersection over `agents` is nonempty and
/// holds every member's `k`-th word.
pub fn shared_vocabulary(quantizers: &[RegularQuantizer], agents: &[usize]) -> Result<SharedVocabulary> {
    let Some(&first) = agents.first() else {
        return Err(Error::Argument("agent set is empty".into()));
    };
    let m = quantizers[first].levels();
    if agents.iter().any(|&a| quantizers[a].levels() != m) {
        return Err(Error::Argument(
            "shared vocabulary needs equal vocabulary sizes".into(),
        ));
    }
    let mut shared = true;
    let mut witnesses = Vec::with_capacity(m);
    for k in 0..m {
        let lo = agents
            .iter()
            .map(|&a| quantizers[a].cell(k).0)
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = agents
            .iter()
            .map(|&a| quantizers[a].cell(k).1)
            .fold(f64::INFINITY, f64::min);
        if lo < hi {
            witnesses.push(Some((lo, hi)));
            if agents
                .iter()
                .any(|&a| !(lo < quantizers[a].words()[k] && quantizers[a].words()[k] < hi))
            {
                shared = false;
            }
        } else {
            witnesses.push(None);
            shared = false;
        }
    }
    Ok(SharedVocabulary { shared, witnesses })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hop {
    pub agent: usize,
    pub index: usize,
    pub word: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport {
    pub chain: Vec<usize>,
    pub input: f64,
    pub hops: Vec<Hop>,
    pub final_word: f64,
    /// `|final word - input|²`.
    pub translation_loss: f64,
    /// `|final word - first word|`.
    pub word_drift: f64,
    /// `min_l a_l^k - max_l a_l^{k-1}` for the input's cell `k`, when the
    /// chain's agents share a vocabulary.
    pub cell_bound: Option<f64>,
    /// The same bound maximised over cells.
    pub max_cell_bound: Option<f64>,
    pub clamped: usize,
}

/// Passes `x` down `chain`: the first agent quantizes it, every later agent
/// quantizes the noisy word it receives.
pub fn chain_translate<R: Rng>(
    quantizers: &[RegularQuantizer],
    chain: &[usize],
    x: f64,
    noise: &NoiseKernel,
    rng: &mut R,
) -> Result<ChainReport> {
    if chain.len() < 2 {
        return Err(Error::Argument("a chain needs at least two agents".into()));
    }
    if let Some(&bad) = chain.iter().find(|&&a| a >= quantizers.len()) {
        return Err(Error::Argument(format!("agent index {bad} out of range")));
    }
    let (k0, w0) = quantizers[chain[0]].quantize(x)?;
    let mut hops = vec![Hop {
        agent: chain[0],
        index: k0,
        word: w0,
    }];
    let mut clamped = 0;
    let mut w = w0;
    for &a in &chain[1..] {
        let (received, shrunk) = sample_noise(noise, w, rng);
        clamped += usize::from(shrunk);
        let q = &quantizers[a];
        let k = q.index_of(received);
        w = q.words()[k];
        hops.push(Hop {
            agent: a,
            index: k,
            word: w,
        });
    }

    let mut members: Vec<usize> = chain.to_vec();
    members.sort_unstable();
    members.dedup();
    let (cell_bound, max_cell_bound) = match shared_vocabulary(quantizers, &members) {
        Ok(sv) if sv.shared => {
            let widths: Vec<f64> = sv
                .witnesses
                .iter()
                .map(|w| w.map_or(0.0, |(lo, hi)| hi - lo))
                .collect();
            (
                Some(widths[k0]),
                Some(widths.iter().copied().fold(0.0, f64::max)),
            )
        }
        _ => (None, None),
    };
    Ok(ChainReport {
        chain: chain.to_vec(),
        input: x,
        hops,
        final_word: w,
        translation_loss: (w - x) * (w - x),
        word_drift: (w - w0).abs(),
        cell_bound,
        max_cell_bound,
        clamped,
    })
}

/// All walks `from → … → to` with between 2 and `max_len` agents along edges
/// `t → r` with `P[r][t] > 0`.
pub fn enumerate_chains(
    comm: &CommMatrix,
    from: usize,
    to: usize,
    max_len: usize,
) -> Vec<Vec<usize>> {
    fn extend(
        comm: &CommMatrix,
        to: usize,
        max_len: usize,
        walk: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        let last = *walk.last().expect("walk is never empty");
        if walk.len() >= 2 && last == to {
            out.push(walk.clone());
        }
        if walk.len() == max_len {
            return;
        }
        for r in 0..comm.n_agents() {
            if r != last && comm.get(r, last) > 0.0 {
                walk.push(r);
                extend(comm, to, max_len, walk, out);
                walk.pop();
            }
        }
    }
    let mut out = Vec::new();
    if from < comm.n_agents() && to < comm.n_agents() && max_len >= 2 {
        let mut walk = vec![from];
        extend(comm, to, max_len, &mut walk, &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub from: usize,
    pub to: usize,
    pub chains: usize,
    pub inputs: usize,
    /// Largest spread of final words across chains, over all inputs.
    pub max_spread: f64,
    pub worst_input: f64,
}

/// Compares noiseless translations of a grid of inputs along every chain from
/// `from` to `to`; zero spread means the outcome is path independent on the
/// probe set.
pub fn path_dependence_probe(
    quantizers: &[RegularQuantizer],
    comm: &CommMatrix,
    from: usize,
    to: usize,
    max_len: usize,
    n_inputs: usize,
) -> Result<ProbeReport> {
    if n_inputs == 0 {
        return Err(Error::Argument("probe needs at least one input".into()));
    }
    let chains = enumerate_chains(comm, from, to, max_len);
    if chains.is_empty() {
        return Err(Error::NoChain { from, to });
    }
    let point = NoiseKernel::point();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut max_spread = 0.0f64;
    let mut worst_input = f64::NAN;
    for t in 0..n_inputs {
        let x = (t as f64 + 1.0) / (n_inputs as f64 + 1.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for chain in &chains {
            let w = chain_translate(quantizers, chain, x, &point, &mut rng)?.final_word;
            lo = lo.min(w);
            hi = hi.max(w);
        }
        if hi - lo > max_spread || worst_input.is_nan() {
            max_spread = max_spread.max(hi - lo);
            worst_input = x;
        }
    }
    Ok(ProbeReport {
        from,
        to,
        chains: chains.len(),
        inputs: n_inputs,
        max_spread,
        worst_input,
    })
}
