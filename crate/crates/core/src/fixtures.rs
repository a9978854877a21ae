//! Hand-built quantizer sets for translation-chain analysis.

use crate::error::Result;
use crate::network::CommMatrix;
use crate::quantizer::RegularQuantizer;

/// Levels used by both fixtures.
pub const FIXTURE_LEVELS: usize = 6;

/// Four 6-level quantizers whose interior boundaries sit at `k/6 - 0.03 l` for
/// agent `l`. Each word lies 0.01 left of its cell's right end (the last word at
/// its cell midpoint), so it falls in the next cell of agent `l + 1`.
///
/// The network is the chain `0 → 1 → 2 → 3` plus the shortcut `0 → 3`.
pub fn ladder() -> Result<(Vec<RegularQuantizer>, CommMatrix)> {
    let m = FIXTURE_LEVELS;
    let quantizers = (0..4)
        .map(|l| {
            let shift = 0.03 * l as f64;
            let mut b = vec![0.0];
            b.extend((1..m).map(|k| k as f64 / m as f64 - shift));
            b.push(1.0);
            let mut words: Vec<f64> = b[1..m].iter().map(|a| a - 0.01).collect();
            words.push(0.5 * (b[m - 1] + 1.0));
            RegularQuantizer::new(b, words)
        })
        .collect::<Result<_>>()?;
    let comm = CommMatrix::new(vec![
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.2, 0.8, 0.0, 0.0],
        vec![0.0, 0.2, 0.8, 0.0],
        vec![0.1, 0.0, 0.1, 0.8],
    ])?;
    Ok((quantizers, comm))
}

/// Input that climbs the ladder one cell per hop.
pub const LADDER_INPUT: f64 = 0.05;

/// Three 6-level quantizers with boundaries `k/6 + 0.01 l` for agent `l` and
/// common words `(2k - 1)/12`, on a fully connected network.
pub fn shared_set() -> Result<(Vec<RegularQuantizer>, CommMatrix)> {
    let m = FIXTURE_LEVELS;
    let words: Vec<f64> = (1..=m)
        .map(|k| (2 * k - 1) as f64 / (2 * m) as f64)
        .collect();
    let quantizers = (0..3)
        .map(|l| {
            let shift = 0.01 * l as f64;
            let mut b = vec![0.0];
            b.extend((1..m).map(|k| k as f64 / m as f64 + shift));
            b.push(1.0);
            RegularQuantizer::new(b, words.clone())
        })
        .collect::<Result<_>>()?;
    let comm = CommMatrix::new(vec![
        vec![0.8, 0.1, 0.1],
        vec![0.1, 0.8, 0.1],
        vec![0.1, 0.1, 0.8],
    ])?;
    Ok((quantizers, comm))
}
