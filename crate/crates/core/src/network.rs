//! Communication structure and the environment mixtures it induces.

use nalgebra::DMatrix;
use petgraph::algo::toposort;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::density::{Atom, BetaDensity, MixtureDensity, NoiseKernel};
use crate::error::{Error, Result};
use crate::quantizer::RegularQuantizer;

/// Tolerance on each row of the communication matrix summing to one.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Tolerance on a word-usage vector summing to one.
pub const USAGE_SUM_TOL: f64 = 1e-9;

/// Row-stochastic matrix `P`: `P[i][j]` is how often agent `i` hears from agent
/// `j`, and `P[i][i]` how often it observes its own physical source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl CommMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Argument("communication matrix is empty".into()));
        }
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Argument(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(&bad) = row.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
                return Err(Error::Argument(format!("row {i} has entry {bad} outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Argument(format!("row {i} sums to {sum}, expected 1")));
            }
            entries.extend(row);
        }
        Ok(Self { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { n, entries }
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Peers `j != i` with `P[i][j] > 0`.
    pub fn sources_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| j != i && self.get(i, j) > 0.0)
    }

    /// Whether `i` and `j` communicate in either direction.
    pub fn connected(&self, i: usize, j: usize) -> bool {
        i != j && (self.get(i, j) > 0.0 || self.get(j, i) > 0.0)
    }
}

/// An agent: its physical source and vocabulary size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: u32,
    pub physical: BetaDensity,
    pub levels: usize,
}

impl AgentSpec {
    pub fn new(id: u32, physical: BetaDensity, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Argument(format!("agent {id}: levels must be >= 1")));
        }
        Ok(Self {
            id,
            physical,
            levels,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Acyclicity {
    pub is_forest: bool,
    /// Agent indices, each after every agent it listens to.
    pub order: Option<Vec<usize>>,
}

/// Builds the transmitter → receiver graph (`j → i` iff `P[i][j] > 0`) and
/// topologically sorts it when it has no cycles.
pub fn detect_acyclic(p: &CommMatrix) -> Acyclicity {
    let mut g = DiGraph::<usize, ()>::with_capacity(p.n_agents(), 0);
    let nodes: Vec<_> = (0..p.n_agents()).map(|i| g.add_node(i)).collect();
    for i in 0..p.n_agents() {
        for j in p.sources_of(i) {
            g.add_edge(nodes[j], nodes[i], ());
        }
    }
    match toposort(&g, None) {
        Ok(order) => Acyclicity {
            is_forest: true,
            order: Some(order.into_iter().map(|n| g[n]).collect()),
        },
        Err(_) => Acyclicity {
            is_forest: false,
            order: None,
        },
    }
}

/// Weights `W = (I - P_off)^{-1} diag(P_ii)` expressing each true environment
/// as a mixture of physical sources.
pub fn environment_weights(p: &CommMatrix) -> Result<Vec<Vec<f64>>> {
    let n = p.n_agents();
    let system = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            -p.get(i, j)
        }
    });
    let rhs = DMatrix::from_fn(n, n, |i, j| if i == j { p.get(i, i) } else { 0.0 });
    let ill = || {
        Error::IllPosedEnvironment(
            "I - P_off is singular: some closed communication cycle never observes a physical source"
                .into(),
        )
    };
    let w = system.lu().solve(&rhs).ok_or_else(ill)?;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row: Vec<f64> = (0..n).map(|j| w[(i, j)]).collect();
        if row.iter().any(|v| !v.is_finite() || *v < -1e-9) {
            return Err(ill());
        }
        let sum: f64 = row.iter().map(|v| v.max(0.0)).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ill());
        }
        for v in &mut row {
            *v = v.max(0.0) / sum;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// True environments `p_i^(sp) = Σ_j W_ij p_j^(p)` for every agent.
pub fn true_environment(p: &CommMatrix, physicals: &[BetaDensity]) -> Result<Vec<MixtureDensity>> {
    if physicals.len() != p.n_agents() {
        return Err(Error::Argument(format!(
            "{} physical densities for {} agents",
            physicals.len(),
            p.n_agents()
        )));
    }
    environment_weights(p)?
        .into_iter()
        .map(|row| {
            let parts = row
                .into_iter()
                .zip(physicals.iter().copied())
                .filter(|(w, _)| *w > 0.0)
                .collect();
            MixtureDensity::new(parts, Vec::new())
        })
        .collect()
}

/// Observed environment of agent `i`: weight `P_ii` on its physical source and
/// an atom of weight `P_ij · usage[j][k]` at each peer word `y_j^k`, smeared by
/// `noise`.
pub fn observed_environment(
    i: usize,
    physical: &BetaDensity,
    p: &CommMatrix,
    quantizers: &[RegularQuantizer],
    usage: &[Vec<f64>],
    noise: &NoiseKernel,
) -> Result<MixtureDensity> {
    let mut total = p.get(i, i);
    let mut atoms = Vec::new();
    for j in p.sources_of(i) {
        let u = &usage[j];
        let q = &quantizers[j];
        if u.len() != q.levels() {
            return Err(Error::StateConsistency(format!(
                "agent {j}: {} usage entries for {} words",
                u.len(),
                q.levels()
            )));
        }
        let sum: f64 = u.iter().sum();
        if (sum - 1.0).abs() > USAGE_SUM_TOL || u.iter().any(|v| *v < 0.0) {
            return Err(Error::StateConsistency(format!(
                "agent {j}: word usage sums to {sum}, expected 1"
            )));
        }
        let pij = p.get(i, j);
        for (&y, &uk) in q.words().iter().zip(u) {
            if uk > 0.0 {
                atoms.push(Atom {
                    weight: pij * uk,
                    center: y,
                    kernel: *noise,
                });
                total += pij * uk;
            }
        }
    }
    let continuous = if p.get(i, i) > 0.0 {
        vec![(p.get(i, i) / total, *physical)]
    } else {
        Vec::new()
    };
    for a in &mut atoms {
        a.weight /= total;
    }
    MixtureDensity::new(continuous, atoms)
}

/// `p_i^k`: mass of each cell of `q` under the observed environment.
pub fn word_usage(observed: &MixtureDensity, q: &RegularQuantizer) -> Vec<f64> {
    let mut u: Vec<f64> = (0..q.levels())
        .map(|k| {
            let (a, b) = q.cell(k);
            observed.cell_moments_unchecked(a, b).mass.max(0.0)
        })
        .collect();
    let sum: f64 = u.iter().sum();
    if sum > 0.0 {
        for v in &mut u {
            *v /= sum;
        }
    }
    u
}
