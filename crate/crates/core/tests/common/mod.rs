//! Reference computations that share no numerics with the library: the
//! library uses incomplete beta functions and closed forms, these use plain
//! quadrature and brute force.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

/// Tanh-sinh quadrature over `(0, 1)`. `f` receives `x` and `1 - x`, both
/// computed without cancellation so endpoint singularities are harmless.
pub fn tanh_sinh<F: Fn(f64, f64) -> f64>(f: F) -> f64 {
    const T_MAX: f64 = 5.0;
    let term = |t: f64| {
        let u = FRAC_PI_2 * t.sinh();
        let x = 1.0 / (1.0 + (-2.0 * u).exp());
        let y = 1.0 / (1.0 + (2.0 * u).exp());
        if x <= 0.0 || y <= 0.0 {
            return 0.0;
        }
        // dx/dt = pi cosh(t) x (1 - x)
        let w = std::f64::consts::PI * t.cosh() * x * y;
        let v = f(x, y) * w;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut h = 0.5;
    let mut sum = term(0.0);
    let mut k = 1;
    while k as f64 * h <= T_MAX {
        let t = k as f64 * h;
        sum += term(t) + term(-t);
        k += 1;
    }
    let mut estimate = sum * h;
    for _ in 0..10 {
        // add the odd nodes of the halved step
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= T_MAX {
            let t = k as f64 * h;
            sum += term(t) + term(-t);
            k += 2;
        }
        let next = sum * h;
        if (next - estimate).abs() <= 1e-15 * next.abs() {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// `∫₀¹ x^(a-1) (1-x)^(b-1) dx` by quadrature.
pub fn beta_integral(a: f64, b: f64) -> f64 {
    tanh_sinh(|x, y| ((a - 1.0) * x.ln() + (b - 1.0) * y.ln()).exp())
}

/// Normalized beta pdf with its constant obtained by quadrature.
#[derive(Debug, Clone, Copy)]
pub struct BetaPdf {
    pub a: f64,
    pub b: f64,
    ln_norm: f64,
}

impl BetaPdf {
    pub fn new(a: f64, b: f64) -> Self {
        Self {
            a,
            b,
            ln_norm: beta_integral(a, b).ln(),
        }
    }

    pub fn ln_pdf2(&self, x: f64, y: f64) -> f64 {
        (self.a - 1.0) * x.ln() + (self.b - 1.0) * y.ln() - self.ln_norm
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf2(x, 1.0 - x).exp()
    }
}

/// `1 - ∫₀¹ sqrt(p q) dx`.
pub fn bhattacharyya_oracle(p: (f64, f64), q: (f64, f64)) -> f64 {
    let p = BetaPdf::new(p.0, p.1);
    let q = BetaPdf::new(q.0, q.1);
    1.0 - tanh_sinh(|x, y| (0.5 * (p.ln_pdf2(x, y) + q.ln_pdf2(x, y))).exp())
}

/// Composite midpoint rule with `n` panels.
pub fn midpoint<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = 0.0;
    for m in 0..n {
        s += f(a + (m as f64 + 0.5) * h);
    }
    s * h
}

/// Mixture of beta pdfs `(weight, a, b)` evaluated pointwise.
pub struct MixturePdf(pub Vec<(f64, BetaPdf)>);

impl MixturePdf {
    pub fn new(parts: &[(f64, f64, f64)]) -> Self {
        Self(
            parts
                .iter()
                .map(|&(w, a, b)| (w, BetaPdf::new(a, b)))
                .collect(),
        )
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.0.iter().map(|(w, p)| w * p.pdf(x)).sum()
    }
}

/// `(mass, first moment, second moment)` over `(a, b]`.
pub fn moments<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> (f64, f64, f64) {
    let h = (b - a) / n as f64;
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for m in 0..n {
        let x = a + (m as f64 + 0.5) * h;
        let p = f(x);
        m0 += p;
        m1 += x * p;
        m2 += x * x * p;
    }
    (m0 * h, m1 * h, m2 * h)
}

pub fn midpoints_of(words: &[f64]) -> Vec<f64> {
    let mut b = vec![0.0];
    b.extend(words.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    b.push(1.0);
    b
}

/// Squared-error loss of nearest-neighbour cells around `words`.
pub fn loss_of<F: Fn(f64) -> f64>(f: &F, words: &[f64], n: usize) -> f64 {
    let b = midpoints_of(words);
    words
        .iter()
        .enumerate()
        .map(|(k, &y)| {
            let (m0, m1, m2) = moments(f, b[k], b[k + 1], n);
            m2 - 2.0 * y * m1 + y * y * m0
        })
        .sum()
}

/// Textbook Lloyd iteration with midpoint-rule cell moments.
pub fn grid_lloyd<F: Fn(f64) -> f64>(f: &F, init: &[f64], n: usize, tol: f64) -> Vec<f64> {
    let mut w = init.to_vec();
    for _ in 0..20_000 {
        let b = midpoints_of(&w);
        let next: Vec<f64> = (0..w.len())
            .map(|k| {
                let (m0, m1, _) = moments(f, b[k], b[k + 1], n);
                m1 / m0
            })
            .collect();
        let moved = next
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        w = next;
        if moved < tol {
            break;
        }
    }
    w
}

/// Minimizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Prefix sums of a pdf on `n` midpoints for O(1) approximate cell moments.
pub struct PrefixGrid {
    n: usize,
    s: [Vec<f64>; 3],
}

impl PrefixGrid {
    pub fn new<F: Fn(f64) -> f64>(f: F, n: usize) -> Self {
        let h = 1.0 / n as f64;
        let mut s = [vec![0.0; n + 1], vec![0.0; n + 1], vec![0.0; n + 1]];
        for m in 0..n {
            let x = (m as f64 + 0.5) * h;
            let p = f(x) * h;
            s[0][m + 1] = s[0][m] + p;
            s[1][m + 1] = s[1][m] + x * p;
            s[2][m + 1] = s[2][m] + x * x * p;
        }
        Self { n, s }
    }

    fn cut(&self, r: usize, x: f64) -> f64 {
        let pos = (x * self.n as f64).clamp(0.0, self.n as f64);
        let i = (pos.floor() as usize).min(self.n - 1);
        let frac = pos - i as f64;
        self.s[r][i] + frac * (self.s[r][i + 1] - self.s[r][i])
    }

    pub fn moment(&self, r: usize, a: f64, b: f64) -> f64 {
        self.cut(r, b) - self.cut(r, a)
    }

    pub fn loss(&self, words: &[f64]) -> f64 {
        let b = midpoints_of(words);
        words
            .iter()
            .enumerate()
            .map(|(k, &y)| {
                self.moment(2, b[k], b[k + 1]) - 2.0 * y * self.moment(1, b[k], b[k + 1])
                    + y * y * self.moment(0, b[k], b[k + 1])
            })
            .sum()
    }
}

/// Whether `ln f` is concave on an `n`-point interior grid, judged by second
/// differences.
pub fn log_concave_on_grid<F: Fn(f64) -> f64>(f: F, n: usize) -> bool {
    let h = 1.0 / (n as f64 + 1.0);
    let ln: Vec<f64> = (1..=n).map(|k| f(k as f64 * h).ln()).collect();
    ln.windows(3).all(|w| {
        let d2 = w[0] - 2.0 * w[1] + w[2];
        d2 <= 1e-9 * (w[0].abs() + w[1].abs() + w[2].abs())
    })
}

/// Rows of the five-agent loopy network used across the suites.
pub const FIVE_AGENT_ROWS: [[f64; 5]; 5] = [
    [0.8, 0.2, 0.0, 0.0, 0.0],
    [0.1, 0.7, 0.1, 0.1, 0.0],
    [0.0, 0.1, 0.8, 0.1, 0.0],
    [0.1, 0.1, 0.1, 0.6, 0.1],
    [0.05, 0.0, 0.0, 0.0, 0.95],
];

/// Source parameters for the five agents (the last pair is the fitted one).
pub const FIVE_AGENT_SOURCES: [(f64, f64); 5] = [
    (6.0, 2.5),
    (2.0, 1.5),
    (2.5, 2.5),
    (1.5, 6.0),
    (2.6722, 2.4597),
];

pub fn five_agent_game() -> socialquant::Game {
    use socialquant::{AgentSpec, BetaDensity, CommMatrix, Game, NoiseKernel};
    let agents = FIVE_AGENT_SOURCES
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| AgentSpec::new(i as u32 + 1, BetaDensity::new(a, b).unwrap(), 6).unwrap())
        .collect();
    let p = CommMatrix::new(FIVE_AGENT_ROWS.iter().map(|r| r.to_vec()).collect()).unwrap();
    Game::new(agents, p, NoiseKernel::point()).unwrap()
}

/// Random acyclic game: agents are labelled by a shuffled order, each agent
/// hears from up to `max_parents` earlier agents. Sources are log-concave.
pub fn random_acyclic_game(
    rng: &mut rand_chacha::ChaCha8Rng,
    n: usize,
    levels: usize,
    max_parents: usize,
) -> socialquant::Game {
    use rand::seq::SliceRandom;
    use rand::Rng;
    use socialquant::{AgentSpec, BetaDensity, CommMatrix, Game, NoiseKernel};
    let mut label: Vec<usize> = (0..n).collect();
    label.shuffle(rng);
    let mut rows = vec![vec![0.0; n]; n];
    for pos in 0..n {
        let i = label[pos];
        let parents = if pos == 0 { 0 } else { rng.random_range(0..=max_parents.min(pos)) };
        let mut earlier: Vec<usize> = label[..pos].to_vec();
        earlier.shuffle(rng);
        let mut own = 1.0;
        for &j in earlier.iter().take(parents) {
            let w = rng.random_range(0.05..0.25);
            rows[i][j] = w;
            own -= w;
        }
        rows[i][i] = own;
    }
    let agents = (0..n)
        .map(|i| {
            let a = rng.random_range(1.0..6.0);
            let b = rng.random_range(1.0..6.0);
            AgentSpec::new(i as u32, BetaDensity::new(a, b).unwrap(), levels).unwrap()
        })
        .collect();
    Game::new(agents, CommMatrix::new(rows).unwrap(), NoiseKernel::point()).unwrap()
}
