//! Probability densities on the open unit interval.
//!
//! Sources are beta laws. Observed environments are mixtures of beta parts and
//! "atoms": transmitted words, either exact (Dirac masses) or smeared by an
//! additive noise kernel. Every interval query uses the half-open convention
//! `(a, b]`, so a point atom sitting exactly on a boundary belongs to the cell
//! on its left.
//!
//! Masses and partial moments are evaluated in closed form: regularized
//! incomplete beta functions for the continuous parts, piecewise polynomials for
//! the uniform and triangular kernels.

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Error, Result};

/// Tolerance on mixture weights summing to one.
pub const WEIGHT_TOL: f64 = 1e-12;

/// Anything with a pointwise density on `(0, 1)`.
pub trait Density {
    /// Density at `x`, without domain checks. Point atoms contribute nothing.
    fn density(&self, x: f64) -> f64;

    /// Density at `x` for `x` strictly inside `(0, 1)`.
    fn eval_pdf(&self, x: f64) -> Result<f64> {
        check_open_unit(x)?;
        Ok(self.density(x))
    }
}

fn check_open_unit(x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("x = {x} is outside (0, 1)")))
    }
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a >= b {
        return Err(Error::Argument(format!(
            "interval ({a}, {b}] must satisfy 0 <= a < b <= 1"
        )));
    }
    Ok(())
}

/// Beta(alpha, beta) law on `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaDensity {
    alpha: f64,
    beta: f64,
}

impl BetaDensity {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) || !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Argument(format!(
                "beta shape parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn uniform() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// Log-concave exactly when both shapes are at least one.
    pub fn is_log_concave(&self) -> bool {
        self.alpha >= 1.0 && self.beta >= 1.0
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 || x >= 1.0 {
            return f64::NEG_INFINITY;
        }
        (self.alpha - 1.0) * x.ln() + (self.beta - 1.0) * (-x).ln_1p()
            - ln_beta(self.alpha, self.beta)
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            beta_reg(self.alpha, self.beta, x)
        }
    }

    /// `∫_a^b x^order p(x) dx` for `order` in 0..=2.
    ///
    /// Uses `x^r p(x) = c_r · Beta(alpha + r, beta)(x)` with
    /// `c_r = Π_{i<r} (alpha + i) / (alpha + beta + i)`.
    fn partial_moment(&self, order: u32, a: f64, b: f64) -> f64 {
        let mut scale = 1.0;
        for i in 0..order {
            let i = f64::from(i);
            scale *= (self.alpha + i) / (self.alpha + self.beta + i);
        }
        let shape = self.alpha + f64::from(order);
        let mass = if a + b > 1.0 {
            // upper tail: difference of survival functions loses less precision
            upper_reg(shape, self.beta, a) - upper_reg(shape, self.beta, b)
        } else {
            lower_reg(shape, self.beta, b) - lower_reg(shape, self.beta, a)
        };
        scale * mass.max(0.0)
    }
}

fn lower_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta_reg(a, b, x)
    }
}

fn upper_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        beta_reg(b, a, 1.0 - x)
    }
}

impl Density for BetaDensity {
    fn density(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelShape {
    Point,
    Uniform,
    Triangular,
}

/// Zero-mean additive channel noise with bounded support `(-halfwidth, halfwidth)`.
///
/// Around a word `y` the support is shrunk symmetrically to
/// `min(halfwidth, y, 1 - y)` so that smeared words stay inside `(0, 1)` and the
/// kernel keeps mean `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseKernel {
    shape: KernelShape,
    halfwidth: f64,
}

impl Default for NoiseKernel {
    fn default() -> Self {
        Self::point()
    }
}

impl NoiseKernel {
    pub fn new(shape: KernelShape, halfwidth: f64) -> Result<Self> {
        if !(halfwidth.is_finite() && halfwidth >= 0.0) {
            return Err(Error::Argument(format!(
                "noise halfwidth must be finite and >= 0, got {halfwidth}"
            )));
        }
        let halfwidth = if shape == KernelShape::Point {
            0.0
        } else {
            halfwidth
        };
        let shape = if halfwidth == 0.0 {
            KernelShape::Point
        } else {
            shape
        };
        Ok(Self { shape, halfwidth })
    }

    pub fn point() -> Self {
        Self {
            shape: KernelShape::Point,
            halfwidth: 0.0,
        }
    }

    pub fn shape(&self) -> KernelShape {
        self.shape
    }

    pub fn halfwidth(&self) -> f64 {
        self.halfwidth
    }

    pub fn is_point(&self) -> bool {
        self.shape == KernelShape::Point
    }

    /// Support half-width actually used around a word at `center`.
    pub fn effective_halfwidth(&self, center: f64) -> f64 {
        self.halfwidth.min(center).min(1.0 - center).max(0.0)
    }

    /// Standard deviation of the kernel around `center`.
    pub fn std_dev(&self, center: f64) -> f64 {
        let h = self.effective_halfwidth(center);
        match self.shape {
            KernelShape::Point => 0.0,
            KernelShape::Uniform => h / 3f64.sqrt(),
            KernelShape::Triangular => h / 6f64.sqrt(),
        }
    }

    fn density_at(&self, center: f64, x: f64) -> f64 {
        let h = self.effective_halfwidth(center);
        let t = (x - center).abs();
        if h == 0.0 || t >= h {
            return 0.0;
        }
        match self.shape {
            KernelShape::Point => 0.0,
            KernelShape::Uniform => 0.5 / h,
            KernelShape::Triangular => (h - t) / (h * h),
        }
    }

    /// `[∫ f, ∫ x f, ∫ x² f]` over `(a, b]` for the kernel centred at `center`.
    fn moments(&self, center: f64, a: f64, b: f64) -> [f64; 3] {
        let h = self.effective_halfwidth(center);
        if self.shape == KernelShape::Point || h == 0.0 {
            return if a < center && center <= b {
                [1.0, center, center * center]
            } else {
                [0.0; 3]
            };
        }
        // local coordinate t = x - center
        let lo = (a - center).max(-h);
        let hi = (b - center).min(h);
        if hi <= lo {
            return [0.0; 3];
        }
        let mut t = [0.0f64; 3];
        match self.shape {
            KernelShape::Uniform => {
                for (j, tj) in t.iter_mut().enumerate() {
                    let p = j as i32 + 1;
                    *tj = (hi.powi(p) - lo.powi(p)) / f64::from(p) / (2.0 * h);
                }
            }
            KernelShape::Triangular => {
                let h2 = h * h;
                // left piece: weight (h + t) / h² on [-h, 0]
                let (l0, l1) = (lo, hi.min(0.0));
                // right piece: weight (h - t) / h² on [0, h]
                let (r0, r1) = (lo.max(0.0), hi);
                for (j, tj) in t.iter_mut().enumerate() {
                    let p1 = j as i32 + 1;
                    let p2 = j as i32 + 2;
                    let anti = |s: f64, x: f64| {
                        h * x.powi(p1) / f64::from(p1) + s * x.powi(p2) / f64::from(p2)
                    };
                    let mut acc = 0.0;
                    if l1 > l0 {
                        acc += anti(1.0, l1) - anti(1.0, l0);
                    }
                    if r1 > r0 {
                        acc += anti(-1.0, r1) - anti(-1.0, r0);
                    }
                    *tj = acc / h2;
                }
            }
            KernelShape::Point => unreachable!(),
        }
        [
            t[0],
            center * t[0] + t[1],
            center * center * t[0] + 2.0 * center * t[1] + t[2],
        ]
    }
}

/// A transmitted word of mass `weight` at `center`, blurred by `kernel`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: f64,
    pub center: f64,
    pub kernel: NoiseKernel,
}

/// Weighted beta parts plus (possibly smeared) atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDensity {
    continuous: Vec<(f64, BetaDensity)>,
    atoms: Vec<Atom>,
}

impl From<BetaDensity> for MixtureDensity {
    fn from(b: BetaDensity) -> Self {
        Self {
            continuous: vec![(1.0, b)],
            atoms: Vec::new(),
        }
    }
}

/// Zeroth, first and second partial moments over a cell.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CellMoments {
    pub mass: f64,
    pub first: f64,
    pub second: f64,
}

impl CellMoments {
    /// `∫ (x - y)² dP` over the cell.
    pub fn squared_error(&self, y: f64) -> f64 {
        (self.second - 2.0 * y * self.first + y * y * self.mass).max(0.0)
    }
}

impl MixtureDensity {
    pub fn new(continuous: Vec<(f64, BetaDensity)>, atoms: Vec<Atom>) -> Result<Self> {
        let mut total = 0.0;
        for &(w, _) in &continuous {
            if !(w.is_finite() && (0.0..=1.0).contains(&w)) {
                return Err(Error::Argument(format!("mixture weight {w} outside [0, 1]")));
            }
            total += w;
        }
        for atom in &atoms {
            if !(atom.weight.is_finite() && (0.0..=1.0).contains(&atom.weight)) {
                return Err(Error::Argument(format!(
                    "atom weight {} outside [0, 1]",
                    atom.weight
                )));
            }
            if !(atom.center > 0.0 && atom.center < 1.0) {
                return Err(Error::Argument(format!(
                    "atom center {} outside (0, 1)",
                    atom.center
                )));
            }
            total += atom.weight;
        }
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Argument(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { continuous, atoms })
    }

    pub fn continuous_parts(&self) -> &[(f64, BetaDensity)] {
        &self.continuous
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Mass, first and second moments over `(a, b]`.
    pub fn cell_moments(&self, a: f64, b: f64) -> Result<CellMoments> {
        check_interval(a, b)?;
        Ok(self.cell_moments_unchecked(a, b))
    }

    pub(crate) fn cell_moments_unchecked(&self, a: f64, b: f64) -> CellMoments {
        let mut m = [0.0f64; 3];
        for &(w, part) in &self.continuous {
            if w == 0.0 {
                continue;
            }
            for (r, slot) in m.iter_mut().enumerate() {
                *slot += w * part.partial_moment(r as u32, a, b);
            }
        }
        for atom in &self.atoms {
            if atom.weight == 0.0 {
                continue;
            }
            let km = atom.kernel.moments(atom.center, a, b);
            for (slot, v) in m.iter_mut().zip(km) {
                *slot += atom.weight * v;
            }
        }
        CellMoments {
            mass: m[0],
            first: m[1],
            second: m[2],
        }
    }

    /// Probability of `(a, b]`.
    pub fn mass_in(&self, a: f64, b: f64) -> Result<f64> {
        Ok(self.cell_moments(a, b)?.mass.clamp(0.0, 1.0))
    }

    /// `E[X | X ∈ (a, b]]`, clamped into `[a, b]`.
    pub fn cell_centroid(&self, a: f64, b: f64) -> Result<f64> {
        let m = self.cell_moments(a, b)?;
        if m.mass <= 0.0 {
            return Err(Error::EmptyCell { lower: a, upper: b });
        }
        Ok((m.first / m.mass).clamp(a, b))
    }

    /// `F(x) = P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            self.cell_moments_unchecked(0.0, x).mass.clamp(0.0, 1.0)
        }
    }

    /// Smallest `x` (to bisection precision) with `F(x) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

impl Density for MixtureDensity {
    fn density(&self, x: f64) -> f64 {
        let continuous: f64 = self
            .continuous
            .iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, part)| w * part.density(x))
            .sum();
        let smeared: f64 = self
            .atoms
            .iter()
            .map(|a| a.weight * a.kernel.density_at(a.center, x))
            .sum();
        continuous + smeared
    }
}

/// Outcome of a semi-elasticity scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemiElasticity {
    pub non_increasing: bool,
    pub first_violation: Option<f64>,
}

/// Checks that `d/dx log p(x)` is non-increasing on the grid `k / (n + 1)`.
///
/// Derivatives are central finite differences with a step proportional to the
/// distance from the nearest endpoint.
pub fn check_semi_elasticity<D: Density + ?Sized>(
    d: &D,
    grid_size: usize,
) -> Result<SemiElasticity> {
    if grid_size < 3 {
        return Err(Error::Argument(format!(
            "semi-elasticity grid needs at least 3 points, got {grid_size}"
        )));
    }
    let ln_p = |x: f64| -> Result<f64> {
        let p = d.density(x);
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::Domain(format!("density {p} is not positive at x = {x}")));
        }
        Ok(p.ln())
    };
    let n = grid_size as f64 + 1.0;
    let mut prev: Option<f64> = None;
    for k in 1..=grid_size {
        let x = k as f64 / n;
        ln_p(x)?;
        let h = 1e-5 * x.min(1.0 - x);
        let slope = (ln_p(x + h)? - ln_p(x - h)?) / (2.0 * h);
        if let Some(last) = prev {
            let slack = 1e-6 * (1.0 + last.abs() + slope.abs());
            if slope > last + slack {
                return Ok(SemiElasticity {
                    non_increasing: false,
                    first_violation: Some(x),
                });
            }
        }
        prev = Some(slope);
    }
    Ok(SemiElasticity {
        non_increasing: true,
        first_violation: None,
    })
}

/// `1 - B((α₁+α₂)/2, (β₁+β₂)/2) / sqrt(B(α₁,β₁) B(α₂,β₂))`.
///
/// This is one minus the Bhattacharyya coefficient, i.e. the *squared*
/// Hellinger distance under the usual normalisation.
pub fn hellinger_beta(p: &BetaDensity, q: &BetaDensity) -> f64 {
    let mid = ln_beta(0.5 * (p.alpha + q.alpha), 0.5 * (p.beta + q.beta));
    let norm = 0.5 * (ln_beta(p.alpha, p.beta) + ln_beta(q.alpha, q.beta));
    1.0 - (mid - norm).exp()
}
