//! Lévy-basis characteristics, jump-measure functionals and exact or
//! near-exact sampling of noise increments over space–time cells.
//!
//! The characteristic triplet is taken with respect to the truncation
//! function 1{|z| ≤ 1}: a cell of volume V carries the infinitely divisible
//! law with drift bV, Gaussian variance cV and Lévy measure V·π₀, where jumps
//! with |z| ≤ 1 are compensated.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{invalid, Error, Result};
use crate::special::{gamma, gamma_p, gamma_q, unit_ball_volume, unit_sphere_area};

/// |z|ʳₛ: |z|ʳ on |z| > 1 and |z|ˢ on |z| ≤ 1.
pub fn truncated_power(z: f64, r: f64, s: f64) -> f64 {
    let a = z.abs();
    if a > 1.0 { a.powf(r) } else { a.powf(s) }
}

/// A point mass of the jump measure: jumps of size `size` arriving at rate
/// `intensity` per unit space–time volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass {
    pub size: f64,
    pub intensity: f64,
}

/// Piecewise-linear jump density on a strictly increasing grid, zero
/// outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    z: Vec<f64>,
    density: Vec<f64>,
}

// One linear piece of the density folded onto w = |z| ≥ 0.
#[derive(Debug, Clone, Copy)]
struct Piece {
    w0: f64,
    w1: f64,
    d0: f64,
    d1: f64,
}

impl Piece {
    fn slope(&self) -> f64 {
        (self.d1 - self.d0) / (self.w1 - self.w0)
    }

    fn at(&self, w: f64) -> f64 {
        self.d0 + self.slope() * (w - self.w0)
    }
}

// ∫_u^v w^e dw, with u ≥ 0; +∞ when divergent at 0.
fn power_integral(e: f64, u: f64, v: f64) -> f64 {
    if v <= u {
        return 0.0;
    }
    if (e + 1.0).abs() < 1e-14 {
        if u == 0.0 { f64::INFINITY } else { (v / u).ln() }
    } else if e + 1.0 < 0.0 && u == 0.0 {
        f64::INFINITY
    } else {
        (v.powf(e + 1.0) - u.powf(e + 1.0)) / (e + 1.0)
    }
}

impl TabulatedDensity {
    pub fn new(z: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if z.len() < 2 || z.len() != density.len() {
            return invalid("tabulated jump density needs at least two (z, density) rows");
        }
        if z.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("tabulated jump sizes must be strictly increasing");
        }
        if density.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return invalid("tabulated jump densities must be finite and non-negative");
        }
        Ok(TabulatedDensity { z, density })
    }

    pub fn grid(&self) -> (&[f64], &[f64]) {
        (&self.z, &self.density)
    }

    pub fn density_at(&self, z: f64) -> f64 {
        if z < self.z[0] || z > self.z[self.z.len() - 1] {
            return 0.0;
        }
        let k = self.z.partition_point(|&v| v <= z).clamp(1, self.z.len() - 1);
        let (z0, z1) = (self.z[k - 1], self.z[k]);
        let (d0, d1) = (self.density[k - 1], self.density[k]);
        d0 + (d1 - d0) * (z - z0) / (z1 - z0)
    }

    // Pieces on the positive (or mirrored negative) half-axis, split at 0.
    fn pieces(&self, positive: bool) -> Vec<Piece> {
        let mut out = Vec::new();
        for k in 1..self.z.len() {
            let (mut a, mut b) = (self.z[k - 1], self.z[k]);
            if positive {
                a = a.max(0.0);
                if b <= a {
                    continue;
                }
                out.push(Piece { w0: a, w1: b, d0: self.density_at(a), d1: self.density_at(b) });
            } else {
                b = b.min(0.0);
                if b <= a {
                    continue;
                }
                out.push(Piece { w0: -b, w1: -a, d0: self.density_at(b), d1: self.density_at(a) });
            }
        }
        out
    }

    /// ∫_{lo < |z| ≤ hi} |z|^e π₀(dz), one sign only when `side` is given.
    fn abs_power(&self, e: f64, lo: f64, hi: f64, side: Option<bool>) -> f64 {
        let sides: &[bool] = match side {
            Some(true) => &[true],
            Some(false) => &[false],
            None => &[true, false],
        };
        let mut total = 0.0;
        for &s in sides {
            for p in self.pieces(s) {
                let u = p.w0.max(lo);
                let v = p.w1.min(hi);
                if v <= u {
                    continue;
                }
                let beta = p.slope();
                let alpha = p.d0 - beta * p.w0;
                let mut part = 0.0;
                if alpha != 0.0 {
                    part += alpha * power_integral(e, u, v);
                }
                if beta != 0.0 {
                    part += beta * power_integral(e + 1.0, u, v);
                }
                if part.is_nan() {
                    // ∞ − ∞ only arises from a density that vanishes at 0
                    // linearly against a non-integrable power.
                    return f64::INFINITY;
                }
                total += part;
            }
        }
        total
    }

    fn sample_abs_above<R: Rng + ?Sized>(&self, eps: f64, rng: &mut R) -> f64 {
        let mut pieces = Vec::new();
        let mut masses = Vec::new();
        for s in [true, false] {
            for p in self.pieces(s) {
                let u = p.w0.max(eps);
                if p.w1 <= u {
                    continue;
                }
                let cut = Piece { w0: u, w1: p.w1, d0: p.at(u), d1: p.d1 };
                masses.push(0.5 * (cut.d0 + cut.d1) * (cut.w1 - cut.w0));
                pieces.push((cut, if s { 1.0 } else { -1.0 }));
            }
        }
        let total: f64 = masses.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut idx = pieces.len() - 1;
        for (k, m) in masses.iter().enumerate() {
            if target < *m {
                idx = k;
                break;
            }
            target -= m;
        }
        let (p, sign) = pieces[idx];
        let top = p.d0.max(p.d1);
        loop {
            let w = p.w0 + rng.random::<f64>() * (p.w1 - p.w0);
            if rng.random::<f64>() * top <= p.at(w) {
                return sign * w;
            }
        }
    }
}

/// Jump (Lévy) measure π₀ of a homogeneous Lévy basis.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpMeasure {
    None,
    PointMasses(Vec<PointMass>),
    /// Jump sizes with |z| ~ Exp(`rate`) arriving at total rate `intensity`
    /// per unit volume; positive jumps only unless `symmetric`.
    ExponentialTails { rate: f64, intensity: f64, symmetric: bool },
    /// Lévy density `scale`·((1+skew)/2·1{z>0} + (1−skew)/2·1{z<0})·|z|^{−1−α}.
    AlphaStable { alpha: f64, scale: f64, skew: f64 },
    Tabulated(TabulatedDensity),
}

impl JumpMeasure {
    pub fn point_masses(masses: &[(f64, f64)]) -> Result<Self> {
        let v: Vec<PointMass> = masses.iter().map(|&(size, intensity)| PointMass { size, intensity }).collect();
        let m = JumpMeasure::PointMasses(v);
        m.validate()?;
        Ok(m)
    }

    pub fn exponential_tails(rate: f64, intensity: f64, symmetric: bool) -> Result<Self> {
        let m = JumpMeasure::ExponentialTails { rate, intensity, symmetric };
        m.validate()?;
        Ok(m)
    }

    pub fn alpha_stable(alpha: f64, scale: f64, skew: f64) -> Result<Self> {
        let m = JumpMeasure::AlphaStable { alpha, scale, skew };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            JumpMeasure::None => Ok(()),
            JumpMeasure::PointMasses(v) => {
                for pm in v {
                    if !(pm.intensity >= 0.0) || !pm.intensity.is_finite() || !pm.size.is_finite() {
                        return invalid(format!("point mass ({}, {}) needs a finite size and non-negative intensity", pm.size, pm.intensity));
                    }
                }
                Ok(())
            }
            JumpMeasure::ExponentialTails { rate, intensity, .. } => {
                if !(*rate > 0.0) || !(*intensity >= 0.0) || !intensity.is_finite() {
                    return invalid("exponential tails need rate > 0 and finite intensity ≥ 0");
                }
                Ok(())
            }
            JumpMeasure::AlphaStable { alpha, scale, skew } => {
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return invalid(format!("stability index {alpha} outside (0,2)"));
                }
                if !(*scale >= 0.0) || !scale.is_finite() {
                    return invalid("stable scale must be finite and non-negative");
                }
                if !(*skew >= -1.0 && *skew <= 1.0) {
                    return invalid("stable skew must lie in [-1,1]");
                }
                if (*alpha - 1.0).abs() < 1e-12 && *skew != 0.0 {
                    return Err(Error::Unsupported("skewed stable jumps with α = 1".into()));
                }
                Ok(())
            }
            JumpMeasure::Tabulated(_) => Ok(()),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            JumpMeasure::None => true,
            JumpMeasure::PointMasses(v) => {
                let mut pos: Vec<(f64, f64)> = v.iter().filter(|p| p.size > 0.0 && p.intensity > 0.0).map(|p| (p.size, p.intensity)).collect();
                let mut neg: Vec<(f64, f64)> = v.iter().filter(|p| p.size < 0.0 && p.intensity > 0.0).map(|p| (-p.size, p.intensity)).collect();
                pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
                neg.sort_by(|a, b| a.partial_cmp(b).unwrap());
                pos == neg
            }
            JumpMeasure::ExponentialTails { symmetric, intensity, .. } => *symmetric || *intensity == 0.0,
            JumpMeasure::AlphaStable { skew, scale, .. } => *skew == 0.0 || *scale == 0.0,
            JumpMeasure::Tabulated(t) => t.z.iter().all(|&z| (t.density_at(z) - t.density_at(-z)).abs() <= 1e-12 * (1.0 + t.density_at(z))),
        }
    }

    /// ∫_{lo < |z| ≤ hi} |z|^e π₀(dz); `hi` may be +∞. Returns +∞ when
    /// divergent.
    pub fn abs_power_between(&self, e: f64, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        match self {
            JumpMeasure::None => 0.0,
            JumpMeasure::PointMasses(v) => v
                .iter()
                .filter(|p| p.size.abs() > lo && p.size.abs() <= hi && p.intensity > 0.0)
                .map(|p| p.intensity * p.size.abs().powf(e))
                .sum(),
            JumpMeasure::ExponentialTails { rate, intensity, .. } => {
                if *intensity == 0.0 {
                    return 0.0;
                }
                if e <= -1.0 {
                    if lo == 0.0 {
                        return f64::INFINITY;
                    }
                    let q = crate::quadrature::integrate(
                        |w| w.powf(e) * rate * (-rate * w).exp(),
                        lo,
                        hi.min(lo + 60.0 / rate),
                        Default::default(),
                    );
                    return intensity * q.value;
                }
                // E|Z|^e restricted to (lo, hi] for |Z| ~ Exp(rate).
                let a = e + 1.0;
                let frac = gamma_p(a, rate * hi) - gamma_p(a, rate * lo);
                let frac = if frac < 1e-3 { gamma_q(a, rate * lo) - gamma_q(a, rate * hi) } else { frac };
                intensity * gamma(a) * rate.powf(-e) * frac
            }
            JumpMeasure::AlphaStable { alpha, scale, .. } => {
                if *scale == 0.0 {
                    return 0.0;
                }
                // 2 sides folded: scale·∫_lo^hi w^{e−1−α} dw.
                scale * power_integral(e - 1.0 - alpha, lo, hi)
            }
            JumpMeasure::Tabulated(t) => t.abs_power(e, lo, hi, None),
        }
    }

    /// ∫ z 1{lo < |z| ≤ hi} π₀(dz), or `None` when not absolutely convergent.
    pub fn signed_first_moment(&self, lo: f64, hi: f64) -> Option<f64> {
        if !self.abs_power_between(1.0, lo, hi).is_finite() {
            return None;
        }
        if hi <= lo {
            return Some(0.0);
        }
        Some(match self {
            JumpMeasure::None => 0.0,
            JumpMeasure::PointMasses(v) => v
                .iter()
                .filter(|p| p.size.abs() > lo && p.size.abs() <= hi)
                .map(|p| p.intensity * p.size)
                .sum(),
            JumpMeasure::ExponentialTails { symmetric, .. } => {
                if *symmetric { 0.0 } else { self.abs_power_between(1.0, lo, hi) }
            }
            JumpMeasure::AlphaStable { skew, .. } => skew * self.abs_power_between(1.0, lo, hi),
            JumpMeasure::Tabulated(t) => t.abs_power(1.0, lo, hi, Some(true)) - t.abs_power(1.0, lo, hi, Some(false)),
        })
    }

    /// π₀(|z| > ε).
    pub fn mass_above(&self, eps: f64) -> f64 {
        self.abs_power_between(0.0, eps, f64::INFINITY)
    }

    fn sample_above<R: Rng + ?Sized>(&self, eps: f64, rng: &mut R) -> f64 {
        match self {
            JumpMeasure::PointMasses(v) => {
                let total: f64 = v.iter().filter(|p| p.size.abs() > eps).map(|p| p.intensity).sum();
                let mut target = rng.random::<f64>() * total;
                let mut last = 0.0;
                for p in v.iter().filter(|p| p.size.abs() > eps && p.intensity > 0.0) {
                    last = p.size;
                    if target < p.intensity {
                        return p.size;
                    }
                    target -= p.intensity;
                }
                last
            }
            JumpMeasure::ExponentialTails { rate, symmetric, .. } => {
                let e: f64 = Exp1.sample(rng);
                let w = eps + e / rate;
                if *symmetric && rng.random::<bool>() { -w } else { w }
            }
            JumpMeasure::Tabulated(t) => t.sample_abs_above(eps, rng),
            JumpMeasure::None | JumpMeasure::AlphaStable { .. } => unreachable!("no compound-Poisson sampling for this family"),
        }
    }
}

/// ∫ |z|ʳₛ π₀(dz): exponent r on large jumps, s on small jumps.
pub fn jump_moment(jumps: &JumpMeasure, r: f64, s: f64) -> f64 {
    let small = jumps.abs_power_between(s, 0.0, 1.0);
    let large = jumps.abs_power_between(r, 1.0, f64::INFINITY);
    small + large
}

/// Bounded, time-independent spatial modulation π₁ of the jump measure.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialModulation {
    Constant(f64),
    /// `value` on the cube [−half_width, half_width]ᵈ, zero elsewhere.
    Indicator { half_width: f64, value: f64 },
    /// value·min(1, |x|^{−exponent}).
    PowerDecay { exponent: f64, value: f64 },
}

impl SpatialModulation {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            SpatialModulation::Constant(v) => *v >= 0.0 && v.is_finite(),
            SpatialModulation::Indicator { half_width, value } => *half_width >= 0.0 && *value >= 0.0 && value.is_finite(),
            SpatialModulation::PowerDecay { exponent, value } => *exponent >= 0.0 && *value >= 0.0 && value.is_finite(),
        };
        if ok { Ok(()) } else { invalid("spatial modulation needs finite non-negative parameters") }
    }

    pub fn at(&self, x: &[f64]) -> f64 {
        match self {
            SpatialModulation::Constant(v) => *v,
            SpatialModulation::Indicator { half_width, value } => {
                if x.iter().all(|xi| xi.abs() <= *half_width) { *value } else { 0.0 }
            }
            SpatialModulation::PowerDecay { exponent, value } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r <= 1.0 { *value } else { value * r.powf(-exponent) }
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            SpatialModulation::Constant(v) => *v,
            SpatialModulation::Indicator { value, .. } | SpatialModulation::PowerDecay { value, .. } => *value,
        }
    }

    /// ∫_{ℝᵈ} π₁(x) dx, possibly +∞.
    pub fn space_integral(&self, d: usize) -> f64 {
        match self {
            SpatialModulation::Constant(v) => {
                if *v == 0.0 || d == 0 { *v } else { f64::INFINITY }
            }
            SpatialModulation::Indicator { half_width, value } => value * (2.0 * half_width).powi(d as i32),
            SpatialModulation::PowerDecay { exponent, value } => {
                if d == 0 {
                    *value
                } else if *value == 0.0 {
                    0.0
                } else if *exponent > d as f64 {
                    value * (unit_ball_volume(d) + unit_sphere_area(d) / (exponent - d as f64))
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Average of π₁ over the box [lo, hi] (spatial coordinates only).
    pub fn cell_average(&self, lo: &[f64], hi: &[f64]) -> f64 {
        match self {
            SpatialModulation::Constant(v) => *v,
            SpatialModulation::Indicator { half_width, value } => {
                let mut frac = 1.0;
                for (a, b) in lo.iter().zip(hi) {
                    let w = b - a;
                    if w <= 0.0 {
                        let inside = a.abs() <= *half_width;
                        frac *= if inside { 1.0 } else { 0.0 };
                        continue;
                    }
                    let overlap = (b.min(*half_width) - a.max(-half_width)).max(0.0);
                    frac *= overlap / w;
                }
                value * frac
            }
            SpatialModulation::PowerDecay { .. } => {
                // Tensor midpoint rule with 4 points per axis.
                let d = lo.len();
                if d == 0 {
                    return self.at(&[]);
                }
                let m = 4usize;
                let total = m.pow(d as u32);
                let mut acc = 0.0;
                let mut x = vec![0.0; d];
                for idx in 0..total {
                    let mut k = idx;
                    for j in 0..d {
                        let i = k % m;
                        k /= m;
                        x[j] = lo[j] + (i as f64 + 0.5) / m as f64 * (hi[j] - lo[j]);
                    }
                    acc += self.at(&x);
                }
                acc / total as f64
            }
        }
    }
}

/// Homogeneous characteristics (b, c, π₀) with optional modulation π₁.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyCharacteristics {
    pub b: f64,
    pub c: f64,
    pub jumps: JumpMeasure,
    pub modulation: Option<SpatialModulation>,
    pub symmetric: bool,
    /// Jumps with |z| ≤ this cutoff are replaced by a matching Gaussian.
    pub small_jump_cutoff: f64,
}

impl LevyCharacteristics {
    pub fn new(b: f64, c: f64, jumps: JumpMeasure) -> Result<Self> {
        if !b.is_finite() {
            return invalid("drift must be finite");
        }
        if !(c >= 0.0) || !c.is_finite() {
            return invalid("Gaussian variance density must be finite and ≥ 0");
        }
        jumps.validate()?;
        Ok(LevyCharacteristics { b, c, jumps, modulation: None, symmetric: false, small_jump_cutoff: 1e-3 })
    }

    pub fn gaussian(c: f64) -> Result<Self> {
        Self::new(0.0, c, JumpMeasure::None)
    }

    pub fn with_modulation(mut self, m: SpatialModulation) -> Result<Self> {
        m.validate()?;
        self.modulation = Some(m);
        Ok(self)
    }

    /// Declares the basis symmetric; requires b = 0 and a symmetric π₀.
    pub fn declared_symmetric(mut self) -> Result<Self> {
        if self.b != 0.0 || !self.jumps.is_symmetric() {
            return invalid("a symmetric basis needs b = 0 and a symmetric jump measure");
        }
        self.symmetric = true;
        Ok(self)
    }

    pub fn with_cutoff(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return invalid("small-jump cutoff must lie in (0,1)");
        }
        self.small_jump_cutoff = eps;
        Ok(self)
    }

    /// Symmetric in law: either declared or structurally (b = 0, π₀ even).
    pub fn is_symmetric(&self) -> bool {
        self.symmetric || (self.b == 0.0 && self.jumps.is_symmetric())
    }

    /// Supremum of π₁ (1 without modulation).
    pub fn modulation_sup(&self) -> f64 {
        self.modulation.as_ref().map_or(1.0, |m| m.sup())
    }

    /// Martingale basis: b₁ exists and vanishes.
    pub fn is_martingale(&self) -> bool {
        matches!(effective_drifts(self).b1, Some(v) if v == 0.0)
    }
}

/// Drift after absorbing large jumps (b₁) and after removing the small-jump
/// compensator (b₀); `None` when the defining integral diverges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drifts {
    pub b0: Option<f64>,
    pub b1: Option<f64>,
}

pub fn effective_drifts(chars: &LevyCharacteristics) -> Drifts {
    let large = chars.jumps.signed_first_moment(1.0, f64::INFINITY);
    let small = chars.jumps.signed_first_moment(0.0, 1.0);
    Drifts { b0: small.map(|m| chars.b - m), b1: large.map(|m| chars.b + m) }
}

/// A space–time cell [lo, hi]; coordinate 0 is time.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Cell {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "cell corners differ in dimension");
        Cell { lo, hi }
    }

    /// Signed volume; negative when any side is reversed an odd number of
    /// times, zero when degenerate.
    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    fn is_reversed(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(a, b)| b < a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub value: f64,
    pub cell: Cell,
}

/// Standard strictly stable draw S_α(1, β, 0) by Chambers–Mallows–Stuck.
///
/// Uses the parameterization with characteristic function
/// exp(−|u|^α (1 − iβ sgn(u) tan(πα/2))) for α ≠ 1 and the Cauchy law for
/// α = 1 (β = 0 only).
pub fn standard_stable<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    let u = PI * (rng.random::<f64>() - 0.5);
    if (alpha - 1.0).abs() < 1e-12 {
        return u.tan();
    }
    let w: f64 = Exp1.sample(rng);
    let t = beta * (FRAC_PI_2 * alpha).tan();
    let b = t.atan() / alpha;
    let s = (1.0 + t * t).powf(1.0 / (2.0 * alpha));
    let arg = alpha * (u + b);
    s * arg.sin() / u.cos().powf(1.0 / alpha) * ((u - arg).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Scale σ of the stable law with Lévy density scale·|z|^{−1−α} (skew split)
/// per unit volume: σ^α = −scale·Γ(−α)·cos(πα/2) for α ≠ 1, and
/// σ = scale·π/2 for α = 1.
pub fn stable_sigma(alpha: f64, scale: f64) -> f64 {
    if (alpha - 1.0).abs() < 1e-12 {
        return scale * FRAC_PI_2;
    }
    // Γ(−α) = Γ(2−α) / (α(α−1))
    let g = gamma(2.0 - alpha) / (alpha * (alpha - 1.0));
    (-scale * g * (FRAC_PI_2 * alpha).cos()).powf(1.0 / alpha)
}

/// Draw Λ(cell) for the given characteristics.
///
/// Gaussian part exact; α-stable jumps exact; other families split at the
/// small-jump cutoff ε into a compound Poisson part for |z| > ε and a
/// centered Gaussian with variance V∫_{|z|≤ε} z²π₀ for the rest. The
/// modulation π₁ multiplies the jump measure by its cell average.
pub fn sample_cell<R: Rng + ?Sized>(chars: &LevyCharacteristics, cell: &Cell, rng: &mut R) -> Result<NoiseIncrement> {
    let vol = cell.volume();
    if cell.is_reversed() && vol != 0.0 {
        return Err(Error::NegativeVolume(vol));
    }
    if vol == 0.0 {
        return Ok(NoiseIncrement { value: 0.0, cell: cell.clone() });
    }
    let value = sample_volume(chars, vol, &cell.lo[1..], &cell.hi[1..], rng);
    Ok(NoiseIncrement { value, cell: cell.clone() })
}

/// Draw the increment for a cell of volume `vol > 0` whose spatial extent is
/// [space_lo, space_hi].
pub(crate) fn sample_volume<R: Rng + ?Sized>(chars: &LevyCharacteristics, vol: f64, space_lo: &[f64], space_hi: &[f64], rng: &mut R) -> f64 {
    let mut x = chars.b * vol;
    if chars.c > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        x += (chars.c * vol).sqrt() * z;
    }
    let m = chars.modulation.as_ref().map_or(1.0, |m| m.cell_average(space_lo, space_hi));
    let jv = vol * m;
    if jv <= 0.0 {
        return x;
    }
    match &chars.jumps {
        JumpMeasure::None => {}
        JumpMeasure::AlphaStable { alpha, scale, skew } => {
            if *scale > 0.0 {
                let sigma = stable_sigma(*alpha, scale * jv);
                x += sigma * standard_stable(*alpha, *skew, rng);
                // Re-centre from the stable parameterization to truncation 1{|z|≤1}.
                let asym = scale * skew * jv;
                if *alpha < 1.0 {
                    x -= asym / (1.0 - alpha);
                } else if *alpha > 1.0 {
                    x += asym / (alpha - 1.0);
                }
            }
        }
        jumps => {
            let eps = chars.small_jump_cutoff;
            let rate = jv * jumps.mass_above(eps);
            if rate > 0.0 {
                let n = Poisson::new(rate).map(|p| p.sample(rng) as u64).unwrap_or(0);
                for _ in 0..n {
                    x += jumps.sample_above(eps, rng);
                }
            }
            let comp = jumps.signed_first_moment(eps, 1.0).unwrap_or(0.0);
            x -= jv * comp;
            let small_var = jv * jumps.abs_power_between(2.0, 0.0, eps);
            if small_var > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                x += small_var.sqrt() * z;
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn truncated_power_branches() {
        assert_eq!(truncated_power(2.0, 1.0, 2.0), 2.0);
        assert_eq!(truncated_power(0.5, 1.0, 2.0), 0.25);
        assert_eq!(truncated_power(-3.0, 0.0, 2.0), 1.0);
    }

    #[test]
    fn two_point_second_moment() {
        let j = JumpMeasure::point_masses(&[(1.0, 3.0), (-1.0, 3.0)]).unwrap();
        assert_eq!(jump_moment(&j, 2.0, 2.0), 6.0);
    }

    #[test]
    fn stable_moment_diverges_for_large_index() {
        let j = JumpMeasure::alpha_stable(1.5, 1.0, 0.0).unwrap();
        assert!(jump_moment(&j, 1.7, 1.7).is_infinite());
        // finite when r < α < s
        let v = jump_moment(&j, 1.0, 1.7);
        assert!((v - (1.0 / 0.2 + 1.0 / 0.5)).abs() < 1e-12);
    }

    #[test]
    fn exponential_first_moment() {
        let j = JumpMeasure::exponential_tails(1.0, 2.0, false).unwrap();
        assert!((jump_moment(&j, 1.0, 1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn drifts_of_examples() {
        let sym = LevyCharacteristics::new(0.0, 0.0, JumpMeasure::point_masses(&[(1.0, 3.0), (-1.0, 3.0)]).unwrap()).unwrap();
        assert_eq!(effective_drifts(&sym), Drifts { b0: Some(0.0), b1: Some(0.0) });
        let one = LevyCharacteristics::new(0.0, 0.0, JumpMeasure::point_masses(&[(2.0, 1.0)]).unwrap()).unwrap();
        assert_eq!(effective_drifts(&one), Drifts { b0: Some(0.0), b1: Some(2.0) });
        let st = LevyCharacteristics::new(0.0, 0.0, JumpMeasure::alpha_stable(0.8, 1.0, 0.0).unwrap()).unwrap();
        assert_eq!(effective_drifts(&st), Drifts { b0: Some(0.0), b1: None });
    }

    #[test]
    fn zero_volume_is_exactly_zero() {
        let chars = LevyCharacteristics::new(1.0, 2.0, JumpMeasure::alpha_stable(1.2, 1.0, 0.3).unwrap()).unwrap();
        let cell = Cell::new(vec![0.0, 0.0], vec![0.0, 1.0]);
        let mut rng = stream(1, 0, 0);
        assert_eq!(sample_cell(&chars, &cell, &mut rng).unwrap().value, 0.0);
    }

    #[test]
    fn reversed_cell_rejected() {
        let chars = LevyCharacteristics::gaussian(1.0).unwrap();
        let cell = Cell::new(vec![1.0, 0.0], vec![0.0, 1.0]);
        let mut rng = stream(1, 0, 0);
        assert!(matches!(sample_cell(&chars, &cell, &mut rng), Err(Error::NegativeVolume(_))));
    }

    #[test]
    fn gaussian_cell_moments() {
        let chars = LevyCharacteristics::gaussian(1.0).unwrap();
        let cell = Cell::new(vec![0.0, 0.0], vec![0.5, 0.5]);
        let n = 100_000;
        let mut s = 0.0;
        let mut s2 = 0.0;
        for i in 0..n {
            let mut rng = stream(3, 0, i);
            let v = sample_cell(&chars, &cell, &mut rng).unwrap().value;
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let se_mean = (0.25f64 / n as f64).sqrt();
        let se_var = 0.25 * (2.0 / n as f64).sqrt();
        assert!(mean.abs() < 4.0 * se_mean, "mean {mean}");
        assert!((var - 0.25).abs() < 4.0 * se_var, "var {var}");
    }

    #[test]
    fn unit_point_mass_is_poisson_when_b0_vanishes() {
        // With b = 2 the compensator of the unit jumps is cancelled (b₀ = 0),
        // so Λ(cell) is Poisson(6) for V = 3.
        let chars = LevyCharacteristics::new(2.0, 0.0, JumpMeasure::point_masses(&[(1.0, 2.0)]).unwrap()).unwrap();
        let cell = Cell::new(vec![0.0, 0.0], vec![3.0, 1.0]);
        let n = 50_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let v = sample_cell(&chars, &cell, &mut stream(5, 0, i)).unwrap().value;
            assert_eq!(v, v.round(), "non-integer value {v}");
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 6.0).abs() < 4.0 * (6.0 / n as f64).sqrt());
        assert!((var - 6.0).abs() < 4.0 * (6.0f64 * (1.0 + 2.0 * 6.0) / n as f64).sqrt());
    }

    #[test]
    fn tabulated_matches_point_like_closed_form() {
        // Uniform density 1 on [-2,2]: ∫|z| over |z|>1 = 2·(4−1)/2 = 3.
        let t = TabulatedDensity::new(vec![-2.0, 2.0], vec![1.0, 1.0]).unwrap();
        let j = JumpMeasure::Tabulated(t);
        assert!((j.abs_power_between(1.0, 1.0, f64::INFINITY) - 3.0).abs() < 1e-12);
        assert!((j.abs_power_between(2.0, 0.0, 1.0) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(j.signed_first_moment(0.0, f64::INFINITY), Some(0.0));
        assert!(j.is_symmetric());
    }

    #[test]
    fn modulation_integrals() {
        assert!(SpatialModulation::Constant(1.0).space_integral(1).is_infinite());
        assert_eq!(SpatialModulation::Indicator { half_width: 1.0, value: 2.0 }.space_integral(2), 8.0);
        assert!(SpatialModulation::PowerDecay { exponent: 1.0, value: 1.0 }.space_integral(1).is_infinite());
        let v = SpatialModulation::PowerDecay { exponent: 2.0, value: 1.0 }.space_integral(1);
        assert!((v - 4.0).abs() < 1e-12);
        let avg = SpatialModulation::Indicator { half_width: 1.0, value: 1.0 }.cell_average(&[0.5], &[1.5]);
        assert!((avg - 0.5).abs() < 1e-15);
    }

    #[test]
    fn declared_symmetric_requires_even_measure() {
        let c = LevyCharacteristics::new(0.0, 0.0, JumpMeasure::point_masses(&[(1.0, 1.0)]).unwrap()).unwrap();
        assert!(c.declared_symmetric().is_err());
    }
}
