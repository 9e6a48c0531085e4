//! Deterministic Volterra equations of moment-bound type
//!
//! v(t) = f(t) + Σ_l c_l (∫ K_l(t−s) (a_l + b_l v(s))^{r_l} ds)^{1/p_l},
//!
//! their Picard solution on a uniform time grid, contraction partitions,
//! comparison checks and the closed-form helpers for the exponential kernel
//! and the fractional fixed point.
//!
//! Every kernel is of convolution form and every force is constant in space,
//! so solutions are constant in space: the solver works with the spatially
//! integrated profile m(τ) = ∫ K(τ, x) dx and broadcasts over space.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::kernels::{self, Exponent, Kernel};
use crate::levy_basis::{jump_moment, truncated_power, JumpMeasure};
use crate::quadrature::{integrate, integrate_algebraic, integrate_from, QuadConfig};
use crate::special::ln_gamma;
use crate::wellposedness::{b1_sup, bdg_constant, ModelSpec};

/// Pointwise transform of the kernel value g inside a kernel term.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    /// g^e
    Power(f64),
    /// g^large where g > 1, g^small where g ≤ 1.
    Truncated { large: f64, small: f64 },
    /// ∫ |g z|^e 1{|g z| > 1} π₀(dz)
    JumpLarge { jumps: JumpMeasure, exponent: f64 },
    /// ∫ |g z|^e 1{|g z| ≤ 1} π₀(dz)
    JumpSmall { jumps: JumpMeasure, exponent: f64 },
    /// ∫ |g z|^large_small π₀(dz)
    JumpTruncated { jumps: JumpMeasure, large: f64, small: f64 },
}

impl Transform {
    pub fn apply(&self, g: f64) -> f64 {
        if !(g > 0.0) {
            return 0.0;
        }
        let big = |jumps: &JumpMeasure, e: f64| {
            let m = jumps.abs_power_between(e, 1.0 / g, f64::INFINITY);
            if m == 0.0 { 0.0 } else { g.powf(e) * m }
        };
        let small = |jumps: &JumpMeasure, e: f64| {
            let m = jumps.abs_power_between(e, 0.0, 1.0 / g);
            if m == 0.0 { 0.0 } else { g.powf(e) * m }
        };
        match self {
            Transform::Power(e) => g.powf(*e),
            Transform::Truncated { large, small } => {
                if g > 1.0 { g.powf(*large) } else { g.powf(*small) }
            }
            Transform::JumpLarge { jumps, exponent } => big(jumps, *exponent),
            Transform::JumpSmall { jumps, exponent } => small(jumps, *exponent),
            Transform::JumpTruncated { jumps, large, small: s } => big(jumps, *large) + small(jumps, *s),
        }
    }

    fn as_exponent(&self) -> Option<Exponent> {
        match *self {
            Transform::Power(e) => Some(Exponent::Power(e)),
            Transform::Truncated { large, small } => Some(Exponent::Truncated { large, small }),
            _ => None,
        }
    }
}

/// Kernel term m(τ, x) = coefficient · T(g(τ, x)) · e^{−ητ}.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTerm {
    pub kernel: Kernel,
    pub transform: Transform,
    pub coefficient: f64,
    pub eta: f64,
}

fn cfg() -> QuadConfig {
    QuadConfig { abs_tol: 1e-15, rel_tol: 1e-10, max_intervals: 2000 }
}

impl KernelTerm {
    pub fn new(kernel: Kernel, transform: Transform, coefficient: f64, eta: f64) -> Self {
        KernelTerm { kernel, transform, coefficient, eta }
    }

    /// Plain kernel g, unit coefficient, no weight.
    pub fn plain(kernel: Kernel) -> Self {
        KernelTerm::new(kernel, Transform::Power(1.0), 1.0, 0.0)
    }

    /// Spatially integrated profile m(τ) = ∫ m(τ, x) dx.
    pub fn profile(&self, tau: f64) -> f64 {
        if tau <= 0.0 || self.coefficient == 0.0 {
            return 0.0;
        }
        let s = match &self.transform {
            Transform::Power(e) => self.kernel.spatial_power(tau, *e),
            t => self.kernel.spatial_transform(tau, &|g| t.apply(g)),
        };
        self.coefficient * s * (-self.eta * tau).exp()
    }

    /// Analytic finiteness of ∫₀^H m, where the transform allows it.
    pub fn finite_mass(&self, horizon: f64) -> Option<bool> {
        if self.coefficient == 0.0 {
            return Some(true);
        }
        let e = self.transform.as_exponent()?;
        let e = match e {
            // g^α with α ≤ 0 is bounded by g^ε on {g > 1}
            Exponent::Truncated { large, small } if large <= 0.0 => Exponent::Truncated { large: 1e-9, small },
            e => e,
        };
        kernels::classify(&self.kernel, e, self.eta, horizon)
    }

    // Exponent β with m(τ) ~ τ^β as τ → 0, when known.
    fn singular_exponent(&self) -> Option<f64> {
        match (&self.kernel, &self.transform) {
            (Kernel::Heat { d, .. }, Transform::Power(e)) => Some((1.0 - e) * *d as f64 / 2.0),
            (Kernel::Heat { d, .. }, Transform::Truncated { large, .. }) => Some((1.0 - large) * *d as f64 / 2.0),
            (Kernel::Exponential { .. }, _) => Some(0.0),
            _ => None,
        }
    }

    // ∫₀^h m(τ) w(τ) dτ with the τ = 0 singularity absorbed.
    fn head_integral(&self, w: impl Fn(f64) -> f64, h: f64) -> f64 {
        match self.singular_exponent() {
            Some(beta) if beta > -1.0 && beta != 0.0 => {
                integrate_algebraic(|t| self.profile(t) * w(t) * t.powf(-beta), beta, h, cfg()).value
            }
            Some(b) if b == 0.0 => integrate(|t| self.profile(t) * w(t), 0.0, h, cfg()).value,
            _ => integrate(|s| { let t = h * s * s; self.profile(t) * w(t) * 2.0 * h * s }, 0.0, 1.0, cfg()).value,
        }
    }

    /// ∫_a^b m(τ) dτ; `b` may be +∞.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        if !(b > a) || self.coefficient == 0.0 {
            return 0.0;
        }
        if b.is_infinite() && self.finite_mass(f64::INFINITY) == Some(false) {
            return f64::INFINITY;
        }
        if a == 0.0 {
            if self.finite_mass(b) == Some(false) {
                return f64::INFINITY;
            }
            if let Some(e) = self.transform.as_exponent() {
                if let Ok(n) = kernels::weighted_functional(&self.kernel, e, self.eta, b) {
                    if n.method == kernels::Method::ClosedForm {
                        return self.coefficient * n.value;
                    }
                }
            }
            let split = b.min(1.0);
            let head = self.head_integral(|_| 1.0, split);
            return head + self.mass(split, b);
        }
        if b.is_infinite() {
            integrate_from(|t| self.profile(t), a, cfg()).value
        } else {
            integrate(|t| self.profile(t), a, b, cfg()).value
        }
    }

    /// sup over u ∈ [0, u_max] of ∫_u^{u+ℓ} m.
    pub fn sup_window_mass(&self, len: f64, u_max: f64) -> f64 {
        if len.is_infinite() {
            return self.mass(0.0, f64::INFINITY);
        }
        let at0 = self.mass(0.0, len);
        if !at0.is_finite() || u_max <= 0.0 {
            return at0;
        }
        // The optimal window of a unimodal profile contains its mode.
        let mut mode = 0.0;
        let mut best = 0.0;
        let top = (u_max + len).min(1e4);
        for k in 0..=140 {
            let t = 1e-8 * 10f64.powf(k as f64 * 0.1);
            if t > top {
                break;
            }
            let v = self.profile(t);
            if v > best {
                best = v;
                mode = t;
            }
        }
        if mode <= 1e-8 {
            return at0;
        }
        let window = |u: f64| self.mass(u, u + len);
        let (mut lo, mut hi) = ((mode - len).max(0.0), mode.min(u_max));
        if hi <= lo {
            return at0.max(window(lo));
        }
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let (mut f1, mut f2) = (window(x1), window(x2));
        for _ in 0..40 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = window(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = window(x1);
            }
        }
        at0.max(f1).max(f2).max(window(u_max.min(mode)))
    }
}

/// One summand c (∫ K (a + b v)^r)^{1/p} of the right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraTerm {
    pub kernel: KernelTerm,
    pub outer: f64,
    /// p ≥ 1
    pub power: f64,
    pub shift: f64,
    pub scale: f64,
    /// r ≤ p; r < p gives fractional growth.
    pub inner_exp: f64,
}

impl VolterraTerm {
    /// ∫ K v
    pub fn linear(kernel: KernelTerm) -> Self {
        VolterraTerm { kernel, outer: 1.0, power: 1.0, shift: 0.0, scale: 1.0, inner_exp: 1.0 }
    }

    fn inner(&self, v: f64) -> f64 {
        (self.shift + self.scale * v).max(0.0).powf(self.inner_exp)
    }

    // Multiplier of (window mass)^{1/p} in the contraction number.
    fn contraction_weight(&self) -> f64 {
        self.outer * self.scale.powf(self.inner_exp / self.power)
    }

    pub fn is_fractional(&self) -> bool {
        self.inner_exp < self.power * (1.0 - 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interval {
    /// [start, end]
    Finite { start: f64, end: f64 },
    /// (−∞, end]
    Past { end: f64 },
    /// [start, ∞); solved on a caller-chosen finite grid.
    Future { start: f64 },
}

/// f(t) = constant + scale · e^{rate·t}
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Force {
    pub constant: f64,
    pub scale: f64,
    pub rate: f64,
}

impl Force {
    pub fn constant(c: f64) -> Self {
        Force { constant: c, scale: 0.0, rate: 0.0 }
    }

    pub fn exponential(scale: f64, rate: f64) -> Self {
        Force { constant: 0.0, scale, rate }
    }

    pub fn at(&self, t: f64) -> f64 {
        if self.scale == 0.0 { self.constant } else { self.constant + self.scale * (self.rate * t).exp() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolterraProblem {
    pub terms: Vec<VolterraTerm>,
    pub force: Force,
    pub interval: Interval,
}

/// Uniform time grid start, start + step, …, start + n·step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub start: f64,
    pub step: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(end > start) || !(step > 0.0) || !start.is_finite() || !end.is_finite() {
            return invalid("time grid needs finite start < end and a positive step");
        }
        let n = ((end - start) / step - 1e-9).ceil().max(1.0) as usize;
        Ok(TimeGrid { start, step: (end - start) / n as f64, n })
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * self.n as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.start + self.step * i as f64).collect()
    }
}

impl VolterraProblem {
    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            if !(t.power >= 1.0) || !(t.inner_exp > 0.0) || t.inner_exp > t.power * (1.0 + 1e-12) {
                return invalid("each term needs p ≥ 1 and 0 < r ≤ p");
            }
            if !(t.outer >= 0.0) || !(t.scale >= 0.0) || !(t.shift >= 0.0) || !(t.kernel.coefficient >= 0.0) {
                return invalid("kernel terms, multipliers and shifts must be non-negative");
            }
        }
        if !(self.force.constant >= 0.0) || !(self.force.scale >= 0.0) {
            return invalid("the force must be non-negative");
        }
        if let Interval::Finite { start, end } = self.interval {
            if !(end > start) {
                return invalid("interval must have start < end");
            }
        }
        Ok(())
    }

    /// Grid of the given step covering the interval; for (−∞, T] the history
    /// starts at T − L with the summed kernel tail mass beyond L below tol/10.
    pub fn grid(&self, step: f64, tol: f64) -> Result<TimeGrid> {
        match self.interval {
            Interval::Finite { start, end } => TimeGrid::new(start, end, step),
            Interval::Future { .. } => invalid("a half-line [t₀, ∞) needs an explicit finite grid"),
            Interval::Past { end } => {
                let tail = |l: f64| self.terms.iter().map(|t| t.kernel.mass(l, f64::INFINITY)).sum::<f64>();
                let mut l = (10.0 * step).max(1.0);
                while tail(l) >= tol / 10.0 {
                    l *= 2.0;
                    if l > 1e6 {
                        return Err(Error::Unsupported("kernel tail too heavy for a truncated history".into()));
                    }
                }
                TimeGrid::new(end - l, end, step)
            }
        }
    }

    fn effective_interval(&self, grid: &TimeGrid) -> Interval {
        match self.interval {
            Interval::Past { .. } => Interval::Past { end: grid.end() },
            _ => Interval::Finite { start: grid.start, end: grid.end() },
        }
    }

    fn is_fractional(&self) -> bool {
        self.terms.iter().any(|t| t.is_fractional())
    }
}

/// Breakpoints t₀ < … < t_{k+1} (t₀ may be −∞) with per-interval contraction
/// numbers and their supremum ρ.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub breakpoints: Vec<f64>,
    pub contraction: Vec<f64>,
    pub rho: f64,
}

impl Partition {
    pub fn intervals(&self) -> usize {
        self.breakpoints.len().saturating_sub(1)
    }
}

fn interval_rho(problem: &VolterraProblem, a: f64, b: f64, end: f64) -> f64 {
    problem
        .terms
        .iter()
        .map(|t| {
            let m = if a.is_infinite() {
                t.kernel.mass(0.0, f64::INFINITY)
            } else {
                t.kernel.sup_window_mass(b - a, (end - b).max(0.0))
            };
            t.contraction_weight() * m.powf(1.0 / t.power)
        })
        .sum()
}

/// sup_j Σ_l c_l b_l^{r_l/p_l} (sup_t ∫_{I_j} m_l(t − s) ds)^{1/p_l}.
pub fn partition_rho(problem: &VolterraProblem, partition: &Partition) -> f64 {
    let end = *partition.breakpoints.last().unwrap_or(&0.0);
    partition
        .breakpoints
        .windows(2)
        .map(|w| interval_rho(problem, w[0], w[1], end))
        .fold(0.0, f64::max)
}

const MAX_DOUBLINGS: u32 = 16;

/// Search for a partition with ρ < 1: uniform subdivisions with doubling k on
/// a finite interval; on (−∞, T] the unbounded first interval carries the
/// total kernel mass, which alone decides.
pub fn find_contraction_partition(problem: &VolterraProblem) -> Result<Partition> {
    problem.validate()?;
    let (start, end) = match problem.interval {
        Interval::Finite { start, end } => (start, end),
        Interval::Past { end } => {
            let rho = interval_rho(problem, f64::NEG_INFINITY, end, end);
            if !(rho < 1.0) {
                return Err(Error::NoContraction { mass: rho });
            }
            return Ok(Partition { breakpoints: vec![f64::NEG_INFINITY, end], contraction: vec![rho], rho });
        }
        Interval::Future { .. } => return invalid("contraction search needs a bounded interval or (−∞, T]"),
    };
    finite_partition(problem, start, end)
}

fn finite_partition(problem: &VolterraProblem, start: f64, end: f64) -> Result<Partition> {
    let mut last = f64::INFINITY;
    for j in 0..=MAX_DOUBLINGS {
        let k = 1usize << j;
        let len = (end - start) / k as f64;
        let breakpoints: Vec<f64> = (0..=k).map(|i| start + len * i as f64).collect();
        // The first window admits the longest lags, so it bounds the others.
        let first = interval_rho(problem, breakpoints[0], breakpoints[1], end);
        if !first.is_finite() {
            return Err(Error::NoContraction { mass: first });
        }
        last = first;
        if first < 1.0 {
            let contraction = if k <= 64 {
                breakpoints.windows(2).map(|w| interval_rho(problem, w[0], w[1], end)).collect()
            } else {
                vec![first; k]
            };
            let rho = contraction.iter().cloned().fold(0.0, f64::max);
            return Ok(Partition { breakpoints, contraction, rho });
        }
    }
    Err(Error::NoContraction { mass: last })
}

/// Σ_{m>n} C(m+k−1, m) ρ^m, the tail of the Picard error series.
pub fn binomial_tail(n: usize, k: usize, rho: f64) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    if rho >= 1.0 {
        return f64::INFINITY;
    }
    let kf = k.max(1) as f64;
    let ln_term = |m: f64| ln_gamma(m + kf) - ln_gamma(m + 1.0) - ln_gamma(kf) + m * rho.ln();
    let mut sum = 0.0;
    let mut m = n as f64 + 1.0;
    let peak = ((kf - 1.0) * rho / (1.0 - rho)).max(0.0);
    for _ in 0..10_000_000 {
        let t = ln_term(m).exp();
        sum += t;
        if m > peak && t <= 1e-17 * sum {
            return sum;
        }
        if m > peak && sum == 0.0 && t == 0.0 {
            return 0.0;
        }
        m += 1.0;
    }
    f64::INFINITY
}

/// Gridded scalar field over time × space points, stored relative to
/// w(t) = e^{ηt}. With no spatial points the field is constant in space.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub eta: f64,
}

impl Field {
    pub fn homogeneous(times: Vec<f64>, values: Vec<f64>, eta: f64) -> Self {
        Field { times, points: Vec::new(), values, eta }
    }

    fn width(&self) -> usize {
        self.points.len().max(1)
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        if self.points.is_empty() { self.values[i] } else { self.values[i * self.width() + j] }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let d = self.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|k| format!("x{k}")));
        header.push("value".into());
        wr.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            for j in 0..self.width() {
                let mut row = vec![fmt_f64(*t)];
                if let Some(p) = self.points.get(j) {
                    row.extend(p.iter().map(|x| fmt_f64(*x)));
                }
                row.push(fmt_f64(self.at(i, j)));
                wr.write_record(&row)?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Parse the `t, x1..xd, value` layout written by [`Field::write_csv`].
    pub fn read_csv<R: Read>(r: R, eta: f64) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let d = rd.headers()?.len().checked_sub(2).ok_or_else(|| Error::InvalidParameter("field CSV needs t and value columns".into()))?;
        let mut times: Vec<f64> = Vec::new();
        let mut points: Vec<Vec<f64>> = Vec::new();
        let mut values = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let nums: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
            let nums = nums.map_err(|_| Error::InvalidParameter("non-numeric entry in field CSV".into()))?;
            let t = nums[0];
            if times.last() != Some(&t) {
                times.push(t);
            }
            if d > 0 && times.len() == 1 {
                points.push(nums[1..=d].to_vec());
            }
            values.push(nums[d + 1]);
        }
        let f = Field { times, points, values, eta };
        if f.values.len() != f.times.len() * f.width() {
            return invalid("field CSV is not a full time × space grid");
        }
        Ok(f)
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    if x.is_finite() { format!("{x:.12e}") } else if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub sup_difference: f64,
    /// ‖v¹ − v⁰‖ Σ_{m>n} C(m+k−1, m)ρ^m; NaN without a contraction partition.
    pub bound: f64,
}

pub fn write_trace_csv<W: Write>(trace: &[TraceRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["iteration", "sup_difference", "bound"])?;
    for r in trace {
        wr.write_record([r.iteration.to_string(), fmt_f64(r.sup_difference), fmt_f64(r.bound)])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PicardSolution {
    pub field: Field,
    pub trace: Vec<TraceRow>,
    pub partition: Option<Partition>,
}

// Product-trapezoid weights for one term on a uniform grid: the lag cell
// [ch, (c+1)h] contributes A_c = ∫ m (τ−ch)/h and B_c = ∫ m ((c+1)h−τ)/h.
struct Weights {
    hat: Vec<f64>,   // lag k ≥ 0, full or right-half hat: B_k + A_{k−1}
    first: Vec<f64>, // weight of the earliest node at lag i: A_{i−1} (+ history tail)
}

fn build_weights(term: &KernelTerm, grid: &TimeGrid, past: bool) -> Weights {
    let h = grid.step;
    let n = grid.n;
    let cells: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|c| {
            let lo = c as f64 * h;
            if c == 0 {
                let a = term.head_integral(|t| t / h, h);
                let b = term.head_integral(|t| 1.0 - t / h, h);
                (a, b)
            } else {
                let a = integrate(|t| term.profile(t) * (t - lo) / h, lo, lo + h, cfg()).value;
                let b = integrate(|t| term.profile(t) * (lo + h - t) / h, lo, lo + h, cfg()).value;
                (a, b)
            }
        })
        .collect();
    let mut hat = vec![0.0; n + 1];
    for k in 0..n {
        hat[k] = cells[k].1 + if k > 0 { cells[k - 1].0 } else { 0.0 };
    }
    let mut first = vec![0.0; n + 1];
    for i in 1..=n {
        first[i] = cells[i - 1].0;
    }
    if past {
        // Constant history before the grid: v(s) = v(t₀) for s < t₀.
        let mut tail = term.mass(n as f64 * h, f64::INFINITY);
        for i in (0..=n).rev() {
            first[i] += tail;
            if i > 0 {
                tail += cells[i - 1].0 + cells[i - 1].1;
            }
        }
    }
    Weights { hat, first }
}

/// The discretized right-hand side v ↦ f + Σ_l c_l(∫ m_l (a_l + b_l v)^{r_l})^{1/p_l}
/// on a uniform grid (product trapezoid rule in the lag variable).
pub struct PicardOperator<'a> {
    problem: &'a VolterraProblem,
    weights: Vec<Weights>,
    force: Vec<f64>,
    pub grid: TimeGrid,
}

impl<'a> PicardOperator<'a> {
    pub fn new(problem: &'a VolterraProblem, grid: &TimeGrid) -> Result<Self> {
        problem.validate()?;
        let past = matches!(problem.interval, Interval::Past { .. });
        let weights = problem.terms.iter().map(|t| build_weights(&t.kernel, grid, past)).collect();
        let force = grid.times().iter().map(|&t| problem.force.at(t)).collect();
        Ok(PicardOperator { problem, weights, force, grid: *grid })
    }

    pub fn force(&self) -> &[f64] {
        &self.force
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..=self.grid.n)
            .into_par_iter()
            .map(|i| {
                let mut acc = self.force[i];
                for (term, w) in self.problem.terms.iter().zip(&self.weights) {
                    let mut s = w.first[i] * term.inner(v[0]);
                    for m in 1..=i {
                        s += w.hat[i - m] * term.inner(v[m]);
                    }
                    acc += term.outer * s.max(0.0).powf(1.0 / term.power);
                }
                acc
            })
            .collect()
    }
}

/// Picard iteration vⁿ = f + Σ_l c_l(∫ m_l (a_l + b_l vⁿ⁻¹)^{r_l})^{1/p_l}
/// from v⁰ = f. Stops when the sup-difference and the binomial tail bound
/// both drop below `tol`. Problems with fractional growth (r < p) need no
/// contraction partition; their iterates increase monotonically to the
/// minimal solution.
pub fn picard_solve(problem: &VolterraProblem, grid: &TimeGrid, tol: f64, max_iter: usize) -> Result<PicardSolution> {
    problem.validate()?;
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let interval = problem.effective_interval(grid);
    let scoped = VolterraProblem { interval, ..problem.clone() };
    let partition = match find_contraction_partition(&scoped) {
        Ok(p) => Some(p),
        Err(e) if !problem.is_fractional() => return Err(e),
        Err(_) => None,
    };
    let op = PicardOperator::new(&scoped, grid)?;
    let mut v = op.force().to_vec();
    let mut trace = Vec::new();
    let mut first_diff = 0.0;
    for it in 1..=max_iter {
        let next = op.apply(&v);
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence(format!("Picard iterate became non-finite at iteration {it}")));
        }
        if it == 1 {
            first_diff = diff;
        }
        let bound = match (&partition, problem.is_fractional()) {
            (Some(p), false) => first_diff * binomial_tail(it, p.intervals(), p.rho),
            _ => f64::NAN,
        };
        trace.push(TraceRow { iteration: it, sup_difference: diff, bound });
        v = next;
        if diff < tol && (bound.is_nan() || bound < tol) {
            return Ok(PicardSolution { field: Field::homogeneous(grid.times(), v, 0.0), trace, partition });
        }
        if trace.len() >= 6 && trace[trace.len() - 6..].windows(2).all(|w| w[1].sup_difference > w[0].sup_difference) && diff > 1e6 * (1.0 + first_diff) {
            return Err(Error::Divergence(format!("residual grew for 5 consecutive iterations to {diff:e}")));
        }
    }
    let residual = trace.last().map_or(f64::NAN, |r| r.sup_difference);
    Err(Error::NotConverged { iterations: max_iter, residual })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub pass: bool,
    /// max(candidate − solution, 0) over the grid
    pub max_violation: f64,
}

/// Check candidate ≤ solution node by node, allowing `slack` per node.
pub fn compare_fields(solution: &Field, candidate: &Field, slack: Option<&[f64]>) -> Result<Comparison> {
    if solution.times.len() != candidate.times.len()
        || solution.times.iter().zip(&candidate.times).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()))
    {
        return invalid("candidate and solution live on different time grids");
    }
    let scale = solution.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for i in 0..candidate.times.len() {
        for j in 0..candidate.width() {
            let k = i * candidate.width() + j;
            let s = slack.map_or(0.0, |s| s[k]);
            let sol = solution.at(i, if solution.points.is_empty() { 0 } else { j });
            worst = worst.max(candidate.at(i, j) - sol - s);
        }
    }
    Ok(Comparison { pass: worst <= 1e-9 * (1.0 + scale), max_violation: worst.max(0.0) })
}

/// Solve the problem on the candidate's (uniform) time grid and check that the
/// candidate stays below the solution.
pub fn comparison_bound(problem: &VolterraProblem, candidate: &Field, tol: f64) -> Result<Comparison> {
    let t = &candidate.times;
    if t.len() < 2 {
        return invalid("candidate needs at least two time points");
    }
    let grid = TimeGrid::new(t[0], t[t.len() - 1], t[1] - t[0])?;
    if grid.n + 1 != t.len() {
        return invalid("candidate grid is not uniform");
    }
    let sol = picard_solve(problem, &grid, tol, 10_000)?;
    compare_fields(&sol.field, candidate, None)
}

/// Unique strictly positive root of a − F − θa^γ = 0 for γ ∈ (0,1).
pub fn stability_fixed_point(f: f64, theta: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return invalid("growth exponent must lie in (0,1); γ = 1 is the linear renewal case");
    }
    if !(f >= 0.0) || !(theta >= 0.0) || !f.is_finite() || !theta.is_finite() {
        return invalid("F and θ must be finite and non-negative");
    }
    if theta == 0.0 {
        return Ok(f);
    }
    let h = |a: f64| a - f - theta * a.powf(gamma);
    // Any root exceeds F and θ^{1/(1−γ)}.
    let mut lo = f.max(theta.powf(1.0 / (1.0 - gamma)));
    if h(lo) >= 0.0 {
        return Ok(lo);
    }
    let mut hi = 2.0 * lo;
    while h(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) < 0.0 { lo = mid } else { hi = mid }
    }
    Ok(if h(lo).abs() <= h(hi).abs() { lo } else { hi })
}

/// Solutions of v(t) = e^{αt} + ∫_{−∞}^t e^{−λ(t−s)} v(s) ds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolutionFamily {
    NoSolution,
    /// A e^{αt} + c e^{(1−λ)t}
    Exponential { amplitude: f64, alpha: f64, free_rate: f64 },
    /// (t + c) e^{αt}, when α + λ = 1
    Resonant { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpKernelSolutions {
    pub lambda: f64,
    pub alpha: f64,
    pub family: SolutionFamily,
    /// Exactly one member lies in L^{∞,w}, w = e^{αt}: α + λ > 1.
    pub bounded_unique: bool,
}

pub fn exp_kernel_family(lambda: f64, alpha: Option<f64>) -> ExpKernelSolutions {
    let alpha = alpha.unwrap_or(0.0);
    let mu = alpha + lambda;
    let family = if mu <= 0.0 {
        SolutionFamily::NoSolution
    } else if mu == 1.0 {
        SolutionFamily::Resonant { alpha }
    } else {
        SolutionFamily::Exponential { amplitude: mu / (mu - 1.0), alpha, free_rate: 1.0 - lambda }
    };
    ExpKernelSolutions { lambda, alpha, family, bounded_unique: mu > 1.0 }
}

fn fmt_num(x: f64) -> String {
    let r = (x * 1e9).round() / 1e9;
    if r == r.trunc() && r.abs() < 1e15 { format!("{}", r as i64) } else { format!("{r}") }
}

fn fmt_exp(rate: f64) -> String {
    if rate == 1.0 {
        "e^{t}".into()
    } else if rate == -1.0 {
        "e^{−t}".into()
    } else if rate < 0.0 {
        format!("e^{{−{}t}}", fmt_num(-rate))
    } else {
        format!("e^{{{}t}}", fmt_num(rate))
    }
}

impl ExpKernelSolutions {
    /// The member with free constant c at time t.
    pub fn member(&self, c: f64, t: f64) -> Option<f64> {
        match self.family {
            SolutionFamily::NoSolution => None,
            SolutionFamily::Exponential { amplitude, alpha, free_rate } => Some(amplitude * (alpha * t).exp() + c * (free_rate * t).exp()),
            SolutionFamily::Resonant { alpha } => Some((t + c) * (alpha * t).exp()),
        }
    }

    /// Human-readable family, e.g. "c·e^{−t} + 2".
    pub fn describe(&self) -> String {
        match self.family {
            SolutionFamily::NoSolution => "no solution".into(),
            SolutionFamily::Resonant { alpha } => {
                if alpha == 0.0 { "t + c".into() } else { format!("(t + c)·{}", fmt_exp(alpha)) }
            }
            SolutionFamily::Exponential { amplitude, alpha, free_rate } => {
                let free = if free_rate == 0.0 { "c".to_string() } else { format!("c·{}", fmt_exp(free_rate)) };
                let part = if alpha == 0.0 { fmt_num(amplitude.abs()) } else { format!("{}·{}", fmt_num(amplitude.abs()), fmt_exp(alpha)) };
                let sign = if amplitude < 0.0 { "−" } else { "+" };
                format!("{free} {sign} {part}")
            }
        }
    }
}

/// Which moment inequality drives the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// Lipschitz σ, G^{C,l} kernels.
    Lipschitz,
    /// Power growth of order γ, G^{D,l} kernels.
    Growth,
}

/// The deterministic problem whose solution bounds
/// ‖Y(t,x)‖_{Lᵖ} / w(t,x)^{1/(p∨1)} (for p < 1 the bound is on E|Y|ᵖ / w).
pub fn moment_problem(model: &ModelSpec, kind: BoundKind) -> Result<VolterraProblem> {
    model.validate()?;
    match kind {
        BoundKind::Lipschitz => lipschitz_problem(model),
        BoundKind::Growth => growth_problem(model),
    }
}

/// Lipschitz inequality when σ declares a Lipschitz constant, growth otherwise.
pub fn default_bound_kind(model: &ModelSpec) -> Result<BoundKind> {
    if model.sigma.lipschitz.is_some() {
        Ok(BoundKind::Lipschitz)
    } else if model.sigma.growth.is_some() {
        Ok(BoundKind::Growth)
    } else {
        invalid("σ declares neither a Lipschitz constant nor a growth bound")
    }
}

fn horizon_of(model: &ModelSpec) -> f64 {
    match model.interval {
        Interval::Finite { start, end } => end - start,
        _ => f64::INFINITY,
    }
}

fn y0_force(model: &ModelSpec, outer_p: f64) -> Force {
    let (k, rate) = (model.y0.value.abs(), model.y0.rate);
    if model.p < 1.0 {
        Force::exponential(k.powf(model.p), model.p * rate - model.eta)
    } else {
        Force::exponential(k, rate - model.eta / outer_p)
    }
}

fn lipschitz_problem(model: &ModelSpec) -> Result<VolterraProblem> {
    let p = model.p;
    let cl = model.sigma.lipschitz.ok_or_else(|| Error::InvalidParameter("σ has no Lipschitz constant".into()))?;
    let s0 = model.sigma.at_zero.abs();
    if model.eta != 0.0 && s0 != 0.0 {
        return Err(Error::Unsupported("weighted moment bounds need σ(0) = 0".into()));
    }
    let chars = &model.chars;
    let msup = chars.modulation_sup();
    let zeta = msup * jump_moment(&chars.jumps, p, p);
    let g = &model.kernel;
    let mut terms = Vec::new();
    if p >= 1.0 {
        let bdg = bdg_constant(p)?;
        let c1 = bdg.powf(p) * (zeta + chars.c);
        let inner = |k: KernelTerm| VolterraTerm { kernel: k, outer: 1.0, power: p, shift: s0, scale: cl, inner_exp: p };
        if c1 > 0.0 {
            terms.push(inner(KernelTerm::new(g.clone(), Transform::Power(p), c1, model.eta)));
        }
        let b1 = b1_sup(chars).ok_or_else(|| Error::InvalidParameter("mean drift b₁ is undefined".into()))?;
        if b1 != 0.0 {
            let gmass = KernelTerm::plain(g.clone()).mass(0.0, horizon_of(model));
            if !gmass.is_finite() {
                return Err(Error::NoContraction { mass: f64::INFINITY });
            }
            let c2 = b1.abs().powf(p) * gmass.powf(p - 1.0);
            terms.push(inner(KernelTerm::new(g.clone(), Transform::Power(1.0), c2, model.eta)));
        }
        Ok(VolterraProblem { terms, force: y0_force(model, p), interval: model.interval })
    } else {
        if zeta > 0.0 {
            terms.push(VolterraTerm {
                kernel: KernelTerm::new(g.clone(), Transform::Power(p), zeta, model.eta),
                outer: 1.0,
                power: 1.0,
                shift: s0.powf(p),
                scale: cl.powf(p),
                inner_exp: 1.0,
            });
        }
        Ok(VolterraProblem { terms, force: y0_force(model, 1.0), interval: model.interval })
    }
}

fn growth_problem(model: &ModelSpec) -> Result<VolterraProblem> {
    let p = model.p;
    let growth = model.sigma.growth.ok_or_else(|| Error::InvalidParameter("σ has no growth bound".into()))?;
    if model.eta != 0.0 {
        return Err(Error::Unsupported("growth-type moment bounds are implemented for w ≡ 1".into()));
    }
    let (gamma, c2) = (growth.gamma, growth.constant);
    let q = model.q.unwrap_or(p);
    let chars = &model.chars;
    let msup = chars.modulation_sup();
    let has_c = chars.c > 0.0;
    let s0 = model.sigma.at_zero.abs();
    let g = &model.kernel;
    let horizon = horizon_of(model);
    let mut terms = Vec::new();
    let mut constant = y0_force(model, p.max(1.0));
    let mut base = 0.0;
    if p >= 1.0 {
        let rho = (q.max(if has_c { 2.0 } else { 0.0 }) * gamma / p).min(1.0);
        let bdg = bdg_constant(p)?;
        let mut kernels_d = Vec::new();
        let b1 = b1_sup(chars).ok_or_else(|| Error::InvalidParameter("mean drift b₁ is undefined".into()))?;
        if b1 != 0.0 {
            let gmass = KernelTerm::plain(g.clone()).mass(0.0, horizon);
            kernels_d.push(KernelTerm::new(g.clone(), Transform::Power(1.0), 2f64.powf(p - 1.0) * b1.abs().powf(p) * gmass.powf(p - 1.0), 0.0));
        }
        if has_c {
            kernels_d.push(KernelTerm::new(g.clone(), Transform::Power(2.0), 2.0 * bdg * bdg * chars.c, 0.0));
        }
        if !matches!(chars.jumps, JumpMeasure::None) {
            let j = chars.jumps.clone();
            kernels_d.push(KernelTerm::new(g.clone(), Transform::JumpLarge { jumps: j.clone(), exponent: p }, 2f64.powf(p - 1.0) * bdg.powf(p) * msup, 0.0));
            kernels_d.push(KernelTerm::new(g.clone(), Transform::JumpSmall { jumps: j, exponent: q }, 2f64.powf(q - 1.0) * bdg.powf(q) * msup, 0.0));
        }
        base += 2.0 * (1.0 + s0 + c2);
        for k in kernels_d {
            let m = k.mass(0.0, horizon);
            base += (s0 + c2) * m.powf(1.0 / p);
            terms.push(VolterraTerm { kernel: k, outer: c2, power: p, shift: 0.0, scale: 1.0, inner_exp: p * rho });
        }
    } else {
        let dc = model.drift_conv;
        let (alpha, beta) = dc.map_or((0.0, 0.0), |d| (d.alpha, d.beta));
        let rho = ([q, if has_c { 2.0 } else { 0.0 }, alpha, beta].iter().cloned().fold(0.0, f64::max) * gamma / p).min(1.0);
        let mut kernels_d: Vec<(KernelTerm, f64)> = Vec::new();
        match dc {
            Some(d) if d.f0.max(d.f1) > 0.0 => {
                let coef = 2f64.powf(d.alpha.max(d.beta).max(1.0) - 1.0) * d.f0.max(d.f1);
                kernels_d.push((KernelTerm::new(g.clone(), Transform::Truncated { large: d.alpha, small: d.beta }, coef, 0.0), d.alpha.max(d.beta)));
            }
            Some(_) => {}
            None if chars.is_symmetric() => {}
            None => return invalid("p < 1 growth bounds need drift-convergence exponents unless the basis is symmetric"),
        }
        if has_c {
            kernels_d.push((KernelTerm::new(g.clone(), Transform::Power(2.0), 2f64.powf(p + 1.0) * chars.c, 0.0), 2.0));
        }
        if !matches!(chars.jumps, JumpMeasure::None) {
            let coef = 2f64.powf(p) * 2f64.powf(q.max(1.0) - 1.0) * msup;
            kernels_d.push((KernelTerm::new(g.clone(), Transform::JumpTruncated { jumps: chars.jumps.clone(), large: p, small: q }, coef, 0.0), 1.0));
        }
        base += 2f64.powf(p + 1.0) + 1.0;
        for (k, r) in kernels_d {
            let m = k.mass(0.0, horizon);
            base += (truncated_power(s0, r, 0.0) + c2.powf(r)) * m;
            terms.push(VolterraTerm { kernel: k, outer: c2.powf(r), power: 1.0, shift: 0.0, scale: 1.0, inner_exp: rho });
        }
    }
    if !base.is_finite() {
        return Err(Error::NoContraction { mass: f64::INFINITY });
    }
    constant.constant += base;
    Ok(VolterraProblem { terms, force: constant, interval: model.interval })
}

/// Picard solution of the moment-bound problem on `grid`.
pub fn moment_bound(model: &ModelSpec, grid: &TimeGrid, tol: f64) -> Result<Field> {
    let kind = default_bound_kind(model)?;
    let problem = moment_problem(model, kind)?;
    let mut sol = picard_solve(&problem, grid, tol, 10_000)?;
    sol.field.eta = model.eta;
    Ok(sol.field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_problem(lambda: f64, interval: Interval) -> VolterraProblem {
        VolterraProblem {
            terms: vec![VolterraTerm::linear(KernelTerm::plain(Kernel::exponential(lambda).unwrap()))],
            force: Force::constant(1.0),
            interval,
        }
    }

    #[test]
    fn partition_examples() {
        let p = find_contraction_partition(&exp_problem(2.0, Interval::Past { end: 0.0 })).unwrap();
        assert_eq!(p.intervals(), 1);
        assert!((p.rho - 0.5).abs() < 1e-12);
        match find_contraction_partition(&exp_problem(0.5, Interval::Past { end: 0.0 })) {
            Err(Error::NoContraction { mass }) => assert!((mass - 2.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let heat = VolterraProblem {
            terms: vec![VolterraTerm::linear(KernelTerm::plain(Kernel::heat(1.0, 1).unwrap()))],
            force: Force::constant(1.0),
            interval: Interval::Finite { start: 0.0, end: 1.0 },
        };
        let p = find_contraction_partition(&heat).unwrap();
        assert!(p.rho < 1.0);
        let empty = VolterraProblem { terms: vec![], ..heat };
        assert_eq!(find_contraction_partition(&empty).unwrap().rho, 0.0);
    }

    #[test]
    fn exponential_on_the_line_converges_to_two() {
        let pr = exp_problem(2.0, Interval::Past { end: 0.0 });
        let grid = pr.grid(0.01, 1e-8).unwrap();
        let sol = picard_solve(&pr, &grid, 1e-8, 50).unwrap();
        let err = sol.field.values.iter().map(|v| (v - 2.0).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        assert!(sol.trace.len() < 50);
    }

    #[test]
    fn zero_force_gives_zero() {
        let mut pr = exp_problem(2.0, Interval::Finite { start: 0.0, end: 1.0 });
        pr.force = Force::constant(0.0);
        let grid = TimeGrid::new(0.0, 1.0, 0.05).unwrap();
        let sol = picard_solve(&pr, &grid, 1e-12, 10).unwrap();
        assert!(sol.field.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fixed_point_examples() {
        assert!((stability_fixed_point(0.0, 1.0, 0.5).unwrap() - 1.0).abs() < 1e-12);
        let a = stability_fixed_point(1.0, 1.0, 0.5).unwrap();
        assert!((a - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-10);
        assert_eq!(stability_fixed_point(3.0, 0.0, 0.4).unwrap(), 3.0);
        assert!(stability_fixed_point(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn exponential_family_descriptions() {
        assert_eq!(exp_kernel_family(-0.5, None).family, SolutionFamily::NoSolution);
        let one = exp_kernel_family(1.0, None);
        assert_eq!(one.describe(), "t + c");
        assert!(!one.bounded_unique);
        let two = exp_kernel_family(2.0, None);
        assert_eq!(two.describe(), "c·e^{−t} + 2");
        assert!(two.bounded_unique);
        let half = exp_kernel_family(0.5, None);
        assert_eq!(half.describe(), "c·e^{0.5t} − 1");
        assert!(!half.bounded_unique);
    }

    #[test]
    fn binomial_tail_geometric_case() {
        // k = 1: Σ_{m>n} ρ^m = ρ^{n+1}/(1−ρ)
        let v = binomial_tail(3, 1, 0.5);
        assert!((v - 0.0625 / 0.5).abs() < 1e-14);
    }

    #[test]
    fn field_csv_roundtrip() {
        let f = Field { times: vec![0.0, 0.5], points: vec![vec![-1.0], vec![1.0]], values: vec![1.0, 2.0, 3.0, 4.0], eta: 0.0 };
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let g = Field::read_csv(buf.as_slice(), 0.0).unwrap();
        assert_eq!(f, g);
    }
}
