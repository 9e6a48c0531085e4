//! Convolution-form Volterra kernels g(t, x) and their Lᵖ functionals.
//!
//! The heat family g_a(t,x) = (4πt)^{−d/2} exp(−|x|²/(4t) − at) has every
//! spatial integral in closed form, leaving a one-dimensional time integral
//! whose only singular point is t = 0. With p(d) = (1−p)d/2,
//!
//! ∫ g_a(t,x)^p dx = (4π)^{p(d)} p^{−d/2} t^{p(d)} e^{−apt},
//!
//! so the space–time integral is finite near t = 0 iff p < 1 + 2/d.

use std::io::Read;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{
    integrate, integrate_algebraic, integrate_algebraic_tail, integrate_from, Quad, QuadConfig,
};
use crate::special::{erf, erfc, gamma, gamma_p, gamma_q, unit_sphere_area};

/// Radially symmetric kernel sampled on a (t, |x|) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedKernel {
    pub d: usize,
    times: Vec<f64>,
    radii: Vec<f64>,
    // row-major: values[i * radii.len() + j] = g(times[i], radii[j])
    values: Vec<f64>,
}

impl TabulatedKernel {
    pub fn new(d: usize, times: Vec<f64>, radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || radii.is_empty() || values.len() != times.len() * radii.len() {
            return invalid("tabulated kernel needs a full (t, |x|) grid with at least two times");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || radii.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("tabulated kernel grid must be strictly increasing");
        }
        if times[0] < 0.0 || radii[0] < 0.0 {
            return invalid("tabulated kernel grid must start at t ≥ 0 and |x| ≥ 0");
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("tabulated kernel values must be finite and non-negative");
        }
        if d == 0 && radii.len() != 1 {
            return invalid("a purely temporal tabulated kernel takes a single |x| column");
        }
        Ok(TabulatedKernel { d, times, radii, values })
    }

    /// Read rows `t, |x|, value` (header optional) into a grid.
    pub fn from_csv<R: Read>(d: usize, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 3 {
                return invalid(format!("kernel table line {}: expected t, |x|, value", line + 1));
            }
            let parsed: std::result::Result<Vec<f64>, _> = (0..3).map(|k| rec[k].parse::<f64>()).collect();
            match parsed {
                Ok(v) => rows.push((v[0], v[1], v[2])),
                Err(_) if line == 0 => continue,
                Err(_) => return invalid(format!("kernel table line {}: non-numeric entry", line + 1)),
            }
        }
        let mut times: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut radii: Vec<f64> = rows.iter().map(|r| r.1).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        radii.dedup();
        let mut values = vec![f64::NAN; times.len() * radii.len()];
        for (t, r, v) in rows {
            let i = times.partition_point(|&x| x < t);
            let j = radii.partition_point(|&x| x < r);
            values[i * radii.len() + j] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return invalid("kernel table does not cover a full (t, |x|) grid");
        }
        TabulatedKernel::new(d, times, radii, values)
    }

    pub fn from_csv_path(d: usize, path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_csv(d, f)
    }

    /// Bilinear interpolation; zero outside the table.
    pub fn value(&self, t: f64, r: f64) -> f64 {
        let (nt, nr) = (self.times.len(), self.radii.len());
        if t < self.times[0] || t > self.times[nt - 1] || r > self.radii[nr - 1] {
            return 0.0;
        }
        let r = r.max(self.radii[0]);
        let i = self.times.partition_point(|&x| x <= t).clamp(1, nt - 1);
        let ft = (t - self.times[i - 1]) / (self.times[i] - self.times[i - 1]);
        let row = |k: usize| -> f64 {
            if nr == 1 {
                return self.values[k];
            }
            let j = self.radii.partition_point(|&x| x <= r).clamp(1, nr - 1);
            let fr = (r - self.radii[j - 1]) / (self.radii[j] - self.radii[j - 1]);
            let base = k * nr;
            self.values[base + j - 1] * (1.0 - fr) + self.values[base + j] * fr
        };
        row(i - 1) * (1.0 - ft) + row(i) * ft
    }

    pub fn time_range(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }

    pub fn max_radius(&self) -> f64 {
        self.radii[self.radii.len() - 1]
    }

    fn time_nodes(&self) -> &[f64] {
        &self.times
    }

    fn radius_nodes(&self) -> &[f64] {
        &self.radii
    }
}

/// Kernel family; all are of convolution form g(t − s, x − y).
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// Damped heat kernel in d space dimensions.
    Heat { a: f64, d: usize },
    /// e^{−λt} for t ≥ 0, no spatial variable.
    Exponential { lambda: f64 },
    Tabulated(TabulatedKernel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    Quadrature,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::ClosedForm => "closed-form",
            Method::Quadrature => "quadrature",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelNorm {
    pub value: f64,
    pub method: Method,
    pub estimated_error: f64,
}

impl KernelNorm {
    fn exact(value: f64) -> Self {
        KernelNorm { value, method: Method::ClosedForm, estimated_error: 8.0 * f64::EPSILON * value.abs() }
    }

    fn infinite() -> Self {
        KernelNorm { value: f64::INFINITY, method: Method::ClosedForm, estimated_error: 0.0 }
    }

    fn quad(q: Quad) -> Self {
        KernelNorm { value: q.value, method: Method::Quadrature, estimated_error: q.error }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// Pointwise transform applied to g before integrating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    /// g^p
    Power(f64),
    /// |g|^large_small: exponent `large` where g > 1, `small` where g ≤ 1.
    Truncated { large: f64, small: f64 },
}

impl Exponent {
    pub fn apply(&self, g: f64) -> f64 {
        match *self {
            Exponent::Power(p) => g.powf(p),
            Exponent::Truncated { large, small } => {
                if g > 1.0 { g.powf(large) } else { g.powf(small) }
            }
        }
    }

    fn large(&self) -> f64 {
        match *self {
            Exponent::Power(p) => p,
            Exponent::Truncated { large, .. } => large,
        }
    }

    fn small(&self) -> f64 {
        match *self {
            Exponent::Power(p) => p,
            Exponent::Truncated { small, .. } => small,
        }
    }

    fn simplify(self) -> Exponent {
        match self {
            Exponent::Truncated { large, small } if large == small => Exponent::Power(large),
            e => e,
        }
    }
}

fn quad_cfg() -> QuadConfig {
    QuadConfig { abs_tol: 1e-15, rel_tol: 1e-12, max_intervals: 4000 }
}

impl Kernel {
    pub fn heat(a: f64, d: usize) -> Result<Self> {
        if d == 0 || !a.is_finite() {
            return invalid("heat kernel needs d ≥ 1 and a finite damping rate");
        }
        Ok(Kernel::Heat { a, d })
    }

    pub fn exponential(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return invalid("exponential kernel needs a finite rate");
        }
        Ok(Kernel::Exponential { lambda })
    }

    /// Spatial dimension (0 for the purely temporal exponential kernel).
    pub fn dim(&self) -> usize {
        match self {
            Kernel::Heat { d, .. } => *d,
            Kernel::Exponential { .. } => 0,
            Kernel::Tabulated(t) => t.d,
        }
    }

    /// 1 + 2/d, the local-integrability threshold (∞ when d = 0).
    pub fn critical_exponent(&self) -> f64 {
        let d = self.dim();
        if d == 0 { f64::INFINITY } else { 1.0 + 2.0 / d as f64 }
    }

    /// ∫_{ℝᵈ} g(t,x)^e dx.
    pub fn spatial_power(&self, t: f64, e: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            Kernel::Heat { a, d } => {
                let beta = (1.0 - e) * d as f64 / 2.0;
                (4.0 * std::f64::consts::PI).powf(beta) * e.powf(-(d as f64) / 2.0) * t.powf(beta) * (-a * e * t).exp()
            }
            Kernel::Exponential { lambda } => (-lambda * e * t).exp(),
            Kernel::Tabulated(_) => self.spatial_transform(t, &|g| g.powf(e)),
        }
    }

    /// ∫_{ℝᵈ} f(g(t,x)) dx for a transform with f(0) = 0.
    pub fn spatial_transform(&self, t: f64, f: &dyn Fn(f64) -> f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            Kernel::Heat { a, d } => {
                // r² = 4tu: dx = (π^{d/2}/Γ(d/2)) (4t)^{d/2} u^{d/2−1} du
                let df = d as f64;
                let peak = (4.0 * std::f64::consts::PI * t).powf(-df / 2.0) * (-a * t).exp();
                let c = std::f64::consts::PI.powf(df / 2.0) / gamma(df / 2.0) * (4.0 * t).powf(df / 2.0);
                let beta = df / 2.0 - 1.0;
                let q = if beta > -1.0 && beta != 0.0 {
                    integrate_algebraic(|u| f(peak * (-u).exp()), beta, f64::INFINITY, quad_cfg())
                } else {
                    crate::quadrature::integrate_half_line(|u| f(peak * (-u).exp()), quad_cfg())
                };
                c * q.value
            }
            Kernel::Exponential { lambda } => f((-lambda * t).exp()),
            Kernel::Tabulated(ref tab) => {
                if tab.d == 0 {
                    return f(tab.value(t, 0.0));
                }
                let area = unit_sphere_area(tab.d);
                let r = tab.radius_nodes();
                let mut acc = 0.0;
                let cfg = QuadConfig { abs_tol: 1e-14, rel_tol: 1e-10, max_intervals: 200 };
                if r[0] > 0.0 {
                    acc += integrate(|x| f(tab.value(t, x)) * x.powi(tab.d as i32 - 1), 0.0, r[0], cfg).value;
                }
                for w in r.windows(2) {
                    acc += integrate(|x| f(tab.value(t, x)) * x.powi(tab.d as i32 - 1), w[0], w[1], cfg).value;
                }
                area * acc
            }
        }
    }

    /// ∫_{box} g(t,x)^e dx for an axis-aligned box; bounds may be infinite.
    pub fn power_over_box(&self, t: f64, e: f64, lo: &[f64], hi: &[f64]) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        match *self {
            Kernel::Heat { a, d } => {
                if lo.len() != d {
                    return invalid("box dimension differs from kernel dimension");
                }
                let df = d as f64;
                let peak = (4.0 * std::f64::consts::PI * t).powf(-df / 2.0) * (-a * t).exp();
                let c = e / (4.0 * t);
                let sc = c.sqrt();
                let mut prod = peak.powf(e);
                for k in 0..d {
                    prod *= 0.5 * (std::f64::consts::PI / c).sqrt() * gauss_window(lo[k] * sc, hi[k] * sc);
                }
                Ok(prod)
            }
            Kernel::Exponential { lambda } => Ok((-lambda * e * t).exp()),
            Kernel::Tabulated(_) => Err(Error::Unsupported("box integrals of tabulated kernels".into())),
        }
    }
}

// erf(h) − erf(l), computed through erfc in the tails to avoid cancellation.
pub(crate) fn gauss_window(l: f64, h: f64) -> f64 {
    if h <= l {
        return 0.0;
    }
    if l >= 0.0 {
        erfc(l) - erfc(h)
    } else if h <= 0.0 {
        erfc(-h) - erfc(-l)
    } else {
        erf(h) - erf(l)
    }
}

/// g(t, x); zero for t ≤ 0.
pub fn evaluate(k: &Kernel, t: f64, x: &[f64]) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    match k {
        Kernel::Heat { a, d } => {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            (-r2 / (4.0 * t) - a * t).exp() / (4.0 * std::f64::consts::PI * t).powf(*d as f64 / 2.0)
        }
        Kernel::Exponential { lambda } => (-lambda * t).exp(),
        Kernel::Tabulated(tab) => {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            tab.value(t, r)
        }
    }
}

fn check_exponent(e: Exponent) -> Result<()> {
    if !(e.large() > 0.0) || !(e.small() > 0.0) {
        return invalid("kernel norm exponents must be positive");
    }
    Ok(())
}

fn check_horizon(h: f64) -> Result<()> {
    if !(h >= 0.0) {
        return invalid("horizon must be non-negative");
    }
    Ok(())
}

/// ∫₀^H ∫ g^p: closed form for the heat and exponential families.
pub fn lp_norm(k: &Kernel, p: f64, horizon: f64) -> Result<KernelNorm> {
    weighted_functional(k, Exponent::Power(p), 0.0, horizon)
}

/// ∫₀^H ∫ |g|^p_q with exponent p where g > 1 and q where g ≤ 1.
pub fn truncated_lp_norm(k: &Kernel, p: f64, q: f64, horizon: f64) -> Result<KernelNorm> {
    weighted_functional(k, Exponent::Truncated { large: p, small: q }, 0.0, horizon)
}

/// ∫₀^∞ ∫ g_a^p e^{−ηt}, the heat-kernel integral under the weight e^{ηt}.
pub fn weighted_lp_norm(k: &Kernel, p: f64, eta: f64) -> Result<KernelNorm> {
    if !matches!(k, Kernel::Heat { .. }) {
        return Err(Error::Unsupported("weighted norms are defined for the heat family only".into()));
    }
    weighted_functional(k, Exponent::Power(p), eta, f64::INFINITY)
}

/// Whether ∫₀^H ∫ e(g) e^{−ηt} is finite, decided from the parameters alone.
/// `None` for tabulated kernels.
pub fn classify(k: &Kernel, e: Exponent, eta: f64, horizon: f64) -> Option<bool> {
    let e = e.simplify();
    match *k {
        Kernel::Heat { a, d } => {
            let crit = 1.0 + 2.0 / d as f64;
            if e.large() >= crit {
                return Some(false);
            }
            if horizon.is_finite() {
                return Some(true);
            }
            Some(match e {
                Exponent::Power(p) => a * p + eta > 0.0,
                Exponent::Truncated { large, small } => {
                    if a < 0.0 {
                        a * large + eta > 0.0
                    } else {
                        a * small + eta > 0.0 || (a * small + eta == 0.0 && small > crit)
                    }
                }
            })
        }
        Kernel::Exponential { lambda } => {
            if horizon.is_finite() {
                return Some(true);
            }
            let ex = if lambda >= 0.0 { e.small() } else { e.large() };
            Some(lambda * ex + eta > 0.0)
        }
        Kernel::Tabulated(_) => None,
    }
}

/// ∫₀^H ∫ e(g(t,x)) e^{−ηt} dx dt for any of the kernel families.
pub fn weighted_functional(k: &Kernel, e: Exponent, eta: f64, horizon: f64) -> Result<KernelNorm> {
    check_exponent(e)?;
    check_horizon(horizon)?;
    let e = e.simplify();
    if horizon == 0.0 {
        return Ok(KernelNorm::exact(0.0));
    }
    if classify(k, e, eta, horizon) == Some(false) {
        return Ok(KernelNorm::infinite());
    }
    match (k, e) {
        (Kernel::Heat { a, d }, Exponent::Power(p)) => {
            let beta = (1.0 - p) * *d as f64 / 2.0;
            let c = (4.0 * std::f64::consts::PI).powf(beta) * p.powf(-(*d as f64) / 2.0);
            let rate = a * p + eta;
            if rate > 0.0 {
                let full = c * rate.powf(-1.0 - beta) * gamma(1.0 + beta);
                let frac = if horizon.is_infinite() { 1.0 } else { gamma_p(1.0 + beta, rate * horizon) };
                Ok(KernelNorm::exact(full * frac))
            } else if rate == 0.0 {
                Ok(KernelNorm::exact(c * horizon.powf(1.0 + beta) / (1.0 + beta)))
            } else {
                Ok(KernelNorm::quad(heat_quadrature(k, e, eta, horizon)))
            }
        }
        (Kernel::Heat { .. }, _) => Ok(KernelNorm::quad(heat_quadrature(k, e, eta, horizon))),
        (Kernel::Exponential { lambda }, _) => {
            let ex = if *lambda >= 0.0 { e.small() } else { e.large() };
            let rate = lambda * ex + eta;
            let v = if rate == 0.0 {
                horizon
            } else if horizon.is_infinite() {
                1.0 / rate
            } else {
                -(-rate * horizon).exp_m1() / rate
            };
            Ok(KernelNorm::exact(v))
        }
        (Kernel::Tabulated(tab), _) => Ok(KernelNorm::quad(tabulated_quadrature(tab, e, eta, horizon))),
    }
}

/// Quadrature-only evaluation of ∫₀^H ∫ g^p, independent of the Γ-function
/// closed forms; used to cross-check them.
pub fn lp_norm_quadrature(k: &Kernel, p: f64, horizon: f64) -> Result<KernelNorm> {
    check_exponent(Exponent::Power(p))?;
    check_horizon(horizon)?;
    if classify(k, Exponent::Power(p), 0.0, horizon) == Some(false) {
        return Ok(KernelNorm::infinite());
    }
    Ok(match k {
        Kernel::Heat { .. } => KernelNorm::quad(heat_quadrature(k, Exponent::Power(p), 0.0, horizon)),
        Kernel::Exponential { lambda } => {
            let f = |t: f64| (-lambda * p * t).exp();
            let q = if horizon.is_infinite() {
                crate::quadrature::integrate_half_line(f, quad_cfg())
            } else {
                integrate(f, 0.0, horizon, quad_cfg())
            };
            KernelNorm::quad(q)
        }
        Kernel::Tabulated(tab) => KernelNorm::quad(tabulated_quadrature(tab, Exponent::Power(p), 0.0, horizon)),
    })
}

// Spatial integral of e(g_a(t,·)): the g = 1 level set is the sphere
// |x|² = 4t·ln A(t) with A(t) = (4πt)^{−d/2}e^{−at} the peak value; inside it
// the Gaussian power integrates to a regularized lower incomplete gamma.
fn heat_spatial(a: f64, d: usize, e: Exponent, t: f64) -> f64 {
    let k = Kernel::Heat { a, d };
    match e {
        Exponent::Power(p) => k.spatial_power(t, p),
        Exponent::Truncated { large, small } => {
            let df = d as f64;
            let log_peak = -df / 2.0 * (4.0 * std::f64::consts::PI * t).ln() - a * t;
            if log_peak <= 0.0 {
                return k.spatial_power(t, small);
            }
            k.spatial_power(t, large) * gamma_p(df / 2.0, large * log_peak)
                + k.spatial_power(t, small) * gamma_q(df / 2.0, small * log_peak)
        }
    }
}

fn heat_quadrature(k: &Kernel, e: Exponent, eta: f64, horizon: f64) -> Quad {
    let (a, d) = match *k {
        Kernel::Heat { a, d } => (a, d),
        _ => unreachable!(),
    };
    let df = d as f64;
    let f = |t: f64| heat_spatial(a, d, e, t) * (-eta * t).exp();
    // Near t = 0 the large-value exponent governs: ∫g^{large} ~ t^{β₀}.
    let beta0 = (1.0 - e.large()) * df / 2.0;
    let split = horizon.min(1.0);
    let head = integrate_algebraic(|t| f(t) / t.powf(beta0), beta0, split, quad_cfg());
    if horizon <= 1.0 {
        return head;
    }
    let tail = if horizon.is_finite() {
        integrate(f, 1.0, horizon, quad_cfg())
    } else {
        let small = e.small();
        let beta_inf = (1.0 - small) * df / 2.0;
        if a * small + eta == 0.0 && beta_inf < -1.0 {
            integrate_algebraic_tail(|t| f(t) / t.powf(beta_inf), beta_inf, 1.0, quad_cfg())
        } else {
            integrate_from(f, 1.0, quad_cfg())
        }
    };
    head.add(tail)
}

fn tabulated_quadrature(tab: &TabulatedKernel, e: Exponent, eta: f64, horizon: f64) -> Quad {
    let k = Kernel::Tabulated(tab.clone());
    let cfg = QuadConfig { abs_tol: 1e-13, rel_tol: 1e-9, max_intervals: 400 };
    let mut total = Quad::zero();
    let nodes = tab.time_nodes();
    for w in nodes.windows(2) {
        let (t0, t1) = (w[0], w[1].min(horizon));
        if t1 <= t0 {
            break;
        }
        let q = integrate(|t| k.spatial_transform(t, &|g| e.apply(g)) * (-eta * t).exp(), t0, t1, cfg);
        total = total.add(q);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_examples() {
        let h = Kernel::heat(0.0, 1).unwrap();
        assert!((evaluate(&h, 1.0, &[0.0]) - 0.28209479177387814).abs() < 1e-15);
        assert_eq!(evaluate(&h, -1.0, &[0.0]), 0.0);
        let e = Kernel::exponential(1.0).unwrap();
        assert!((evaluate(&e, 2.0, &[]) - (-2.0f64).exp()).abs() < 1e-16);
        assert_eq!(evaluate(&e, -1.0, &[]), 0.0);
    }

    #[test]
    fn lp_norm_examples() {
        let n = lp_norm(&Kernel::heat(2.0, 1).unwrap(), 1.0, f64::INFINITY).unwrap();
        assert!((n.value - 0.5).abs() < 1e-14);
        assert_eq!(n.method, Method::ClosedForm);
        let n = lp_norm(&Kernel::heat(1.0, 1).unwrap(), 2.0, f64::INFINITY).unwrap();
        assert!((n.value - 0.25).abs() < 1e-14);
        let n = lp_norm(&Kernel::heat(0.0, 1).unwrap(), 2.0, 2.0 * std::f64::consts::PI).unwrap();
        assert!((n.value - 1.0).abs() < 1e-14);
        let n = lp_norm(&Kernel::exponential(-1.0).unwrap(), 1.0, f64::INFINITY).unwrap();
        assert!(n.value.is_infinite());
    }

    #[test]
    fn heat_infinite_horizon_needs_damping() {
        for a in [0.0, -0.5] {
            assert!(lp_norm(&Kernel::heat(a, 2).unwrap(), 1.0, f64::INFINITY).unwrap().value.is_infinite());
        }
        // finite horizon with negative damping falls back to quadrature
        let n = lp_norm(&Kernel::heat(-0.5, 1).unwrap(), 1.0, 2.0).unwrap();
        assert_eq!(n.method, Method::Quadrature);
        assert!((n.value - 2.0 * ((1.0f64).exp() - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn truncated_examples() {
        let n = truncated_lp_norm(&Kernel::heat(0.0, 3).unwrap(), 1.0, 2.0, f64::INFINITY).unwrap();
        assert!(n.value.is_finite() && n.value > 0.0);
        let n = truncated_lp_norm(&Kernel::heat(0.0, 1).unwrap(), 1.0, 2.0, f64::INFINITY).unwrap();
        assert!(n.value.is_infinite());
    }

    #[test]
    fn truncated_equal_exponents_match_plain_norm() {
        let k = Kernel::heat(1.3, 2).unwrap();
        let a = truncated_lp_norm(&k, 1.4, 1.4, 3.0).unwrap();
        let b = lp_norm(&k, 1.4, 3.0).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn weighted_examples() {
        let k = Kernel::heat(2.0, 1).unwrap();
        assert!((weighted_lp_norm(&k, 1.0, 0.0).unwrap().value - 0.5).abs() < 1e-14);
        let k = Kernel::heat(1.0, 1).unwrap();
        assert!((weighted_lp_norm(&k, 1.0, 1.0).unwrap().value - 0.5).abs() < 1e-14);
        assert!(weighted_lp_norm(&k, 1.0, -1.0).unwrap().value.is_infinite());
        assert!(weighted_lp_norm(&Kernel::exponential(1.0).unwrap(), 1.0, 0.0).is_err());
    }

    #[test]
    fn box_integral_sums_to_spatial_power() {
        let k = Kernel::heat(0.7, 2).unwrap();
        let inf = f64::INFINITY;
        let whole = k.power_over_box(0.3, 1.5, &[-inf, -inf], &[inf, inf]).unwrap();
        assert!((whole / k.spatial_power(0.3, 1.5) - 1.0).abs() < 1e-13);
        let left = k.power_over_box(0.3, 1.5, &[-inf, -inf], &[0.2, inf]).unwrap();
        let right = k.power_over_box(0.3, 1.5, &[0.2, -inf], &[inf, inf]).unwrap();
        assert!(((left + right) / whole - 1.0).abs() < 1e-13);
    }

    #[test]
    fn spatial_transform_matches_power_closed_form() {
        for d in 1..=3 {
            let k = Kernel::heat(0.4, d).unwrap();
            let a = k.spatial_transform(0.7, &|g| g.powf(1.3));
            let b = k.spatial_power(0.7, 1.3);
            assert!((a / b - 1.0).abs() < 1e-10, "d={d}: {a} vs {b}");
        }
    }

    #[test]
    fn tabulated_kernel_roundtrip() {
        let csv = "t,r,value\n0,0,1\n0,1,0\n1,0,1\n1,1,0\n";
        let tab = TabulatedKernel::from_csv(1, csv.as_bytes()).unwrap();
        assert!((tab.value(0.5, 0.5) - 0.5).abs() < 1e-15);
        let k = Kernel::Tabulated(tab);
        // ∫₀¹ ∫_{−1}^{1} (1 − |x|) dx dt = 1
        let n = lp_norm(&k, 1.0, f64::INFINITY).unwrap();
        assert_eq!(n.method, Method::Quadrature);
        assert!((n.value - 1.0).abs() < 1e-8);
    }
}
