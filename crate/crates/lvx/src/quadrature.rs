//! Adaptive Gauss–Kronrod quadrature with helpers for half-line ranges and
//! algebraic endpoint singularities.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

/// Result of a numerical integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

impl Quad {
    pub fn zero() -> Self {
        Quad { value: 0.0, error: 0.0 }
    }

    pub fn add(self, other: Quad) -> Quad {
        Quad { value: self.value + other.value, error: self.error + other.error }
    }

    pub fn scale(self, c: f64) -> Quad {
        Quad { value: self.value * c, error: self.error * c.abs() }
    }
}

/// Tolerances and subdivision limit.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { abs_tol: 1e-14, rel_tol: 1e-11, max_intervals: 4000 }
    }
}

// 15-point Kronrod nodes (non-negative half) and weights; the 7-point Gauss
// rule uses the odd-indexed nodes.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Quad {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kron * h;
    let raw = ((kron - gauss) * h).abs();
    // QUADPACK-style error scaling; the raw Gauss/Kronrod gap is pessimistic
    // for smooth integrands.
    let error = if raw > 0.0 { raw * (200.0 * raw / value.abs().max(f64::MIN_POSITIVE)).powf(1.5).min(1.0) } else { 0.0 };
    let error = error.max(50.0 * f64::EPSILON * value.abs());
    Quad { value, error }
}

struct Piece {
    a: f64,
    b: f64,
    q: Quad,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.q.error == other.q.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.q.error.partial_cmp(&other.q.error).unwrap_or(Ordering::Equal)
    }
}

/// Globally adaptive integration of `f` over the finite interval `[a, b]`.
///
/// The interval with the largest error estimate is bisected until the total
/// error meets `max(abs_tol, rel_tol·|value|)` or the interval budget is spent.
/// Integrable endpoint singularities are tolerated as long as `f` is never
/// evaluated exactly at the singular point (Kronrod nodes are interior).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, cfg: QuadConfig) -> Quad {
    if a == b {
        return Quad::zero();
    }
    if a > b {
        return integrate(f, b, a, cfg).scale(-1.0);
    }
    let first = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    let mut total = first;
    heap.push(Piece { a, b, q: first });
    while heap.len() < cfg.max_intervals {
        if total.error <= cfg.abs_tol.max(cfg.rel_tol * total.value.abs()) {
            break;
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let m = 0.5 * (worst.a + worst.b);
        if !(m > worst.a && m < worst.b) {
            heap.push(worst);
            break;
        }
        let left = gk15(&mut f, worst.a, m);
        let right = gk15(&mut f, m, worst.b);
        total.value += left.value + right.value - worst.q.value;
        total.error += left.error + right.error - worst.q.error;
        heap.push(Piece { a: worst.a, b: m, q: left });
        heap.push(Piece { a: m, b: worst.b, q: right });
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let mut value = 0.0;
    let mut error = 0.0;
    for p in heap.iter() {
        value += p.q.value;
        error += p.q.error;
    }
    Quad { value, error }
}

/// ∫₀^∞ f(t) dt through the map t = u²/(1−u)², u ∈ (0,1).
///
/// The map flattens a t^β singularity at the origin (β > −1) into u^{2β+1}
/// and compresses the infinite tail.
pub fn integrate_half_line<F: FnMut(f64) -> f64>(mut f: F, cfg: QuadConfig) -> Quad {
    integrate(
        |u| {
            let w = 1.0 - u;
            let t = u * u / (w * w);
            let jac = 2.0 * u / (w * w * w);
            if !t.is_finite() || jac == 0.0 {
                return 0.0;
            }
            let v = f(t) * jac;
            if v.is_finite() { v } else { 0.0 }
        },
        0.0,
        1.0,
        cfg,
    )
}

/// ∫₀^upper t^β h(t) dt for β > −1 and a regular `h`, where `upper` may be
/// +∞.
///
/// Substitutes s = t^{1+β}, which absorbs the algebraic weight exactly; the
/// remaining integrand h(s^{1/(1+β)})/(1+β) is bounded near the origin.
pub fn integrate_algebraic<F: FnMut(f64) -> f64>(mut h: F, beta: f64, upper: f64, cfg: QuadConfig) -> Quad {
    assert!(beta > -1.0, "algebraic weight exponent must exceed -1");
    let k = 1.0 / (1.0 + beta);
    let scale = k;
    if upper.is_infinite() {
        integrate_half_line(|s| h(s.powf(k)) * scale, cfg)
    } else {
        let smax = upper.powf(1.0 + beta);
        integrate(|s| h(s.powf(k)) * scale, 0.0, smax, cfg)
    }
}

/// ∫_lower^∞ t^β h(t) dt for β < −1 and a regular `h`, via w = t^{1+β}.
///
/// Maps the algebraically decaying tail onto the finite range
/// w ∈ (0, lower^{1+β}] with a bounded integrand.
pub fn integrate_algebraic_tail<F: FnMut(f64) -> f64>(mut h: F, beta: f64, lower: f64, cfg: QuadConfig) -> Quad {
    assert!(beta < -1.0 && lower > 0.0, "algebraic tail needs β < −1 and a positive lower limit");
    let k = 1.0 / (1.0 + beta);
    let wmax = lower.powf(1.0 + beta);
    integrate(|w| if w <= 0.0 { 0.0 } else { h(w.powf(k)) * (-k) }, 0.0, wmax, cfg)
}

/// ∫_lower^∞ f(t) dt through t = lower + u²/(1−u)².
pub fn integrate_from<F: FnMut(f64) -> f64>(mut f: F, lower: f64, cfg: QuadConfig) -> Quad {
    integrate_half_line(|t| f(lower + t), cfg)
}
