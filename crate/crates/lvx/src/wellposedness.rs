//! Mechanized checks of the well-posedness and stability conditions for
//! quasi-stationary models, with structured reports.

use std::fmt;
use std::io::{Read, Write};

use crate::error::{invalid, Error, Result};
use crate::kernels::{self, Exponent, Kernel};
use crate::levy_basis::{effective_drifts, jump_moment, JumpMeasure, LevyCharacteristics};
use crate::volterra::{self, fmt_f64, BoundKind, Interval, VolterraProblem};

/// Closed-form families for the coefficient σ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaFunction {
    Zero,
    Constant(f64),
    /// slope·y + intercept
    Affine { slope: f64, intercept: f64 },
    /// intercept + coef·sgn(y)((1+|y|)^γ − 1): Lipschitz with growth of order γ.
    SoftPower { coef: f64, gamma: f64, intercept: f64 },
    /// coef·sgn(y)|y|^γ: not Lipschitz for γ < 1.
    PowerLaw { coef: f64, gamma: f64 },
}

impl SigmaFunction {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            SigmaFunction::Zero => 0.0,
            SigmaFunction::Constant(c) => c,
            SigmaFunction::Affine { slope, intercept } => slope * y + intercept,
            SigmaFunction::SoftPower { coef, gamma, intercept } => {
                intercept + coef * y.signum() * ((1.0 + y.abs()).powf(gamma) - 1.0)
            }
            SigmaFunction::PowerLaw { coef, gamma } => coef * y.signum() * y.abs().powf(gamma),
        }
    }
}

/// |σ(x)| ≤ |σ(0)| + constant·|x|^γ
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Growth {
    pub gamma: f64,
    pub constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaSpec {
    pub function: SigmaFunction,
    pub lipschitz: Option<f64>,
    pub at_zero: f64,
    pub growth: Option<Growth>,
}

impl SigmaSpec {
    /// Constants derived from the family.
    pub fn new(function: SigmaFunction) -> Result<Self> {
        let (lipschitz, growth) = match function {
            SigmaFunction::Zero | SigmaFunction::Constant(_) => (Some(0.0), Some(Growth { gamma: 1.0, constant: 0.0 })),
            SigmaFunction::Affine { slope, .. } => (Some(slope.abs()), Some(Growth { gamma: 1.0, constant: slope.abs() })),
            SigmaFunction::SoftPower { coef, gamma, .. } => {
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return invalid("σ growth order must lie in (0,1]");
                }
                (Some(coef.abs() * gamma), Some(Growth { gamma, constant: coef.abs() }))
            }
            SigmaFunction::PowerLaw { coef, gamma } => {
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return invalid("σ growth order must lie in (0,1]");
                }
                let lip = if gamma == 1.0 || coef == 0.0 { Some(coef.abs()) } else { None };
                (lip, Some(Growth { gamma, constant: coef.abs() }))
            }
        };
        let spec = SigmaSpec { function, lipschitz, at_zero: function.eval(0.0), growth };
        spec.validate()?;
        Ok(spec)
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.function.eval(y)
    }

    /// Override the declared Lipschitz constant; spot-checked against σ.
    pub fn with_lipschitz(mut self, c: Option<f64>) -> Result<Self> {
        self.lipschitz = c;
        self.validate()?;
        Ok(self)
    }

    pub fn with_growth(mut self, g: Option<Growth>) -> Result<Self> {
        self.growth = g;
        self.validate()?;
        Ok(self)
    }

    /// Spot-check the declared constants on a grid of arguments.
    pub fn validate(&self) -> Result<()> {
        if (self.eval(0.0) - self.at_zero).abs() > 1e-12 * (1.0 + self.at_zero.abs()) {
            return invalid("declared σ(0) disagrees with σ");
        }
        let mut grid = vec![0.0];
        for k in -24..=16 {
            let y = 2f64.powf(k as f64 * 0.5);
            grid.push(y);
            grid.push(-y);
        }
        if let Some(c) = self.lipschitz {
            if !(c >= 0.0) {
                return invalid("Lipschitz constant must be ≥ 0");
            }
            for &x in &grid {
                for &y in &grid {
                    let lhs = (self.eval(x) - self.eval(y)).abs();
                    if lhs > c * (x - y).abs() * (1.0 + 1e-9) + 1e-12 {
                        return invalid(format!("σ violates the declared Lipschitz constant {c} at ({x}, {y})"));
                    }
                }
            }
        }
        if let Some(g) = self.growth {
            if !(g.gamma > 0.0 && g.gamma <= 1.0) || !(g.constant >= 0.0) {
                return invalid("growth bound needs γ ∈ (0,1] and a constant ≥ 0");
            }
            for &x in &grid {
                if self.eval(x).abs() > self.at_zero.abs() + g.constant * x.abs().powf(g.gamma) * (1.0 + 1e-9) + 1e-12 {
                    return invalid(format!("σ violates the declared growth bound at {x}"));
                }
            }
        }
        Ok(())
    }
}

/// Envelopes for |b − ∫z1{a<|z|≤1}π| ≤ F₀a^{1−α} and |b + ∫z1{1<|z|≤A}π| ≤ F₁A^{1−β}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftConvergence {
    pub alpha: f64,
    pub beta: f64,
    pub f0: f64,
    pub f1: f64,
}

/// Y₀(t, x) = value · e^{rate·t}
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialData {
    pub value: f64,
    pub rate: f64,
}

impl InitialData {
    pub fn constant(value: f64) -> Self {
        InitialData { value, rate: 0.0 }
    }

    pub fn at(&self, t: f64) -> f64 {
        if self.rate == 0.0 { self.value } else { self.value * (self.rate * t).exp() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kernel: Kernel,
    pub chars: LevyCharacteristics,
    pub sigma: SigmaSpec,
    pub p: f64,
    pub q: Option<f64>,
    pub drift_conv: Option<DriftConvergence>,
    /// w(t, x) = e^{ηt}
    pub eta: f64,
    pub interval: Interval,
    pub y0: InitialData,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 2.0) {
            return invalid("p must lie in (0,2]");
        }
        if let Some(q) = self.q {
            if !(q > 0.0 && q <= 2.0) {
                return invalid("q must lie in (0,2]");
            }
        }
        if !self.eta.is_finite() {
            return invalid("weight exponent η must be finite");
        }
        if let Some(d) = self.drift_conv {
            if !(d.alpha <= 2.0) || !(d.beta >= 0.0) || !(d.f0 >= 0.0) || !(d.f1 >= 0.0) {
                return invalid("drift convergence needs α ≤ 2, β ≥ 0 and non-negative envelopes");
            }
        }
        if let Interval::Finite { start, end } = self.interval {
            if !(end > start) {
                return invalid("interval must have start < end");
            }
        }
        self.sigma.validate()
    }
}

/// Working BDG constant: 1 for p < 1, 2 for p = 1, √(8p) on (1,2), 1 for p = 2.
pub fn bdg_constant(p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 2.0) {
        return invalid("BDG constant is defined here for p ∈ (0,2]");
    }
    Ok(if p < 1.0 {
        1.0
    } else if p == 1.0 {
        2.0
    } else if p < 2.0 {
        (8.0 * p).sqrt()
    } else {
        1.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Undetermined,
}

impl Verdict {
    fn of(b: bool) -> Self {
        if b { Verdict::Pass } else { Verdict::Fail }
    }

    fn of_opt(b: Option<bool>) -> Self {
        b.map_or(Verdict::Undetermined, Verdict::of)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Undetermined => "undetermined",
        })
    }
}

impl std::str::FromStr for Verdict {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pass" => Ok(Verdict::Pass),
            "fail" => Ok(Verdict::Fail),
            "undetermined" => Ok(Verdict::Undetermined),
            _ => invalid(format!("unknown verdict {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionItem {
    pub id: String,
    pub anchor: String,
    pub quantities: Vec<(String, f64)>,
    pub verdict: Verdict,
}

impl ConditionItem {
    fn new(id: &str, anchor: &str, verdict: Verdict) -> Self {
        ConditionItem { id: id.into(), anchor: anchor.into(), quantities: Vec::new(), verdict }
    }

    fn q(mut self, name: &str, v: f64) -> Self {
        self.quantities.push((name.into(), v));
        self
    }

    pub fn quantity(&self, name: &str) -> Option<f64> {
        self.quantities.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub checker: String,
    pub items: Vec<ConditionItem>,
}

impl ConditionReport {
    fn new(checker: &str) -> Self {
        ConditionReport { checker: checker.into(), items: Vec::new() }
    }

    fn push(&mut self, item: ConditionItem) {
        self.items.push(item);
    }

    /// Pass iff every item passes; fail if any item fails.
    pub fn overall(&self) -> Verdict {
        if self.items.iter().any(|i| i.verdict == Verdict::Fail) {
            Verdict::Fail
        } else if self.items.iter().all(|i| i.verdict == Verdict::Pass) {
            Verdict::Pass
        } else {
            Verdict::Undetermined
        }
    }

    pub fn item(&self, id: &str) -> Option<&ConditionItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn failures(&self) -> Vec<&ConditionItem> {
        self.items.iter().filter(|i| i.verdict == Verdict::Fail).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}: {}\n", self.checker, self.overall());
        for i in &self.items {
            s.push_str(&format!("  [{}] {} ({})\n", i.verdict, i.id, i.anchor));
            for (n, v) in &i.quantities {
                s.push_str(&format!("      {n} = {v}\n"));
            }
        }
        s
    }

    /// One record per condition: checker, id, anchor, quantities, verdict.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["checker", "id", "anchor", "quantities", "verdict"])?;
        for i in &self.items {
            let q: Vec<String> = i.quantities.iter().map(|(n, v)| format!("{n}={}", fmt_f64(*v))).collect();
            wr.write_record([self.checker.as_str(), &i.id, &i.anchor, &q.join(";"), &i.verdict.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Parse one or more reports written by [`ConditionReport::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<Vec<ConditionReport>> {
        let mut rd = csv::Reader::from_reader(r);
        let mut out: Vec<ConditionReport> = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let get = |k: usize| rec.get(k).unwrap_or("").to_string();
            let checker = get(0);
            let mut quantities = Vec::new();
            for part in get(3).split(';').filter(|s| !s.is_empty()) {
                let (n, v) = part.split_once('=').ok_or_else(|| Error::InvalidParameter(format!("bad quantity {part:?}")))?;
                let v = v.parse::<f64>().map_err(|_| Error::InvalidParameter(format!("bad quantity value {v:?}")))?;
                quantities.push((n.to_string(), v));
            }
            let item = ConditionItem { id: get(1), anchor: get(2), quantities, verdict: get(4).parse()? };
            match out.last_mut() {
                Some(r) if r.checker == checker => r.items.push(item),
                _ => out.push(ConditionReport { checker, items: vec![item] }),
            }
        }
        Ok(out)
    }
}

const SIZE_MARGIN: f64 = 1e-10;

fn local_horizon(interval: Interval) -> f64 {
    match interval {
        Interval::Finite { start, end } => end - start,
        _ => 1.0,
    }
}

fn zeta(chars: &LevyCharacteristics, p: f64) -> f64 {
    let m = jump_moment(&chars.jumps, p, p);
    if m == 0.0 { 0.0 } else { chars.modulation_sup() * m }
}

/// sup over x of |b₁(x)| = |b + π₁(x)∫z1{|z|>1}π₀|, π₁ ranging over [0, sup π₁].
pub fn b1_sup(chars: &LevyCharacteristics) -> Option<f64> {
    let large = chars.jumps.signed_first_moment(1.0, f64::INFINITY)?;
    let top = (chars.b + chars.modulation_sup() * large).abs();
    Some(if chars.modulation.is_some() { top.max(chars.b.abs()) } else { top })
}

fn b0_vanishes(chars: &LevyCharacteristics) -> (Verdict, f64) {
    match effective_drifts(chars).b0 {
        Some(b0) if chars.modulation.is_none() => (Verdict::of(b0 == 0.0), b0),
        // b₀(x) = b − π₁(x)∫z1{|z|≤1}π₀ must vanish for every value of π₁
        Some(b0) => (Verdict::of(b0 == 0.0 && chars.b == 0.0), b0),
        None => (Verdict::Fail, f64::INFINITY),
    }
}

fn classify_item(id: &str, anchor: &str, k: &Kernel, e: Exponent, eta: f64, horizon: f64) -> ConditionItem {
    let verdict = Verdict::of_opt(kernels::classify(k, e, eta, horizon));
    let mut item = ConditionItem::new(id, anchor, verdict);
    if verdict == Verdict::Pass {
        if let Ok(n) = kernels::weighted_functional(k, e, eta, horizon) {
            item = item.q("integral", n.value);
        }
    }
    if let Exponent::Power(p) = e {
        item = item.q("exponent", p);
    }
    item.q("critical_exponent", k.critical_exponent()).q("horizon", horizon)
}

fn lipschitz_item(model: &ModelSpec) -> ConditionItem {
    match model.sigma.lipschitz {
        Some(c) => ConditionItem::new("sigma-lipschitz", "σ is globally Lipschitz", Verdict::Pass).q("lipschitz_constant", c),
        None => ConditionItem::new("sigma-lipschitz", "σ is globally Lipschitz", Verdict::Fail),
    }
}

fn exclusion_items(report: &mut ConditionReport, chars: &LevyCharacteristics, p: f64, tag: &str) {
    report.push(
        ConditionItem::new(&format!("gaussian-exclusion{tag}"), "no Gaussian part unless the exponent is 2", Verdict::of(p >= 2.0 || chars.c == 0.0))
            .q("c", chars.c)
            .q("exponent", p),
    );
    if p < 1.0 {
        let (v, b0) = b0_vanishes(chars);
        report.push(ConditionItem::new(&format!("small-drift-exclusion{tag}"), "compensated drift b₀ vanishes below exponent 1", v).q("b0", b0));
    }
}

/// Local well-posedness on a half-line or bounded interval.
pub fn check_finite_horizon(model: &ModelSpec) -> Result<ConditionReport> {
    model.validate()?;
    let mut r = ConditionReport::new("finite-horizon");
    let p = model.p;
    let chars = &model.chars;
    r.push(ConditionItem::new(
        "interval-bounded-below",
        "interval starts at a finite time",
        Verdict::of(!matches!(model.interval, Interval::Past { .. })),
    ));
    r.push(lipschitz_item(model));
    exclusion_items(&mut r, chars, p, "");
    let z = zeta(chars, p);
    r.push(ConditionItem::new("jump-moment", "jump measure has a finite p-th absolute moment", Verdict::of(z.is_finite())).q("zeta_p", z));
    let h = local_horizon(model.interval);
    r.push(classify_item("kernel-local-integrability", "kernel p-th power integrable on bounded time ranges", &model.kernel, Exponent::Power(p), 0.0, h));
    if p >= 1.0 && !chars.is_martingale() {
        r.push(classify_item("kernel-local-mean", "kernel integrable on bounded time ranges for non-martingale noise", &model.kernel, Exponent::Power(1.0), 0.0, h));
    }
    Ok(r)
}

/// Heavy-tailed noise: part 1 (existence in the localized sense) always,
/// part 2 (p-th moments) when σ declares a growth order.
pub fn check_heavy_tail(model: &ModelSpec) -> Result<ConditionReport> {
    model.validate()?;
    let q = model.q.ok_or_else(|| Error::InvalidParameter("heavy-tail check needs the small-jump exponent q".into()))?;
    let chars = &model.chars;
    let k = &model.kernel;
    let h = local_horizon(model.interval);
    let mut r = ConditionReport::new("heavy-tail");
    r.push(lipschitz_item(model));
    let small = chars.jumps.abs_power_between(q, 0.0, 1.0);
    r.push(ConditionItem::new("small-jump-moment", "small jumps have a finite q-th absolute moment", Verdict::of(small.is_finite())).q("small_jump_moment", small).q("q", q));
    exclusion_items(&mut r, chars, q, "-q");
    r.push(classify_item("kernel-local-integrability-q", "kernel q-th power integrable on bounded time ranges", k, Exponent::Power(q), 0.0, h));
    let has_jumps = !matches!(chars.jumps, JumpMeasure::None);
    let mod_int = chars.modulation.as_ref().map_or(f64::INFINITY, |m| m.space_integral(k.dim()));
    r.push(
        ConditionItem::new("modulation-integrable", "jump intensity modulation bounded and integrable in space", Verdict::of(!has_jumps || mod_int.is_finite()))
            .q("modulation_sup", chars.modulation_sup())
            .q("modulation_integral", mod_int),
    );
    if q >= 1.0 {
        let sym = chars.is_symmetric();
        let fin = kernels::classify(k, Exponent::Power(1.0), 0.0, h);
        let v = if sym { Verdict::Pass } else { Verdict::of_opt(fin) };
        r.push(ConditionItem::new("symmetric-or-integrable", "noise symmetric or kernel integrable on bounded time ranges", v).q("symmetric", sym as u8 as f64));
    }
    // part 2 applies to sublinear σ only
    if let Some(g) = model.sigma.growth.filter(|g| g.gamma < 1.0) {
        let p = model.p;
        r.push(
            ConditionItem::new("exponent-order", "p < q and qγ ≤ p", Verdict::of(p < q && q * g.gamma <= p))
                .q("p", p)
                .q("q", q)
                .q("gamma", g.gamma)
                .q("q_gamma", q * g.gamma),
        );
        let jm = if has_jumps { chars.modulation_sup() * jump_moment(&chars.jumps, p, q) } else { 0.0 };
        r.push(ConditionItem::new("truncated-jump-moment", "jump measure has finite truncated moment, p on large and q on small jumps", Verdict::of(jm.is_finite())).q("moment", jm));
        r.push(classify_item(
            "truncated-kernel-integrability",
            "kernel truncated power, q where g > 1 and p where g ≤ 1, integrable on bounded time ranges",
            k,
            Exponent::Truncated { large: q, small: p },
            0.0,
            h,
        ));
    }
    Ok(r)
}

/// Global well-posedness on the whole line with weight e^{ηt}.
pub fn check_infinite_memory(model: &ModelSpec) -> Result<ConditionReport> {
    model.validate()?;
    let p = model.p;
    let chars = &model.chars;
    let k = &model.kernel;
    let eta = model.eta;
    let mut r = ConditionReport::new("infinite-memory");
    r.push(ConditionItem::new("interval-whole-line", "equation posed on the whole time line", Verdict::of(matches!(model.interval, Interval::Past { .. }))));
    r.push(lipschitz_item(model));
    exclusion_items(&mut r, chars, p, "");
    let z = zeta(chars, p);
    r.push(ConditionItem::new("jump-moment", "jump measure has a finite p-th absolute moment", Verdict::of(z.is_finite())).q("zeta_p", z));
    let b1 = b1_sup(chars);
    if p >= 1.0 {
        r.push(ConditionItem::new("mean-drift-defined", "large jumps have a finite first moment", Verdict::of(b1.is_some())).q("b1_sup", b1.unwrap_or(f64::INFINITY)));
    }
    if eta < 0.0 {
        r.push(ConditionItem::new("sigma-vanishes-at-zero", "σ(0) = 0 under a decaying weight", Verdict::of(model.sigma.at_zero == 0.0)).q("sigma_at_zero", model.sigma.at_zero));
    }
    r.push(classify_item("kernel-weighted-integrability", "weighted kernel p-th power integrable on the half-line", k, Exponent::Power(p), eta, f64::INFINITY));
    let b1v = b1.unwrap_or(f64::INFINITY);
    let needs_mean = p >= 1.0 && b1v != 0.0;
    if needs_mean {
        r.push(classify_item("kernel-mean-integrability", "kernel integrable on the half-line for non-martingale noise", k, Exponent::Power(1.0), 0.0, f64::INFINITY));
    }
    let c1 = model.sigma.lipschitz.unwrap_or(f64::NAN);
    let gp = kernels::weighted_functional(k, Exponent::Power(p), eta, f64::INFINITY).map(|n| n.value).unwrap_or(f64::INFINITY);
    let (lhs, mut item) = if p < 1.0 {
        let lhs = c1.powf(p) * z * gp;
        (lhs, ConditionItem::new("size-condition", "contraction size condition on the whole line", Verdict::Pass))
    } else {
        let bdg = bdg_constant(p)?;
        let mut lhs = bdg * ((z + chars.c) * gp).powf(1.0 / p);
        if needs_mean {
            let g1w = kernels::weighted_functional(k, Exponent::Power(1.0), eta, f64::INFINITY).map(|n| n.value).unwrap_or(f64::INFINITY);
            let g1 = kernels::weighted_functional(k, Exponent::Power(1.0), 0.0, f64::INFINITY).map(|n| n.value).unwrap_or(f64::INFINITY);
            lhs += b1v * g1.powf((p - 1.0) / p) * g1w.powf(1.0 / p);
        }
        (c1 * lhs, ConditionItem::new("size-condition", "contraction size condition on the whole line", Verdict::Pass).q("bdg_constant", bdg))
    };
    let lhs = if lhs.is_nan() && c1 == 0.0 { 0.0 } else { lhs };
    // a boundary value within rounding of 1 counts as a failure
    item.verdict = Verdict::of(lhs < 1.0 - SIZE_MARGIN);
    item = item.q("left_side", lhs).q("kernel_integral", gp).q("zeta_p", z).q("eta", eta);
    r.push(item);
    Ok(r)
}

/// Finiteness of ∫∫∫ e^{−ητ}|g(τ,x) z|^{large}_{small} dx dτ π₀(dz) over the half-line.
pub fn jump_kernel_finite(k: &Kernel, jumps: &JumpMeasure, large: f64, small: f64, eta: f64) -> Option<bool> {
    let nonzero = match jumps {
        JumpMeasure::None => false,
        JumpMeasure::PointMasses(v) => v.iter().any(|m| m.intensity > 0.0 && m.size != 0.0),
        _ => true,
    };
    if !nonzero {
        return Some(true);
    }
    // |gu| ≥ min(1, u^{max})|g| in the truncated power, so kernel finiteness is necessary.
    let kf = kernels::classify(k, Exponent::Truncated { large, small }, eta, f64::INFINITY)?;
    if !kf {
        return Some(false);
    }
    if let JumpMeasure::AlphaStable { alpha, .. } = *jumps {
        // the z-integral equals a constant times g^α exactly
        if large >= alpha || small <= alpha {
            return Some(false);
        }
        return kernels::classify(k, Exponent::Power(alpha), eta, f64::INFINITY);
    }
    if large <= small && jump_moment(jumps, small, large).is_finite() {
        return Some(true);
    }
    None
}

/// Drift-convergence envelopes checked on logarithmic grids of cut-offs.
pub fn verify_drift_convergence(chars: &LevyCharacteristics, dc: &DriftConvergence) -> (bool, f64) {
    let mut worst = 0.0f64;
    let mut scales = vec![chars.modulation_sup()];
    if chars.modulation.is_some() {
        scales.push(0.0);
    }
    for &m in &scales {
        for k in 0..=160 {
            let a = 10f64.powf(-8.0 * k as f64 / 160.0);
            let s = chars.jumps.signed_first_moment(a, 1.0).unwrap_or(f64::INFINITY);
            let lhs = (chars.b - m * s).abs();
            let rhs = dc.f0 * a.powf(1.0 - dc.alpha);
            worst = worst.max(lhs - rhs * (1.0 + 1e-9));
            let big = 10f64.powf(8.0 * k as f64 / 160.0);
            let s = chars.jumps.signed_first_moment(1.0, big).unwrap_or(f64::INFINITY);
            let lhs = (chars.b + m * s).abs();
            let rhs = dc.f1 * big.powf(1.0 - dc.beta);
            worst = worst.max(lhs - rhs * (1.0 + 1e-9));
        }
    }
    (worst <= 1e-12, worst.max(0.0))
}

fn stability_q(model: &ModelSpec, gamma: f64) -> (Option<f64>, bool) {
    let p = model.p;
    let ok = |q: f64| {
        q >= p && q * gamma <= p * (1.0 + 1e-12) && jump_kernel_finite(&model.kernel, &model.chars.jumps, p, q, model.eta) == Some(true)
    };
    if let Some(q) = model.q {
        return (Some(q), ok(q));
    }
    // smallest admissible q on a grid of [p, 2]
    for i in 0..=400 {
        let q = p + (2.0 - p) * i as f64 / 400.0;
        if ok(q) {
            return (Some(q), true);
        }
    }
    (None, false)
}

/// Asymptotic Lᵖ-stability of a solution with weight e^{ηt}.
pub fn check_asymptotic_stability(model: &ModelSpec) -> Result<ConditionReport> {
    model.validate()?;
    let p = model.p;
    let eta = model.eta;
    let chars = &model.chars;
    let k = &model.kernel;
    let mut r = ConditionReport::new("asymptotic-stability");
    let (below, above) = match model.interval {
        Interval::Finite { .. } => (true, true),
        Interval::Past { .. } => (false, true),
        Interval::Future { .. } => (true, false),
    };
    let weight_ok = eta == 0.0 || (eta > 0.0 && below) || (eta < 0.0 && above);
    r.push(ConditionItem::new("weight-bounded-below", "weight bounded away from zero on the interval", Verdict::of(weight_ok)).q("eta", eta));
    let rate = if p < 1.0 { p * model.y0.rate - eta } else { model.y0.rate - eta / p };
    let y0_ok = model.y0.value == 0.0 || rate == 0.0 || (rate < 0.0 && below) || (rate > 0.0 && above);
    r.push(ConditionItem::new("initial-data-bounded", "initial data bounded in the weighted moment norm", Verdict::of(y0_ok)).q("weighted_rate", rate));
    let growth = model.sigma.growth;
    r.push(match growth {
        Some(g) => ConditionItem::new("sigma-growth", "σ has growth of order γ ∈ (0,1]", Verdict::Pass).q("gamma", g.gamma).q("growth_constant", g.constant),
        None => ConditionItem::new("sigma-growth", "σ has growth of order γ ∈ (0,1]", Verdict::Fail),
    });
    let gamma = growth.map_or(1.0, |g| g.gamma);
    let has_c = chars.c > 0.0;
    if has_c {
        let fin = kernels::classify(k, Exponent::Power(2.0), eta, f64::INFINITY);
        let v = if 2.0 * gamma <= p { Verdict::of_opt(fin) } else { Verdict::Fail };
        r.push(ConditionItem::new("gaussian-kernel-size", "Gaussian part admissible: 2γ ≤ p and squared kernel integrable", v).q("two_gamma", 2.0 * gamma).q("c", chars.c));
    }
    let (q, q_ok) = stability_q(model, gamma);
    let mut item = ConditionItem::new("jump-kernel-size", "some q ∈ [p,2] with qγ ≤ p makes the truncated jump integral finite", Verdict::of(q_ok));
    if let Some(q) = q {
        item = item.q("q", q).q("q_gamma", q * gamma);
    }
    r.push(item.q("critical_exponent", k.critical_exponent()));
    let q = q.unwrap_or(p);
    let mut dc_used = model.drift_conv;
    if p >= 1.0 {
        let b1 = b1_sup(chars);
        r.push(ConditionItem::new("mean-drift-defined", "large jumps have a finite first moment", Verdict::of(b1.is_some())).q("b1_sup", b1.unwrap_or(f64::INFINITY)));
        if let Some(b) = b1.filter(|b| *b != 0.0) {
            let w = kernels::classify(k, Exponent::Power(1.0), eta, f64::INFINITY);
            let u = kernels::classify(k, Exponent::Power(1.0), 0.0, f64::INFINITY);
            let v = match (w, u) {
                (Some(a), Some(b)) => Verdict::of(a && b),
                (Some(false), _) | (_, Some(false)) => Verdict::Fail,
                _ => Verdict::Undetermined,
            };
            r.push(ConditionItem::new("mean-drift-kernel", "kernel times mean drift integrable, weighted and unweighted", v).q("b1_sup", b));
        }
    } else {
        let dc = match model.drift_conv {
            Some(d) => Some(d),
            None if chars.is_symmetric() => Some(DriftConvergence { alpha: 0.0, beta: 0.0, f0: 0.0, f1: 0.0 }),
            None => None,
        };
        dc_used = dc;
        match dc {
            None => r.push(ConditionItem::new("drift-convergence", "drift-convergence envelopes declared for p < 1", Verdict::Fail)),
            Some(d) => {
                let (ok, worst) = verify_drift_convergence(chars, &d);
                let order = d.alpha.max(d.beta) * gamma <= p;
                r.push(
                    ConditionItem::new("drift-convergence", "drift-convergence envelopes hold and (α∨β)γ ≤ p", Verdict::of(ok && order))
                        .q("alpha", d.alpha)
                        .q("beta", d.beta)
                        .q("max_violation", worst),
                );
                if d.f0.max(d.f1) > 0.0 {
                    let e = Exponent::Truncated { large: d.alpha.max(1e-9), small: d.beta };
                    r.push(classify_item("drift-kernel", "envelope-weighted truncated kernel integrable", k, e, 0.0, f64::INFINITY));
                }
            }
        }
    }
    // branch (a): strict sublinearity
    let (al, be) = dc_used.map_or((0.0, 0.0), |d| (d.alpha, d.beta));
    let strict = gamma < 1.0 && q * gamma < p && (!has_c || 2.0 * gamma < p) && (p >= 1.0 || al.max(be) * gamma < p);
    let mut item = ConditionItem::new("stability-branch", "strict sublinear growth, or a contraction partition for the growth kernels", Verdict::Pass)
        .q("strict_sublinear", strict as u8 as f64);
    let verdict = if strict {
        Verdict::Pass
    } else if growth.is_none() || eta != 0.0 {
        Verdict::Undetermined
    } else {
        let sized = ModelSpec { q: Some(q), drift_conv: dc_used, sigma: SigmaSpec { growth: Some(Growth { gamma, constant: growth.unwrap().constant }), ..model.sigma }, ..model.clone() };
        let mut linear = ModelSpec { interval: Interval::Past { end: 0.0 }, ..sized };
        if let Interval::Finite { .. } = model.interval {
            linear.interval = model.interval;
        }
        match volterra::moment_problem(&linear, BoundKind::Growth) {
            Ok(pr) => {
                let lin = VolterraProblem {
                    terms: pr.terms.into_iter().map(|mut t| { t.inner_exp = t.power; t }).collect(),
                    ..pr
                };
                match volterra::find_contraction_partition(&lin) {
                    Ok(part) => {
                        item = item.q("rho", part.rho).q("intervals", part.intervals() as f64);
                        Verdict::Pass
                    }
                    Err(Error::NoContraction { mass }) => {
                        item = item.q("rho", mass);
                        Verdict::Fail
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(Error::NoContraction { mass }) => {
                item = item.q("rho", mass);
                Verdict::Fail
            }
            Err(Error::InvalidParameter(_)) => Verdict::Fail,
            Err(e) => return Err(e),
        }
    };
    item.verdict = verdict;
    r.push(item);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_basis::SpatialModulation;

    fn model(kernel: Kernel, chars: LevyCharacteristics, sigma: SigmaSpec, p: f64, interval: Interval) -> ModelSpec {
        ModelSpec { kernel, chars, sigma, p, q: None, drift_conv: None, eta: 0.0, interval, y0: InitialData::constant(1.0) }
    }

    fn lin(c: f64) -> SigmaSpec {
        SigmaSpec::new(SigmaFunction::Affine { slope: c, intercept: 0.0 }).unwrap()
    }

    #[test]
    fn bdg_branches() {
        assert_eq!(bdg_constant(2.0).unwrap(), 1.0);
        assert_eq!(bdg_constant(1.0).unwrap(), 2.0);
        assert!((bdg_constant(1.5).unwrap() - 12f64.sqrt()).abs() < 1e-15);
        assert_eq!(bdg_constant(0.5).unwrap(), 1.0);
        assert!(bdg_constant(2.5).is_err());
        assert!(bdg_constant(0.0).is_err());
    }

    #[test]
    fn finite_horizon_examples() {
        let fin = Interval::Finite { start: 0.0, end: 1.0 };
        let g = LevyCharacteristics::gaussian(1.0).unwrap();
        let r = check_finite_horizon(&model(Kernel::heat(1.0, 1).unwrap(), g.clone(), lin(1.0), 2.0, fin)).unwrap();
        assert_eq!(r.overall(), Verdict::Pass, "{}", r.to_text());
        let r = check_finite_horizon(&model(Kernel::heat(1.0, 2).unwrap(), g, lin(1.0), 2.0, fin)).unwrap();
        assert_eq!(r.overall(), Verdict::Fail);
        assert_eq!(r.item("kernel-local-integrability").unwrap().verdict, Verdict::Fail);
        let two = LevyCharacteristics::new(0.3, 0.0, JumpMeasure::point_masses(&[(0.5, 1.0), (-0.5, 1.0)]).unwrap()).unwrap();
        let r = check_finite_horizon(&model(Kernel::heat(1.0, 1).unwrap(), two, lin(1.0), 0.5, fin)).unwrap();
        assert_eq!(r.item("small-drift-exclusion").unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn infinite_memory_boundary() {
        // pure-jump martingale noise with ζ₁ = 1
        let j = JumpMeasure::point_masses(&[(1.0, 0.5), (-1.0, 0.5)]).unwrap();
        let chars = LevyCharacteristics::new(0.0, 0.0, j).unwrap();
        let past = Interval::Past { end: 0.0 };
        let r = check_infinite_memory(&model(Kernel::heat(2.0, 1).unwrap(), chars.clone(), lin(1.0), 1.0, past)).unwrap();
        let lhs = r.item("size-condition").unwrap().quantity("left_side").unwrap();
        assert!((lhs - 1.0).abs() < 1e-12);
        assert_eq!(r.overall(), Verdict::Fail);
        let r = check_infinite_memory(&model(Kernel::heat(4.0, 1).unwrap(), chars, lin(1.0), 1.0, past)).unwrap();
        assert!((r.item("size-condition").unwrap().quantity("left_side").unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(r.overall(), Verdict::Pass, "{}", r.to_text());
    }

    #[test]
    fn heavy_tail_examples() {
        let st = JumpMeasure::alpha_stable(1.5, 1.0, 0.0).unwrap();
        let local = LevyCharacteristics::new(0.0, 0.0, st.clone()).unwrap().with_modulation(SpatialModulation::Indicator { half_width: 1.0, value: 1.0 }).unwrap();
        let mut m = model(Kernel::heat(1.0, 1).unwrap(), local, lin(1.0), 0.9, Interval::Finite { start: 0.0, end: 1.0 });
        m.q = Some(1.6);
        let r = check_heavy_tail(&m).unwrap();
        assert_eq!(r.overall(), Verdict::Pass, "{}", r.to_text());
        m.chars = LevyCharacteristics::new(0.0, 0.0, st).unwrap();
        let r = check_heavy_tail(&m).unwrap();
        assert_eq!(r.item("modulation-integrable").unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn report_csv_roundtrip() {
        let fin = Interval::Finite { start: 0.0, end: 1.0 };
        let r = check_finite_horizon(&model(Kernel::heat(1.0, 2).unwrap(), LevyCharacteristics::gaussian(1.0).unwrap(), lin(1.0), 2.0, fin)).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let back = ConditionReport::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].items.len(), r.items.len());
        assert_eq!(back[0].overall(), r.overall());
    }

    #[test]
    fn sigma_constants_are_spot_checked() {
        assert!(lin(2.0).with_lipschitz(Some(1.0)).is_err());
        let s = SigmaSpec::new(SigmaFunction::PowerLaw { coef: 1.0, gamma: 0.5 }).unwrap();
        assert!(s.lipschitz.is_none());
        assert!(s.with_lipschitz(Some(10.0)).is_err());
        let s = SigmaSpec::new(SigmaFunction::SoftPower { coef: 0.5, gamma: 0.5, intercept: 0.0 }).unwrap();
        assert_eq!(s.lipschitz, Some(0.25));
    }
}
