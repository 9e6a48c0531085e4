//! Monte Carlo paths of the space–time Riemann scheme, solved by Picard
//! iteration, with moment, stationarity and continuity probes.
//!
//! Nodes sit at the lower corners of the spatial cells and at every grid
//! time. The discrete equation at node (tₙ, xₘ) is
//!
//! Y(tₙ, xₘ) = Y₀(tₙ) + Σ_{i<n} Σ_j W(n−i, m−j) σ(Y(sᵢ, aⱼ)) Λ(cellᵢⱼ)
//!
//! where W is the kernel at a cell corner, or its cell average for the cell
//! adjacent to tₙ. W depends only on index differences, so one table serves
//! every node.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::kernels::{self, Kernel};
use crate::levy_basis::{sample_cell, Cell, JumpMeasure, LevyCharacteristics, SpatialModulation};
use crate::quadrature::{integrate, QuadConfig};
use crate::rng::stream;
use crate::volterra::{self, compare_fields, fmt_f64, Comparison, Field, Interval, TimeGrid};
use crate::wellposedness::{check_finite_horizon, check_infinite_memory, ModelSpec, SigmaFunction, Verdict};

/// Level-N grid: uniform time points ending at T with step 1/N and an
/// axis-aligned box split into cells of side at most 1/N.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeGrid {
    pub times: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
    pub level: usize,
}

impl SpaceTimeGrid {
    pub fn step(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn time_cells(&self) -> usize {
        self.times.len() - 1
    }

    pub fn space_cells(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn nodes(&self) -> usize {
        self.times.len() * self.space_cells()
    }

    pub fn sides(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).zip(&self.counts).map(|((l, h), n)| (h - l) / *n as f64).collect()
    }

    /// Largest of the time step and the cell diameter.
    pub fn mesh(&self) -> f64 {
        let diam = self.sides().iter().map(|s| s * s).sum::<f64>().sqrt();
        self.step().max(diam)
    }

    fn multi_index(&self, mut j: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = j % self.counts[k];
            j /= self.counts[k];
        }
        idx
    }

    /// Lower corner of spatial cell j, which is also the spatial node j.
    pub fn point(&self, j: usize) -> Vec<f64> {
        let sides = self.sides();
        self.multi_index(j).iter().enumerate().map(|(k, i)| self.lo[k] + *i as f64 * sides[k]).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        if self.dim() == 0 { Vec::new() } else { (0..self.space_cells()).map(|j| self.point(j)).collect() }
    }

    pub fn cell(&self, i: usize, j: usize) -> Cell {
        let sides = self.sides();
        let corner = self.point(j);
        let mut lo = vec![self.times[i]];
        let mut hi = vec![self.times[i + 1]];
        lo.extend(corner.iter());
        hi.extend(corner.iter().zip(&sides).map(|(c, s)| c + s));
        Cell::new(lo, hi)
    }

    /// Flat index of the node at (t, x), if it lies on the grid.
    pub fn node_index(&self, t: f64, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let h = self.step();
        let n = ((t - self.times[0]) / h).round();
        if n < 0.0 || n as usize >= self.times.len() || (self.times[n as usize] - t).abs() > 1e-9 * h.max(1.0) {
            return None;
        }
        let sides = self.sides();
        let mut j = 0usize;
        for k in 0..self.dim() {
            let i = ((x[k] - self.lo[k]) / sides[k]).round();
            if i < 0.0 || i as usize >= self.counts[k] || (self.lo[k] + i * sides[k] - x[k]).abs() > 1e-9 * sides[k].max(1.0) {
                return None;
            }
            j = j * self.counts[k] + i as usize;
        }
        Some(n as usize * self.space_cells() + j)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.times[0], *self.times.last().unwrap(), self.step())
    }
}

/// Grid of level N on [max(T − N, t₀), T] × box.
///
/// Time points are s_i = T − (k − i)/N; when t₀ cuts the window the first
/// point is the earliest such point not before t₀.
pub fn build_grid(end: f64, lo: &[f64], hi: &[f64], level: usize, start: Option<f64>) -> Result<SpaceTimeGrid> {
    if level == 0 {
        return invalid("grid level must be at least 1");
    }
    if lo.len() != hi.len() {
        return invalid("box corners differ in dimension");
    }
    if lo.iter().zip(hi).any(|(l, h)| !(h > l) || !l.is_finite() || !h.is_finite()) {
        return invalid("box is empty");
    }
    if !end.is_finite() {
        return invalid("end time must be finite");
    }
    let nf = level as f64;
    let first = start.map_or(end - nf, |s| s.max(end - nf));
    let k = ((end - first) * nf + 1e-9).floor() as usize;
    if k == 0 {
        return invalid("time window shorter than one step");
    }
    let times = (0..=k).map(|i| end - (k - i) as f64 / nf).collect();
    let counts = lo.iter().zip(hi).map(|(l, h)| (((h - l) * nf) - 1e-9).ceil().max(1.0) as usize).collect();
    Ok(SpaceTimeGrid { times, lo: lo.to_vec(), hi: hi.to_vec(), counts, level })
}

/// Grid for a model: ends at the interval end (or `end` for [t₀, ∞)).
pub fn grid_for(model: &ModelSpec, end: Option<f64>, lo: &[f64], hi: &[f64], level: usize) -> Result<SpaceTimeGrid> {
    match model.interval {
        Interval::Finite { start, end: e } => build_grid(end.unwrap_or(e).min(e), lo, hi, level, Some(start)),
        Interval::Past { end: e } => build_grid(end.unwrap_or(e).min(e), lo, hi, level, None),
        Interval::Future { start } => match end {
            Some(e) => build_grid(e, lo, hi, level, Some(start)),
            None => invalid("a half-line [t₀, ∞) needs an explicit end time"),
        },
    }
}

/// Λ(cell) for every (time cell, space cell) of one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    pub time_cells: usize,
    pub space_cells: usize,
    pub values: Vec<f64>,
}

impl NoiseField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.space_cells + j]
    }

    pub fn scaled(&self, c: f64) -> NoiseField {
        NoiseField { values: self.values.iter().map(|v| c * v).collect(), ..self.clone() }
    }
}

/// One independent increment per cell, each from its own stream.
pub fn simulate_noise(chars: &LevyCharacteristics, grid: &SpaceTimeGrid, seed: u64, replicate: u64) -> Result<NoiseField> {
    let m = grid.space_cells();
    let k = grid.time_cells();
    let mut values = Vec::with_capacity(k * m);
    for i in 0..k {
        for j in 0..m {
            let mut rng = stream(seed, replicate, (i * m + j) as u64);
            values.push(sample_cell(chars, &grid.cell(i, j), &mut rng)?.value);
        }
    }
    Ok(NoiseField { time_cells: k, space_cells: m, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Corner {
    #[default]
    LowerLeft,
    UpperRight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub level: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub replicates: usize,
    pub seed: u64,
    pub p: f64,
    pub corner: Corner,
    /// Replicate paths kept in the ensemble for output.
    pub keep_paths: usize,
    /// Refuse models whose applicable well-posedness check fails.
    pub require_wellposed: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { level: 8, tol: 1e-10, max_iter: 500, replicates: 100, seed: 0, p: 2.0, corner: Corner::LowerLeft, keep_paths: 0, require_wellposed: true }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.level == 0 || self.max_iter == 0 || self.replicates == 0 || !(self.tol > 0.0) || !(self.p > 0.0) {
            return invalid("simulation needs positive level, tolerance, iteration cap, replicate count and exponent");
        }
        Ok(())
    }
}

// Toeplitz table of kernel weights, one row per time lag.
struct Stencil {
    span: usize,
    weights: Vec<f64>,
    node_base: Vec<usize>,
    cell_base: Vec<usize>,
}

fn cell_average(k: &Kernel, offs: &[i64], step: f64, sides: &[f64]) -> f64 {
    if let Kernel::Tabulated(_) = k {
        let mid: Vec<f64> = offs.iter().zip(sides).map(|(o, s)| (*o as f64 - 0.5) * s).collect();
        return kernels::evaluate(k, step / 2.0, &mid);
    }
    let lo: Vec<f64> = offs.iter().zip(sides).map(|(o, s)| (*o as f64 - 1.0) * s).collect();
    let hi: Vec<f64> = offs.iter().zip(sides).map(|(o, s)| *o as f64 * s).collect();
    let vol: f64 = sides.iter().product();
    let cfg = QuadConfig { abs_tol: 1e-15, rel_tol: 1e-12, max_intervals: 400 };
    integrate(|t| k.power_over_box(t, 1.0, &lo, &hi).unwrap_or(0.0), 0.0, step, cfg).value / (step * vol)
}

impl Stencil {
    fn new(k: &Kernel, grid: &SpaceTimeGrid, corner: Corner) -> Stencil {
        let d = grid.dim();
        let sides = grid.sides();
        let step = grid.step();
        let spans: Vec<usize> = grid.counts.iter().map(|m| 2 * m - 1).collect();
        let span: usize = spans.iter().product();
        let mut strides = vec![1usize; d];
        for q in (0..d.saturating_sub(1)).rev() {
            strides[q] = strides[q + 1] * spans[q + 1];
        }
        let offsets = |lin: usize| -> Vec<i64> {
            let mut r = lin;
            let mut o = vec![0i64; d];
            for q in 0..d {
                o[q] = (r / strides[q]) as i64 - (grid.counts[q] as i64 - 1);
                r %= strides[q];
            }
            o
        };
        let lags = grid.time_cells();
        let weights: Vec<f64> = (0..lags * span)
            .into_par_iter()
            .map(|e| {
                let (lag, lin) = (e / span + 1, e % span);
                let o = offsets(lin);
                if lag == 1 {
                    return cell_average(k, &o, step, &sides);
                }
                let (tau, shift) = match corner {
                    Corner::LowerLeft => (lag as f64 * step, 0.0),
                    Corner::UpperRight => ((lag - 1) as f64 * step, 1.0),
                };
                let x: Vec<f64> = o.iter().zip(&sides).map(|(oi, s)| (*oi as f64 - shift) * s).collect();
                kernels::evaluate(k, tau, &x)
            })
            .collect();
        let m = grid.space_cells();
        let mut node_base = Vec::with_capacity(m);
        let mut cell_base = Vec::with_capacity(m);
        for j in 0..m {
            let idx = grid.multi_index(j);
            node_base.push((0..d).map(|q| (idx[q] + grid.counts[q] - 1) * strides[q]).sum());
            cell_base.push((0..d).map(|q| idx[q] * strides[q]).sum());
        }
        Stencil { span, weights, node_base, cell_base }
    }

    fn row(&self, lag: usize) -> &[f64] {
        &self.weights[(lag - 1) * self.span..lag * self.span]
    }
}

#[derive(Debug, Clone)]
pub struct PathSolution {
    pub field: Field,
    /// (iteration, discrete sup-norm difference between successive iterates)
    pub trace: Vec<(usize, f64)>,
    /// ∫ over lags beyond the window of ∫ gᵖ dx, for whole-line models.
    pub history_tail: Option<f64>,
}

/// Precomputed scheme for one model and grid; reused across replicates.
pub struct PathSolver<'a> {
    model: &'a ModelSpec,
    grid: &'a SpaceTimeGrid,
    cfg: SimConfig,
    stencil: Stencil,
    force: Vec<f64>,
    constant_sigma: bool,
}

impl<'a> PathSolver<'a> {
    pub fn new(model: &'a ModelSpec, grid: &'a SpaceTimeGrid, cfg: &SimConfig) -> Result<Self> {
        model.validate()?;
        cfg.validate()?;
        if grid.dim() != model.kernel.dim() {
            return invalid("grid and kernel differ in spatial dimension");
        }
        if cfg.require_wellposed {
            let report = match model.interval {
                Interval::Past { .. } => check_infinite_memory(model)?,
                _ => check_finite_horizon(model)?,
            };
            if report.overall() == Verdict::Fail {
                let ids: Vec<&str> = report.failures().iter().map(|i| i.id.as_str()).collect();
                return invalid(format!("model fails the {} check at {}", report.checker, ids.join(", ")));
            }
        }
        let m = grid.space_cells();
        let force = grid.times.iter().flat_map(|t| std::iter::repeat(model.y0.at(*t)).take(m)).collect();
        let constant_sigma = matches!(model.sigma.function, SigmaFunction::Zero | SigmaFunction::Constant(_));
        Ok(PathSolver { model, grid, cfg: cfg.clone(), stencil: Stencil::new(&model.kernel, grid, cfg.corner), force, constant_sigma })
    }

    pub fn force(&self) -> &[f64] {
        &self.force
    }

    fn check_noise(&self, noise: &NoiseField) -> Result<()> {
        if noise.time_cells != self.grid.time_cells() || noise.space_cells != self.grid.space_cells() {
            return invalid("noise field does not match the grid");
        }
        Ok(())
    }

    /// One Picard sweep: force plus the discrete stochastic integral of σ(y).
    pub fn sweep(&self, y: &[f64], noise: &NoiseField) -> Vec<f64> {
        self.sweep_with(&self.force, y, noise)
    }

    fn sweep_with(&self, force: &[f64], y: &[f64], noise: &NoiseField) -> Vec<f64> {
        let m = self.grid.space_cells();
        let k = self.grid.time_cells();
        let sigma = &self.model.sigma;
        let u: Vec<f64> = noise.values.iter().enumerate().map(|(c, l)| if *l == 0.0 { 0.0 } else { sigma.eval(y[c]) * l }).collect();
        let active: Vec<bool> = (0..k).map(|i| u[i * m..(i + 1) * m].iter().any(|v| *v != 0.0)).collect();
        let st = &self.stencil;
        (0..(k + 1) * m)
            .into_par_iter()
            .map(|node| {
                let (n, mm) = (node / m, node % m);
                let base = st.node_base[mm];
                let mut acc = 0.0;
                for i in (0..n).filter(|i| active[*i]) {
                    let row = st.row(n - i);
                    let ui = &u[i * m..(i + 1) * m];
                    for (j, v) in ui.iter().enumerate() {
                        acc += row[base - st.cell_base[j]] * v;
                    }
                }
                force[node] + acc
            })
            .collect()
    }

    /// Picard iteration from Y⁰ = Y₀ to the configured sup-norm tolerance.
    /// For constant σ the first iterate is already the fixed point.
    pub fn solve(&self, noise: &NoiseField) -> Result<PathSolution> {
        self.solve_from(&self.force, noise)
    }

    /// As [`solve`](Self::solve) with a different force field on the nodes.
    pub fn solve_with_force(&self, force: &[f64], noise: &NoiseField) -> Result<PathSolution> {
        if force.len() != self.force.len() {
            return invalid("force does not match the grid");
        }
        self.solve_from(force, noise)
    }

    fn solve_from(&self, force: &[f64], noise: &NoiseField) -> Result<PathSolution> {
        self.check_noise(noise)?;
        let mut y = force.to_vec();
        let mut trace: Vec<(usize, f64)> = Vec::new();
        for it in 1..=self.cfg.max_iter {
            let next = self.sweep_with(force, &y, noise);
            let diff = next.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            trace.push((it, diff));
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::PicardDivergence { iterations: it, residual: f64::INFINITY, trace });
            }
            y = next;
            if diff < self.cfg.tol || self.constant_sigma {
                return Ok(PathSolution { field: self.field(y), trace, history_tail: self.history_tail() });
            }
            if trace.len() >= 6 && trace[trace.len() - 6..].windows(2).all(|w| w[1].1 > w[0].1) {
                return Err(Error::PicardDivergence { iterations: it, residual: diff, trace });
            }
        }
        let residual = trace.last().map_or(f64::NAN, |r| r.1);
        Err(Error::NotConverged { iterations: self.cfg.max_iter, residual })
    }

    fn field(&self, values: Vec<f64>) -> Field {
        Field { times: self.grid.times.clone(), points: self.grid.points(), values, eta: 0.0 }
    }

    fn history_tail(&self) -> Option<f64> {
        if !matches!(self.model.interval, Interval::Past { .. }) {
            return None;
        }
        let len = self.grid.times.last().unwrap() - self.grid.times[0];
        let full = kernels::lp_norm(&self.model.kernel, self.cfg.p, f64::INFINITY).ok()?.value;
        let head = kernels::lp_norm(&self.model.kernel, self.cfg.p, len).ok()?.value;
        Some(if full.is_finite() { (full - head).max(0.0) } else { f64::INFINITY })
    }

    /// Lipschitz constant times the largest Σ |W||Λ| over nodes: the sup-norm
    /// contraction factor of the discrete operator for this noise.
    pub fn contraction(&self, noise: &NoiseField) -> Result<f64> {
        self.check_noise(noise)?;
        let lip = self.model.sigma.lipschitz.ok_or_else(|| Error::InvalidParameter("σ has no Lipschitz constant".into()))?;
        let m = self.grid.space_cells();
        let k = self.grid.time_cells();
        let st = &self.stencil;
        let worst = (0..(k + 1) * m)
            .into_par_iter()
            .map(|node| {
                let (n, mm) = (node / m, node % m);
                let mut acc = 0.0;
                for i in 0..n {
                    let row = st.row(n - i);
                    for j in 0..m {
                        acc += (row[st.node_base[mm] - st.cell_base[j]] * noise.at(i, j)).abs();
                    }
                }
                acc
            })
            .reduce(|| 0.0, f64::max);
        Ok(lip * worst)
    }

    /// Exact mean and variance of the scheme at a node when σ is constant.
    pub fn additive_moments(&self, node: usize) -> Result<(f64, f64)> {
        let (mean, _, cov) = self.additive_second_order(node, node)?;
        Ok((mean, cov))
    }

    /// Exact (E Y_a, E Y_b, Cov(Y_a, Y_b)) when σ is constant.
    pub fn additive_second_order(&self, a: usize, b: usize) -> Result<(f64, f64, f64)> {
        let s = match self.model.sigma.function {
            SigmaFunction::Zero => 0.0,
            SigmaFunction::Constant(c) => c,
            _ => return invalid("exact node moments need a constant σ"),
        };
        let chars = &self.model.chars;
        let (large_mean, second) = match chars.jumps {
            JumpMeasure::None => (Some(0.0), 0.0),
            ref j => (j.signed_first_moment(1.0, f64::INFINITY), j.abs_power_between(2.0, 0.0, f64::INFINITY)),
        };
        let large_mean = match large_mean {
            Some(v) if second.is_finite() => v,
            _ => return invalid("exact node moments need finite first and second jump moments"),
        };
        let m = self.grid.space_cells();
        let st = &self.stencil;
        let vol = self.grid.step() * self.grid.sides().iter().product::<f64>();
        let weight = |node: usize, i: usize, j: usize| {
            let (n, mm) = (node / m, node % m);
            if i < n { st.row(n - i)[st.node_base[mm] - st.cell_base[j]] } else { 0.0 }
        };
        let (mut ma, mut mb, mut cov) = (0.0, 0.0, 0.0);
        for j in 0..m {
            let cell = self.grid.cell(0, j);
            let pi1 = chars.modulation.as_ref().map_or(1.0, |md| md.cell_average(&cell.lo[1..], &cell.hi[1..]));
            let mu = (chars.b + pi1 * large_mean) * vol;
            let v = (chars.c + pi1 * second) * vol;
            for i in 0..self.grid.time_cells() {
                let (wa, wb) = (weight(a, i, j), weight(b, i, j));
                ma += wa * mu;
                mb += wb * mu;
                cov += wa * wb * v;
            }
        }
        Ok((self.force[a] + s * ma, self.force[b] + s * mb, s * s * cov))
    }
}

pub fn solve_path(model: &ModelSpec, grid: &SpaceTimeGrid, noise: &NoiseField, cfg: &SimConfig) -> Result<PathSolution> {
    PathSolver::new(model, grid, cfg)?.solve(noise)
}

fn run_replicates<T: Send>(model: &ModelSpec, grid: &SpaceTimeGrid, cfg: &SimConfig, f: impl Fn(u64, PathSolution) -> T + Sync) -> Result<Vec<T>> {
    let solver = PathSolver::new(model, grid, cfg)?;
    (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let noise = simulate_noise(&model.chars, grid, cfg.seed, r)?;
            Ok(f(r, solver.solve(&noise)?))
        })
        .collect()
}

/// Per-node mean and sum of squared deviations, merged in a fixed order.
#[derive(Debug, Clone)]
struct Accumulator {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Accumulator { n: 0.0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / self.n;
            *s += d * (v - *m);
        }
    }

    fn merge(&mut self, o: &Accumulator) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        for k in 0..self.mean.len() {
            let d = o.mean[k] - self.mean[k];
            self.mean[k] += d * o.n / n;
            self.m2[k] += o.m2[k] + d * d * self.n * o.n / n;
        }
        self.n = n;
    }

    // Leave-one-out jackknife of a sample mean: Σ(θ₍ᵢ₎ − θ̄)²(R−1)/R = s²/R.
    fn jackknife_se(&self) -> Vec<f64> {
        let r = self.n;
        self.m2.iter().map(|s| if r > 1.0 { (s / (r * (r - 1.0))).sqrt() } else { f64::NAN }).collect()
    }
}

const CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum Moments {
    Estimated { mean: Vec<f64>, se: Vec<f64> },
    NotEstimable { reason: String },
}

#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub replicates: usize,
    pub seed: u64,
    pub p: f64,
    pub eta: f64,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub moments: Moments,
    /// sup over nodes of (E|Y|ᵖ / w)^{1/(p∨1)}
    pub weighted_sup: Option<f64>,
    pub paths: Vec<Field>,
}

/// Reason the p-th moment does not exist, if it does not.
pub fn moment_obstruction(chars: &LevyCharacteristics, p: f64) -> Option<String> {
    if let JumpMeasure::AlphaStable { alpha, scale, .. } = chars.jumps {
        if scale > 0.0 && p >= alpha {
            return Some(format!("not estimable: p = {p} ≥ stability index α = {alpha}"));
        }
    }
    let tail = chars.jumps.abs_power_between(p, 1.0, f64::INFINITY);
    if !tail.is_finite() {
        return Some(format!("not estimable: large jumps have no finite moment of order {p}"));
    }
    None
}

/// R independent paths and per-node estimates of E|Y(t,x)|ᵖ.
pub fn estimate_moments(model: &ModelSpec, grid: &SpaceTimeGrid, cfg: &SimConfig) -> Result<PathEnsemble> {
    let mut ens = PathEnsemble {
        replicates: cfg.replicates,
        seed: cfg.seed,
        p: cfg.p,
        eta: model.eta,
        times: grid.times.clone(),
        points: grid.points(),
        moments: Moments::NotEstimable { reason: String::new() },
        weighted_sup: None,
        paths: Vec::new(),
    };
    if let Some(reason) = moment_obstruction(&model.chars, cfg.p) {
        ens.moments = Moments::NotEstimable { reason };
        return Ok(ens);
    }
    let solver = PathSolver::new(model, grid, cfg)?;
    let nodes = grid.nodes();
    let p = cfg.p;
    let chunks = cfg.replicates.div_ceil(CHUNK);
    let parts: Vec<(Accumulator, Vec<Field>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Accumulator::new(nodes);
            let mut kept = Vec::new();
            let mut buf = vec![0.0; nodes];
            for r in c * CHUNK..((c + 1) * CHUNK).min(cfg.replicates) {
                let noise = simulate_noise(&model.chars, grid, cfg.seed, r as u64)?;
                let sol = solver.solve(&noise)?;
                for (b, y) in buf.iter_mut().zip(&sol.field.values) {
                    *b = y.abs().powf(p);
                }
                acc.push(&buf);
                if r < cfg.keep_paths {
                    kept.push(sol.field);
                }
            }
            Ok((acc, kept))
        })
        .collect::<Result<_>>()?;
    let mut total = Accumulator::new(nodes);
    for (a, kept) in &parts {
        total.merge(a);
        ens.paths.extend(kept.iter().cloned());
    }
    let m = grid.space_cells();
    let sup = total
        .mean
        .iter()
        .enumerate()
        .map(|(k, v)| (v / (model.eta * grid.times[k / m]).exp()).powf(1.0 / p.max(1.0)))
        .fold(f64::NEG_INFINITY, f64::max);
    ens.weighted_sup = Some(sup);
    ens.moments = Moments::Estimated { se: total.jackknife_se(), mean: total.mean };
    Ok(ens)
}

/// Moment bound on the ensemble's scale E|Y|ᵖ, one value per grid time.
pub fn moment_envelope(model: &ModelSpec, grid: &SpaceTimeGrid, tol: f64) -> Result<Field> {
    let p = model.p;
    let tg = grid.time_grid()?;
    let b = volterra::moment_bound(model, &tg, tol)?;
    let values = b
        .times
        .iter()
        .zip(&b.values)
        .map(|(t, v)| {
            let w = (model.eta * t).exp();
            if p >= 1.0 { v.powf(p) * w } else { v * w }
        })
        .collect();
    Ok(Field::homogeneous(b.times, values, 0.0))
}

impl PathEnsemble {
    pub fn estimate_field(&self) -> Option<Field> {
        match &self.moments {
            Moments::Estimated { mean, .. } => Some(Field { times: self.times.clone(), points: self.points.clone(), values: mean.clone(), eta: 0.0 }),
            Moments::NotEstimable { .. } => None,
        }
    }

    /// Estimates ≤ bound + 3 SE at every node.
    pub fn dominated_by(&self, envelope: &Field) -> Result<Comparison> {
        let est = self.estimate_field().ok_or_else(|| Error::Unsupported("moments are not estimable".into()))?;
        let Moments::Estimated { se, .. } = &self.moments else { unreachable!() };
        let slack: Vec<f64> = se.iter().map(|s| 3.0 * s).collect();
        compare_fields(envelope, &est, Some(&slack))
    }

    /// Columns t, x1..xd, moment, se, bound.
    pub fn write_summary_csv<W: Write>(&self, w: W, envelope: Option<&Field>) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let d = self.points.first().map_or(0, |p| p.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|k| format!("x{k}")));
        header.extend(["moment", "se", "bound"].map(String::from));
        wr.write_record(&header)?;
        let width = self.points.len().max(1);
        for (i, t) in self.times.iter().enumerate() {
            for j in 0..width {
                let k = i * width + j;
                let mut row = vec![fmt_f64(*t)];
                if let Some(p) = self.points.get(j) {
                    row.extend(p.iter().map(|x| fmt_f64(*x)));
                }
                match &self.moments {
                    Moments::Estimated { mean, se } => {
                        row.push(fmt_f64(mean[k]));
                        row.push(fmt_f64(se[k]));
                    }
                    Moments::NotEstimable { .. } => {
                        row.push("not-estimable".into());
                        row.push("not-estimable".into());
                    }
                }
                row.push(envelope.map_or(String::new(), |e| fmt_f64(e.at(i, 0))));
                wr.write_record(&row)?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Columns replicate, t, x1..xd, value for the kept paths.
    pub fn write_paths_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let d = self.points.first().map_or(0, |p| p.len());
        let mut header = vec!["replicate".to_string(), "t".to_string()];
        header.extend((1..=d).map(|k| format!("x{k}")));
        header.push("value".into());
        wr.write_record(&header)?;
        let width = self.points.len().max(1);
        for (r, f) in self.paths.iter().enumerate() {
            for (i, t) in f.times.iter().enumerate() {
                for j in 0..width {
                    let mut row = vec![r.to_string(), fmt_f64(*t)];
                    if let Some(p) = self.points.get(j) {
                        row.extend(p.iter().map(|x| fmt_f64(*x)));
                    }
                    row.push(fmt_f64(f.at(i, j)));
                    wr.write_record(&row)?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

// mean and standard error of paired differences; z = 0 when both vanish
fn paired_z(d: &[f64]) -> (f64, f64) {
    let mut acc = Accumulator::new(1);
    for v in d {
        acc.push(&[*v]);
    }
    let se = acc.jackknife_se()[0];
    let m = acc.mean[0];
    let z = if se > 0.0 {
        m / se
    } else if m == 0.0 {
        0.0
    } else {
        m.signum() * f64::INFINITY
    };
    (m, z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub statistic: String,
    /// time shift followed by the spatial shift
    pub shift: Vec<f64>,
    pub base: f64,
    pub shifted: f64,
    /// standardized paired discrepancy
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub rows: Vec<ProbeRow>,
    pub max_abs_z: f64,
    /// some |z| ≥ 3
    pub flagged: bool,
}

fn require_homogeneous(model: &ModelSpec) -> Result<()> {
    match model.chars.modulation {
        None | Some(SpatialModulation::Constant(_)) => Ok(()),
        Some(_) => Err(Error::Unsupported("probe needs homogeneous characteristics".into())),
    }
}

/// Compare mean, second moment and one temporal and one spatial lag product
/// at `base` against the same statistics at base + shift.
pub fn stationarity_probe(model: &ModelSpec, grid: &SpaceTimeGrid, base: &[f64], shifts: &[Vec<f64>], cfg: &SimConfig) -> Result<StationarityReport> {
    require_homogeneous(model)?;
    let d = grid.dim();
    let m = grid.space_cells();
    let resolve = |pt: &[f64]| -> Result<Vec<usize>> {
        let (t, x) = (pt[0], &pt[1..]);
        let node = grid.node_index(t, x).ok_or_else(|| Error::InvalidParameter(format!("probe point {pt:?} is not a grid node")))?;
        let mut v = vec![node];
        if node < m {
            return invalid("probe point needs one earlier time node");
        }
        v.push(node - m);
        if d > 0 {
            let mut x1 = x.to_vec();
            x1[0] -= grid.sides()[0];
            let nb = grid.node_index(t, &x1).ok_or_else(|| Error::InvalidParameter("probe point needs a spatial neighbour".into()))?;
            v.push(nb);
        }
        Ok(v)
    };
    if base.len() != d + 1 || shifts.iter().any(|s| s.len() != d + 1) {
        return invalid("probe points and shifts need a time and d space coordinates");
    }
    let b = resolve(base)?;
    let others: Vec<Vec<usize>> = shifts
        .iter()
        .map(|s| resolve(&base.iter().zip(s).map(|(a, b)| a + b).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let stats = |y: &[f64], v: &[usize]| -> Vec<f64> {
        let mut s = vec![y[v[0]], y[v[0]] * y[v[0]], y[v[0]] * y[v[1]]];
        if v.len() > 2 {
            s.push(y[v[0]] * y[v[2]]);
        }
        s
    };
    let samples = run_replicates(model, grid, cfg, |_, sol| {
        let y = &sol.field.values;
        let sb = stats(y, &b);
        others.iter().map(|o| (sb.clone(), stats(y, o))).collect::<Vec<_>>()
    })?;
    let labels = ["mean", "second_moment", "time_lag_product", "space_lag_product"];
    let mut rows = Vec::new();
    for (k, s) in shifts.iter().enumerate() {
        for (q, label) in labels.iter().enumerate().take(samples[0][k].0.len()) {
            let diffs: Vec<f64> = samples.iter().map(|r| r[k].0[q] - r[k].1[q]).collect();
            let (_, z) = paired_z(&diffs);
            let n = samples.len() as f64;
            let base_mean = samples.iter().map(|r| r[k].0[q]).sum::<f64>() / n;
            let shifted_mean = samples.iter().map(|r| r[k].1[q]).sum::<f64>() / n;
            rows.push(ProbeRow { statistic: label.to_string(), shift: s.clone(), base: base_mean, shifted: shifted_mean, z });
        }
    }
    let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    Ok(StationarityReport { rows, max_abs_z, flagged: max_abs_z >= 3.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityRow {
    pub offset: Vec<f64>,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    pub rows: Vec<ContinuityRow>,
    /// each estimate ≤ the previous one + 2 combined SE
    pub nonincreasing: bool,
}

/// E|Y(node) − Y(node + offset)|ᵖ for each offset, listed from large to small.
pub fn continuity_probe(model: &ModelSpec, grid: &SpaceTimeGrid, node: &[f64], offsets: &[Vec<f64>], cfg: &SimConfig) -> Result<ContinuityReport> {
    let d = grid.dim();
    if node.len() != d + 1 || offsets.iter().any(|o| o.len() != d + 1) {
        return invalid("node and offsets need a time and d space coordinates");
    }
    let find = |pt: &[f64]| grid.node_index(pt[0], &pt[1..]).ok_or_else(|| Error::InvalidParameter(format!("point {pt:?} is not a grid node")));
    let a = find(node)?;
    let others: Vec<usize> = offsets.iter().map(|o| find(&node.iter().zip(o).map(|(x, y)| x + y).collect::<Vec<_>>())).collect::<Result<_>>()?;
    let p = cfg.p;
    let samples = run_replicates(model, grid, cfg, |_, sol| {
        let y = &sol.field.values;
        others.iter().map(|b| (y[a] - y[*b]).abs().powf(p)).collect::<Vec<f64>>()
    })?;
    let mut acc = Accumulator::new(others.len());
    for s in &samples {
        acc.push(s);
    }
    let se = acc.jackknife_se();
    let rows: Vec<ContinuityRow> = offsets.iter().enumerate().map(|(k, o)| ContinuityRow { offset: o.clone(), estimate: acc.mean[k], se: se[k] }).collect();
    let nonincreasing = rows.windows(2).all(|w| w[1].estimate <= w[0].estimate + 2.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt());
    Ok(ContinuityReport { rows, nonincreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wellposedness::{InitialData, SigmaSpec};

    fn model(kernel: Kernel, chars: LevyCharacteristics, sigma: SigmaFunction, interval: Interval, y0: f64) -> ModelSpec {
        ModelSpec {
            kernel,
            chars,
            sigma: SigmaSpec::new(sigma).unwrap(),
            p: 2.0,
            q: None,
            drift_conv: None,
            eta: 0.0,
            interval,
            y0: InitialData::constant(y0),
        }
    }

    #[test]
    fn grid_examples() {
        let g = build_grid(1.0, &[-1.0], &[1.0], 2, None).unwrap();
        assert_eq!(g.times, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.counts, vec![4]);
        assert_eq!(g.sides(), vec![0.5]);
        let u = build_grid(3.0, &[0.0], &[1.0], 1, None).unwrap();
        assert_eq!(u.counts, vec![1]);
        assert_eq!(u.step(), 1.0);
        let g2 = build_grid(1.0, &[-1.0], &[1.0], 2, Some(-10.0)).unwrap();
        let g4 = build_grid(1.0, &[-1.0], &[1.0], 4, Some(-10.0)).unwrap();
        assert_eq!(g4.mesh(), g2.mesh() / 2.0);
        assert!(build_grid(1.0, &[0.0], &[0.0], 2, None).is_err());
        assert_eq!(g.node_index(0.5, &[0.0]), Some(3 * 4 + 2));
        assert_eq!(g.node_index(0.25, &[0.0]), None);
    }

    #[test]
    fn drift_noise_is_the_cell_volume_times_drift() {
        let g = build_grid(1.0, &[0.0], &[1.0], 1, None).unwrap();
        let chars = LevyCharacteristics::new(2.0, 0.0, JumpMeasure::None).unwrap();
        let n = simulate_noise(&chars, &g, 9, 0).unwrap();
        assert_eq!(n.values, vec![2.0]);
        let gauss = LevyCharacteristics::gaussian(1.0).unwrap();
        let g = build_grid(1.0, &[0.0, 0.0], &[2.0, 2.0], 2, None).unwrap();
        assert_eq!(simulate_noise(&gauss, &g, 3, 1).unwrap(), simulate_noise(&gauss, &g, 3, 1).unwrap());
        assert_ne!(simulate_noise(&gauss, &g, 3, 1).unwrap(), simulate_noise(&gauss, &g, 3, 2).unwrap());
    }

    #[test]
    fn zero_sigma_returns_the_force() {
        let m = model(Kernel::heat(1.0, 1).unwrap(), LevyCharacteristics::gaussian(1.0).unwrap(), SigmaFunction::Zero, Interval::Finite { start: 0.0, end: 2.0 }, 3.0);
        let g = grid_for(&m, None, &[-1.0], &[1.0], 4).unwrap();
        let noise = simulate_noise(&m.chars, &g, 1, 0).unwrap();
        let sol = solve_path(&m, &g, &noise, &SimConfig::default()).unwrap();
        assert!(sol.field.values.iter().all(|v| *v == 3.0));
        assert_eq!(sol.trace.len(), 1);
    }

    #[test]
    fn lebesgue_noise_on_the_exponential_kernel_approaches_two() {
        let lebesgue = LevyCharacteristics::new(1.0, 0.0, JumpMeasure::None).unwrap();
        let mut last = f64::INFINITY;
        for level in [8, 16, 32] {
            let m = model(
                Kernel::exponential(2.0).unwrap(),
                lebesgue.clone(),
                SigmaFunction::Affine { slope: 1.0, intercept: 0.0 },
                Interval::Finite { start: 0.0, end: 10.0 },
                1.0,
            );
            let g = grid_for(&m, None, &[], &[], level).unwrap();
            let noise = simulate_noise(&m.chars, &g, 0, 0).unwrap();
            let sol = solve_path(&m, &g, &noise, &SimConfig { tol: 1e-13, ..SimConfig::default() }).unwrap();
            let err = (sol.field.values.last().unwrap() - 2.0).abs();
            // first order in the step
            assert!(last / err > 1.6, "{last} → {err}");
            last = err;
        }
        assert!(last < 0.1, "{last}");
    }

    #[test]
    fn jackknife_matches_sample_standard_error() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0];
        let mut acc = Accumulator::new(1);
        for x in xs {
            acc.push(&[x]);
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let loo: Vec<f64> = xs.iter().map(|x| (n * mean - x) / (n - 1.0)).collect();
        let lbar = loo.iter().sum::<f64>() / n;
        let jk = ((n - 1.0) / n * loo.iter().map(|l| (l - lbar).powi(2)).sum::<f64>()).sqrt();
        assert!((acc.jackknife_se()[0] - jk).abs() < 1e-12);
        let mut a = Accumulator::new(1);
        let mut b = Accumulator::new(1);
        xs[..2].iter().for_each(|x| a.push(&[*x]));
        xs[2..].iter().for_each(|x| b.push(&[*x]));
        a.merge(&b);
        assert!((a.mean[0] - acc.mean[0]).abs() < 1e-12 && (a.m2[0] - acc.m2[0]).abs() < 1e-12);
    }

    #[test]
    fn stable_moments_beyond_the_index_are_not_estimable() {
        let st = LevyCharacteristics::new(0.0, 0.0, JumpMeasure::alpha_stable(1.5, 1.0, 0.0).unwrap()).unwrap();
        assert!(moment_obstruction(&st, 1.6).is_some());
        assert!(moment_obstruction(&st, 1.2).is_none());
    }
}
