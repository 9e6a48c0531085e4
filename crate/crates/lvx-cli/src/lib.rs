//! Batch front-end: model files in, condition reports and CSV tables out.

pub mod config;
mod presets;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lvx::kernels::Kernel;
use lvx::simulator::{estimate_moments, grid_for, moment_envelope, simulate_noise, solve_path, SimConfig};
use lvx::volterra::{
    exp_kernel_family, find_contraction_partition, moment_bound, moment_problem, default_bound_kind, picard_solve,
    stability_fixed_point, write_trace_csv, Field, Force, Interval, KernelTerm, PicardSolution, TimeGrid, VolterraProblem,
    VolterraTerm,
};
use lvx::wellposedness::{
    check_asymptotic_stability, check_finite_horizon, check_heavy_tail, check_infinite_memory, ConditionReport, ModelSpec,
    Verdict,
};

pub use config::Config;
pub use presets::{preset, preset_names};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("numerical failure: {message}")]
    Numerical { message: String, trace: Vec<(usize, f64)> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical { .. } => 3,
            _ => 1,
        }
    }
}

impl From<lvx::Error> for CliError {
    fn from(e: lvx::Error) -> Self {
        use lvx::Error as E;
        match e {
            E::PicardDivergence { iterations, residual, trace } => {
                let message = E::PicardDivergence { iterations, residual, trace: Vec::new() }.to_string();
                CliError::Numerical { message, trace }
            }
            E::Numerical(_) | E::Divergence(_) | E::NoContraction { .. } | E::NotConverged { .. } => {
                CliError::Numerical { message: e.to_string(), trace: Vec::new() }
            }
            E::Io(io) => CliError::Io(io),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    Volterra,
    Simulate,
    Stability,
    ReproduceExample,
}

impl std::str::FromStr for Command {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "check" => Command::Check,
            "volterra" => Command::Volterra,
            "simulate" => Command::Simulate,
            "stability" => Command::Stability,
            "reproduce-example" => Command::ReproduceExample,
            _ => return Err(CliError::Usage(format!("unknown command {s:?}"))),
        })
    }
}

/// One invocation: command, model file (or example name), overrides and output directory.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub config: String,
    pub overrides: Vec<String>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub verbosity: u8,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub verdict: Option<Verdict>,
    pub expected: Option<Verdict>,
    pub summary: String,
}

fn verdict_code(v: Verdict) -> i32 {
    if v == Verdict::Pass { 0 } else { 2 }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn write_pairs(dir: &Path, trace: &[(usize, f64)]) -> Result<(), CliError> {
    let mut w = create(dir, "trace.csv")?;
    writeln!(w, "iteration,sup_difference")?;
    for (i, d) in trace {
        writeln!(w, "{i},{d:e}")?;
    }
    w.flush()?;
    Ok(())
}

fn write_field(dir: &Path, name: &str, f: &Field) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    f.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_report(dir: &Path, reports: &[&ConditionReport], extra: &str) -> Result<(), CliError> {
    let mut text = String::new();
    for r in reports {
        text.push_str(&r.to_text());
    }
    text.push_str(extra);
    write_text(dir, "report.txt", &text)?;
    let mut w = create(dir, "report.csv")?;
    for (k, r) in reports.iter().enumerate() {
        let mut buf = Vec::new();
        r.write_csv(&mut buf)?;
        // one header for the whole file
        let body = if k == 0 { &buf[..] } else { &buf[buf.iter().position(|&b| b == b'\n').map_or(0, |i| i + 1)..] };
        w.write_all(body)?;
    }
    w.flush()?;
    Ok(())
}

/// Checker chosen by `[run] checker`; `auto` follows the interval.
pub fn condition_report(cfg: &Config, model: &ModelSpec) -> Result<ConditionReport, CliError> {
    let auto = if matches!(model.interval, Interval::Past { .. }) { "infinite-memory" } else { "finite-horizon" };
    let name = match cfg.word_or("run", "checker", "auto") {
        "auto" => auto,
        other => other,
    };
    Ok(match name {
        "finite-horizon" => check_finite_horizon(model)?,
        "heavy-tail" => check_heavy_tail(model)?,
        "infinite-memory" => check_infinite_memory(model)?,
        "stability" => check_asymptotic_stability(model)?,
        other => return Err(CliError::Config(format!("[run] checker: unknown checker {other:?}"))),
    })
}

fn check(cfg: &Config, out: &Path, stability: bool) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let report = if stability { check_asymptotic_stability(&model)? } else { condition_report(cfg, &model)? };
    write_report(out, &[&report], "")?;
    let v = report.overall();
    let mut summary = format!("{}: {v}", report.checker);
    for f in report.failures() {
        summary.push_str(&format!("\n  failed: {} ({})", f.id, f.anchor));
    }
    Ok(Outcome { code: verdict_code(v), verdict: Some(v), expected: None, summary })
}

fn step_grid(cfg: &Config, problem: &VolterraProblem) -> Result<TimeGrid, CliError> {
    let step = cfg.f64_or("run", "step", 0.01)?;
    let tol = cfg.f64_or("run", "tolerance", 1e-10)?;
    Ok(match problem.interval {
        Interval::Future { start } => TimeGrid::new(start, cfg.f64_req("run", "end_time")?, step)?,
        _ => problem.grid(step, tol)?,
    })
}

fn single_term_problem(kernel: Kernel, inner: f64, force: Force, interval: Interval) -> VolterraProblem {
    let term = VolterraTerm { inner_exp: inner, ..VolterraTerm::linear(KernelTerm::plain(kernel)) };
    VolterraProblem { terms: vec![term], force, interval }
}

fn solve_summary(sol: &PicardSolution) -> String {
    let mut s = format!("iterations: {}\nsup: {}\n", sol.trace.len(), sol.field.sup());
    if let Some(p) = &sol.partition {
        s.push_str(&format!("partition intervals: {}\nrho: {}\n", p.intervals(), p.rho));
    }
    s
}

fn write_solution(out: &Path, sol: &PicardSolution, text: &str) -> Result<(), CliError> {
    write_field(out, "field.csv", &sol.field)?;
    let mut w = create(out, "trace.csv")?;
    write_trace_csv(&sol.trace, &mut w)?;
    w.flush()?;
    write_text(out, "report.txt", text)
}

fn volterra(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let tol = cfg.f64_or("run", "tolerance", 1e-10)?;
    let max_iter = cfg.usize_or("run", "max_iterations", 500)?;
    let equation = cfg.word_or("run", "equation", "linear");
    let problem = match equation {
        "linear" | "fractional" => {
            let inner = if equation == "linear" { 1.0 } else { cfg.f64_req("run", "inner_exponent")? };
            single_term_problem(cfg.kernel()?, inner, cfg.force()?, cfg.interval()?)
        }
        "moment-bound" => {
            let model = cfg.model()?;
            moment_problem(&model, default_bound_kind(&model)?)?
        }
        other => return Err(CliError::Config(format!("[run] equation: expected linear, fractional or moment-bound, found {other:?}"))),
    };
    let grid = step_grid(cfg, &problem)?;
    let sol = if equation == "moment-bound" {
        let model = cfg.model()?;
        let field = moment_bound(&model, &grid, tol)?;
        PicardSolution { field, trace: Vec::new(), partition: None }
    } else {
        picard_solve(&problem, &grid, tol, max_iter)?
    };
    let text = format!("equation: {equation}\n{}", solve_summary(&sol));
    write_solution(out, &sol, &text)?;
    Ok(Outcome { code: 0, verdict: None, expected: None, summary: text.trim_end().to_string() })
}

fn simulate(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let sim = cfg.sim()?;
    let (lo, hi) = cfg.spatial_box(model.kernel.dim())?;
    let end = cfg.f64_opt("run", "end_time")?;
    let grid = grid_for(&model, end, &lo, &hi, sim.level)?;
    let report = condition_report(cfg, &model)?;
    let v = report.overall();
    if v == Verdict::Fail && sim.require_wellposed {
        write_report(out, &[&report], "simulation refused: the model fails its well-posedness check\n")?;
        return Ok(Outcome { code: 2, verdict: Some(v), expected: None, summary: format!("{}: fail; simulation refused", report.checker) });
    }
    let sim = SimConfig { require_wellposed: false, ..sim };
    let noise = simulate_noise(&model.chars, &grid, sim.seed, 0)?;
    let first = solve_path(&model, &grid, &noise, &sim)?;
    write_field(out, "field.csv", &first.field)?;
    write_pairs(out, &first.trace)?;
    let ens = estimate_moments(&model, &grid, &sim)?;
    let envelope = if v == Verdict::Pass && model.sigma.lipschitz.is_some() { moment_envelope(&model, &grid, sim.tol).ok() } else { None };
    let mut w = create(out, "moments.csv")?;
    ens.write_summary_csv(&mut w, envelope.as_ref())?;
    w.flush()?;
    if !ens.paths.is_empty() {
        let mut w = create(out, "paths.csv")?;
        ens.write_paths_csv(&mut w)?;
        w.flush()?;
    }
    let mut extra = format!(
        "simulation: level {} with {} time points and {} spatial cells, {} replicates, seed {}\n",
        grid.level,
        grid.times.len(),
        grid.space_cells(),
        ens.replicates,
        ens.seed
    );
    if let Some(s) = ens.weighted_sup {
        extra.push_str(&format!("weighted moment sup: {s}\n"));
    }
    if let lvx::simulator::Moments::NotEstimable { reason } = &ens.moments {
        extra.push_str(&format!("moments: {reason}\n"));
    }
    if let Some(env) = &envelope {
        let c = ens.dominated_by(env)?;
        extra.push_str(&format!("dominated by the moment bound (3 SE slack): {}\n", c.pass));
    }
    if let Some(t) = first.history_tail {
        extra.push_str(&format!("kernel tail beyond the window: {t:e}\n"));
    }
    write_report(out, &[&report], &extra)?;
    Ok(Outcome { code: 0, verdict: Some(v), expected: None, summary: format!("{}: {v}\n{}", report.checker, extra.trim_end()) })
}

fn exp_family(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let lambda = cfg.f64_req("kernel", "rate_per_unit_time")?;
    let alpha = cfg.f64_or("run", "force_rate_per_unit_time", 0.0)?;
    let fam = exp_kernel_family(lambda, Some(alpha));
    let mut text = format!("lambda: {lambda}\nalpha: {alpha}\nfamily: {}\nbounded_unique: {}\n", fam.describe(), fam.bounded_unique);
    if lambda > 0.0 {
        let force = if alpha == 0.0 { Force::constant(1.0) } else { Force::exponential(1.0, alpha) };
        let problem = single_term_problem(Kernel::exponential(lambda)?, 1.0, force, Interval::Past { end: cfg.f64_or("run", "end_time", 0.0)? });
        match find_contraction_partition(&problem) {
            Ok(p) => {
                text.push_str(&format!("weighted kernel mass: {}\n", p.rho));
                let grid = step_grid(cfg, &problem)?;
                let sol = picard_solve(&problem, &grid, cfg.f64_or("run", "tolerance", 1e-10)?, cfg.usize_or("run", "max_iterations", 500)?)?;
                let err = sol
                    .field
                    .times
                    .iter()
                    .zip(&sol.field.values)
                    .map(|(&t, v)| (v - fam.member(0.0, t).unwrap_or(f64::NAN)).abs() / (alpha * t).exp())
                    .fold(0.0, f64::max);
                text.push_str(&format!("picard iterations: {}\nweighted sup error against c = 0: {err:e}\n", sol.trace.len()));
                write_field(out, "field.csv", &sol.field)?;
                let mut w = create(out, "trace.csv")?;
                write_trace_csv(&sol.trace, &mut w)?;
                w.flush()?;
            }
            Err(lvx::Error::NoContraction { mass }) => text.push_str(&format!("no contraction partition: irreducible kernel mass {mass}\n")),
            Err(e) => return Err(e.into()),
        }
    }
    let v = if fam.bounded_unique { Verdict::Pass } else { Verdict::Fail };
    write_text(out, "report.txt", &text)?;
    Ok(Outcome { code: verdict_code(v), verdict: Some(v), expected: None, summary: text.trim_end().to_string() })
}

fn renewal_dichotomy(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let kernel = cfg.kernel()?;
    let gamma = cfg.f64_or("run", "inner_exponent", 1.0)?;
    let f = cfg.f64_or("run", "force_value", 1.0)?;
    let interval = cfg.interval()?;
    let mass = KernelTerm::plain(kernel.clone()).mass(0.0, f64::INFINITY);
    let problem = single_term_problem(kernel, gamma, Force::constant(f), interval);
    let grid = step_grid(cfg, &problem)?;
    let sol = picard_solve(&problem, &grid, cfg.f64_or("run", "tolerance", 1e-10)?, cfg.usize_or("run", "max_iterations", 500)?)?;
    let sup = sol.field.sup();
    let mut text = format!("kernel mass: {mass}\ngrowth order: {gamma}\nforce: {f}\n{}", solve_summary(&sol));
    let bound = if gamma < 1.0 {
        Some(stability_fixed_point(f, mass, gamma)?)
    } else if mass < 1.0 {
        Some(f / (1.0 - mass))
    } else {
        None
    };
    let v = match bound {
        Some(a) => {
            text.push_str(&format!("global bound: {a}\n"));
            if sup <= a * (1.0 + 1e-9) { Verdict::Pass } else { Verdict::Fail }
        }
        None => {
            let n = sol.field.values.len();
            text.push_str(&format!("kernel mass ≥ 1: growth factor over the second half {}\n", sol.field.values[n - 1] / sol.field.values[n / 2]));
            Verdict::Fail
        }
    };
    write_solution(out, &sol, &text)?;
    Ok(Outcome { code: verdict_code(v), verdict: Some(v), expected: None, summary: text.trim_end().to_string() })
}

fn dispatch(action: &str, cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    match action {
        "check" => check(cfg, out, false),
        "stability" => check(cfg, out, true),
        "volterra" => volterra(cfg, out),
        "simulate" => simulate(cfg, out),
        "exp-family" => exp_family(cfg, out),
        "renewal-dichotomy" => renewal_dichotomy(cfg, out),
        other => Err(CliError::Config(format!("[run] action: unknown action {other:?}"))),
    }
}

/// Load the model (a file, or a preset name for `reproduce-example`) with overrides applied.
pub fn load_config(rc: &RunConfig) -> Result<Config, CliError> {
    let mut cfg = if rc.command == Command::ReproduceExample && !Path::new(&rc.config).exists() {
        let text = preset(&rc.config)
            .ok_or_else(|| CliError::Usage(format!("unknown example {:?}; known: {}", rc.config, preset_names().join(", "))))?;
        Config::parse(text, &rc.config)?
    } else {
        Config::load(Path::new(&rc.config))?
    };
    for o in &rc.overrides {
        cfg.set(o)?;
    }
    if let Some(s) = rc.seed {
        cfg.set(&format!("run.seed={s}"))?;
    }
    if let Some(l) = rc.lambda {
        cfg.set(&format!("kernel.rate_per_unit_time={l}"))?;
    }
    Ok(cfg)
}

/// Execute one invocation and write its artifacts under `rc.out`.
pub fn run(rc: &RunConfig) -> Result<Outcome, CliError> {
    if rc.lambda.is_some() && rc.command != Command::ReproduceExample {
        return Err(CliError::Usage("--lambda applies to reproduce-example only".into()));
    }
    let cfg = load_config(rc)?;
    std::fs::create_dir_all(&rc.out)?;
    let result = match rc.command {
        Command::Check => check(&cfg, &rc.out, false),
        Command::Stability => check(&cfg, &rc.out, true),
        Command::Volterra => volterra(&cfg, &rc.out),
        Command::Simulate => simulate(&cfg, &rc.out),
        Command::ReproduceExample => {
            let action = cfg.word_or("run", "action", "check").to_string();
            dispatch(&action, &cfg, &rc.out).and_then(|mut o| {
                o.expected = cfg.expected_verdict()?;
                if let (Some(e), Some(v)) = (o.expected, o.verdict) {
                    let tag = if e == v { "reproduced" } else { "differs from the recorded verdict" };
                    o.summary.push_str(&format!("\nexpected verdict: {e} ({tag})"));
                }
                Ok(o)
            })
        }
    };
    if let Err(CliError::Numerical { message, trace }) = &result {
        write_text(&rc.out, "report.txt", &format!("numerical failure: {message}\n"))?;
        write_pairs(&rc.out, trace)?;
    }
    result
}
