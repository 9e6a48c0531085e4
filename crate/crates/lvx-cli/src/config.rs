//! Sectioned key-value model files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::Ini;
use lvx::kernels::{Kernel, TabulatedKernel};
use lvx::levy_basis::{JumpMeasure, LevyCharacteristics, SpatialModulation};
use lvx::simulator::{Corner, SimConfig};
use lvx::volterra::{Force, Interval};
use lvx::wellposedness::{InitialData, ModelSpec, SigmaFunction, SigmaSpec, Verdict};

use crate::CliError;

/// Every key a model file may contain, by section.
pub const SCHEMA: &[(&str, &[&str])] = &[
    ("kernel", &["family", "damping_per_unit_time", "dimension", "rate_per_unit_time", "table_path"]),
    (
        "noise",
        &[
            "drift_per_unit_volume",
            "gaussian_variance_per_unit_volume",
            "jumps",
            "point_masses",
            "jump_rate_per_unit_volume",
            "jump_size_decay_rate",
            "two_sided",
            "stable_index",
            "stable_scale",
            "stable_skew",
            "modulation",
            "modulation_value",
            "modulation_half_width",
            "modulation_decay_exponent",
            "small_jump_cutoff",
            "declared_symmetric",
        ],
    ),
    ("sigma", &["family", "value", "slope", "intercept", "coefficient", "growth_order", "lipschitz_constant"]),
    (
        "run",
        &[
            "action",
            "expected_verdict",
            "checker",
            "p_exponent",
            "q_exponent",
            "interval",
            "start_time",
            "end_time",
            "weight_rate_per_unit_time",
            "initial_value",
            "initial_rate_per_unit_time",
            "equation",
            "force_value",
            "force_scale",
            "force_rate_per_unit_time",
            "inner_exponent",
            "step",
            "tolerance",
            "max_iterations",
            "grid_level",
            "box_lower",
            "box_upper",
            "replicates",
            "seed",
            "corner",
            "keep_paths",
            "allow_ill_posed",
        ],
    ),
];

fn declared(section: &str, key: &str) -> bool {
    SCHEMA.iter().any(|(s, keys)| *s == section && keys.contains(&key))
}

/// Parsed model file plus applied overrides.
#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<(String, String), String>,
    lines: BTreeMap<(String, String), usize>,
    origin: String,
    base_dir: Option<PathBuf>,
}

// Line of each key, for diagnostics; rust-ini does not keep positions.
fn key_lines(text: &str) -> Vec<(String, String, usize)> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') && line.ends_with(']') {
            section = line[1..line.len() - 1].trim().to_string();
        } else if !line.is_empty() && !line.starts_with(';') && !line.starts_with('#') {
            if let Some((k, _)) = line.split_once('=') {
                out.push((section.clone(), k.trim().to_string(), n + 1));
            }
        }
    }
    out
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        let mut cfg = Config { origin: origin.to_string(), ..Config::default() };
        for (s, k, n) in key_lines(text) {
            cfg.lines.insert((s, k), n);
        }
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (key, value) in props.iter() {
                let line = cfg.lines.get(&(section.to_string(), key.to_string())).copied().unwrap_or(0);
                if section.is_empty() {
                    return Err(CliError::Config(format!("{origin}:{line}: key {key:?} appears before any section")));
                }
                if !declared(section, key) {
                    return Err(CliError::Config(format!("{origin}:{line}: unknown key [{section}] {key}")));
                }
                cfg.values.insert((section.to_string(), key.to_string()), value.trim().to_string());
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    /// Apply `section.key=value`; a bare key is accepted when it names a
    /// single declared key.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (name, value) =
            assignment.split_once('=').ok_or_else(|| CliError::Usage(format!("override {assignment:?} is not key=value")))?;
        let name = name.trim();
        let (section, key) = match name.split_once('.') {
            Some((s, k)) => (s.to_string(), k.to_string()),
            None => {
                let owners: Vec<&str> = SCHEMA.iter().filter(|(_, keys)| keys.contains(&name)).map(|(s, _)| *s).collect();
                match owners.as_slice() {
                    [s] => (s.to_string(), name.to_string()),
                    [] => return Err(CliError::Config(format!("override names unknown key {name:?}"))),
                    _ => return Err(CliError::Config(format!("override key {name:?} is ambiguous; use section.key"))),
                }
            }
        };
        if !declared(&section, &key) {
            return Err(CliError::Config(format!("override names unknown key [{section}] {key}")));
        }
        self.values.insert((section, key), value.trim().to_string());
        Ok(())
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.values.get(&(section.to_string(), key.to_string())).map(String::as_str)
    }

    fn place(&self, section: &str, key: &str) -> String {
        match self.lines.get(&(section.to_string(), key.to_string())) {
            Some(n) => format!("{}:{n}: [{section}] {key}", self.origin),
            None => format!("{}: [{section}] {key}", self.origin),
        }
    }

    fn bad(&self, section: &str, key: &str, what: &str) -> CliError {
        CliError::Config(format!("{}: {what}", self.place(section, key)))
    }

    pub fn f64_opt(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => match v {
                "inf" | "infinity" => Ok(Some(f64::INFINITY)),
                _ => v.parse().map(Some).map_err(|_| self.bad(section, key, &format!("expected a number, found {v:?}"))),
            },
        }
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.f64_opt(section, key)?.unwrap_or(default))
    }

    pub fn f64_req(&self, section: &str, key: &str) -> Result<f64, CliError> {
        self.f64_opt(section, key)?.ok_or_else(|| self.bad(section, key, "required key is missing"))
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize, CliError> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.bad(section, key, &format!("expected a non-negative integer, found {v:?}"))),
        }
    }

    pub fn u64_opt(&self, section: &str, key: &str) -> Result<Option<u64>, CliError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| self.bad(section, key, &format!("expected an unsigned integer, found {v:?}"))),
        }
    }

    pub fn bool_or(&self, section: &str, key: &str, default: bool) -> Result<bool, CliError> {
        match self.raw(section, key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(self.bad(section, key, &format!("expected true or false, found {v:?}"))),
        }
    }

    pub fn word_or<'a>(&'a self, section: &str, key: &str, default: &'a str) -> &'a str {
        self.raw(section, key).unwrap_or(default)
    }

    pub fn list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|_| self.bad(section, key, &format!("expected a comma-separated list of numbers, found {v:?}"))),
        }
    }

    fn choice<'a>(&'a self, section: &str, key: &str, default: &'a str, allowed: &[&str]) -> Result<&'a str, CliError> {
        let v = self.word_or(section, key, default);
        if allowed.contains(&v) {
            Ok(v)
        } else {
            Err(self.bad(section, key, &format!("expected one of {}, found {v:?}", allowed.join(", "))))
        }
    }

    fn lvx<T>(&self, section: &str, r: lvx::Result<T>) -> Result<T, CliError> {
        r.map_err(|e| CliError::Config(format!("{}: [{section}]: {e}", self.origin)))
    }

    pub fn kernel(&self) -> Result<Kernel, CliError> {
        match self.choice("kernel", "family", "heat", &["heat", "exponential", "tabulated"])? {
            "heat" => {
                let a = self.f64_or("kernel", "damping_per_unit_time", 0.0)?;
                let d = self.usize_or("kernel", "dimension", 1)?;
                self.lvx("kernel", Kernel::heat(a, d))
            }
            "exponential" => {
                let l = self.f64_req("kernel", "rate_per_unit_time")?;
                self.lvx("kernel", Kernel::exponential(l))
            }
            _ => {
                let rel = self.raw("kernel", "table_path").ok_or_else(|| self.bad("kernel", "table_path", "tabulated kernel needs a table"))?;
                let path = match &self.base_dir {
                    Some(dir) if Path::new(rel).is_relative() => dir.join(rel),
                    _ => PathBuf::from(rel),
                };
                if !path.exists() {
                    return Err(self.bad("kernel", "table_path", &format!("file {} does not exist", path.display())));
                }
                let d = self.usize_or("kernel", "dimension", 1)?;
                Ok(Kernel::Tabulated(self.lvx("kernel", TabulatedKernel::from_csv_path(d, &path))?))
            }
        }
    }

    fn point_masses(&self) -> Result<Vec<(f64, f64)>, CliError> {
        let raw = self.raw("noise", "point_masses").ok_or_else(|| self.bad("noise", "point_masses", "point-mass jumps need size:rate pairs"))?;
        raw.split(',')
            .map(|pair| {
                let (s, r) = pair.split_once(':').ok_or(())?;
                Ok((s.trim().parse().map_err(|_| ())?, r.trim().parse().map_err(|_| ())?))
            })
            .collect::<Result<Vec<_>, ()>>()
            .map_err(|_| self.bad("noise", "point_masses", &format!("expected size:rate pairs, found {raw:?}")))
    }

    pub fn characteristics(&self) -> Result<LevyCharacteristics, CliError> {
        let jumps = match self.choice("noise", "jumps", "none", &["none", "point-masses", "exponential-tails", "alpha-stable"])? {
            "none" => JumpMeasure::None,
            "point-masses" => self.lvx("noise", JumpMeasure::point_masses(&self.point_masses()?))?,
            "exponential-tails" => self.lvx(
                "noise",
                JumpMeasure::exponential_tails(
                    self.f64_req("noise", "jump_size_decay_rate")?,
                    self.f64_req("noise", "jump_rate_per_unit_volume")?,
                    self.bool_or("noise", "two_sided", false)?,
                ),
            )?,
            _ => self.lvx(
                "noise",
                JumpMeasure::alpha_stable(
                    self.f64_req("noise", "stable_index")?,
                    self.f64_or("noise", "stable_scale", 1.0)?,
                    self.f64_or("noise", "stable_skew", 0.0)?,
                ),
            )?,
        };
        let b = self.f64_or("noise", "drift_per_unit_volume", 0.0)?;
        let c = self.f64_or("noise", "gaussian_variance_per_unit_volume", 0.0)?;
        let mut chars = self.lvx("noise", LevyCharacteristics::new(b, c, jumps))?;
        let value = self.f64_or("noise", "modulation_value", 1.0)?;
        let modulation = match self.choice("noise", "modulation", "none", &["none", "constant", "indicator", "power-decay"])? {
            "none" => None,
            "constant" => Some(SpatialModulation::Constant(value)),
            "indicator" => Some(SpatialModulation::Indicator { half_width: self.f64_req("noise", "modulation_half_width")?, value }),
            _ => Some(SpatialModulation::PowerDecay { exponent: self.f64_req("noise", "modulation_decay_exponent")?, value }),
        };
        if let Some(m) = modulation {
            chars = self.lvx("noise", chars.with_modulation(m))?;
        }
        if let Some(eps) = self.f64_opt("noise", "small_jump_cutoff")? {
            chars = self.lvx("noise", chars.with_cutoff(eps))?;
        }
        if self.bool_or("noise", "declared_symmetric", false)? {
            chars = self.lvx("noise", chars.declared_symmetric())?;
        }
        Ok(chars)
    }

    pub fn sigma(&self) -> Result<SigmaSpec, CliError> {
        let f = match self.choice("sigma", "family", "affine", &["zero", "constant", "affine", "soft-power", "power-law"])? {
            "zero" => SigmaFunction::Zero,
            "constant" => SigmaFunction::Constant(self.f64_req("sigma", "value")?),
            "affine" => SigmaFunction::Affine { slope: self.f64_or("sigma", "slope", 1.0)?, intercept: self.f64_or("sigma", "intercept", 0.0)? },
            "soft-power" => SigmaFunction::SoftPower {
                coef: self.f64_or("sigma", "coefficient", 1.0)?,
                gamma: self.f64_req("sigma", "growth_order")?,
                intercept: self.f64_or("sigma", "intercept", 0.0)?,
            },
            _ => SigmaFunction::PowerLaw { coef: self.f64_or("sigma", "coefficient", 1.0)?, gamma: self.f64_req("sigma", "growth_order")? },
        };
        let mut s = self.lvx("sigma", SigmaSpec::new(f))?;
        if let Some(c) = self.f64_opt("sigma", "lipschitz_constant")? {
            s = self.lvx("sigma", s.with_lipschitz(Some(c)))?;
        }
        Ok(s)
    }

    pub fn interval(&self) -> Result<Interval, CliError> {
        Ok(match self.choice("run", "interval", "finite", &["finite", "past", "future"])? {
            "finite" => Interval::Finite { start: self.f64_or("run", "start_time", 0.0)?, end: self.f64_req("run", "end_time")? },
            "past" => Interval::Past { end: self.f64_or("run", "end_time", 0.0)? },
            _ => Interval::Future { start: self.f64_or("run", "start_time", 0.0)? },
        })
    }

    pub fn model(&self) -> Result<ModelSpec, CliError> {
        let m = ModelSpec {
            kernel: self.kernel()?,
            chars: self.characteristics()?,
            sigma: self.sigma()?,
            p: self.f64_or("run", "p_exponent", 2.0)?,
            q: self.f64_opt("run", "q_exponent")?,
            drift_conv: None,
            eta: self.f64_or("run", "weight_rate_per_unit_time", 0.0)?,
            interval: self.interval()?,
            y0: InitialData { value: self.f64_or("run", "initial_value", 0.0)?, rate: self.f64_or("run", "initial_rate_per_unit_time", 0.0)? },
        };
        self.lvx("run", m.validate())?;
        Ok(m)
    }

    pub fn force(&self) -> Result<Force, CliError> {
        Ok(Force {
            constant: self.f64_or("run", "force_value", 1.0)?,
            scale: self.f64_or("run", "force_scale", 0.0)?,
            rate: self.f64_or("run", "force_rate_per_unit_time", 0.0)?,
        })
    }

    pub fn sim(&self) -> Result<SimConfig, CliError> {
        let d = SimConfig::default();
        let corner = match self.choice("run", "corner", "lower-left", &["lower-left", "upper-right"])? {
            "lower-left" => Corner::LowerLeft,
            _ => Corner::UpperRight,
        };
        let cfg = SimConfig {
            level: self.usize_or("run", "grid_level", d.level)?,
            tol: self.f64_or("run", "tolerance", d.tol)?,
            max_iter: self.usize_or("run", "max_iterations", d.max_iter)?,
            replicates: self.usize_or("run", "replicates", d.replicates)?,
            seed: self.u64_opt("run", "seed")?.unwrap_or(d.seed),
            p: self.f64_or("run", "p_exponent", d.p)?,
            corner,
            keep_paths: self.usize_or("run", "keep_paths", d.keep_paths)?,
            require_wellposed: !self.bool_or("run", "allow_ill_posed", false)?,
        };
        self.lvx("run", cfg.validate())?;
        Ok(cfg)
    }

    /// Spatial box of the simulation grid, one entry per dimension.
    pub fn spatial_box(&self, dim: usize) -> Result<(Vec<f64>, Vec<f64>), CliError> {
        let lo = self.list("run", "box_lower")?.unwrap_or_else(|| vec![-1.0; dim]);
        let hi = self.list("run", "box_upper")?.unwrap_or_else(|| vec![1.0; dim]);
        if lo.len() != dim || hi.len() != dim {
            return Err(self.bad("run", "box_lower", &format!("box needs {dim} coordinates per corner")));
        }
        Ok((lo, hi))
    }

    pub fn expected_verdict(&self) -> Result<Option<Verdict>, CliError> {
        match self.raw("run", "expected_verdict") {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| self.bad("run", "expected_verdict", &format!("expected pass, fail or undetermined, found {v:?}"))),
        }
    }
}
