//! Flat `key = value` run configuration with typed, validated settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::control::ControlConfig;
use crate::error::{Error, Result};
use crate::grid::{Lateral, Profile, ProfileKind};
use crate::stokes::{FlowModel, SolverConfig};

/// Every key the configuration accepts.
pub const KEYS: &[&str] = &[
    "lx",
    "lateral",
    "nx",
    "ny",
    "grading",
    "layer_rows",
    "nu",
    "f1",
    "f2",
    "model",
    "layer_kind",
    "h",
    "eps",
    "walllaw",
    "linear_tol",
    "max_cg_iters",
    "picard_tol",
    "picard_max",
    "picard_damping",
    "drop_layer_advection",
    "m",
    "theta",
    "control_tol",
    "control_max_iters",
    "delta",
    "out",
    "formats",
    "jobs",
];

/// Raw key-value pairs; later insertions win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parameter(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parameter(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Parameter(format!("unknown configuration key '{key}'")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn typed<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Parameter(format!("bad value '{v}' for '{key}'"))),
        }
    }

    fn list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Parameter(format!("bad number '{s}' in '{key}'")))
                })
                .collect(),
        }
    }
}

/// Which report files to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl FromStr for Formats {
    type Err = Error;

    fn from_str(s: &str) -> Result<Formats> {
        let mut f = Formats {
            csv: false,
            json: false,
            svg: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "csv" => f.csv = true,
                "json" => f.json = true,
                "svg" => f.svg = true,
                other => return Err(Error::Parameter(format!("unknown output format '{other}'"))),
            }
        }
        Ok(f)
    }
}

/// Wall law named in the configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WallLawChoice {
    /// `nu / h(x)` from the layer profile.
    OverH,
    NoSlip,
    FreeSlip,
    Constant(f64),
    /// `nu c_1` with `c_1` from the longitudinal cell problem of `h`.
    Cell,
}

impl FromStr for WallLawChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<WallLawChoice> {
        match s.trim() {
            "over_h" => Ok(WallLawChoice::OverH),
            "no_slip" | "infinite" => Ok(WallLawChoice::NoSlip),
            "free_slip" | "zero" => Ok(WallLawChoice::FreeSlip),
            "cell" => Ok(WallLawChoice::Cell),
            other => match other.strip_prefix("constant:").map(|v| v.trim().parse::<f64>()) {
                Some(Ok(mu)) if mu >= 0.0 && mu.is_finite() => Ok(WallLawChoice::Constant(mu)),
                _ => Err(Error::Parameter(format!("unknown wall law '{other}'"))),
            },
        }
    }
}

/// Typed settings with defaults, validated before any solve.
#[derive(Debug, Clone)]
pub struct Settings {
    pub lx: f64,
    pub lateral: Lateral,
    pub nx: usize,
    pub ny: usize,
    pub grading: f64,
    pub layer_rows: usize,
    pub nu: f64,
    pub f1: String,
    pub f2: String,
    pub model: FlowModel,
    pub layer_kind: ProfileKind,
    pub h: String,
    pub eps: Vec<f64>,
    pub walllaw: WallLawChoice,
    pub solver: SolverConfig,
    pub m: Vec<f64>,
    pub control: ControlConfig,
    pub delta: f64,
    pub out: Option<PathBuf>,
    pub formats: Formats,
    pub jobs: usize,
}

impl Settings {
    pub fn from_config(c: &RunConfig) -> Result<Settings> {
        let lateral = match c.get("lateral").unwrap_or("walls") {
            "walls" => Lateral::Walls,
            "periodic" => Lateral::Periodic,
            other => return Err(Error::Parameter(format!("unknown lateral condition '{other}'"))),
        };
        let layer_kind = match c.get("layer_kind").unwrap_or("fixed") {
            "fixed" => ProfileKind::Fixed,
            "periodic" => ProfileKind::Periodic,
            other => return Err(Error::Parameter(format!("unknown layer kind '{other}'"))),
        };
        let nx = c.typed("nx", 64usize)?;
        let model: FlowModel = c.get("model").unwrap_or("navier_stokes").parse()?;
        let defaults = SolverConfig::default();
        let solver = SolverConfig {
            linear_tol: c.typed("linear_tol", defaults.linear_tol)?,
            max_cg_iters: c.typed("max_cg_iters", defaults.max_cg_iters)?,
            picard_tol: c.typed("picard_tol", defaults.picard_tol)?,
            picard_max: c.typed("picard_max", defaults.picard_max)?,
            picard_damping: c.typed("picard_damping", defaults.picard_damping)?,
            drop_layer_advection: c.typed("drop_layer_advection", defaults.drop_layer_advection)?,
        };
        let cdef = ControlConfig::default();
        let control = ControlConfig {
            theta: c.typed("theta", cdef.theta)?,
            tol: c.typed("control_tol", cdef.tol)?,
            max_iters: c.typed("control_max_iters", cdef.max_iters)?,
            model,
        };
        let s = Settings {
            lx: c.typed("lx", 1.0)?,
            lateral,
            nx,
            ny: c.typed("ny", nx)?,
            grading: c.typed("grading", 1.0)?,
            layer_rows: c.typed("layer_rows", crate::grid::MIN_LAYER_ROWS)?,
            nu: c.typed("nu", 1.0)?,
            f1: c.get("f1").unwrap_or("0").to_string(),
            f2: c.get("f2").unwrap_or("0").to_string(),
            model,
            layer_kind,
            h: c.get("h").unwrap_or("flat:1").to_string(),
            eps: c.list("eps", &[0.2, 0.1, 0.05])?,
            walllaw: c.get("walllaw").unwrap_or("over_h").parse()?,
            solver,
            m: c.list("m", &[0.2, 0.1, 0.05, 0.02])?,
            control,
            delta: c.typed("delta", 0.05)?,
            out: c.get("out").map(PathBuf::from),
            formats: c.get("formats").unwrap_or("csv,json,svg").parse()?,
            jobs: c.typed("jobs", 1usize)?,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        if !(self.lx > 0.0 && self.lx.is_finite()) {
            return bad("lx must be positive");
        }
        if self.nx < 2 || self.ny < 2 {
            return bad("nx and ny must be at least 2");
        }
        if !(self.grading >= 1.0 && self.grading.is_finite()) {
            return bad("grading must be at least 1");
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad("nu must be positive");
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        self.solver.validate()?;
        self.control.validate()?;
        self.profile()?;
        crate::fields::Forcing::parse(&self.f1, &self.f2)?;
        Ok(())
    }

    /// The configured profile. `samples:a,b,...` interpolates linearly over
    /// `[0, lx]` for fixed layers and over `[-1/2, 1/2]` otherwise.
    pub fn profile(&self) -> Result<Profile> {
        self.profile_on(if self.layer_kind == ProfileKind::Fixed {
            (0.0, self.lx)
        } else {
            (-0.5, 0.5)
        })
    }

    /// Profile on the unit cell `[-1/2, 1/2]`.
    pub fn cell_profile(&self) -> Result<Profile> {
        self.profile_on((-0.5, 0.5))
    }

    fn profile_on(&self, (a, b): (f64, f64)) -> Result<Profile> {
        let Some(list) = self.h.trim().strip_prefix("samples:") else {
            return Profile::parse(&self.h);
        };
        let ys: Vec<f64> = list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("bad profile sample '{s}'")))
            })
            .collect::<Result<_>>()?;
        if ys.len() < 2 || ys.iter().any(|y| !(*y >= 0.0 && y.is_finite())) {
            return Err(Error::Parameter("profile samples need at least two finite nonnegative values".into()));
        }
        let name = self.h.trim().to_string();
        Ok(Profile::from_fn(name, move |x| {
            let t = ((x - a) / (b - a)).clamp(0.0, 1.0) * (ys.len() - 1) as f64;
            let k = (t.floor() as usize).min(ys.len() - 2);
            let r = t - k as f64;
            ys[k] * (1.0 - r) + ys[k + 1] * r
        }))
    }

    /// `--out`, then the `out` key, then `WALL_LAW_OUTPUT_DIR`, then `.`.
    pub fn output_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os("WALL_LAW_OUTPUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut c = RunConfig::parse("# comment\nnx = 32\n\nh = flat:0.5  # trailing\neps=0.4, 0.2,0.1\n").unwrap();
        assert_eq!(c.get("nx"), Some("32"));
        c.set("nx", "16").unwrap();
        let s = Settings::from_config(&c).unwrap();
        assert_eq!((s.nx, s.ny), (16, 16));
        assert_eq!(s.eps, vec![0.4, 0.2, 0.1]);
        assert_eq!(s.profile().unwrap().flat_height(), Some(0.5));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("nx 32").is_err());
        assert!(RunConfig::parse("colour = red").is_err());
        for (k, v) in [("nx", "abc"), ("nu", "-1"), ("walllaw", "sticky"), ("formats", "png"), ("theta", "0"), ("f1", "1+*2")] {
            let mut c = RunConfig::default();
            c.set(k, v).unwrap();
            assert!(Settings::from_config(&c).is_err(), "{k}={v}");
        }
    }

    #[test]
    fn wall_laws() {
        assert_eq!("constant:2.5".parse::<WallLawChoice>().unwrap(), WallLawChoice::Constant(2.5));
        assert!("constant:-1".parse::<WallLawChoice>().is_err());
        assert_eq!("infinite".parse::<WallLawChoice>().unwrap(), WallLawChoice::NoSlip);
    }

    #[test]
    fn sampled_profile() {
        let mut c = RunConfig::default();
        c.set("h", "samples:0,1,0").unwrap();
        c.set("lx", "2").unwrap();
        let s = Settings::from_config(&c).unwrap();
        let p = s.profile().unwrap();
        assert_eq!(p.eval(1.0).unwrap(), 1.0);
        assert_eq!(p.eval(0.5).unwrap(), 0.5);
        assert_eq!(s.cell_profile().unwrap().eval(0.0).unwrap(), 1.0);
    }
}
