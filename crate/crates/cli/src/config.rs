//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use dynkin_core::analysis::Axis;
use dynkin_core::neuralnet::Optimizer;
use dynkin_core::problem::{preset, ProblemSpec};

use crate::custom::{custom_problem, is_custom_key};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Sl,
    Nn,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Sl => "sl",
            SchemeKind::Nn => "nn",
        }
    }
}

/// Parameter held fixed while another one is refined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pin {
    /// Moves with the refined parameter.
    Tied,
    Fixed(usize),
}

/// What a refinement study is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    Exact,
    Grid(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub scheme: SchemeKind,
    pub steps: usize,
    pub cells: usize,
    pub resolution: usize,
    pub optimizer: Optimizer,
    pub hidden: usize,
    pub seed: u64,
    pub iters: usize,
    pub warm_start: bool,
    pub convexify: bool,
    pub out: PathBuf,
    pub tol: f64,
    pub p: f64,
    pub axis: Option<Axis>,
    pub rows: Option<Vec<usize>>,
    pub pin: Option<Pin>,
    pub reference: Option<Reference>,
    /// Expression keys of a `preset = custom` run.
    pub custom: BTreeMap<String, String>,
}

pub const KEYS: &[&str] = &[
    "preset", "scheme", "n", "l", "m", "optimizer", "hidden", "seed", "iters", "warm_start", "convexify", "out", "tol",
    "p", "axis", "rows", "pin", "reference",
];

/// Parses `key = value` lines. `#` starts a comment, blank lines are
/// skipped and a repeated key keeps its last value.
pub fn parse_pairs(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("line {}: expected `key = value`", k + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::config(format!("line {}: empty key", k + 1)));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.parse().map_err(|_| CliError::config(format!("{key}: cannot parse `{v}`")))
}

fn positive(key: &str, v: &str) -> CliResult<usize> {
    match parse::<usize>(key, v)? {
        0 => Err(CliError::config(format!("{key} must be positive"))),
        k => Ok(k),
    }
}

fn flag(key: &str, v: &str) -> CliResult<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::config(format!("{key}: expected true or false, got `{v}`"))),
    }
}

pub fn parse_optimizer(v: &str) -> CliResult<Optimizer> {
    match v {
        "lm" => Ok(Optimizer::LevenbergMarquardt),
        "lbfgs" => Ok(Optimizer::Lbfgs),
        "br" => Ok(Optimizer::BayesianRegularization),
        _ => Err(CliError::config(format!("unknown optimizer `{v}` (lm, lbfgs, br)"))),
    }
}

pub fn optimizer_name(o: Optimizer) -> &'static str {
    match o {
        Optimizer::LevenbergMarquardt => "lm",
        Optimizer::Lbfgs => "lbfgs",
        Optimizer::BayesianRegularization => "br",
    }
}

pub fn parse_axis(v: &str) -> CliResult<Axis> {
    match v {
        "t" => Ok(Axis::T),
        "x" => Ok(Axis::X),
        "p" => Ok(Axis::P),
        _ => Err(CliError::config(format!("unknown axis `{v}` (t, x, p)"))),
    }
}

pub fn axis_name(a: Axis) -> &'static str {
    match a {
        Axis::T => "t",
        Axis::X => "x",
        Axis::P => "p",
    }
}

impl RunConfig {
    /// Validates merged pairs and fills in defaults. Unknown keys are errors.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> CliResult<Self> {
        let mut custom = BTreeMap::new();
        for (key, value) in pairs {
            if is_custom_key(key) {
                custom.insert(key.clone(), value.clone());
            } else if !KEYS.contains(&key.as_str()) {
                return Err(CliError::config(format!("unknown key `{key}`")));
            }
        }
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let name = get("preset").ok_or_else(|| CliError::config("no preset given (exp1, exp2, exp3, custom)"))?;
        if name != "custom" {
            if preset(name).is_none() {
                return Err(CliError::config(format!("unknown preset `{name}` (exp1, exp2, exp3, custom)")));
            }
            if let Some(k) = custom.keys().next() {
                return Err(CliError::config(format!("`{k}` only applies to preset = custom")));
            }
        }
        let scheme = match get("scheme").unwrap_or("sl") {
            "sl" => SchemeKind::Sl,
            "nn" => SchemeKind::Nn,
            other => return Err(CliError::config(format!("unknown scheme `{other}` (sl, nn)"))),
        };
        let optimizer = parse_optimizer(get("optimizer").unwrap_or("lm"))?;
        let mut cfg = RunConfig {
            preset: name.to_string(),
            scheme,
            steps: get("n").map(|v| positive("n", v)).transpose()?.unwrap_or(64),
            cells: get("l").map(|v| positive("l", v)).transpose()?.unwrap_or(64),
            resolution: 0,
            optimizer,
            hidden: match get("hidden") {
                Some(v) => positive("hidden", v)?,
                None if optimizer == Optimizer::Lbfgs => 50,
                None => 10,
            },
            seed: get("seed").map(|v| parse("seed", v)).transpose()?.unwrap_or(0),
            iters: get("iters").map(|v| positive("iters", v)).transpose()?.unwrap_or(500),
            warm_start: get("warm_start").map(|v| flag("warm_start", v)).transpose()?.unwrap_or(true),
            convexify: get("convexify").map(|v| flag("convexify", v)).transpose()?.unwrap_or(true),
            out: PathBuf::from(get("out").unwrap_or(".")),
            tol: get("tol").map(|v| parse("tol", v)).transpose()?.unwrap_or(2e-5),
            p: get("p").map(|v| parse("p", v)).transpose()?.unwrap_or(0.0),
            axis: get("axis").map(parse_axis).transpose()?,
            rows: get("rows")
                .map(|v| v.split(',').map(|s| positive("rows", s.trim())).collect::<CliResult<Vec<_>>>())
                .transpose()?,
            pin: get("pin")
                .map(|v| if v == "tied" { Ok(Pin::Tied) } else { positive("pin", v).map(Pin::Fixed) })
                .transpose()?,
            reference: get("reference")
                .map(|v| if v == "exact" { Ok(Reference::Exact) } else { positive("reference", v).map(Reference::Grid) })
                .transpose()?,
            custom,
        };
        if !(cfg.tol.is_finite() && cfg.tol >= 0.0) {
            return Err(CliError::config("tol must be a nonnegative number"));
        }
        if !(0.0..=1.0).contains(&cfg.p) {
            return Err(CliError::config(format!("p = {} lies outside [0, 1]", cfg.p)));
        }
        if cfg.rows.as_ref().is_some_and(|r| r.is_empty()) {
            return Err(CliError::config("rows is empty"));
        }
        let scenarios = cfg.problem()?.scenarios;
        cfg.resolution = match get("m") {
            Some(v) => positive("m", v)?,
            None if scenarios == 1 => 1,
            None => 64,
        };
        if scenarios == 1 && cfg.resolution != 1 {
            return Err(CliError::config("a single-scenario problem needs m = 1"));
        }
        Ok(cfg)
    }

    pub fn problem(&self) -> CliResult<ProblemSpec> {
        if self.preset == "custom" {
            custom_problem(&self.custom)
        } else {
            preset(&self.preset).ok_or_else(|| CliError::config(format!("unknown preset `{}`", self.preset)))
        }
    }

    /// File name stem shared by every output of a run.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.preset, self.scheme.name())
    }
}
