//! Problems written as expressions in a config file.
//!
//! ```text
//! preset = custom
//! scenarios = 2
//! diffusion = 0.2
//! drift = 0.03 - 0.02
//! terminal = max(2 - math::exp(x), 0)
//! lower = max(2 - math::exp(x), 0)
//! upper.1 = max(2 - math::exp(x), 0) + 0.125
//! upper.2 = max(2 - math::exp(x), 0) + 0.065
//! ```
//!
//! Expressions see `t`, `x` and `pi`; `source` and `exact` also see the
//! belief coordinates `p1 .. pI` and `p = p1`. A bare key applies to every
//! scenario, `key.i` to scenario `i` (1-based) and overrides the bare key.

use std::collections::BTreeMap;
use std::sync::Arc;

use dynkin_core::problem::ProblemSpec;
use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};

use crate::error::{CliError, CliResult};

/// Keys understood by [`custom_problem`], besides the scenario-indexed ones.
pub const CUSTOM_KEYS: &[&str] =
    &["scenarios", "horizon", "x_lo", "x_hi", "drift", "diffusion", "terminal", "lower", "upper", "source", "exact"];

const PER_SCENARIO: &[&str] = &["terminal", "lower", "upper"];

#[derive(Clone)]
struct Expr {
    node: Arc<Node<DefaultNumericTypes>>,
}

impl Expr {
    fn compile(key: &str, src: &str) -> CliResult<Self> {
        let node = build_operator_tree::<DefaultNumericTypes>(src)
            .map_err(|e| CliError::config(format!("{key}: cannot parse `{src}`: {e}")))?;
        Ok(Self { node: Arc::new(node) })
    }

    fn try_eval(&self, t: f64, x: f64, p: &[f64]) -> Result<f64, String> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        let mut set = |name: &str, v: f64| ctx.set_value(name.into(), Value::from_float(v)).map_err(|e| e.to_string());
        set("t", t)?;
        set("x", x)?;
        set("pi", std::f64::consts::PI)?;
        if let Some(&first) = p.first() {
            set("p", first)?;
        }
        for (i, v) in p.iter().enumerate() {
            set(&format!("p{}", i + 1), *v)?;
        }
        self.node.eval_number_with_context(&ctx).map_err(|e| e.to_string())
    }

    /// Evaluation errors surface as NaN, which the solver reports with the
    /// offending node.
    fn eval(&self, t: f64, x: f64, p: &[f64]) -> f64 {
        self.try_eval(t, x, p).unwrap_or(f64::NAN)
    }
}

fn number(keys: &BTreeMap<String, String>, key: &str, default: f64) -> CliResult<f64> {
    match keys.get(key) {
        None => Ok(default),
        Some(v) => v.trim().parse().map_err(|_| CliError::config(format!("{key}: `{v}` is not a number"))),
    }
}

fn scenario_exprs(keys: &BTreeMap<String, String>, base: &str, count: usize) -> CliResult<Option<Vec<Expr>>> {
    let mut out = Vec::with_capacity(count);
    for i in 1..=count {
        let scoped = format!("{base}.{i}");
        let src = keys.get(&scoped).or_else(|| keys.get(base));
        match src {
            Some(src) => out.push(Expr::compile(&scoped, src)?),
            None if out.is_empty() && i == 1 => {
                if (2..=count).any(|k| keys.contains_key(&format!("{base}.{k}"))) {
                    return Err(CliError::config(format!("{base}: missing entry for scenario 1")));
                }
                return Ok(None);
            }
            None => return Err(CliError::config(format!("{base}: missing entry for scenario {i}"))),
        }
    }
    Ok(Some(out))
}

/// Whether `key` is one of the expression keys, scoped or not.
pub fn is_custom_key(key: &str) -> bool {
    if CUSTOM_KEYS.contains(&key) {
        return true;
    }
    match key.split_once('.') {
        Some((base, idx)) => PER_SCENARIO.contains(&base) && idx.parse::<usize>().is_ok_and(|i| i >= 1),
        None => false,
    }
}

/// Builds a problem from expression keys. Every expression is evaluated
/// once at `t = 0, x = x_lo` (uniform belief) so typos fail as config
/// errors.
pub fn custom_problem(keys: &BTreeMap<String, String>) -> CliResult<ProblemSpec> {
    let scenarios = number(keys, "scenarios", 1.0)?;
    if scenarios < 1.0 || scenarios.fract() != 0.0 {
        return Err(CliError::config("scenarios must be a positive integer"));
    }
    let scenarios = scenarios as usize;
    for key in keys.keys() {
        if let Some((_, idx)) = key.split_once('.') {
            if idx.parse::<usize>().is_ok_and(|i| i > scenarios) {
                return Err(CliError::config(format!("{key}: only {scenarios} scenarios")));
            }
        }
    }
    let horizon = number(keys, "horizon", 1.0)?;
    let domain = (number(keys, "x_lo", 0.0)?, number(keys, "x_hi", 1.0)?);
    let terminal = scenario_exprs(keys, "terminal", scenarios)?
        .ok_or_else(|| CliError::config("a custom problem needs `terminal`"))?;
    let lower = scenario_exprs(keys, "lower", scenarios)?;
    let upper = scenario_exprs(keys, "upper", scenarios)?;
    let single = |key: &str| keys.get(key).map(|src| Expr::compile(key, src)).transpose();
    let drift = single("drift")?;
    let diffusion = single("diffusion")?;
    let source = single("source")?;
    let exact = single("exact")?;

    let uniform = vec![1.0 / scenarios as f64; scenarios];
    let probe = |key: &str, e: &Expr, p: &[f64]| {
        e.try_eval(0.0, domain.0, p).map(|_| ()).map_err(|err| CliError::config(format!("{key}: {err}")))
    };
    for (key, list) in [("terminal", Some(&terminal)), ("lower", lower.as_ref()), ("upper", upper.as_ref())] {
        for e in list.into_iter().flatten() {
            probe(key, e, &[])?;
        }
    }
    for (key, e) in [("drift", &drift), ("diffusion", &diffusion)] {
        if let Some(e) = e {
            probe(key, e, &[])?;
        }
    }
    for (key, e) in [("source", &source), ("exact", &exact)] {
        if let Some(e) = e {
            probe(key, e, &uniform)?;
        }
    }

    let mut spec = ProblemSpec::new(
        "custom",
        horizon,
        scenarios,
        domain,
        Box::new(move |x, out| {
            for (o, e) in out.iter_mut().zip(&terminal) {
                *o = e.eval(horizon, x, &[]);
            }
        }),
    )?;
    if let Some(e) = drift {
        spec = spec.with_drift(Box::new(move |t, x| e.eval(t, x, &[])));
    }
    if let Some(e) = diffusion {
        spec = spec.with_diffusion(Box::new(move |t, x| e.eval(t, x, &[])));
    }
    if let Some(list) = lower {
        spec = spec.with_lower(Box::new(move |t, x, out| {
            for (o, e) in out.iter_mut().zip(&list) {
                *o = e.eval(t, x, &[]);
            }
        }));
    }
    if let Some(list) = upper {
        spec = spec.with_upper(Box::new(move |t, x, out| {
            for (o, e) in out.iter_mut().zip(&list) {
                *o = e.eval(t, x, &[]);
            }
        }));
    }
    if let Some(e) = source {
        spec = spec.with_source(Box::new(move |t, x, p| e.eval(t, x, p)));
    }
    if let Some(e) = exact {
        spec = spec.with_exact(Box::new(move |t, x, p| e.eval(t, x, p)));
    }
    Ok(spec)
}
