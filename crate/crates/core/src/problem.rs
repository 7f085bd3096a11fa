//! Continuous problem data and the three experiment presets.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec;
use core::f64::consts::PI;

use libm::{cos, exp, sin};

use crate::{Error, Result};

/// `(t, x) -> value` coefficient (drift or diffusion).
pub type Coefficient = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// `(t, x, out)`: writes one value per scenario into `out`.
pub type ScenarioField = Box<dyn Fn(f64, f64, &mut [f64]) + Send + Sync>;
/// `(x, out)`: terminal payoff per scenario.
pub type TerminalPayoff = Box<dyn Fn(f64, &mut [f64]) + Send + Sync>;
/// `(t, x, p) -> value`.
pub type BeliefField = Box<dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync>;

/// Data of the double-obstacle problem on `[0, T] x [x_lo, x_hi] x Δ(I)`.
///
/// Missing obstacles stand for `-inf` (lower) and `+inf` (upper), a missing
/// source for `H = 0`. Every function is pure, so a problem can be shared
/// read-only between workers.
pub struct ProblemSpec {
    pub name: String,
    pub horizon: f64,
    pub scenarios: usize,
    pub domain: (f64, f64),
    pub drift: Coefficient,
    pub diffusion: Coefficient,
    pub lower: Option<ScenarioField>,
    pub upper: Option<ScenarioField>,
    pub terminal: TerminalPayoff,
    pub source: Option<BeliefField>,
    /// Closed-form solution, when one is known.
    pub exact: Option<BeliefField>,
}

impl core::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("horizon", &self.horizon)
            .field("scenarios", &self.scenarios)
            .field("domain", &self.domain)
            .field("lower", &self.lower.is_some())
            .field("upper", &self.upper.is_some())
            .field("source", &self.source.is_some())
            .field("exact", &self.exact.is_some())
            .finish_non_exhaustive()
    }
}

pub(crate) fn dot(p: &[f64], v: &[f64]) -> f64 {
    p.iter().zip(v).map(|(a, b)| a * b).sum()
}

impl ProblemSpec {
    /// Driftless, diffusion-free problem with the given terminal payoff.
    pub fn new(
        name: impl Into<String>,
        horizon: f64,
        scenarios: usize,
        domain: (f64, f64),
        terminal: TerminalPayoff,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidConfig("horizon must be positive".to_string()));
        }
        if scenarios == 0 {
            return Err(Error::InvalidConfig("at least one scenario is required".to_string()));
        }
        if !(domain.0.is_finite() && domain.1.is_finite() && domain.0 < domain.1) {
            return Err(Error::InvalidConfig("domain must satisfy x_lo < x_hi".to_string()));
        }
        Ok(Self {
            name: name.into(),
            horizon,
            scenarios,
            domain,
            drift: Box::new(|_, _| 0.0),
            diffusion: Box::new(|_, _| 0.0),
            lower: None,
            upper: None,
            terminal,
            source: None,
            exact: None,
        })
    }

    pub fn with_drift(mut self, b: Coefficient) -> Self {
        self.drift = b;
        self
    }

    pub fn with_diffusion(mut self, a: Coefficient) -> Self {
        self.diffusion = a;
        self
    }

    pub fn with_lower(mut self, f: ScenarioField) -> Self {
        self.lower = Some(f);
        self
    }

    pub fn with_upper(mut self, h: ScenarioField) -> Self {
        self.upper = Some(h);
        self
    }

    pub fn with_source(mut self, source: BeliefField) -> Self {
        self.source = Some(source);
        self
    }

    pub fn with_exact(mut self, exact: BeliefField) -> Self {
        self.exact = Some(exact);
        self
    }

    /// `p·g(x)`.
    pub fn terminal_value(&self, x: f64, p: &[f64], scratch: &mut [f64]) -> f64 {
        (self.terminal)(x, scratch);
        dot(p, scratch)
    }

    /// `p·f(t, x)`, or `-inf` without a lower obstacle.
    pub fn lower_value(&self, t: f64, x: f64, p: &[f64], scratch: &mut [f64]) -> f64 {
        match &self.lower {
            Some(f) => {
                f(t, x, scratch);
                dot(p, scratch)
            }
            None => f64::NEG_INFINITY,
        }
    }

    /// `p·h(t, x)`, or `+inf` without an upper obstacle.
    pub fn upper_value(&self, t: f64, x: f64, p: &[f64], scratch: &mut [f64]) -> f64 {
        match &self.upper {
            Some(h) => {
                h(t, x, scratch);
                dot(p, scratch)
            }
            None => f64::INFINITY,
        }
    }

    pub fn source_value(&self, t: f64, x: f64, p: &[f64]) -> f64 {
        self.source.as_ref().map_or(0.0, |h| h(t, x, p))
    }

    pub fn has_obstacles(&self) -> bool {
        self.lower.is_some() || self.upper.is_some()
    }

    /// Checks `p·f(T,x) <= p·g(x) <= p·h(T,x)` at every given `(x, p)`.
    pub fn compatible_at<'a>(
        &self,
        xs: &[f64],
        beliefs: impl Iterator<Item = &'a [f64]> + Clone,
    ) -> bool {
        let mut scratch = vec![0.0; self.scenarios];
        let t = self.horizon;
        xs.iter().all(|&x| {
            beliefs.clone().all(|p| {
                let g = self.terminal_value(x, p, &mut scratch);
                let f = self.lower_value(t, x, p, &mut scratch);
                let h = self.upper_value(t, x, p, &mut scratch);
                f <= g + 1e-14 && g <= h + 1e-14
            })
        })
    }
}

/// Diffusion of the first experiment, `a(x) = 0.2 x (1 - x)`.
pub fn exp1_diffusion(x: f64) -> f64 {
    0.2 * x * (1.0 - x)
}

/// Closed-form solution of the first experiment.
pub fn exp1_exact(t: f64, x: f64) -> f64 {
    cos(3.0 * PI * t) * cos(3.0 * PI * x)
}

/// Linear PDE `u_t + a²/2 u_xx + H = 0` with known solution
/// `u(t, x) = cos(3πt) cos(3πx)` and a single scenario.
pub fn preset_experiment1() -> ProblemSpec {
    let horizon = 1.0;
    ProblemSpec::new(
        "exp1",
        horizon,
        1,
        (0.0, 1.0),
        // the terminal payoff is the exact solution at t = T
        Box::new(move |x, out| out[0] = exp1_exact(horizon, x)),
    )
    .expect("valid preset")
    .with_diffusion(Box::new(|_, x| exp1_diffusion(x)))
    .with_source(Box::new(|t, x, _| {
        let a = exp1_diffusion(x);
        let k = 3.0 * PI;
        k * sin(k * t) * cos(k * x) + 0.5 * (k * a) * (k * a) * cos(k * t) * cos(k * x)
    }))
    .with_exact(Box::new(|t, x, _| exp1_exact(t, x)))
}

/// Two scenarios, zero payoff, no obstacles, active convexity constraint and
/// source `H(t, x, p) = sin(πt) cos(πx) sin(3πp)` with `p` the weight of
/// the first scenario.
pub fn preset_experiment2() -> ProblemSpec {
    ProblemSpec::new("exp2", 1.0, 2, (0.0, 1.0), Box::new(|_, out| out.fill(0.0)))
        .expect("valid preset")
        .with_diffusion(Box::new(|_, x| x * (1.0 - x)))
        .with_source(Box::new(|t, x, p| sin(PI * t) * cos(PI * x) * sin(3.0 * PI * p[0])))
}

/// Penalty of each scenario in the Israeli put preset.
pub const EXP3_PENALTY: [f64; 2] = [1.25e-1, 6.5e-2];
pub const EXP3_VOLATILITY: f64 = 0.2;
pub const EXP3_RATE: f64 = 0.03;

/// Put payoff `max(2 - e^x, 0)` in log-price.
pub fn exp3_payoff(x: f64) -> f64 {
    (2.0 - exp(x)).max(0.0)
}

/// Israeli δ-penalty put with an unknown penalty: both scenarios share the
/// payoff `g = f`, the writer's cancellation level is `h_i = g + δ_i`.
pub fn preset_experiment3() -> ProblemSpec {
    let a = EXP3_VOLATILITY;
    let b = EXP3_RATE - 0.5 * a * a;
    ProblemSpec::new(
        "exp3",
        1.0,
        2,
        (0.0, 1.0),
        Box::new(|x, out| out.fill(exp3_payoff(x))),
    )
    .expect("valid preset")
    .with_drift(Box::new(move |_, _| b))
    .with_diffusion(Box::new(move |_, _| a))
    .with_lower(Box::new(|_, x, out| out.fill(exp3_payoff(x))))
    .with_upper(Box::new(|_, x, out| {
        let g = exp3_payoff(x);
        out[0] = g + EXP3_PENALTY[0];
        out[1] = g + EXP3_PENALTY[1];
    }))
}

/// Looks a preset up by its CLI name.
pub fn preset(name: &str) -> Option<ProblemSpec> {
    match name {
        "exp1" => Some(preset_experiment1()),
        "exp2" => Some(preset_experiment2()),
        "exp3" => Some(preset_experiment3()),
        _ => None,
    }
}
