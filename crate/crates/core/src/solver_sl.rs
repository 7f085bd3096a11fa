//! Backward semi-Lagrangian sweep of the semi-discrete scheme.
//!
//! Level `n` is built from level `n + 1` node by node: exact expectation
//! over the Euler successors of `x_ℓ` (piecewise-linear in `x`), then the
//! source `Δt·H(t_n, x_ℓ, p_m)`, the clamp `min(max(y, p·f), p·h)` and the
//! lower convex envelope over the belief nodes, in that order.

use alloc::vec;
use alloc::vec::Vec;

use crate::envelope::{convexify_in_place, lower_convex_envelope, EnvelopeResult};
use crate::mesh::{GridSet, SolutionField};
use crate::problem::{dot, ProblemSpec};
use crate::stepper::{EulerStep, ShockSet};
use crate::{Error, Result};

/// Grids and the switches selecting which parts of the recursion run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub grids: GridSet,
    pub clamp_obstacles: bool,
    pub convexify: bool,
    pub source: bool,
    pub shocks: ShockSet,
}

impl SolverConfig {
    /// Every step the problem calls for: clamp when it has obstacles,
    /// envelope when `I >= 2`, source when it has one.
    pub fn for_problem(problem: &ProblemSpec, steps: usize, cells: usize, resolution: usize) -> Result<Self> {
        Ok(Self {
            grids: GridSet::for_problem(problem, steps, cells, resolution)?,
            clamp_obstacles: problem.has_obstacles(),
            convexify: problem.scenarios >= 2,
            source: problem.source.is_some(),
            shocks: ShockSet::two_point(),
        })
    }

    pub fn validate(&self, problem: &ProblemSpec) -> Result<()> {
        self.grids.check_against(problem)?;
        if self.convexify && problem.scenarios < 2 {
            return Err(Error::InvalidConfig("convexification needs at least two scenarios".into()));
        }
        if self.clamp_obstacles && !problem.has_obstacles() {
            return Err(Error::InvalidConfig("clamping needs an obstacle".into()));
        }
        if self.source && problem.source.is_none() {
            return Err(Error::InvalidConfig("the problem has no source term".into()));
        }
        Ok(())
    }
}

/// A backward sweep that exposes one time level at a time, so fields too
/// large to store can still be compared level by level.
pub trait BackwardSweep {
    fn grids(&self) -> &GridSet;
    /// Index `n` of the level currently held.
    fn level_index(&self) -> usize;
    /// Values `u[n][ℓ][m]`, `ℓ`-major.
    fn level(&self) -> &[f64];
    /// Steps to level `n - 1`; `Ok(false)` once level 0 is held.
    fn advance(&mut self) -> Result<bool>;
}

/// Successor `(left node, weight, probability)` triples of one node.
pub(crate) fn footpoints(
    problem: &ProblemSpec,
    config: &SolverConfig,
    t: f64,
    x: f64,
    out: &mut Vec<(usize, f64, f64)>,
) -> Result<usize> {
    let space = &config.grids.space;
    let step = EulerStep::new(config.grids.time.dt(), (problem.drift)(t, x), (problem.diffusion)(t, x), &config.shocks)?;
    out.clear();
    let mut clamped = 0;
    for (y, prob) in step.successors(x) {
        if !y.is_finite() {
            return Err(Error::NonFinite("successor point"));
        }
        clamped += space.clamps(y) as usize;
        let (l, w) = space.locate(y);
        out.push((l, w, prob));
    }
    Ok(clamped)
}

/// Source, clamp and envelope on the belief values of one `(n, ℓ)`.
pub(crate) struct LevelKernel<'a> {
    problem: &'a ProblemSpec,
    config: &'a SolverConfig,
    lower: Vec<f64>,
    upper: Vec<f64>,
    hull: Vec<usize>,
}

impl<'a> LevelKernel<'a> {
    pub(crate) fn new(problem: &'a ProblemSpec, config: &'a SolverConfig) -> Self {
        let i = problem.scenarios;
        Self { problem, config, lower: vec![0.0; i], upper: vec![0.0; i], hull: Vec::new() }
    }

    /// Turns expectations `ys` into level-`n` values in place; returns the
    /// envelope with supports when `keep` is set.
    pub(crate) fn finish(&mut self, n: usize, l: usize, ys: &mut [f64], keep: bool) -> Result<Option<EnvelopeResult>> {
        let grids = &self.config.grids;
        let t = grids.time.node(n);
        let x = grids.space.node(l);
        let simplex = &grids.simplex;
        if self.config.source {
            let dt = grids.time.dt();
            for (y, p) in ys.iter_mut().zip(simplex.nodes()) {
                *y += dt * self.problem.source_value(t, x, p);
            }
        }
        if self.config.clamp_obstacles {
            let has_lower = self.problem.lower.as_ref().map(|f| f(t, x, &mut self.lower)).is_some();
            let has_upper = self.problem.upper.as_ref().map(|h| h(t, x, &mut self.upper)).is_some();
            for (y, p) in ys.iter_mut().zip(simplex.nodes()) {
                if has_lower {
                    *y = y.max(dot(p, &self.lower));
                }
                if has_upper {
                    *y = y.min(dot(p, &self.upper));
                }
            }
        }
        if let Some(m) = ys.iter().position(|y| !y.is_finite()) {
            return Err(Error::SolverNan { n, l, m });
        }
        if !self.config.convexify {
            return Ok(None);
        }
        if keep {
            let env = lower_convex_envelope(simplex, ys)?;
            ys.copy_from_slice(env.values());
            Ok(Some(env))
        } else {
            convexify_in_place(simplex, ys, &mut self.hull)?;
            Ok(None)
        }
    }
}

/// Terminal level `p_m·g(x_ℓ)`.
pub(crate) fn terminal_level(problem: &ProblemSpec, grids: &GridSet) -> Result<Vec<f64>> {
    let mut scratch = vec![0.0; problem.scenarios];
    let mut out = Vec::with_capacity(grids.level_len());
    for (l, x) in grids.space.nodes().enumerate() {
        for (m, p) in grids.simplex.nodes().enumerate() {
            let v = problem.terminal_value(x, p, &mut scratch);
            if !v.is_finite() {
                return Err(Error::SolverNan { n: grids.time.steps(), l, m });
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Semi-Lagrangian sweep holding only the current level.
pub struct SlSweep<'a> {
    problem: &'a ProblemSpec,
    config: &'a SolverConfig,
    kernel: LevelKernel<'a>,
    n: usize,
    current: Vec<f64>,
    next: Vec<f64>,
    feet: Vec<(usize, f64, f64)>,
    keep_supports: bool,
    supports: Vec<EnvelopeResult>,
    clamped_queries: usize,
}

impl<'a> SlSweep<'a> {
    pub fn new(problem: &'a ProblemSpec, config: &'a SolverConfig) -> Result<Self> {
        config.validate(problem)?;
        let current = terminal_level(problem, &config.grids)?;
        Ok(Self {
            problem,
            config,
            kernel: LevelKernel::new(problem, config),
            n: config.grids.time.steps(),
            next: vec![0.0; current.len()],
            current,
            feet: Vec::new(),
            keep_supports: false,
            supports: Vec::new(),
            clamped_queries: 0,
        })
    }

    /// Record the envelope supports of every level computed from now on.
    pub fn keep_supports(mut self, keep: bool) -> Self {
        self.keep_supports = keep;
        self
    }

    /// Supports of the level currently held (when recorded).
    pub fn take_supports(&mut self) -> Vec<EnvelopeResult> {
        core::mem::take(&mut self.supports)
    }

    /// Successor points so far that fell outside the spatial interval.
    pub fn clamped_queries(&self) -> usize {
        self.clamped_queries
    }
}

impl BackwardSweep for SlSweep<'_> {
    fn grids(&self) -> &GridSet {
        &self.config.grids
    }

    fn level_index(&self) -> usize {
        self.n
    }

    fn level(&self) -> &[f64] {
        &self.current
    }

    fn advance(&mut self) -> Result<bool> {
        if self.n == 0 {
            return Ok(false);
        }
        let n = self.n - 1;
        let grids = &self.config.grids;
        let t = grids.time.node(n);
        let width = grids.simplex.len();
        self.supports.clear();
        for (l, x) in grids.space.nodes().enumerate() {
            self.clamped_queries += footpoints(self.problem, self.config, t, x, &mut self.feet)?;
            let ys = &mut self.next[l * width..(l + 1) * width];
            ys.iter_mut().for_each(|y| *y = 0.0);
            for &(k, w, prob) in &self.feet {
                let left = &self.current[k * width..(k + 1) * width];
                let right = &self.current[(k + 1) * width..(k + 2) * width];
                for ((y, a), b) in ys.iter_mut().zip(left).zip(right) {
                    *y += prob * (a + w * (b - a));
                }
            }
            if let Some(env) = self.kernel.finish(n, l, ys, self.keep_supports)? {
                self.supports.push(env);
            }
        }
        core::mem::swap(&mut self.current, &mut self.next);
        self.n = n;
        Ok(true)
    }
}

/// Full backward solve, storing every level and the envelope supports.
pub fn solve(problem: &ProblemSpec, config: &SolverConfig) -> Result<SolutionField> {
    let mut sweep = SlSweep::new(problem, config)?.keep_supports(config.convexify);
    let grids = &config.grids;
    let steps = grids.time.steps();
    let len = grids.level_len();
    let mut values = vec![0.0; (steps + 1) * len];
    values[steps * len..].copy_from_slice(sweep.level());
    let mut envelopes: Vec<Vec<EnvelopeResult>> = Vec::with_capacity(steps);
    while sweep.advance()? {
        let n = sweep.level_index();
        values[n * len..(n + 1) * len].copy_from_slice(sweep.level());
        envelopes.push(sweep.take_supports());
    }
    let envelopes = config.convexify.then(|| envelopes.into_iter().rev().flatten().collect());
    SolutionField::new(grids.clone(), values, envelopes)
}

/// `interp_t ∘ interp_x ∘ interp_p` evaluation of a solved field.
pub fn value_at(field: &SolutionField, t: f64, x: f64, p: &[f64]) -> Result<f64> {
    field.value_at(t, x, p)
}
