//! Fully-discrete scheme: the next level is regressed in `x` for every
//! belief node, and the expectation is taken through the regressor at the
//! exact successor points. Source, clamp and envelope are shared with the
//! semi-Lagrangian sweep.

use alloc::vec;
use alloc::vec::Vec;

use crate::envelope::EnvelopeResult;
use crate::mesh::{GridSet, SolutionField, SpaceGrid};
use crate::neuralnet::{fit, Activation, FeedforwardNet, TrainConfig, TrainReport};
use crate::problem::ProblemSpec;
use crate::seed;
use crate::solver_sl::{terminal_level, BackwardSweep, LevelKernel, SolverConfig};
use crate::stepper::EulerStep;
use crate::{Error, Result};

/// A scalar regression model fitted to one `x`-slice.
pub trait Regressor {
    type Model: Clone;

    /// Fits `{(x_ℓ, y_ℓ)}` for time level `n + 1`, belief node `m`,
    /// optionally warm-started from the previous level's model.
    fn fit(&self, n: usize, m: usize, xs: &[f64], ys: &[f64], warm: Option<&Self::Model>)
        -> Result<(Self::Model, TrainReport)>;

    fn eval(&self, model: &Self::Model, x: f64) -> f64;
}

/// Shallow tanh networks trained by one of the least-squares optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct NetRegressor {
    pub train: TrainConfig,
    pub hidden: usize,
    pub domain: (f64, f64),
}

impl Regressor for NetRegressor {
    type Model = FeedforwardNet;

    fn fit(&self, n: usize, m: usize, xs: &[f64], ys: &[f64], warm: Option<&FeedforwardNet>)
        -> Result<(FeedforwardNet, TrainReport)> {
        let init = match warm {
            Some(net) => net.clone(),
            None => {
                let mut rng = seed::rng(seed::derive(self.train.seed, n, m));
                FeedforwardNet::shallow(self.hidden, Activation::Tanh, &mut rng)?
                    .with_input_range(self.domain.0, self.domain.1)
                    .with_constant_output(ys.iter().sum::<f64>() / ys.len().max(1) as f64)
            }
        };
        fit(&init, xs, ys, &self.train)
    }

    #[inline]
    fn eval(&self, model: &FeedforwardNet, x: f64) -> f64 {
        model.eval(x)
    }
}

/// Piecewise-linear interpolant of the slice itself; with it the scheme
/// collapses to the semi-Lagrangian one.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolantOracle {
    pub grid: SpaceGrid,
}

impl Regressor for InterpolantOracle {
    type Model = Vec<f64>;

    fn fit(&self, _: usize, _: usize, _: &[f64], ys: &[f64], _: Option<&Vec<f64>>) -> Result<(Vec<f64>, TrainReport)> {
        let report = TrainReport { mse: 0.0, iterations: 0, converged: true, max_residual: 0.0 };
        Ok((ys.to_vec(), report))
    }

    #[inline]
    fn eval(&self, model: &Vec<f64>, x: f64) -> f64 {
        let (l, w) = self.grid.locate(x);
        model[l] + w * (model[l + 1] - model[l])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NNSolverConfig {
    pub solver: SolverConfig,
    pub train: TrainConfig,
    pub hidden: usize,
    /// Initialize each fit from the model of the same belief node one
    /// level later.
    pub warm_start: bool,
}

impl NNSolverConfig {
    pub fn regressor(&self, problem: &ProblemSpec) -> NetRegressor {
        NetRegressor { train: self.train.clone(), hidden: self.hidden, domain: problem.domain }
    }
}

/// Per-level regression residuals `ε^n = max_{ℓ,m} |Ψ(x_ℓ) − u[n+1][ℓ][m]|`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResidualTrace {
    pub eps: Vec<f64>,
}

impl ResidualTrace {
    pub fn total(&self) -> f64 {
        self.eps.iter().sum()
    }
}

/// Output of a fully-discrete run.
#[derive(Debug, Clone)]
pub struct NnSolution<M> {
    pub field: SolutionField,
    pub trace: ResidualTrace,
    /// Model fitted to level `n + 1`, belief node `m`, at `n * M + m`.
    pub models: Vec<M>,
    pub reports: Vec<TrainReport>,
}

/// Fully-discrete sweep holding one level and the most recent models.
pub struct NnSweep<'a, R: Regressor> {
    problem: &'a ProblemSpec,
    config: &'a SolverConfig,
    regressor: &'a R,
    warm_start: bool,
    kernel: LevelKernel<'a>,
    n: usize,
    current: Vec<f64>,
    next: Vec<f64>,
    models: Vec<R::Model>,
    reports: Vec<TrainReport>,
    eps: f64,
    supports: Vec<EnvelopeResult>,
    keep_supports: bool,
}

impl<'a, R: Regressor> NnSweep<'a, R> {
    pub fn new(problem: &'a ProblemSpec, config: &'a SolverConfig, regressor: &'a R, warm_start: bool) -> Result<Self> {
        config.validate(problem)?;
        let current = terminal_level(problem, &config.grids)?;
        Ok(Self {
            problem,
            config,
            regressor,
            warm_start,
            kernel: LevelKernel::new(problem, config),
            n: config.grids.time.steps(),
            next: vec![0.0; current.len()],
            current,
            models: Vec::new(),
            reports: Vec::new(),
            eps: 0.0,
            supports: Vec::new(),
            keep_supports: false,
        })
    }

    pub fn keep_supports(mut self, keep: bool) -> Self {
        self.keep_supports = keep;
        self
    }

    /// Models fitted during the last `advance`, one per belief node.
    pub fn models(&self) -> &[R::Model] {
        &self.models
    }

    pub fn reports(&self) -> &[TrainReport] {
        &self.reports
    }

    /// `ε^n` of the level currently held.
    pub fn residual(&self) -> f64 {
        self.eps
    }

    pub fn take_supports(&mut self) -> Vec<EnvelopeResult> {
        core::mem::take(&mut self.supports)
    }
}

impl<R: Regressor> BackwardSweep for NnSweep<'_, R> {
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
        let width = grids.simplex.len();
        let xs: Vec<f64> = grids.space.nodes().collect();
        let mut models = Vec::with_capacity(width);
        let mut reports = Vec::with_capacity(width);
        let mut slice = vec![0.0; xs.len()];
        let mut eps = 0.0f64;
        for m in 0..width {
            for (l, s) in slice.iter_mut().enumerate() {
                *s = self.current[l * width + m];
            }
            let warm = if self.warm_start { self.models.get(m) } else { None };
            let (model, report) = self
                .regressor
                .fit(n, m, &xs, &slice, warm)
                .map_err(|e| Error::Training { n, m, source: alloc::boxed::Box::new(e) })?;
            for (&x, &y) in xs.iter().zip(&slice) {
                eps = eps.max((self.regressor.eval(&model, x) - y).abs());
            }
            models.push(model);
            reports.push(report);
        }
        let t = grids.time.node(n);
        let dt = grids.time.dt();
        self.supports.clear();
        for (l, &x) in xs.iter().enumerate() {
            let step = EulerStep::new(dt, (self.problem.drift)(t, x), (self.problem.diffusion)(t, x), &self.config.shocks)?;
            let ys = &mut self.next[l * width..(l + 1) * width];
            ys.iter_mut().for_each(|y| *y = 0.0);
            for (y_next, prob) in step.successors(x) {
                for (y, model) in ys.iter_mut().zip(&models) {
                    *y += prob * self.regressor.eval(model, y_next);
                }
            }
            if let Some(env) = self.kernel.finish(n, l, ys, self.keep_supports)? {
                self.supports.push(env);
            }
        }
        core::mem::swap(&mut self.current, &mut self.next);
        self.models = models;
        self.reports = reports;
        self.eps = eps;
        self.n = n;
        Ok(true)
    }
}

/// Fully-discrete solve with an arbitrary regressor, retaining every model.
pub fn solve_with<R: Regressor>(
    problem: &ProblemSpec,
    config: &SolverConfig,
    regressor: &R,
    warm_start: bool,
) -> Result<NnSolution<R::Model>> {
    let mut sweep = NnSweep::new(problem, config, regressor, warm_start)?.keep_supports(config.convexify);
    let grids = &config.grids;
    let steps = grids.time.steps();
    let len = grids.level_len();
    let width = grids.simplex.len();
    let mut values = vec![0.0; (steps + 1) * len];
    values[steps * len..].copy_from_slice(sweep.level());
    let mut eps = vec![0.0; steps];
    let mut models: Vec<Option<R::Model>> = vec![None; steps * width];
    let mut reports: Vec<Option<TrainReport>> = vec![None; steps * width];
    let mut envelopes = Vec::with_capacity(steps);
    while sweep.advance()? {
        let n = sweep.level_index();
        values[n * len..(n + 1) * len].copy_from_slice(sweep.level());
        eps[n] = sweep.residual();
        for (m, (model, report)) in sweep.models().iter().zip(sweep.reports()).enumerate() {
            models[n * width + m] = Some(model.clone());
            reports[n * width + m] = Some(report.clone());
        }
        envelopes.push(sweep.take_supports());
    }
    let envelopes = config.convexify.then(|| envelopes.into_iter().rev().flatten().collect());
    Ok(NnSolution {
        field: SolutionField::new(grids.clone(), values, envelopes)?,
        trace: ResidualTrace { eps },
        models: models.into_iter().map(|m| m.expect("every level fitted")).collect(),
        reports: reports.into_iter().map(|r| r.expect("every level fitted")).collect(),
    })
}

/// Fully-discrete solve with shallow tanh networks.
pub fn solve_nn(problem: &ProblemSpec, config: &NNSolverConfig) -> Result<NnSolution<FeedforwardNet>> {
    solve_with(problem, &config.solver, &config.regressor(problem), config.warm_start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::Optimizer;
    use crate::problem::preset_experiment3;
    use crate::solver_sl::solve;
    use alloc::boxed::Box;

    #[test]
    fn oracle_reproduces_semi_lagrangian() {
        let problem = preset_experiment3();
        let config = SolverConfig::for_problem(&problem, 6, 10, 4).unwrap();
        let sl = solve(&problem, &config).unwrap();
        let oracle = InterpolantOracle { grid: config.grids.space.clone() };
        let nn = solve_with(&problem, &config, &oracle, false).unwrap();
        for (a, b) in sl.values().iter().zip(nn.field.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(nn.trace.eps.iter().all(|&e| e <= 1e-14));
    }

    #[test]
    fn constant_data_is_fitted_exactly() {
        let problem = ProblemSpec::new("c", 1.0, 1, (0.0, 1.0), Box::new(|_, out: &mut [f64]| out.fill(0.75)))
            .unwrap()
            .with_diffusion(Box::new(|_, _| 0.3));
        let config = NNSolverConfig {
            solver: SolverConfig::for_problem(&problem, 4, 16, 1).unwrap(),
            train: TrainConfig::new(Optimizer::LevenbergMarquardt),
            hidden: 10,
            warm_start: true,
        };
        let out = solve_nn(&problem, &config).unwrap();
        assert!(out.trace.eps.iter().all(|&e| (0.0..=1e-8).contains(&e)), "{:?}", out.trace);
        assert!(out.field.values().iter().all(|v| (v - 0.75).abs() <= 1e-8));
        assert_eq!(out.models.len(), 4);
    }
}
