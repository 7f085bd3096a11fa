//! Least-squares trainers: Levenberg–Marquardt, L-BFGS with a strong
//! Wolfe line search, and Bayesian-regularized Levenberg–Marquardt.
//!
//! All three minimize the mean squared error over the samples
//! `{(x_ℓ, y_ℓ)}` with uniform weights.

use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::FeedforwardNet;
use crate::linalg::{normal_equations, Cholesky};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    LevenbergMarquardt,
    Lbfgs,
    BayesianRegularization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub max_iters: usize,
    /// Stop once the gradient's ∞-norm falls below this.
    pub grad_tol: f64,
    pub damping: f64,
    pub damping_factor: f64,
    /// Give up once the damping exceeds this without an accepted step.
    pub damping_max: f64,
    pub memory: usize,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::new(Optimizer::LevenbergMarquardt)
    }
}

impl TrainConfig {
    pub fn new(optimizer: Optimizer) -> Self {
        Self {
            optimizer,
            max_iters: 500,
            grad_tol: 1e-8,
            damping: 1e-3,
            damping_factor: 10.0,
            damping_max: 1e10,
            memory: 10,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.grad_tol, self.damping, self.damping_max, self.wolfe_c1];
        if positive.iter().any(|v| !(*v > 0.0))
            || !(self.damping_factor > 1.0)
            || self.memory == 0
            || !(self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0)
        {
            return Err(Error::InvalidConfig("trainer tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `max_ℓ |net(x_ℓ) − y_ℓ|`.
    pub max_residual: f64,
}

/// Mean squared error and its gradient with respect to the parameters.
pub fn loss_and_gradient(net: &FeedforwardNet, xs: &[f64], ys: &[f64]) -> (f64, Vec<f64>) {
    let p = net.param_count();
    let mut grad = vec![0.0; p];
    let mut row = vec![0.0; p];
    let mut sse = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let e = net.gradient(x, &mut row) - y;
        sse += e * e;
        for (g, r) in grad.iter_mut().zip(&row) {
            *g += e * r;
        }
    }
    let n = xs.len() as f64;
    grad.iter_mut().for_each(|g| *g *= 2.0 / n);
    (sse / n, grad)
}

fn residuals(net: &FeedforwardNet, xs: &[f64], ys: &[f64], out: &mut [f64]) -> f64 {
    let mut sse = 0.0;
    for ((o, &x), &y) in out.iter_mut().zip(xs).zip(ys) {
        *o = net.eval(x) - y;
        sse += *o * *o;
    }
    sse
}

fn report(net: &FeedforwardNet, xs: &[f64], ys: &[f64], iterations: usize, converged: bool) -> TrainReport {
    let mut sse = 0.0;
    let mut max_residual = 0.0f64;
    for (&x, &y) in xs.iter().zip(ys) {
        let e = net.eval(x) - y;
        sse += e * e;
        max_residual = max_residual.max(e.abs());
    }
    TrainReport { mse: sse / xs.len() as f64, iterations, converged, max_residual }
}

/// Least-squares fit of `net` to the samples, starting from its current
/// parameters. The returned loss never exceeds the initial one.
pub fn fit(net: &FeedforwardNet, xs: &[f64], ys: &[f64], config: &TrainConfig) -> Result<(FeedforwardNet, TrainReport)> {
    config.validate()?;
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len().max(1), found: ys.len() });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training samples"));
    }
    if net.input_dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: net.input_dim() });
    }
    let (trained, iterations, converged) = match config.optimizer {
        Optimizer::LevenbergMarquardt => levenberg_marquardt(net, xs, ys, config, Evidence::Off)?,
        Optimizer::BayesianRegularization => levenberg_marquardt(net, xs, ys, config, Evidence::MacKay)?,
        Optimizer::Lbfgs => lbfgs(net, xs, ys, config)?,
    };
    let init = report(net, xs, ys, 0, converged);
    let out = report(&trained, xs, ys, iterations, converged);
    if out.mse > init.mse {
        return Ok((net.clone(), TrainReport { iterations, ..init }));
    }
    Ok((trained, out))
}

/// Regularization weights of the objective `β E_D + α E_W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evidence {
    /// Plain least squares, `α = 0`, `β = 1`.
    Off,
    /// MacKay updates of `(α, β)` after every accepted step.
    MacKay,
    /// Fixed weights.
    Pinned { alpha: f64, beta: f64 },
}

/// Levenberg–Marquardt on `F = β·½Σe² + α·½Σθ²`, returning the final net,
/// the number of accepted steps and whether the gradient test fired.
pub fn levenberg_marquardt(
    init: &FeedforwardNet,
    xs: &[f64],
    ys: &[f64],
    config: &TrainConfig,
    evidence: Evidence,
) -> Result<(FeedforwardNet, usize, bool)> {
    let n = xs.len();
    let p = init.param_count();
    let (mut alpha, mut beta) = match evidence {
        Evidence::Off | Evidence::MacKay => (0.0, 1.0),
        Evidence::Pinned { alpha, beta } => (alpha, beta),
    };
    let mut net = init.clone();
    let mut trial = init.clone();
    let mut theta = net.params();
    let mut r = vec![0.0; n];
    let mut jac = vec![0.0; n * p];
    let mut mu = config.damping;
    let mut sse = residuals(&net, xs, ys, &mut r);
    let mut iterations = 0;
    let mut converged = false;
    let objective = |sse: f64, theta: &[f64], alpha: f64, beta: f64| {
        0.5 * beta * sse + 0.5 * alpha * theta.iter().map(|t| t * t).sum::<f64>()
    };
    'outer: while iterations < config.max_iters {
        for (k, (&x, &y)) in xs.iter().zip(ys).enumerate() {
            r[k] = net.gradient(x, &mut jac[k * p..(k + 1) * p]) - y;
        }
        let (jtj, jtr) = normal_equations(&jac, &r, p);
        let grad: Vec<f64> = jtr.iter().zip(&theta).map(|(g, t)| beta * g + alpha * t).collect();
        if grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) < config.grad_tol {
            converged = true;
            break;
        }
        let current = objective(sse, &theta, alpha, beta);
        loop {
            let mut h: Vec<f64> = jtj.iter().map(|v| beta * v).collect();
            for i in 0..p {
                h[i * p + i] += alpha + mu;
            }
            let step = match Cholesky::new(&h, p) {
                Some(c) => c.solve(&grad),
                None => {
                    mu *= config.damping_factor;
                    if mu > config.damping_max {
                        break 'outer;
                    }
                    continue;
                }
            };
            let candidate: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t - s).collect();
            trial.set_params(&candidate)?;
            let trial_sse = residuals(&trial, xs, ys, &mut r);
            if !trial_sse.is_finite() {
                return Err(Error::Diverged { iterations, last_finite: Box::new(net) });
            }
            if objective(trial_sse, &candidate, alpha, beta) < current {
                theta = candidate;
                core::mem::swap(&mut net, &mut trial);
                sse = trial_sse;
                mu = (mu / config.damping_factor).max(f64::MIN_POSITIVE);
                iterations += 1;
                break;
            }
            mu *= config.damping_factor;
            if mu > config.damping_max {
                break 'outer;
            }
        }
        if evidence == Evidence::MacKay {
            for (k, &x) in xs.iter().enumerate() {
                net.gradient(x, &mut jac[k * p..(k + 1) * p]);
            }
            let (jtj, _) = normal_equations(&jac, &r, p);
            let mut h: Vec<f64> = jtj.iter().map(|v| beta * v).collect();
            for i in 0..p {
                h[i * p + i] += alpha;
            }
            let ew = 0.5 * theta.iter().map(|t| t * t).sum::<f64>();
            let ed = 0.5 * sse;
            let gamma = match Cholesky::new(&h, p) {
                Some(c) if alpha > 0.0 => (p as f64 - alpha * c.trace_inverse()).clamp(0.0, p as f64),
                _ => p as f64,
            };
            if ew > 0.0 {
                alpha = gamma / (2.0 * ew);
            }
            if ed > 0.0 && (n as f64) > gamma {
                beta = (n as f64 - gamma) / (2.0 * ed);
            }
        }
    }
    Ok((net, iterations, converged))
}

fn lbfgs(init: &FeedforwardNet, xs: &[f64], ys: &[f64], config: &TrainConfig) -> Result<(FeedforwardNet, usize, bool)> {
    let mut net = init.clone();
    let mut probe = init.clone();
    let mut theta = net.params();
    let (mut f, mut g) = loss_and_gradient(&net, xs, ys);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.memory);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        if inf_norm(&g) < config.grad_tol {
            converged = true;
            break;
        }
        let mut d = two_loop(&g, &history);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let first = if history.is_empty() { 1.0 / inf_norm(&g).max(1.0) } else { 1.0 };
        let mut phi = |a: f64| -> Result<(f64, f64, Vec<f64>)> {
            let t: Vec<f64> = theta.iter().zip(&d).map(|(t, d)| t + a * d).collect();
            probe.set_params(&t)?;
            let (f, g) = loss_and_gradient(&probe, xs, ys);
            Ok((f, dot(&g, &d), g))
        };
        let Some((a, f_new, g_new)) = strong_wolfe(&mut phi, f, slope, first, config)? else {
            break;
        };
        if !f_new.is_finite() {
            return Err(Error::Diverged { iterations, last_finite: Box::new(net) });
        }
        let s: Vec<f64> = d.iter().map(|d| a * d).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        theta.iter_mut().zip(&s).for_each(|(t, s)| *t += s);
        net.set_params(&theta)?;
        let sy = dot(&s, &y);
        if sy > 1e-12 * libm::sqrt(dot(&s, &s) * dot(&y, &y)) {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = f - f_new;
        f = f_new;
        g = g_new;
        iterations += 1;
        if decrease <= f64::EPSILON * f.abs() && inf_norm(&g) < libm::sqrt(config.grad_tol) {
            break;
        }
    }
    Ok((net, iterations, converged))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(q, y)| *q -= a * y);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let scale = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= scale);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(q, s)| *q += (a - b) * s);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

type Probe<'a> = dyn FnMut(f64) -> Result<(f64, f64, Vec<f64>)> + 'a;

/// Step length satisfying the strong Wolfe conditions, or `None` when the
/// search stalls.
fn strong_wolfe(
    phi: &mut Probe<'_>,
    f0: f64,
    slope0: f64,
    first: f64,
    config: &TrainConfig,
) -> Result<Option<(f64, f64, Vec<f64>)>> {
    let (c1, c2) = (config.wolfe_c1, config.wolfe_c2);
    let mut prev = (0.0, f0, slope0);
    let mut a = first;
    for i in 0..30 {
        let (f, slope, g) = phi(a)?;
        if !f.is_finite() || f > f0 + c1 * a * slope0 || (i > 0 && f >= prev.1) {
            return zoom(phi, f0, slope0, prev, (a, f, slope), c1, c2);
        }
        if slope.abs() <= -c2 * slope0 {
            return Ok(Some((a, f, g)));
        }
        if slope >= 0.0 {
            return zoom(phi, f0, slope0, (a, f, slope), prev, c1, c2);
        }
        prev = (a, f, slope);
        a *= 2.0;
    }
    Ok(None)
}

fn zoom(
    phi: &mut Probe<'_>,
    f0: f64,
    slope0: f64,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
    c1: f64,
    c2: f64,
) -> Result<Option<(f64, f64, Vec<f64>)>> {
    for _ in 0..40 {
        let a = interpolate(lo, hi);
        let (f, slope, g) = phi(a)?;
        if !f.is_finite() || f > f0 + c1 * a * slope0 || f >= lo.1 {
            hi = (a, f, slope);
        } else {
            if slope.abs() <= -c2 * slope0 {
                return Ok(Some((a, f, g)));
            }
            if slope * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (a, f, slope);
        }
        if (hi.0 - lo.0).abs() <= 1e-14 * lo.0.abs().max(1e-300) {
            break;
        }
    }
    if lo.0 > 0.0 && lo.1 < f0 {
        let (f, _, g) = phi(lo.0)?;
        return Ok(Some((lo.0, f, g)));
    }
    Ok(None)
}

/// Cubic interpolation minimizer, safeguarded into the bracket interior.
fn interpolate(lo: (f64, f64, f64), hi: (f64, f64, f64)) -> f64 {
    let (a0, f0, d0) = lo;
    let (a1, f1, d1) = hi;
    let (left, right) = if a0 < a1 { (a0, a1) } else { (a1, a0) };
    let width = right - left;
    let d = d0 + d1 - 3.0 * (f0 - f1) / (a0 - a1);
    let disc = d * d - d0 * d1;
    let mut a = 0.5 * (a0 + a1);
    if disc >= 0.0 && f1.is_finite() {
        let root = libm::sqrt(disc).copysign(a1 - a0);
        let cubic = a1 - (a1 - a0) * (d1 + root - d) / (d1 - d0 + 2.0 * root);
        if cubic.is_finite() {
            a = cubic;
        }
    }
    a.clamp(left + 0.1 * width, right - 0.1 * width)
}
