//! Error norms, convergence tables, active sets and regularity estimates.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::mesh::{GridSet, SolutionField};
use crate::problem::ProblemSpec;
use crate::solver_nn::{NetRegressor, NnSweep, ResidualTrace};
use crate::solver_sl::{BackwardSweep, SlSweep, SolverConfig};
use crate::stepper::ShockSet;
use crate::{Error, Result};

/// Running MAX and RMS of nodal differences.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorNorms {
    pub max: f64,
    sum_sq: f64,
    count: usize,
}

impl ErrorNorms {
    pub fn push(&mut self, diff: f64) {
        let d = diff.abs();
        self.max = self.max.max(d);
        self.sum_sq += d * d;
        self.count += 1;
    }

    pub fn rms(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        libm::sqrt(self.sum_sq / self.count as f64)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn pair(&self) -> (f64, f64) {
        (self.max, self.rms())
    }
}

/// MAX and RMS of `field − reference` over every node of the field.
pub fn errors_vs(field: &SolutionField, mut reference: impl FnMut(f64, f64, &[f64]) -> f64) -> (f64, f64) {
    let grids = field.grids();
    let mut norms = ErrorNorms::default();
    for n in 0..=grids.time.steps() {
        let t = grids.time.node(n);
        for (l, x) in grids.space.nodes().enumerate() {
            for (m, p) in grids.simplex.nodes().enumerate() {
                norms.push(field.get(n, l, m) - reference(t, x, p));
            }
        }
    }
    norms.pair()
}

/// MAX and RMS against another field evaluated through its interpolant.
pub fn errors_vs_field(field: &SolutionField, reference: &SolutionField) -> Result<(f64, f64)> {
    let mut failure = None;
    let out = errors_vs(field, |t, x, p| match reference.value_at(t, x, p) {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub delta: f64,
    pub max: f64,
    pub max_rate: Option<f64>,
    pub rms: f64,
    pub rms_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn max_rates(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.max_rate).collect()
    }

    pub fn rms_rates(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.rms_rate).collect()
    }
}

fn rate(coarse: f64, fine: f64) -> f64 {
    if coarse == fine {
        return 0.0;
    }
    libm::log2(coarse / fine)
}

/// Rates `log2(err_{k-1} / err_k)` for rows `(Δ, MAX, RMS)` whose `Δ`
/// halves from one row to the next.
pub fn convergence_table(rows: &[(f64, f64, f64)]) -> Result<ConvergenceReport> {
    let mut out = Vec::with_capacity(rows.len());
    for (k, &(delta, max, rms)) in rows.iter().enumerate() {
        let (max_rate, rms_rate) = if k == 0 {
            (None, None)
        } else {
            let prev = rows[k - 1];
            if (delta / prev.0 - 0.5).abs() > 1e-9 {
                return Err(Error::NotHalving { row: k });
            }
            (Some(rate(prev.1, max)), Some(rate(prev.2, rms)))
        };
        out.push(ConvergenceRow { delta, max, max_rate, rms, rms_rate });
    }
    Ok(ConvergenceReport { rows: out })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeState {
    Lower,
    Upper,
    Waiting,
}

/// Nodes where the solution touches an obstacle, at one belief node.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSetMask {
    pub tol: f64,
    pub steps: usize,
    pub cells: usize,
    /// `lower[n * (L + 1) + ℓ]`.
    pub lower: Vec<bool>,
    pub upper: Vec<bool>,
}

impl ActiveSetMask {
    fn at(&self, n: usize, l: usize) -> usize {
        n * (self.cells + 1) + l
    }

    pub fn state(&self, n: usize, l: usize) -> NodeState {
        let k = self.at(n, l);
        if self.lower[k] {
            NodeState::Lower
        } else if self.upper[k] {
            NodeState::Upper
        } else {
            NodeState::Waiting
        }
    }

    pub fn lower_count(&self) -> usize {
        self.lower.iter().filter(|&&b| b).count()
    }

    pub fn upper_count(&self) -> usize {
        self.upper.iter().filter(|&&b| b).count()
    }

    /// Whether the nodes of level `n` off the lower obstacle form one run in
    /// `x`. Upper-active nodes count as part of the run: a cancellation
    /// point between two waiting stretches does not disconnect them, a
    /// waiting pocket inside the lower-active set does.
    pub fn waiting_connected(&self, n: usize) -> bool {
        let mut runs = 0;
        let mut inside = false;
        for l in 0..=self.cells {
            let open = self.state(n, l) != NodeState::Lower;
            if open && !inside {
                runs += 1;
            }
            inside = open;
        }
        runs <= 1
    }
}

/// `lower[n][ℓ] ⇔ |u − p·f| < tol`, `upper[n][ℓ] ⇔ |u − p·h| < tol` at
/// belief node `m`.
pub fn active_sets(field: &SolutionField, problem: &ProblemSpec, m: usize, tol: f64) -> Result<ActiveSetMask> {
    let grids = field.grids();
    if m >= grids.simplex.len() {
        return Err(Error::ScenarioIndex { index: m, count: grids.simplex.len() });
    }
    if !problem.has_obstacles() {
        return Err(Error::InvalidConfig("active sets need an obstacle".into()));
    }
    let p = grids.simplex.node(m);
    let mut scratch = vec![0.0; problem.scenarios];
    let steps = grids.time.steps();
    let cells = grids.space.cells();
    let mut lower = Vec::with_capacity((steps + 1) * (cells + 1));
    let mut upper = Vec::with_capacity((steps + 1) * (cells + 1));
    for n in 0..=steps {
        let t = grids.time.node(n);
        for (l, x) in grids.space.nodes().enumerate() {
            let u = field.get(n, l, m);
            lower.push((u - problem.lower_value(t, x, p, &mut scratch)).abs() < tol);
            upper.push((u - problem.upper_value(t, x, p, &mut scratch)).abs() < tol);
        }
    }
    Ok(ActiveSetMask { tol, steps, cells, lower, upper })
}

/// Empirical regularity constants of a field.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LipschitzReport {
    pub lip_x: f64,
    /// Difference quotients over lattice neighbours divided by `Δp = 1/M`.
    pub lip_p: f64,
    /// `max |u(t_n) − u(t_k)| / (√Δt + √|t_n − t_k|)` over level pairs.
    pub hol_t: f64,
}

pub fn regularity_constants(field: &SolutionField) -> LipschitzReport {
    let grids = field.grids();
    let (steps, space, simplex) = (grids.time.steps(), grids.space.len(), grids.simplex.len());
    let mut report = LipschitzReport::default();
    let dx = grids.space.dx();
    let dp = grids.simplex.dp();
    let neighbours: Vec<Vec<usize>> = (0..simplex).map(|m| grids.simplex.neighbours(m)).collect();
    for n in 0..=steps {
        for l in 0..space {
            let here = field.beliefs_at(n, l);
            if l + 1 < space {
                let right = field.beliefs_at(n, l + 1);
                for (a, b) in here.iter().zip(right) {
                    report.lip_x = report.lip_x.max((b - a).abs() / dx);
                }
            }
            if simplex > 1 {
                for (m, near) in neighbours.iter().enumerate() {
                    for &k in near {
                        report.lip_p = report.lip_p.max((here[k] - here[m]).abs() / dp);
                    }
                }
            }
        }
    }
    let root_dt = libm::sqrt(grids.time.dt());
    for n in 0..=steps {
        for k in n + 1..=steps {
            let denom = root_dt + libm::sqrt(grids.time.node(k) - grids.time.node(n));
            let diff = field
                .level(n)
                .iter()
                .zip(field.level(k))
                .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            report.hol_t = report.hol_t.max(diff / denom);
        }
    }
    report
}

/// `max{‖f‖∞, Lip(g), ‖h‖∞}` over the grid nodes, with `Lip(g)` the
/// largest nodal difference quotient of `g` in `x`.
pub fn lip_p_bound(problem: &ProblemSpec, grids: &GridSet) -> f64 {
    let i = problem.scenarios;
    let mut buf = vec![0.0; i];
    let mut prev = vec![0.0; i];
    let mut bound = 0.0f64;
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for n in 0..=grids.time.steps() {
        let t = grids.time.node(n);
        for x in grids.space.nodes() {
            if let Some(f) = &problem.lower {
                f(t, x, &mut buf);
                bound = bound.max(sup(&buf));
            }
            if let Some(h) = &problem.upper {
                h(t, x, &mut buf);
                bound = bound.max(sup(&buf));
            }
        }
    }
    let dx = grids.space.dx();
    for (l, x) in grids.space.nodes().enumerate() {
        (problem.terminal)(x, &mut buf);
        if l > 0 {
            let q = buf.iter().zip(&prev).fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / dx));
            bound = bound.max(q);
        }
        core::mem::swap(&mut buf, &mut prev);
    }
    bound
}

/// Both sides of `max|NN − SL| <= 2 N lip_x Δx + Σ ε^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeGapBound {
    pub gap: f64,
    pub lip_x: f64,
    pub discretization: f64,
    pub regression: f64,
}

impl SchemeGapBound {
    pub fn rhs(&self) -> f64 {
        self.discretization + self.regression
    }

    pub fn slack(&self) -> f64 {
        self.rhs() - self.gap
    }

    pub fn holds(&self) -> bool {
        self.gap <= self.rhs()
    }
}

pub fn scheme_gap_bound(nn: &SolutionField, sl: &SolutionField, trace: &ResidualTrace) -> Result<SchemeGapBound> {
    if nn.values().len() != sl.values().len() {
        return Err(Error::DimensionMismatch { expected: sl.values().len(), found: nn.values().len() });
    }
    let gap = nn.values().iter().zip(sl.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let lip_x = regularity_constants(sl).lip_x;
    let grids = sl.grids();
    let discretization = 2.0 * grids.time.steps() as f64 * lip_x * grids.space.dx();
    Ok(SchemeGapBound { gap, lip_x, discretization, regression: trace.total() })
}

/// Grid parameter refined by a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    T,
    X,
    P,
}

/// `(N, L, M)` of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSize {
    pub steps: usize,
    pub cells: usize,
    pub resolution: usize,
}

impl GridSize {
    pub fn new(steps: usize, cells: usize, resolution: usize) -> Self {
        Self { steps, cells, resolution }
    }
}

/// Switches shared by every run of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeFlags {
    pub clamp_obstacles: bool,
    pub convexify: bool,
    pub source: bool,
    pub shocks: ShockSet,
}

impl SchemeFlags {
    pub fn for_problem(problem: &ProblemSpec) -> Self {
        Self {
            clamp_obstacles: problem.has_obstacles(),
            convexify: problem.scenarios >= 2,
            source: problem.source.is_some(),
            shocks: ShockSet::two_point(),
        }
    }

    pub fn config(&self, problem: &ProblemSpec, size: GridSize) -> Result<SolverConfig> {
        Ok(SolverConfig {
            grids: GridSet::for_problem(problem, size.steps, size.cells, size.resolution)?,
            clamp_obstacles: self.clamp_obstacles,
            convexify: self.convexify,
            source: self.source,
            shocks: self.shocks.clone(),
        })
    }
}

/// Runs of a halving study and what they are measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementPlan {
    pub axis: Axis,
    pub rows: Vec<GridSize>,
    /// Fine semi-Lagrangian reference; `None` uses the exact solution.
    pub reference: Option<GridSize>,
}

impl RefinementPlan {
    pub fn delta(&self, problem: &ProblemSpec, size: GridSize) -> f64 {
        match self.axis {
            Axis::T => problem.horizon / size.steps as f64,
            Axis::X => (problem.domain.1 - problem.domain.0) / size.cells as f64,
            Axis::P => 1.0 / size.resolution as f64,
        }
    }
}

/// Scheme used for the rows of a study.
#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    SemiLagrangian,
    Network { regressor: NetRegressor, warm_start: bool },
}

fn divides(coarse: usize, fine: usize) -> Result<usize> {
    if coarse == 0 || fine % coarse != 0 {
        return Err(Error::InvalidGrid("reference grid must nest every row".into()));
    }
    Ok(fine / coarse)
}

/// Runs every row of the plan, comparing level by level against the
/// reference without storing whole fields.
pub fn run_refinement(
    problem: &ProblemSpec,
    plan: &RefinementPlan,
    flags: &SchemeFlags,
    scheme: &Scheme,
) -> Result<ConvergenceReport> {
    let configs: Vec<SolverConfig> = plan.rows.iter().map(|&s| flags.config(problem, s)).collect::<Result<_>>()?;
    let mut sweeps: Vec<Box<dyn BackwardSweep + '_>> = Vec::with_capacity(configs.len());
    for config in &configs {
        sweeps.push(match scheme {
            Scheme::SemiLagrangian => Box::new(SlSweep::new(problem, config)?),
            Scheme::Network { regressor, warm_start } => {
                Box::new(NnSweep::new(problem, config, regressor, *warm_start)?)
            }
        });
    }
    let mut norms = vec![ErrorNorms::default(); sweeps.len()];
    match plan.reference {
        None => {
            let exact = problem
                .exact
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("no exact solution; a reference grid is required".into()))?;
            for (sweep, acc) in sweeps.iter_mut().zip(&mut norms) {
                loop {
                    let grids = sweep.grids();
                    let t = grids.time.node(sweep.level_index());
                    let width = grids.simplex.len();
                    for (l, x) in grids.space.nodes().enumerate() {
                        for (m, p) in grids.simplex.nodes().enumerate() {
                            acc.push(sweep.level()[l * width + m] - exact(t, x, p));
                        }
                    }
                    if !sweep.advance()? {
                        break;
                    }
                }
            }
        }
        Some(size) => {
            let ref_config = flags.config(problem, size)?;
            let mut reference = SlSweep::new(problem, &ref_config)?;
            let ref_width = ref_config.grids.simplex.len();
            let mut maps = Vec::with_capacity(configs.len());
            for (config, row) in configs.iter().zip(&plan.rows) {
                let rt = divides(row.steps, size.steps)?;
                let rx = divides(row.cells, size.cells)?;
                let nodes: Vec<usize> = config
                    .grids
                    .simplex
                    .nodes()
                    .map(|p| ref_config.grids.simplex.find(p))
                    .collect::<Option<_>>()
                    .ok_or_else(|| Error::InvalidGrid("reference grid must nest every row".into()))?;
                maps.push((rt, rx, nodes));
            }
            loop {
                let n_ref = reference.level_index();
                let fine = reference.level();
                for ((sweep, acc), (rt, rx, nodes)) in sweeps.iter_mut().zip(&mut norms).zip(&maps) {
                    if n_ref % rt != 0 {
                        continue;
                    }
                    while sweep.level_index() > n_ref / rt {
                        sweep.advance()?;
                    }
                    let width = nodes.len();
                    let coarse = sweep.level();
                    for l in 0..sweep.grids().space.len() {
                        let base = l * rx * ref_width;
                        for (m, &k) in nodes.iter().enumerate() {
                            acc.push(coarse[l * width + m] - fine[base + k]);
                        }
                    }
                }
                if !reference.advance()? {
                    break;
                }
            }
        }
    }
    let rows: Vec<(f64, f64, f64)> = plan
        .rows
        .iter()
        .zip(&norms)
        .map(|(&size, acc)| (plan.delta(problem, size), acc.max, acc.rms()))
        .collect();
    convergence_table(&rows)
}
