//! The three subcommands. Each `cmd_*` writes its files and returns what it
//! computed; the pure parts are exposed for tests.

use std::path::PathBuf;

use dynkin_core::analysis::{
    active_sets, errors_vs, run_refinement, scheme_gap_bound, ActiveSetMask, Axis, ConvergenceReport, GridSize,
    RefinementPlan, Scheme, SchemeFlags, SchemeGapBound,
};
use dynkin_core::envelope::{COLLINEAR_TOLERANCE, LP_TOLERANCE};
use dynkin_core::mesh::SolutionField;
use dynkin_core::neuralnet::{FeedforwardNet, TrainConfig};
use dynkin_core::problem::ProblemSpec;
use dynkin_core::solver_nn::{solve_nn, NNSolverConfig, NetRegressor, NnSolution};
use dynkin_core::solver_sl::{solve, SolverConfig};
use serde_json::{json, Map, Value};

use crate::config::{axis_name, optimizer_name, Pin, Reference, RunConfig, SchemeKind};
use crate::error::{CliError, CliResult};
use crate::output;

pub fn solver_config(problem: &ProblemSpec, cfg: &RunConfig) -> CliResult<SolverConfig> {
    let mut config = SolverConfig::for_problem(problem, cfg.steps, cfg.cells, cfg.resolution)?;
    config.convexify &= cfg.convexify;
    Ok(config)
}

pub fn train_config(cfg: &RunConfig) -> TrainConfig {
    let mut train = TrainConfig::new(cfg.optimizer);
    train.max_iters = cfg.iters;
    train.seed = cfg.seed;
    train
}

fn grid_json(config: &SolverConfig) -> Value {
    let g = &config.grids;
    json!({
        "n": g.time.steps(),
        "l": g.space.cells(),
        "m": g.simplex.resolution(),
        "dt": g.time.dt(),
        "dx": g.space.dx(),
        "dp": g.simplex.dp(),
        "domain": [g.space.bounds().0, g.space.bounds().1],
    })
}

fn problem_json(problem: &ProblemSpec) -> Value {
    json!({
        "name": problem.name,
        "scenarios": problem.scenarios,
        "horizon": problem.horizon,
        "domain": [problem.domain.0, problem.domain.1],
        "lower_obstacle": problem.lower.is_some(),
        "upper_obstacle": problem.upper.is_some(),
        "source": problem.source.is_some(),
        "exact_solution": problem.exact.is_some(),
    })
}

fn training_json(cfg: &RunConfig) -> Value {
    let t = train_config(cfg);
    json!({
        "optimizer": optimizer_name(t.optimizer),
        "hidden": cfg.hidden,
        "activation": "tanh",
        "warm_start": cfg.warm_start,
        "max_iters": t.max_iters,
        "grad_tol": t.grad_tol,
        "damping": t.damping,
        "damping_factor": t.damping_factor,
        "damping_max": t.damping_max,
        "memory": t.memory,
        "wolfe_c1": t.wolfe_c1,
        "wolfe_c2": t.wolfe_c2,
        "seed": t.seed,
        "seed_derivation": "splitmix64(seed, n, m) seeds ChaCha8 per fit",
        "init": "hidden weights and biases uniform in +-1/sqrt(fan_in); output weights 0, output bias = mean of the targets",
        "warm_start_rule": "the fit at (n, m) starts from the trained net of (n + 1, m)",
        "input_scaling": "affine map of the domain onto [-1, 1]",
        "fit_fallback": "initial parameters are kept when training raises the MSE",
    })
}

/// Knobs that are fixed in code but change results when changed.
fn decisions_json(config: &SolverConfig) -> Value {
    json!({
        "operation_order": ["expectation", "source", "clamp", "envelope"],
        "clamp_obstacles": config.clamp_obstacles,
        "convexify": config.convexify,
        "source": config.source,
        "shocks": config.shocks.points().iter().map(|(z, w)| json!([z, w])).collect::<Vec<_>>(),
        "x_extrapolation": "constant (clamp to the nearest endpoint)",
        "envelope_two_scenarios": "monotone-chain lower hull",
        "envelope_general": "per-node linear program, two-phase simplex with Bland's rule",
        "lp_tolerance": LP_TOLERANCE,
        "collinear_tolerance": COLLINEAR_TOLERANCE,
        "support_tie_break": "a node on the hull supports itself; otherwise the nearest touching nodes on each side",
    })
}

fn bound_json(b: &SchemeGapBound) -> Value {
    json!({
        "gap": b.gap,
        "lip_x": b.lip_x,
        "discretization": b.discretization,
        "regression": b.regression,
        "rhs": b.rhs(),
        "slack": b.slack(),
        "holds": b.holds(),
    })
}

fn base_manifest(command: &str, cfg: &RunConfig, problem: &ProblemSpec) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), json!(command));
    m.insert("preset".into(), json!(cfg.preset));
    m.insert("scheme".into(), json!(cfg.scheme.name()));
    m.insert("problem".into(), problem_json(problem));
    if !cfg.custom.is_empty() {
        m.insert("expressions".into(), json!(cfg.custom));
    }
    if cfg.scheme == SchemeKind::Nn {
        m.insert("training".into(), training_json(cfg));
    }
    m
}

/// Result of one solve, before anything is written.
pub struct Computed {
    pub config: SolverConfig,
    pub field: SolutionField,
    pub network: Option<NnSolution<FeedforwardNet>>,
    /// Gap to the semi-Lagrangian solution on the same grid (network runs).
    pub bound: Option<SchemeGapBound>,
    /// `(MAX, RMS)` against the exact solution, when one is known.
    pub errors: Option<(f64, f64)>,
}

pub fn compute(cfg: &RunConfig, problem: &ProblemSpec) -> CliResult<Computed> {
    let config = solver_config(problem, cfg)?;
    let (field, network, bound) = match cfg.scheme {
        SchemeKind::Sl => (solve(problem, &config)?, None, None),
        SchemeKind::Nn => {
            let nn_config = NNSolverConfig {
                solver: config.clone(),
                train: train_config(cfg),
                hidden: cfg.hidden,
                warm_start: cfg.warm_start,
            };
            let nn = solve_nn(problem, &nn_config)?;
            let sl = solve(problem, &config)?;
            let bound = scheme_gap_bound(&nn.field, &sl, &nn.trace)?;
            (nn.field.clone(), Some(nn), Some(bound))
        }
    };
    let errors = problem.exact.as_ref().map(|exact| errors_vs(&field, |t, x, p| exact(t, x, p)));
    Ok(Computed { config, field, network, bound, errors })
}

pub struct RunOutcome {
    pub computed: Computed,
    pub files: Vec<PathBuf>,
}

/// `solver run`: solution CSV, manifest and plot script; network runs add
/// the residual trace and per-fit training reports.
pub fn cmd_run(cfg: &RunConfig) -> CliResult<RunOutcome> {
    let problem = cfg.problem()?;
    let computed = compute(cfg, &problem)?;
    let stem = cfg.stem();
    let mut files = Vec::new();
    let mut write = |name: String, bytes: Vec<u8>| -> CliResult<()> {
        let path = cfg.out.join(name);
        output::write_atomic(&path, &bytes)?;
        files.push(path);
        Ok(())
    };
    let csv = format!("{stem}.csv");
    write(csv.clone(), output::solution_csv(&computed.field).into_bytes())?;
    let scenarios = problem.scenarios;
    let u_column = if scenarios <= 2 { 4 } else { 3 + scenarios };
    let p_shown = if scenarios == 1 { 1.0 } else { 0.0 };
    let title = format!("{} {} u(t, x, p = {p_shown})", cfg.preset, cfg.scheme.name());
    write(format!("{stem}.gp"), output::solution_plot(&csv, &title, p_shown, u_column).into_bytes())?;

    let mut manifest = base_manifest("run", cfg, &problem);
    manifest.insert("grids".into(), grid_json(&computed.config));
    manifest.insert("decisions".into(), decisions_json(&computed.config));
    let (lo, hi) = computed.field.min_max();
    let mut results = Map::new();
    results.insert("min_u".into(), json!(lo));
    results.insert("max_u".into(), json!(hi));
    if let Some((max, rms)) = computed.errors {
        results.insert("max_error_vs_exact".into(), json!(max));
        results.insert("rms_error_vs_exact".into(), json!(rms));
    }
    if let Some(nn) = &computed.network {
        let width = computed.config.grids.simplex.len();
        write(format!("{stem}_residual.csv"), output::residual_csv(&nn.trace).into_bytes())?;
        write(format!("{stem}_train.csv"), output::train_csv(&nn.reports, width).into_bytes())?;
        results.insert("residual_total".into(), json!(nn.trace.total()));
        results.insert("fits".into(), json!(nn.reports.len()));
        results.insert("fits_converged".into(), json!(nn.reports.iter().filter(|r| r.converged).count()));
        results.insert("training_iterations".into(), json!(nn.reports.iter().map(|r| r.iterations).sum::<usize>()));
    }
    if let Some(b) = &computed.bound {
        results.insert("scheme_gap_bound".into(), bound_json(b));
    }
    manifest.insert("results".into(), Value::Object(results));
    let mut names: Vec<String> =
        files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
    names.push(format!("{stem}.json"));
    manifest.insert("files".into(), json!(names));
    let path = cfg.out.join(format!("{stem}.json"));
    output::write_atomic(&path, &output::json_bytes(&Value::Object(manifest)))?;
    files.push(path);
    Ok(RunOutcome { computed, files })
}

/// Built-in study for `(preset, scheme, axis)`: rows, the pin of the other
/// parameters and the reference.
pub fn default_study(preset: &str, scheme: SchemeKind, axis: Axis) -> (Vec<usize>, Pin, Reference) {
    use Reference::{Exact, Grid};
    match (preset, scheme, axis) {
        ("exp1", SchemeKind::Sl, Axis::T) => (vec![64, 128, 256, 512, 1024], Pin::Fixed(2048), Exact),
        ("exp1", SchemeKind::Sl, _) => (vec![64, 128, 256, 512, 1024], Pin::Tied, Exact),
        ("exp1", SchemeKind::Nn, Axis::T) => (vec![16, 32, 64, 128], Pin::Fixed(128), Exact),
        ("exp1", SchemeKind::Nn, _) => (vec![16, 32, 64, 128], Pin::Tied, Exact),
        ("exp2", SchemeKind::Sl, _) => (vec![16, 32, 64, 128], Pin::Fixed(512), Grid(512)),
        ("exp3", SchemeKind::Sl, _) => (vec![16, 32, 64, 128], Pin::Fixed(256), Grid(256)),
        (_, SchemeKind::Nn, _) => (vec![8, 16, 32], Pin::Fixed(32), Grid(128)),
        (_, SchemeKind::Sl, _) => (vec![16, 32, 64, 128], Pin::Tied, Grid(512)),
    }
}

/// Rows and reference of the study `cfg` asks for, defaults filled in.
pub fn study_plan(cfg: &RunConfig, problem: &ProblemSpec) -> CliResult<RefinementPlan> {
    let axis = cfg.axis.ok_or_else(|| CliError::config("a table needs an axis (t, x, p)"))?;
    let single = problem.scenarios == 1;
    if single && axis == Axis::P {
        return Err(CliError::config("a single-scenario problem has no p axis"));
    }
    let (rows, pin, reference) = default_study(&cfg.preset, cfg.scheme, axis);
    let rows = cfg.rows.clone().unwrap_or(rows);
    let pin = cfg.pin.unwrap_or(pin);
    let mut reference = cfg.reference.unwrap_or(reference);
    if reference == Reference::Exact && problem.exact.is_none() {
        if cfg.reference.is_some() {
            return Err(CliError::config("the problem has no exact solution; give reference = <grid size>"));
        }
        reference = Reference::Grid(4 * rows.iter().copied().max().unwrap_or(1));
    }
    let fixed = |k: usize| match pin {
        Pin::Tied => k,
        Pin::Fixed(f) => f,
    };
    let belief = |k: usize| if single { 1 } else { k };
    let rows = rows
        .iter()
        .map(|&k| match axis {
            Axis::T => GridSize::new(k, fixed(k), belief(fixed(k))),
            Axis::X => GridSize::new(fixed(k), k, belief(fixed(k))),
            Axis::P => GridSize::new(fixed(k), fixed(k), k),
        })
        .collect();
    let reference = match reference {
        Reference::Exact => None,
        Reference::Grid(r) => Some(GridSize::new(r, r, belief(r))),
    };
    Ok(RefinementPlan { axis, rows, reference })
}

pub fn study_scheme(cfg: &RunConfig, problem: &ProblemSpec) -> Scheme {
    match cfg.scheme {
        SchemeKind::Sl => Scheme::SemiLagrangian,
        SchemeKind::Nn => Scheme::Network {
            regressor: NetRegressor { train: train_config(cfg), hidden: cfg.hidden, domain: problem.domain },
            warm_start: cfg.warm_start,
        },
    }
}

pub fn study_flags(cfg: &RunConfig, problem: &ProblemSpec) -> SchemeFlags {
    let mut flags = SchemeFlags::for_problem(problem);
    flags.convexify &= cfg.convexify;
    flags
}

pub struct TableOutcome {
    pub plan: RefinementPlan,
    pub report: ConvergenceReport,
    pub files: Vec<PathBuf>,
}

/// `solver table`: runs the halving study and writes the table CSV.
pub fn cmd_table(cfg: &RunConfig) -> CliResult<TableOutcome> {
    let problem = cfg.problem()?;
    let plan = study_plan(cfg, &problem)?;
    let flags = study_flags(cfg, &problem);
    let report = run_refinement(&problem, &plan, &flags, &study_scheme(cfg, &problem))?;
    let axis = axis_name(plan.axis);
    let stem = format!("{}_{axis}_table", cfg.stem());
    let csv = format!("{stem}.csv");
    let mut files = Vec::new();
    for (name, bytes) in [
        (csv.clone(), output::table_csv(&report).into_bytes()),
        (
            format!("{stem}.gp"),
            output::table_plot(&csv, &format!("{} {} refinement in {axis}", cfg.preset, cfg.scheme.name()))
                .into_bytes(),
        ),
    ] {
        let path = cfg.out.join(name);
        output::write_atomic(&path, &bytes)?;
        files.push(path);
    }
    let mut manifest = base_manifest("table", cfg, &problem);
    let size = |s: &GridSize| json!({ "n": s.steps, "l": s.cells, "m": s.resolution });
    manifest.insert("axis".into(), json!(axis));
    manifest.insert(
        "interpretation".into(),
        json!("one block per refined parameter; the other parameters stay at the listed grid sizes"),
    );
    manifest.insert("rows".into(), json!(plan.rows.iter().map(size).collect::<Vec<_>>()));
    manifest.insert(
        "reference".into(),
        match &plan.reference {
            None => json!("exact solution"),
            Some(r) => json!({ "scheme": "sl", "grid": size(r) }),
        },
    );
    let sample = flags.config(&problem, plan.rows[0])?;
    manifest.insert("decisions".into(), decisions_json(&sample));
    manifest.insert(
        "results".into(),
        json!({
            "delta": report.rows.iter().map(|r| r.delta).collect::<Vec<_>>(),
            "max_error": report.rows.iter().map(|r| r.max).collect::<Vec<_>>(),
            "rms_error": report.rows.iter().map(|r| r.rms).collect::<Vec<_>>(),
            "max_rate": report.max_rates(),
            "rms_rate": report.rms_rates(),
        }),
    );
    manifest.insert("files".into(), json!([csv, format!("{stem}.gp"), format!("{stem}.json")]));
    let path = cfg.out.join(format!("{stem}.json"));
    output::write_atomic(&path, &output::json_bytes(&Value::Object(manifest)))?;
    files.push(path);
    Ok(TableOutcome { plan, report, files })
}

/// Belief node nearest to `p` (the weight of the first scenario).
pub fn belief_node(cfg: &RunConfig, problem: &ProblemSpec) -> CliResult<usize> {
    if problem.scenarios != 2 {
        return Err(CliError::config("boundary extraction needs a two-scenario problem"));
    }
    Ok((cfg.p * cfg.resolution as f64).round() as usize)
}

pub struct BoundaryOutcome {
    pub computed: Computed,
    pub node: usize,
    pub mask: ActiveSetMask,
    pub files: Vec<PathBuf>,
}

/// Active sets at one belief node, before anything is written.
pub fn boundary(cfg: &RunConfig) -> CliResult<(Computed, usize, ActiveSetMask)> {
    let problem = cfg.problem()?;
    if !problem.has_obstacles() {
        return Err(CliError::config(format!("preset `{}` has no obstacles", cfg.preset)));
    }
    let node = belief_node(cfg, &problem)?;
    let computed = compute(cfg, &problem)?;
    let mask = active_sets(&computed.field, &problem, node, cfg.tol)?;
    Ok((computed, node, mask))
}

/// `solver boundary`: the `t,x,state` mask at the belief node nearest to
/// `p`, with a plot script and manifest.
pub fn cmd_boundary(cfg: &RunConfig) -> CliResult<BoundaryOutcome> {
    let (computed, node, mask) = boundary(cfg)?;
    let problem = cfg.problem()?;
    let grids = &computed.config.grids;
    let stem = format!("{}_boundary", cfg.stem());
    let csv = format!("{stem}.csv");
    let p_node = grids.simplex.node(node)[0];
    let mut files = Vec::new();
    for (name, bytes) in [
        (csv.clone(), output::mask_csv(&mask, grids).into_bytes()),
        (
            format!("{stem}.gp"),
            output::mask_plot(&csv, &format!("{} {} active sets at p = {p_node}", cfg.preset, cfg.scheme.name()))
                .into_bytes(),
        ),
    ] {
        let path = cfg.out.join(name);
        output::write_atomic(&path, &bytes)?;
        files.push(path);
    }
    let steps = grids.time.steps();
    let split: Vec<usize> = (0..=steps).filter(|&n| !mask.waiting_connected(n)).collect();
    let mut manifest = base_manifest("boundary", cfg, &problem);
    manifest.insert("grids".into(), grid_json(&computed.config));
    manifest.insert("decisions".into(), decisions_json(&computed.config));
    manifest.insert(
        "results".into(),
        json!({
            "p_requested": cfg.p,
            "p_node": p_node,
            "node": node,
            "tol": cfg.tol,
            "lower_active": mask.lower_count(),
            "upper_active": mask.upper_count(),
            "levels_with_disconnected_waiting_region": split,
            "connectivity_rule": "nodes off the lower obstacle form one run in x (upper-active nodes count as part of the run)",
        }),
    );
    if let Some(b) = &computed.bound {
        manifest.insert("scheme_gap_bound".into(), bound_json(b));
    }
    manifest.insert("files".into(), json!([csv, format!("{stem}.gp"), format!("{stem}.json")]));
    let path = cfg.out.join(format!("{stem}.json"));
    output::write_atomic(&path, &output::json_bytes(&Value::Object(manifest)))?;
    files.push(path);
    Ok(BoundaryOutcome { computed, node, mask, files })
}
