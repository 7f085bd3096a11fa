use dynkin_core::analysis::{lip_p_bound, regularity_constants};
use dynkin_core::envelope::feedback_marginal;
use dynkin_core::mesh::SolutionField;
use dynkin_core::problem::*;
use dynkin_core::solver_nn::{solve_with, InterpolantOracle};
use dynkin_core::solver_sl::{solve, BackwardSweep, SlSweep, SolverConfig};
use dynkin_core::stepper::EulerStep;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Coeffs {
    drift: f64,
    vol: f64,
    lower: [f64; 4],
    gap: [f64; 2],
    terminal: [f64; 2],
    source: f64,
}

fn coeffs() -> impl Strategy<Value = Coeffs> {
    (
        -0.5f64..0.5,
        0.05f64..0.6,
        prop::array::uniform4(-1.0f64..1.0),
        prop::array::uniform2(0.05f64..1.0),
        prop::array::uniform2(-1.0f64..1.0),
        -2.0f64..2.0,
    )
        .prop_map(|(drift, vol, lower, gap, terminal, source)| Coeffs { drift, vol, lower, gap, terminal, source })
}

// affine obstacles, a kinked terminal payoff and a belief-dependent source
fn random_problem(c: &Coeffs) -> ProblemSpec {
    let Coeffs { drift, vol, lower, gap, terminal, source } = c.clone();
    let f = move |x: f64, out: &mut [f64]| {
        out[0] = lower[0] + lower[1] * x;
        out[1] = lower[2] + lower[3] * x;
    };
    ProblemSpec::new(
        "random",
        1.0,
        2,
        (0.0, 1.0),
        Box::new(move |x, out| {
            out[0] = terminal[0] * (x - 0.4).abs();
            out[1] = terminal[1] * (0.6 - x).max(0.0);
        }),
    )
    .unwrap()
    .with_drift(Box::new(move |_, _| drift))
    .with_diffusion(Box::new(move |_, x| vol * (1.0 + 0.5 * x)))
    .with_lower(Box::new(move |_, x, out| f(x, out)))
    .with_upper(Box::new(move |_, x, out| {
        f(x, out);
        out[0] += gap[0];
        out[1] += gap[1];
    }))
    .with_source(Box::new(move |t, x, p| source * (p[0] - 0.5) * (p[0] - 0.5) * (1.0 + t * x)))
}

/// Rebuilds every level from the next one through the feedback law of the
/// stored envelope supports.
fn dpp_defect(problem: &ProblemSpec, config: &SolverConfig, field: &SolutionField) -> f64 {
    let grids = field.grids();
    let dt = grids.time.dt();
    let mut scratch = [0.0; 2];
    let mut worst = 0.0f64;
    for n in 0..grids.time.steps() {
        let t = grids.time.node(n);
        for (l, x) in grids.space.nodes().enumerate() {
            let env = field.envelope(n, l).expect("supports are stored");
            let step = EulerStep::new(dt, (problem.drift)(t, x), (problem.diffusion)(t, x), &config.shocks).unwrap();
            for m in 0..grids.simplex.len() {
                let law = feedback_marginal(env, &grids.simplex, m);
                let rebuilt = law.expect(|k| {
                    let pi = grids.simplex.node(k);
                    let slice = field.slice_x(n + 1, k);
                    let y = step.expected_value(&grids.space, x, &slice).unwrap() + dt * problem.source_value(t, x, pi);
                    y.max(problem.lower_value(t, x, pi, &mut scratch))
                        .min(problem.upper_value(t, x, pi, &mut scratch))
                });
                worst = worst.max((rebuilt - field.get(n, l, m)).abs());
            }
        }
    }
    worst
}

fn check_sandwich_and_convexity(problem: &ProblemSpec, field: &SolutionField) {
    let grids = field.grids();
    let mut scratch = [0.0; 2];
    let m_max = grids.simplex.resolution();
    for n in 0..=grids.time.steps() {
        let t = grids.time.node(n);
        for (l, x) in grids.space.nodes().enumerate() {
            let u = field.beliefs_at(n, l);
            for (m, p) in grids.simplex.nodes().enumerate() {
                assert!(u[m] >= problem.lower_value(t, x, p, &mut scratch) - 1e-12, "below f at {n},{l},{m}");
                assert!(u[m] <= problem.upper_value(t, x, p, &mut scratch) + 1e-12, "above h at {n},{l},{m}");
            }
            for m in 1..m_max {
                assert!(u[m - 1] - 2.0 * u[m] + u[m + 1] >= -1e-10, "not convex at {n},{l},{m}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn one_step_dynamic_programming(c in coeffs()) {
        let problem = random_problem(&c);
        let config = SolverConfig::for_problem(&problem, 2, 8, 5).unwrap();
        let field = solve(&problem, &config).unwrap();
        prop_assert!(dpp_defect(&problem, &config, &field) <= 1e-10);
    }

    #[test]
    fn raising_the_payoff_never_lowers_the_value(c in coeffs(), lift in 0.0f64..0.5) {
        let low = random_problem(&c);
        let mut high = random_problem(&c);
        let terminal = c.terminal;
        high.terminal = Box::new(move |x, out| {
            out[0] = terminal[0] * (x - 0.4).abs() + lift;
            out[1] = terminal[1] * (0.6 - x).max(0.0) + lift * x;
        });
        let config = SolverConfig::for_problem(&low, 4, 8, 5).unwrap();
        let a = solve(&low, &config).unwrap();
        let b = solve(&high, &config).unwrap();
        for (u, v) in a.values().iter().zip(b.values()) {
            prop_assert!(v >= &(u - 1e-12));
        }
    }
}

#[test]
fn israeli_put_sandwich_convexity_and_dpp() {
    let problem = preset_experiment3();
    for k in [4usize, 8, 16, 32] {
        let config = SolverConfig::for_problem(&problem, k, k, k).unwrap();
        let field = solve(&problem, &config).unwrap();
        check_sandwich_and_convexity(&problem, &field);
        assert!(dpp_defect(&problem, &config, &field) <= 1e-10);
    }
}

#[test]
fn israeli_put_lipschitz_in_belief() {
    let problem = preset_experiment3();
    for (n, l, m) in [(8, 8, 8), (16, 32, 8), (32, 16, 32), (64, 64, 16)] {
        let config = SolverConfig::for_problem(&problem, n, l, m).unwrap();
        let field = solve(&problem, &config).unwrap();
        let bound = lip_p_bound(&problem, &config.grids);
        let lip = regularity_constants(&field).lip_p;
        assert!(lip <= bound + 1e-8, "lip_p {lip} exceeds {bound} at {n},{l},{m}");
    }
}

#[test]
fn uniform_bounds() {
    let put = preset_experiment3();
    let config = SolverConfig::for_problem(&put, 32, 32, 8).unwrap();
    let (lo, hi) = solve(&put, &config).unwrap().min_max();
    let data = exp3_payoff(0.0) + EXP3_PENALTY[0];
    assert!(lo >= -data && hi <= data);

    let exp2 = preset_experiment2();
    let config = SolverConfig::for_problem(&exp2, 32, 32, 16).unwrap();
    let (lo, hi) = solve(&exp2, &config).unwrap().min_max();
    // zero payoff, |H| <= 1 over a unit horizon
    assert!(lo >= -1.0 && hi <= 1.0);
}

#[test]
fn degenerate_diffusion_keeps_walk_inside() {
    for problem in [preset_experiment1(), preset_experiment2()] {
        let config = SolverConfig::for_problem(&problem, 64, 64, if problem.scenarios > 1 { 8 } else { 1 }).unwrap();
        let mut sweep = SlSweep::new(&problem, &config).unwrap();
        while sweep.advance().unwrap() {}
        assert_eq!(sweep.clamped_queries(), 0, "{}", problem.name);
    }
}

#[test]
fn interpolant_oracle_is_semi_lagrangian() {
    for (problem, m) in [(preset_experiment1(), 1), (preset_experiment2(), 8), (preset_experiment3(), 8)] {
        let config = SolverConfig::for_problem(&problem, 16, 16, m).unwrap();
        let sl = solve(&problem, &config).unwrap();
        let oracle = InterpolantOracle { grid: config.grids.space };
        let nn = solve_with(&problem, &config, &oracle, true).unwrap();
        for (a, b) in sl.values().iter().zip(nn.field.values()) {
            assert!((a - b).abs() <= 1e-12, "{}", problem.name);
        }
    }
}
