//! CSV, JSON and gnuplot outputs. Every file is written to a temporary
//! sibling first and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use dynkin_core::analysis::{ActiveSetMask, ConvergenceReport, NodeState};
use dynkin_core::mesh::{GridSet, SolutionField};
use dynkin_core::neuralnet::TrainReport;
use dynkin_core::solver_nn::ResidualTrace;

use crate::error::{CliError, CliResult};

/// Writes `contents` to `path` atomically.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(contents).and_then(|_| f.sync_all()))
        .and_then(|_| fs::rename(&tmp, path));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

/// 17 significant digits, enough to round-trip any `f64`.
fn num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn belief_header(scenarios: usize) -> String {
    if scenarios <= 2 {
        "p".to_string()
    } else {
        (1..=scenarios).map(|i| format!("p{i}")).collect::<Vec<_>>().join(",")
    }
}

/// `t,x,p,u`, one row per node in `(n, ℓ, m)` order. `p` is the weight of
/// the first scenario; with three or more scenarios every coordinate gets
/// a column `p1..pI`.
pub fn solution_csv(field: &SolutionField) -> String {
    let grids = field.grids();
    let scenarios = grids.simplex.scenarios();
    let mut out = format!("t,x,{},u\n", belief_header(scenarios));
    for n in 0..=grids.time.steps() {
        let t = grids.time.node(n);
        for (l, x) in grids.space.nodes().enumerate() {
            for (m, p) in grids.simplex.nodes().enumerate() {
                num(&mut out, t);
                out.push(',');
                num(&mut out, x);
                let coords = if scenarios <= 2 { &p[..1] } else { p };
                for c in coords {
                    out.push(',');
                    num(&mut out, *c);
                }
                out.push(',');
                num(&mut out, field.get(n, l, m));
                out.push('\n');
            }
        }
    }
    out
}

/// Reads a solution CSV back onto `grids`, checking every coordinate.
pub fn read_solution_csv(text: &str, grids: &GridSet) -> CliResult<SolutionField> {
    let bad = |msg: String| CliError::config(format!("solution csv: {msg}"));
    let scenarios = grids.simplex.scenarios();
    let mut lines = text.lines();
    let header = format!("t,x,{},u", belief_header(scenarios));
    if lines.next() != Some(header.as_str()) {
        return Err(bad(format!("expected header `{header}`")));
    }
    let width = if scenarios <= 2 { 4 } else { 3 + scenarios };
    let mut values = Vec::with_capacity((grids.time.steps() + 1) * grids.level_len());
    for n in 0..=grids.time.steps() {
        for x in grids.space.nodes() {
            for p in grids.simplex.nodes() {
                let line = lines.next().ok_or_else(|| bad("too few rows".into()))?;
                let cols: Vec<f64> = line
                    .split(',')
                    .map(|c| c.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad(format!("unparsable row `{line}`")))?;
                if cols.len() != width {
                    return Err(bad(format!("row `{line}` has {} columns", cols.len())));
                }
                let coords = if scenarios <= 2 { &p[..1] } else { p };
                let expected = [grids.time.node(n), x].into_iter().chain(coords.iter().copied());
                if cols.iter().zip(expected).any(|(a, b)| a.to_bits() != b.to_bits()) {
                    return Err(bad(format!("row `{line}` does not match the grid")));
                }
                values.push(cols[width - 1]);
            }
        }
    }
    if lines.any(|l| !l.is_empty()) {
        return Err(bad("too many rows".into()));
    }
    SolutionField::new(grids.clone(), values, None).map_err(CliError::Solver)
}

/// `n,eps`.
pub fn residual_csv(trace: &ResidualTrace) -> String {
    let mut out = String::from("n,eps\n");
    for (n, e) in trace.eps.iter().enumerate() {
        let _ = write!(out, "{n},");
        num(&mut out, *e);
        out.push('\n');
    }
    out
}

/// `n,m,iters,mse,max_residual`, one row per fit; `n` is the level built
/// from the fit (the data is level `n + 1`).
pub fn train_csv(reports: &[TrainReport], width: usize) -> String {
    let mut out = String::from("n,m,iters,mse,max_residual\n");
    for (k, r) in reports.iter().enumerate() {
        let _ = write!(out, "{},{},{},", k / width, k % width, r.iterations);
        num(&mut out, r.mse);
        out.push(',');
        num(&mut out, r.max_residual);
        out.push('\n');
    }
    out
}

/// Column order of the published tables: step, MAX error and rate, RMS
/// error and rate. The first row has empty rate cells.
pub fn table_csv(report: &ConvergenceReport) -> String {
    let mut out = String::from("delta,max_error,max_rate,rms_error,rms_rate\n");
    let rate = |out: &mut String, r: Option<f64>| {
        if let Some(r) = r {
            num(out, r);
        }
    };
    for row in &report.rows {
        num(&mut out, row.delta);
        out.push(',');
        num(&mut out, row.max);
        out.push(',');
        rate(&mut out, row.max_rate);
        out.push(',');
        num(&mut out, row.rms);
        out.push(',');
        rate(&mut out, row.rms_rate);
        out.push('\n');
    }
    out
}

pub fn state_name(s: NodeState) -> &'static str {
    match s {
        NodeState::Lower => "lower",
        NodeState::Upper => "upper",
        NodeState::Waiting => "waiting",
    }
}

/// `t,x,state` with state in `lower`, `upper`, `waiting`.
pub fn mask_csv(mask: &ActiveSetMask, grids: &GridSet) -> String {
    let mut out = String::from("t,x,state\n");
    for n in 0..=grids.time.steps() {
        let t = grids.time.node(n);
        for (l, x) in grids.space.nodes().enumerate() {
            num(&mut out, t);
            out.push(',');
            num(&mut out, x);
            out.push(',');
            out.push_str(state_name(mask.state(n, l)));
            out.push('\n');
        }
    }
    out
}

pub fn json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("json values serialize");
    bytes.push(b'\n');
    bytes
}

/// Surface `u(t, x)` on the rows whose first belief column equals `p`.
pub fn solution_plot(csv: &str, title: &str, p: f64, u_column: usize) -> String {
    format!(
        "# gnuplot -p <this script>, from the directory holding {csv}\n\
         set datafile separator ','\n\
         set key off\n\
         set title '{title}'\n\
         set xlabel 'x'\n\
         set ylabel 't'\n\
         set zlabel 'u'\n\
         splot '{csv}' every ::1 using 2:1:(abs($3 - {p:e}) < 1e-12 ? ${u_column} : 1/0) with points pt 7 ps 0.3\n"
    )
}

pub fn table_plot(csv: &str, title: &str) -> String {
    format!(
        "# gnuplot -p <this script>, from the directory holding {csv}\n\
         set datafile separator ','\n\
         set logscale xy\n\
         set format xy '%.0e'\n\
         set title '{title}'\n\
         set xlabel 'step'\n\
         set ylabel 'error'\n\
         set key left top\n\
         plot '{csv}' every ::1 using 1:2 with linespoints title 'MAX', \\\n     \
         '' every ::1 using 1:4 with linespoints title 'RMS'\n"
    )
}

pub fn mask_plot(csv: &str, title: &str) -> String {
    format!(
        "# gnuplot -p <this script>, from the directory holding {csv}\n\
         set datafile separator ','\n\
         set title '{title}'\n\
         set xlabel 'x'\n\
         set ylabel 't'\n\
         set key outside\n\
         plot '{csv}' every ::1 using 2:(strcol(3) eq 'lower' ? $1 : 1/0) with points pt 5 lc rgb 'red' title 'lower active', \\\n     \
         '' every ::1 using 2:(strcol(3) eq 'upper' ? $1 : 1/0) with points pt 5 lc rgb 'green' title 'upper active', \\\n     \
         '' every ::1 using 2:(strcol(3) eq 'waiting' ? $1 : 1/0) with points pt 5 lc rgb 'gray' title 'waiting'\n"
    )
}

/// `dir/stem.ext`.
pub fn path(dir: &Path, stem: &str, ext: &str) -> PathBuf {
    dir.join(format!("{stem}.{ext}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dynkin_core::analysis::convergence_table;
    use dynkin_core::mesh::GridSet;
    use dynkin_core::problem::{preset_experiment1, preset_experiment3};

    #[test]
    fn solution_round_trips_bit_for_bit() {
        let grids = GridSet::for_problem(&preset_experiment3(), 3, 4, 5).unwrap();
        let field = SolutionField::from_fn(grids.clone(), |t, x, p| (t * 1.1 + x).sin() / 3.0 + p[0] * 1e-17);
        let text = solution_csv(&field);
        assert!(text.starts_with("t,x,p,u\n0.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0,"));
        let back = read_solution_csv(&text, &grids).unwrap();
        assert_eq!(back.values(), field.values());
        let other = GridSet::for_problem(&preset_experiment3(), 3, 4, 4).unwrap();
        assert!(read_solution_csv(&text, &other).is_err());
    }

    #[test]
    fn single_scenario_has_a_unit_belief_column() {
        let grids = GridSet::for_problem(&preset_experiment1(), 1, 1, 1).unwrap();
        let field = SolutionField::from_fn(grids, |_, _, _| 0.5);
        let text = solution_csv(&field);
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1).unwrap().ends_with(",1.0000000000000000e0,5.0000000000000000e-1"));
    }

    #[test]
    fn table_leaves_first_rates_empty() {
        let report = convergence_table(&[(0.5, 4.0, 2.0), (0.25, 2.0, 1.0)]).unwrap();
        let text = table_csv(&report);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "delta,max_error,max_rate,rms_error,rms_rate");
        assert_eq!(lines[1], "5.0000000000000000e-1,4.0000000000000000e0,,2.0000000000000000e0,");
        assert!(lines[2].contains(",1.0000000000000000e0,"));
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("nested").join("a.csv");
        write_atomic(&target, b"first").unwrap();
        write_atomic(&target, b"second").unwrap();
        assert_eq!(fs::read(&target).unwrap(), b"second");
        let leftovers = fs::read_dir(target.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
