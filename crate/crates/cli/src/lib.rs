//! Command-line driver for `dynkin-core`.
//!
//! ```text
//! solver run      --preset exp3 --scheme nn --optimizer br --n 32 --l 32 --m 32
//! solver table    exp1 sl t
//! solver boundary --preset exp3 --p 0 --tol 2e-5
//! ```
//!
//! Every flag has a `key = value` twin for `--config FILE`; flags win over
//! the file. Exit codes: 0 success, 1 solver or IO failure, 2 bad
//! configuration.

pub mod commands;
pub mod config;
pub mod custom;
pub mod error;
pub mod output;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use config::{parse_pairs, RunConfig};
use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "solver", version, about = "Convexity-constrained double-obstacle solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one problem and write the solution grid.
    Run(Flags),
    /// Refinement study along one axis.
    Table {
        /// Preset name, same as --preset.
        #[arg(id = "preset_arg", value_name = "PRESET")]
        preset: Option<String>,
        /// sl or nn, same as --scheme.
        #[arg(id = "scheme_arg", value_name = "SCHEME")]
        scheme: Option<String>,
        /// t, x or p, same as --axis.
        #[arg(id = "axis_arg", value_name = "AXIS")]
        axis: Option<String>,
        #[command(flatten)]
        flags: Flags,
    },
    /// Lower/upper/waiting regions at one belief.
    Boundary(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// `key = value` file; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// exp1, exp2, exp3 or custom.
    #[arg(long)]
    preset: Option<String>,
    /// sl (semi-Lagrangian) or nn (network regression).
    #[arg(long)]
    scheme: Option<String>,
    /// Time steps.
    #[arg(long)]
    n: Option<String>,
    /// Space cells.
    #[arg(long)]
    l: Option<String>,
    /// Belief resolution.
    #[arg(long)]
    m: Option<String>,
    /// lm, lbfgs or br.
    #[arg(long)]
    optimizer: Option<String>,
    /// Hidden units.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Training iterations per fit.
    #[arg(long)]
    iters: Option<String>,
    /// true or false.
    #[arg(long)]
    warm_start: Option<String>,
    /// true or false; false skips the envelope step.
    #[arg(long)]
    convexify: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Active-set tolerance.
    #[arg(long)]
    tol: Option<String>,
    /// Weight of the first scenario for boundary.
    #[arg(long)]
    p: Option<String>,
    /// t, x or p.
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated grid sizes of the refined parameter.
    #[arg(long)]
    rows: Option<String>,
    /// Size of the other parameters, or `tied`.
    #[arg(long)]
    pin: Option<String>,
    /// `exact` or the size of a semi-Lagrangian reference grid.
    #[arg(long)]
    reference: Option<String>,
    /// Any config key, e.g. `--set terminal.2="x + 1"`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Flags {
    fn pairs(&self) -> CliResult<BTreeMap<String, String>> {
        let mut pairs = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
                parse_pairs(&text)?
            }
            None => BTreeMap::new(),
        };
        for entry in &self.set {
            let (k, v) = entry
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("--set {entry}: expected KEY=VALUE")))?;
            pairs.insert(k.trim().to_string(), v.trim().to_string());
        }
        let named = [
            ("preset", &self.preset),
            ("scheme", &self.scheme),
            ("n", &self.n),
            ("l", &self.l),
            ("m", &self.m),
            ("optimizer", &self.optimizer),
            ("hidden", &self.hidden),
            ("seed", &self.seed),
            ("iters", &self.iters),
            ("warm_start", &self.warm_start),
            ("convexify", &self.convexify),
            ("out", &self.out),
            ("tol", &self.tol),
            ("p", &self.p),
            ("axis", &self.axis),
            ("rows", &self.rows),
            ("pin", &self.pin),
            ("reference", &self.reference),
        ];
        for (key, value) in named {
            if let Some(v) = value {
                pairs.insert(key.to_string(), v.clone());
            }
        }
        Ok(pairs)
    }
}

fn config_for(flags: &Flags, positional: &[(&str, &Option<String>)]) -> CliResult<RunConfig> {
    let mut pairs = flags.pairs()?;
    for (key, value) in positional {
        if let Some(v) = value {
            pairs.insert(key.to_string(), v.clone());
        }
    }
    RunConfig::from_pairs(&pairs)
}

fn report_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn execute(command: Command) -> CliResult<()> {
    let start = Instant::now();
    match command {
        Command::Run(flags) => {
            let cfg = config_for(&flags, &[])?;
            let out = commands::cmd_run(&cfg)?;
            report_files(&out.files);
            let (lo, hi) = out.computed.field.min_max();
            println!("u in [{lo:.6e}, {hi:.6e}]");
            if let Some((max, rms)) = out.computed.errors {
                println!("error vs exact: MAX {max:.6e}, RMS {rms:.6e}");
            }
            if let Some(b) = out.computed.bound {
                println!(
                    "gap to sl {:.6e} <= {:.6e} ({})",
                    b.gap,
                    b.rhs(),
                    if b.holds() { "holds" } else { "violated" }
                );
            }
        }
        Command::Table { preset, scheme, axis, flags } => {
            let cfg = config_for(&flags, &[("preset", &preset), ("scheme", &scheme), ("axis", &axis)])?;
            let out = commands::cmd_table(&cfg)?;
            report_files(&out.files);
            print!("{}", output::table_csv(&out.report));
        }
        Command::Boundary(flags) => {
            let cfg = config_for(&flags, &[])?;
            let out = commands::cmd_boundary(&cfg)?;
            report_files(&out.files);
            println!(
                "node {}: {} lower-active, {} upper-active nodes",
                out.node,
                out.mask.lower_count(),
                out.mask.upper_count()
            );
        }
    }
    eprintln!("wall time {:.3} s", start.elapsed().as_secs_f64());
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
