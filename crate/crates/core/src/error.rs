use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

use crate::neuralnet::FeedforwardNet;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone)]
pub enum Error {
    /// A value that must be finite was NaN or infinite.
    NonFinite(&'static str),
    /// A time query outside `[0, T]`.
    TimeOutOfRange { t: f64, horizon: f64 },
    /// A belief that is not a probability vector of the right length.
    OutsideSimplex,
    /// Grid parameters that cannot describe a mesh.
    InvalidGrid(String),
    /// The envelope needs at least `I` belief nodes.
    TooFewNodes { nodes: usize, scenarios: usize },
    DimensionMismatch { expected: usize, found: usize },
    /// GroupSort group size does not divide the layer width.
    GroupSize { len: usize, group: usize },
    ScenarioIndex { index: usize, count: usize },
    /// A non-finite value appeared at node `(n, l, m)` during a backward sweep.
    SolverNan { n: usize, l: usize, m: usize },
    /// Network training failed while fitting level `n`, belief node `m`.
    Training { n: usize, m: usize, source: Box<Error> },
    /// The loss became non-finite; carries the last finite iterate.
    Diverged { iterations: usize, last_finite: Box<FeedforwardNet> },
    /// The linear program has no feasible point.
    Infeasible,
    /// Refinement parameters do not halve down the list.
    NotHalving { row: usize },
    InvalidConfig(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite(what) => write!(f, "non-finite {what}"),
            Error::TimeOutOfRange { t, horizon } => {
                write!(f, "time {t} outside [0, {horizon}]")
            }
            Error::OutsideSimplex => f.write_str("belief is not a point of the probability simplex"),
            Error::InvalidGrid(msg) => write!(f, "invalid grid: {msg}"),
            Error::TooFewNodes { nodes, scenarios } => {
                write!(f, "{nodes} belief nodes cannot span a simplex over {scenarios} scenarios")
            }
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::GroupSize { len, group } => {
                write!(f, "group size {group} does not divide length {len}")
            }
            Error::ScenarioIndex { index, count } => {
                write!(f, "scenario index {index} out of range for {count} scenarios")
            }
            Error::SolverNan { n, l, m } => {
                write!(f, "non-finite value at time level {n}, space node {l}, belief node {m}")
            }
            Error::Training { n, m, source } => {
                write!(f, "training failed at time level {n}, belief node {m}: {source}")
            }
            Error::Diverged { iterations, .. } => {
                write!(f, "optimizer diverged after {iterations} iterations")
            }
            Error::Infeasible => f.write_str("linear program is infeasible"),
            Error::NotHalving { row } => write!(f, "step sizes do not halve at row {row}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
