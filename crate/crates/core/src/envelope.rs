//! Discrete lower convex envelope on the belief grid.
//!
//! For nodal data `v_1..v_M` on the simplex nodes `p_1..p_M`,
//!
//! ```text
//! vex[v](p) = min { Σ λ_j v_j : λ >= 0, Σ λ_j = 1, Σ λ_j p_j = p }.
//! ```
//!
//! The minimizing `λ` has at most `I` non-zero entries; those nodes and
//! weights are the *support* of `p` and describe the data-dependent
//! simplicial partition on which the piecewise-linear interpolant of the
//! envelope values equals the envelope. For two scenarios the envelope is the
//! lower hull of the points `(p_m, v_m)` (monotone chain, O(M)); for more
//! scenarios each node solves the linear program.
//!
//! Supports also define the one-step a posteriori martingale: from `p`, the
//! belief jumps to `π_ℓ` with probability `λ_ℓ`.

use alloc::vec;
use alloc::vec::Vec;

use crate::lp;
use crate::mesh::{check_belief, SimplexGrid};
use crate::{Error, Result};

/// Feasibility tolerance of the per-node linear programs.
pub const LP_TOLERANCE: f64 = 1e-10;
/// Relative tolerance below which a hull point counts as collinear.
pub const COLLINEAR_TOLERANCE: f64 = 1e-12;

/// Barycentric support `{(node, λ)}` of a belief.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportWeights {
    entries: Vec<(usize, f64)>,
}

impl SupportWeights {
    pub fn new(entries: Vec<(usize, f64)>) -> Self {
        Self { entries }
    }

    pub fn point(m: usize) -> Self {
        Self { entries: vec![(m, 1.0)] }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// `Σ λ_i p(π_i)`, which reproduces the queried belief.
    pub fn barycenter(&self, grid: &SimplexGrid) -> Vec<f64> {
        let mut out = vec![0.0; grid.scenarios()];
        for &(m, w) in &self.entries {
            for (o, c) in out.iter_mut().zip(grid.node(m)) {
                *o += w * c;
            }
        }
        out
    }
}

/// Piecewise-linear interpolant `Σ values[π_i] λ_i`.
pub fn interp_p(values: &[f64], support: &SupportWeights) -> f64 {
    support.entries.iter().map(|&(m, w)| values[m] * w).sum()
}

/// Envelope values and, for every node, the support realizing them.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeResult {
    values: Vec<f64>,
    offsets: Vec<u32>,
    entries: Vec<(usize, f64)>,
}

impl EnvelopeResult {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn support(&self, m: usize) -> &[(usize, f64)] {
        &self.entries[self.offsets[m] as usize..self.offsets[m + 1] as usize]
    }

    pub fn support_weights(&self, m: usize) -> SupportWeights {
        SupportWeights::new(self.support(m).to_vec())
    }

    /// Whether the envelope touches the data at node `m` (self-support).
    pub fn touches(&self, m: usize) -> bool {
        let s = self.support(m);
        s.len() == 1 && s[0].0 == m
    }

    fn builder(len: usize) -> Self {
        let mut offsets = Vec::with_capacity(len + 1);
        offsets.push(0);
        Self { values: Vec::with_capacity(len), offsets, entries: Vec::with_capacity(2 * len) }
    }

    fn push(&mut self, value: f64, support: impl IntoIterator<Item = (usize, f64)>) {
        self.values.push(value);
        self.entries.extend(support);
        self.offsets.push(self.entries.len() as u32);
    }
}

fn check_values(grid: &SimplexGrid, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), found: values.len() });
    }
    if grid.len() < grid.scenarios() {
        return Err(Error::TooFewNodes { nodes: grid.len(), scenarios: grid.scenarios() });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("envelope input"));
    }
    Ok(())
}

/// Discrete lower convex envelope with per-node supports.
pub fn lower_convex_envelope(grid: &SimplexGrid, values: &[f64]) -> Result<EnvelopeResult> {
    check_values(grid, values)?;
    match grid.scenarios() {
        1 => {
            let mut out = EnvelopeResult::builder(1);
            out.push(values[0], [(0, 1.0)]);
            Ok(out)
        }
        2 => Ok(hull_envelope(values, &mut Vec::new())),
        _ => lower_convex_envelope_lp(grid, values),
    }
}

/// Replaces `values` by their envelope without recording supports.
pub fn convexify_in_place(grid: &SimplexGrid, values: &mut [f64], hull: &mut Vec<usize>) -> Result<()> {
    check_values(grid, values)?;
    match grid.scenarios() {
        1 => Ok(()),
        2 => {
            lower_hull(values, hull);
            fill_from_hull(values, hull);
            Ok(())
        }
        _ => {
            let env = lower_convex_envelope_lp(grid, values)?;
            values.copy_from_slice(env.values());
            Ok(())
        }
    }
}

fn scale_of(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Lower hull vertices of `(m, values[m])`, collinear points removed.
fn lower_hull(values: &[f64], hull: &mut Vec<usize>) {
    let tol = COLLINEAR_TOLERANCE * scale_of(values);
    hull.clear();
    for (b, &vb) in values.iter().enumerate() {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let (vo, va) = (values[o], values[a]);
            let cross = (a - o) as f64 * (vb - vo) - (va - vo) * (b - o) as f64;
            if cross <= tol * (b - o) as f64 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(b);
    }
}

fn fill_from_hull(values: &mut [f64], hull: &[usize]) {
    for seg in hull.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let (va, vb) = (values[a], values[b]);
        let span = (b - a) as f64;
        for m in a + 1..b {
            let w = (m - a) as f64 / span;
            let chord = va + w * (vb - va);
            values[m] = values[m].min(chord);
        }
    }
}

fn hull_envelope(values: &[f64], hull: &mut Vec<usize>) -> EnvelopeResult {
    lower_hull(values, hull);
    let mut env = values.to_vec();
    fill_from_hull(&mut env, hull);
    let tol = COLLINEAR_TOLERANCE * scale_of(values);
    // touching nodes are the vertices of the convexity-preserving partition
    let touching: Vec<bool> = values.iter().zip(&env).map(|(v, e)| v - e <= tol).collect();
    let mut out = EnvelopeResult::builder(values.len());
    let mut left = 0;
    let mut right_of = vec![0usize; values.len()];
    let mut next = values.len() - 1;
    for m in (0..values.len()).rev() {
        if touching[m] {
            next = m;
        }
        right_of[m] = next;
    }
    for m in 0..values.len() {
        if touching[m] {
            left = m;
            out.push(env[m], [(m, 1.0)]);
        } else {
            let right = right_of[m];
            let w = (m - left) as f64 / (right - left) as f64;
            out.push(env[m], [(left, 1.0 - w), (right, w)]);
        }
    }
    out
}

/// Envelope of `values` at an arbitrary belief `p` via the linear program.
pub fn envelope_at_lp(grid: &SimplexGrid, values: &[f64], p: &[f64]) -> Result<(f64, SupportWeights)> {
    check_belief(p, grid.scenarios())?;
    let i = grid.scenarios();
    let m = grid.len();
    // rows: first I-1 coordinates, then the weight sum
    let mut a = vec![0.0; i * m];
    for (j, node) in grid.nodes().enumerate() {
        for r in 0..i - 1 {
            a[r * m + j] = node[r];
        }
        a[(i - 1) * m + j] = 1.0;
    }
    let mut b: Vec<f64> = p[..i - 1].to_vec();
    b.push(1.0);
    let sol = lp::minimize(values, &a, &b, LP_TOLERANCE)?;
    let entries: Vec<(usize, f64)> = sol
        .basis
        .iter()
        .map(|&j| (j, sol.x[j]))
        .filter(|&(_, w)| w > LP_TOLERANCE)
        .collect();
    let total: f64 = entries.iter().map(|e| e.1).sum();
    let entries = entries.into_iter().map(|(j, w)| (j, w / total)).collect();
    Ok((sol.objective, SupportWeights::new(entries)))
}

/// Envelope by solving the linear program at every node (any `I`).
pub fn lower_convex_envelope_lp(grid: &SimplexGrid, values: &[f64]) -> Result<EnvelopeResult> {
    check_values(grid, values)?;
    let mut out = EnvelopeResult::builder(values.len());
    for (m, p) in grid.nodes().enumerate() {
        let (value, support) = envelope_at_lp(grid, values, p)?;
        if values[m] <= value + LP_TOLERANCE {
            // the node itself is an optimal support
            out.push(values[m].min(value.max(values[m] - LP_TOLERANCE)), [(m, 1.0)]);
        } else {
            out.push(value.min(values[m]), support.entries);
        }
    }
    Ok(out)
}

/// Support of an arbitrary belief in the partition encoded by `envelope`.
///
/// Grid nodes return their stored support, which is the node itself
/// wherever the envelope touches the data.
pub fn support_at(envelope: &EnvelopeResult, grid: &SimplexGrid, p: &[f64]) -> Result<SupportWeights> {
    check_belief(p, grid.scenarios())?;
    if let Some(m) = grid.find(p) {
        return Ok(envelope.support_weights(m));
    }
    match grid.scenarios() {
        1 => Ok(SupportWeights::point(0)),
        2 => {
            let s = p[0].clamp(0.0, 1.0) * grid.resolution() as f64;
            let m = (libm::floor(s) as usize).min(grid.resolution() - 1);
            let left = if envelope.touches(m) { m } else { envelope.support(m)[0].0 };
            let right = if envelope.touches(m + 1) {
                m + 1
            } else {
                envelope.support(m + 1).last().expect("non-empty support").0
            };
            let w = (s - left as f64) / (right - left) as f64;
            Ok(SupportWeights::new(vec![(left, 1.0 - w), (right, w)]))
        }
        _ => Ok(envelope_at_lp(grid, envelope.values(), p)?.1),
    }
}

/// Law of the next belief given the current node and a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackDistribution {
    outcomes: Vec<(usize, f64)>,
}

impl FeedbackDistribution {
    pub fn outcomes(&self) -> &[(usize, f64)] {
        &self.outcomes
    }

    pub fn total(&self) -> f64 {
        self.outcomes.iter().map(|o| o.1).sum()
    }

    /// `E[p']` over the outcomes.
    pub fn mean(&self, grid: &SimplexGrid) -> Vec<f64> {
        SupportWeights::new(self.outcomes.clone()).barycenter(grid)
    }

    pub fn probability_of(&self, m: usize) -> f64 {
        self.outcomes.iter().filter(|o| o.0 == m).map(|o| o.1).sum()
    }

    /// Expectation of `f(p')`.
    pub fn expect(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        self.outcomes.iter().map(|&(m, w)| w * f(m)).sum()
    }
}

/// One-step feedback for scenario `i` at node `m`: jump to `π_ℓ` with
/// probability `(π_ℓ)_i λ_ℓ / p_i`, or stay at `p` when `p_i = 0`.
pub fn feedback_distribution(
    envelope: &EnvelopeResult,
    grid: &SimplexGrid,
    m: usize,
    scenario: usize,
) -> Result<FeedbackDistribution> {
    if scenario >= grid.scenarios() {
        return Err(Error::ScenarioIndex { index: scenario, count: grid.scenarios() });
    }
    let p = grid.node(m);
    if p[scenario] == 0.0 {
        return Ok(FeedbackDistribution { outcomes: vec![(m, 1.0)] });
    }
    let outcomes = envelope
        .support(m)
        .iter()
        .map(|&(pi, lambda)| (pi, grid.node(pi)[scenario] * lambda / p[scenario]))
        .collect();
    Ok(FeedbackDistribution { outcomes })
}

/// Mixture `Σ_i p_i · feedback_distribution(p, i)`: the a posteriori
/// martingale step from node `m`.
pub fn feedback_marginal(envelope: &EnvelopeResult, grid: &SimplexGrid, m: usize) -> FeedbackDistribution {
    let p = grid.node(m);
    let mut outcomes: Vec<(usize, f64)> = Vec::new();
    for (i, &pi) in p.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        let d = feedback_distribution(envelope, grid, m, i).expect("scenario in range");
        for (node, w) in d.outcomes {
            match outcomes.iter_mut().find(|o| o.0 == node) {
                Some(o) => o.1 += pi * w,
                None => outcomes.push((node, pi * w)),
            }
        }
    }
    FeedbackDistribution { outcomes }
}
