//! Uniform grids in `t`, `x` and `p`, piecewise-linear interpolation and the
//! dense solution field.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::envelope::{interp_p, support_at, EnvelopeResult, SupportWeights};
use crate::problem::ProblemSpec;
use crate::{Error, Result};

/// Equidistant partition `t_n = n T / N` of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidGrid(format!("time steps must be positive, got {steps}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { horizon, steps })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_n`; the last node is exactly `T`.
    pub fn node(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            self.horizon * n as f64 / self.steps as f64
        }
    }
}

/// Uniform partition of `[x_lo, x_hi]` into `L` cells (`L + 1` nodes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    lo: f64,
    hi: f64,
    cells: usize,
}

impl SpaceGrid {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::InvalidGrid(format!("space cells must be positive, got {cells}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidGrid(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi, cells })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn len(&self) -> usize {
        self.cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    pub fn node(&self, l: usize) -> f64 {
        if l == self.cells {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * l as f64 / self.cells as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.cells).map(move |l| self.node(l))
    }

    /// Left node index and weight of the right node for `clamp(x)`.
    ///
    /// Queries outside the interval are clamped to the nearest endpoint.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = (x - self.lo) / (self.hi - self.lo) * self.cells as f64;
        if !(s > 0.0) {
            return (0, 0.0);
        }
        if s >= self.cells as f64 {
            return (self.cells - 1, 1.0);
        }
        let l = (s as usize).min(self.cells - 1);
        (l, s - l as f64)
    }

    /// Whether `x` lies outside the interval (and would be clamped).
    pub fn clamps(&self, x: f64) -> bool {
        x < self.lo || x > self.hi
    }
}

/// Piecewise-linear interpolant of `slice` on `grid`, with constant
/// extrapolation outside the interval.
pub fn interp_x(grid: &SpaceGrid, slice: &[f64], x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("interpolation abscissa"));
    }
    if slice.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), found: slice.len() });
    }
    let (l, w) = grid.locate(x);
    Ok(lerp(slice[l], slice[l + 1], w))
}

#[inline]
pub(crate) fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + w * (b - a)
}

/// Lattice `{k / M : k ∈ N^I, Σk = M}` on the probability simplex.
///
/// Nodes are ordered lexicographically in `k`, so for two scenarios node
/// `m` is the belief `(m/M, 1 - m/M)`. The standard simplicial partition is
/// the Freudenthal triangulation in cumulative coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexGrid {
    scenarios: usize,
    resolution: usize,
    coords: Vec<f64>,
    lattice: Vec<u32>,
    index: BTreeMap<Vec<u32>, usize>,
}

impl SimplexGrid {
    /// One scenario: a single belief node `(1)`.
    pub fn trivial() -> Self {
        Self::new(1, 1).expect("valid")
    }

    pub fn new(scenarios: usize, resolution: usize) -> Result<Self> {
        if scenarios == 0 {
            return Err(Error::InvalidGrid("need at least one scenario".into()));
        }
        let resolution = if scenarios == 1 { 1 } else { resolution };
        if resolution == 0 {
            return Err(Error::InvalidGrid("belief resolution must be positive".into()));
        }
        let mut lattice = Vec::new();
        let mut k = vec![0u32; scenarios];
        compositions(resolution as u32, 0, &mut k, &mut lattice);
        let count = lattice.len() / scenarios;
        let mut coords = Vec::with_capacity(lattice.len());
        let mut index = BTreeMap::new();
        for j in 0..count {
            let row = &lattice[j * scenarios..(j + 1) * scenarios];
            coords.extend(row.iter().map(|&k| k as f64 / resolution as f64));
            if scenarios > 2 {
                index.insert(row.to_vec(), j);
            }
        }
        Ok(Self { scenarios, resolution, coords, lattice, index })
    }

    pub fn scenarios(&self) -> usize {
        self.scenarios
    }

    /// `M`, the number of subdivisions of each edge.
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn dp(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.scenarios
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn node(&self, m: usize) -> &[f64] {
        &self.coords[m * self.scenarios..(m + 1) * self.scenarios]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> + Clone {
        self.coords.chunks_exact(self.scenarios)
    }

    fn lattice_node(&self, m: usize) -> &[u32] {
        &self.lattice[m * self.scenarios..(m + 1) * self.scenarios]
    }

    fn index_of(&self, k: &[u32]) -> usize {
        match self.scenarios {
            1 => 0,
            2 => k[0] as usize,
            _ => self.index[k],
        }
    }

    /// Index of the node that equals `p` up to `1e-12`, if any.
    pub fn find(&self, p: &[f64]) -> Option<usize> {
        if p.len() != self.scenarios {
            return None;
        }
        let k: Vec<u32> = p
            .iter()
            .map(|&c| libm::round(c * self.resolution as f64).max(0.0) as u32)
            .collect();
        if k.iter().sum::<u32>() as usize != self.resolution {
            return None;
        }
        let m = self.index_of(&k);
        let hit = self.node(m).iter().zip(p).all(|(a, b)| (a - b).abs() <= 1e-12);
        hit.then_some(m)
    }

    /// Two-scenario belief `(p, 1 - p)`.
    pub fn belief2(p: f64) -> [f64; 2] {
        [p, 1.0 - p]
    }

    /// Vertices and barycentric weights of the cell of the standard
    /// partition that contains `p`.
    pub fn locate(&self, p: &[f64]) -> Result<SupportWeights> {
        check_belief(p, self.scenarios)?;
        let i = self.scenarios;
        if i == 1 {
            return Ok(SupportWeights::point(0));
        }
        let res = self.resolution as f64;
        // cumulative coordinates y_j = M (p_1 + ... + p_j), j < I
        let mut y = Vec::with_capacity(i - 1);
        let mut acc = 0.0;
        for &c in &p[..i - 1] {
            acc += c;
            y.push((acc * res).clamp(0.0, res));
        }
        for j in 1..y.len() {
            if y[j] < y[j - 1] {
                y[j] = y[j - 1];
            }
        }
        let mut base: Vec<u32> = y
            .iter()
            .map(|&v| (libm::floor(v) as u32).min(self.resolution as u32 - 1))
            .collect();
        for j in 1..base.len() {
            // keep the base vertex inside the monotone region
            if base[j] < base[j - 1] {
                base[j] = base[j - 1];
            }
        }
        let frac: Vec<f64> = y.iter().zip(&base).map(|(v, b)| v - *b as f64).collect();
        let mut order: Vec<usize> = (0..frac.len()).collect();
        order.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(b.cmp(&a)));

        let mut entries = Vec::with_capacity(i);
        let mut cum = base.clone();
        let mut prev = 1.0;
        for (step, &j) in order.iter().enumerate() {
            let w = prev - frac[j];
            if w > 0.0 {
                entries.push((self.cumulative_to_index(&cum), w));
            }
            prev = frac[j];
            cum[j] += 1;
            if step + 1 == order.len() && prev > 0.0 {
                entries.push((self.cumulative_to_index(&cum), prev));
            }
        }
        if entries.is_empty() {
            entries.push((self.cumulative_to_index(&cum), 1.0));
        }
        Ok(SupportWeights::new(entries))
    }

    fn cumulative_to_index(&self, cum: &[u32]) -> usize {
        let mut k = Vec::with_capacity(self.scenarios);
        let mut prev = 0;
        for &c in cum {
            k.push(c - prev);
            prev = c;
        }
        k.push(self.resolution as u32 - prev);
        self.index_of(&k)
    }

    /// Indices of the lattice points one edge step away from node `m`.
    pub fn neighbours(&self, m: usize) -> Vec<usize> {
        let k = self.lattice_node(m);
        let mut out = Vec::new();
        for a in 0..self.scenarios {
            for b in 0..self.scenarios {
                if a != b && k[a] > 0 {
                    let mut q = k.to_vec();
                    q[a] -= 1;
                    q[b] += 1;
                    out.push(self.index_of(&q));
                }
            }
        }
        out
    }
}

fn compositions(remaining: u32, pos: usize, k: &mut [u32], out: &mut Vec<u32>) {
    if pos + 1 == k.len() {
        k[pos] = remaining;
        out.extend_from_slice(k);
        return;
    }
    for v in 0..=remaining {
        k[pos] = v;
        compositions(remaining - v, pos + 1, k, out);
    }
}

/// Validates that `p` is a probability vector with `scenarios` entries.
pub fn check_belief(p: &[f64], scenarios: usize) -> Result<()> {
    if p.len() != scenarios {
        return Err(Error::DimensionMismatch { expected: scenarios, found: p.len() });
    }
    let sum: f64 = p.iter().sum();
    if p.iter().any(|c| !c.is_finite() || *c < -1e-12) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::OutsideSimplex);
    }
    Ok(())
}

/// The three grids of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSet {
    pub time: TimeGrid,
    pub space: SpaceGrid,
    pub simplex: SimplexGrid,
}

impl GridSet {
    /// Grids with `N` time steps, `L` space cells and belief resolution `M`
    /// covering the problem's horizon and domain.
    pub fn for_problem(problem: &ProblemSpec, steps: usize, cells: usize, resolution: usize) -> Result<Self> {
        Ok(Self {
            time: TimeGrid::new(problem.horizon, steps)?,
            space: SpaceGrid::new(problem.domain.0, problem.domain.1, cells)?,
            simplex: SimplexGrid::new(problem.scenarios, resolution)?,
        })
    }

    pub fn check_against(&self, problem: &ProblemSpec) -> Result<()> {
        if self.time.horizon() != problem.horizon {
            return Err(Error::InvalidGrid("time grid does not end at the horizon".into()));
        }
        if self.space.bounds() != problem.domain {
            return Err(Error::InvalidGrid("space grid does not cover the domain".into()));
        }
        if self.simplex.scenarios() != problem.scenarios {
            return Err(Error::DimensionMismatch {
                expected: problem.scenarios,
                found: self.simplex.scenarios(),
            });
        }
        Ok(())
    }

    /// Nodes per time level, `(L + 1) * M`.
    pub fn level_len(&self) -> usize {
        self.space.len() * self.simplex.len()
    }
}

/// Nodal values `u[n][l][m]` of a backward sweep, plus the envelope
/// supports the solver used at each `(n, l)`.
#[derive(Debug, Clone)]
pub struct SolutionField {
    grids: GridSet,
    values: Vec<f64>,
    /// One entry per `(n, l)` with `n < N`, when the run convexified.
    envelopes: Option<Vec<EnvelopeResult>>,
}

impl SolutionField {
    pub fn new(grids: GridSet, values: Vec<f64>, envelopes: Option<Vec<EnvelopeResult>>) -> Result<Self> {
        let expected = (grids.time.steps() + 1) * grids.level_len();
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: values.len() });
        }
        if let Some(env) = &envelopes {
            let count = grids.time.steps() * grids.space.len();
            if env.len() != count {
                return Err(Error::DimensionMismatch { expected: count, found: env.len() });
            }
        }
        Ok(Self { grids, values, envelopes })
    }

    /// Field with every node set to `f(t_n, x_l, p_m)`.
    pub fn from_fn(grids: GridSet, mut f: impl FnMut(f64, f64, &[f64]) -> f64) -> Self {
        let mut values = Vec::with_capacity((grids.time.steps() + 1) * grids.level_len());
        for n in 0..=grids.time.steps() {
            let t = grids.time.node(n);
            for x in grids.space.nodes() {
                for p in grids.simplex.nodes() {
                    values.push(f(t, x, p));
                }
            }
        }
        Self { grids, values, envelopes: None }
    }

    pub fn grids(&self) -> &GridSet {
        &self.grids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn index(&self, n: usize, l: usize, m: usize) -> usize {
        (n * self.grids.space.len() + l) * self.grids.simplex.len() + m
    }

    #[inline]
    pub fn get(&self, n: usize, l: usize, m: usize) -> f64 {
        self.values[self.index(n, l, m)]
    }

    /// All `(L + 1) * M` values of time level `n`.
    pub fn level(&self, n: usize) -> &[f64] {
        let len = self.grids.level_len();
        &self.values[n * len..(n + 1) * len]
    }

    /// Values over `m` at `(n, l)`.
    pub fn beliefs_at(&self, n: usize, l: usize) -> &[f64] {
        let start = self.index(n, l, 0);
        &self.values[start..start + self.grids.simplex.len()]
    }

    /// Values over `l` at `(n, m)`.
    pub fn slice_x(&self, n: usize, m: usize) -> Vec<f64> {
        (0..self.grids.space.len()).map(|l| self.get(n, l, m)).collect()
    }

    pub fn envelope(&self, n: usize, l: usize) -> Option<&EnvelopeResult> {
        if n >= self.grids.time.steps() {
            return None;
        }
        self.envelopes.as_ref().map(|e| &e[n * self.grids.space.len() + l])
    }

    /// Linear-in-time blend at node `(l, m)`.
    pub fn interp_t(&self, t: f64, l: usize, m: usize) -> Result<f64> {
        let (n, w) = self.locate_time(t)?;
        if w == 0.0 {
            return Ok(self.get(n, l, m));
        }
        Ok(lerp(self.get(n, l, m), self.get(n + 1, l, m), w))
    }

    fn locate_time(&self, t: f64) -> Result<(usize, f64)> {
        let time = &self.grids.time;
        if !(t >= 0.0 && t <= time.horizon()) {
            return Err(Error::TimeOutOfRange { t, horizon: time.horizon() });
        }
        let s = t / time.dt();
        let n = (libm::floor(s) as usize).min(time.steps());
        if n == time.steps() {
            return Ok((n, 0.0));
        }
        let w = (t - time.node(n)) / time.dt();
        Ok((n, w.clamp(0.0, 1.0)))
    }

    /// Support of `p` at `(n, l)`: the solver's convexity-preserving
    /// partition where one was cached, the standard partition otherwise.
    pub fn support(&self, n: usize, l: usize, p: &[f64]) -> Result<SupportWeights> {
        match self.envelope(n, l) {
            Some(env) => support_at(env, &self.grids.simplex, p),
            None => self.grids.simplex.locate(p),
        }
    }

    /// Interpolated value at one time level, `p` first, then `x`.
    pub fn value_at_level(&self, n: usize, x: f64, p: &[f64]) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite("interpolation abscissa"));
        }
        let (l, w) = self.grids.space.locate(x);
        let left = interp_p(self.beliefs_at(n, l), &self.support(n, l, p)?);
        let right = interp_p(self.beliefs_at(n, l + 1), &self.support(n, l + 1, p)?);
        Ok(lerp(left, right, w))
    }

    /// `interp_t ∘ interp_x ∘ interp_p` evaluation at an arbitrary point.
    pub fn value_at(&self, t: f64, x: f64, p: &[f64]) -> Result<f64> {
        check_belief(p, self.grids.simplex.scenarios())?;
        let (n, w) = self.locate_time(t)?;
        let now = self.value_at_level(n, x, p)?;
        if w == 0.0 {
            return Ok(now);
        }
        let later = self.value_at_level(n + 1, x, p)?;
        Ok(lerp(now, later, w))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}
