//! One-step Euler transition of the state and exact expectations over it.
//!
//! `X' = x + b(t_n, x) Δt + a(t_n, x) √Δt ξ` with `ξ` drawn from a finite
//! shock set of zero mean and unit variance. Expectations enumerate the
//! shock set, so every scheme built on top is deterministic.

use alloc::vec;
use alloc::vec::Vec;

use crate::mesh::SpaceGrid;
use crate::{Error, Result};

const MOMENT_TOLERANCE: f64 = 1e-12;

/// Finite shock law `{(ξ_k, p_k)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockSet {
    points: Vec<(f64, f64)>,
}

impl Default for ShockSet {
    fn default() -> Self {
        Self::two_point()
    }
}

impl ShockSet {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() || points.iter().any(|&(x, p)| !x.is_finite() || !(p >= 0.0)) {
            return Err(Error::InvalidConfig("shock set needs finite values and probabilities".into()));
        }
        let mass: f64 = points.iter().map(|s| s.1).sum();
        let mean: f64 = points.iter().map(|s| s.0 * s.1).sum();
        let second: f64 = points.iter().map(|s| s.0 * s.0 * s.1).sum();
        if (mass - 1.0).abs() > MOMENT_TOLERANCE
            || mean.abs() > MOMENT_TOLERANCE
            || (second - 1.0).abs() > MOMENT_TOLERANCE
        {
            return Err(Error::InvalidConfig("shocks must have unit mass, zero mean and unit variance".into()));
        }
        Ok(Self { points })
    }

    /// `ξ = ±1` with probability 1/2.
    pub fn two_point() -> Self {
        Self { points: vec![(-1.0, 0.5), (1.0, 0.5)] }
    }

    /// Three-point Gauss–Hermite rule, `ξ ∈ {−√3, 0, √3}`.
    pub fn three_point() -> Self {
        let r = libm::sqrt(3.0);
        Self { points: vec![(-r, 1.0 / 6.0), (0.0, 2.0 / 3.0), (r, 1.0 / 6.0)] }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Transition from one node with frozen coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerStep<'a> {
    pub dt: f64,
    pub drift: f64,
    pub diffusion: f64,
    pub shocks: &'a ShockSet,
}

impl<'a> EulerStep<'a> {
    pub fn new(dt: f64, drift: f64, diffusion: f64, shocks: &'a ShockSet) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidConfig("time step must be positive".into()));
        }
        if !drift.is_finite() || !diffusion.is_finite() {
            return Err(Error::NonFinite("transition coefficients"));
        }
        Ok(Self { dt, drift, diffusion, shocks })
    }

    /// `{(x + bΔt + a√Δt ξ_k, p_k)}`.
    pub fn successors(&self, x: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let centre = x + self.drift * self.dt;
        let spread = self.diffusion * libm::sqrt(self.dt);
        self.shocks.points.iter().map(move |&(xi, p)| (centre + spread * xi, p))
    }

    /// `E[f(X')]`.
    pub fn expectation_with(&self, x: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.successors(x).map(|(y, p)| p * f(y)).sum()
    }

    /// `E[interp_x(slice, X')]`.
    pub fn expected_value(&self, grid: &SpaceGrid, x: f64, slice: &[f64]) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite("transition origin"));
        }
        if slice.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: slice.len() });
        }
        Ok(self.expectation_with(x, |y| {
            let (l, w) = grid.locate(y);
            slice[l] + w * (slice[l + 1] - slice[l])
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn successor_examples() {
        let shocks = ShockSet::two_point();
        let frozen = EulerStep::new(0.1, 0.0, 0.0, &shocks).unwrap();
        assert!(frozen.successors(0.3).all(|(y, _)| y == 0.3));
        let drift = EulerStep::new(0.25, 1.0, 0.0, &shocks).unwrap();
        assert!(drift.successors(0.0).all(|(y, _)| y == 0.25));
        let s = EulerStep::new(0.01, 0.01, 0.2, &shocks).unwrap();
        let out: Vec<_> = s.successors(0.5).collect();
        assert_abs_diff_eq!(out[0].0, 0.4801, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1].0, 0.5201, epsilon = 1e-15);
        assert_eq!((out[0].1, out[1].1), (0.5, 0.5));
        assert!(EulerStep::new(0.0, 0.0, 1.0, &shocks).is_err());
        assert!(EulerStep::new(-1.0, 0.0, 1.0, &shocks).is_err());
    }

    #[test]
    fn shock_sets_validate() {
        assert!(ShockSet::new(ShockSet::three_point().points().to_vec()).is_ok());
        assert!(ShockSet::new(vec![(-1.0, 0.5), (2.0, 0.5)]).is_err());
        assert!(ShockSet::new(vec![(-1.0, 0.4), (1.0, 0.4)]).is_err());
    }

    #[test]
    fn expectation_examples() {
        let grid = SpaceGrid::new(0.0, 1.0, 10).unwrap();
        let shocks = ShockSet::two_point();
        let constant = vec![2.5; 11];
        let s = EulerStep::new(0.01, 0.3, 0.2, &shocks).unwrap();
        assert_abs_diff_eq!(s.expected_value(&grid, 0.5, &constant).unwrap(), 2.5, epsilon = 1e-15);
        let identity: Vec<f64> = grid.nodes().collect();
        let s = EulerStep::new(0.01, 0.0, 0.2, &shocks).unwrap();
        assert_abs_diff_eq!(s.expected_value(&grid, 0.5, &identity).unwrap(), 0.5, epsilon = 1e-15);
        let s = EulerStep::new(0.1, 0.03, 0.2, &shocks).unwrap();
        assert_abs_diff_eq!(s.expected_value(&grid, 0.5, &identity).unwrap(), 0.503, epsilon = 1e-14);
        assert!(s.expected_value(&grid, f64::NAN, &identity).is_err());
    }

    proptest! {
        #[test]
        fn pure_advection(slice in prop::collection::vec(-5.0..5.0f64, 9), x in -0.2..1.2f64, b in -2.0..2.0f64) {
            let grid = SpaceGrid::new(0.0, 1.0, 8).unwrap();
            let shocks = ShockSet::two_point();
            let s = EulerStep::new(0.05, b, 0.0, &shocks).unwrap();
            let direct = crate::mesh::interp_x(&grid, &slice, x + b * 0.05).unwrap();
            prop_assert!((s.expected_value(&grid, x, &slice).unwrap() - direct).abs() <= 1e-14);
        }

        #[test]
        fn monotone_and_nonexpansive(
            a in prop::collection::vec(-5.0..5.0f64, 9),
            d in prop::collection::vec(0.0..3.0f64, 9),
            x in 0.0..1.0f64,
        ) {
            let grid = SpaceGrid::new(0.0, 1.0, 8).unwrap();
            let shocks = ShockSet::two_point();
            let s = EulerStep::new(0.05, 0.1, 0.7, &shocks).unwrap();
            let b: Vec<f64> = a.iter().zip(&d).map(|(u, v)| u + v).collect();
            let ea = s.expected_value(&grid, x, &a).unwrap();
            let eb = s.expected_value(&grid, x, &b).unwrap();
            let gap = d.iter().fold(0.0f64, |m, v| m.max(*v));
            prop_assert!(ea <= eb + 1e-14);
            prop_assert!(eb - ea <= gap + 1e-14);
        }
    }
}
