//! Probability vectors on finite subsets of the real line.

use crate::error::{Error, Result};
use crate::model::Grid;

/// Normalization slack accepted by [`DiscreteLaw::new`].
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A probability law with finite support, points sorted strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    points: Vec<f64>,
    weights: Vec<f64>,
}

fn check_points(points: &[f64]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Domain("law with empty support".into()));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("support contains a non-finite point".into()));
    }
    if points.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("support points must be strictly increasing".into()));
    }
    Ok(())
}

fn check_weights(weights: &[f64], len: usize) -> Result<f64> {
    if weights.len() != len {
        return Err(Error::Domain(format!("{} weights for {len} points", weights.len())));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Domain("weights must be finite and nonnegative".into()));
    }
    Ok(weights.iter().sum())
}

impl DiscreteLaw {
    /// Builds a law, rejecting weights that do not sum to one within
    /// [`NORMALIZATION_TOL`].
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_points(&points)?;
        let mass = check_weights(&weights, points.len())?;
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Domain(format!("weights sum to {mass}, not 1")));
        }
        Ok(Self { points, weights })
    }

    /// Builds a law from a positive measure, dividing by its mass.
    pub fn normalized(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_points(&points)?;
        let mass = check_weights(&weights, points.len())?;
        if !(mass > 0.0) {
            return Err(Error::Domain("cannot normalize a zero measure".into()));
        }
        let weights = weights.into_iter().map(|w| w / mass).collect();
        Ok(Self { points, weights })
    }

    pub fn on_grid(grid: &Grid, weights: Vec<f64>) -> Result<Self> {
        Self::new(grid.points().to_vec(), weights)
    }

    pub fn dirac(x: f64) -> Self {
        Self { points: vec![x], weights: vec![1.0] }
    }

    /// Point mass at position `k` of `grid`, with the full grid as support.
    pub fn dirac_on_grid(grid: &Grid, k: usize) -> Self {
        let mut weights = vec![0.0; grid.len()];
        weights[k] = 1.0;
        Self { points: grid.points().to_vec(), weights }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `∫ f dμ`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x)
    }
}

/// A sub-probability measure on a grid: the unnormalized law of a killed chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SubProbLaw {
    points: Vec<f64>,
    weights: Vec<f64>,
    mass: f64,
}

impl SubProbLaw {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_points(&points)?;
        let mass = check_weights(&weights, points.len())?;
        if !(mass > 0.0 && mass <= 1.0 + NORMALIZATION_TOL) {
            return Err(Error::Domain(format!("sub-probability mass must lie in (0, 1], got {mass}")));
        }
        Ok(Self { points, weights, mass })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// The conditional law given survival.
    pub fn conditioned(&self) -> DiscreteLaw {
        let weights = self.weights.iter().map(|w| w / self.mass).collect();
        DiscreteLaw { points: self.points.clone(), weights }
    }
}
