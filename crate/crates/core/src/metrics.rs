//! Distances between laws on finite subsets of the line.
//!
//! Total variation uses the unhalved convention `Σ |μ(x) - ν(x)|`, so
//! disjoint laws are at distance 2. Every threshold stated in this workspace
//! uses that convention.

use crate::error::{Error, Result};
use crate::law::DiscreteLaw;

/// Walks the union of two supports in increasing order, yielding
/// `(point, μ(point), ν(point))`.
fn merged(mu: &DiscreteLaw, nu: &DiscreteLaw) -> Vec<(f64, f64, f64)> {
    let (xs, ws) = (mu.points(), mu.weights());
    let (ys, vs) = (nu.points(), nu.weights());
    let mut out = Vec::with_capacity(xs.len() + ys.len());
    let (mut i, mut j) = (0, 0);
    while i < xs.len() || j < ys.len() {
        let take_x = j == ys.len() || (i < xs.len() && xs[i] <= ys[j]);
        let take_y = i == xs.len() || (j < ys.len() && ys[j] <= xs[i]);
        match (take_x, take_y) {
            (true, true) => {
                out.push((xs[i], ws[i], vs[j]));
                i += 1;
                j += 1;
            }
            (true, false) => {
                out.push((xs[i], ws[i], 0.0));
                i += 1;
            }
            _ => {
                out.push((ys[j], 0.0, vs[j]));
                j += 1;
            }
        }
    }
    out
}

/// `W1 = ∫ |F_μ - F_ν|`.
pub fn w1(mu: &DiscreteLaw, nu: &DiscreteLaw) -> f64 {
    let pts = merged(mu, nu);
    let (mut cdf_mu, mut cdf_nu, mut total) = (0.0, 0.0, 0.0);
    for w in pts.windows(2) {
        cdf_mu += w[0].1;
        cdf_nu += w[0].2;
        total += (cdf_mu - cdf_nu).abs() * (w[1].0 - w[0].0);
    }
    total
}

/// `W2` through the comonotone (quantile) coupling.
pub fn w2(mu: &DiscreteLaw, nu: &DiscreteLaw) -> f64 {
    let (xs, ys) = (mu.points(), nu.points());
    let mut left_mu = mu.weights()[0];
    let mut left_nu = nu.weights()[0];
    let (mut i, mut j) = (0, 0);
    let mut cost = 0.0;
    loop {
        let moved = left_mu.min(left_nu);
        let d = xs[i] - ys[j];
        cost += moved * d * d;
        left_mu -= moved;
        left_nu -= moved;
        if left_mu <= left_nu {
            i += 1;
            if i == xs.len() {
                break;
            }
            left_mu += mu.weights()[i];
        } else {
            j += 1;
            if j == ys.len() {
                break;
            }
            left_nu += nu.weights()[j];
        }
    }
    cost.max(0.0).sqrt()
}

/// `Σ |μ(x) - ν(x)|` over the union of supports; at most 2.
pub fn tv(mu: &DiscreteLaw, nu: &DiscreteLaw) -> f64 {
    merged(mu, nu).iter().map(|(_, a, b)| (a - b).abs()).sum()
}

/// TV between two weight vectors on a shared grid.
pub fn tv_weights(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Weight `1 + ξ V` of the weighted total variation.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTvSpec {
    xi: f64,
    v: Vec<f64>,
}

impl WeightedTvSpec {
    pub fn new(xi: f64, v: Vec<f64>) -> Result<Self> {
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::Domain(format!("xi must be finite and nonnegative, got {xi}")));
        }
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Domain("V must be finite and nonnegative".into()));
        }
        Ok(Self { xi, v })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }
}

/// `Σ |μ(x) - ν(x)| (1 + ξ V(x))`; both laws must live on the grid of `V`.
pub fn weighted_tv(mu: &DiscreteLaw, nu: &DiscreteLaw, spec: &WeightedTvSpec) -> Result<f64> {
    if mu.points() != nu.points() || mu.len() != spec.v.len() {
        return Err(Error::Domain("weighted TV needs both laws and V on one grid".into()));
    }
    Ok(mu
        .weights()
        .iter()
        .zip(nu.weights())
        .zip(&spec.v)
        .map(|((a, b), v)| (a - b).abs() * (1.0 + spec.xi * v))
        .sum())
}
