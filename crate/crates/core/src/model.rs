//! The magnetization chain of the mean-field Curie-Weiss model.
//!
//! With `n` spins the magnetization lives on `E_n = {-1 + 2i/n : i = 0..=n}` and
//! jumps by `±2/n` with rates
//!
//! ```text
//! λ+(m) = n (1 - m)/2 · exp( β m)
//! λ-(m) = n (1 + m)/2 · exp(-β m)
//! ```
//!
//! The drift of the rescaled chain is `-g'(m)` for the confining potential `g`,
//! whose minimizers are `±m_+` when `β > 1`. The chain is killed the first time
//! it reaches `[-1, ε]`; the surviving states form the killed grid `E_n^ε`.
//!
//! Grid points are always addressed by their integer index `i` and evaluated as
//! `(2i - n)/n`, so every module agrees bit-for-bit on where a point is.

use crate::error::{Error, Result};

/// A candidate `ε` closer than this to a grid point is rejected.
pub const OFF_GRID_TOL: f64 = 1e-9;

const ROOT_TOL: f64 = 1e-15;

/// `-1 + 2i/n`, evaluated with a single rounding.
#[inline]
pub fn grid_point(n: usize, i: usize) -> f64 {
    (2.0 * i as f64 - n as f64) / n as f64
}

/// Index of the grid point `m` in `E_n`, or an [`Error::OffGrid`].
pub fn grid_index(n: usize, m: f64) -> Result<usize> {
    if !m.is_finite() || !(-1.0 - OFF_GRID_TOL..=1.0 + OFF_GRID_TOL).contains(&m) {
        return Err(Error::OffGrid { m, n });
    }
    let i = ((m + 1.0) * n as f64 / 2.0).round() as usize;
    if i > n || (grid_point(n, i) - m).abs() > OFF_GRID_TOL {
        return Err(Error::OffGrid { m, n });
    }
    Ok(i)
}

/// Index of the grid point of `E_n` nearest to `m` (clamped to `[-1, 1]`).
pub fn nearest_index(n: usize, m: f64) -> usize {
    let m = m.clamp(-1.0, 1.0);
    ((m + 1.0) * n as f64 / 2.0).round() as usize
}

/// The potential `g` normalized so that `min g = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potential {
    beta: f64,
    offset: f64,
    argmin: f64,
}

impl Potential {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParams(format!("beta must be positive, got {beta}")));
        }
        let argmin = find_m_plus(beta);
        let offset = -Self::unnormalized(beta, argmin);
        Ok(Self { beta, offset, argmin })
    }

    fn unnormalized(beta: f64, m: f64) -> f64 {
        let k = 1.0 + 1.0 / beta;
        -((k + m) * (-beta * m).exp() + (k - m) * (beta * m).exp()) / beta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// The normalizing constant `C`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Nonnegative minimizer `m_+` (0 when `β <= 1`).
    pub fn argmin(&self) -> f64 {
        self.argmin
    }

    fn check(m: f64) -> Result<()> {
        if m.is_finite() && m.abs() <= 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("potential evaluated at m = {m}, outside [-1, 1]")))
        }
    }

    /// `g(m)`, clamped at zero against rounding near the minimizers.
    pub fn g(&self, m: f64) -> Result<f64> {
        Self::check(m)?;
        Ok(self.value(m))
    }

    pub fn dg(&self, m: f64) -> Result<f64> {
        Self::check(m)?;
        Ok(self.slope(m))
    }

    pub fn d2g(&self, m: f64) -> Result<f64> {
        Self::check(m)?;
        Ok(self.curvature(m))
    }

    pub(crate) fn value(&self, m: f64) -> f64 {
        (self.offset + Self::unnormalized(self.beta, m)).max(0.0)
    }

    /// `g'(m) = -(1 - m) e^{βm} + (1 + m) e^{-βm}`.
    pub(crate) fn slope(&self, m: f64) -> f64 {
        let b = self.beta;
        -(1.0 - m) * (b * m).exp() + (1.0 + m) * (-b * m).exp()
    }

    /// `g''(m) = 2(1 - β) cosh(βm) + 2βm sinh(βm)`.
    pub(crate) fn curvature(&self, m: f64) -> f64 {
        let b = self.beta;
        2.0 * (1.0 - b) * (b * m).cosh() + 2.0 * b * m * (b * m).sinh()
    }
}

/// `g(β, m)`.
pub fn potential_g(beta: f64, m: f64) -> Result<f64> {
    Potential::new(beta)?.g(m)
}

/// `g'(β, m)`.
pub fn dg(beta: f64, m: f64) -> Result<f64> {
    Potential::new(beta)?.dg(m)
}

/// `g''(β, m)`.
pub fn d2g(beta: f64, m: f64) -> Result<f64> {
    Potential::new(beta)?.d2g(m)
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..200 {
        if hi - lo <= ROOT_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Positive minimizer of `g`: the positive root of `m = tanh(βm)` for `β > 1`,
/// and `0` otherwise.
pub fn find_m_plus(beta: f64) -> f64 {
    if !(beta > 1.0) {
        return 0.0;
    }
    let lo = (1.0 - 1.0 / beta).sqrt();
    bisect(lo, 1.0, |m| m - (beta * m).tanh())
}

/// Identity of one model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    n: usize,
    beta: f64,
    epsilon: f64,
    eta: Option<f64>,
    potential: Potential,
}

impl ModelParams {
    pub fn new(n: usize, beta: f64, epsilon: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams(format!("need n >= 2, got {n}")));
        }
        let potential = Potential::new(beta)?;
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParams(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        let nearest = grid_point(n, nearest_index(n, epsilon));
        if (nearest - epsilon).abs() <= OFF_GRID_TOL {
            return Err(Error::InvalidParams(format!(
                "epsilon = {epsilon} is within {OFF_GRID_TOL:e} of the grid point {nearest} of E_{n}"
            )));
        }
        Ok(Self { n, beta, epsilon, eta: None, potential })
    }

    /// Attach the initial-condition margin `η ∈ (ε, m_+)`.
    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        let m_plus = self.m_plus();
        if !(eta > self.epsilon && eta < m_plus) {
            return Err(Error::InvalidParams(format!(
                "eta must lie in (epsilon, m_+) = ({}, {m_plus}), got {eta}",
                self.epsilon
            )));
        }
        self.eta = Some(eta);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn eta(&self) -> Option<f64> {
        self.eta
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn m_plus(&self) -> f64 {
        self.potential.argmin()
    }

    /// Grid spacing `2/n`.
    pub fn spacing(&self) -> f64 {
        2.0 / self.n as f64
    }

    /// Rejects parameters outside the metastable regime `β > 1`, `ε < m_+`.
    pub fn require_metastable(&self) -> Result<()> {
        if !(self.beta > 1.0) {
            return Err(Error::UnsupportedRegime(format!(
                "quasi-stationary analysis needs beta > 1, got {}",
                self.beta
            )));
        }
        if !(self.epsilon < self.m_plus()) {
            return Err(Error::Domain(format!(
                "epsilon = {} must be below m_+ = {}",
                self.epsilon,
                self.m_plus()
            )));
        }
        Ok(())
    }

    pub fn index_of(&self, m: f64) -> Result<usize> {
        grid_index(self.n, m)
    }

    pub fn point(&self, i: usize) -> f64 {
        grid_point(self.n, i)
    }

    /// Index of `ε_n`, the smallest grid point strictly above `ε`.
    pub fn killed_first_index(&self) -> usize {
        let mut i = ((self.epsilon + 1.0) * self.n as f64 / 2.0).floor() as usize;
        while i > 0 && grid_point(self.n, i - 1) > self.epsilon {
            i -= 1;
        }
        while i <= self.n && grid_point(self.n, i) <= self.epsilon {
            i += 1;
        }
        i
    }

    /// `ε_n`.
    pub fn epsilon_n(&self) -> f64 {
        self.point(self.killed_first_index())
    }

    /// Index of the smallest nonnegative grid point (`0` for even `n`, `1/n` for odd `n`).
    pub fn auxiliary_first_index(&self) -> usize {
        self.n.div_ceil(2)
    }

    /// Exact rates at grid index `i`: `n(1-m)/2 = n - i` and `n(1+m)/2 = i`.
    #[inline]
    pub fn rates_at_index(&self, i: usize) -> (f64, f64) {
        let m = self.point(i);
        let up = (self.n - i) as f64 * (self.beta * m).exp();
        let down = i as f64 * (-self.beta * m).exp();
        (up, down)
    }

    /// The closed-form rates at an arbitrary `m ∈ [-1, 1]` (used at `m = ε`).
    pub fn rates_at(&self, m: f64) -> (f64, f64) {
        let n = self.n as f64;
        (
            n * (1.0 - m) / 2.0 * (self.beta * m).exp(),
            n * (1.0 + m) / 2.0 * (-self.beta * m).exp(),
        )
    }

    /// `(λ+(m), λ-(m))` for a grid point `m`.
    pub fn jump_rates(&self, m: f64) -> Result<(f64, f64)> {
        Ok(self.rates_at_index(self.index_of(m)?))
    }

    /// Rates of the auxiliary chain at grid index `i >= auxiliary_first_index()`.
    pub fn modified_rates_at_index(&self, i: usize) -> Result<(f64, f64)> {
        let m = self.point(i);
        if i < self.auxiliary_first_index() {
            return Err(Error::Domain(format!("auxiliary chain lives on m >= 0, got m = {m}")));
        }
        if m >= self.epsilon {
            return Ok(self.rates_at_index(i));
        }
        let (up_eps, down_eps) = self.rates_at(self.epsilon);
        let down = if self.n.is_multiple_of(2) {
            down_eps * m / self.epsilon
        } else {
            let shift = 1.0 / self.n as f64;
            down_eps * (m - shift) / (self.epsilon - shift)
        };
        let up = up_eps + (down - down_eps);
        if !(up >= 0.0 && down >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "modified rates at m = {m} are negative ({up}, {down}); epsilon/beta combination is invalid"
            )));
        }
        Ok((up, down))
    }

    /// `(λ̃+(m), λ̃-(m))` for a nonnegative grid point `m`.
    pub fn modified_rates(&self, m: f64) -> Result<(f64, f64)> {
        self.modified_rates_at_index(self.index_of(m)?)
    }

    fn check_unit(m: f64) -> Result<()> {
        if m.is_finite() && (0.0..=1.0).contains(&m) {
            Ok(())
        } else {
            Err(Error::Domain(format!("U evaluated at m = {m}, outside [0, 1]")))
        }
    }

    /// `U`: equal to `g` on `[ε, 1]`, affine with slope `g'(ε)` on `[0, ε]`.
    pub fn potential_u(&self, m: f64) -> Result<f64> {
        Self::check_unit(m)?;
        let g = &self.potential;
        Ok(if m >= self.epsilon {
            g.value(m)
        } else {
            g.value(self.epsilon) + g.slope(self.epsilon) * (m - self.epsilon)
        })
    }

    /// `U'`.
    pub fn du(&self, m: f64) -> Result<f64> {
        Self::check_unit(m)?;
        Ok(self.potential.slope(m.max(self.epsilon)))
    }

    /// The inflection point `m_* ∈ (0, m_+)` where `g''` vanishes.
    pub fn find_m_star(&self) -> Result<f64> {
        if !(self.beta > 1.0) {
            return Err(Error::UnsupportedRegime(format!(
                "m_* exists only for beta > 1, got {}",
                self.beta
            )));
        }
        let g = self.potential;
        Ok(bisect(0.0, self.m_plus(), |m| g.curvature(m)))
    }

    /// `min (U')²/U` over `samples + 1` equispaced points of `[0, 1]`.
    ///
    /// Near `m_+` the ratio is `0/0`; points within `1e-3` of `m_+` are replaced
    /// by the limit `2 g''(m_+)`.
    pub fn lyapunov_rate_scan(&self, samples: usize) -> Result<f64> {
        self.require_metastable()?;
        let m_plus = self.m_plus();
        let mut best = 2.0 * self.potential.curvature(m_plus);
        for k in 0..=samples.max(1) {
            let m = k as f64 / samples.max(1) as f64;
            if (m - m_plus).abs() < 1e-3 {
                continue;
            }
            let u = self.potential_u(m)?;
            let du = self.du(m)?;
            best = best.min(du * du / u);
        }
        Ok(best)
    }

    pub fn full_grid(&self) -> Grid {
        Grid::new(self.n, 0, GridKind::Full)
    }

    pub fn killed_grid(&self) -> Result<Grid> {
        let first = self.killed_first_index();
        if first + 1 > self.n {
            return Err(Error::DegenerateSpace(format!(
                "E_n^eps has {} point(s) for n = {}, epsilon = {}; need at least 2",
                self.n + 1 - first.min(self.n + 1),
                self.n,
                self.epsilon
            )));
        }
        Ok(Grid::new(self.n, first, GridKind::Killed))
    }

    pub fn auxiliary_grid(&self) -> Grid {
        Grid::new(self.n, self.auxiliary_first_index(), GridKind::Auxiliary)
    }

    /// Generator of the free chain (`killed = false`) or of the chain killed on
    /// `[-1, ε]` (`killed = true`).
    pub fn build_generator(&self, killed: bool) -> Result<TridiagGenerator> {
        let grid = if killed { self.killed_grid()? } else { self.full_grid() };
        let mut up = Vec::with_capacity(grid.len());
        let mut down = Vec::with_capacity(grid.len());
        let mut kill = vec![0.0; grid.len()];
        for i in grid.indices() {
            let (u, d) = self.rates_at_index(i);
            up.push(u);
            down.push(d);
        }
        if killed {
            kill[0] = down[0];
            down[0] = 0.0;
        }
        Ok(TridiagGenerator::from_rates(grid, up, down, kill))
    }

    /// Conservative generator of the auxiliary chain on the nonnegative grid.
    pub fn auxiliary_generator(&self) -> Result<TridiagGenerator> {
        let grid = self.auxiliary_grid();
        let mut up = Vec::with_capacity(grid.len());
        let mut down = Vec::with_capacity(grid.len());
        for i in grid.indices() {
            let (u, d) = self.modified_rates_at_index(i)?;
            up.push(u);
            down.push(d);
        }
        let kill = vec![0.0; grid.len()];
        Ok(TridiagGenerator::from_rates(grid, up, down, kill))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridKind {
    /// `E_n`.
    Full,
    /// `E_n^ε`.
    Killed,
    /// `E_n ∩ [0, 1]`, the state space of the auxiliary chain.
    Auxiliary,
}

/// A contiguous run of `E_n`, from global index `first` up to `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    first: usize,
    kind: GridKind,
    points: Vec<f64>,
}

impl Grid {
    pub fn new(n: usize, first: usize, kind: GridKind) -> Self {
        let points = (first..=n).map(|i| grid_point(n, i)).collect();
        Self { n, first, kind, points }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    /// Global index (in `E_n`) of the first point.
    pub fn first_index(&self) -> usize {
        self.first
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Global indices covered by the grid.
    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.n
    }

    /// Local position of the grid point `m`.
    pub fn position(&self, m: f64) -> Result<usize> {
        let i = grid_index(self.n, m)?;
        if i < self.first {
            return Err(Error::Domain(format!("m = {m} is below the grid start {}", self.points[0])));
        }
        Ok(i - self.first)
    }

    /// Local position of the grid point nearest to `m`.
    pub fn nearest_position(&self, m: f64) -> usize {
        nearest_index(self.n, m).clamp(self.first, self.n) - self.first
    }
}

/// A birth-death generator stored by diagonals.
///
/// `kill[k]` is the rate at which mass leaves the state space from position
/// `k`; it is zero everywhere for a conservative generator and nonzero only at
/// the leftmost state of the killed chain. `diag = -(up + down + kill)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagGenerator {
    grid: Grid,
    up: Vec<f64>,
    down: Vec<f64>,
    kill: Vec<f64>,
    diag: Vec<f64>,
    conservative: bool,
}

impl TridiagGenerator {
    pub fn from_rates(grid: Grid, up: Vec<f64>, down: Vec<f64>, kill: Vec<f64>) -> Self {
        let len = grid.len();
        assert!(up.len() == len && down.len() == len && kill.len() == len);
        assert!(up[len - 1] == 0.0 && down[0] == 0.0, "boundary rates must vanish");
        let diag = (0..len).map(|k| -(up[k] + down[k] + kill[k])).collect();
        let conservative = kill.iter().all(|&k| k == 0.0);
        Self { grid, up, down, kill, diag, conservative }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn up(&self) -> &[f64] {
        &self.up
    }

    pub fn down(&self) -> &[f64] {
        &self.down
    }

    pub fn kill(&self) -> &[f64] {
        &self.kill
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn is_conservative(&self) -> bool {
        self.conservative
    }

    /// `λ̄ = max |diag|`, the uniformization rate.
    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0_f64, |acc, d| acc.max(d.abs()))
    }

    /// `‖G‖_∞` (maximum absolute row sum).
    pub fn inf_norm(&self) -> f64 {
        (0..self.dim())
            .map(|k| self.up[k] + self.down[k] + self.diag[k].abs())
            .fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| (self.up[k] + self.down[k]) + self.diag[k]).collect()
    }

    /// `G f` (action on functions).
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let len = self.dim();
        (0..len)
            .map(|k| {
                let mut acc = self.diag[k] * f[k];
                if k + 1 < len {
                    acc += self.up[k] * f[k + 1];
                }
                if k > 0 {
                    acc += self.down[k] * f[k - 1];
                }
                acc
            })
            .collect()
    }

    /// `μ G` (action on measures).
    pub fn apply_transpose(&self, mu: &[f64]) -> Vec<f64> {
        let len = self.dim();
        (0..len)
            .map(|k| {
                let mut acc = self.diag[k] * mu[k];
                if k > 0 {
                    acc += mu[k - 1] * self.up[k - 1];
                }
                if k + 1 < len {
                    acc += mu[k + 1] * self.down[k + 1];
                }
                acc
            })
            .collect()
    }

    /// Dense copy, row-major.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let len = self.dim();
        let mut out = vec![vec![0.0; len]; len];
        for k in 0..len {
            out[k][k] = self.diag[k];
            if k + 1 < len {
                out[k][k + 1] = self.up[k];
            }
            if k > 0 {
                out[k][k - 1] = self.down[k];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::new(10, 1.2, 0.15).unwrap()
    }

    #[test]
    fn rates_at_symmetric_point_and_boundary() {
        let p = params();
        let (up, down) = p.jump_rates(0.0).unwrap();
        assert_eq!((up, down), (5.0, 5.0));
        let (up, down) = p.jump_rates(1.0).unwrap();
        assert_eq!(up, 0.0);
        assert!((down - 10.0 * (-1.2_f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn rates_match_high_precision_values() {
        // 30-digit evaluation of the closed form at n = 10, beta = 1.2, m = 0.2
        let p = params();
        let (up, down) = p.jump_rates(0.2).unwrap();
        assert!((up - 5.084_996_601_285_619).abs() < 1e-13);
        assert!((down - 4.719_767_166_399_32).abs() < 1e-13);
    }

    #[test]
    fn off_grid_rate_query_is_rejected() {
        assert!(matches!(params().jump_rates(0.1), Err(Error::OffGrid { .. })));
    }

    #[test]
    fn drift_matches_potential_slope() {
        for &(n, beta) in &[(10, 1.2), (37, 0.7), (200, 2.0), (64, 5.0)] {
            let p = ModelParams::new(n, beta, 0.1234567).unwrap();
            for i in 0..=n {
                let m = p.point(i);
                let (up, down) = p.rates_at_index(i);
                let lhs = up - down;
                let rhs = -(n as f64) / 2.0 * p.potential().slope(m);
                assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()), "n={n} m={m}");
            }
        }
    }

    #[test]
    fn potential_shape() {
        let g = Potential::new(1.2).unwrap();
        assert_eq!(g.dg(0.0).unwrap(), 0.0);
        assert!(g.g(g.argmin()).unwrap().abs() < 1e-12);
        for k in 0..=50 {
            let m = k as f64 / 50.0;
            assert!((g.g(m).unwrap() - g.g(-m).unwrap()).abs() < 1e-13);
            assert!((g.dg(m).unwrap() + g.dg(-m).unwrap()).abs() < 1e-13);
            assert!(g.g(m).unwrap() >= 0.0);
        }
        assert!(g.g(1.0).unwrap() > 0.0);
        assert!(g.g(1.5).is_err());
    }

    #[test]
    fn potential_derivatives_match_finite_differences() {
        let g = Potential::new(1.7).unwrap();
        let h = 1e-5;
        for k in 1..20 {
            let m = -0.95 + 0.1 * k as f64;
            let fd1 = (g.value(m + h) - g.value(m - h)) / (2.0 * h);
            let fd2 = (g.slope(m + h) - g.slope(m - h)) / (2.0 * h);
            assert!((fd1 - g.slope(m)).abs() < 1e-7);
            assert!((fd2 - g.curvature(m)).abs() < 1e-7);
        }
    }

    #[test]
    fn m_plus_values() {
        assert_eq!(find_m_plus(1.0), 0.0);
        assert_eq!(find_m_plus(0.5), 0.0);
        let m = find_m_plus(1.2);
        // mpmath root of m = tanh(1.2 m)
        assert!((m - 0.658_569_660_405_754).abs() < 1e-12);
        assert!(m > (1.0 - 1.0 / 1.2_f64).sqrt());
        for &beta in &[1.05, 1.2, 2.0, 5.0] {
            let g = Potential::new(beta).unwrap();
            let mp = g.argmin();
            assert!(g.slope(mp).abs() < 1e-12);
            assert!(g.curvature(mp) > 0.0, "beta={beta}");
        }
    }

    #[test]
    fn curvature_at_m_plus_two_closed_forms() {
        let beta = 1.2_f64;
        let g = Potential::new(beta).unwrap();
        let mp = g.argmin();
        let direct = g.curvature(mp);
        let alt = 2.0 * (beta * mp).exp() * (1.0 - beta + beta * mp * mp) / (1.0 + mp);
        assert!((direct - alt).abs() < 1e-10);
        assert!((direct - 0.851_690_043_043_437_6).abs() < 1e-10);
    }

    #[test]
    fn m_star_is_inflection() {
        let p = ModelParams::new(100, 1.2, 0.100001).unwrap();
        let ms = p.find_m_star().unwrap();
        assert!(ms > 0.0 && ms < p.m_plus());
        assert!(p.potential().curvature(ms).abs() < 1e-10);
        assert!((ms - 0.385_565_824_732_831).abs() < 1e-10);
        let flat = ModelParams::new(100, 0.8, 0.100001).unwrap();
        assert!(matches!(flat.find_m_star(), Err(Error::UnsupportedRegime(_))));
    }

    #[test]
    fn parameter_validation() {
        assert!(matches!(ModelParams::new(1, 1.2, 0.1), Err(Error::InvalidParams(_))));
        assert!(ModelParams::new(10, 0.0, 0.15).is_err());
        assert!(ModelParams::new(10, 1.2, 0.0).is_err());
        assert!(ModelParams::new(10, 1.2, 1.0).is_err());
        // 0.2 is a grid point of E_10
        assert!(ModelParams::new(10, 1.2, 0.2).is_err());
        assert!(ModelParams::new(10, 1.2, 0.2 + 1e-10).is_err());
        assert!(ModelParams::new(10, 1.2, 0.2 + 1e-8).is_ok());
        let p = ModelParams::new(10, 1.2, 0.15).unwrap();
        assert!(p.clone().with_eta(0.4).is_ok());
        assert!(p.clone().with_eta(0.1).is_err());
        assert!(p.clone().with_eta(0.7).is_err());
        let hot = ModelParams::new(10, 0.9, 0.15).unwrap();
        assert!(matches!(hot.require_metastable(), Err(Error::UnsupportedRegime(_))));
        let high = ModelParams::new(10, 1.2, 0.75).unwrap();
        assert!(matches!(high.require_metastable(), Err(Error::Domain(_))));
    }

    #[test]
    fn full_generator_is_conservative() {
        let g = ModelParams::new(25, 1.3, 0.21).unwrap().build_generator(false).unwrap();
        assert!(g.is_conservative());
        assert_eq!(g.dim(), 26);
        assert_eq!(g.up()[25], 0.0);
        assert_eq!(g.down()[0], 0.0);
        for s in g.row_sums() {
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn killed_generator_small_case() {
        let p = ModelParams::new(4, 1.2, 0.3).unwrap();
        let g = p.build_generator(true).unwrap();
        assert_eq!(g.grid().points(), &[0.5, 1.0]);
        let (u5, d5) = p.jump_rates(0.5).unwrap();
        let (_, d1) = p.jump_rates(1.0).unwrap();
        let dense = g.to_dense();
        assert_eq!(dense[0], vec![-(u5 + d5), u5]);
        assert_eq!(dense[1], vec![d1, -d1]);
        let sums = g.row_sums();
        assert!((sums[0] + d5).abs() < 1e-14);
        assert_eq!(sums[1], 0.0);
        assert!(!g.is_conservative());
    }

    #[test]
    fn killed_grid_starts_above_epsilon() {
        let p = ModelParams::new(100, 1.2, 0.100001).unwrap();
        let g = p.killed_grid().unwrap();
        assert!((g.points()[0] - 0.12).abs() < 1e-15);
        assert!((p.epsilon_n() - 0.12).abs() < 1e-15);
        for w in g.points().windows(2) {
            assert!((w[1] - w[0] - 0.02).abs() < 1e-14);
        }
        let degenerate = ModelParams::new(4, 1.2, 0.6).unwrap();
        assert!(matches!(degenerate.build_generator(true), Err(Error::DegenerateSpace(_))));
    }

    #[test]
    fn modified_rates_branches() {
        let p = ModelParams::new(100, 1.2, 0.100001).unwrap();
        for i in p.killed_first_index()..=100 {
            assert_eq!(p.modified_rates_at_index(i).unwrap(), p.rates_at_index(i));
        }
        let (_, down0) = p.modified_rates(0.0).unwrap();
        assert_eq!(down0, 0.0);
        // both branches agree at the junction m = epsilon
        let (up_e, down_e) = p.rates_at(p.epsilon());
        let eps = p.epsilon();
        let linear_down = down_e * eps / eps;
        assert_eq!(linear_down, down_e);
        assert_eq!(up_e + (linear_down - down_e), up_e);
        // the drift is constant below epsilon
        for i in p.auxiliary_first_index()..p.killed_first_index() {
            let (u, d) = p.modified_rates_at_index(i).unwrap();
            assert!(((u - d) - (up_e - down_e)).abs() < 1e-12);
            assert!(u >= 0.0 && d >= 0.0);
        }
        assert!(p.modified_rates(-0.02).is_err());

        let odd = ModelParams::new(101, 1.2, 0.100001).unwrap();
        let first = odd.auxiliary_first_index();
        assert!((odd.point(first) - 1.0 / 101.0).abs() < 1e-15);
        assert_eq!(odd.modified_rates_at_index(first).unwrap().1, 0.0);
    }

    #[test]
    fn auxiliary_generator_is_conservative() {
        for n in [100, 101] {
            let g = ModelParams::new(n, 1.2, 0.100001).unwrap().auxiliary_generator().unwrap();
            assert!(g.is_conservative());
            for s in g.row_sums() {
                assert_eq!(s, 0.0);
            }
        }
    }

    #[test]
    fn modified_potential() {
        let p = ModelParams::new(100, 1.2, 0.1 + 1e-6).unwrap();
        let g = p.potential();
        assert!(p.potential_u(p.m_plus()).unwrap().abs() < 1e-12);
        for i in p.killed_first_index()..=100 {
            let m = p.point(i);
            assert_eq!(p.potential_u(m).unwrap(), g.value(m));
        }
        let eps = p.epsilon();
        let u0 = p.potential_u(0.0).unwrap();
        let expected = g.value(eps) - eps * g.slope(eps);
        assert!((u0 - expected).abs() < 1e-15);
        assert!(u0 > g.value(eps));
        assert!(p.du(0.05).unwrap() < 0.0);
        assert!(p.potential_u(-0.1).is_err());
        let c = p.lyapunov_rate_scan(10_000).unwrap();
        assert!(c > 0.0);
    }
}
