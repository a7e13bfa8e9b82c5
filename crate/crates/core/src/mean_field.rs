//! Deterministic large-`n` limits: the gradient flows of `g` and of `U`.

use crate::error::{Error, Result};
use crate::model::{ModelParams, Potential};

pub const DEFAULT_STEP: f64 = 1e-3;

/// Largest admissible gap between the step-`h` and step-`h/2` solutions.
pub const RICHARDSON_TOL: f64 = 1e-10;

/// Per-step slack on the energy monotonicity check.
pub const ENERGY_TOL: f64 = 1e-9;

/// Sample count of the `(U')²/U` scan behind the energy-decay check.
pub const RATE_SCAN_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub terminal: f64,
    /// Largest gap against the half-step solution on the output grid.
    pub richardson: f64,
}

impl OdeSolution {
    /// Value at `t` by linear interpolation between output points.
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            return self.values[0];
        }
        if k == self.times.len() {
            return self.terminal;
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        self.values[k - 1] * (1.0 - w) + self.values[k] * w
    }
}

fn check_grid(t_grid: &[f64], step: f64) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    if t_grid.is_empty() {
        return Err(Error::Domain("empty time grid".into()));
    }
    if t_grid[0] < 0.0 || t_grid.iter().any(|t| !t.is_finite()) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("time grid must be finite, nonnegative and nondecreasing".into()));
    }
    Ok(())
}

fn rk4(f: &impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let k1 = f(x);
    let k2 = f(x + 0.5 * h * k1);
    let k3 = f(x + 0.5 * h * k2);
    let k4 = f(x + h * k3);
    x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// A scalar autonomous flow, possibly with a region `x < kink` where the
/// velocity is the constant `kink_speed > 0`.
struct Flow<'a> {
    rhs: &'a dyn Fn(f64) -> f64,
    energy: &'a dyn Fn(f64) -> f64,
    kink: Option<(f64, f64)>,
}

impl Flow<'_> {
    /// Advances by `dt` with steps of at most `h`.
    fn advance(&self, mut x: f64, dt: f64, h: f64) -> Result<f64> {
        let mut left = dt;
        while left > 0.0 {
            let mut span = h.min(left);
            if span < 1e-14 * h {
                break;
            }
            let before = (self.energy)(x);
            x = match self.kink {
                Some((edge, speed)) if x < edge => {
                    // exact constant-speed motion, landing on the kink
                    let reach = (edge - x) / speed;
                    if reach <= span {
                        span = reach;
                        edge
                    } else {
                        x + speed * span
                    }
                }
                _ => rk4(&self.rhs, x, span),
            };
            let after = (self.energy)(x);
            if after > before + ENERGY_TOL {
                return Err(Error::Property(format!(
                    "energy increased from {before} to {after} in one step"
                )));
            }
            left -= span;
        }
        Ok(x)
    }

    fn on_grid(&self, x0: f64, t_grid: &[f64], h: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(t_grid.len());
        let mut x = x0;
        let mut now = 0.0;
        for &t in t_grid {
            x = self.advance(x, t - now, h)?;
            now = t;
            out.push(x);
        }
        Ok(out)
    }

    fn solve(&self, x0: f64, t_grid: &[f64], step: f64) -> Result<OdeSolution> {
        check_grid(t_grid, step)?;
        let coarse = self.on_grid(x0, t_grid, step)?;
        let fine = self.on_grid(x0, t_grid, step / 2.0)?;
        let richardson = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if richardson > RICHARDSON_TOL {
            return Err(Error::StepSize { deviation: richardson, bound: RICHARDSON_TOL });
        }
        let terminal = *fine.last().expect("grid is nonempty");
        Ok(OdeSolution { times: t_grid.to_vec(), values: fine, terminal, richardson })
    }
}

/// `d m̄/dt = -g'(m̄)` sampled on `t_grid`.
pub fn integrate_limit(beta: f64, m0: f64, t_grid: &[f64], step: f64) -> Result<OdeSolution> {
    if !(m0.is_finite() && m0.abs() <= 1.0) {
        return Err(Error::Domain(format!("m0 = {m0} outside [-1, 1]")));
    }
    let pot = Potential::new(beta)?;
    let rhs = |m: f64| -pot.slope(m);
    let energy = |m: f64| pot.value(m.clamp(-1.0, 1.0));
    Flow { rhs: &rhs, energy: &energy, kink: None }.solve(m0, t_grid, step)
}

/// Solution of `d μ̄/dt = -U'(μ̄)` with the certified energy decay rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedSolution {
    pub solution: OdeSolution,
    /// `min (U')²/U` from the grid scan.
    pub c_hat: f64,
    /// Largest `U(μ̄_t) / (e^{-c t} U(μ̄_0))` over the output grid.
    pub decay_ratio: f64,
}

/// `d μ̄/dt = -U'(μ̄)` on `[0, 1]`, checking `U(μ̄_t) ≤ e^{-ĉ t} U(μ̄_0)`.
pub fn integrate_modified(params: &ModelParams, mu0: f64, t_grid: &[f64], step: f64) -> Result<ModifiedSolution> {
    params.require_metastable()?;
    if !(mu0.is_finite() && (0.0..=1.0).contains(&mu0)) {
        return Err(Error::Domain(format!("mu0 = {mu0} outside [0, 1]")));
    }
    let pot = *params.potential();
    let eps = params.epsilon();
    let speed = -pot.slope(eps);
    let rhs = |m: f64| -pot.slope(m.max(eps));
    let energy = |m: f64| params.potential_u(m.clamp(0.0, 1.0)).unwrap_or(f64::INFINITY);
    let flow = Flow { rhs: &rhs, energy: &energy, kink: Some((eps, speed)) };
    let solution = flow.solve(mu0, t_grid, step)?;
    let c_hat = params.lyapunov_rate_scan(RATE_SCAN_SAMPLES)?;
    let u0 = params.potential_u(mu0)?;
    let mut decay_ratio: f64 = 0.0;
    for (&t, &mu) in solution.times.iter().zip(&solution.values) {
        let u = params.potential_u(mu.clamp(0.0, 1.0))?;
        let bound = (-c_hat * t).exp() * u0;
        if bound > 0.0 {
            decay_ratio = decay_ratio.max(u / bound);
        }
        if u > bound * (1.0 + 1e-9) + 1e-15 {
            return Err(Error::Property(format!(
                "U = {u} at t = {t} exceeds the decay bound {bound}"
            )));
        }
    }
    Ok(ModifiedSolution { solution, c_hat, decay_ratio })
}
