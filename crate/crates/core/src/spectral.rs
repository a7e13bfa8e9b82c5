//! Perron pair of the killed generator, quasi-stationary distribution,
//! stationary law of the free chain, Doob transform and Harris constants.
//!
//! The killed generator `Λ` is a tridiagonal matrix whose negative `-Λ` is a
//! nonsingular M-matrix, so `(-Λ)^{-1}` is entrywise positive and its Perron
//! root is `1/b_n`. The default solver is power iteration on that inverse:
//! each sweep is a tridiagonal solve, and the spectral ratio per sweep is
//! `b_n / (b_n + γ_n)`, which is tiny exactly when the chain is metastable.
//!
//! The LU factorization of `-Λ` is written so that every pivot is a sum of
//! positive terms (see [`MMatrixLu`]); for nonnegative right-hand sides the
//! solves never subtract, so `h_n` and the QSD keep full relative accuracy even
//! when `b_n` is ten orders of magnitude below the jump rates.

use crate::error::{Error, Result};
use crate::model::{ModelParams, TridiagGenerator};

/// Default Cauchy tolerance on successive eigenvalue estimates.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Largest admissible `‖Λh + bh‖_∞ / λ̄` for a pack fed to [`doob_transform`].
pub const DOOB_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerronMethod {
    /// Power iteration on `(-Λ)^{-1}`.
    InverseIteration,
    /// Power iteration on `Λ + λ̄ I`.
    ShiftedPower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerronOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: PerronMethod,
}

impl Default for PerronOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: 10_000, method: PerronMethod::InverseIteration }
    }
}

impl PerronOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Perron eigen-elements of a killed generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPack {
    /// Decay rate: `Λ h = -b h`.
    pub b_n: f64,
    /// Right eigenvector, `max h = 1`.
    pub h_n: Vec<f64>,
    /// Left eigenvector normalized to a probability vector (the QSD).
    pub qsd: Vec<f64>,
    /// `‖Λh + bh‖_∞`.
    pub resid_right: f64,
    /// `‖qΛ + bq‖_1`.
    pub resid_left: f64,
    pub iterations: usize,
}

impl SpectralPack {
    pub fn h_is_nondecreasing(&self) -> bool {
        self.h_n.windows(2).all(|w| w[1] >= w[0])
    }

    /// `qsd(h)`.
    pub fn qsd_mass_of_h(&self) -> f64 {
        self.qsd.iter().zip(&self.h_n).map(|(q, h)| q * h).sum()
    }
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// LU factorization of `-G` for a sub-Markovian tridiagonal generator `G`.
///
/// Eliminating top-down, the pivots satisfy `u_k = up_k + e_k` with
///
/// ```text
/// e_0 = kill_0,   e_k = kill_k + down_k · e_{k-1} / u_{k-1},
/// ```
///
/// a recursion with only positive terms. The last pivot `e_last` carries the
/// smallness of `b_n`.
#[derive(Debug, Clone)]
pub struct MMatrixLu {
    up: Vec<f64>,
    down: Vec<f64>,
    pivots: Vec<f64>,
}

impl MMatrixLu {
    pub fn new(gen: &TridiagGenerator) -> Result<Self> {
        let len = gen.dim();
        let (up, down, kill) = (gen.up(), gen.down(), gen.kill());
        let mut pivots = Vec::with_capacity(len);
        let mut excess = kill[0];
        pivots.push(up[0] + excess);
        for k in 1..len {
            excess = kill[k] + down[k] * excess / pivots[k - 1];
            pivots.push(up[k] + excess);
        }
        if pivots.iter().any(|&u| !(u > 0.0 && u.is_finite())) {
            return Err(Error::Irreducible(
                "-G is singular: no killing reachable from every state".into(),
            ));
        }
        Ok(Self { up: up.to_vec(), down: down.to_vec(), pivots })
    }

    /// Solves `(-G) x = y`.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let len = self.pivots.len();
        let mut z = vec![0.0; len];
        z[0] = y[0];
        for k in 1..len {
            z[k] = y[k] + self.down[k] * z[k - 1] / self.pivots[k - 1];
        }
        let mut x = vec![0.0; len];
        x[len - 1] = z[len - 1] / self.pivots[len - 1];
        for k in (0..len - 1).rev() {
            x[k] = (z[k] + self.up[k] * x[k + 1]) / self.pivots[k];
        }
        x
    }

    /// Solves `x (-G) = y`, i.e. `(-G)^T x = y`.
    pub fn solve_transpose(&self, y: &[f64]) -> Vec<f64> {
        let len = self.pivots.len();
        let mut w = vec![0.0; len];
        w[0] = y[0] / self.pivots[0];
        for k in 1..len {
            w[k] = (y[k] + self.up[k - 1] * w[k - 1]) / self.pivots[k];
        }
        let mut x = vec![0.0; len];
        x[len - 1] = w[len - 1];
        for k in (0..len - 1).rev() {
            x[k] = w[k] + self.down[k + 1] / self.pivots[k] * x[k + 1];
        }
        x
    }
}

/// Log-weights of the measure that makes a birth-death generator reversible:
/// `π_{k+1} / π_k = up_k / down_{k+1}`, normalized so `max = 0`.
pub fn reversible_log_weights(gen: &TridiagGenerator) -> Result<Vec<f64>> {
    let len = gen.dim();
    let (up, down) = (gen.up(), gen.down());
    let mut logs = Vec::with_capacity(len);
    logs.push(0.0);
    for k in 0..len - 1 {
        if !(up[k] > 0.0 && down[k + 1] > 0.0) {
            return Err(Error::Irreducible(format!(
                "zero rate between positions {k} and {}",
                k + 1
            )));
        }
        logs.push(logs[k] + up[k].ln() - down[k + 1].ln());
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(logs.into_iter().map(|l| l - top).collect())
}

/// Dirichlet-form Rayleigh quotient `-<h, Gh>_π / <h, h>_π` in the reversible
/// inner product; every term is nonnegative.
fn dirichlet_rayleigh(gen: &TridiagGenerator, h: &[f64]) -> Result<f64> {
    let pi: Vec<f64> = reversible_log_weights(gen)?.into_iter().map(f64::exp).collect();
    let len = gen.dim();
    let (up, kill) = (gen.up(), gen.kill());
    let edges = (0..len - 1).map(|k| {
        let d = h[k + 1] - h[k];
        pi[k] * up[k] * d * d
    });
    let leaks = (0..len).map(|k| pi[k] * kill[k] * h[k] * h[k]);
    let num = compensated_sum(edges.chain(leaks));
    let den = compensated_sum((0..len).map(|k| pi[k] * h[k] * h[k]));
    Ok(num / den)
}

fn right_residual(gen: &TridiagGenerator, h: &[f64], b: f64) -> f64 {
    gen.apply(h).iter().zip(h).map(|(gh, hk)| (gh + b * hk).abs()).fold(0.0, f64::max)
}

fn left_residual(gen: &TridiagGenerator, q: &[f64], b: f64) -> f64 {
    gen.apply_transpose(q).iter().zip(q).map(|(qg, qk)| (qg + b * qk).abs()).sum()
}

fn scale_by_max(v: &mut [f64]) -> f64 {
    let top = v.iter().cloned().fold(0.0, f64::max);
    v.iter_mut().for_each(|x| *x /= top);
    top
}

fn scale_by_sum(v: &mut [f64]) -> f64 {
    let total = compensated_sum(v.iter().copied());
    v.iter_mut().for_each(|x| *x /= total);
    total
}

/// Perron pair `(b_n, h_n)` and QSD of a killed generator.
pub fn perron_eigenpair(gen: &TridiagGenerator, opts: &PerronOptions) -> Result<SpectralPack> {
    if gen.is_conservative() {
        return Err(Error::Domain("Perron pair requested for a conservative generator".into()));
    }
    if gen.dim() < 2 {
        return Err(Error::DegenerateSpace("generator of dimension < 2".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {}", opts.tol)));
    }
    // irreducibility check
    reversible_log_weights(gen)?;
    match opts.method {
        PerronMethod::InverseIteration => inverse_iteration(gen, opts),
        PerronMethod::ShiftedPower => shifted_power(gen, opts),
    }
}

fn finish(
    gen: &TridiagGenerator,
    opts: &PerronOptions,
    h: Vec<f64>,
    qsd: Vec<f64>,
    iterations: usize,
) -> Result<SpectralPack> {
    let b_n = dirichlet_rayleigh(gen, &h)?;
    let resid_right = right_residual(gen, &h, b_n);
    let resid_left = left_residual(gen, &qsd, b_n);
    let bound = opts.tol * gen.inf_norm();
    if resid_right > bound || resid_left > bound || !(b_n > 0.0) {
        return Err(Error::Convergence { iterations, resid_right, resid_left });
    }
    Ok(SpectralPack { b_n, h_n: h, qsd, resid_right, resid_left, iterations })
}

fn inverse_iteration(gen: &TridiagGenerator, opts: &PerronOptions) -> Result<SpectralPack> {
    let lu = MMatrixLu::new(gen)?;
    let len = gen.dim();
    let mut h = vec![1.0; len];
    let mut q = vec![1.0 / len as f64; len];
    let mut b_right = f64::INFINITY;
    let mut b_left = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let mut x = lu.solve(&h);
        let next_right = 1.0 / scale_by_max(&mut x);
        h = x;
        let mut y = lu.solve_transpose(&q);
        let next_left = 1.0 / scale_by_sum(&mut y);
        q = y;
        let settled = (next_right - b_right).abs() <= opts.tol * next_right
            && (next_left - b_left).abs() <= opts.tol * next_left;
        b_right = next_right;
        b_left = next_left;
        if settled {
            let bound = opts.tol * gen.inf_norm();
            if right_residual(gen, &h, b_right) <= bound && left_residual(gen, &q, b_left) <= bound {
                return finish(gen, opts, h, q, it);
            }
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        resid_right: right_residual(gen, &h, b_right),
        resid_left: left_residual(gen, &q, b_left),
    })
}

fn shifted_power(gen: &TridiagGenerator, opts: &PerronOptions) -> Result<SpectralPack> {
    let shift = gen.max_exit_rate();
    let len = gen.dim();
    let mut h = vec![1.0; len];
    let mut q = vec![1.0 / len as f64; len];
    let mut rho_right = f64::INFINITY;
    let mut rho_left = f64::INFINITY;
    let bound = opts.tol * gen.inf_norm();
    for it in 1..=opts.max_iter {
        let mut x = gen.apply(&h);
        x.iter_mut().zip(&h).for_each(|(xk, hk)| *xk += shift * hk);
        let next_right = scale_by_max(&mut x);
        h = x;
        let mut y = gen.apply_transpose(&q);
        y.iter_mut().zip(&q).for_each(|(yk, qk)| *yk += shift * qk);
        let next_left = scale_by_sum(&mut y);
        q = y;
        let settled = (next_right - rho_right).abs() <= opts.tol * shift
            && (next_left - rho_left).abs() <= opts.tol * shift;
        rho_right = next_right;
        rho_left = next_left;
        if settled
            && right_residual(gen, &h, shift - rho_right) <= bound
            && left_residual(gen, &q, shift - rho_left) <= bound
        {
            return finish(gen, opts, h, q, it);
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        resid_right: right_residual(gen, &h, shift - rho_right),
        resid_left: left_residual(gen, &q, shift - rho_left),
    })
}

/// Killed generator and its Perron pack for a metastable parameter set.
pub fn killed_spectrum(
    params: &ModelParams,
    opts: &PerronOptions,
) -> Result<(TridiagGenerator, SpectralPack)> {
    params.require_metastable()?;
    let gen = params.build_generator(true)?;
    let pack = perron_eigenpair(&gen, opts)?;
    Ok((gen, pack))
}

/// Stationary law of a conservative birth-death generator, from detailed
/// balance accumulated in log space.
pub fn stationary_full(gen: &TridiagGenerator) -> Result<Vec<f64>> {
    if !gen.is_conservative() {
        return Err(Error::Domain("stationary law requested for a killed generator".into()));
    }
    let logs = reversible_log_weights(gen)?;
    let mut weights: Vec<f64> = logs.into_iter().map(f64::exp).collect();
    scale_by_sum(&mut weights);
    Ok(weights)
}

/// Doob `h`-transform of a killed generator: the conservative generator of
/// `P_t f = e^{b t} h^{-1} M_t (h f)`.
pub fn doob_transform(gen: &TridiagGenerator, pack: &SpectralPack) -> Result<TridiagGenerator> {
    let len = gen.dim();
    if pack.h_n.len() != len {
        return Err(Error::Domain(format!("pack has {} entries for a {len}-state generator", pack.h_n.len())));
    }
    let scale = gen.max_exit_rate().max(f64::MIN_POSITIVE);
    if pack.resid_right > DOOB_GUARD * scale {
        return Err(Error::Property(format!(
            "eigenpair residual {:e} exceeds {:e}; refusing to transform",
            pack.resid_right,
            DOOB_GUARD * scale
        )));
    }
    let h = &pack.h_n;
    if h.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Domain("h has a non-positive or non-finite entry".into()));
    }
    let mut up = vec![0.0; len];
    let mut down = vec![0.0; len];
    for k in 0..len {
        if k + 1 < len {
            up[k] = gen.up()[k] * (h[k + 1] / h[k]);
        }
        if k > 0 {
            down[k] = gen.down()[k] * (h[k - 1] / h[k]);
        }
        let defect = gen.diag()[k] + pack.b_n + up[k] + down[k];
        if defect.abs() > DOOB_GUARD * scale {
            return Err(Error::Property(format!(
                "row {k} of the transformed generator sums to {defect:e}"
            )));
        }
    }
    let kill = vec![0.0; len];
    Ok(TridiagGenerator::from_rates(gen.grid().clone(), up, down, kill))
}

/// Constants of the weighted-TV contraction built from a Lyapunov pair
/// `(a, b)` and a Doeblin constant `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarrisConstants {
    pub a: f64,
    pub b_lyap: f64,
    pub c_doeblin: f64,
    pub r: f64,
    pub xi_n: f64,
    pub alpha0: f64,
    pub gamma0: f64,
    pub alpha_bar: f64,
}

pub fn harris_constants(a: f64, b_lyap: f64, c_doeblin: f64, n: usize) -> Result<HarrisConstants> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Domain(format!("need 0 < a < 1, got {a}")));
    }
    if !(b_lyap > 0.0 && b_lyap.is_finite()) {
        return Err(Error::Domain(format!("need b > 0, got {b_lyap}")));
    }
    if !(c_doeblin > 0.0 && c_doeblin < 1.0) {
        return Err(Error::Domain(format!("need 0 < c < 1, got {c_doeblin}")));
    }
    if n < 2 {
        return Err(Error::Domain(format!("need n >= 2, got {n}")));
    }
    let nf = n as f64;
    let c = c_doeblin;
    let r = 3.0 * b_lyap / ((1.0 - a) * nf);
    let alpha0 = c / 2.0;
    let gamma0 = (3.0 + a) / 4.0;
    let xi_n = c * nf / (2.0 * b_lyap);
    let contraction =
        (16.0 * (1.0 - a) + 3.0 * c * (3.0 + a)) / (16.0 * (1.0 - a) + 12.0 * c);
    let alpha_bar = (1.0 - c / 2.0).max(contraction);
    debug_assert!(alpha_bar < 1.0);
    Ok(HarrisConstants { a, b_lyap, c_doeblin, r, xi_n, alpha0, gamma0, alpha_bar })
}
