//! Exact transient laws by uniformization.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::law::{DiscreteLaw, SubProbLaw};
use crate::model::{ModelParams, TridiagGenerator};
use crate::spectral::{doob_transform, SpectralPack};

pub const DEFAULT_TOL: f64 = 1e-12;

/// Largest `λ̄ Δt` per uniformization substep.
pub const MAX_SUBSTEP_RATE: f64 = 64.0;

/// Survival mass below which conditioning is refused.
pub const STARVATION_FLOOR: f64 = 1e-280;

/// Which semigroup action to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `v e^{tG}` for a row vector (law evolution).
    Measure,
    /// `e^{tG} v` for a column vector (function evolution).
    Function,
}

/// One application of `P = I + G/λ̄`, written into `dst`.
fn uniform_step(gen: &TridiagGenerator, inv_rate: f64, side: Side, src: &[f64], dst: &mut [f64]) {
    let (up, down, diag) = (gen.up(), gen.down(), gen.diag());
    let len = src.len();
    for k in 0..len {
        let mut acc = (1.0 + diag[k] * inv_rate) * src[k];
        match side {
            Side::Function => {
                if k + 1 < len {
                    acc += up[k] * inv_rate * src[k + 1];
                }
                if k > 0 {
                    acc += down[k] * inv_rate * src[k - 1];
                }
            }
            Side::Measure => {
                if k > 0 {
                    acc += src[k - 1] * up[k - 1] * inv_rate;
                }
                if k + 1 < len {
                    acc += src[k + 1] * down[k + 1] * inv_rate;
                }
            }
        }
        dst[k] = acc;
    }
}

/// `e^{tG}` applied to `v` on the chosen side.
///
/// The horizon is cut into `K` substeps with `λ̄ Δt ≤ 64`; each substep sums
/// the Poisson series until the remaining mass is below `tol / K`, so the
/// total truncation error is at most `tol · ‖v‖`.
pub fn expmv(gen: &TridiagGenerator, v: &[f64], t: f64, side: Side, tol: f64) -> Result<Vec<f64>> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be finite and nonnegative, got {t}")));
    }
    if v.len() != gen.dim() {
        return Err(Error::Domain(format!("vector of length {} for a {}-state generator", v.len(), gen.dim())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("vector has a non-finite entry".into()));
    }
    let rate = gen.max_exit_rate();
    if t == 0.0 || rate == 0.0 {
        return Ok(v.to_vec());
    }
    let substeps = (rate * t / MAX_SUBSTEP_RATE).ceil().max(1.0);
    let a = rate * t / substeps;
    let step_tol = tol / substeps;
    let inv_rate = 1.0 / rate;
    let len = v.len();

    let mut current = v.to_vec();
    let mut term = vec![0.0; len];
    let mut next = vec![0.0; len];
    let mut acc = vec![0.0; len];
    for _ in 0..substeps as u64 {
        let mut weight = (-a).exp();
        term.copy_from_slice(&current);
        acc.iter_mut().zip(&term).for_each(|(s, x)| *s = weight * x);
        let mut k = 0.0_f64;
        loop {
            // Poisson tail beyond k: w_{k+1} / (1 - a/(k+2)) once k + 2 > a
            let next_weight = weight * a / (k + 1.0);
            if k + 2.0 > a && next_weight / (1.0 - a / (k + 2.0)) <= step_tol {
                break;
            }
            uniform_step(gen, inv_rate, side, &term, &mut next);
            std::mem::swap(&mut term, &mut next);
            k += 1.0;
            weight = next_weight;
            acc.iter_mut().zip(&term).for_each(|(s, x)| *s += weight * x);
        }
        std::mem::swap(&mut current, &mut acc);
    }
    Ok(current)
}

fn check_support(gen: &TridiagGenerator, law_points: &[f64]) -> Result<()> {
    let grid = gen.grid().points();
    if law_points.len() != grid.len()
        || law_points.iter().zip(grid).any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::Domain("initial law is not supported on the generator grid".into()));
    }
    Ok(())
}

/// Unnormalized law `init · M_t` of a killed chain.
pub fn evolve_killed(gen: &TridiagGenerator, init: &DiscreteLaw, t: f64, tol: f64) -> Result<SubProbLaw> {
    check_support(gen, init.points())?;
    let w = expmv(gen, init.weights(), t, Side::Measure, tol)?;
    let w: Vec<f64> = w.into_iter().map(|x| x.max(0.0)).collect();
    let mass: f64 = w.iter().sum();
    if !(mass >= STARVATION_FLOOR) {
        return Err(Error::Starvation { survival: mass, t });
    }
    SubProbLaw::new(init.points().to_vec(), w)
}

/// `(ν_t, P(τ > t))` for a killed chain started from `init`.
pub fn conditional_law(
    gen: &TridiagGenerator,
    init: &DiscreteLaw,
    t: f64,
    tol: f64,
) -> Result<(DiscreteLaw, f64)> {
    let sub = evolve_killed(gen, init, t, tol)?;
    Ok((sub.conditioned(), sub.mass()))
}

/// Conditioned laws on an increasing time grid, renormalizing between
/// consecutive times so arbitrarily long horizons never starve.
pub fn conditional_laws_at(
    gen: &TridiagGenerator,
    init: &DiscreteLaw,
    times: &[f64],
    tol: f64,
) -> Result<Vec<DiscreteLaw>> {
    check_support(gen, init.points())?;
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("time grid must be nondecreasing".into()));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut law = init.clone();
    let mut now = 0.0;
    for &t in times {
        law = conditional_law(gen, &law, t - now, tol)?.0;
        now = t;
        out.push(law.clone());
    }
    Ok(out)
}

/// Laws of a conservative chain on an increasing time grid.
pub fn laws_at(gen: &TridiagGenerator, init: &DiscreteLaw, times: &[f64], tol: f64) -> Result<Vec<DiscreteLaw>> {
    if !gen.is_conservative() {
        return Err(Error::Domain("laws_at needs a conservative generator".into()));
    }
    conditional_laws_at(gen, init, times, tol)
}

/// `P_{m0}(τ > t)`.
pub fn survival_prob(gen: &TridiagGenerator, m0: f64, t: f64, tol: f64) -> Result<f64> {
    let k = gen.grid().position(m0)?;
    let init = DiscreteLaw::dirac_on_grid(gen.grid(), k);
    let w = expmv(gen, init.weights(), t, Side::Measure, tol)?;
    let mass: f64 = w.iter().map(|x| x.max(0.0)).sum();
    Ok(mass.min(1.0))
}

/// Outcome of the numerical Lyapunov check for the Doob semigroup.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    pub tau: f64,
    pub a0: f64,
    pub a_hat: f64,
    pub b_hat: f64,
    /// `V = g / h` on the killed grid.
    pub v: Vec<f64>,
    /// `P_τ V`.
    pub pv: Vec<f64>,
}

impl LyapunovReport {
    pub fn holds(&self) -> bool {
        self.a_hat < 1.0
    }
}

/// Reference contraction used to split `P_τ V ≤ a V + b/n`. Must exceed the
/// one-step contraction of the flow near `ε`, about 0.75 at `τ = 1`.
pub const DEFAULT_LYAPUNOV_A0: f64 = 0.9;

/// Checks `P_τ V ≤ a V + b/n` for the Doob semigroup with `V = g/h`.
pub fn verify_lyapunov(
    params: &ModelParams,
    gen: &TridiagGenerator,
    pack: &SpectralPack,
    tau: f64,
    a0: f64,
    tol: f64,
) -> Result<LyapunovReport> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    if !(a0 > 0.0 && a0 < 1.0) {
        return Err(Error::Domain(format!("reference a0 must lie in (0, 1), got {a0}")));
    }
    let doob = doob_transform(gen, pack)?;
    let pot = params.potential();
    let v: Vec<f64> = gen
        .grid()
        .points()
        .iter()
        .zip(&pack.h_n)
        .map(|(&m, &h)| pot.value(m) / h)
        .collect();
    let pv = expmv(&doob, &v, tau, Side::Function, tol)?;
    let nf = params.n() as f64;
    let excess = pv.iter().zip(&v).map(|(p, x)| p - a0 * x).fold(0.0, f64::max);
    let b_hat = nf * excess;
    let a_hat = pv
        .iter()
        .zip(&v)
        .filter(|(_, &x)| x > 0.0)
        .map(|(p, x)| (p - b_hat / nf) / x)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LyapunovReport { tau, a0, a_hat, b_hat, v, pv })
}

/// Grid positions of `K = [m+ - ω/√n, m+ + ω/√n]` in the killed grid.
pub fn doeblin_window(params: &ModelParams, gen: &TridiagGenerator, omega: f64) -> Result<Vec<usize>> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("omega must be positive, got {omega}")));
    }
    let half = omega / (params.n() as f64).sqrt();
    let m_plus = params.m_plus();
    let ks: Vec<usize> = gen
        .grid()
        .points()
        .iter()
        .enumerate()
        .filter(|(_, &m)| (m - m_plus).abs() <= half)
        .map(|(k, _)| k)
        .collect();
    if ks.is_empty() {
        return Err(Error::Domain(format!("window of half-width {half} around m+ holds no grid point")));
    }
    Ok(ks)
}

/// Mass of the largest common component of the killed kernels `δ_m M_τ`
/// over `m` in the Doeblin window.
pub fn verify_doeblin(
    params: &ModelParams,
    gen: &TridiagGenerator,
    tau: f64,
    omega: f64,
    tol: f64,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    let window = doeblin_window(params, gen, omega)?;
    let rows: Vec<Vec<f64>> = window
        .par_iter()
        .map(|&k| {
            let mut e = vec![0.0; gen.dim()];
            e[k] = 1.0;
            expmv(gen, &e, tau, Side::Measure, tol)
        })
        .collect::<Result<_>>()?;
    let c: f64 = (0..gen.dim())
        .map(|j| rows.iter().map(|r| r[j].max(0.0)).fold(f64::INFINITY, f64::min))
        .sum();
    Ok(c.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{killed_spectrum, PerronOptions};

    const EPS: f64 = 0.100001;

    fn params(n: usize) -> ModelParams {
        ModelParams::new(n, 1.2, EPS).unwrap()
    }

    #[test]
    fn zero_time_is_identity() {
        let gen = params(30).build_generator(true).unwrap();
        let v: Vec<f64> = (0..gen.dim()).map(|k| k as f64 * 0.1).collect();
        assert_eq!(expmv(&gen, &v, 0.0, Side::Function, 1e-12).unwrap(), v);
        assert!(expmv(&gen, &v, 1.0, Side::Function, 0.0).is_err());
        assert!(expmv(&gen, &[f64::NAN; 27], 1.0, Side::Function, 1e-12).is_err());
        assert!(expmv(&gen, &v[1..], 1.0, Side::Function, 1e-12).is_err());
    }

    #[test]
    fn conservative_flow_keeps_mass_and_constants() {
        let gen = params(40).build_generator(false).unwrap();
        let mut mu = vec![0.0; gen.dim()];
        mu[3] = 0.25;
        mu[30] = 0.75;
        let out = expmv(&gen, &mu, 7.5, Side::Measure, 1e-12).unwrap();
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let ones = vec![1.0; gen.dim()];
        let f = expmv(&gen, &ones, 7.5, Side::Function, 1e-12).unwrap();
        assert!(f.iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn duality_between_sides() {
        let gen = params(25).build_generator(true).unwrap();
        let len = gen.dim();
        let mu: Vec<f64> = (0..len).map(|k| 1.0 / (1.0 + k as f64)).collect();
        let f: Vec<f64> = (0..len).map(|k| (k as f64).cos()).collect();
        let left = expmv(&gen, &mu, 1.3, Side::Measure, 1e-13).unwrap();
        let right = expmv(&gen, &f, 1.3, Side::Function, 1e-13).unwrap();
        let a: f64 = left.iter().zip(&f).map(|(x, y)| x * y).sum();
        let b: f64 = mu.iter().zip(&right).map(|(x, y)| x * y).sum();
        assert!((a - b).abs() < 1e-11);
    }

    #[test]
    fn qsd_is_invariant_under_conditioning() {
        let p = params(100);
        let (gen, pack) = killed_spectrum(&p, &PerronOptions::default()).unwrap();
        let qsd = DiscreteLaw::on_grid(gen.grid(), pack.qsd.clone()).unwrap();
        for t in [0.5, 3.0, 20.0] {
            let (nu, surv) = conditional_law(&gen, &qsd, t, 1e-13).unwrap();
            let tv: f64 = nu.weights().iter().zip(&pack.qsd).map(|(a, b)| (a - b).abs()).sum();
            assert!(tv < 1e-10, "t={t} tv={tv}");
            let expected = (-pack.b_n * t).exp();
            assert!((surv - expected).abs() < 1e-8 * expected);
        }
    }

    #[test]
    fn conditioning_from_a_point_converges() {
        let p = params(100);
        let (gen, pack) = killed_spectrum(&p, &PerronOptions::default()).unwrap();
        let k = gen.grid().nearest_position(0.9);
        let init = DiscreteLaw::dirac_on_grid(gen.grid(), k);
        let times: Vec<f64> = (1..=40).map(f64::from).collect();
        let laws = conditional_laws_at(&gen, &init, &times, 1e-13).unwrap();
        let tvs: Vec<f64> = laws
            .iter()
            .map(|l| l.weights().iter().zip(&pack.qsd).map(|(a, b)| (a - b).abs()).sum())
            .collect();
        assert!(tvs.windows(2).all(|w| w[1] < w[0] || w[1] < 1e-11));
        assert!(tvs[39] < 1e-6, "{}", tvs[39]);
        let direct = conditional_law(&gen, &init, 17.0, 1e-13).unwrap().0;
        let tv: f64 = direct.weights().iter().zip(laws[16].weights()).map(|(a, b)| (a - b).abs()).sum();
        assert!(tv < 1e-10);
    }

    #[test]
    fn survival_is_monotone() {
        let p = params(60);
        let gen = p.build_generator(true).unwrap();
        let m0 = gen.grid().points()[5];
        assert_eq!(survival_prob(&gen, m0, 0.0, 1e-12).unwrap(), 1.0);
        let s: Vec<f64> = [0.1, 0.5, 1.0, 5.0, 20.0]
            .iter()
            .map(|&t| survival_prob(&gen, m0, t, 1e-12).unwrap())
            .collect();
        assert!(s.windows(2).all(|w| w[1] <= w[0]));
        assert!(s[4] > 0.0 && s[0] < 1.0);
        assert!(survival_prob(&gen, 0.05, 1.0, 1e-12).is_err());
    }

    #[test]
    fn starvation_is_reported() {
        let p = ModelParams::new(10, 1.05, 0.15).unwrap();
        let gen = p.build_generator(true).unwrap();
        let init = DiscreteLaw::dirac_on_grid(gen.grid(), 0);
        assert!(matches!(
            conditional_law(&gen, &init, 1e5, 1e-12),
            Err(Error::Starvation { .. })
        ));
    }

    #[test]
    fn lyapunov_holds_at_moderate_n() {
        let p = params(200);
        let (gen, pack) = killed_spectrum(&p, &PerronOptions::default()).unwrap();
        let rep = verify_lyapunov(&p, &gen, &pack, 1.0, DEFAULT_LYAPUNOV_A0, 1e-12).unwrap();
        assert!(rep.holds(), "a_hat = {}", rep.a_hat);
        assert!(rep.b_hat >= 0.0);
        let k = gen.grid().nearest_position(p.m_plus());
        let bound = 2.0 * (2.0 / 200.0_f64).powi(2) * p.potential().curvature(1.0);
        assert!(rep.v[k] <= bound);
        for (pv, v) in rep.pv.iter().zip(&rep.v) {
            assert!(*pv <= rep.a_hat * v + rep.b_hat / 200.0 + 1e-12);
        }
    }

    #[test]
    fn doeblin_bounds() {
        let p = params(100);
        let gen = p.build_generator(true).unwrap();
        let c = verify_doeblin(&p, &gen, 1.0, 2.0, 1e-12).unwrap();
        assert!(c > 0.0 && c < 1.0);
        let window = doeblin_window(&p, &gen, 2.0).unwrap();
        for &k in &window {
            let m = gen.grid().points()[k];
            assert!(c <= survival_prob(&gen, m, 1.0, 1e-12).unwrap() + 1e-12);
        }
        // a window holding a single grid point reduces to its survival
        let narrow = doeblin_window(&p, &gen, 0.05).unwrap();
        assert_eq!(narrow.len(), 1);
        let m = gen.grid().points()[narrow[0]];
        let single = verify_doeblin(&p, &gen, 1.0, 0.05, 1e-12).unwrap();
        assert!((single - survival_prob(&gen, m, 1.0, 1e-12).unwrap()).abs() < 1e-12);
        assert!(doeblin_window(&p, &gen, 0.001).is_err());
    }
}
