//! Exact continuous-time path sampling.
//!
//! Every jump consumes exactly two uniforms from the replica stream: one for
//! the holding time and one for the direction. The full, killed and auxiliary
//! samplers therefore produce identical paths from a shared stream for as long
//! as their rates agree.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::law::DiscreteLaw;
use crate::model::{grid_point, ModelParams};

/// Deterministic per-replica stream: a pure function of `(seed, replica)`.
pub fn replica_stream(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    /// Keep the initial and final states only.
    EndpointsOnly,
    FullPath,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub replicas: usize,
    pub t_max: f64,
    pub record: Record,
}

impl SimConfig {
    pub fn new(seed: u64, replicas: usize, t_max: f64) -> Result<Self> {
        if replicas == 0 {
            return Err(Error::InvalidParams("replicas must be at least 1".into()));
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::InvalidParams(format!("t_max must be positive and finite, got {t_max}")));
        }
        Ok(Self { seed, replicas, t_max, record: Record::EndpointsOnly })
    }

    pub fn full_path(mut self) -> Self {
        self.record = Record::FullPath;
        self
    }

    pub fn stream(&self, replica: usize) -> ChaCha8Rng {
        replica_stream(self.seed, replica as u64)
    }
}

/// A sampled path. `times[k]` is the epoch at which `states[k]` was entered;
/// `times[0] = 0`. In endpoints-only mode the vectors hold the initial state
/// and the state at the end of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub death_time: Option<f64>,
    /// Number of jumps performed, recorded or not.
    pub jumps: usize,
}

impl Trajectory {
    pub fn initial(&self) -> f64 {
        self.states[0]
    }

    pub fn last(&self) -> f64 {
        *self.states.last().expect("trajectory is never empty")
    }

    /// State at time `t` (right-continuous); full paths only.
    pub fn state_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        self.states[k.saturating_sub(1)]
    }

    pub fn survived(&self, t: f64) -> bool {
        self.death_time.is_none_or(|d| d > t)
    }

    /// `∫_{t0}^{t1} m_s ds / (t1 - t0)` over a full path.
    pub fn time_average(&self, t0: f64, t1: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..self.states.len() {
            let start = self.times[k].max(t0);
            let end = self.times.get(k + 1).copied().unwrap_or(f64::INFINITY).min(t1);
            if end > start {
                total += self.states[k] * (end - start);
            }
        }
        total / (t1 - t0)
    }
}

/// Raw output of the index-level simulator.
struct IndexRun {
    times: Vec<f64>,
    states: Vec<usize>,
    final_state: usize,
    death_time: Option<f64>,
    jumps: usize,
}

/// Simulates a birth-death chain on indices up to `t_max`.
///
/// `death_below`: the first time the index drops below it is the death time;
/// with `stop_at_death` the run ends there and the dead state is not recorded.
fn run_chain<R: Rng + ?Sized>(
    rng: &mut R,
    start: usize,
    t_max: f64,
    record: Record,
    death_below: Option<usize>,
    stop_at_death: bool,
    mut rates: impl FnMut(usize) -> Result<(f64, f64)>,
) -> Result<IndexRun> {
    let mut times = vec![0.0];
    let mut states = vec![start];
    let mut i = start;
    let mut now = 0.0;
    let mut jumps = 0;
    let mut death_time = match death_below {
        Some(k) if start < k => Some(0.0),
        _ => None,
    };
    if death_time.is_some() && stop_at_death {
        return Err(Error::Domain("killed chain started inside the killing region".into()));
    }
    loop {
        let (up, down) = rates(i)?;
        let total = up + down;
        if !(total > 0.0) {
            break;
        }
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        now += -(1.0 - u).ln() / total;
        if now > t_max {
            break;
        }
        let next = if v * total < up { i + 1 } else { i - 1 };
        jumps += 1;
        if death_time.is_none() && death_below.is_some_and(|k| next < k) {
            death_time = Some(now);
            if stop_at_death {
                break;
            }
        }
        i = next;
        if record == Record::FullPath {
            times.push(now);
            states.push(i);
        }
    }
    if record == Record::EndpointsOnly {
        let end = if stop_at_death { death_time.unwrap_or(t_max) } else { t_max };
        times.push(end.min(t_max));
        states.push(i);
    }
    Ok(IndexRun { times, states, final_state: i, death_time, jumps })
}

fn into_trajectory(n: usize, run: IndexRun) -> Trajectory {
    Trajectory {
        n,
        times: run.times,
        states: run.states.into_iter().map(|i| grid_point(n, i)).collect(),
        death_time: run.death_time,
        jumps: run.jumps,
    }
}

/// Path of the free chain; `death_time` marks the first entrance in `[-1, ε]`.
pub fn sample_path<R: Rng + ?Sized>(
    params: &ModelParams,
    m0: f64,
    t_max: f64,
    record: Record,
    rng: &mut R,
) -> Result<Trajectory> {
    let start = params.index_of(m0)?;
    let first = params.killed_first_index();
    let run = run_chain(rng, start, t_max, record, Some(first), false, |i| Ok(params.rates_at_index(i)))?;
    Ok(into_trajectory(params.n(), run))
}

/// Path of the chain killed at its first entrance in `[-1, ε]`.
pub fn sample_killed<R: Rng + ?Sized>(
    params: &ModelParams,
    m0: f64,
    t_max: f64,
    record: Record,
    rng: &mut R,
) -> Result<Trajectory> {
    let start = params.index_of(m0)?;
    let first = params.killed_first_index();
    if start < first {
        return Err(Error::Domain(format!("killed chain needs m0 > ε, got {m0}")));
    }
    let run = run_chain(rng, start, t_max, record, Some(first), true, |i| Ok(params.rates_at_index(i)))?;
    Ok(into_trajectory(params.n(), run))
}

/// Path of the auxiliary chain with rates modified below `ε`; stays in `[0, 1]`.
pub fn sample_auxiliary<R: Rng + ?Sized>(
    params: &ModelParams,
    m0: f64,
    t_max: f64,
    record: Record,
    rng: &mut R,
) -> Result<Trajectory> {
    let start = params.index_of(m0)?;
    let floor = params.auxiliary_first_index();
    if start < floor {
        return Err(Error::Domain(format!("auxiliary chain lives on [0, 1], got m0 = {m0}")));
    }
    let run = run_chain(rng, start, t_max, record, None, false, |i| params.modified_rates_at_index(i))?;
    debug_assert!(run.states.iter().all(|&i| i >= floor));
    if run.final_state < floor {
        return Err(Error::Property("auxiliary chain left [0, 1]".into()));
    }
    Ok(into_trajectory(params.n(), run))
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub survivors: usize,
    pub replicas: usize,
}

/// Final index of each killed replica at time `t`, `None` if it died.
pub fn killed_endpoints(params: &ModelParams, m0: f64, t: f64, cfg: &SimConfig) -> Result<Vec<Option<usize>>> {
    let start = params.index_of(m0)?;
    let first = params.killed_first_index();
    if start < first {
        return Err(Error::Domain(format!("killed chain needs m0 > ε, got {m0}")));
    }
    (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = cfg.stream(r);
            let run = run_chain(&mut rng, start, t, Record::EndpointsOnly, Some(first), true, |i| {
                Ok(params.rates_at_index(i))
            })?;
            Ok(run.death_time.is_none().then_some(run.final_state))
        })
        .collect()
}

/// Final index of each free replica at time `t`.
pub fn free_endpoints(params: &ModelParams, m0: f64, t: f64, cfg: &SimConfig) -> Result<Vec<usize>> {
    let start = params.index_of(m0)?;
    (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = cfg.stream(r);
            let run = run_chain(&mut rng, start, t, Record::EndpointsOnly, None, false, |i| {
                Ok(params.rates_at_index(i))
            })?;
            Ok(run.final_state)
        })
        .collect()
}

/// Empirical law of the free chain at time `t` on the full grid.
pub fn empirical_law(params: &ModelParams, m0: f64, t: f64, cfg: &SimConfig) -> Result<DiscreteLaw> {
    let n = params.n();
    let mut counts = vec![0.0; n + 1];
    for i in free_endpoints(params, m0, t, cfg)? {
        counts[i] += 1.0;
    }
    DiscreteLaw::normalized(params.full_grid().points().to_vec(), counts)
}

/// `E_{m0}(f(m_t) | τ > t)` by keeping the surviving replicas.
pub fn mc_conditional_expectation(
    params: &ModelParams,
    m0: f64,
    f: impl Fn(f64) -> f64 + Sync,
    t: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    if !(t >= 0.0 && t <= cfg.t_max) {
        return Err(Error::Domain(format!("t = {t} outside [0, t_max = {}]", cfg.t_max)));
    }
    let n = params.n();
    let ends = killed_endpoints(params, m0, t, cfg)?;
    let values: Vec<f64> = ends.iter().flatten().map(|&i| f(grid_point(n, i))).collect();
    if values.is_empty() {
        return Err(Error::NoSurvivors { t, replicas: cfg.replicas });
    }
    let (estimate, stderr) = mean_and_stderr(&values);
    Ok(McEstimate { estimate, stderr, survivors: values.len(), replicas: cfg.replicas })
}

/// Sample mean and `std / √len`, accumulated in order.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let len = values.len() as f64;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &x) in values.iter().enumerate() {
        let d = x - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (x - mean);
    }
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = m2 / (len - 1.0);
    (mean, (var / len).sqrt())
}

/// Geometry and rate envelope of the three-process merging construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSetup {
    pub n: usize,
    pub omega: f64,
    /// Initial lower and upper indices.
    pub lower0: usize,
    pub upper0: usize,
    /// Indices of the start window `K`.
    pub window: (usize, usize),
    /// Indices of the envelope window `K̄` (three times wider).
    pub envelope: (usize, usize),
    pub lambda_c: f64,
    pub r: f64,
    pub lambda_inf: f64,
    pub lambda_sup: f64,
}

/// Relative inflation applied to the minimal envelope radius.
pub const ENVELOPE_INFLATION: f64 = 1.01;

fn window_indices(params: &ModelParams, half: f64) -> Result<(usize, usize)> {
    let n = params.n();
    let m_plus = params.m_plus();
    let first = params.killed_first_index();
    let idx: Vec<usize> = (first..=n).filter(|&i| (grid_point(n, i) - m_plus).abs() <= half).collect();
    match (idx.first(), idx.last()) {
        (Some(&a), Some(&b)) => Ok((a, b)),
        _ => Err(Error::Coupling(format!("no grid point within {half} of m+"))),
    }
}

impl CouplingSetup {
    pub fn new(params: &ModelParams, omega: f64) -> Result<Self> {
        params.require_metastable()?;
        if !(omega > 0.0) {
            return Err(Error::Domain(format!("omega must be positive, got {omega}")));
        }
        let n = params.n();
        let root = (n as f64).sqrt();
        let window = window_indices(params, omega / root)?;
        let envelope = window_indices(params, 3.0 * omega / root)?;
        let lower0 = window.0;
        let mut upper0 = window.1;
        if (upper0 - lower0) % 2 == 1 {
            upper0 += 1;
        }
        if upper0 > envelope.1 || upper0 > n {
            return Err(Error::Coupling("aligned upper start leaves the envelope window".into()));
        }
        let m_plus = params.m_plus();
        let lambda_c = n as f64 * (1.0 + m_plus) / 2.0 * (-params.beta() * m_plus).exp();
        let spread = (envelope.0..=envelope.1)
            .flat_map(|i| {
                let (up, down) = params.rates_at_index(i);
                [(up / lambda_c - 1.0).abs(), (down / lambda_c - 1.0).abs()]
            })
            .fold(0.0, f64::max);
        let r = ENVELOPE_INFLATION * root * spread;
        if r >= root {
            return Err(Error::Coupling(format!("envelope radius {r} leaves no positive lower rate")));
        }
        Ok(Self {
            n,
            omega,
            lower0,
            upper0,
            window,
            envelope,
            lambda_c,
            r,
            lambda_inf: lambda_c * (1.0 - r / root),
            lambda_sup: lambda_c * (1.0 + r / root),
        })
    }

    pub fn in_envelope(&self, i: usize) -> bool {
        (self.envelope.0..=self.envelope.1).contains(&i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleOutcome {
    /// Lower and upper agree at the horizon and the pair never left the envelope.
    pub merged: bool,
    /// The pair left the envelope before merging.
    pub exit_before_merge: bool,
    pub merge_time: Option<f64>,
    pub ordering_violated: bool,
    /// Once merged, the three coordinates stayed equal.
    pub sticky: bool,
}

fn residual(rate: f64, what: &str) -> Result<f64> {
    if rate < 0.0 {
        return Err(Error::Coupling(format!("negative residual rate {rate} for {what}")));
    }
    Ok(rate)
}

/// One run of the ordered triple started from `(lower0, m0, upper0)` up to `t`.
pub fn sample_triple_coupling<R: Rng + ?Sized>(
    params: &ModelParams,
    setup: &CouplingSetup,
    m0: f64,
    t: f64,
    rng: &mut R,
) -> Result<TripleOutcome> {
    let middle0 = params.index_of(m0)?;
    if !(setup.window.0..=setup.window.1).contains(&middle0) {
        return Err(Error::Coupling(format!("m0 = {m0} is outside the start window")));
    }
    let (inf, sup) = (setup.lambda_inf, setup.lambda_sup);
    let (mut lo, mut mid, mut hi) = (setup.lower0, middle0, setup.upper0);
    let mut now = 0.0;
    let mut merge_time = None;
    let mut ordering_violated = false;
    let mut sticky = true;
    let mut exit = None;
    loop {
        // (rate, Δlower, Δmiddle, Δupper)
        let moves: [(f64, i8, i8, i8); 4] = if lo == hi {
            let (up, down) = params.rates_at_index(lo);
            [(up, 1, 1, 1), (down, -1, -1, -1), (0.0, 0, 0, 0), (0.0, 0, 0, 0)]
        } else if mid == hi {
            let (up, down) = params.rates_at_index(hi);
            [
                (up, -1, 1, 1),
                (inf, 1, -1, -1),
                (residual(down - inf, "middle down at upper")?, 0, -1, 0),
                (residual(sup - up, "upper up")?, -1, 0, 1),
            ]
        } else if mid == lo {
            let (up, down) = params.rates_at_index(lo);
            [
                (down, -1, -1, 1),
                (inf, 1, 1, -1),
                (residual(up - inf, "middle up at lower")?, 0, 1, 0),
                (residual(sup - down, "lower down")?, -1, 0, 1),
            ]
        } else {
            let (up, down) = params.rates_at_index(mid);
            [(sup, -1, 0, 1), (inf, 1, 0, -1), (down, 0, -1, 0), (up, 0, 1, 0)]
        };
        let total: f64 = moves.iter().map(|m| m.0).sum();
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        now += -(1.0 - u).ln() / total;
        if now > t {
            break;
        }
        let mut pick = v * total;
        let mut chosen = moves[3];
        for m in moves {
            if pick < m.0 {
                chosen = m;
                break;
            }
            pick -= m.0;
        }
        let was_merged = lo == hi;
        lo = (lo as isize + chosen.1 as isize) as usize;
        mid = (mid as isize + chosen.2 as isize) as usize;
        hi = (hi as isize + chosen.3 as isize) as usize;
        if !(lo <= mid && mid <= hi) {
            ordering_violated = true;
        }
        if was_merged && !(lo == mid && mid == hi) {
            sticky = false;
        }
        if !was_merged && lo == hi {
            merge_time = Some(now);
        }
        if !setup.in_envelope(lo) || !setup.in_envelope(hi) {
            exit = Some(now);
            break;
        }
    }
    let exit_before_merge = exit.is_some() && merge_time.is_none();
    let merged = lo == hi && exit.is_none();
    Ok(TripleOutcome { merged, exit_before_merge, merge_time, ordering_violated, sticky })
}

/// Aggregate of many coupling runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CouplingTally {
    pub replicas: usize,
    pub merged: usize,
    pub exit_before_merge: usize,
    pub ordering_violations: usize,
    pub stickiness_violations: usize,
}

impl CouplingTally {
    pub fn frequency(&self) -> f64 {
        self.merged as f64 / self.replicas as f64
    }
}

pub fn coupling_tally(
    params: &ModelParams,
    setup: &CouplingSetup,
    m0: f64,
    t: f64,
    cfg: &SimConfig,
) -> Result<CouplingTally> {
    let outcomes: Vec<TripleOutcome> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| sample_triple_coupling(params, setup, m0, t, &mut cfg.stream(r)))
        .collect::<Result<_>>()?;
    let mut tally = CouplingTally {
        replicas: cfg.replicas,
        merged: 0,
        exit_before_merge: 0,
        ordering_violations: 0,
        stickiness_violations: 0,
    };
    for o in outcomes {
        tally.merged += o.merged as usize;
        tally.exit_before_merge += o.exit_before_merge as usize;
        tally.ordering_violations += o.ordering_violated as usize;
        tally.stickiness_violations += (!o.sticky) as usize;
    }
    Ok(tally)
}
