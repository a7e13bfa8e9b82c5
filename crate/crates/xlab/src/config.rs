//! Flat `key = value` configuration with `#` comments.

use std::fmt::Write as _;

use crate::error::{Result, XlabError};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub n: usize,
    pub beta: f64,
    pub eps: f64,
    pub eta: f64,
    pub seed: u64,
    pub tol: f64,
    pub out: String,
    pub m0: f64,
    pub t: f64,
    pub step: f64,
    pub replicas: usize,
    pub tau: f64,
    pub a0: f64,
    pub omega_doeblin: f64,
    pub omega_coupling: f64,
    pub sweep: Vec<usize>,
    pub qsd_sweep: Vec<usize>,
    pub mid_sweep: Vec<usize>,
    pub tv_horizon: f64,
    pub poc_horizon: f64,
    pub counter_n: usize,
    pub counter_m0: f64,
    pub coupling_sweep: Vec<usize>,
    pub coupling_replicas: usize,
    pub coupling_t: f64,
    pub mc_n: usize,
    pub mc_pairs: usize,
    pub mc_replicas: usize,
    pub law_replicas: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            n: 100,
            beta: 1.2,
            // 0.1 itself is a grid point whenever 20 divides n
            eps: 0.100001,
            eta: 0.4,
            seed: 20240917,
            tol: 1e-12,
            out: "results".into(),
            m0: 0.9,
            t: 5.0,
            step: 1e-3,
            replicas: 20_000,
            tau: 1.0,
            a0: 0.9,
            omega_doeblin: 2.0,
            omega_coupling: 1.0,
            sweep: vec![50, 100, 200, 400, 800],
            qsd_sweep: vec![100, 200, 400, 800],
            mid_sweep: vec![100, 200, 400],
            tv_horizon: 60.0,
            poc_horizon: 100.0,
            counter_n: 20,
            counter_m0: 0.5,
            coupling_sweep: vec![400, 1600],
            coupling_replicas: 20_000,
            coupling_t: 1.0,
            mc_n: 100,
            mc_pairs: 10,
            mc_replicas: 20_000,
            law_replicas: 200_000,
        }
    }
}

pub const KEYS: &[&str] = &[
    "n", "beta", "eps", "eta", "seed", "tol", "out", "m0", "t", "step", "replicas", "tau", "a0",
    "omega_doeblin", "omega_coupling", "sweep", "qsd_sweep", "mid_sweep", "tv_horizon", "poc_horizon",
    "counter_n", "counter_m0", "coupling_sweep", "coupling_replicas", "coupling_t", "mc_n", "mc_pairs",
    "mc_replicas", "law_replicas",
];

fn bad(key: &str, msg: impl Into<String>) -> XlabError {
    XlabError::BadValue { key: key.into(), msg: msg.into() }
}

fn parse_f64(key: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw.parse().map_err(|_| bad(key, format!("`{raw}` is not a number")))?;
    if !v.is_finite() {
        return Err(bad(key, "must be finite"));
    }
    Ok(v)
}

fn parse_positive(key: &str, raw: &str) -> Result<f64> {
    let v = parse_f64(key, raw)?;
    if v <= 0.0 {
        return Err(bad(key, "must be positive"));
    }
    Ok(v)
}

fn parse_count(key: &str, raw: &str) -> Result<usize> {
    let v: usize = raw.parse().map_err(|_| bad(key, format!("`{raw}` is not a nonnegative integer")))?;
    if v == 0 {
        return Err(bad(key, "must be at least 1"));
    }
    Ok(v)
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<usize>> {
    let list = raw
        .split(',')
        .map(|s| parse_count(key, s.trim()))
        .collect::<Result<Vec<_>>>()?;
    if list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad(key, "sweep must be strictly increasing"));
    }
    Ok(list)
}

fn join(list: &[usize]) -> String {
    list.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl Config {
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let raw = raw.trim();
        match key {
            "n" => self.n = parse_count(key, raw)?,
            "beta" => self.beta = parse_positive(key, raw)?,
            "eps" => self.eps = parse_positive(key, raw)?,
            "eta" => self.eta = parse_positive(key, raw)?,
            "seed" => self.seed = raw.parse().map_err(|_| bad(key, format!("`{raw}` is not a u64")))?,
            "tol" => self.tol = parse_positive(key, raw)?,
            "out" => {
                if raw.is_empty() {
                    return Err(bad(key, "empty path"));
                }
                self.out = raw.to_string()
            }
            "m0" => self.m0 = parse_f64(key, raw)?,
            "t" => self.t = parse_positive(key, raw)?,
            "step" => self.step = parse_positive(key, raw)?,
            "replicas" => self.replicas = parse_count(key, raw)?,
            "tau" => self.tau = parse_positive(key, raw)?,
            "a0" => self.a0 = parse_positive(key, raw)?,
            "omega_doeblin" => self.omega_doeblin = parse_positive(key, raw)?,
            "omega_coupling" => self.omega_coupling = parse_positive(key, raw)?,
            "sweep" => self.sweep = parse_list(key, raw)?,
            "qsd_sweep" => self.qsd_sweep = parse_list(key, raw)?,
            "mid_sweep" => self.mid_sweep = parse_list(key, raw)?,
            "tv_horizon" => self.tv_horizon = parse_positive(key, raw)?,
            "poc_horizon" => self.poc_horizon = parse_positive(key, raw)?,
            "counter_n" => self.counter_n = parse_count(key, raw)?,
            "counter_m0" => self.counter_m0 = parse_f64(key, raw)?,
            "coupling_sweep" => self.coupling_sweep = parse_list(key, raw)?,
            "coupling_replicas" => self.coupling_replicas = parse_count(key, raw)?,
            "coupling_t" => self.coupling_t = parse_positive(key, raw)?,
            "mc_n" => self.mc_n = parse_count(key, raw)?,
            "mc_pairs" => self.mc_pairs = parse_count(key, raw)?,
            "mc_replicas" => self.mc_replicas = parse_count(key, raw)?,
            "law_replicas" => self.law_replicas = parse_count(key, raw)?,
            other => return Err(XlabError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "n" => self.n.to_string(),
            "beta" => self.beta.to_string(),
            "eps" => self.eps.to_string(),
            "eta" => self.eta.to_string(),
            "seed" => self.seed.to_string(),
            "tol" => self.tol.to_string(),
            "out" => self.out.clone(),
            "m0" => self.m0.to_string(),
            "t" => self.t.to_string(),
            "step" => self.step.to_string(),
            "replicas" => self.replicas.to_string(),
            "tau" => self.tau.to_string(),
            "a0" => self.a0.to_string(),
            "omega_doeblin" => self.omega_doeblin.to_string(),
            "omega_coupling" => self.omega_coupling.to_string(),
            "sweep" => join(&self.sweep),
            "qsd_sweep" => join(&self.qsd_sweep),
            "mid_sweep" => join(&self.mid_sweep),
            "tv_horizon" => self.tv_horizon.to_string(),
            "poc_horizon" => self.poc_horizon.to_string(),
            "counter_n" => self.counter_n.to_string(),
            "counter_m0" => self.counter_m0.to_string(),
            "coupling_sweep" => join(&self.coupling_sweep),
            "coupling_replicas" => self.coupling_replicas.to_string(),
            "coupling_t" => self.coupling_t.to_string(),
            "mc_n" => self.mc_n.to_string(),
            "mc_pairs" => self.mc_pairs.to_string(),
            "mc_replicas" => self.mc_replicas.to_string(),
            "law_replicas" => self.law_replicas.to_string(),
            _ => return None,
        })
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| XlabError::Config { line: k + 1, msg: format!("expected `key = value`, got `{body}`") })?;
            self.set(key.trim(), value).map_err(|e| XlabError::Config { line: k + 1, msg: e.to_string() })?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| bad(pair, "override must look like key=value"))?;
        self.set(key.trim(), value)
    }

    /// Every key with its current value, in the file format.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips() {
        let mut cfg = Config::default();
        cfg.set("sweep", "10, 20,40").unwrap();
        cfg.set("beta", "1.5").unwrap();
        let mut back = Config::default();
        back.apply_text(&cfg.dump()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.sweep, vec![10, 20, 40]);
    }

    #[test]
    fn rejects_bad_input_with_line_numbers() {
        let mut cfg = Config::default();
        let err = cfg.apply_text("# header\nbeta = 1.3\nnonsense\n").unwrap_err();
        assert!(matches!(err, XlabError::Config { line: 3, .. }));
        assert_eq!(cfg.beta, 1.3);
        assert!(matches!(cfg.apply_text("n = -4"), Err(XlabError::Config { line: 1, .. })));
        assert!(cfg.apply_override("colour=red").is_err());
        assert!(cfg.apply_override("sweep=4,2").is_err());
        assert!(cfg.apply_override("replicas=0").is_err());
        cfg.apply_override("seed=99").unwrap();
        assert_eq!(cfg.seed, 99);
    }
}
