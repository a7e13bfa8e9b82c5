//! Small fitting and confidence helpers.

/// Least-squares line `y = intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

pub fn line_fit(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let len = xs.len();
    if len < 2 || ys.len() != len {
        return None;
    }
    let nf = len as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LineFit { slope, intercept: my - slope * mx, r2, points: len })
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let nf = trials as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
    let half = z / (1.0 + z2 / nf) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// `f(x) ≥ f(y)` for every consecutive pair.
pub fn nonincreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0])
}

pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}
