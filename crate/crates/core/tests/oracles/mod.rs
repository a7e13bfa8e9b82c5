//! Independent reference implementations used only by tests.

#![allow(dead_code)]

pub type Dense = Vec<Vec<f64>>;

pub fn identity(len: usize) -> Dense {
    (0..len).map(|i| (0..len).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let len = a.len();
    let inner = b.len();
    let cols = b[0].len();
    let mut out = vec![vec![0.0; cols]; len];
    for i in 0..len {
        for k in 0..inner {
            let aik = a[i][k];
            for j in 0..cols {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// `e^{A}` by Taylor series after scaling to norm ≤ 1/2, then squaring.
pub fn expm(a: &Dense) -> Dense {
    let len = a.len();
    let norm = a.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale /= 2.0;
        squarings += 1;
    }
    let scaled: Dense = a.iter().map(|r| r.iter().map(|x| x * scale).collect()).collect();
    let mut sum = identity(len);
    let mut term = identity(len);
    for k in 1..=30 {
        term = matmul(&term, &scaled);
        let inv = 1.0 / k as f64;
        term.iter_mut().flatten().for_each(|x| *x *= inv);
        for i in 0..len {
            for j in 0..len {
                sum[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        sum = matmul(&sum, &sum);
    }
    sum
}

pub fn scaled(a: &Dense, t: f64) -> Dense {
    a.iter().map(|r| r.iter().map(|x| x * t).collect()).collect()
}

pub fn row_times(v: &[f64], m: &Dense) -> Vec<f64> {
    (0..m[0].len()).map(|j| v.iter().zip(m).map(|(x, row)| x * row[j]).sum()).collect()
}

pub fn times_col(m: &Dense, v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

const PIVOT_EPS: f64 = 1e-12;

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    rhs: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|x| *x /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r && row[c] != 0.0 {
                let f = row[c];
                row.iter_mut().zip(&pivot_row).for_each(|(x, p)| *x -= f * p);
            }
        }
        self.basis[r] = c;
    }

    /// Bland's rule minimization of `cost · x` over columns `< allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: usize) {
        loop {
            let reduced = |j: usize| {
                cost[j] - self.rows.iter().zip(&self.basis).map(|(row, &b)| cost[b] * row[j]).sum::<f64>()
            };
            let Some(enter) = (0..allowed).find(|&j| reduced(j) < -1e-11) else {
                return;
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[enter] > PIVOT_EPS {
                    let ratio = row[self.rhs] / row[enter];
                    let better = match leave {
                        None => true,
                        Some((l, best)) => {
                            ratio < best - 1e-14 || (ratio <= best + 1e-14 && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let (r, _) = leave.expect("transport problems are bounded");
            self.pivot(r, enter);
        }
    }
}

/// `min c·x` subject to `A x = b`, `x ≥ 0`, by two-phase dense simplex.
pub fn simplex_min(a: &Dense, b: &[f64], c: &[f64]) -> f64 {
    let m = a.len();
    let n = c.len();
    let rhs = n + m;
    let rows = (0..m)
        .map(|i| {
            let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
            let mut row = vec![0.0; rhs + 1];
            for j in 0..n {
                row[j] = sign * a[i][j];
            }
            row[n + i] = 1.0;
            row[rhs] = sign * b[i];
            row
        })
        .collect();
    let mut tab = Tableau { rows, basis: (n..n + m).collect(), rhs };
    let mut phase1 = vec![0.0; rhs];
    phase1[n..].iter_mut().for_each(|x| *x = 1.0);
    tab.optimize(&phase1, rhs);
    for i in 0..m {
        if tab.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| tab.rows[i][j].abs() > 1e-9) {
                tab.pivot(i, j);
            }
        }
    }
    let mut phase2 = vec![0.0; rhs];
    phase2[..n].copy_from_slice(c);
    tab.optimize(&phase2, n);
    tab.rows.iter().zip(&tab.basis).map(|(row, &bj)| phase2[bj] * row[rhs]).sum()
}

/// Optimal transport cost between `(xs, a)` and `(ys, b)`.
pub fn transport_cost(xs: &[f64], a: &[f64], ys: &[f64], b: &[f64], cost: impl Fn(f64, f64) -> f64) -> f64 {
    let (p, q) = (xs.len(), ys.len());
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..p {
        let mut row = vec![0.0; p * q];
        (0..q).for_each(|j| row[i * q + j] = 1.0);
        rows.push(row);
        rhs.push(a[i]);
    }
    for j in 0..q {
        let mut row = vec![0.0; p * q];
        (0..p).for_each(|i| row[i * q + j] = 1.0);
        rows.push(row);
        rhs.push(b[j]);
    }
    let c: Vec<f64> = (0..p * q).map(|k| cost(xs[k / q], ys[k % q])).collect();
    simplex_min(&rows, &rhs, &c)
}

/// Perron pair of `[[-(u + d0), u], [d1, -d1]]`: `(b, h / max h, q / Σ q)`.
pub fn two_state_perron(u: f64, d0: f64, d1: f64) -> (f64, [f64; 2], [f64; 2]) {
    let trace = -(u + d0) - d1;
    let det = d0 * d1;
    let lam = (trace + (trace * trace - 4.0 * det).sqrt()) / 2.0;
    let h0 = u / (u + d0 + lam);
    let top = h0.max(1.0);
    let (q0, q1) = (d1, u + d0 + lam);
    (-lam, [h0 / top, 1.0 / top], [q0 / (q0 + q1), q1 / (q0 + q1)])
}
