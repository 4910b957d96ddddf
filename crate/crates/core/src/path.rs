//! Candidate body trajectories on a uniform time grid.

use crate::error::{Error, Result};

/// Body velocity `W` (piecewise linear) and position `X` (its exact
/// integral, piecewise quadratic) on `t_i = i Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyPath {
    dt: f64,
    w: Vec<f64>,
    x: Vec<f64>,
    /// `|W_{i+1} − W_i| / Δt` per cell.
    slopes: Vec<f64>,
    range_max: Vec<Vec<f64>>,
}

impl BodyPath {
    pub fn from_velocities(dt: f64, w: Vec<f64>) -> Self {
        assert!(dt > 0.0 && w.len() >= 2, "path needs dt > 0 and two nodes");
        let mut x = Vec::with_capacity(w.len());
        x.push(0.0);
        for i in 1..w.len() {
            let prev = x[i - 1];
            x.push(prev + 0.5 * dt * (w[i - 1] + w[i]));
        }
        let slopes: Vec<f64> = w.windows(2).map(|p| (p[1] - p[0]).abs() / dt).collect();
        let range_max = sparse_table(&slopes);
        Self {
            dt,
            w,
            x,
            slopes,
            range_max,
        }
    }

    /// Samples `f` at the grid nodes `0, Δt, …, t_end`.
    pub fn from_fn(dt: f64, t_end: f64, f: impl Fn(f64) -> f64) -> Self {
        let n = (t_end / dt).round() as usize;
        Self::from_velocities(dt, (0..=n).map(|i| f(i as f64 * dt)).collect())
    }

    pub fn constant(dt: f64, t_end: f64, w: f64) -> Self {
        Self::from_fn(dt, t_end, |_| w)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.dt * (self.w.len() - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.dt * i as f64
    }

    pub fn velocities(&self) -> &[f64] {
        &self.w
    }

    pub fn positions(&self) -> &[f64] {
        &self.x
    }

    pub fn w_node(&self, i: usize) -> f64 {
        self.w[i]
    }

    pub fn x_node(&self, i: usize) -> f64 {
        self.x[i]
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.w.len() - 1;
        let pos = (t / self.dt).max(0.0);
        let i = (pos.floor() as usize).min(n - 1);
        (i, t - self.time(i))
    }

    pub fn check_span(&self, t: f64) -> Result<()> {
        if t < 0.0 || t > self.t_end() * (1.0 + 1e-12) {
            return Err(Error::OutOfSpan { t, end: self.t_end() });
        }
        Ok(())
    }

    #[inline]
    pub fn w(&self, t: f64) -> f64 {
        let (i, s) = self.locate(t);
        self.w[i] + (self.w[i + 1] - self.w[i]) * s / self.dt
    }

    #[inline]
    pub fn x(&self, t: f64) -> f64 {
        let (i, s) = self.locate(t);
        self.x[i] + self.w[i] * s + 0.5 * (self.w[i + 1] - self.w[i]) * s * s / self.dt
    }

    /// Global Lipschitz constant of `W`.
    pub fn lipschitz(&self) -> f64 {
        self.slopes.iter().cloned().fold(0.0, f64::max)
    }

    /// Largest `|Ẇ|` over `[a, b]`.
    pub fn lipschitz_on(&self, a: f64, b: f64) -> f64 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (i, _) = self.locate(lo.max(0.0));
        let (j, _) = self.locate(hi.min(self.t_end()));
        range_query(&self.range_max, i, j)
    }

    /// Smallest and largest mean velocity `(X(t) − X(τ))/(t − τ)` over
    /// `τ ∈ [0, t)`, sampled at grid nodes and including the limit `W(t)`.
    pub fn mean_velocity_range(&self, t: f64) -> (f64, f64) {
        let wt = self.w(t);
        let xt = self.x(t);
        let mut lo = wt;
        let mut hi = wt;
        let (i, _) = self.locate(t);
        for k in 0..=i {
            let tau = self.time(k);
            if t - tau <= 0.0 {
                continue;
            }
            let m = (xt - self.x[k]) / (t - tau);
            lo = lo.min(m);
            hi = hi.max(m);
        }
        (lo, hi)
    }

    /// Bounds on the mean velocity over all `τ ∈ [0, t)`, not just grid
    /// nodes. Within a cell `|d⟨W⟩/dτ| = |⟨W⟩ − W(τ)| / (t − τ)`, which gives
    /// a per-cell pad; the last cell uses the local Lipschitz constant.
    pub fn mean_velocity_bounds(&self, t: f64) -> (f64, f64) {
        let wt = self.w(t);
        let xt = self.x(t);
        let (i, _) = self.locate(t);
        let dt = self.dt;
        let mean = |k: usize| (xt - self.x[k]) / (t - self.time(k));
        let mut lo = wt;
        let mut hi = wt;
        for k in 0..=i {
            let ta = self.time(k);
            if t - ta <= 0.0 {
                continue;
            }
            let tb = (ta + dt).min(t);
            let lip = self.slopes[k.min(self.slopes.len() - 1)];
            let ma = mean(k);
            let pad = if t - tb <= 0.0 {
                lip * (t - ta)
            } else {
                let mb = if k < self.w.len() - 1 && self.time(k + 1) < t { mean(k + 1) } else { wt };
                let slack = (ma - self.w[k]).abs().max((mb - self.w(tb)).abs()) + 2.0 * lip * dt;
                (tb - ta) * slack / (t - tb)
            };
            lo = lo.min(ma - pad);
            hi = hi.max(ma + pad);
        }
        (lo, hi)
    }

    /// Same velocities on a grid refined by an integer factor.
    pub fn refined(&self, factor: usize) -> Self {
        let n = self.w.len() - 1;
        let mut w = Vec::with_capacity(n * factor + 1);
        for i in 0..n {
            for k in 0..factor {
                let s = k as f64 / factor as f64;
                w.push(self.w[i] * (1.0 - s) + self.w[i + 1] * s);
            }
        }
        w.push(self.w[n]);
        Self::from_velocities(self.dt / factor as f64, w)
    }

    /// Keeps the nodes before `from` and appends `values`.
    pub fn with_tail(&self, from: usize, values: &[f64]) -> Self {
        let mut w = self.w[..from].to_vec();
        w.extend_from_slice(values);
        Self::from_velocities(self.dt, w)
    }
}

fn sparse_table(v: &[f64]) -> Vec<Vec<f64>> {
    let mut table = vec![v.to_vec()];
    let mut len = 1;
    while 2 * len <= v.len() {
        let prev = table.last().expect("non-empty table");
        let row: Vec<f64> = (0..=v.len() - 2 * len)
            .map(|i| prev[i].max(prev[i + len]))
            .collect();
        table.push(row);
        len *= 2;
    }
    table
}

fn range_query(table: &[Vec<f64>], i: usize, j: usize) -> f64 {
    if table[0].is_empty() {
        return 0.0;
    }
    let j = j.min(table[0].len() - 1);
    let i = i.min(j);
    let len = j - i + 1;
    let k = usize::BITS as usize - 1 - len.leading_zeros() as usize;
    table[k][i].max(table[k][j + 1 - (1 << k)])
}
