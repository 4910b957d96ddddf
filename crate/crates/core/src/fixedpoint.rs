//! Self-consistent body velocity: the Picard map `W ↦ V_W`, a direct
//! time-marching solver, envelope fitting and the linear ODE decay bound.

use std::str::FromStr;

use crate::boundary::{force_schedule, march_boundary_density, BoundaryMarch, MarchSettings};
use crate::error::{Error, Result};
use crate::fields::ModelConfig;
use crate::forces::{ForceBreakdown, ForceModel};
use crate::path::BodyPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    Picard,
    Direct,
}

impl SolverMode {
    pub fn name(self) -> &'static str {
        match self {
            SolverMode::Picard => "picard",
            SolverMode::Direct => "direct",
        }
    }
}

impl FromStr for SolverMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "picard" => Ok(SolverMode::Picard),
            "direct" => Ok(SolverMode::Direct),
            other => Err(Error::Precondition(format!("unknown solver mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub dt: f64,
    pub t_end: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub mode: SolverMode,
    pub march: MarchSettings,
    /// Force nodes at every grid point up to this time.
    pub dense_until: f64,
    /// Later force-node spacing as a fraction of elapsed time.
    pub stride_ratio: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            dt: 0.05,
            t_end: 2000.0,
            tol: 1e-12,
            max_iter: 30,
            mode: SolverMode::Picard,
            march: MarchSettings::default(),
            dense_until: 10.0,
            stride_ratio: 0.02,
        }
    }
}

impl SolverSettings {
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn schedule(&self) -> Vec<usize> {
        force_schedule(&BodyPath::constant(self.dt, self.t_end, 0.0), self.dense_until, self.stride_ratio)
    }
}

/// Threshold on `|V∞ − W|` below which the rate uses the analytic limit.
pub const RATE_SINGULARITY: f64 = 1e-8;

/// `b = (E − F₀₀(W)) / (V∞ − W)`, or `limit` close to equilibrium.
pub fn picard_rate(e: f64, v_inf: f64, w: f64, f00_w: f64, limit: f64) -> f64 {
    if (v_inf - w).abs() < RATE_SINGULARITY {
        limit
    } else {
        (e - f00_w) / (v_inf - w)
    }
}

/// RK4 on the uniform grid for `dV/dt = b(t)(V∞ − V) + s(t)`. `b` and `s`
/// are sampled at nodes and midpoints: entry `2i` is `t_i`, `2i+1` is the
/// midpoint of step `i`.
pub fn integrate_linear(dt: f64, v0: f64, v_inf: f64, b: &[f64], s: &[f64]) -> Vec<f64> {
    let n = (b.len() - 1) / 2;
    let mut v = Vec::with_capacity(n + 1);
    v.push(v0);
    for i in 0..n {
        let (b0, bm, b1) = (b[2 * i], b[2 * i + 1], b[2 * i + 2]);
        let (s0, sm, s1) = (s[2 * i], s[2 * i + 1], s[2 * i + 2]);
        let y = v[i];
        let k1 = b0 * (v_inf - y) + s0;
        let k2 = bm * (v_inf - (y + 0.5 * dt * k1)) + sm;
        let k3 = bm * (v_inf - (y + 0.5 * dt * k2)) + sm;
        let k4 = b1 * (v_inf - (y + dt * k3)) + s1;
        v.push(y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
    v
}

/// Piecewise-linear interpolation of `(H, R_W)` between force nodes.
#[derive(Debug, Clone)]
pub struct CorrectionTrack {
    t: Vec<f64>,
    h: Vec<f64>,
    rw: Vec<f64>,
}

impl CorrectionTrack {
    pub fn new(nodes: &[ForceBreakdown]) -> Self {
        Self {
            t: nodes.iter().map(|n| n.t).collect(),
            h: nodes.iter().map(|n| n.h).collect(),
            rw: nodes.iter().map(|n| n.rw).collect(),
        }
    }

    pub fn at(&self, t: f64) -> (f64, f64) {
        let n = self.t.len();
        if n == 1 || t <= self.t[0] {
            return (self.h[0], self.rw[0]);
        }
        if t >= self.t[n - 1] {
            return (self.h[n - 1], self.rw[n - 1]);
        }
        let k = self.t.partition_point(|&x| x <= t).clamp(1, n - 1);
        let th = (t - self.t[k - 1]) / (self.t[k] - self.t[k - 1]);
        (
            self.h[k - 1] + th * (self.h[k] - self.h[k - 1]),
            self.rw[k - 1] + th * (self.rw[k] - self.rw[k - 1]),
        )
    }
}

/// Equilibrium data shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub e: f64,
    pub v_inf: f64,
    pub b0: f64,
    /// `F₀₀′(V∞)`.
    pub rate_limit: f64,
}

impl Equilibrium {
    pub fn new(model: &ForceModel, cfg: &ModelConfig) -> Result<Self> {
        let (v_inf, _) = model.equilibrium_velocity(cfg.e, 0.0)?;
        let gamma = (cfg.v0 - v_inf).abs();
        let (_, b0) = model.equilibrium_velocity(cfg.e, gamma)?;
        let rate_limit = model.f00_prime_analytic(v_inf)?;
        Ok(Self { e: cfg.e, v_inf, b0, rate_limit })
    }
}

/// Integrates the Picard ODE for a given `W` and its precomputed corrections.
pub fn picard_integrate(model: &ForceModel, eq: &Equilibrium, path_w: &BodyPath, track: &CorrectionTrack) -> Result<BodyPath> {
    let dt = path_w.dt();
    let n = path_w.len() - 1;
    let mut b = Vec::with_capacity(2 * n + 1);
    let mut s = Vec::with_capacity(2 * n + 1);
    for j in 0..=2 * n {
        let t = 0.5 * dt * j as f64;
        let w = path_w.w(t);
        let rate = picard_rate(eq.e, eq.v_inf, w, model.f00(w), eq.rate_limit);
        if !(rate > 0.0) {
            return Err(Error::NonPositiveRate { t, b: rate });
        }
        let (h, rw) = track.at(t);
        b.push(rate);
        s.push(h - rw);
    }
    let v0 = path_w.w_node(0);
    Ok(BodyPath::from_velocities(dt, integrate_linear(dt, v0, eq.v_inf, &b, &s)))
}

/// One application of the Picard map. Returns `V_W` and the force
/// breakdown along `W` at the force nodes.
pub fn picard_step(
    model: &ForceModel,
    eq: &Equilibrium,
    path_w: &BodyPath,
    settings: &SolverSettings,
) -> Result<(BodyPath, Vec<ForceBreakdown>)> {
    let schedule = force_schedule(path_w, settings.dense_until, settings.stride_ratio);
    let bd = march_boundary_density(model, path_w, &schedule, settings.march)?;
    let forces = bd.breakdowns();
    let v = picard_integrate(model, eq, path_w, &CorrectionTrack::new(&forces))?;
    Ok((v, forces))
}

#[derive(Debug, Clone)]
pub struct FixedPointSolution {
    pub mode: SolverMode,
    pub path: BodyPath,
    /// Input of the last Picard step (equal to `path` in direct mode).
    pub previous: BodyPath,
    pub residuals: Vec<f64>,
    /// Forces along `previous` at the force nodes.
    pub forces: Vec<ForceBreakdown>,
    pub converged: bool,
    pub equilibrium: Equilibrium,
}

impl FixedPointSolution {
    pub fn residual_ratios(&self) -> Vec<f64> {
        self.residuals.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

fn sup_gap(a: &BodyPath, b: &BodyPath) -> f64 {
    a.velocities()
        .iter()
        .zip(b.velocities())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Pure-exponential member of the velocity class.
pub fn initial_guess(eq: &Equilibrium, v0: f64, settings: &SolverSettings) -> BodyPath {
    BodyPath::from_fn(settings.dt, settings.t_end, |t| eq.v_inf + (v0 - eq.v_inf) * (-eq.b0 * t).exp())
}

/// Solves for the self-consistent body velocity. `guess` overrides the
/// exponential starting path (Picard mode only).
pub fn solve_fixed_point(
    model: &ForceModel,
    cfg: &ModelConfig,
    settings: &SolverSettings,
    guess: Option<BodyPath>,
) -> Result<FixedPointSolution> {
    let eq = Equilibrium::new(model, cfg)?;
    match settings.mode {
        SolverMode::Picard => solve_picard(model, cfg, &eq, settings, guess),
        SolverMode::Direct => solve_direct(model, cfg, &eq, settings),
    }
}

fn solve_picard(
    model: &ForceModel,
    cfg: &ModelConfig,
    eq: &Equilibrium,
    settings: &SolverSettings,
    guess: Option<BodyPath>,
) -> Result<FixedPointSolution> {
    let mut w = guess.unwrap_or_else(|| initial_guess(eq, cfg.v0, settings));
    let mut residuals: Vec<f64> = Vec::new();
    let mut rising = 0;
    for _ in 0..settings.max_iter.max(1) {
        let (v, forces) = picard_step(model, eq, &w, settings)?;
        let r = sup_gap(&v, &w);
        if let Some(&last) = residuals.last() {
            rising = if r >= last { rising + 1 } else { 0 };
        }
        residuals.push(r);
        if r <= settings.tol {
            return Ok(FixedPointSolution {
                mode: SolverMode::Picard,
                path: v,
                previous: w,
                residuals,
                forces,
                converged: true,
                equilibrium: *eq,
            });
        }
        if rising >= 3 {
            return Err(Error::Divergence { history: residuals });
        }
        if residuals.len() == settings.max_iter {
            return Ok(FixedPointSolution {
                mode: SolverMode::Picard,
                path: v,
                previous: w,
                residuals,
                forces,
                converged: false,
                equilibrium: *eq,
            });
        }
        w = v;
    }
    unreachable!("loop returns on its last iteration")
}

/// Marches `dV/dt = E − F₀₀(V) + H − R_W` with `H`, `R_W` evaluated on the
/// velocity history computed so far. Each force interval is integrated with
/// extrapolated corrections, the force node is evaluated on that
/// prediction, and the interval is integrated again with interpolated ones.
fn solve_direct(model: &ForceModel, cfg: &ModelConfig, eq: &Equilibrium, settings: &SolverSettings) -> Result<FixedPointSolution> {
    let dt = settings.dt;
    let n = settings.steps();
    let schedule = settings.schedule();
    let mut v = vec![cfg.v0; n + 1];
    let mut march = BoundaryMarch::new(model, settings.march);
    let path_of = |v: &[f64], upto: usize| {
        let mut full = v.to_vec();
        let last = full[upto];
        full[upto + 1..].iter_mut().for_each(|x| *x = last);
        BodyPath::from_velocities(dt, full)
    };
    march.advance(&path_of(&v, 0), 0)?;
    let rhs = |t: f64, y: f64, corr: &dyn Fn(f64) -> (f64, f64)| {
        let (h, rw) = corr(t);
        eq.e - model.f00(y) + h - rw
    };
    let integrate = |v: &mut [f64], i0: usize, i1: usize, corr: &dyn Fn(f64) -> (f64, f64)| {
        for i in i0..i1 {
            let t = dt * i as f64;
            let y = v[i];
            let k1 = rhs(t, y, corr);
            let k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1, corr);
            let k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2, corr);
            let k4 = rhs(t + dt, y + dt * k3, corr);
            v[i + 1] = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    };
    for k in 0..schedule.len() - 1 {
        let (i0, i1) = (schedule[k], schedule[k + 1]);
        let nodes = march.nodes();
        let cur = nodes[k].breakdown();
        let prev = if k > 0 { Some(nodes[k - 1].breakdown()) } else { None };
        let extrap = move |t: f64| match prev {
            Some(p) if cur.t > p.t => {
                let th = (t - cur.t) / (cur.t - p.t);
                (cur.h + th * (cur.h - p.h), cur.rw + th * (cur.rw - p.rw))
            }
            _ => (cur.h, cur.rw),
        };
        integrate(&mut v, i0, i1, &extrap);
        march.advance(&path_of(&v, i1), i1)?;
        for _ in 0..1 {
            let next = march.nodes()[k + 1].breakdown();
            let interp = move |t: f64| {
                let th = ((t - cur.t) / (next.t - cur.t)).clamp(0.0, 1.0);
                (cur.h + th * (next.h - cur.h), cur.rw + th * (next.rw - cur.rw))
            };
            integrate(&mut v, i0, i1, &interp);
            march.truncate(k + 1);
            march.advance(&path_of(&v, i1), i1)?;
        }
    }
    let forces = march.finish().breakdowns();
    let path = BodyPath::from_velocities(dt, v);
    Ok(FixedPointSolution {
        mode: SolverMode::Direct,
        previous: path.clone(),
        path,
        residuals: Vec::new(),
        forces,
        converged: true,
        equilibrium: *eq,
    })
}

/// Consistency of a converged Picard solution.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointCheck {
    /// `sup |V_V − V|` after feeding the solution back through the map.
    pub feedback_change: f64,
    /// Pointwise mismatch at the force nodes between the derivative the
    /// integrator followed and `E − F₀(t) − R_W(t)` along the solution.
    pub ode_residual: f64,
    pub forces: Vec<ForceBreakdown>,
}

pub fn fixed_point_check(model: &ForceModel, sol: &FixedPointSolution, settings: &SolverSettings) -> Result<FixedPointCheck> {
    let eq = &sol.equilibrium;
    let (again, forces_v) = picard_step(model, eq, &sol.path, settings)?;
    let track_w = CorrectionTrack::new(&sol.forces);
    let mut ode_residual: f64 = 0.0;
    for fv in &forces_v {
        let t = fv.t;
        let v = sol.path.w(t);
        let w = sol.previous.w(t);
        let (h_w, rw_w) = track_w.at(t);
        let b = picard_rate(eq.e, eq.v_inf, w, model.f00(w), eq.rate_limit);
        let followed = b * (eq.v_inf - v) + h_w - rw_w;
        let exact = eq.e - model.f00(v) + fv.h - fv.rw;
        ode_residual = ode_residual.max((followed - exact).abs());
    }
    Ok(FixedPointCheck {
        feedback_change: sup_gap(&again, &sol.path),
        ode_residual,
        forces: forces_v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityEnvelope {
    pub gamma: f64,
    pub a: f64,
    pub sigma: f64,
    pub b0_rate: f64,
    pub p: f64,
}

impl VelocityEnvelope {
    pub fn exponential_part(&self, t: f64) -> f64 {
        self.gamma * (-self.b0_rate * t).exp()
    }

    pub fn algebraic_unit(&self, t: f64) -> f64 {
        self.gamma.powf(self.p + 1.0) * (1.0 + t).powf(-self.sigma)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.exponential_part(t) + self.a * self.algebraic_unit(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeCheck {
    pub pass: bool,
    pub min_margin: f64,
    pub fitted_a: f64,
    /// Smallest admissible `A` before clamping at 1.
    pub raw_a: f64,
}

/// Fits the smallest `A ≥ 1` so that the envelope dominates `|V − V∞|`
/// at every node, and reports the tightest slack with that `A`.
pub fn envelope_check(path: &BodyPath, v_inf: f64, env: &VelocityEnvelope) -> EnvelopeCheck {
    let mut raw: f64 = f64::NEG_INFINITY;
    for (i, &v) in path.velocities().iter().enumerate() {
        let t = path.time(i);
        let excess = (v - v_inf).abs() - env.exponential_part(t);
        raw = raw.max(excess / env.algebraic_unit(t));
    }
    let fitted_a = raw.max(1.0);
    let fitted = VelocityEnvelope { a: fitted_a, ..*env };
    let min_margin = path
        .velocities()
        .iter()
        .enumerate()
        .map(|(i, &v)| fitted.value(path.time(i)) - (v - v_inf).abs())
        .fold(f64::INFINITY, f64::min);
    EnvelopeCheck {
        pass: fitted_a.is_finite() && fitted_a * env.gamma < 1.0,
        min_margin,
        fitted_a,
        raw_a: raw,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeBoundReport {
    pub pass: bool,
    pub c1: f64,
    /// Smallest `bound − |Y|` over the grid.
    pub min_slack: f64,
    pub times: Vec<f64>,
    pub y: Vec<f64>,
}

/// Integrates `Y′ = −b(t) Y + d(t)` by RK4 and checks
/// `|Y(t)| ≤ |Y₀| e^{−b₀t} + C₁ (1+t)^{−σ}` with `C₁ = C₀/b₀ (1 + 2^σ)`.
#[allow(clippy::too_many_arguments)]
pub fn ode_decay_bound_check(
    b_fn: impl Fn(f64) -> f64,
    d_fn: impl Fn(f64) -> f64,
    y0: f64,
    b0: f64,
    c0: f64,
    sigma: f64,
    horizon: f64,
    dt: f64,
) -> Result<OdeBoundReport> {
    if !(b0 > 0.0) || !(sigma > 1.0) || !(horizon > 0.0) || !(dt > 0.0) {
        return Err(Error::Precondition(format!(
            "need b0 > 0, sigma > 1, positive horizon and step (b0 = {b0}, sigma = {sigma})"
        )));
    }
    let n = (horizon / dt).round() as usize;
    for j in 0..=2 * n {
        let t = 0.5 * dt * j as f64;
        let b = b_fn(t);
        if !(b >= b0) {
            return Err(Error::Precondition(format!("b({t}) = {b} below b0 = {b0}")));
        }
        let d = d_fn(t);
        if !(d.abs() <= c0 * (1.0 + t).powf(-sigma) * (1.0 + 1e-12)) {
            return Err(Error::Precondition(format!("|d({t})| = {} exceeds C0 (1+t)^-sigma", d.abs())));
        }
    }
    let c1 = c0 / b0 * (1.0 + 2f64.powf(sigma));
    let f = |t: f64, y: f64| -b_fn(t) * y + d_fn(t);
    let mut y = y0;
    let mut times = vec![0.0];
    let mut ys = vec![y0];
    let mut min_slack = f64::INFINITY;
    let bound = |t: f64| y0.abs() * (-b0 * t).exp() + c1 * (1.0 + t).powf(-sigma);
    min_slack = min_slack.min(bound(0.0) - y0.abs());
    for i in 0..n {
        let t = dt * i as f64;
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1);
        let k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2);
        let k4 = f(t + dt, y + dt * k3);
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let tn = dt * (i + 1) as f64;
        min_slack = min_slack.min(bound(tn) - y.abs());
        times.push(tn);
        ys.push(y);
    }
    Ok(OdeBoundReport {
        pass: min_slack >= 0.0,
        c1,
        min_slack,
        times,
        y: ys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_synthetic_relaxation() {
        // F00(V) = V, E = 0, V∞ = 0, W = γ e^{-t}: b ≡ 1, V = V₀ e^{-t}.
        let dt = 0.01;
        let n = 500;
        let gamma = 0.02;
        let mut b = Vec::new();
        for j in 0..=2 * n {
            let t = 0.5 * dt * j as f64;
            let w = gamma * (-t).exp();
            b.push(picard_rate(0.0, 0.0, w, w, 1.0));
        }
        let s = vec![0.0; 2 * n + 1];
        let v = integrate_linear(dt, gamma, 0.0, &b, &s);
        for (i, &x) in v.iter().enumerate() {
            let exact = gamma * (-(i as f64) * dt).exp();
            assert!((x - exact).abs() < 1e-12, "{i}: {x} vs {exact}");
        }
    }

    #[test]
    fn rate_limit_near_equilibrium() {
        assert_eq!(picard_rate(0.0, 0.0, 1e-9, 5.0, 1.25), 1.25);
        assert_eq!(picard_rate(0.0, 0.0, 0.5, 1.0, 1.25), 2.0);
    }

    #[test]
    fn envelope_of_equilibrium_is_the_envelope() {
        let p = BodyPath::constant(0.5, 10.0, 0.0);
        let env = VelocityEnvelope { gamma: 0.02, a: 1.0, sigma: 10.0 / 9.0, b0_rate: 1.0, p: 1.0 };
        let c = envelope_check(&p, 0.0, &env);
        assert!(c.pass);
        assert_eq!(c.fitted_a, 1.0);
        assert!((c.min_margin - env.value(10.0)).abs() < 1e-18);
    }

    #[test]
    fn envelope_rejects_constant_offset() {
        let p = BodyPath::constant(1.0, 2000.0, 0.04);
        let env = VelocityEnvelope { gamma: 0.02, a: 1.0, sigma: 10.0 / 9.0, b0_rate: 1.0, p: 1.0 };
        assert!(!envelope_check(&p, 0.0, &env).pass);
    }

    #[test]
    fn ode_bound_trivial_cases() {
        let r = ode_decay_bound_check(|_| 1.5, |_| 0.0, 2.0, 1.0, 0.0, 2.0, 10.0, 0.01).unwrap();
        assert!(r.pass);
        let exact = 2.0 * (-15.0f64).exp();
        assert!((r.y.last().unwrap() - exact).abs() < 1e-10);
        let z = ode_decay_bound_check(|_| 1.0, |_| 0.0, 0.0, 1.0, 0.0, 2.0, 10.0, 0.01).unwrap();
        assert!(z.y.iter().all(|&y| y == 0.0));
        assert!(ode_decay_bound_check(|_| 0.5, |_| 0.0, 1.0, 1.0, 0.0, 2.0, 1.0, 0.1).is_err());
    }
}
