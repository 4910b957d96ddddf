//! Particle characteristics `dx̌/ds = v̌`, `dv̌/ds = G(s, x̌)`.
//!
//! Trajectories are integrated as deviations from the free-streaming line
//! through the end condition, `x̌(s) = x + v (s − t) + y(s)`, `v̌ = v + w(s)`.
//! Straight lines are therefore reproduced exactly when the field vanishes,
//! and the error control acts on the deviation itself.

use crate::error::{Error, Result};
use crate::fields::{ExternalForce, InitialDensity};

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub t: f64,
    pub x: [f64; 3],
    pub v: [f64; 3],
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Stepper<const N: usize, F: Fn(f64, &[f64; N]) -> [f64; N]> {
    rhs: F,
    rtol: f64,
    atol: f64,
}

impl<const N: usize, F: Fn(f64, &[f64; N]) -> [f64; N]> Stepper<N, F> {
    /// One trial step; returns the new state, its derivative and the scaled error.
    fn trial(&self, s: f64, y: &[f64; N], k1: &[f64; N], h: f64) -> ([f64; N], [f64; N], f64) {
        let mut k = [[0.0; N]; 7];
        k[0] = *k1;
        for stage in 1..7 {
            let mut tmp = *y;
            for (j, kj) in k.iter().enumerate().take(stage) {
                let a = A[stage][j];
                if a != 0.0 {
                    for i in 0..N {
                        tmp[i] += h * a * kj[i];
                    }
                }
            }
            k[stage] = (self.rhs)(s + C[stage] * h, &tmp);
            if stage == 6 {
                // FSAL: the last stage point equals the proposed solution.
                let mut err = 0.0_f64;
                for i in 0..N {
                    let mut e = 0.0;
                    for (j, kj) in k.iter().enumerate() {
                        e += E[j] * kj[i];
                    }
                    let sc = self.atol + self.rtol * y[i].abs().max(tmp[i].abs());
                    err = err.max((h * e).abs() / sc);
                }
                return (tmp, k[6], err);
            }
        }
        unreachable!()
    }

    /// Integrates from `s0` to `s1`, calling `visit` after every accepted step
    /// with `(s, state, derivative)`. Returns the state at `s1`.
    fn run<V: FnMut(f64, &[f64; N], &[f64; N])>(
        &self,
        s0: f64,
        y0: [f64; N],
        s1: f64,
        mut visit: V,
        report: impl Fn(f64, &[f64; N]) -> Error,
    ) -> Result<[f64; N]> {
        let span = s1 - s0;
        if span == 0.0 {
            return Ok(y0);
        }
        let dir = span.signum();
        let mut s = s0;
        let mut y = y0;
        let mut k1 = (self.rhs)(s, &y);
        visit(s, &y, &k1);
        let mut h = dir * span.abs().min(0.1);
        loop {
            let remaining = s1 - s;
            if remaining * dir <= 0.0 {
                return Ok(y);
            }
            let last = h.abs() >= remaining.abs();
            if last {
                h = remaining;
            }
            let (yn, kn, err) = self.trial(s, &y, &k1, h);
            if err <= 1.0 {
                s = if last { s1 } else { s + h };
                y = yn;
                k1 = kn;
                visit(s, &y, &k1);
                if last {
                    return Ok(y);
                }
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h *= grow;
            } else {
                let shrink = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                h *= shrink;
                if h.abs() < 1e-14 * s.abs().max(1.0) {
                    return Err(report(s, &y));
                }
            }
        }
    }
}

/// Deviation of a horizontal characteristic from its free-streaming line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    /// `x̌(r) − x − v (r − t)`.
    pub dx: f64,
    /// `v̌(r) − v`.
    pub dv: f64,
}

fn tolerances(tol: f64) -> (f64, f64) {
    (tol, tol * 1e-12)
}

/// Horizontal characteristic through `(x1, v1)` at time `from_t`, evaluated at `to_r`.
pub fn flow_horizontal(
    field: &ExternalForce,
    from_t: f64,
    x1: f64,
    v1: f64,
    to_r: f64,
    tol: f64,
) -> Result<Deviation> {
    if field.horizontal_is_zero() || from_t == to_r {
        return Ok(Deviation { dx: 0.0, dv: 0.0 });
    }
    let (rtol, atol) = tolerances(tol);
    let stepper = Stepper {
        rhs: |s: f64, y: &[f64; 2]| [y[1], field.g1(s, x1 + v1 * (s - from_t) + y[0])],
        rtol,
        atol,
    };
    let out = stepper.run(from_t, [0.0, 0.0], to_r, |_, _, _| {}, |s, y| Error::StepUnderflow {
        s,
        x1: x1 + v1 * (s - from_t) + y[0],
        v1: v1 + y[1],
    })?;
    Ok(Deviation { dx: out[0], dv: out[1] })
}

/// Transverse characteristic; returns position and velocity at `to_r`.
pub fn flow_transverse(
    field: &ExternalForce,
    from_t: f64,
    xp: [f64; 2],
    vp: [f64; 2],
    to_r: f64,
    tol: f64,
) -> Result<([f64; 2], [f64; 2])> {
    let dt = to_r - from_t;
    let free = [xp[0] + vp[0] * dt, xp[1] + vp[1] * dt];
    if field.transverse_is_zero() || dt == 0.0 {
        return Ok((free, vp));
    }
    let (rtol, atol) = tolerances(tol);
    let stepper = Stepper {
        rhs: |s: f64, y: &[f64; 4]| {
            let g = field.gperp(
                s,
                [xp[0] + vp[0] * (s - from_t) + y[0], xp[1] + vp[1] * (s - from_t) + y[1]],
            );
            [y[2], y[3], g[0], g[1]]
        },
        rtol,
        atol,
    };
    let out = stepper.run(from_t, [0.0; 4], to_r, |_, _, _| {}, |s, y| Error::StepUnderflow {
        s,
        x1: xp[0] + y[0],
        v1: vp[0] + y[2],
    })?;
    Ok((
        [free[0] + out[0], free[1] + out[1]],
        [vp[0] + out[2], vp[1] + out[3]],
    ))
}

/// Solves the characteristic with condition `(x, v)` at `from_t` and returns
/// the state at `to_r`. Horizontal and transverse parts are independent.
pub fn flow(
    field: &ExternalForce,
    from_t: f64,
    x: [f64; 3],
    v: [f64; 3],
    to_r: f64,
    tol: f64,
) -> Result<([f64; 3], [f64; 3])> {
    assert!(tol > 0.0, "tolerance must be positive");
    let d = flow_horizontal(field, from_t, x[0], v[0], to_r, tol)?;
    let (xp, vp) = flow_transverse(field, from_t, [x[1], x[2]], [v[1], v[2]], to_r, tol)?;
    Ok((
        [x[0] + v[0] * (to_r - from_t) + d.dx, xp[0], xp[1]],
        [v[0] + d.dv, vp[0], vp[1]],
    ))
}

/// No-boundary solution `f_NB(t, x, v) = f₀(v̌(0; t, x, v))`.
pub fn pullback_density_fnb(
    field: &ExternalForce,
    f0: &InitialDensity,
    t: f64,
    x: [f64; 3],
    v: [f64; 3],
    tol: f64,
) -> Result<f64> {
    let (_, v0) = flow(field, t, x, v, 0.0, tol)?;
    Ok(f0.eval(v0).0)
}

/// `h = f_NB − f₀` at `(t, x, v)`, computed from the pulled-back velocity
/// without cancellation in the horizontal factor.
pub fn eval_h(
    field: &ExternalForce,
    f0: &InitialDensity,
    t: f64,
    x: [f64; 3],
    v: [f64; 3],
    tol: f64,
) -> Result<f64> {
    let d = flow_horizontal(field, t, x[0], v[0], 0.0, tol)?;
    let (_, vp0) = flow_transverse(field, t, [x[1], x[2]], [v[1], v[2]], 0.0, tol)?;
    let da = f0.a0_diff(v[0], d.dv);
    let b_new = f0.b0(vp0);
    let db = b_new - f0.b0([v[1], v[2]]);
    Ok(da * b_new + f0.a0(v[0]) * db)
}

/// Duhamel route for `h`: `∫_0^t J(s, x̌(s), v̌(s)) ds` along the backward
/// characteristic, by fixed-step RK4 on the full state augmented with the
/// running integral. Independent of [`eval_h`]; intended as a check.
pub fn duhamel_h(
    field: &ExternalForce,
    f0: &InitialDensity,
    t: f64,
    x: [f64; 3],
    v: [f64; 3],
    steps: usize,
) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let rhs = |s: f64, st: &[f64; 7]| -> [f64; 7] {
        let pos = [st[0], st[1], st[2]];
        let vel = [st[3], st[4], st[5]];
        let g = field.eval(s, pos);
        let j = crate::fields::source_j(field, f0, s, pos, vel);
        [vel[0], vel[1], vel[2], g[0], g[1], g[2], j]
    };
    let h = -t / steps as f64;
    let mut s = t;
    let mut st = [x[0], x[1], x[2], v[0], v[1], v[2], 0.0];
    for _ in 0..steps {
        let k1 = rhs(s, &st);
        let k2 = rhs(s + 0.5 * h, &add(&st, &k1, 0.5 * h));
        let k3 = rhs(s + 0.5 * h, &add(&st, &k2, 0.5 * h));
        let k4 = rhs(s + h, &add(&st, &k3, h));
        for i in 0..7 {
            st[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        s += h;
    }
    // The augmented component accumulated ∫_t^0 J ds.
    -st[6]
}

fn add<const N: usize>(a: &[f64; N], b: &[f64; N], h: f64) -> [f64; N] {
    let mut out = *a;
    for i in 0..N {
        out[i] += h * b[i];
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Knot {
    s: f64,
    y: f64,
    w: f64,
    g: f64,
}

/// Backward horizontal characteristic from `(t, x1, v1)` kept as a dense
/// trajectory. Steps are taken lazily as later queries reach further back.
pub struct HorizontalTrajectory<'a> {
    field: &'a ExternalForce,
    t: f64,
    x1: f64,
    v1: f64,
    rtol: f64,
    atol: f64,
    knots: Vec<Knot>,
    h: f64,
    cursor: usize,
    free: bool,
}

impl<'a> HorizontalTrajectory<'a> {
    pub fn new(field: &'a ExternalForce, t: f64, x1: f64, v1: f64, tol: f64) -> Self {
        let (rtol, atol) = tolerances(tol);
        let free = field.horizontal_is_zero();
        let g = if free { 0.0 } else { field.g1(t, x1) };
        Self {
            field,
            t,
            x1,
            v1,
            rtol,
            atol,
            knots: vec![Knot { s: t, y: 0.0, w: 0.0, g }],
            h: -t.min(0.1),
            cursor: 0,
            free,
        }
    }

    fn rhs(&self, s: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], self.field.g1(s, self.x1 + self.v1 * (s - self.t) + y[0])]
    }

    fn extend_to(&mut self, s_target: f64) -> Result<()> {
        let s_target = s_target.max(0.0);
        while self.knots.last().expect("at least one knot").s > s_target {
            let k = *self.knots.last().expect("at least one knot");
            let remaining = -k.s;
            let mut h = self.h.max(remaining);
            loop {
                let stepper = Stepper {
                    rhs: |s: f64, y: &[f64; 2]| self.rhs(s, y),
                    rtol: self.rtol,
                    atol: self.atol,
                };
                let (yn, kn, err) = stepper.trial(k.s, &[k.y, k.w], &[k.w, k.g], h);
                if err <= 1.0 {
                    let s_new = if h == remaining { 0.0 } else { k.s + h };
                    self.knots.push(Knot { s: s_new, y: yn[0], w: yn[1], g: kn[1] });
                    let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    self.h = h * grow;
                    break;
                }
                h *= if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                if h.abs() < 1e-14 * k.s.abs().max(1.0) {
                    return Err(Error::StepUnderflow {
                        s: k.s,
                        x1: self.x1 + self.v1 * (k.s - self.t) + k.y,
                        v1: self.v1 + k.w,
                    });
                }
            }
        }
        Ok(())
    }

    /// Deviation `(y, w)` at `s ∈ [0, t]`.
    pub fn deviation(&mut self, s: f64) -> Result<(f64, f64)> {
        if self.free {
            return Ok((0.0, 0.0));
        }
        self.extend_to(s)?;
        // Knots are ordered by decreasing s.
        let n = self.knots.len();
        if self.cursor >= n - 1 {
            self.cursor = n.saturating_sub(2);
        }
        while self.cursor > 0 && self.knots[self.cursor].s < s {
            self.cursor -= 1;
        }
        while self.cursor + 1 < n - 1 && self.knots[self.cursor + 1].s > s {
            self.cursor += 1;
        }
        if n == 1 {
            let k = self.knots[0];
            return Ok((k.y, k.w));
        }
        let a = self.knots[self.cursor];
        let b = self.knots[self.cursor + 1];
        let h = b.s - a.s;
        let th = ((s - a.s) / h).clamp(0.0, 1.0);
        let (h00, h10, h01, h11) = hermite(th);
        let y = h00 * a.y + h10 * h * a.w + h01 * b.y + h11 * h * b.w;
        let w = h00 * a.w + h10 * h * a.g + h01 * b.w + h11 * h * b.g;
        Ok((y, w))
    }

    /// Position and velocity at `s`.
    pub fn state(&mut self, s: f64) -> Result<(f64, f64)> {
        let (y, w) = self.deviation(s)?;
        Ok((self.x1 + self.v1 * (s - self.t) + y, self.v1 + w))
    }

    /// Velocity deviation at `s = 0` from a fresh integration to the origin.
    pub fn end_deviation(&mut self) -> Result<(f64, f64)> {
        if self.free {
            return Ok((0.0, 0.0));
        }
        self.extend_to(0.0)?;
        let k = self.knots.last().expect("at least one knot");
        Ok((k.y, k.w))
    }

    pub fn field_sup(&self, s: f64) -> f64 {
        self.field.horizontal_sup(s)
    }
}

#[inline]
fn hermite(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::TransverseField;

    #[test]
    fn straight_line_without_field() {
        let g = ExternalForce::none();
        let (x, v) = flow(&g, 2.0, [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], 0.0, 1e-9).unwrap();
        assert_eq!(x, [3.0, 0.0, 0.0]);
        assert_eq!(v, [-1.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_field_parabola() {
        let g = ExternalForce::constant(1.0);
        let (x, v) = flow(&g, 1.0, [0.0; 3], [0.0; 3], 0.0, 1e-10).unwrap();
        assert!((v[0] + 1.0).abs() < 1e-12);
        assert!((x[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn round_trip() {
        let g = ExternalForce::decaying(0.3, 3.5, 2.5, 1.0)
            .with_transverse(TransverseField::Radial { c_g: 0.2, q: 3.0 });
        let tol = 1e-9;
        let x = [0.4, -0.2, 0.7];
        let v = [0.3, 0.1, -0.5];
        let (xb, vb) = flow(&g, 3.0, x, v, 0.0, tol).unwrap();
        let (xf, vf) = flow(&g, 0.0, xb, vb, 3.0, tol).unwrap();
        for i in 0..3 {
            assert!((xf[i] - x[i]).abs() < 10.0 * tol, "{xf:?}");
            assert!((vf[i] - v[i]).abs() < 10.0 * tol, "{vf:?}");
        }
    }

    #[test]
    fn dense_trajectory_matches_flow() {
        let g = ExternalForce::decaying(0.05, 3.5, 2.5, -1.0);
        let mut traj = HorizontalTrajectory::new(&g, 4.0, 0.3, 0.2, 1e-10);
        for s in [3.9, 2.5, 1.0, 0.0, 2.0] {
            let (x, v) = traj.state(s).unwrap();
            let d = flow_horizontal(&g, 4.0, 0.3, 0.2, s, 1e-10).unwrap();
            assert!((x - (0.3 + 0.2 * (s - 4.0) + d.dx)).abs() < 1e-9);
            assert!((v - (0.2 + d.dv)).abs() < 1e-9);
        }
    }

    #[test]
    fn h_vanishes_without_field_or_time() {
        let f0 = InitialDensity::gaussian(1.0, 5.0, 2.0);
        let x = [0.1, 0.2, 0.3];
        let v = [0.5, -0.1, 0.2];
        assert_eq!(eval_h(&ExternalForce::none(), &f0, 3.0, x, v, 1e-9).unwrap(), 0.0);
        let g = ExternalForce::decaying(1e-3, 3.5, 2.5, 1.0);
        assert_eq!(eval_h(&g, &f0, 0.0, x, v, 1e-9).unwrap(), 0.0);
        let fnb = pullback_density_fnb(&g, &f0, 0.0, x, v, 1e-9).unwrap();
        assert_eq!(fnb, f0.eval(v).0);
    }
}
