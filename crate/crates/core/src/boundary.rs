//! Recollision machinery: last-precollision search along backward
//! characteristics, the time march of the boundary marginals and the
//! recollision force `R_W`.
//!
//! The march works in the one-dimensional reduction: every crossing of the
//! body plane counts as a collision with a face. Incoming marginals are
//! split as `a₋ = a_NB + Δ` where `Δ` is supported on the narrow band of
//! relative speeds that admit a precollision.

use std::io::Write;

use rayon::prelude::*;

use crate::characteristics::HorizontalTrajectory;
use crate::error::{Error, Result};
use crate::fields::ExternalForce;
use crate::forces::{FaceSample, ForceBreakdown, ForceModel};
use crate::path::BodyPath;
use crate::quadrature::{pairwise_sum, GaussLegendre};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    /// Faces `x₁ < X`; incoming relative speeds are positive.
    Left,
    /// Faces `x₁ > X`; incoming relative speeds are negative.
    Right,
}

impl Face {
    pub fn index(self) -> usize {
        match self {
            Face::Left => 0,
            Face::Right => 1,
        }
    }

    /// Sign of `u₁ − W` for particles arriving at this face.
    pub fn incoming_sign(self) -> f64 {
        match self {
            Face::Left => 1.0,
            Face::Right => -1.0,
        }
    }

    pub const BOTH: [Face; 2] = [Face::Left, Face::Right];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEvent {
    pub tau: f64,
    pub face: Face,
    /// `u₁ − W(τ)`.
    pub incoming: f64,
    /// Outgoing relative speed when resolved by sampling.
    pub outgoing: Option<f64>,
}

/// Result of a backward search for the last crossing of the body plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecollisionSearch {
    /// `(τ, v̌₁(τ))` of the latest crossing in `(0, t)`.
    pub hit: Option<(f64, f64)>,
    /// Set when a crossing was found with `|ġ| < 1e-8` and discarded.
    pub grazing: bool,
    /// Side of the plane the particle occupies just before `t`.
    pub face: Face,
}

const GRAZING_SLOPE: f64 = 1e-8;
const BISECT_TIME: f64 = 1e-10;
const MAX_SEARCH_STEPS: usize = 100_000;
const GEOMETRIC_PROBES: usize = 20;

fn curvature_bound(field: &ExternalForce, path: &BodyPath, a: f64, b: f64) -> f64 {
    field.horizontal_sup(a.max(0.0)) + path.lipschitz_on(a.max(0.0), b)
}

/// Largest `h` with `|g(s − h)| > 0` guaranteed from `|g|`, `ġ` and a bound `M`
/// on `|g̈|` over `[s − h, s]`.
fn safe_step(g: f64, gp: f64, m: f64) -> f64 {
    let ag = g.abs();
    let agp = gp.abs();
    let shrinking = g * gp > 0.0;
    if m <= 0.0 {
        return if shrinking { ag / agp } else { f64::INFINITY };
    }
    let root = (gp * gp + 2.0 * m * ag).sqrt();
    if shrinking {
        // Stable form of (−|ġ| + root) / M.
        2.0 * ag / (agp + root)
    } else {
        (agp + root) / m
    }
}

/// Searches the backward characteristic through `(x1, v1)` at time `t` for
/// its latest crossing of `X(s)` in `(0, t)`. Uses `traj`, which must be the
/// trajectory of that same point, so callers can continue integrating it.
pub fn search_precollision(
    traj: &mut HorizontalTrajectory<'_>,
    field: &ExternalForce,
    path: &BodyPath,
    t: f64,
    x1: f64,
) -> Result<PrecollisionSearch> {
    path.check_span(t)?;
    let gap = |traj: &mut HorizontalTrajectory<'_>, s: f64| -> Result<(f64, f64)> {
        let (x, v) = traj.state(s)?;
        Ok((x - path.x(s), v - path.w(s)))
    };
    let (g0, gp0) = gap(traj, t)?;
    let on_face = g0.abs() <= 1e-13 * (1.0 + x1.abs());
    let face = if on_face {
        if gp0 > 0.0 {
            Face::Left
        } else {
            Face::Right
        }
    } else if g0 < 0.0 {
        Face::Left
    } else {
        Face::Right
    };
    let none = PrecollisionSearch { hit: None, grazing: false, face };
    if t <= 0.0 {
        return Ok(none);
    }
    let mut s = t;
    if on_face {
        if gp0.abs() < GRAZING_SLOPE {
            return Ok(PrecollisionSearch { grazing: true, ..none });
        }
        let mut m = curvature_bound(field, path, t, t);
        let mut h0 = if m > 0.0 { gp0.abs() / m } else { t };
        let m_ext = curvature_bound(field, path, t - h0.min(t), t);
        if m_ext > m {
            m = m_ext;
            h0 = gp0.abs() / m;
        }
        if h0 >= t {
            // No return to the plane is possible before s = 0.
            let reach = gp0.abs() * t - 0.5 * m * t * t;
            if reach > 0.0 {
                return Ok(none);
            }
            h0 = t;
        }
        s = t - h0;
    }
    let (mut g, mut gp) = gap(traj, s)?;
    let floor = 1e-9 * t.max(1.0);
    for _ in 0..MAX_SEARCH_STEPS {
        if s <= 0.0 {
            return Ok(none);
        }
        if g == 0.0 {
            return finish(traj, path, s, gp, face);
        }
        let shrinking = g * gp > 0.0;
        let mut step;
        let mut expect_crossing = false;
        if shrinking {
            let d = g.abs() / gp.abs();
            let m_ext = curvature_bound(field, path, s - 1.5 * d, s);
            if m_ext * g.abs() <= 0.25 * gp * gp {
                // Monotone over the overshoot window with a guaranteed root.
                step = 1.5 * d;
                expect_crossing = true;
            } else {
                step = safe_step(g, gp, curvature_bound(field, path, s, s));
            }
        } else {
            step = safe_step(g, gp, curvature_bound(field, path, s, s));
        }
        if !expect_crossing {
            for _ in 0..3 {
                let m = curvature_bound(field, path, s - step.min(s), s);
                let h = safe_step(g, gp, m);
                if h >= step {
                    break;
                }
                step = h;
            }
            if step >= s {
                return Ok(none);
            }
            step = step.max(floor);
        }
        let s_next = (s - step).max(0.0);
        let (g_next, gp_next) = gap(traj, s_next)?;
        if g_next == 0.0 || (g_next > 0.0) != (g > 0.0) {
            let (mut lo, mut hi) = (s_next, s);
            let (mut ghi, mut glo) = (g, g_next);
            while hi - lo > BISECT_TIME {
                let mid = 0.5 * (lo + hi);
                let (gm, _) = gap(traj, mid)?;
                if gm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (gm > 0.0) == (ghi > 0.0) {
                    hi = mid;
                    ghi = gm;
                } else {
                    lo = mid;
                    glo = gm;
                }
            }
            let tau = if glo == 0.0 { lo } else { 0.5 * (lo + hi) };
            let (_, gp_tau) = gap(traj, tau)?;
            return finish(traj, path, tau, gp_tau, face);
        }
        if s_next <= 0.0 {
            return Ok(none);
        }
        s = s_next;
        g = g_next;
        gp = gp_next;
    }
    Ok(PrecollisionSearch { grazing: true, ..none })
}

fn finish(
    traj: &mut HorizontalTrajectory<'_>,
    path: &BodyPath,
    tau: f64,
    gp: f64,
    face: Face,
) -> Result<PrecollisionSearch> {
    // Leaving the face at τ means moving away from the body.
    let leaves = gp * face.incoming_sign() < 0.0;
    if gp.abs() < GRAZING_SLOPE || !leaves {
        return Ok(PrecollisionSearch { hit: None, grazing: true, face });
    }
    let (_, v) = traj.state(tau)?;
    let _ = path;
    Ok(PrecollisionSearch {
        hit: Some((tau, v)),
        grazing: false,
        face,
    })
}

/// Latest precollision `(τ, v̌₁(τ))` of the backward characteristic through
/// `(x1, v1)` at time `t`, or `None` (also for discarded grazing crossings).
pub fn find_precollision(
    field: &ExternalForce,
    path: &BodyPath,
    t: f64,
    x1: f64,
    v1: f64,
    tol: f64,
) -> Result<Option<(f64, f64)>> {
    let mut traj = HorizontalTrajectory::new(field, t, x1, v1, tol);
    Ok(search_precollision(&mut traj, field, path, t, x1)?.hit)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchSettings {
    pub depth_k: usize,
    /// Probe count per face used to locate the precollision band.
    pub probes: usize,
    /// Gauss–Legendre order on each precollision run.
    pub run_order: usize,
    pub tol: f64,
}

impl Default for MarchSettings {
    fn default() -> Self {
        Self {
            depth_k: 4,
            probes: 24,
            run_order: 16,
            tol: crate::characteristics::DEFAULT_TOL,
        }
    }
}

/// Quadrature node inside the precollision band of one face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowNode {
    /// `|u₁ − W(t)|`.
    pub speed: f64,
    pub weight: f64,
    pub tau: f64,
    /// Outgoing relative velocity `v̌₁(τ) − W(τ)` at the precollision.
    pub w_out: f64,
    /// `a_NB(t, u₁)`.
    pub a_nb: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceNode {
    pub index: usize,
    pub t: f64,
    pub sample: FaceSample,
    pub bands: [Vec<WindowNode>; 2],
    /// Band limits `|u₁ − W|` searched on each face.
    pub band_limits: [f64; 2],
    /// `Δ^{(j)}` per level and face at the band nodes; level 0 is zero.
    pub delta: Vec<[Vec<f64>; 2]>,
    /// `R_W^{(j)}` per level.
    pub rw: Vec<f64>,
    pub f00: f64,
    pub h: f64,
    pub grazing: usize,
}

impl ForceNode {
    pub fn breakdown(&self) -> ForceBreakdown {
        ForceBreakdown::new(self.t, self.f00, self.h, *self.rw.last().unwrap_or(&0.0))
    }
}

/// Boundary marginals on both faces at the force nodes. Outgoing values are
/// evaluated from the stored incoming components, interpolated linearly in time.
#[derive(Debug, Clone)]
pub struct BoundaryDensity {
    pub depth_k: usize,
    pub nodes: Vec<ForceNode>,
}

impl BoundaryDensity {
    pub fn times(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.t).collect()
    }

    pub fn rw_series(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| *n.rw.last().unwrap_or(&0.0)).collect()
    }

    /// `R_W^{(j)}` series for level `j`.
    pub fn rw_level(&self, level: usize) -> Vec<f64> {
        self.nodes.iter().map(|n| n.rw[level]).collect()
    }

    pub fn breakdowns(&self) -> Vec<ForceBreakdown> {
        self.nodes.iter().map(|n| n.breakdown()).collect()
    }
}

/// Outgoing marginal `a₊^{(level)}` at one node for a relative velocity
/// `w_out` leaving `face`.
pub fn outgoing_at(model: &ForceModel, node: &ForceNode, level: usize, face: Face, w_out: f64) -> f64 {
    let rule = model.rule();
    let incoming = match face {
        Face::Left => &node.sample.left,
        Face::Right => &node.sample.right,
    };
    let kernel = &model.kernel;
    let mut terms = Vec::with_capacity(rule.len() + 32);
    for ((&w, &q), &a) in rule.nodes.iter().zip(&rule.weights).zip(incoming) {
        terms.push(q * kernel.eval_nonzero(w_out, w) * a);
    }
    let fi = face.index();
    for (wn, &d) in node.bands[fi].iter().zip(&node.delta[level][fi]) {
        if d != 0.0 {
            terms.push(wn.weight * kernel.eval_nonzero(w_out, wn.speed) * d);
        }
    }
    pairwise_sum(&terms)
}

/// Incoming marginal `a₋` at one node for the relative speed of rule node `k`.
fn incoming_rule(node: &ForceNode, face: Face, k: usize) -> f64 {
    match face {
        Face::Left => node.sample.left[k],
        Face::Right => node.sample.right[k],
    }
}

/// `(outgoing flux, incoming flux)` on `face` at `node` for `level`.
pub fn flux_balance(model: &ForceModel, node: &ForceNode, level: usize, face: Face) -> (f64, f64) {
    let rule = model.rule();
    let mut out = Vec::with_capacity(rule.len());
    let mut inc = Vec::with_capacity(rule.len());
    let sign = -face.incoming_sign();
    for (k, (&w, &q)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        out.push(q * w * outgoing_at(model, node, level, face, sign * w));
        inc.push(q * w * incoming_rule(node, face, k));
    }
    let fi = face.index();
    for (wn, &d) in node.bands[fi].iter().zip(&node.delta[level][fi]) {
        inc.push(wn.weight * wn.speed * d);
    }
    (pairwise_sum(&out), pairwise_sum(&inc))
}

/// Incremental builder of a [`BoundaryDensity`]. Nodes are appended in time
/// order and the tail can be discarded and recomputed, which the
/// self-consistent solver needs.
pub struct BoundaryMarch<'a> {
    model: &'a ForceModel,
    settings: MarchSettings,
    gl: GaussLegendre,
    nodes: Vec<ForceNode>,
}

impl<'a> BoundaryMarch<'a> {
    pub fn new(model: &'a ForceModel, settings: MarchSettings) -> Self {
        Self {
            model,
            gl: GaussLegendre::new(settings.run_order),
            settings,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[ForceNode] {
        &self.nodes
    }

    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn finish(self) -> BoundaryDensity {
        BoundaryDensity {
            depth_k: self.settings.depth_k,
            nodes: self.nodes,
        }
    }

    /// Outgoing marginal at time `tau`, interpolated between stored nodes and
    /// the node under construction.
    fn outgoing_interp(&self, current: &ForceNode, level: usize, face: Face, tau: f64, w_out: f64) -> f64 {
        let model = self.model;
        let last_t = self.nodes.last().map(|n| n.t).unwrap_or(current.t);
        let (a, b) = if tau >= last_t {
            match self.nodes.last() {
                Some(prev) => (prev, current),
                None => (current, current),
            }
        } else {
            let k = self.nodes.partition_point(|n| n.t <= tau);
            let k = k.clamp(1, self.nodes.len() - 1);
            (&self.nodes[k - 1], &self.nodes[k])
        };
        let va = outgoing_at(model, a, level, face, w_out);
        if std::ptr::eq(a, b) || b.t == a.t {
            return va;
        }
        let vb = outgoing_at(model, b, level, face, w_out);
        let th = ((tau - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        va * (1.0 - th) + vb * th
    }

    /// Band nodes for one face at time `t`.
    fn band(&self, path: &BodyPath, t: f64, face: Face, limit: f64) -> Result<(Vec<WindowNode>, usize)> {
        let model = self.model;
        let field = &model.force;
        let density = &model.density;
        let tol = self.settings.tol;
        let w = path.w(t);
        let x = path.x(t);
        let sgn = face.incoming_sign();
        let probe = |speed: f64| -> Result<(bool, bool)> {
            let mut traj = HorizontalTrajectory::new(field, t, x, w + sgn * speed, tol);
            let r = search_precollision(&mut traj, field, path, t, x)?;
            Ok((r.hit.is_some(), r.grazing))
        };
        let uniform = self.settings.probes;
        // Late bands can be far narrower than the uniform spacing, so probe
        // geometrically towards zero speed as well.
        let mut speeds: Vec<f64> = (1..=GEOMETRIC_PROBES)
            .rev()
            .map(|j| 0.5 * limit / uniform as f64 * 0.25f64.powi(j as i32))
            .collect();
        speeds.extend((0..uniform).map(|k| limit * (k as f64 + 0.5) / uniform as f64));
        let n = speeds.len();
        let flags: Vec<(bool, bool)> = speeds.par_iter().map(|&s| probe(s)).collect::<Result<_>>()?;
        let mut grazing = flags.iter().filter(|f| f.1).count();
        let mut edge = |lo: f64, hi: f64, lo_hit: bool| -> Result<f64> {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..20 {
                let mid = 0.5 * (a + b);
                let (hit, gz) = probe(mid)?;
                if gz {
                    grazing += 1;
                }
                if hit == lo_hit {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            Ok(0.5 * (a + b))
        };
        let mut runs = Vec::new();
        let mut k = 0;
        while k < n {
            if !flags[k].0 {
                k += 1;
                continue;
            }
            let start = if k == 0 { 0.0 } else { edge(speeds[k - 1], speeds[k], false)? };
            let mut j = k;
            while j + 1 < n && flags[j + 1].0 {
                j += 1;
            }
            let end = if j + 1 == n { limit } else { edge(speeds[j], speeds[j + 1], true)? };
            runs.push((start, end));
            k = j + 1;
        }
        let mut pts = Vec::new();
        for &(a, b) in &runs {
            for (s, q) in self.gl.on_interval(a, b) {
                pts.push((s, q));
            }
        }
        let nodes: Vec<Option<WindowNode>> = pts
            .par_iter()
            .map(|&(speed, weight)| -> Result<Option<WindowNode>> {
                let u = w + sgn * speed;
                let mut traj = HorizontalTrajectory::new(field, t, x, u, tol);
                let r = search_precollision(&mut traj, field, path, t, x)?;
                let Some((tau, v_tau)) = r.hit else {
                    return Ok(None);
                };
                let (_, dv) = traj.end_deviation()?;
                Ok(Some(WindowNode {
                    speed,
                    weight,
                    tau,
                    w_out: v_tau - path.w(tau),
                    a_nb: density.a0(u) + density.a0_diff(u, dv),
                }))
            })
            .collect::<Result<_>>()?;
        Ok((nodes.into_iter().flatten().collect(), grazing))
    }

    /// Computes the node at path index `index` and appends it.
    pub fn advance(&mut self, path: &BodyPath, index: usize) -> Result<&ForceNode> {
        let t = path.time(index);
        if let Some(last) = self.nodes.last() {
            if t <= last.t {
                return Err(Error::Precondition(format!(
                    "force nodes must increase in time: {t} after {}",
                    last.t
                )));
            }
        }
        let model = self.model;
        let sample = model.face_sample(path, t)?;
        let (f00, h) = model.f00_and_h(&sample);
        let k = self.settings.depth_k;
        let mut bands = [Vec::new(), Vec::new()];
        let mut band_limits = [0.0, 0.0];
        let mut grazing = 0;
        if k > 0 && t > 0.0 {
            let w = path.w(t);
            let (lo, hi) = path.mean_velocity_bounds(t);
            let drift = model.force.mean_velocity_drift(t);
            let margin = 1e-9;
            band_limits = [hi + drift + margin - w, w - (lo - drift - margin)];
            for face in Face::BOTH {
                let limit = band_limits[face.index()];
                if limit > 0.0 {
                    let (b, gz) = self.band(path, t, face, limit)?;
                    bands[face.index()] = b;
                    grazing += gz;
                }
            }
        }
        let zero = [vec![0.0; bands[0].len()], vec![0.0; bands[1].len()]];
        let mut node = ForceNode {
            index,
            t,
            sample,
            bands,
            band_limits,
            delta: vec![zero],
            rw: vec![0.0],
            f00,
            h,
            grazing,
        };
        for level in 1..=k {
            let mut next = [Vec::new(), Vec::new()];
            for face in Face::BOTH {
                let fi = face.index();
                next[fi] = node.bands[fi]
                    .iter()
                    .map(|wn| self.outgoing_interp(&node, level - 1, face, wn.tau, wn.w_out) - wn.a_nb)
                    .collect();
            }
            node.delta.push(next);
            node.rw.push(self.rw_of(&node, level));
        }
        self.nodes.push(node);
        Ok(self.nodes.last().expect("just pushed"))
    }

    fn rw_of(&self, node: &ForceNode, level: usize) -> f64 {
        let mut terms = Vec::new();
        for face in Face::BOTH {
            let fi = face.index();
            // L̃(W − u) = −sgn(u − W) L(|u − W|).
            let s = -face.incoming_sign();
            for (wn, &d) in node.bands[fi].iter().zip(&node.delta[level][fi]) {
                terms.push(s * wn.weight * self.model.kernel.l(wn.speed) * d);
            }
        }
        node.sample.transverse * pairwise_sum(&terms)
    }
}

/// Marches the boundary marginals over the force nodes `schedule` (path
/// indices in increasing order, starting at 0).
pub fn march_boundary_density(
    model: &ForceModel,
    path: &BodyPath,
    schedule: &[usize],
    settings: MarchSettings,
) -> Result<BoundaryDensity> {
    let mut march = BoundaryMarch::new(model, settings);
    for &i in schedule {
        march.advance(path, i)?;
    }
    Ok(march.finish())
}

/// `R_W^{(k)}` at node `n`.
pub fn recollision_force_rw(bd: &BoundaryDensity, n: usize) -> f64 {
    *bd.nodes[n].rw.last().unwrap_or(&0.0)
}

/// Force-node schedule: every path node up to `dense_until`, then strides
/// growing in proportion to the node index so the spacing is a fixed
/// fraction `ratio` of the elapsed time.
pub fn force_schedule(path: &BodyPath, dense_until: f64, ratio: f64) -> Vec<usize> {
    let n = path.len() - 1;
    let mut out = Vec::new();
    let mut i = 0;
    while i <= n {
        out.push(i);
        let t = path.time(i);
        let stride = if t < dense_until {
            1
        } else {
            ((ratio * t / path.dt()).floor() as usize).max(1)
        };
        i += stride;
    }
    if *out.last().expect("non-empty schedule") != n {
        out.push(n);
    }
    out
}

/// Writes the outgoing marginals of the deepest level on a uniform grid of
/// relative speeds.
///
/// Layout (little endian): magic `KSBD`, `u32` version 1, `u32` depth,
/// `u32` node count, `u32` grid length, grid as `f64`, then for face 0
/// (left) and face 1 (right) and every node: `f64` time followed by the grid
/// values in order.
pub fn write_dump<W: Write>(model: &ForceModel, bd: &BoundaryDensity, grid: &[f64], mut out: W) -> Result<()> {
    out.write_all(b"KSBD")?;
    for v in [1u32, bd.depth_k as u32, bd.nodes.len() as u32, grid.len() as u32] {
        out.write_all(&v.to_le_bytes())?;
    }
    for g in grid {
        out.write_all(&g.to_le_bytes())?;
    }
    for face in Face::BOTH {
        let sign = -face.incoming_sign();
        for node in &bd.nodes {
            out.write_all(&node.t.to_le_bytes())?;
            for &g in grid {
                let level = node.delta.len() - 1;
                let v = outgoing_at(model, node, level, face, sign * g.max(1e-300));
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ModelConfig;

    #[test]
    fn linear_crossing_at_rest() {
        let g = ExternalForce::none();
        let path = BodyPath::constant(0.1, 3.0, 0.0);
        let r = find_precollision(&g, &path, 2.0, -1.0, -1.0, 1e-9).unwrap().unwrap();
        assert!((r.0 - 1.0).abs() < 1e-9, "{r:?}");
        assert_eq!(r.1, -1.0);
        assert!(find_precollision(&g, &path, 2.0, -1.0, 1.0, 1e-9).unwrap().is_none());
        assert!(find_precollision(&g, &path, 2.0, 5.0, -1.0, 1e-9).unwrap().is_none());
    }

    #[test]
    fn constant_field_crossing_matches_quadratic_root() {
        // Body at rest, backward trajectory x(s) = x + v (s − t) + g (s − t)²/2.
        let gval = 0.5;
        let field = ExternalForce::constant(gval);
        let path = BodyPath::constant(0.01, 4.0, 0.0);
        let (t, x, v) = (3.0, -0.4, -0.9_f64);
        let r = find_precollision(&field, &path, t, x, v, 1e-12).unwrap().unwrap();
        // Solve x + v r + g r²/2 = 0 for r = s − t < 0, the root nearest 0.
        let disc = (v * v - 2.0 * gval * x).sqrt();
        let roots = [(-v + disc) / gval, (-v - disc) / gval];
        let r_exp = roots.iter().cloned().filter(|r| *r < 0.0).fold(f64::NEG_INFINITY, f64::max);
        assert!((r.0 - (t + r_exp)).abs() < 1e-9, "{} vs {}", r.0, t + r_exp);
    }

    #[test]
    fn schedule_is_dense_then_graded() {
        let path = BodyPath::constant(0.05, 100.0, 0.0);
        let s = force_schedule(&path, 10.0, 0.02);
        assert_eq!(s[0], 0);
        assert_eq!(*s.last().unwrap(), 2000);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(s[200], 200);
    }

    #[test]
    fn depth_zero_has_no_recollision_force() {
        let cfg = ModelConfig::reference();
        let model = ForceModel::new(&cfg).unwrap();
        let path = BodyPath::from_fn(0.05, 2.0, |t| 0.02 * (-t).exp());
        let settings = MarchSettings { depth_k: 0, ..Default::default() };
        let sched: Vec<usize> = (0..=40).step_by(4).collect();
        let bd = march_boundary_density(&model, &path, &sched, settings).unwrap();
        assert!(bd.rw_series().iter().all(|&r| r == 0.0));
    }
}
