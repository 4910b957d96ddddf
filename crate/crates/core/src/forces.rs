//! Drag force integrals `F₀₀`, `F₀`, their difference `H`, the equilibrium
//! velocity and the local relaxation rate.
//!
//! Velocity integrals are written in the relative speed `w = |v₁ − W| > 0`
//! and split by face: particles with `v₁ = W + w` hit the left face, those
//! with `v₁ = W − w` the right face. With this convention
//! `F₀₀(V) = πR² ∫_0^∞ L(w) [a₀(V − w) − a₀(V + w)] dw`, which is odd,
//! increasing and positive for `V > 0`.

use rayon::prelude::*;

use crate::characteristics::{flow_horizontal, flow_transverse, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::fields::{ExternalForce, InitialDensity, ModelConfig};
use crate::kernels::CollisionKernel;
use crate::path::BodyPath;
use crate::quadrature::{integrate_adaptive, pairwise_sum, GaussLegendre, HalfLineRule};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForceBreakdown {
    pub t: f64,
    pub f00: f64,
    pub f0: f64,
    pub h: f64,
    pub rw: f64,
    pub f_total: f64,
}

impl ForceBreakdown {
    pub fn new(t: f64, f00: f64, h: f64, rw: f64) -> Self {
        let f0 = f00 - h;
        Self {
            t,
            f00,
            f0,
            h,
            rw,
            f_total: f0 + rw,
        }
    }
}

/// No-boundary marginal on both faces at one time, sampled at the nodes of
/// the force rule.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceSample {
    pub t: f64,
    pub w: f64,
    pub x: f64,
    /// `a_NB(t, W + w_k)`, incoming on the left face.
    pub left: Vec<f64>,
    /// `a_NB(t, W − w_k)`, incoming on the right face.
    pub right: Vec<f64>,
    /// `a_NB − a₀` at the same nodes.
    pub h_left: Vec<f64>,
    pub h_right: Vec<f64>,
    /// `∫_disk ∫ b₀(v̌⊥(0)) dv⊥ dS`; equals `πR²` without a transverse field.
    pub transverse: f64,
}

#[derive(Debug, Clone)]
pub struct ForceModel {
    pub kernel: CollisionKernel,
    pub density: InitialDensity,
    pub force: ExternalForce,
    pub area: f64,
    pub radius: f64,
    pub tol: f64,
    rule: HalfLineRule,
    /// `L(w_k)` at the rule nodes.
    l_nodes: Vec<f64>,
}

impl ForceModel {
    /// Builds the velocity rule, doubling its panel count until `F₀₀`
    /// changes by less than `1e-9` relative.
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        if !(cfg.r > 0.0) {
            return Err(Error::Precondition(format!("disk radius must be positive, got {}", cfg.r)));
        }
        let cut = 8.0 * cfg.density.width();
        let mut sub = 1;
        let mut model = Self::with_rule(cfg, HalfLineRule::new(cut, 14, sub, 8));
        let probes = [0.05, 0.3, 1.0];
        let mut prev: Vec<f64> = probes.iter().map(|&v| model.f00(v)).collect();
        while sub < 64 {
            sub *= 2;
            let next_model = Self::with_rule(cfg, HalfLineRule::new(cut, 14, sub, 8));
            let next: Vec<f64> = probes.iter().map(|&v| next_model.f00(v)).collect();
            let change = prev
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs() / b.abs().max(1e-300))
                .fold(0.0, f64::max);
            model = next_model;
            prev = next;
            if change < 1e-9 {
                break;
            }
        }
        Ok(model)
    }

    fn with_rule(cfg: &ModelConfig, rule: HalfLineRule) -> Self {
        let l_nodes = rule.nodes.iter().map(|&w| cfg.kernel.l(w)).collect();
        Self {
            kernel: cfg.kernel,
            density: cfg.density,
            force: cfg.force,
            area: cfg.area(),
            radius: cfg.r,
            tol: DEFAULT_TOL,
            rule,
            l_nodes,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn rule(&self) -> &HalfLineRule {
        &self.rule
    }

    pub fn l_nodes(&self) -> &[f64] {
        &self.l_nodes
    }

    pub fn f00(&self, v: f64) -> f64 {
        let terms: Vec<f64> = self
            .rule
            .nodes
            .iter()
            .zip(&self.rule.weights)
            .zip(&self.l_nodes)
            .map(|((&w, &q), &l)| q * l * (self.density.a0(v - w) - self.density.a0(v + w)))
            .collect();
        self.area * pairwise_sum(&terms)
    }

    /// `F₀₀(V)` by adaptive quadrature in the absolute velocity; an
    /// independent route used for cross-checks.
    pub fn f00_adaptive(&self, v: f64) -> Result<f64> {
        let span = 40.0 * self.density.width();
        let f = |u: f64| {
            let w = v - u;
            w.signum() * self.kernel.l(w) * self.density.a0(u)
        };
        let a = integrate_adaptive(f, v - span, v, 1e-15, 1e-13)?;
        let b = integrate_adaptive(f, v, v + span, 1e-15, 1e-13)?;
        Ok(self.area * (a + b))
    }

    /// Centered difference with step `1e-4 · max(γ, 1e-3)`.
    pub fn f00_prime(&self, v: f64, gamma: f64) -> f64 {
        let h = 1e-4 * gamma.max(1e-3);
        (self.f00(v + h) - self.f00(v - h)) / (2.0 * h)
    }

    /// `F₀₀′(V) = πR² ∫ L̃(−u) a₀′(u + V) du` by adaptive quadrature.
    pub fn f00_prime_analytic(&self, v: f64) -> Result<f64> {
        let span = 40.0 * self.density.width();
        let f = |u: f64| -u.signum() * self.kernel.l(u) * self.density.a0_prime(u + v);
        let a = integrate_adaptive(f, -span, 0.0, 1e-15, 1e-13)?;
        let b = integrate_adaptive(f, 0.0, span, 1e-15, 1e-13)?;
        Ok(self.area * (a + b))
    }

    /// Solves `F₀₀(V∞) = E` by bisection and returns `V∞` with the smallest
    /// centered-difference `F₀₀′` over 41 points of `[V∞ − 3γ, V∞ + 3γ]`.
    pub fn equilibrium_velocity(&self, e: f64, gamma: f64) -> Result<(f64, f64)> {
        let v_inf = if e == 0.0 {
            0.0
        } else {
            let limit = 64.0 * self.density.width();
            let mut hi = e.signum() * 0.5;
            let mut lo = 0.0;
            loop {
                let f = self.f00(hi);
                if (f - e) * e.signum() >= 0.0 {
                    break;
                }
                lo = hi;
                hi *= 2.0;
                if hi.abs() > limit {
                    return Err(Error::EquilibriumOutOfRange {
                        e,
                        lo: self.f00(-limit),
                        hi: self.f00(limit),
                    });
                }
            }
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            let target = 1e-12 * e.abs().max(1.0);
            let mut mid = 0.5 * (lo + hi);
            for _ in 0..200 {
                mid = 0.5 * (lo + hi);
                let f = self.f00(mid) - e;
                if f == 0.0 || (hi - lo) < 1e-16 * mid.abs().max(1e-300) {
                    break;
                }
                if f < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let resid = (self.f00(mid) - e).abs();
            if resid > target {
                return Err(Error::Precondition(format!(
                    "bisection stalled with |F00(V) - E| = {resid:e}"
                )));
            }
            mid
        };
        let n = 41;
        let mut b0 = f64::INFINITY;
        for k in 0..n {
            let v = v_inf - 3.0 * gamma + 6.0 * gamma * k as f64 / (n - 1) as f64;
            b0 = b0.min(self.f00_prime(v, gamma));
        }
        if !(b0 > 0.0) {
            return Err(Error::NonPositiveRate { t: 0.0, b: b0 });
        }
        Ok((v_inf, b0))
    }

    /// `a_NB` at the rule nodes for both faces at time `t`.
    pub fn face_sample(&self, path: &BodyPath, t: f64) -> Result<FaceSample> {
        path.check_span(t)?;
        let w = path.w(t);
        let x = path.x(t);
        let nodes = &self.rule.nodes;
        let pull = |u: f64| -> Result<f64> {
            if t == 0.0 || self.force.horizontal_is_zero() {
                return Ok(0.0);
            }
            let d = flow_horizontal(&self.force, t, x, u, 0.0, self.tol)?;
            Ok(self.density.a0_diff(u, d.dv))
        };
        let h_left: Vec<f64> = nodes.par_iter().map(|&q| pull(w + q)).collect::<Result<_>>()?;
        let h_right: Vec<f64> = nodes.par_iter().map(|&q| pull(w - q)).collect::<Result<_>>()?;
        let left = nodes
            .iter()
            .zip(&h_left)
            .map(|(&q, &h)| self.density.a0(w + q) + h)
            .collect();
        let right = nodes
            .iter()
            .zip(&h_right)
            .map(|(&q, &h)| self.density.a0(w - q) + h)
            .collect();
        let transverse = self.transverse_factor(x, t)?;
        Ok(FaceSample {
            t,
            w,
            x,
            left,
            right,
            h_left,
            h_right,
            transverse,
        })
    }

    /// Disk-and-transverse-velocity integral of the pulled-back `b₀`.
    pub fn transverse_factor(&self, _x: f64, t: f64) -> Result<f64> {
        if self.force.transverse_is_zero() || t == 0.0 {
            return Ok(self.area);
        }
        // The built-in transverse field is rotationally symmetric, so the
        // integral over disk points reduces to a radial one.
        let gl_r = GaussLegendre::new(6);
        let rho_rule = HalfLineRule::new(4.0, 4, 2, 8);
        let n_theta = 16;
        let mut points = Vec::new();
        for (r, wr) in gl_r.on_interval(0.0, self.radius) {
            for (&rho, &wrho) in rho_rule.nodes.iter().zip(&rho_rule.weights) {
                for k in 0..n_theta {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / n_theta as f64;
                    let weight = 2.0 * std::f64::consts::PI * r * wr * rho * wrho
                        * (2.0 * std::f64::consts::PI / n_theta as f64);
                    points.push((r, [rho * th.cos(), rho * th.sin()], weight));
                }
            }
        }
        let vals: Vec<f64> = points
            .par_iter()
            .map(|&(r, vp, weight)| -> Result<f64> {
                let (_, v0) = flow_transverse(&self.force, t, [r, 0.0], vp, 0.0, self.tol)?;
                Ok(weight * self.density.b0(v0))
            })
            .collect::<Result<_>>()?;
        Ok(pairwise_sum(&vals))
    }

    /// `F₀₀(W(t))`, `H(t)` from a face sample. `H` is assembled from the
    /// perturbation itself so it keeps full relative precision.
    pub fn f00_and_h(&self, fs: &FaceSample) -> (f64, f64) {
        let nodes = &self.rule.nodes;
        let weights = &self.rule.weights;
        let mut s0 = Vec::with_capacity(nodes.len());
        let mut sh = Vec::with_capacity(nodes.len());
        for k in 0..nodes.len() {
            let q = weights[k] * self.l_nodes[k];
            let w = nodes[k];
            s0.push(q * (self.density.a0(fs.w - w) - self.density.a0(fs.w + w)));
            sh.push(q * (fs.h_left[k] - fs.h_right[k]));
        }
        let s0 = pairwise_sum(&s0);
        let sh = pairwise_sum(&sh);
        let f00 = self.area * s0;
        let h = (self.area - fs.transverse) * s0 + fs.transverse * sh;
        (f00, h)
    }

    /// Force breakdown without recollisions (`R_W = 0`).
    pub fn breakdown_nb(&self, path: &BodyPath, t: f64) -> Result<ForceBreakdown> {
        let fs = self.face_sample(path, t)?;
        let (f00, h) = self.f00_and_h(&fs);
        Ok(ForceBreakdown::new(t, f00, h, 0.0))
    }

    /// `F₀(t)` along `path`.
    pub fn f0(&self, path: &BodyPath, t: f64) -> Result<f64> {
        Ok(self.breakdown_nb(path, t)?.f0)
    }

    /// `H(t) = F₀₀(W(t)) − F₀(t)`.
    pub fn h_difference(&self, path: &BodyPath, t: f64) -> Result<f64> {
        Ok(self.breakdown_nb(path, t)?.h)
    }
}
