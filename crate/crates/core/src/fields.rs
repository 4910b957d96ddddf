//! External force field, initial density and parameter admissibility.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::forces::ForceModel;
use crate::kernels::CollisionKernel;
use crate::quadrature::integrate_half_line;

/// Japanese bracket `⟨z⟩ = √(1 + z²)`.
#[inline]
pub fn bracket(z: f64) -> f64 {
    z.hypot(1.0)
}

/// Horizontal component `G₁(t, x₁)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HorizontalField {
    /// `sign · c_G ⟨t⟩^{-q} ⟨x₁⟩^{-m}`.
    Decaying { c_g: f64, q: f64, m: f64, sign: f64 },
    /// Uniform constant acceleration. For tests only: no decay is enforced.
    Constant(f64),
}

/// Transverse component `G⊥(t, x⊥)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransverseField {
    Zero,
    /// `-c_G ⟨t⟩^{-q} x⊥ / ⟨x⊥⟩`, a confining pull toward the axis.
    Radial { c_g: f64, q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalForce {
    pub g1: HorizontalField,
    pub gperp: TransverseField,
}

impl ExternalForce {
    pub fn none() -> Self {
        Self::decaying(0.0, 3.5, 2.5, 1.0)
    }

    pub fn decaying(c_g: f64, q: f64, m: f64, sign: f64) -> Self {
        Self {
            g1: HorizontalField::Decaying {
                c_g,
                q,
                m,
                sign: if sign < 0.0 { -1.0 } else { 1.0 },
            },
            gperp: TransverseField::Zero,
        }
    }

    pub fn constant(g: f64) -> Self {
        Self {
            g1: HorizontalField::Constant(g),
            gperp: TransverseField::Zero,
        }
    }

    pub fn with_transverse(mut self, gperp: TransverseField) -> Self {
        self.gperp = gperp;
        self
    }

    pub fn c_g(&self) -> f64 {
        match self.g1 {
            HorizontalField::Decaying { c_g, .. } => c_g,
            HorizontalField::Constant(g) => g.abs(),
        }
    }

    pub fn q(&self) -> f64 {
        match self.g1 {
            HorizontalField::Decaying { q, .. } => q,
            HorizontalField::Constant(_) => 0.0,
        }
    }

    pub fn m(&self) -> f64 {
        match self.g1 {
            HorizontalField::Decaying { m, .. } => m,
            HorizontalField::Constant(_) => 0.0,
        }
    }

    pub fn horizontal_is_zero(&self) -> bool {
        match self.g1 {
            HorizontalField::Decaying { c_g, .. } => c_g == 0.0,
            HorizontalField::Constant(g) => g == 0.0,
        }
    }

    pub fn transverse_is_zero(&self) -> bool {
        match self.gperp {
            TransverseField::Zero => true,
            TransverseField::Radial { c_g, .. } => c_g == 0.0,
        }
    }

    #[inline]
    pub fn g1(&self, t: f64, x1: f64) -> f64 {
        match self.g1 {
            HorizontalField::Decaying { c_g, q, m, sign } => {
                if c_g == 0.0 {
                    return 0.0;
                }
                sign * c_g * decay_factor(t, q) * decay_factor(x1, m)
            }
            HorizontalField::Constant(g) => g,
        }
    }

    #[inline]
    pub fn gperp(&self, t: f64, xp: [f64; 2]) -> [f64; 2] {
        match self.gperp {
            TransverseField::Zero => [0.0, 0.0],
            TransverseField::Radial { c_g, q } => {
                let s = -c_g * decay_factor(t, q) / bracket(xp[0].hypot(xp[1]));
                [s * xp[0], s * xp[1]]
            }
        }
    }

    pub fn eval(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        let p = self.gperp(t, [x[1], x[2]]);
        [self.g1(t, x[0]), p[0], p[1]]
    }

    /// Upper bound of `|G₁(s, ·)|` over all positions.
    #[inline]
    pub fn horizontal_sup(&self, s: f64) -> f64 {
        match self.g1 {
            HorizontalField::Decaying { c_g, q, .. } => c_g * decay_factor(s, q),
            HorizontalField::Constant(g) => g.abs(),
        }
    }

    /// Bound on `(1/t) ∫_0^t r sup|G₁(r)| dr`, the largest deviation of a
    /// characteristic's mean velocity from its endpoint velocity over `[0, t]`.
    pub fn mean_velocity_drift(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self.g1 {
            HorizontalField::Decaying { c_g, q, .. } => {
                if c_g == 0.0 {
                    return 0.0;
                }
                // ⟨r⟩^{-q} ≤ 2^{q/2} (1+r)^{-q}
                let a = 2f64.powf(q / 2.0) * c_g;
                let i1 = if (q - 2.0).abs() < 1e-12 {
                    (1.0 + t).ln()
                } else {
                    (1.0 - (1.0 + t).powf(2.0 - q)) / (q - 2.0)
                };
                let i2 = (1.0 - (1.0 + t).powf(1.0 - q)) / (q - 1.0);
                a * (i1 - i2) / t
            }
            HorizontalField::Constant(g) => g.abs() * t / 2.0,
        }
    }

    /// Verifies `|G₁| ⟨t⟩^q ⟨x₁⟩^m ≤ c_G` and `|G⊥| ⟨t⟩^q ≤ c_G` on a sample grid.
    pub fn check_decay_on_grid(&self, n: usize) -> bool {
        let HorizontalField::Decaying { c_g, q, m, .. } = self.g1 else {
            return true;
        };
        for i in 0..n {
            let t = 100.0 * (i as f64 / (n - 1).max(1) as f64).powi(2);
            for j in 0..n {
                let x = -50.0 + 100.0 * j as f64 / (n - 1).max(1) as f64;
                let g = self.g1(t, x).abs() * bracket(t).powf(q) * bracket(x).powf(m);
                if g > c_g * (1.0 + 1e-12) {
                    return false;
                }
                let gp = self.gperp(t, [x, 0.5 * x]);
                let bound = match self.gperp {
                    TransverseField::Zero => 0.0,
                    TransverseField::Radial { c_g, q } => c_g * decay_factor(t, q),
                };
                if gp[0].hypot(gp[1]) > bound * (1.0 + 1e-12) {
                    return false;
                }
            }
        }
        true
    }
}

#[inline]
fn decay_factor(z: f64, exponent: f64) -> f64 {
    let s = 1.0 + z * z;
    if exponent == 2.5 {
        1.0 / (s * s.sqrt().sqrt())
    } else if exponent == 3.5 {
        let r = s.sqrt();
        1.0 / (s * r * r.sqrt())
    } else {
        s.powf(-0.5 * exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityFamily {
    /// `a₀ = e^{-v²/w²}/(w√π)`, `b₀ = e^{-|v⊥|²}/π`.
    Gaussian { width: f64 },
    /// `a₀ ∝ ⟨v₁⟩^{-l₁-1}`, `b₀ ∝ ⟨v⊥⟩^{-l₂-1}`.
    Algebraic,
}

/// Product-form initial density `f₀(v) = a₀(v₁) b₀(v⊥)` with unit masses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialDensity {
    pub family: DensityFamily,
    pub l1: f64,
    pub l2: f64,
    a_norm: f64,
    b_norm: f64,
}

impl InitialDensity {
    pub fn gaussian(width: f64, l1: f64, l2: f64) -> Self {
        Self {
            family: DensityFamily::Gaussian { width },
            l1,
            l2,
            a_norm: 1.0 / (width * PI.sqrt()),
            b_norm: 1.0 / PI,
        }
    }

    pub fn algebraic(l1: f64, l2: f64) -> Result<Self> {
        if !(l1 > 0.0 && l2 > 1.0) {
            return Err(Error::Precondition(format!(
                "algebraic density needs l1 > 0 and l2 > 1, got l1={l1}, l2={l2}"
            )));
        }
        let n = l1 + 1.0;
        let half = integrate_half_line(|v| (1.0 + v * v).powf(-0.5 * n), 1.0, 1e-13)?;
        Ok(Self {
            family: DensityFamily::Algebraic,
            l1,
            l2,
            a_norm: 1.0 / (2.0 * half),
            b_norm: (l2 - 1.0) / (2.0 * PI),
        })
    }

    /// Characteristic width of `a₀`.
    pub fn width(&self) -> f64 {
        match self.family {
            DensityFamily::Gaussian { width } => width,
            DensityFamily::Algebraic => 1.0,
        }
    }

    #[inline]
    pub fn a0(&self, v1: f64) -> f64 {
        match self.family {
            DensityFamily::Gaussian { width } => {
                let z = v1 / width;
                self.a_norm * (-z * z).exp()
            }
            DensityFamily::Algebraic => self.a_norm * (1.0 + v1 * v1).powf(-0.5 * (self.l1 + 1.0)),
        }
    }

    #[inline]
    pub fn a0_prime(&self, v1: f64) -> f64 {
        match self.family {
            DensityFamily::Gaussian { width } => -2.0 * v1 / (width * width) * self.a0(v1),
            DensityFamily::Algebraic => -(self.l1 + 1.0) * v1 / (1.0 + v1 * v1) * self.a0(v1),
        }
    }

    /// `a₀(u + δ) − a₀(u)` without cancellation for small `δ`.
    #[inline]
    pub fn a0_diff(&self, u: f64, delta: f64) -> f64 {
        if delta == 0.0 {
            return 0.0;
        }
        match self.family {
            DensityFamily::Gaussian { width } => {
                let e = -delta * (2.0 * u + delta) / (width * width);
                self.a0(u) * e.exp_m1()
            }
            DensityFamily::Algebraic => {
                let r = delta * (2.0 * u + delta) / (1.0 + u * u);
                self.a0(u) * (-0.5 * (self.l1 + 1.0) * r.ln_1p()).exp_m1()
            }
        }
    }

    #[inline]
    pub fn b0(&self, vp: [f64; 2]) -> f64 {
        let r2 = vp[0] * vp[0] + vp[1] * vp[1];
        match self.family {
            DensityFamily::Gaussian { .. } => self.b_norm * (-r2).exp(),
            DensityFamily::Algebraic => self.b_norm * (1.0 + r2).powf(-0.5 * (self.l2 + 1.0)),
        }
    }

    fn b0_grad(&self, vp: [f64; 2]) -> [f64; 2] {
        let b = self.b0(vp);
        let c = match self.family {
            DensityFamily::Gaussian { .. } => -2.0,
            DensityFamily::Algebraic => {
                -(self.l2 + 1.0) / (1.0 + vp[0] * vp[0] + vp[1] * vp[1])
            }
        };
        [c * vp[0] * b, c * vp[1] * b]
    }

    /// `f₀(v)` and its gradient.
    pub fn eval(&self, v: [f64; 3]) -> (f64, [f64; 3]) {
        let a = self.a0(v[0]);
        let da = self.a0_prime(v[0]);
        let vp = [v[1], v[2]];
        let b = self.b0(vp);
        let db = self.b0_grad(vp);
        (a * b, [da * b, a * db[0], a * db[1]])
    }

    /// Largest sampled value of `|∇f₀| ⟨v₁⟩^{l₁+1} ⟨v⊥⟩^{l₂+1}`.
    pub fn gradient_tail_constant(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..81 {
            let v1 = -40.0 + i as f64;
            for j in 0..41 {
                let r = j as f64;
                let (_, g) = self.eval([v1, r, 0.0]);
                let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                let w = bracket(v1).powf(self.l1 + 1.0) * bracket(r).powf(self.l2 + 1.0);
                worst = worst.max(norm * w);
            }
        }
        worst
    }
}

/// `J = −G(s, x)·∇_v f₀(v)`.
pub fn source_j(field: &ExternalForce, f0: &InitialDensity, s: f64, x: [f64; 3], v: [f64; 3]) -> f64 {
    let g = field.eval(s, x);
    let (_, grad) = f0.eval(v);
    -(g[0] * grad[0] + g[1] * grad[1] + g[2] * grad[2])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub kernel: CollisionKernel,
    pub force: ExternalForce,
    pub density: InitialDensity,
    /// Constant horizontal body force.
    pub e: f64,
    /// Disk radius.
    pub r: f64,
    /// Initial body velocity.
    pub v0: f64,
}

impl ModelConfig {
    /// The scenario used throughout the test suite: gaussian-flux kernel with
    /// β = 1, c_G = 10⁻³, q = 3.5, m = 2.5, Gaussian densities and γ = 0.02.
    pub fn reference() -> Self {
        Self {
            kernel: CollisionKernel::gaussian_flux(1.0).expect("beta = 1 is valid"),
            force: ExternalForce::decaying(1e-3, 3.5, 2.5, 1.0),
            density: InitialDensity::gaussian(1.0, 5.0, 2.0),
            e: 0.0,
            r: 0.35,
            v0: 0.02,
        }
    }

    pub fn area(&self) -> f64 {
        PI * self.r * self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayBudget {
    pub p: f64,
    pub mu: f64,
    pub sigma: f64,
    /// `|V(0) − V∞|`.
    pub gamma: f64,
    pub v_inf: f64,
    pub b0_rate: f64,
    /// Envelope constant; fitted later, validated here at its floor `A = 1`.
    pub a: f64,
}

impl DecayBudget {
    /// Whether the smallness condition `c_G < γ^{2p+1}/2` holds.
    pub fn small_field(&self, c_g: f64) -> bool {
        c_g < 0.5 * self.gamma.powf(2.0 * self.p + 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub inequality: &'static str,
    /// Signed amount by which the inequality fails (non-positive).
    pub margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub notes: Vec<String>,
}

impl ValidationReport {
    fn require(&mut self, inequality: &'static str, margin: f64) {
        if !(margin > 0.0) {
            self.violations.push(Violation { inequality, margin });
        }
    }

    fn require_non_strict(&mut self, inequality: &'static str, margin: f64) {
        if !(margin >= 0.0) {
            self.violations.push(Violation { inequality, margin });
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  violated: {} (margin {:.6e})", v.inequality, v.margin)?;
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        Ok(())
    }
}

/// Checks every admissibility inequality and returns the derived exponents.
/// All violations are collected before returning.
pub fn validate_config(cfg: &ModelConfig) -> Result<DecayBudget> {
    validate_config_with_notes(cfg).map(|(b, _)| b)
}

/// Same as [`validate_config`], also returning the non-fatal notes.
pub fn validate_config_with_notes(cfg: &ModelConfig) -> Result<(DecayBudget, Vec<String>)> {
    let mut report = ValidationReport::default();
    let p = cfg.kernel.p();
    let (c_g, q, m) = (cfg.force.c_g(), cfg.force.q(), cfg.force.m());
    let (l1, l2) = (cfg.density.l1, cfg.density.l2);

    report.require("p > 0", p);
    report.require_non_strict("p <= 2", 2.0 - p);
    report.require("q > 2", q - 2.0);
    report.require("m > 0", m);
    report.require("l1 > q + 1", l1 - (q + 1.0));
    report.require("l2 > 1", l2 - 1.0);
    report.require("R > 0", cfg.r);
    if let HorizontalField::Constant(_) = cfg.force.g1 {
        report.violations.push(Violation {
            inequality: "G1 decays in time and space",
            margin: 0.0,
        });
    }
    let mu = m.min(q - 1.0);
    report.require("mu > 1 + 1/p", mu - (1.0 + 1.0 / p));
    let sigma = 1.0 / (1.0 / (p + 1.0) + 1.0 / mu);

    let mut gamma = f64::NAN;
    let mut v_inf = f64::NAN;
    let mut b0_rate = f64::NAN;
    match ForceModel::new(cfg) {
        Ok(model) => match model.equilibrium_velocity(cfg.e, 0.0) {
            Ok((v, _)) => {
                v_inf = v;
                gamma = (cfg.v0 - v).abs();
                match model.equilibrium_velocity(cfg.e, gamma) {
                    Ok((_, b0)) => b0_rate = b0,
                    Err(e) => report.notes.push(format!("rate b0 unavailable: {e}")),
                }
            }
            Err(e) => {
                report.violations.push(Violation {
                    inequality: "E within the range of F00",
                    margin: f64::NAN,
                });
                report.notes.push(e.to_string());
            }
        },
        Err(e) => report.notes.push(format!("force model unavailable: {e}")),
    }
    if gamma.is_finite() {
        if c_g > 0.0 {
            report.require("gamma > 2 c_G", gamma - 2.0 * c_g);
        }
        report.require("A gamma < 1", 1.0 - gamma);
        if !(c_g < 0.5 * gamma.powf(2.0 * p + 1.0)) && c_g > 0.0 {
            report
                .notes
                .push(format!("c_G = {c_g:e} is not below gamma^(2p+1)/2 = {:e}", 0.5 * gamma.powf(2.0 * p + 1.0)));
        }
    }
    if b0_rate.is_finite() {
        report.require("b0 > 0", b0_rate);
    }
    if !report.violations.is_empty() {
        return Err(Error::Validation(report));
    }
    Ok((
        DecayBudget {
            p,
            mu,
            sigma,
            gamma,
            v_inf,
            b0_rate,
            a: 1.0,
        },
        report.notes,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::CollisionKernel;

    fn cfg_with(kernel: CollisionKernel, q: f64, m: f64, l1: f64) -> ModelConfig {
        ModelConfig {
            kernel,
            force: ExternalForce::decaying(1e-3, q, m, 1.0),
            density: InitialDensity::gaussian(1.0, l1, 2.0),
            ..ModelConfig::reference()
        }
    }

    #[test]
    fn sigma_for_reference_exponents() {
        let b = validate_config(&ModelConfig::reference()).unwrap();
        assert_eq!(b.mu, 2.5);
        assert!((b.sigma - 10.0 / 9.0).abs() < 1e-14);
        assert!(b.sigma <= b.p + 1.0);
        assert!((b.gamma - 0.02).abs() < 1e-15);
        assert!(b.b0_rate > 0.0);
    }

    #[test]
    fn rejects_small_mu_and_lists_every_violation() {
        let cfg = cfg_with(CollisionKernel::gaussian_flux(1.0).unwrap(), 2.1, 0.5, 5.0);
        match validate_config(&cfg) {
            Err(Error::Validation(r)) => {
                let names: Vec<_> = r.violations.iter().map(|v| v.inequality).collect();
                assert!(names.contains(&"mu > 1 + 1/p"), "{names:?}");
                let mu = r.violations.iter().find(|v| v.inequality == "mu > 1 + 1/p").unwrap();
                assert!((mu.margin + 1.5).abs() < 1e-12);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
        let mut bad = cfg;
        bad.density.l2 = 0.5;
        bad.v0 = 0.0015;
        let Err(Error::Validation(r)) = validate_config(&bad) else { panic!() };
        assert!(r.violations.len() >= 3, "{r}");
    }

    #[test]
    fn accepts_quadratic_flux_regime() {
        // p = 2 from the power family with beta = -1.
        let cfg = cfg_with(CollisionKernel::power_family(-1.0).unwrap(), 2.6, 1.6, 4.0);
        let b = validate_config(&cfg).unwrap();
        assert_eq!(b.p, 2.0);
        assert!((b.mu - 1.6).abs() < 1e-15);
    }

    #[test]
    fn force_examples() {
        let g = ExternalForce::decaying(1e-3, 3.5, 2.5, 1.0);
        assert_eq!(g.eval(0.0, [0.0, 0.3, 0.4]), [1e-3, 0.0, 0.0]);
        assert!((g.g1(1.0, 1.0) - 1.25e-4).abs() < 1e-18);
        assert!(g.check_decay_on_grid(20));
        let neg = ExternalForce::decaying(1e-3, 3.5, 2.5, -1.0);
        assert_eq!(neg.g1(0.0, 0.0), -1e-3);
        let radial = g.with_transverse(TransverseField::Radial { c_g: 1e-3, q: 3.5 });
        assert!(radial.check_decay_on_grid(20));
    }

    #[test]
    fn density_examples() {
        let f0 = InitialDensity::gaussian(1.0, 5.0, 2.0);
        let (d, g) = f0.eval([0.0, 0.0, 0.0]);
        assert!((d - 1.0 / PI.powf(1.5)).abs() < 1e-15);
        assert_eq!(g, [0.0, 0.0, 0.0]);
        for v in [[0.3, -1.2, 0.7], [2.0, 0.1, -0.4]] {
            let (a, _) = f0.eval(v);
            let (b, _) = f0.eval([-v[0], -v[1], -v[2]]);
            assert_eq!(a, b);
        }
        let alg = InitialDensity::algebraic(4.0, 2.0).unwrap();
        assert!((alg.a0(2.0) / alg.a0(0.0) - 5f64.powf(-2.5)).abs() < 1e-15);
        let mass = 2.0 * integrate_half_line(|v| alg.a0(v), 1.0, 1e-12).unwrap();
        assert!((mass - 1.0).abs() < 1e-10);
        let bmass = 2.0 * PI * integrate_half_line(|r| r * alg.b0([r, 0.0]), 1.0, 1e-12).unwrap();
        assert!((bmass - 1.0).abs() < 1e-7);
        assert!(f0.gradient_tail_constant().is_finite());
    }

    #[test]
    fn a0_diff_is_precise() {
        for f0 in [InitialDensity::gaussian(1.0, 5.0, 2.0), InitialDensity::algebraic(5.0, 2.0).unwrap()] {
            for (u, d) in [(0.3, 1e-14), (1.5, -2e-9), (-0.7, 0.25)] {
                let direct = f0.a0(u + d) - f0.a0(u);
                let precise = f0.a0_diff(u, d);
                let slope = f0.a0_prime(u) * d;
                if d.abs() < 1e-6 {
                    assert!((precise - slope).abs() < 1e-6 * slope.abs());
                } else {
                    assert!((precise - direct).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn source_examples() {
        let f0 = InitialDensity::gaussian(1.0, 5.0, 2.0);
        let g = ExternalForce::decaying(1e-3, 3.5, 2.5, 1.0);
        assert_eq!(source_j(&g, &f0, 0.0, [0.0; 3], [0.0, 0.4, 0.1]), 0.0);
        assert_eq!(source_j(&ExternalForce::none(), &f0, 1.0, [0.2; 3], [0.5, 0.4, 0.1]), 0.0);
        let vp = [0.4, 0.1];
        let expect = -1e-3 * (-2.0 * (-1.0f64).exp() / PI.sqrt()) * f0.b0(vp);
        let got = source_j(&g, &f0, 0.0, [0.0; 3], [1.0, vp[0], vp[1]]);
        assert!((got - expect).abs() < 1e-18);
    }
}
