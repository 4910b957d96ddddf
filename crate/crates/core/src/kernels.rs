//! Diffuse reflection kernels.
//!
//! A kernel `K(v1, u1)` gives the density of the outgoing relative horizontal
//! speed `v1` for a particle arriving with relative speed `u1`. All built-in
//! families conserve mass, `∫_0^∞ v K(v, u) dv = |u|`, and have a Gaussian
//! profile in `v`, so `v K(v, u) / |u|` is a Rayleigh-type density.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_adaptive, integrate_half_line};

/// Smallest incoming speed used by the sampler; slower arrivals are clamped.
pub const GRAZING_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// `K = 2β e^{-β v²} |u|`, momentum-flux exponent 1.
    GaussianFlux,
    /// `K = 2 e^{-v²/|u|}`, exponent 3/2.
    SpeedScaled,
    /// `K = 2 |u|^β e^{-v² |u|^{β-1}}` with `β ∈ [-1, 3)`, exponent `(3-β)/2`.
    PowerFamily,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::GaussianFlux => "gaussian-flux",
            KernelFamily::SpeedScaled => "speed-scaled",
            KernelFamily::PowerFamily => "power-family",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gaussian-flux" => Ok(Self::GaussianFlux),
            "speed-scaled" => Ok(Self::SpeedScaled),
            "power-family" => Ok(Self::PowerFamily),
            other => Err(format!("unknown kernel family `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionKernel {
    family: KernelFamily,
    beta: f64,
    p: f64,
    /// Half-line second moment is `moment_coeff · |u|^p`.
    moment_coeff: f64,
}

impl CollisionKernel {
    pub fn new(family: KernelFamily, beta: f64) -> Result<Self> {
        match family {
            KernelFamily::GaussianFlux => Self::gaussian_flux(beta),
            KernelFamily::SpeedScaled => Ok(Self::speed_scaled()),
            KernelFamily::PowerFamily => Self::power_family(beta),
        }
    }

    pub fn gaussian_flux(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Precondition(format!(
                "gaussian-flux kernel needs beta > 0, got {beta}"
            )));
        }
        Ok(Self {
            family: KernelFamily::GaussianFlux,
            beta,
            p: 1.0,
            moment_coeff: PI.sqrt() / (2.0 * beta.sqrt()),
        })
    }

    pub fn speed_scaled() -> Self {
        Self {
            family: KernelFamily::SpeedScaled,
            beta: 0.0,
            p: 1.5,
            moment_coeff: PI.sqrt() / 2.0,
        }
    }

    /// Power family with the mass-conserving constant `C = 2`; the
    /// normalization is re-checked by quadrature here.
    pub fn power_family(beta: f64) -> Result<Self> {
        if !(-1.0..3.0).contains(&beta) {
            return Err(Error::Precondition(format!(
                "power-family kernel needs beta in [-1, 3), got {beta}"
            )));
        }
        let k = Self {
            family: KernelFamily::PowerFamily,
            beta,
            p: (3.0 - beta) / 2.0,
            moment_coeff: PI.sqrt() / 2.0,
        };
        let residual = k.mass_residual(1.0, 1e-12)?;
        assert!(
            residual.abs() < 1e-9,
            "power-family normalization C = 2 fails mass conservation: residual {residual}"
        );
        Ok(k)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Momentum-flux exponent `p` in `∫_0^∞ v² K dv ~ |u|^p`.
    pub fn p(&self) -> f64 {
        self.p
    }

    /// True when the kernel has no finite limit at `u1 = 0`.
    pub fn singular_at_zero(&self) -> bool {
        match self.family {
            KernelFamily::GaussianFlux => false,
            KernelFamily::SpeedScaled => true,
            KernelFamily::PowerFamily => self.beta < 1.0,
        }
    }

    pub fn eval(&self, v1: f64, u1: f64) -> Result<f64> {
        if u1 == 0.0 {
            if self.singular_at_zero() {
                return Err(Error::GrazingSingular {
                    family: self.family.name(),
                });
            }
            return Ok(0.0);
        }
        Ok(self.eval_nonzero(v1, u1))
    }

    /// Kernel value for `u1 != 0` without the grazing check.
    #[inline]
    pub fn eval_nonzero(&self, v1: f64, u1: f64) -> f64 {
        let u = u1.abs();
        let v2 = v1 * v1;
        match self.family {
            KernelFamily::GaussianFlux => 2.0 * self.beta * (-self.beta * v2).exp() * u,
            KernelFamily::SpeedScaled => 2.0 * (-v2 / u).exp(),
            KernelFamily::PowerFamily => {
                2.0 * u.powf(self.beta) * (-v2 * u.powf(self.beta - 1.0)).exp()
            }
        }
    }

    /// Width of the Gaussian profile in `v` at incoming speed `u1`.
    pub fn velocity_scale(&self, u1: f64) -> f64 {
        let u = u1.abs();
        match self.family {
            KernelFamily::GaussianFlux => 1.0 / self.beta.sqrt(),
            KernelFamily::SpeedScaled => u.sqrt(),
            KernelFamily::PowerFamily => u.powf((1.0 - self.beta) / 2.0),
        }
    }

    /// Closed-form `∫_0^∞ v² K(v, u) dv`.
    #[inline]
    pub fn second_moment_half(&self, u1: f64) -> f64 {
        let u = u1.abs();
        if u == 0.0 {
            return 0.0;
        }
        if self.p == 1.0 {
            self.moment_coeff * u
        } else {
            self.moment_coeff * u.powf(self.p)
        }
    }

    /// `∫_0^∞ v^n K(v, u) dv` by quadrature.
    pub fn moment_quad(&self, n: i32, u1: f64, tol: f64) -> Result<f64> {
        if u1 == 0.0 {
            return Ok(0.0);
        }
        let scale = self.velocity_scale(u1);
        integrate_half_line(|v| v.powi(n) * self.eval_nonzero(v, u1), scale, tol)
    }

    /// `∫_0^∞ v K(v, u) dv − |u|`; zero for an exactly mass-conserving kernel.
    pub fn mass_residual(&self, u1: f64, tol: f64) -> Result<f64> {
        if u1 == 0.0 {
            return Ok(0.0);
        }
        let first = self.moment_quad(1, u1, tol * 1e-2)?;
        Ok(first - u1.abs())
    }

    /// `L(u) = u² + ∫_ℝ v² K(v, u) dv`.
    #[inline]
    pub fn l(&self, u1: f64) -> f64 {
        u1 * u1 + 2.0 * self.second_moment_half(u1)
    }

    /// `(L(u), sgn(u) L(u))`.
    pub fn momentum_flux(&self, u1: f64) -> (f64, f64) {
        let l = self.l(u1);
        (l, if u1 == 0.0 { 0.0 } else { u1.signum() * l })
    }

    /// Quadrature route for `(L, L̃)`.
    pub fn momentum_flux_quad(&self, u1: f64, tol: f64) -> Result<(f64, f64)> {
        let l = u1 * u1 + 2.0 * self.moment_quad(2, u1, tol)?;
        Ok((l, if u1 == 0.0 { 0.0 } else { u1.signum() * l }))
    }

    /// Mean outgoing speed of the flux density at incoming speed `u1`.
    pub fn mean_outgoing_speed(&self, u1: f64) -> f64 {
        self.second_moment_half(u1) / u1.abs()
    }

    /// Flux density of outgoing speeds, `v K(v, u) / |u|` on `v > 0`.
    #[inline]
    pub fn flux_density(&self, v: f64, u1: f64) -> f64 {
        if v < 0.0 {
            0.0
        } else {
            v * self.eval_nonzero(v, u1) / u1.abs()
        }
    }
}

/// Result of the numerical integrability check of the kernel majorant.
#[derive(Debug, Clone, Copy)]
pub struct MajorantCheck {
    /// Estimate of `∫ M(z) dz` over the sampled range.
    pub integral: f64,
    /// Share of the estimate carried by the outermost tenth of the range.
    pub tail_share: f64,
    /// False when the sampled majorant is not finite or the tail dominates.
    pub finite: bool,
}

/// Samples `K(v1, z - y - V∞) ⟨z⟩^{-l1}` over `|v1|, |y| < 3γ` and integrates the
/// pointwise maximum in `z`.
pub fn check_majorant(kernel: &CollisionKernel, v_inf: f64, gamma: f64, l1: f64) -> MajorantCheck {
    let span = 3.0 * gamma.max(1e-6);
    let n_inner = 13;
    let grid: Vec<f64> = (0..n_inner)
        .map(|k| -span + 2.0 * span * (k as f64 + 0.5) / n_inner as f64)
        .collect();
    let majorant = |z: f64| -> f64 {
        let weight = (1.0 + z * z).powf(-l1 / 2.0);
        let mut best = 0.0_f64;
        for &v1 in &grid {
            for &y in &grid {
                let u = z - y - v_inf;
                let k = if u == 0.0 {
                    kernel.eval(v1, u).unwrap_or(f64::INFINITY)
                } else {
                    kernel.eval_nonzero(v1, u)
                };
                best = best.max(k * weight);
            }
        }
        best
    };
    let z_max = 200.0;
    let n = 8000;
    let h = 2.0 * z_max / n as f64;
    let mut total = 0.0;
    let mut tail = 0.0;
    for k in 0..n {
        let z = -z_max + h * (k as f64 + 0.5) + 0.5 * h * 1e-3;
        let m = majorant(z);
        total += m * h;
        if z.abs() > 0.9 * z_max {
            tail += m * h;
        }
    }
    let tail_share = if total > 0.0 { tail / total } else { 0.0 };
    MajorantCheck {
        integral: total,
        tail_share,
        finite: total.is_finite() && tail_share < 1e-3,
    }
}

const TABLE_POINTS: usize = 4096;
const BUCKETS_PER_DECADE: usize = 16;
const BUCKET_LOG_MIN: f64 = -4.0;
const BUCKET_LOG_MAX: f64 = 2.0;

/// Quantile table for one incoming speed: `TABLE_POINTS` equally spaced
/// probabilities, linear interpolation between them.
#[derive(Debug, Clone)]
pub struct QuantileTable {
    values: Vec<f64>,
}

impl QuantileTable {
    /// Tabulates the CDF of `density` on `[0, upper]` with the trapezoid rule
    /// on `fine` cells and inverts it.
    pub fn from_density<F: Fn(f64) -> f64>(density: F, upper: f64, fine: usize) -> Self {
        let h = upper / fine as f64;
        let mut cdf = Vec::with_capacity(fine + 1);
        cdf.push(0.0);
        let mut prev = density(0.0);
        let mut acc = 0.0;
        for k in 1..=fine {
            let cur = density(h * k as f64);
            acc += 0.5 * h * (prev + cur);
            cdf.push(acc);
            prev = cur;
        }
        let total = acc;
        let mut values = Vec::with_capacity(TABLE_POINTS);
        let mut j = 0;
        for i in 0..TABLE_POINTS {
            let target = total * i as f64 / (TABLE_POINTS - 1) as f64;
            while j + 1 < fine && cdf[j + 1] < target {
                j += 1;
            }
            let (c0, c1) = (cdf[j], cdf[j + 1]);
            let frac = if c1 > c0 { ((target - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
            values.push(h * (j as f64 + frac));
        }
        values[0] = 0.0;
        Self { values }
    }

    #[inline]
    pub fn quantile(&self, prob: f64) -> f64 {
        let pos = prob.clamp(0.0, 1.0) * (TABLE_POINTS - 1) as f64;
        let idx = (pos as usize).min(TABLE_POINTS - 2);
        let frac = pos - idx as f64;
        self.values[idx] * (1.0 - frac) + self.values[idx + 1] * frac
    }

    pub fn upper(&self) -> f64 {
        self.values[TABLE_POINTS - 1]
    }
}

/// Draws outgoing relative speeds from the flux density `v K(v, u) / |u|`.
///
/// Gaussian-flux kernels use exact Rayleigh inversion. Other families use
/// inverse-CDF tables on a logarithmic grid of incoming speeds in
/// `[1e-4, 1e2]`, blending the quantiles of the two neighbouring buckets.
#[derive(Debug, Clone)]
pub struct OutgoingSpeedSampler {
    kernel: CollisionKernel,
    buckets: Vec<(f64, QuantileTable)>,
}

impl OutgoingSpeedSampler {
    pub fn new(kernel: CollisionKernel) -> Self {
        let buckets = if kernel.family == KernelFamily::GaussianFlux {
            Vec::new()
        } else {
            Self::build_tables(&kernel)
        };
        Self { kernel, buckets }
    }

    /// Forces table construction even for the Gaussian-flux family.
    pub fn tabulated(kernel: CollisionKernel) -> Self {
        Self {
            kernel,
            buckets: Self::build_tables(&kernel),
        }
    }

    fn build_tables(kernel: &CollisionKernel) -> Vec<(f64, QuantileTable)> {
        let n = ((BUCKET_LOG_MAX - BUCKET_LOG_MIN) as usize) * BUCKETS_PER_DECADE + 1;
        (0..n)
            .map(|i| {
                let u = 10f64.powf(BUCKET_LOG_MIN + i as f64 / BUCKETS_PER_DECADE as f64);
                let scale = kernel.velocity_scale(u);
                // Gaussian tail: exp(-x^2) < 1e-16 of the peak beyond x ≈ 6.1.
                let upper = 6.5 * scale;
                let table = QuantileTable::from_density(|v| kernel.flux_density(v, u), upper, 32768);
                (u, table)
            })
            .collect()
    }

    pub fn kernel(&self) -> &CollisionKernel {
        &self.kernel
    }

    pub fn sample<R: Rng + ?Sized>(&self, u1: f64, rng: &mut R) -> Result<f64> {
        self.sample_flagged(u1, rng).map(|(v, _)| v)
    }

    /// Returns the speed and whether `|u1|` had to be clamped to
    /// [`GRAZING_CLAMP`].
    pub fn sample_flagged<R: Rng + ?Sized>(&self, u1: f64, rng: &mut R) -> Result<(f64, bool)> {
        if u1 == 0.0 || !u1.is_finite() {
            return Err(Error::GrazingSingular {
                family: self.kernel.family.name(),
            });
        }
        let clamped = u1.abs() < GRAZING_CLAMP;
        let u = u1.abs().max(GRAZING_CLAMP);
        let prob: f64 = rng.gen();
        Ok((self.quantile(u, prob), clamped))
    }

    /// Quantile of the outgoing-speed distribution at incoming speed `u`.
    pub fn quantile(&self, u: f64, prob: f64) -> f64 {
        if self.buckets.is_empty() {
            // Rayleigh: density 2βv e^{-βv²}.
            return (-(1.0 - prob).ln() / self.kernel.beta).sqrt();
        }
        let pos = (u.log10() - BUCKET_LOG_MIN) * BUCKETS_PER_DECADE as f64;
        let last = self.buckets.len() - 1;
        if pos <= 0.0 {
            let (ub, table) = &self.buckets[0];
            return table.quantile(prob) * self.kernel.velocity_scale(u) / self.kernel.velocity_scale(*ub);
        }
        if pos >= last as f64 {
            let (ub, table) = &self.buckets[last];
            return table.quantile(prob) * self.kernel.velocity_scale(u) / self.kernel.velocity_scale(*ub);
        }
        let idx = pos as usize;
        let frac = pos - idx as f64;
        let lo = self.buckets[idx].1.quantile(prob);
        if frac < 1e-12 {
            return lo;
        }
        let hi = self.buckets[idx + 1].1.quantile(prob);
        lo * (1.0 - frac) + hi * frac
    }
}

/// Empirical two-sided Kolmogorov–Smirnov distance of `samples` against `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Checks that `L` is decreasing on `u < 0` over a sampled grid.
pub fn l_decreasing_on_negative_axis(kernel: &CollisionKernel, u_min: f64, n: usize) -> bool {
    let mut prev = f64::INFINITY;
    for k in 0..=n {
        let u = u_min + (0.0 - u_min) * k as f64 / n as f64;
        let l = kernel.l(u);
        if l > prev {
            return false;
        }
        prev = l;
    }
    true
}

/// Full-line second moment by quadrature on `[-a, a]`; used by tests as an
/// independent route.
pub fn second_moment_full_quad(kernel: &CollisionKernel, u1: f64) -> Result<f64> {
    let scale = kernel.velocity_scale(u1);
    let mut total = 0.0;
    for k in -40..40 {
        let lo = k as f64 * scale;
        total += integrate_adaptive(|v| v * v * kernel.eval_nonzero(v, u1), lo, lo + scale, 1e-300, 1e-14)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn builtins() -> Vec<CollisionKernel> {
        vec![
            CollisionKernel::gaussian_flux(1.0).unwrap(),
            CollisionKernel::speed_scaled(),
            CollisionKernel::power_family(2.0).unwrap(),
            CollisionKernel::power_family(0.0).unwrap(),
            CollisionKernel::power_family(-0.5).unwrap(),
        ]
    }

    #[test]
    fn eval_examples() {
        let g = CollisionKernel::gaussian_flux(1.0).unwrap();
        assert_eq!(g.eval(0.0, 2.0).unwrap(), 4.0);
        let pf = CollisionKernel::power_family(0.0).unwrap();
        let expect = 2.0 * (-1.0f64).exp();
        assert!((pf.eval(1.0, 1.0).unwrap() - expect).abs() < 1e-15);
        let ss = CollisionKernel::speed_scaled();
        for (v, u) in [(0.3, 0.7), (1.2, 2.5), (0.0, 0.01)] {
            assert!((pf.eval(v, u).unwrap() - ss.eval(v, u).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn evenness_in_both_arguments() {
        for k in builtins() {
            for (v, u) in [(0.3, 0.7), (1.2, 2.5), (2.0, 0.05)] {
                let a = k.eval(v, u).unwrap();
                assert_eq!(a, k.eval(-v, u).unwrap());
                assert_eq!(a, k.eval(v, -u).unwrap());
            }
        }
    }

    #[test]
    fn grazing_errors_on_singular_families() {
        assert!(matches!(
            CollisionKernel::speed_scaled().eval(0.5, 0.0),
            Err(Error::GrazingSingular { .. })
        ));
        assert!(CollisionKernel::power_family(0.5).unwrap().eval(0.5, 0.0).is_err());
        assert_eq!(CollisionKernel::power_family(2.0).unwrap().eval(0.5, 0.0).unwrap(), 0.0);
        assert_eq!(CollisionKernel::gaussian_flux(2.0).unwrap().eval(0.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn family_exponents() {
        assert_eq!(CollisionKernel::gaussian_flux(3.0).unwrap().p(), 1.0);
        assert_eq!(CollisionKernel::speed_scaled().p(), 1.5);
        assert_eq!(CollisionKernel::power_family(2.0).unwrap().p(), 0.5);
        assert_eq!(CollisionKernel::power_family(-1.0).unwrap().p(), 2.0);
        assert!(CollisionKernel::power_family(3.0).is_err());
        assert!(CollisionKernel::power_family(-1.5).is_err());
    }

    #[test]
    fn mass_residuals_vanish() {
        for k in builtins() {
            assert_eq!(k.mass_residual(0.0, 1e-10).unwrap(), 0.0);
            for u in [0.1, 0.5, 1.0, 2.0, -0.5] {
                let r = k.mass_residual(u, 1e-10).unwrap();
                assert!(r.abs() <= 1e-10 * f64::max(u.abs(), 1.0), "{:?} u={u} r={r}", k.family());
            }
        }
    }

    #[test]
    fn momentum_flux_examples() {
        let sqrt_pi = PI.sqrt();
        let g = CollisionKernel::gaussian_flux(1.0).unwrap();
        let (l, lt) = g.momentum_flux(-1.0);
        assert!((l - (1.0 + sqrt_pi)).abs() < 1e-14);
        assert!((lt + (1.0 + sqrt_pi)).abs() < 1e-14);
        let (lq, _) = g.momentum_flux_quad(-1.0, 1e-12).unwrap();
        assert!((lq - l).abs() < 1e-10);
        let s = CollisionKernel::speed_scaled();
        assert!((s.momentum_flux(1.0).0 - (1.0 + sqrt_pi)).abs() < 1e-14);
        assert_eq!(g.momentum_flux(0.0), (0.0, 0.0));
        assert_eq!(s.momentum_flux(0.0), (0.0, 0.0));
    }

    #[test]
    fn closed_form_moment_matches_quadrature() {
        for k in builtins() {
            for u in [0.01, 0.3, 1.0, 4.0] {
                let full = second_moment_full_quad(&k, u).unwrap();
                assert!((full - 2.0 * k.second_moment_half(u)).abs() < 1e-10 * full.max(1e-3), "{:?} u={u} {full} {}", k.family(), 2.0 * k.second_moment_half(u));
            }
        }
    }

    #[test]
    fn l_is_even_and_decreasing_for_negative_u() {
        for k in builtins() {
            for u in [0.001, 0.2, 1.7, 5.0] {
                assert!((k.l(u) - k.l(-u)).abs() <= 1e-12);
            }
            assert!(l_decreasing_on_negative_axis(&k, -5.0, 500));
        }
    }

    #[test]
    fn rayleigh_mean_matches_closed_form() {
        let s = OutgoingSpeedSampler::new(CollisionKernel::gaussian_flux(1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.sample(0.4, &mut rng).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - PI.sqrt() / 2.0).abs() < 3.0 * se);
        assert!(xs.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn sampler_rejects_zero_and_flags_clamp() {
        let s = OutgoingSpeedSampler::new(CollisionKernel::speed_scaled());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(s.sample(0.0, &mut rng).is_err());
        let (v, clamped) = s.sample_flagged(1e-9, &mut rng).unwrap();
        assert!(clamped && v >= 0.0);
        let (_, clamped) = s.sample_flagged(0.5, &mut rng).unwrap();
        assert!(!clamped);
    }

    #[test]
    fn sampler_moments_match_quadrature() {
        for k in [CollisionKernel::speed_scaled(), CollisionKernel::power_family(2.0).unwrap()] {
            let s = OutgoingSpeedSampler::new(k);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for u in [0.05, 0.37, 1.0, 3.3] {
                let n = 100_000;
                let xs: Vec<f64> = (0..n).map(|_| s.sample(u, &mut rng).unwrap()).collect();
                let m1 = xs.iter().sum::<f64>() / n as f64;
                let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
                let q1 = k.moment_quad(2, u, 1e-12).unwrap() / u;
                let q2 = k.moment_quad(3, u, 1e-12).unwrap() / u;
                let q4 = k.moment_quad(5, u, 1e-12).unwrap() / u;
                let se1 = ((q2 - q1 * q1) / n as f64).sqrt();
                let se2 = ((q4 - q2 * q2) / n as f64).sqrt();
                assert!((m1 - q1).abs() < 3.0 * se1, "{:?} u={u}", k.family());
                assert!((m2 - q2).abs() < 3.0 * se2, "{:?} u={u}", k.family());
            }
        }
    }

    #[test]
    fn majorant_integrable_for_builtins() {
        for k in builtins() {
            let c = check_majorant(&k, 0.0, 0.02, 4.5);
            assert!(c.finite, "{:?}: {c:?}", k.family());
        }
    }
}
