//! Quadrature primitives: Gauss–Legendre rules, adaptive Gauss–Kronrod on
//! finite intervals and a half-line integrator that stops once the integrand
//! has decayed below a fixed fraction of its peak.

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.on_interval(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

// 7-point Gauss / 15-point Kronrod pair.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let fsum = f(c - dx) + f(c + dx);
        kron += WGK[j] * fsum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fsum;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod integration on `[a, b]` with global error control.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (i0, e0) = gk15(&mut f, a, b);
    let mut segments = vec![(a, b, i0, e0)];
    let mut total = i0;
    let mut err = e0;
    let max_segments = 4000;
    loop {
        if !(total.is_finite() && err.is_finite()) {
            return Err(Error::Quadrature {
                lo: a,
                hi: b,
                partial: total,
                error: err,
            });
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        if segments.len() >= max_segments {
            return Err(Error::Quadrature {
                lo: a,
                hi: b,
                partial: total,
                error: err,
            });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty segment list");
        let (sa, sb, si, se) = segments.swap_remove(worst);
        let mid = 0.5 * (sa + sb);
        if mid <= sa || mid >= sb {
            // Interval exhausted at machine resolution.
            return Err(Error::Quadrature {
                lo: a,
                hi: b,
                partial: total,
                error: err,
            });
        }
        let (il, el) = gk15(&mut f, sa, mid);
        let (ir, er) = gk15(&mut f, mid, sb);
        total += il + ir - si;
        err += el + er - se;
        segments.push((sa, mid, il, el));
        segments.push((mid, sb, ir, er));
        if err < 0.0 {
            err = segments.iter().map(|s| s.3).sum();
        }
    }
    Ok(total)
}

/// Integral of `f` over `[0, inf)`.
///
/// The half-line is swept in geometrically growing slabs starting at width
/// `scale`; the sweep ends once the integrand on a slab has dropped below
/// `1e-16` of the largest magnitude seen so far.
pub fn integrate_half_line<F: FnMut(f64) -> f64>(mut f: F, scale: f64, tol: f64) -> Result<f64> {
    assert!(scale > 0.0);
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut width = scale;
    let mut peak = 0.0_f64;
    for _ in 0..200 {
        let hi = lo + width;
        let mut probe_max = 0.0_f64;
        for k in 0..=8 {
            let x = lo + width * k as f64 / 8.0;
            probe_max = probe_max.max(f(x).abs());
        }
        peak = peak.max(probe_max);
        let part = integrate_adaptive(&mut f, lo, hi, tol * 1e-3, tol)?;
        total += part;
        let tail_edge = f(hi).abs();
        if peak > 0.0 && tail_edge < 1e-16 * peak && probe_max < 1e-8 * peak {
            return Ok(total);
        }
        if peak == 0.0 && lo > 1e3 * scale {
            return Ok(total);
        }
        lo = hi;
        width *= 2.0;
    }
    Err(Error::Quadrature {
        lo: 0.0,
        hi: lo,
        partial: total,
        error: f64::NAN,
    })
}

/// A fixed composite rule on `(0, inf)` built for one-sided relative-velocity
/// integrals: geometrically graded Gauss–Legendre panels on `(0, cut]` and a
/// reciprocal map `w = cut / s` for the tail.
#[derive(Debug, Clone)]
pub struct HalfLineRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub cut: f64,
    pub subdivisions: usize,
}

impl HalfLineRule {
    /// `levels` geometric panels `[cut 2^-j-1, cut 2^-j]`, each split into
    /// `subdivisions` equal panels of `order` nodes, plus the innermost
    /// panel and a tail panel.
    pub fn new(cut: f64, levels: usize, subdivisions: usize, order: usize) -> Self {
        let gl = GaussLegendre::new(order);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut edges = vec![0.0];
        for j in (0..levels).rev() {
            edges.push(cut * 0.5_f64.powi(j as i32 + 1));
        }
        edges.push(cut);
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let sub = (b - a) / subdivisions as f64;
            for k in 0..subdivisions {
                let lo = a + sub * k as f64;
                for (x, w) in gl.on_interval(lo, lo + sub) {
                    nodes.push(x);
                    weights.push(w);
                }
            }
        }
        // Tail: w = cut / s, dw = cut / s^2 ds, s in (0, 1].
        let tail_panels = 2 * subdivisions;
        for k in 0..tail_panels {
            let lo = k as f64 / tail_panels as f64;
            let hi = (k + 1) as f64 / tail_panels as f64;
            for (s, w) in gl.on_interval(lo, hi) {
                nodes.push(cut / s);
                weights.push(w * cut / (s * s));
            }
        }
        Self {
            nodes,
            weights,
            cut,
            subdivisions,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Pairwise (cascade) sum; the result depends only on the order of `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(8);
        let exact = 2.0 / 15.0; // x^14 over [-1,1]
        let got = gl.integrate(-1.0, 1.0, |x| x.powi(14));
        assert!((got - exact).abs() < 1e-14);
        let w: f64 = gl.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let got = integrate_adaptive(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-13, 1e-13).unwrap();
        assert!((got - (0.045 + 0.245)).abs() < 1e-12);
    }

    #[test]
    fn half_line_gaussian_moment() {
        let got = integrate_half_line(|v| v * v * (-v * v).exp(), 1.0, 1e-13).unwrap();
        assert!((got - std::f64::consts::PI.sqrt() / 4.0).abs() < 1e-13);
    }

    #[test]
    fn half_line_rule_algebraic_tail() {
        let rule = HalfLineRule::new(8.0, 12, 2, 8);
        // \int_0^inf (1+w^2)^{-2} dw = pi/4
        let got = rule.integrate(|w| (1.0 + w * w).powi(-2));
        assert!((got - std::f64::consts::FRAC_PI_4).abs() < 1e-10, "{got}");
    }

    #[test]
    fn nonconvergence_reports_partial_sum() {
        let err = integrate_adaptive(|x: f64| 1.0 / x.abs().sqrt().max(1e-300).powi(3), -1.0, 1.0, 1e-14, 1e-14);
        match err {
            Err(Error::Quadrature { partial, .. }) => assert!(partial.is_finite() || partial.is_infinite()),
            other => panic!("expected quadrature error, got {other:?}"),
        }
    }
}
