//! Least-squares fits used for decay-rate estimates.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// Ordinary least squares `y ≈ intercept + slope·x`. `None` with fewer than
/// two distinct abscissae.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys).take(n) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
        n,
    })
}

/// Slope of `log|y|` against `log(1 + t)` over samples with `t ∈ [lo, hi]`
/// and `|y| > floor`.
pub fn loglog_slope(ts: &[f64], ys: &[f64], lo: f64, hi: f64, floor: f64) -> Option<LinearFit> {
    let (xs, ls): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(ys)
        .filter(|(&t, &y)| t >= lo && t <= hi && y.abs() > floor)
        .map(|(&t, &y)| ((1.0 + t).ln(), y.abs().ln()))
        .unzip();
    linear_fit(&xs, &ls)
}

/// Slope of `log|y|` against `t` on `[lo, hi]` (negative of an exponential rate).
pub fn semilog_slope(ts: &[f64], ys: &[f64], lo: f64, hi: f64, floor: f64) -> Option<LinearFit> {
    let (xs, ls): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(ys)
        .filter(|(&t, &y)| t >= lo && t <= hi && y.abs() > floor)
        .map(|(&t, &y)| (t, y.abs().ln()))
        .unzip();
    linear_fit(&xs, &ls)
}

/// Mean and standard error of the mean.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-15 && (f.intercept - 2.0).abs() < 1e-15);
        assert!((f.r2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn power_law_slope() {
        let ts: Vec<f64> = (0..100).map(|i| 10.0 * i as f64).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 * (1.0 + t).powf(-1.7)).collect();
        let f = loglog_slope(&ts, &ys, 20.0, 1000.0, 0.0).unwrap();
        assert!((f.slope + 1.7).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(linear_fit(&[1.0], &[2.0]).is_none());
        assert!(linear_fit(&[1.0, 1.0], &[2.0, 3.0]).is_none());
        let (m, se) = mean_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }
}
