//! Decay-rate fits on a velocity series.

use kinsea::fixedpoint::{envelope_check, VelocityEnvelope};
use kinsea::path::BodyPath;
use kinsea::stats::{linear_fit, LinearFit};

/// Deviations below this are treated as numerically zero.
pub const FIT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    /// Exponential rate from the early window.
    pub b0_hat: Option<f64>,
    /// Algebraic exponent from the late window.
    pub sigma_hat: Option<f64>,
    pub fitted_a: Option<f64>,
    pub envelope_pass: Option<bool>,
    pub early: Option<LinearFit>,
    pub late: Option<LinearFit>,
    pub early_window: (f64, f64),
    pub late_window: (f64, f64),
    pub notices: Vec<String>,
}

/// Parameters the windows and envelope depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitTargets {
    pub v_inf: f64,
    pub b0: f64,
    pub gamma: f64,
    pub p: f64,
    pub sigma: f64,
}

fn window_fit(
    ts: &[f64],
    dev: &[f64],
    lo: f64,
    hi: f64,
    x_of: impl Fn(f64) -> f64,
    name: &str,
    notices: &mut Vec<String>,
) -> Option<LinearFit> {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(dev)
        .filter(|(&t, _)| t >= lo && t <= hi)
        .map(|(&t, &d)| (t, d))
        .collect();
    if pts.len() < 2 {
        notices.push(format!("{name} window [{lo}, {hi}] has fewer than two samples; skipped"));
        return None;
    }
    if pts.iter().any(|&(_, d)| d.abs() < FIT_FLOOR) {
        notices.push(format!("{name} window [{lo}, {hi}]: |V - V_inf| below {FIT_FLOOR:e}; skipped"));
        return None;
    }
    let xs: Vec<f64> = pts.iter().map(|&(t, _)| x_of(t)).collect();
    let ys: Vec<f64> = pts.iter().map(|&(_, d)| d.abs().ln()).collect();
    linear_fit(&xs, &ys)
}

/// Early window `[0, 5/b₀]` for the exponential rate, late window
/// `[t_end/10, t_end]` for the algebraic exponent, envelope fit on all samples.
pub fn fit_decay(ts: &[f64], vs: &[f64], targets: &FitTargets) -> DecayFit {
    let mut notices = Vec::new();
    let t_end = ts.last().copied().unwrap_or(0.0);
    let early_window = (0.0, 5.0 / targets.b0);
    let late_window = (t_end / 10.0, t_end);
    if early_window.1 >= late_window.0 {
        notices.push(format!(
            "early window ends at {} after the late window starts at {}",
            early_window.1, late_window.0
        ));
    }
    let dev: Vec<f64> = vs.iter().map(|v| v - targets.v_inf).collect();
    let early = window_fit(ts, &dev, early_window.0, early_window.1, |t| t, "early", &mut notices);
    let late = if early_window.1 < late_window.0 {
        window_fit(ts, &dev, late_window.0, late_window.1, |t| (1.0 + t).ln(), "late", &mut notices)
    } else {
        None
    };
    let (fitted_a, envelope_pass) = uniform_path(ts, vs)
        .map(|path| {
            let env = VelocityEnvelope {
                gamma: targets.gamma,
                a: 1.0,
                sigma: targets.sigma,
                b0_rate: targets.b0,
                p: targets.p,
            };
            let c = envelope_check(&path, targets.v_inf, &env);
            (Some(c.fitted_a), Some(c.pass))
        })
        .unwrap_or_else(|| {
            notices.push("samples are not uniformly spaced; envelope fit skipped".into());
            (None, None)
        });
    DecayFit {
        b0_hat: early.map(|f| -f.slope),
        sigma_hat: late.map(|f| -f.slope),
        fitted_a,
        envelope_pass,
        early,
        late,
        early_window,
        late_window,
        notices,
    }
}

fn uniform_path(ts: &[f64], vs: &[f64]) -> Option<BodyPath> {
    if ts.len() < 2 || ts[0] != 0.0 {
        return None;
    }
    let dt = ts[1] - ts[0];
    let uniform = ts
        .iter()
        .enumerate()
        .all(|(i, &t)| (t - dt * i as f64).abs() <= 1e-9 * (1.0 + t));
    uniform.then(|| BodyPath::from_velocities(dt, vs.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn targets() -> FitTargets {
        FitTargets {
            v_inf: 0.0,
            b0: 1.0,
            gamma: 0.02,
            p: 1.0,
            sigma: 10.0 / 9.0,
        }
    }

    #[test]
    fn pure_exponential() {
        let ts: Vec<f64> = (0..=20000).map(|i| i as f64 * 0.1).collect();
        let vs: Vec<f64> = ts.iter().map(|t| 0.02 * (-t).exp()).collect();
        let f = fit_decay(&ts, &vs, &targets());
        assert!((f.b0_hat.unwrap() - 1.0).abs() < 1e-3);
        assert!(f.sigma_hat.is_none());
        assert!(f.notices.iter().any(|n| n.contains("late")));
    }

    #[test]
    fn pure_power_law() {
        let ts: Vec<f64> = (0..=20000).map(|i| i as f64 * 0.1).collect();
        let vs: Vec<f64> = ts.iter().map(|t| 0.02f64.powi(2) * (1.0 + t).powf(-10.0 / 9.0)).collect();
        let f = fit_decay(&ts, &vs, &targets());
        assert!((f.sigma_hat.unwrap() - 10.0 / 9.0).abs() < 0.02);
        assert_eq!(f.fitted_a, Some(1.0));
    }
}
