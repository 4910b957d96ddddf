//! End-to-end acceptance checks on the reference scenario.
//!
//! All criteria run sequentially in one test so that the timing criterion is
//! not polluted by concurrent work. Each criterion prints one PASS/FAIL line.

use std::io::Write;
use std::time::Instant;

use kinsea::boundary::{march_boundary_density, MarchSettings};
use kinsea::fields::{ExternalForce, ModelConfig};
use kinsea::fixedpoint::{
    envelope_check, fixed_point_check, ode_decay_bound_check, solve_fixed_point, FixedPointSolution, SolverMode,
    SolverSettings, VelocityEnvelope,
};
use kinsea::forces::ForceModel;
use kinsea::kernels::{ks_distance, CollisionKernel, OutgoingSpeedSampler};
use kinsea::montecarlo::{reduction_bias, run_mc, McSettings};
use kinsea::path::BodyPath;
use kinsea::stats::{linear_fit, loglog_slope, semilog_slope};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Tolerances and settings, all pinned here.
const MASS_TOL: f64 = 1e-8;
const P_TOL: f64 = 1e-3;
const KS_TOL: f64 = 0.002;
const SAMPLES: usize = 1_000_000;
const VINF_TOL: f64 = 1e-12;
const ODDNESS_TOL: f64 = 1e-10;
const H_ZERO_TOL: f64 = 1e-9;
const SIGMA_REF: f64 = 10.0 / 9.0;
const H_SLOPE_SLACK: f64 = 0.15;
const RW_SLOPE_MAX: f64 = -1.8;
const RUNTIME_LIMIT_S: f64 = 300.0;
const PICARD_TOL: f64 = 1e-14;
const RATIO_MAX: f64 = 0.5;
const FIRST_ITERATIONS: usize = 4;
const A_STABILITY: f64 = 0.10;
const B0_REL_TOL: f64 = 0.15;
const MODE_GAP_FRAC: f64 = 5e-3;
const MODE_WINDOW: f64 = 100.0;
const MC_T_END: f64 = 50.0;
const Z_MAX: f64 = 3.0;
const GAMMA: f64 = 0.02;

struct Report {
    results: Vec<(usize, bool)>,
}

impl Report {
    fn line(&mut self, n: usize, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        let s = format!("criterion {n:2}: {tag}  {detail}\n");
        // Bypasses the test harness capture.
        let _ = std::io::stdout().write_all(s.as_bytes());
        let _ = std::io::stdout().flush();
        self.results.push((n, pass));
    }
}

fn builtin_kernels() -> Vec<(&'static str, CollisionKernel)> {
    vec![
        ("gaussian-flux(1)", CollisionKernel::gaussian_flux(1.0).unwrap()),
        ("speed-scaled", CollisionKernel::speed_scaled()),
        ("power(2)", CollisionKernel::power_family(2.0).unwrap()),
    ]
}

/// Composite Simpson on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

fn c1_kernel_mass(rep: &mut Report) {
    let mut worst: f64 = 0.0;
    for (_, k) in builtin_kernels() {
        for u in [0.1, 0.5, 1.0, 2.0] {
            let top = 12.0 * k.velocity_scale(u);
            let m = simpson(|v| v * k.eval_nonzero(v, u), 0.0, top, 20_000);
            worst = worst.max((m - u).abs());
        }
    }
    rep.line(1, worst <= MASS_TOL, format!("max |mass - |u|| = {worst:.3e} (tol {MASS_TOL:e})"));
}

fn c2_moment_exponents(rep: &mut Report) {
    let expected = [1.0, 1.5, 0.5];
    let mut worst: f64 = 0.0;
    let mut fitted = Vec::new();
    for ((_, k), want) in builtin_kernels().into_iter().zip(expected) {
        let us: Vec<f64> = (0..=20).map(|i| 10f64.powf(-1.0 + 0.1 * i as f64)).collect();
        let xs: Vec<f64> = us.iter().map(|u| u.ln()).collect();
        let ys: Vec<f64> = us
            .iter()
            .map(|&u| simpson(|v| v * v * k.eval_nonzero(v, u), 0.0, 12.0 * k.velocity_scale(u), 20_000).ln())
            .collect();
        let p = linear_fit(&xs, &ys).unwrap().slope;
        fitted.push(p);
        worst = worst.max((p - want).abs());
    }
    rep.line(
        2,
        worst <= P_TOL,
        format!("p_hat = {:.6}, {:.6}, {:.6}; max error {worst:.2e}", fitted[0], fitted[1], fitted[2]),
    );
}

fn c3_sampler(rep: &mut Report) {
    let k = CollisionKernel::gaussian_flux(1.0).unwrap();
    let sampler = OutgoingSpeedSampler::new(k);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let u = 1.0;
    let mut xs: Vec<f64> = (0..SAMPLES).map(|_| sampler.sample(u, &mut rng).unwrap()).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let oracle = std::f64::consts::PI.sqrt() / 2.0;

    // Tabulated flux CDF from cumulative Simpson panels.
    let top = 12.0;
    let cells = 24_000;
    let h = top / cells as f64;
    let mut cdf = vec![0.0; cells + 1];
    for i in 0..cells {
        let a = h * i as f64;
        cdf[i + 1] = cdf[i] + simpson(|v| k.flux_density(v, u), a, a + h, 2);
    }
    let table = |x: f64| {
        if x >= top {
            return 1.0;
        }
        let pos = x / h;
        let i = pos as usize;
        let f = pos - i as f64;
        cdf[i] * (1.0 - f) + cdf[i + 1] * f
    };
    let d = ks_distance(&mut xs, table);
    let z = (mean - oracle) / se;
    rep.line(
        3,
        d <= KS_TOL && z.abs() <= Z_MAX,
        format!("KS = {d:.2e} (tol {KS_TOL}); mean {mean:.6} vs sqrt(pi)/2, z = {z:.2}"),
    );
}

fn c4_equilibrium(rep: &mut Report) {
    let cfg = ModelConfig::reference();
    let model = ForceModel::new(&cfg).unwrap();
    let (v_inf, b0) = model.equilibrium_velocity(0.0, GAMMA).unwrap();
    let odd = (0..=100)
        .map(|i| -1.0 + 0.02 * i as f64)
        .map(|v| (model.f00(v) + model.f00(-v)).abs())
        .fold(0.0, f64::max);
    rep.line(
        4,
        v_inf.abs() <= VINF_TOL && odd <= ODDNESS_TOL && b0 > 0.0,
        format!("|V_inf| = {:.2e}, oddness = {odd:.2e}, b0 = {b0:.6}", v_inf.abs()),
    );
}

fn c5_degenerate(rep: &mut Report) {
    let mut cfg = ModelConfig::reference();
    cfg.force = ExternalForce::none();
    let model = ForceModel::new(&cfg).unwrap();
    let settings = SolverSettings {
        t_end: 200.0,
        ..Default::default()
    };
    let path = BodyPath::from_fn(settings.dt, settings.t_end, |t| GAMMA * (-1.1 * t).exp());
    let bd = march_boundary_density(&model, &path, &settings.schedule(), MarchSettings::default()).unwrap();
    let h_max = bd.nodes.iter().map(|n| n.h.abs()).fold(0.0, f64::max);

    let cfg = ModelConfig::reference();
    let model = ForceModel::new(&cfg).unwrap();
    let shallow = MarchSettings {
        depth_k: 0,
        ..Default::default()
    };
    let bd = march_boundary_density(&model, &path, &settings.schedule(), shallow).unwrap();
    let rw_zero = bd.rw_series().iter().all(|&r| r == 0.0);
    rep.line(
        5,
        h_max <= H_ZERO_TOL && rw_zero,
        format!("c_G = 0: sup|H| = {h_max:.2e}; depth 0: R_W identically zero = {rw_zero}"),
    );
}

fn reference_settings() -> SolverSettings {
    SolverSettings {
        tol: PICARD_TOL,
        ..Default::default()
    }
}

fn c6_h_decay(rep: &mut Report, sol: &FixedPointSolution, seconds: f64, sigma: f64) {
    let t: Vec<f64> = sol.forces.iter().map(|f| f.t).collect();
    let h: Vec<f64> = sol.forces.iter().map(|f| f.h).collect();
    let slope = loglog_slope(&t, &h, 20.0, 2000.0, 0.0).map(|f| f.slope).unwrap_or(f64::NAN);
    let sigma_ok = (sigma - SIGMA_REF).abs() < 1e-12;
    rep.line(
        6,
        sigma_ok && slope <= -SIGMA_REF + H_SLOPE_SLACK && seconds <= RUNTIME_LIMIT_S,
        format!("sigma = {sigma:.12}; H slope on [20, 2000] = {slope:.4}; solve {seconds:.1} s"),
    );
}

fn c7_rw_decay(rep: &mut Report, model: &ForceModel, sol: &FixedPointSolution, settings: &SolverSettings) {
    let bd = march_boundary_density(model, &sol.path, &settings.schedule(), settings.march).unwrap();
    let t = bd.times();
    let slope = loglog_slope(&t, &bd.rw_series(), 20.0, 2000.0, 0.0).map(|f| f.slope).unwrap_or(f64::NAN);
    let diffs: Vec<f64> = (0..bd.depth_k)
        .map(|j| {
            let a = bd.rw_level(j);
            let b = bd.rw_level(j + 1);
            a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        })
        .collect();
    // Geometric decrease: every ratio strictly below one, and the levels
    // after the first are nonzero or already at rounding level.
    let ratios: Vec<f64> = diffs.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect();
    let geometric = !ratios.is_empty() && ratios.iter().all(|&r| r < 1.0);
    rep.line(
        7,
        slope <= RW_SLOPE_MAX && geometric,
        format!(
            "R_W slope on [20, 2000] = {slope:.4}; level gaps {}",
            diffs.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    );
}

fn c8_contraction(rep: &mut Report, model: &ForceModel, sol: &FixedPointSolution, settings: &SolverSettings) {
    let ratios = sol.residual_ratios();
    let first: Vec<f64> = ratios.iter().take(FIRST_ITERATIONS - 1).copied().collect();
    let contraction = first.len() == FIRST_ITERATIONS - 1 && first.iter().all(|&r| r < RATIO_MAX);
    let chk = fixed_point_check(model, sol, settings).unwrap();
    let ode_ok = chk.ode_residual <= 10.0 * settings.tol && chk.feedback_change <= 10.0 * settings.tol;
    rep.line(
        8,
        sol.converged && contraction && ode_ok,
        format!(
            "ratios {}; ODE residual {:.2e}, feedback change {:.2e} (limit {:.0e})",
            first.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>().join(", "),
            chk.ode_residual,
            chk.feedback_change,
            10.0 * settings.tol
        ),
    );
}

fn c9_envelope(
    rep: &mut Report,
    model: &ForceModel,
    cfg: &ModelConfig,
    sol: &FixedPointSolution,
    sigma: f64,
    p: f64,
) {
    let eq = sol.equilibrium;
    let env = VelocityEnvelope {
        gamma: GAMMA,
        a: 1.0,
        sigma,
        b0_rate: eq.b0,
        p,
    };
    let coarse = envelope_check(&sol.path, eq.v_inf, &env);

    let half = SolverSettings {
        dt: sol.path.dt() / 2.0,
        tol: 1e-12,
        ..Default::default()
    };
    let fine = solve_fixed_point(model, cfg, &half, Some(sol.path.refined(2))).unwrap();
    let fine_env = envelope_check(&fine.path, fine.equilibrium.v_inf, &env);
    let drift = (fine_env.fitted_a / coarse.fitted_a - 1.0).abs();

    let ts: Vec<f64> = (0..sol.path.len()).map(|i| sol.path.time(i)).collect();
    let dev: Vec<f64> = sol.path.velocities().iter().map(|v| v - eq.v_inf).collect();
    let b0_hat = -semilog_slope(&ts, &dev, 0.0, 5.0 / eq.b0, 1e-14).unwrap().slope;
    let rel = (b0_hat - eq.b0) / eq.b0;
    rep.line(
        9,
        coarse.pass
            && fine_env.pass
            && fine.converged
            && coarse.fitted_a.is_finite()
            && drift <= A_STABILITY
            && rel.abs() <= B0_REL_TOL,
        format!(
            "A = {:.4} (dt), {:.4} (dt/2), drift {:.2}%; b0_hat = {b0_hat:.4} vs b0 = {:.4} ({:+.1}%)",
            coarse.fitted_a,
            fine_env.fitted_a,
            100.0 * drift,
            eq.b0,
            100.0 * rel
        ),
    );
}

fn c10_modes(rep: &mut Report, model: &ForceModel, cfg: &ModelConfig, sol: &FixedPointSolution) {
    let settings = SolverSettings {
        t_end: MODE_WINDOW,
        mode: SolverMode::Direct,
        ..Default::default()
    };
    let direct = solve_fixed_point(model, cfg, &settings, None).unwrap();
    let gap = direct
        .path
        .velocities()
        .iter()
        .zip(sol.path.velocities())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    rep.line(
        10,
        gap <= MODE_GAP_FRAC * GAMMA,
        format!("sup gap on [0, {MODE_WINDOW}] = {gap:.2e} (limit {:.0e})", MODE_GAP_FRAC * GAMMA),
    );
}

fn c11_monte_carlo(rep: &mut Report, cfg: &ModelConfig, sol: &FixedPointSolution) {
    let mut frozen_cfg = *cfg;
    frozen_cfg.force = ExternalForce::none();
    let frozen_model = ForceModel::new(&frozen_cfg).unwrap();
    let v = 0.1;
    let frozen = run_mc(
        &frozen_cfg,
        &McSettings {
            n: SAMPLES,
            dt: 0.1,
            t_end: 20.0,
            seed: 7,
            frozen_velocity: Some(v),
            ..Default::default()
        },
    )
    .unwrap();
    let f00 = frozen_model.f00(v);
    let z = (frozen.force_avg - f00) / frozen.force_avg_se;

    let coupled = run_mc(
        cfg,
        &McSettings {
            n: SAMPLES,
            dt: 0.05,
            t_end: MC_T_END,
            seed: 11,
            ..Default::default()
        },
    )
    .unwrap();
    let b0 = sol.equilibrium.b0;
    let mut worst: f64 = 0.0;
    let mut at = 0.0;
    for (k, &t) in coupled.times.iter().enumerate() {
        let gap = (coupled.v_mean[k] - sol.path.w(t)).abs();
        let allowance = Z_MAX * coupled.v_se[k] + reduction_bias(&sol.forces, b0, t);
        let r = if allowance > 0.0 { gap / allowance } else if gap > 0.0 { f64::INFINITY } else { 0.0 };
        if r > worst {
            worst = r;
            at = t;
        }
    }
    rep.line(
        11,
        z.abs() <= Z_MAX && worst <= 1.0,
        format!(
            "frozen force {:.5} +- {:.5} vs F00 {f00:.5} (z = {z:.2}); trajectory worst gap/allowance {worst:.2} at t = {at}",
            frozen.force_avg, frozen.force_avg_se
        ),
    );
}

fn c12_ode_bound(rep: &mut Report) {
    let r = ode_decay_bound_check(|_| 1.0, |t| (1.0 + t).powi(-2), 1.0, 1.0, 1.0, 2.0, 50.0, 0.01).unwrap();
    // Closed form of the bound constant.
    let (c0, b0, sigma) = (1.0, 1.0, 2.0f64);
    let c1 = c0 / b0 * (1.0 + 2f64.powf(sigma));
    // Cross-check the integrator against a finer Simpson evaluation of the
    // variation-of-constants formula at t = 50.
    let t: f64 = 50.0;
    let exact = (-t).exp() + simpson(|s| (-(t - s)).exp() * (1.0 + s).powi(-2), 0.0, t, 200_000);
    let y_end = *r.y.last().unwrap();
    let integ_ok = (y_end - exact).abs() <= 1e-9;
    rep.line(
        12,
        r.pass && (r.c1 - c1).abs() < 1e-15 && integ_ok,
        format!("C1 = {}, min slack {:.3e}, Y(50) = {y_end:.6e} vs {exact:.6e}", r.c1, r.min_slack),
    );
}

#[test]
fn acceptance() {
    let mut rep = Report { results: Vec::new() };
    c1_kernel_mass(&mut rep);
    c2_moment_exponents(&mut rep);
    c3_sampler(&mut rep);
    c4_equilibrium(&mut rep);
    c5_degenerate(&mut rep);

    let cfg = ModelConfig::reference();
    let budget = kinsea::fields::validate_config(&cfg).unwrap();
    let model = ForceModel::new(&cfg).unwrap();
    let settings = reference_settings();
    let start = Instant::now();
    let sol = solve_fixed_point(&model, &cfg, &settings, None).unwrap();
    let seconds = start.elapsed().as_secs_f64();

    c6_h_decay(&mut rep, &sol, seconds, budget.sigma);
    c7_rw_decay(&mut rep, &model, &sol, &settings);
    c8_contraction(&mut rep, &model, &sol, &settings);
    c9_envelope(&mut rep, &model, &cfg, &sol, budget.sigma, budget.p);
    c10_modes(&mut rep, &model, &cfg, &sol);
    c11_monte_carlo(&mut rep, &cfg, &sol);
    c12_ode_bound(&mut rep);

    let failed: Vec<usize> = rep.results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
