//! Scenario runner behind the `kinsea` binary.

pub mod config;
pub mod decay;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use kinsea::fields::{validate_config_with_notes, DecayBudget, ExternalForce, ValidationReport};
use kinsea::fixedpoint::{fixed_point_check, solve_fixed_point, FixedPointSolution, SolverMode};
use kinsea::forces::{ForceBreakdown, ForceModel};
use kinsea::montecarlo::{reduction_bias, run_mc, McSettings};
use thiserror::Error;

pub use config::{RawConfig, Scenario};
pub use decay::{fit_decay, DecayFit, FitTargets};
use output::{list, num, write_csv, Summary};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("configuration rejected:\n{0}")]
    Validation(ValidationReport),
    #[error("numerical failure: {0}")]
    Numerical(kinsea::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for rejected input, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<kinsea::Error> for CliError {
    fn from(e: kinsea::Error) -> Self {
        match e {
            kinsea::Error::Validation(r) => CliError::Validation(r),
            kinsea::Error::Io(io) => CliError::Io(io),
            other => CliError::Numerical(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Validate,
    Equilibrium,
    Run,
    Mc,
    /// Fits an existing velocity CSV, or solves first when `None`.
    DecayFit(Option<PathBuf>),
    Compare,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Equilibrium => "equilibrium",
            Command::Run => "run",
            Command::Mc => "mc",
            Command::DecayFit(_) => "decay-fit",
            Command::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    /// Text for standard output.
    pub report: String,
    pub files: Vec<PathBuf>,
}

/// Applies `KINSEA_THREADS` to the global worker pool.
pub fn configure_threads() -> Result<Option<usize>, CliError> {
    let Ok(v) = std::env::var("KINSEA_THREADS") else {
        return Ok(None);
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("KINSEA_THREADS = `{v}` is not a count")))?;
    // A second initialisation (tests) keeps the existing pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

pub fn run_scenario(cmd: &Command, sc: &Scenario) -> Result<Outcome, CliError> {
    let (budget, notes) = validate_config_with_notes(&sc.model)?;
    match cmd {
        Command::Validate => Ok(validate_report(sc, &budget, &notes)),
        Command::Equilibrium => equilibrium(sc, &budget),
        Command::Run => run(sc, &budget, &notes),
        Command::Mc => mc(sc, &budget),
        Command::DecayFit(input) => decay_fit(sc, &budget, input.as_deref()),
        Command::Compare => compare(sc, &budget),
    }
}

fn budget_summary(s: &mut Summary, b: &DecayBudget) {
    s.kv("p", num(b.p))
        .kv("mu", num(b.mu))
        .kv("sigma", num(b.sigma))
        .kv("gamma", num(b.gamma))
        .kv("V_inf", num(b.v_inf))
        .kv("b0", num(b.b0_rate));
}

fn header(cmd: &str, sc: &Scenario) -> Summary {
    let mut s = Summary::default();
    s.section("command").kv("name", cmd);
    s.section("config").raw(&sc.raw.render());
    s
}

fn validate_report(sc: &Scenario, b: &DecayBudget, notes: &[String]) -> Outcome {
    let mut s = header("validate", sc);
    s.section("validate").kv("status", "accepted");
    budget_summary(&mut s, b);
    s.kv("small_field", b.small_field(sc.model.force.c_g()));
    for n in notes {
        s.kv("note", n);
    }
    Outcome {
        report: s.as_str().to_string(),
        files: Vec::new(),
    }
}

fn equilibrium(sc: &Scenario, b: &DecayBudget) -> Result<Outcome, CliError> {
    let model = ForceModel::new(&sc.model)?;
    let mut s = Summary::default();
    s.section("equilibrium")
        .kv("E", num(sc.model.e))
        .kv("V_inf", num(b.v_inf))
        .kv("F00(V_inf)", num(model.f00(b.v_inf)))
        .kv("F00'(V_inf)", num(model.f00_prime_analytic(b.v_inf)?))
        .kv("b0", num(b.b0_rate))
        .kv("F00(V0)", num(model.f00(sc.model.v0)));
    Ok(Outcome {
        report: s.as_str().to_string(),
        files: Vec::new(),
    })
}

struct Solved {
    sol: FixedPointSolution,
    seconds: f64,
}

fn solve(sc: &Scenario, model: &ForceModel) -> Result<Solved, CliError> {
    let start = Instant::now();
    let sol = solve_fixed_point(model, &sc.model, &sc.solver, None)?;
    Ok(Solved {
        sol,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn write_solution(sc: &Scenario, sol: &FixedPointSolution) -> Result<Vec<PathBuf>, CliError> {
    let rows = sol.forces.iter().map(|f: &ForceBreakdown| {
        vec![f.t, sol.path.w(f.t), sol.path.x(f.t), f.f00, f.f0, f.h, f.rw, f.f_total]
    });
    let a = write_csv(
        &sc.out_dir.join("run.csv"),
        &["t", "V", "X", "F00", "F0", "H", "RW", "F_total"],
        rows,
    )?;
    let p = &sol.path;
    let b = write_csv(
        &sc.out_dir.join("velocity.csv"),
        &["t", "V", "X"],
        (0..p.len()).map(|i| vec![p.time(i), p.w_node(i), p.x_node(i)]),
    )?;
    Ok(vec![a, b])
}

fn targets(b: &DecayBudget) -> FitTargets {
    FitTargets {
        v_inf: b.v_inf,
        b0: b.b0_rate,
        gamma: b.gamma,
        p: b.p,
        sigma: b.sigma,
    }
}

fn fit_summary(s: &mut Summary, fit: &DecayFit) {
    let opt = |x: Option<f64>| x.map(num).unwrap_or_else(|| "skipped".into());
    s.kv("b0_hat", opt(fit.b0_hat))
        .kv("sigma_hat", opt(fit.sigma_hat))
        .kv("fitted_A", opt(fit.fitted_a))
        .kv(
            "envelope_pass",
            fit.envelope_pass.map(|b| b.to_string()).unwrap_or_else(|| "skipped".into()),
        )
        .kv("early_window", format!("{}, {}", num(fit.early_window.0), num(fit.early_window.1)))
        .kv("late_window", format!("{}, {}", num(fit.late_window.0), num(fit.late_window.1)));
    if let Some(f) = fit.early {
        s.kv("early_fit_r2", num(f.r2));
    }
    if let Some(f) = fit.late {
        s.kv("late_fit_r2", num(f.r2));
    }
    for n in &fit.notices {
        s.kv("notice", n);
    }
}

fn run(sc: &Scenario, b: &DecayBudget, notes: &[String]) -> Result<Outcome, CliError> {
    let model = ForceModel::new(&sc.model)?;
    let solved = solve(sc, &model)?;
    let sol = &solved.sol;
    let mut files = write_solution(sc, sol)?;
    let mut s = header("run", sc);
    s.section("results");
    budget_summary(&mut s, b);
    for n in notes {
        s.kv("note", n);
    }
    s.kv("mode", sol.mode.name())
        .kv("converged", sol.converged)
        .kv("residuals", list(&sol.residuals))
        .kv("solve_seconds", format!("{:.3}", solved.seconds));
    if sol.mode == SolverMode::Picard && sol.converged {
        let start = Instant::now();
        let chk = fixed_point_check(&model, sol, &sc.solver)?;
        s.kv("feedback_change", num(chk.feedback_change))
            .kv("ode_residual", num(chk.ode_residual))
            .kv("check_seconds", format!("{:.3}", start.elapsed().as_secs_f64()));
    }
    let ts: Vec<f64> = (0..sol.path.len()).map(|i| sol.path.time(i)).collect();
    let fit = fit_decay(&ts, sol.path.velocities(), &targets(b));
    s.section("decay");
    fit_summary(&mut s, &fit);
    files.push(s.write(&sc.out_dir.join("summary.txt"))?);
    if !sol.converged {
        return Err(CliError::Numerical(kinsea::Error::Divergence {
            history: sol.residuals.clone(),
        }));
    }
    Ok(Outcome {
        report: s.as_str().to_string(),
        files,
    })
}

fn mc_rows(run: &kinsea::montecarlo::McRun) -> impl Iterator<Item = Vec<f64>> + '_ {
    (0..run.times.len()).map(move |k| {
        let f = if k < run.force_mean.len() { run.force_mean[k] } else { f64::NAN };
        vec![run.times[k], run.v_mean[k], run.v_se[k], f]
    })
}

fn mc_summary(s: &mut Summary, run: &kinsea::montecarlo::McRun, seconds: f64) {
    s.kv("force_avg", num(run.force_avg))
        .kv("force_avg_se", num(run.force_avg_se))
        .kv("collisions", run.collisions)
        .kv("recollision_fraction", num(run.recollision_fraction))
        .kv("transverse_escape_fraction", num(run.escape_fraction))
        .kv("refreshed", run.refreshed)
        .kv("grazing_clamped", run.grazing_clamped)
        .kv("coupling", num(run.coupling))
        .kv("seconds", format!("{seconds:.3}"));
    for w in &run.warnings {
        s.kv("warning", w);
    }
}

fn mc(sc: &Scenario, b: &DecayBudget) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let run = run_mc(&sc.model, &sc.mc)?;
    let seconds = start.elapsed().as_secs_f64();
    let csv = write_csv(&sc.out_dir.join("mc.csv"), &["t", "V", "V_se", "F"], mc_rows(&run))?;
    let mut s = header("mc", sc);
    s.section("results");
    budget_summary(&mut s, b);
    mc_summary(&mut s, &run, seconds);
    let path = s.write(&sc.out_dir.join("summary.txt"))?;
    Ok(Outcome {
        report: s.as_str().to_string(),
        files: vec![csv, path],
    })
}

fn decay_fit(sc: &Scenario, b: &DecayBudget, input: Option<&std::path::Path>) -> Result<Outcome, CliError> {
    let mut files = Vec::new();
    let (ts, vs) = match input {
        Some(p) => {
            let mut cols = output::read_columns(p, &["t", "V"])?;
            let vs = cols.pop().expect("two columns");
            (cols.pop().expect("two columns"), vs)
        }
        None => {
            let model = ForceModel::new(&sc.model)?;
            let solved = solve(sc, &model)?;
            files.extend(write_solution(sc, &solved.sol)?);
            let p = &solved.sol.path;
            ((0..p.len()).map(|i| p.time(i)).collect(), p.velocities().to_vec())
        }
    };
    let fit = fit_decay(&ts, &vs, &targets(b));
    let mut s = header("decay-fit", sc);
    s.section("decay");
    budget_summary(&mut s, b);
    fit_summary(&mut s, &fit);
    files.push(s.write(&sc.out_dir.join("decay.txt"))?);
    Ok(Outcome {
        report: s.as_str().to_string(),
        files,
    })
}

fn compare(sc: &Scenario, b: &DecayBudget) -> Result<Outcome, CliError> {
    let model = ForceModel::new(&sc.model)?;
    let mut det_sc = sc.clone();
    det_sc.solver.t_end = sc.solver.t_end.min(sc.mc.t_end);
    let start = Instant::now();
    let det = solve_fixed_point(&model, &det_sc.model, &det_sc.solver, None)?;
    let det_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let run = run_mc(&sc.model, &sc.mc)?;
    let mc_seconds = start.elapsed().as_secs_f64();
    let mut worst: f64 = 0.0;
    let mut sup_gap: f64 = 0.0;
    let mut rows = Vec::new();
    for (k, &t) in run.times.iter().enumerate() {
        let vd = det.path.w(t.min(det.path.t_end()));
        let gap = (run.v_mean[k] - vd).abs();
        let allowance = 3.0 * run.v_se[k] + reduction_bias(&det.forces, b.b0_rate, t);
        sup_gap = sup_gap.max(gap);
        if allowance > 0.0 {
            worst = worst.max(gap / allowance);
        } else if gap > 0.0 {
            worst = f64::INFINITY;
        }
        rows.push(vec![t, vd, run.v_mean[k], run.v_se[k], gap, allowance]);
    }
    let csv = write_csv(
        &sc.out_dir.join("compare.csv"),
        &["t", "V_det", "V_mc", "V_mc_se", "gap", "allowance"],
        rows.into_iter(),
    )?;

    // Frozen body without field: force against the drag law.
    let mut frozen_cfg = sc.model;
    frozen_cfg.force = ExternalForce::none();
    let frozen_v = 0.1;
    let frozen_settings = McSettings {
        frozen_velocity: Some(frozen_v),
        ..sc.mc
    };
    let start = Instant::now();
    let frozen = run_mc(&frozen_cfg, &frozen_settings)?;
    let frozen_seconds = start.elapsed().as_secs_f64();
    let frozen_model = ForceModel::new(&frozen_cfg)?;
    let f00 = frozen_model.f00(frozen_v);
    let z = (frozen.force_avg - f00) / frozen.force_avg_se;

    let mut s = header("compare", sc);
    s.section("deterministic");
    budget_summary(&mut s, b);
    s.kv("residuals", list(&det.residuals))
        .kv("seconds", format!("{det_seconds:.3}"));
    s.section("trajectory");
    s.kv("sup_gap", num(sup_gap))
        .kv("worst_gap_over_allowance", num(worst))
        .kv("within_allowance", worst <= 1.0);
    mc_summary(&mut s, &run, mc_seconds);
    s.section("frozen_force");
    s.kv("V", num(frozen_v))
        .kv("F00", num(f00))
        .kv("mc_force", num(frozen.force_avg))
        .kv("mc_force_se", num(frozen.force_avg_se))
        .kv("z", num(z))
        .kv("within_3se", z.abs() <= 3.0)
        .kv("seconds", format!("{frozen_seconds:.3}"));
    let path = s.write(&sc.out_dir.join("compare.txt"))?;
    Ok(Outcome {
        report: s.as_str().to_string(),
        files: vec![csv, path],
    })
}
