//! Flat `key = value` scenario files with dotted section names.

use std::collections::BTreeMap;
use std::path::PathBuf;

use kinsea::boundary::MarchSettings;
use kinsea::fields::{ExternalForce, InitialDensity, ModelConfig, TransverseField};
use kinsea::fixedpoint::{SolverMode, SolverSettings};
use kinsea::kernels::{CollisionKernel, KernelFamily};
use kinsea::montecarlo::McSettings;

use crate::CliError;

/// Every accepted key with its default, in output order.
pub const KEYS: &[(&str, &str)] = &[
    ("kernel.family", "gaussian-flux"),
    ("kernel.beta", "1"),
    ("field.cG", "0.001"),
    ("field.q", "3.5"),
    ("field.m", "2.5"),
    ("field.sign", "1"),
    ("field.perp.cG", "0"),
    ("field.perp.q", "3.5"),
    ("density.family", "gaussian"),
    ("density.width", "1"),
    ("density.l1", "5"),
    ("density.l2", "2"),
    ("body.E", "0"),
    ("body.R", "0.35"),
    ("body.V0", "0.02"),
    ("solver.dt", "0.05"),
    ("solver.t_end", "2000"),
    ("solver.depth_k", "4"),
    ("solver.mode", "picard"),
    ("solver.tol", "1e-12"),
    ("solver.max_iter", "30"),
    ("mc.n", "1000000"),
    ("mc.seed", "1"),
    ("mc.dt", "0.05"),
    ("mc.t_end", "50"),
    ("mc.replicas", "16"),
    ("output.dir", "kinsea-out"),
];

/// Resolved key/value table.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RawConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config(format!("line {}: expected `key = value`", n + 1)));
            };
            cfg.set(k.trim(), v.trim())
                .map_err(|e| CliError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(format!("unknown key `{key}`"));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(k.trim(), v.trim()).map_err(CliError::Config)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn num(&self, key: &str) -> Result<f64, CliError> {
        self.get(key)
            .parse::<f64>()
            .map_err(|_| CliError::Config(format!("`{key}` = `{}` is not a number", self.get(key))))
    }

    fn int(&self, key: &str) -> Result<u64, CliError> {
        self.get(key)
            .parse::<u64>()
            .map_err(|_| CliError::Config(format!("`{key}` = `{}` is not a non-negative integer", self.get(key))))
    }

    /// Lines `key = value` in key order.
    pub fn render(&self) -> String {
        KEYS.iter()
            .map(|(k, _)| format!("{k} = {}\n", self.get(k)))
            .collect()
    }
}

/// Everything a subcommand needs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub raw: RawConfig,
    pub model: ModelConfig,
    pub solver: SolverSettings,
    pub mc: McSettings,
    pub out_dir: PathBuf,
}

impl Scenario {
    pub fn from_raw(raw: RawConfig) -> Result<Self, CliError> {
        let family: KernelFamily = raw.get("kernel.family").parse().map_err(CliError::Config)?;
        let kernel = CollisionKernel::new(family, raw.num("kernel.beta")?).map_err(|e| CliError::Config(e.to_string()))?;
        let (l1, l2) = (raw.num("density.l1")?, raw.num("density.l2")?);
        let density = match raw.get("density.family") {
            "gaussian" => InitialDensity::gaussian(raw.num("density.width")?, l1, l2),
            "algebraic" => InitialDensity::algebraic(l1, l2).map_err(|e| CliError::Config(e.to_string()))?,
            other => return Err(CliError::Config(format!("unknown density family `{other}`"))),
        };
        let mut force = ExternalForce::decaying(
            raw.num("field.cG")?,
            raw.num("field.q")?,
            raw.num("field.m")?,
            raw.num("field.sign")?,
        );
        let perp = raw.num("field.perp.cG")?;
        if perp != 0.0 {
            force = force.with_transverse(TransverseField::Radial {
                c_g: perp,
                q: raw.num("field.perp.q")?,
            });
        }
        let model = ModelConfig {
            kernel,
            force,
            density,
            e: raw.num("body.E")?,
            r: raw.num("body.R")?,
            v0: raw.num("body.V0")?,
        };
        let mode: SolverMode = raw.get("solver.mode").parse().map_err(|e: kinsea::Error| CliError::Config(e.to_string()))?;
        let solver = SolverSettings {
            dt: positive(&raw, "solver.dt")?,
            t_end: positive(&raw, "solver.t_end")?,
            tol: positive(&raw, "solver.tol")?,
            max_iter: raw.int("solver.max_iter")? as usize,
            mode,
            march: MarchSettings {
                depth_k: raw.int("solver.depth_k")? as usize,
                ..MarchSettings::default()
            },
            ..SolverSettings::default()
        };
        let mc = McSettings {
            n: raw.int("mc.n")?.max(1) as usize,
            replicas: raw.int("mc.replicas")?.max(1) as usize,
            dt: positive(&raw, "mc.dt")?,
            t_end: positive(&raw, "mc.t_end")?,
            seed: raw.int("mc.seed")?,
            ..McSettings::default()
        };
        let out_dir = PathBuf::from(raw.get("output.dir"));
        Ok(Self {
            raw,
            model,
            solver,
            mc,
            out_dir,
        })
    }
}

fn positive(raw: &RawConfig, key: &str) -> Result<f64, CliError> {
    let v = raw.num(key)?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(CliError::Config(format!("`{key}` must be positive, got {v}")));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let raw = RawConfig::parse("kernel.beta = 2 # comment\n\nbody.V0=0.01\n").unwrap();
        assert_eq!(raw.get("kernel.beta"), "2");
        assert_eq!(raw.get("body.V0"), "0.01");
        let err = RawConfig::parse("body.mass = 3").unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{err}");
        assert!(RawConfig::parse("no equals sign").is_err());
    }

    #[test]
    fn defaults_build_the_reference_scenario() {
        let s = Scenario::from_raw(RawConfig::default()).unwrap();
        assert_eq!(s.model.v0, 0.02);
        assert_eq!(s.solver.march.depth_k, 4);
        assert_eq!(s.mc.n, 1_000_000);
        let round = RawConfig::parse(&s.raw.render()).unwrap();
        assert_eq!(round, s.raw);
    }
}
